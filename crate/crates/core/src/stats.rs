//! Sample statistics and two-sample distances.

use crate::linalg::norm;

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn variance(xs: &[f64]) -> f64 {
    let (m, _) = mean_se(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample excess kurtosis with its large-sample standard error `√(24/n)`.
pub fn excess_kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (m, _) = mean_se(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m4 / (m2 * m2) - 3.0, (24.0 / n).sqrt())
}

/// Unbiased sample covariance of the columns of `rows`.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..d {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    cov
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_x − F_y|` by merging the
/// sorted samples. Ties are consumed together.
pub fn two_sample_ks(x: &[f64], y: &[f64]) -> f64 {
    assert!(!x.is_empty() && !y.is_empty(), "two_sample_ks needs nonempty samples");
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn one_sample_ks<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> f64 {
    let mut a = x.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    a.iter().enumerate().fold(0.0_f64, |d, (i, &v)| {
        let f = cdf(v);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

fn mean_pairwise(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut buf = Vec::new();
    let mut s = 0.0;
    for p in x {
        for q in y {
            buf.clear();
            buf.extend(p.iter().zip(q).map(|(u, v)| u - v));
            s += norm(&buf);
        }
    }
    s / (x.len() as f64 * y.len() as f64)
}

/// Energy distance `2E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖` with all pairs (the
/// within-sample means include the zero diagonal, which keeps the estimate
/// nonnegative).
pub fn energy_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    assert!(!x.is_empty() && !y.is_empty(), "energy_distance needs nonempty samples");
    let d = x[0].len();
    assert!(
        x.iter().chain(y).all(|r| r.len() == d),
        "energy_distance needs matching dimensions"
    );
    (2.0 * mean_pairwise(x, y) - mean_pairwise(x, x) - mean_pairwise(y, y)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSpec;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut r = SeedSpec::new(seed, 0).rng();
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    #[test]
    fn ks_trivial_cases() {
        let x = [0.3, 1.0, -2.0];
        assert_eq!(two_sample_ks(&x, &x), 0.0);
        assert_eq!(two_sample_ks(&[0.0], &[1.0]), 1.0);
        assert!((two_sample_ks(&[1.0, 2.0], &[1.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_same_law_is_small() {
        let ks = two_sample_ks(&normals(1, 10_000), &normals(2, 10_000));
        assert!(ks <= 0.03, "{ks}");
    }

    #[test]
    fn ks_one_sample_uniform() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((one_sample_ks(&x, |v| v) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn energy_distance_properties() {
        let a: Vec<Vec<f64>> = normals(3, 400).chunks(2).map(|c| c.to_vec()).collect();
        assert_eq!(energy_distance(&a, &a), 0.0);
        let shift = |s: f64| -> Vec<Vec<f64>> { a.iter().map(|r| vec![r[0] + s, r[1]]).collect() };
        let d1 = energy_distance(&a, &shift(0.5));
        let d2 = energy_distance(&a, &shift(1.0));
        let d3 = energy_distance(&a, &shift(2.0));
        assert!(0.0 < d1 && d1 < d2 && d2 < d3);
        let b: Vec<Vec<f64>> = normals(4, 400).chunks(2).map(|c| c.to_vec()).collect();
        assert!(energy_distance(&a, &b) < d1);
    }

    #[test]
    fn moments_and_quantiles() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        let c = covariance(&[vec![1.0, 2.0], vec![3.0, 6.0]]);
        assert_eq!(c, vec![vec![2.0, 4.0], vec![4.0, 8.0]]);
        let (k, _) = excess_kurtosis(&normals(5, 20_000));
        assert!(k.abs() < 0.15);
    }
}
