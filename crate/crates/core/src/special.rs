//! Special functions: log-Gamma, the standard normal CDF and its inverse.
//!
//! `norm_quantile` starts from Acklam's rational approximation (relative
//! error 1.15e-9) and applies one Halley step against `norm_cdf`, which
//! brings it to the accuracy of the CDF itself.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`, Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Standard normal CDF Φ(x), with small relative error in both tails.
///
/// For `|x| < 1` the series `Φ(x) = ½ + φ(x)·Σ x^{2k+1}/(2k+1)!!` is summed to
/// convergence. Beyond that the lower tail `Φ(−z) = φ(z)/(z + 1/(z + 2/(z +
/// …)))` is evaluated as a continued fraction, backwards from a fixed depth.
pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x.abs();
    if z < 1.0 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 1.0;
        while term.abs() > 1e-17 * sum.abs() {
            term *= x2 / (2.0 * k + 1.0);
            sum += term;
            k += 1.0;
        }
        return 0.5 + norm_pdf(x) * sum;
    }
    if z > 38.5 {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let mut cf = z;
    for k in (1..=500).rev() {
        cf = z + k as f64 / cf;
    }
    let tail = norm_pdf(z) / cf;
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of Φ on (0, 1).
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -norm_quantile(1.0 - p);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Upper quantile `z_α` with `1 − Φ(z_α) = α`.
pub fn upper_quantile(level: f64) -> f64 {
    -norm_quantile(level)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.special.gammaln / scipy.stats.norm.
    #[test]
    fn ln_gamma_matches_reference() {
        let cases = [
            (0.001, 6.907_178_885_383_853),
            (0.1, 2.252_712_651_734_206),
            (0.5, 0.572_364_942_924_7),
            (1.0, 0.0),
            (1.5, -0.120_782_237_635_245_26),
            (2.0, 0.0),
            (3.7, 1.428_072_326_665_388),
            (10.0, 12.801_827_480_081_469),
            (100.0, 359.134_205_369_575_4),
        ];
        for (x, want) in cases {
            let got = ln_gamma(x);
            assert!(
                (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                "ln_gamma({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn norm_cdf_matches_reference() {
        let cases = [
            (-8.9, 2.792_334_374_939_623_3e-19),
            (-8.0, 6.220_960_574_271_74e-16),
            (-5.0, 2.866_515_718_791_933e-7),
            (-3.01, 0.001_306_238_448_769_467_5),
            (-2.99, 0.001_394_887_235_492_246_8),
            (-3.0, 0.001_349_898_031_630_093_3),
            (-1.5, 0.066_807_201_268_858_07),
            (-0.5, 0.308_537_538_725_986_9),
            (0.0, 0.5),
            (0.3, 0.617_911_422_188_952_6),
            (1.0, 0.841_344_746_068_542_9),
            (2.5, 0.993_790_334_674_223_8),
            (6.0, 0.999_999_999_013_412_3),
        ];
        for (x, want) in cases {
            let got = norm_cdf(x);
            assert!(
                (got - want).abs() < 1e-14 && (got - want).abs() <= 1e-13 * want,
                "Φ({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn norm_quantile_matches_reference() {
        let cases = [
            (1e-10, -6.361_340_902_404_056),
            (1e-4, -3.719_016_485_455_680_4),
            (0.025, -1.959_963_984_540_054_5),
            (0.3, -0.524_400_512_708_040_9),
            (0.5, 0.0),
            (0.9, 1.281_551_565_544_600_4),
            (0.999, 3.090_232_306_167_813),
        ];
        for (p, want) in cases {
            let got = norm_quantile(p);
            assert!((got - want).abs() < 1e-10, "Φ⁻¹({p}) = {got}, want {want}");
        }
        assert!((upper_quantile(0.05) - 1.644_853_626_951_472_9).abs() < 1e-10);
    }

    #[test]
    fn cdf_relative_accuracy_on_grid() {
        // 40-digit reference values (mpmath.ncdf).
        let cases = [
            (-7.5, 3.190_891_672_910_896_2e-14),
            (-6.25, 2.052_263_425_218_938_9e-10),
            (-4.4, 5.412_543_907_703_851e-6),
            (-3.5, 0.000_232_629_079_035_525_04),
            (-2.7, 0.003_466_973_803_040_666_6),
            (-1.9993, 0.022_787_952_089_572_557),
            (-1.2, 0.115_069_670_221_708_28),
            (-0.75, 0.226_627_352_376_868_2),
            (-0.1, 0.460_172_162_722_971_02),
            (0.05, 0.519_938_805_838_372_46),
            (0.9, 0.815_939_874_653_240_52),
            (1.7, 0.955_434_537_241_456_96),
            (2.2, 0.986_096_552_486_501_4),
            (3.3, 0.999_516_575_857_616_22),
            (4.1, 0.999_979_342_493_087_45),
        ];
        for (x, want) in cases {
            let got = norm_cdf(x);
            assert!((got - want).abs() <= 2e-14 * want, "Φ({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-13);
        }
    }
}
