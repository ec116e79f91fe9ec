//! Numerical integration kernels.
//!
//! * [`integrate`]: globally adaptive Gauss–Kronrod (7/15) quadrature on a
//!   finite interval, optionally pre-split into panels so that oscillatory
//!   integrands are sampled at their oscillation scale from the start.
//! * [`gauss_legendre`]: fixed-order Gauss–Legendre rule on a finite
//!   interval, used where the integrand is known to be smooth on the panel
//!   (phase integrals, Laplace-weighted panels).

/// Kronrod abscissae on [0, 1] (the rule is symmetric); odd indices are the
/// embedded 7-point Gauss nodes.
const XK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_845_693_01,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.000_000_000_000_000_000_000_000_000_000_00,
];

/// Kronrod weights matching [`XK`].
const WK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];

/// Gauss weights for the 7-point rule embedded at XK[1], XK[3], XK[5], XK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    /// Integral estimate (sum of the Kronrod estimates over all panels).
    pub value: f64,
    /// Sum of the per-panel |Kronrod − Gauss| error estimates.
    pub error: f64,
    /// Number of integrand evaluations.
    pub evaluations: usize,
}

/// Tolerances and budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of panels kept in the adaptive pool.
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 0.0, max_panels: 4000 }
    }
}

impl QuadOptions {
    pub fn absolute(abs_tol: f64) -> Self {
        Self { abs_tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XK[i];
        let s = f(c - dx) + f(c + dx);
        k += WK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Panel { a, b, value: k * h, error: ((k - g) * h).abs() }
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// The interval is first divided into `initial_panels` equal pieces (use a
/// count of the order of the number of oscillations for oscillatory
/// integrands); the panel with the largest error estimate is then bisected
/// until the summed error falls below `max(abs_tol, rel_tol·|value|)` or the
/// panel budget is exhausted. The result always reports the achieved error
/// so callers can decide whether it is acceptable.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    initial_panels: usize,
    opts: QuadOptions,
) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0, evaluations: 0 };
    }
    let n0 = initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut panels: Vec<Panel> = (0..n0)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == n0 { b } else { a + width * (i + 1) as f64 };
            kronrod_panel(&f, lo, hi)
        })
        .collect();
    let mut evaluations = 15 * n0;
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target || panels.len() >= opts.max_panels {
            return QuadResult { value, error, evaluations };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.error > acc.1 { (i, p.error) } else { acc });
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // Panel cannot be split further in floating point.
            let value: f64 = panels.iter().map(|q| q.value).sum::<f64>() + p.value;
            let error: f64 = panels.iter().map(|q| q.error).sum::<f64>() + p.error;
            return QuadResult { value, error, evaluations };
        }
        panels.push(kronrod_panel(&f, p.a, mid));
        panels.push(kronrod_panel(&f, mid, p.b));
        evaluations += 30;
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Fixed Gauss–Legendre quadrature of `f` over `[a, b]` with a precomputed
/// rule from [`gauss_legendre_rule`].
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1, QuadOptions::default());
        // ∫ x^5 − 3x² = [x^6/6 − x³] from −1 to 2 = (64/6 − 8) − (1/6 + 1)
        let exact = 64.0 / 6.0 - 8.0 - (1.0 / 6.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_integrand() {
        let r = integrate(|x| (40.0 * x).sin() * x, 0.0, PI, 20, QuadOptions::absolute(1e-13));
        // ∫ x sin(40x) dx on [0, π] = −π cos(40π)/40 = −π/40
        assert!((r.value + PI / 40.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn gauss_legendre_matches_degree() {
        let rule = gauss_legendre_rule(6);
        let v = gauss_legendre(|x| x.powi(11) + x.powi(10), 0.0, 1.0, &rule);
        assert!((v - (1.0 / 12.0 + 1.0 / 11.0)).abs() < 1e-14);
        let total: f64 = rule.1.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }
}
