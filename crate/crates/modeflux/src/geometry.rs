//! Slow waveguide geometry: the opening D(z), the propagating-mode count
//! N(z) = ⌊kD(z)/π⌋, and the turning points where that count changes.
//!
//! All lengths are in one consistent unit (the CLI documents wavelengths).
//! The source sits at z = 0; left-going waves travel toward negative z and
//! lose one mode at each left turning point, right-going waves gain one at
//! each right turning point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default margin for the source-on-turning-point test: the source is
/// rejected when kD(0)/π is within this distance of an integer.
pub const DEFAULT_SOURCE_MARGIN: f64 = 1e-6;

/// Relative bisection tolerance (multiplied by the varying-region length).
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

/// The slowly varying opening D(z) of the waveguide.
///
/// Every kind is flat outside its defining region, non-decreasing
/// everywhere and strictly increasing on the varying region `(z_start, z_end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WidthProfile {
    /// Constant opening: no varying region, no turning points.
    Constant { d: f64 },
    /// Linear ramp from `d_start` at `z_start` to `d_end` at `z_end`, joined
    /// to flat sections `d_flat_left` / `d_flat_right` by C¹ cubic caps of
    /// length `cap` on each side.
    LinearRampWithCubicCaps {
        z_start: f64,
        z_end: f64,
        d_start: f64,
        d_end: f64,
        cap: f64,
        d_flat_left: f64,
        d_flat_right: f64,
    },
    /// Piecewise-linear interpolation of strictly increasing knots; flat
    /// outside the first/last knot. D′ is the one-sided slope at knots.
    PiecewiseLinear { z: Vec<f64>, d: Vec<f64> },
    /// Monotone (Fritsch–Carlson) cubic Hermite interpolation of a table;
    /// flat outside the table.
    TabulatedWithMonotoneInterpolation {
        z: Vec<f64>,
        d: Vec<f64>,
        #[serde(skip)]
        slopes: Vec<f64>,
    },
}

impl WidthProfile {
    /// The reference ramp: D rises linearly from `d_start` to `d_end` on
    /// `[z_start, z_end]` with 0.2-unit cubic caps onto the given flats.
    pub fn linear_capped(z_start: f64, z_end: f64, d_start: f64, d_end: f64, cap: f64, d_flat_left: f64, d_flat_right: f64) -> Result<Self> {
        let p = WidthProfile::LinearRampWithCubicCaps { z_start, z_end, d_start, d_end, cap, d_flat_left, d_flat_right };
        p.validate()?;
        Ok(p)
    }

    /// Monotone cubic interpolant of `(z, d)` samples with strictly
    /// increasing `z` and non-decreasing `d`.
    pub fn tabulated(z: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let slopes = fritsch_carlson_slopes(&z, &d)?;
        let p = WidthProfile::TabulatedWithMonotoneInterpolation { z, d, slopes };
        p.validate()?;
        Ok(p)
    }

    /// Recompute derived data (interpolation slopes) after deserialization.
    pub fn prepared(self) -> Result<Self> {
        let p = match self {
            WidthProfile::TabulatedWithMonotoneInterpolation { z, d, .. } => {
                let slopes = fritsch_carlson_slopes(&z, &d)?;
                WidthProfile::TabulatedWithMonotoneInterpolation { z, d, slopes }
            }
            other => other,
        };
        p.validate()?;
        Ok(p)
    }

    /// Check positivity, ordering and the C¹ cap compatibility.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProfile(m.to_string()));
        match self {
            WidthProfile::Constant { d } => {
                if !(d.is_finite() && *d > 0.0) {
                    return bad("constant opening must be positive and finite");
                }
            }
            WidthProfile::LinearRampWithCubicCaps { z_start, z_end, d_start, d_end, cap, d_flat_left, d_flat_right } => {
                let all = [*z_start, *z_end, *d_start, *d_end, *cap, *d_flat_left, *d_flat_right];
                if all.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite ramp parameter");
                }
                if z_end <= z_start {
                    return bad("ramp requires z_start < z_end");
                }
                if d_end <= d_start {
                    return Err(Error::NonMonotoneProfile { z: 0.5 * (z_start + z_end), slope: (d_end - d_start) / (z_end - z_start) });
                }
                if *cap < 0.0 {
                    return bad("cap length must be non-negative");
                }
                if *cap == 0.0 && (d_flat_left != d_start || d_flat_right != d_end) {
                    return bad("zero-length caps require flat values equal to the ramp ends");
                }
                if d_flat_left > d_start || d_flat_right < d_end {
                    return Err(Error::NonMonotoneProfile { z: *z_start, slope: -1.0 });
                }
                if *d_flat_left <= 0.0 {
                    return bad("opening must stay positive");
                }
                // A Hermite cubic with end slopes (0, s) or (s, 0) is monotone
                // iff the secant-normalized slope s·cap/Δ does not exceed 3.
                let s = (d_end - d_start) / (z_end - z_start);
                for delta in [d_start - d_flat_left, d_flat_right - d_end] {
                    if *cap > 0.0 && (delta <= 0.0 || s * cap / delta > 3.0) {
                        return bad("cubic cap cannot join the ramp monotonically; adjust cap length or flat values");
                    }
                }
            }
            WidthProfile::PiecewiseLinear { z, d } | WidthProfile::TabulatedWithMonotoneInterpolation { z, d, .. } => {
                if z.len() < 2 || z.len() != d.len() {
                    return bad("table needs at least two (z, D) rows of equal length");
                }
                if z.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("table z must be strictly increasing");
                }
                if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("opening must be positive and finite");
                }
                for i in 0..z.len() - 1 {
                    if d[i + 1] <= d[i] {
                        return Err(Error::NonMonotoneProfile { z: z[i], slope: (d[i + 1] - d[i]) / (z[i + 1] - z[i]) });
                    }
                }
            }
        }
        Ok(())
    }

    /// Varying region `(z_start, z_end)`, or `None` for a constant guide.
    pub fn varying_region(&self) -> Option<(f64, f64)> {
        match self {
            WidthProfile::Constant { .. } => None,
            WidthProfile::LinearRampWithCubicCaps { z_start, z_end, .. } => Some((*z_start, *z_end)),
            WidthProfile::PiecewiseLinear { z, .. } | WidthProfile::TabulatedWithMonotoneInterpolation { z, .. } => {
                Some((z[0], z[z.len() - 1]))
            }
        }
    }

    /// Region outside of which the profile is exactly flat.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            WidthProfile::LinearRampWithCubicCaps { z_start, z_end, cap, .. } => Some((z_start - cap, z_end + cap)),
            other => other.varying_region(),
        }
    }

    /// D(z) and D′(z); flat values with D′ = 0 outside the support.
    pub fn evaluate(&self, z: f64) -> (f64, f64) {
        match self {
            WidthProfile::Constant { d } => (*d, 0.0),
            WidthProfile::LinearRampWithCubicCaps { z_start, z_end, d_start, d_end, cap, d_flat_left, d_flat_right } => {
                let s = (d_end - d_start) / (z_end - z_start);
                if z >= *z_start && z <= *z_end {
                    (d_start + s * (z - z_start), s)
                } else if z < *z_start {
                    if z <= z_start - cap {
                        (*d_flat_left, 0.0)
                    } else {
                        hermite(z, z_start - cap, *z_start, *d_flat_left, *d_start, 0.0, s)
                    }
                } else if z >= z_end + cap {
                    (*d_flat_right, 0.0)
                } else {
                    hermite(z, *z_end, z_end + cap, *d_end, *d_flat_right, s, 0.0)
                }
            }
            WidthProfile::PiecewiseLinear { z: zs, d } => {
                let n = zs.len();
                if z < zs[0] {
                    return (d[0], 0.0);
                }
                if z >= zs[n - 1] {
                    return (d[n - 1], 0.0);
                }
                let i = segment(zs, z);
                let s = (d[i + 1] - d[i]) / (zs[i + 1] - zs[i]);
                (d[i] + s * (z - zs[i]), s)
            }
            WidthProfile::TabulatedWithMonotoneInterpolation { z: zs, d, slopes } => {
                let n = zs.len();
                if z <= zs[0] {
                    return (d[0], 0.0);
                }
                if z >= zs[n - 1] {
                    return (d[n - 1], 0.0);
                }
                let i = segment(zs, z);
                hermite(z, zs[i], zs[i + 1], d[i], d[i + 1], slopes[i], slopes[i + 1])
            }
        }
    }

    /// D(z) alone.
    pub fn d_at(&self, z: f64) -> f64 {
        self.evaluate(z).0
    }

    /// D′(z) alone.
    pub fn d_prime_at(&self, z: f64) -> f64 {
        self.evaluate(z).1
    }

    /// The same profile with arc lengths divided by `z_unit` and openings by
    /// `d_unit`, i.e. D̃(z̃) = D(z̃·z_unit)/d_unit.
    pub fn rescaled(&self, z_unit: f64, d_unit: f64) -> Result<Self> {
        if !(z_unit > 0.0 && d_unit > 0.0 && z_unit.is_finite() && d_unit.is_finite()) {
            return Err(Error::InvalidProfile("rescaling units must be positive and finite".into()));
        }
        let zs = |v: &[f64]| v.iter().map(|x| x / z_unit).collect::<Vec<_>>();
        let ds = |v: &[f64]| v.iter().map(|x| x / d_unit).collect::<Vec<_>>();
        let p = match self {
            WidthProfile::Constant { d } => WidthProfile::Constant { d: d / d_unit },
            WidthProfile::LinearRampWithCubicCaps { z_start, z_end, d_start, d_end, cap, d_flat_left, d_flat_right } => WidthProfile::LinearRampWithCubicCaps {
                z_start: z_start / z_unit,
                z_end: z_end / z_unit,
                d_start: d_start / d_unit,
                d_end: d_end / d_unit,
                cap: cap / z_unit,
                d_flat_left: d_flat_left / d_unit,
                d_flat_right: d_flat_right / d_unit,
            },
            WidthProfile::PiecewiseLinear { z, d } => WidthProfile::PiecewiseLinear { z: zs(z), d: ds(d) },
            WidthProfile::TabulatedWithMonotoneInterpolation { z, d, .. } => return WidthProfile::tabulated(zs(z), ds(d)),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Evaluate the width and slope of a profile at `z`.
pub fn evaluate_width(profile: &WidthProfile, z: f64) -> (f64, f64) {
    profile.evaluate(z)
}

fn segment(zs: &[f64], z: f64) -> usize {
    // Largest i with zs[i] <= z, clamped to a valid segment.
    let i = zs.partition_point(|&v| v <= z);
    i.saturating_sub(1).min(zs.len() - 2)
}

/// Cubic Hermite interpolation on [a, b] returning value and derivative.
fn hermite(z: f64, a: f64, b: f64, fa: f64, fb: f64, sa: f64, sb: f64) -> (f64, f64) {
    let h = b - a;
    let t = (z - a) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * fa + h10 * h * sa + h01 * fb + h11 * h * sb;
    let d00 = (6.0 * t2 - 6.0 * t) / h;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = (-6.0 * t2 + 6.0 * t) / h;
    let d11 = 3.0 * t2 - 2.0 * t;
    let slope = d00 * fa + d10 * sa + d01 * fb + d11 * sb;
    (value, slope)
}

/// Fritsch–Carlson monotone slopes for a strictly increasing table.
fn fritsch_carlson_slopes(z: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    if n < 2 || n != d.len() {
        return Err(Error::InvalidProfile("table needs at least two (z, D) rows of equal length".into()));
    }
    if z.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidProfile("table z must be strictly increasing".into()));
    }
    let secants: Vec<f64> = (0..n - 1).map(|i| (d[i + 1] - d[i]) / (z[i + 1] - z[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for i in 1..n - 1 {
        m[i] = if secants[i - 1] * secants[i] <= 0.0 { 0.0 } else { 0.5 * (secants[i - 1] + secants[i]) };
    }
    for i in 0..n - 1 {
        if secants[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / secants[i];
        let b = m[i + 1] / secants[i];
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[i] = tau * a * secants[i];
            m[i + 1] = tau * b * secants[i];
        }
    }
    Ok(m)
}

/// Number of propagating modes ⌊kD(z)/π⌋.
///
/// A relative guard of a few ulps keeps exact thresholds (kD/π an integer
/// up to rounding) on the upper side, matching the convention that the
/// turning mode is counted on its propagating side.
pub fn mode_count(k: f64, profile: &WidthProfile, z: f64) -> usize {
    mode_count_for_width(k, profile.d_at(z))
}

/// ⌊kD/π⌋ for a given opening.
pub fn mode_count_for_width(k: f64, d: f64) -> usize {
    let x = k * d / std::f64::consts::PI;
    (x * (1.0 + 4.0 * f64::EPSILON)).floor().max(0.0) as usize
}

/// Ordered turning points and per-sector propagating-mode counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorLayout {
    pub k: f64,
    pub z_source: f64,
    /// Half-length of the computational guide: sectors end at ±Z_M.
    pub z_m: f64,
    /// z₋⁽¹⁾ > z₋⁽²⁾ > … (all negative).
    pub left_turning_points: Vec<f64>,
    /// z₊⁽¹⁾ < z₊⁽²⁾ < … (all positive).
    pub right_turning_points: Vec<f64>,
    /// N⁽⁰⁾ = N(0).
    pub n0: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Residuals |kD(z*) − πj| at each left turning point.
    pub left_residuals: Vec<f64>,
    /// Residuals at each right turning point.
    pub right_residuals: Vec<f64>,
}

impl SectorLayout {
    /// Mode count N₋⁽ᵗ⁾ of the t-th left sector (t = 0 is the source sector).
    pub fn left_count(&self, t: usize) -> usize {
        self.n0 - t
    }

    /// Mode count N₊⁽ᵗ⁾ of the t-th right sector.
    pub fn right_count(&self, t: usize) -> usize {
        self.n0 + t
    }

    /// Left sectors as (z_left, z_right, mode count), ordered from the source
    /// outward: (z₋⁽¹⁾, 0, N⁽⁰⁾), (z₋⁽²⁾, z₋⁽¹⁾, N⁽⁰⁾−1), …, (−Z_M, z₋⁽ᵗᴹ⁾, N_min).
    pub fn left_sectors(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.left_turning_points.len() + 1);
        let mut right = self.z_source;
        for (t, &zt) in self.left_turning_points.iter().enumerate() {
            out.push((zt, right, self.left_count(t)));
            right = zt;
        }
        out.push((-self.z_m, right, self.left_count(self.left_turning_points.len())));
        out
    }

    /// Right sectors as (z_left, z_right, mode count), ordered outward.
    pub fn right_sectors(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.right_turning_points.len() + 1);
        let mut left = self.z_source;
        for (t, &zt) in self.right_turning_points.iter().enumerate() {
            out.push((left, zt, self.right_count(t)));
            left = zt;
        }
        out.push((left, self.z_m, self.right_count(self.right_turning_points.len())));
        out
    }
}

/// Options for [`find_turning_points_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPointOptions {
    /// Source margin on dist(kD(0)/π, ℤ).
    pub source_margin: f64,
    /// Root tolerance relative to the varying-region length.
    pub rel_tol: f64,
}

impl Default for TurningPointOptions {
    fn default() -> Self {
        Self { source_margin: DEFAULT_SOURCE_MARGIN, rel_tol: DEFAULT_ROOT_TOL }
    }
}

/// Locate all turning points in (−Z_M, Z_M) with default options.
pub fn find_turning_points(k: f64, profile: &WidthProfile, z_m: f64) -> Result<SectorLayout> {
    find_turning_points_with(k, profile, z_m, &TurningPointOptions::default())
}

/// Locate all turning points in (−Z_M, Z_M) by bisection on kD(z) − πj.
pub fn find_turning_points_with(k: f64, profile: &WidthProfile, z_m: f64, opts: &TurningPointOptions) -> Result<SectorLayout> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::ValidationError("wavenumber k must be positive".into()));
    }
    if !(z_m > 0.0 && z_m.is_finite()) {
        return Err(Error::ValidationError("Z_M must be positive".into()));
    }
    let pi = std::f64::consts::PI;
    let x0 = k * profile.d_at(0.0) / pi;
    let distance = (x0 - x0.round()).abs();
    if distance < opts.source_margin {
        return Err(Error::SourceOnTurningPoint { distance, margin: opts.source_margin });
    }
    let n0 = mode_count(k, profile, 0.0);
    if n0 == 0 {
        return Err(Error::ValidationError("no propagating mode at the source".into()));
    }
    let length = profile.varying_region().map(|(a, b)| b - a).unwrap_or(1.0);
    let tol = opts.rel_tol * length.max(f64::MIN_POSITIVE);

    let mut left = Vec::new();
    let mut left_res = Vec::new();
    // Left side: the count drops from N⁽⁰⁾ toward N(−Z_M); the t-th left
    // turning point solves kD(z) = π N₋⁽ᵗ⁻¹⁾.
    let mut j = n0;
    let x_left = k * profile.d_at(-z_m) / pi;
    let mut hi = 0.0;
    while j >= 1 && x_left < j as f64 {
        let target = pi * j as f64;
        let z = bisect(profile, k, target, -z_m, hi, tol)?;
        left_res.push((k * profile.d_at(z) - target).abs());
        left.push(z);
        hi = z;
        j -= 1;
    }
    let mut right = Vec::new();
    let mut right_res = Vec::new();
    // Right side: the t-th right turning point solves kD(z) = π(N₊⁽ᵗ⁻¹⁾ + 1).
    let x_right = k * profile.d_at(z_m) / pi;
    let mut j = n0 + 1;
    let mut lo = 0.0;
    while x_right >= j as f64 {
        let target = pi * j as f64;
        let z = bisect(profile, k, target, lo, z_m, tol)?;
        right_res.push((k * profile.d_at(z) - target).abs());
        right.push(z);
        lo = z;
        j += 1;
    }
    let n_min = n0 - left.len();
    let n_max = n0 + right.len();
    Ok(SectorLayout {
        k,
        z_source: 0.0,
        z_m,
        left_turning_points: left,
        right_turning_points: right,
        n0,
        n_min,
        n_max,
        left_residuals: left_res,
        right_residuals: right_res,
    })
}

/// Bisection for the unique z in [lo, hi] with kD(z) = target, given
/// kD(lo) < target ≤ kD(hi). Returns the smallest such z to tolerance.
fn bisect(profile: &WidthProfile, k: f64, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let region = profile.varying_region();
    let g = |z: f64| k * profile.d_at(z) - target;
    if g(lo) >= 0.0 || g(hi) < 0.0 {
        return Err(Error::NonMonotoneProfile { z: 0.5 * (lo + hi), slope: 0.0 });
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (d, dp) = profile.evaluate(mid);
        if let Some((a, b)) = region {
            if mid > a && mid < b && dp <= 0.0 {
                return Err(Error::NonMonotoneProfile { z: mid, slope: dp });
            }
        }
        if k * d - target >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let z = hi;
    let slope = profile.d_prime_at(z).max(profile.d_prime_at(lo));
    if slope <= 0.0 {
        return Err(Error::NonMonotoneProfile { z, slope });
    }
    Ok(z)
}
