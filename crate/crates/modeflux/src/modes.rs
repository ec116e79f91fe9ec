//! Local transverse eigenproblem of the Dirichlet guide of opening D:
//! eigenvalues μ_j = πj/D, axial wavenumbers β_j, eigenfunctions
//! y_j(ρ) = √(2/D)·sin[(2ρ+D)μ_j/2] on |ρ| ≤ D/2, and the suite of integral
//! identities from which every coupling coefficient descends.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// Transverse eigenvalue μ_j = πj/D.
pub fn mu(j: usize, d: f64) -> f64 {
    PI * j as f64 / d
}

/// Axial wavenumber √(k² − μ_j²) of a propagating mode.
pub fn beta_propagating(k: f64, j: usize, d: f64) -> Result<f64> {
    let m = mu(j, d);
    if k <= m {
        return Err(Error::NotPropagating { j, k, mu: m });
    }
    Ok(((k - m) * (k + m)).sqrt())
}

/// Decay rate √(μ_j² − k²) of an evanescent mode.
pub fn beta_evanescent(k: f64, j: usize, d: f64) -> Result<f64> {
    let m = mu(j, d);
    if m <= k {
        return Err(Error::NotEvanescent { j, k, mu: m });
    }
    Ok(((m - k) * (m + k)).sqrt())
}

/// Normalized Dirichlet eigenfunction y_j(ρ) for |ρ| ≤ D/2.
pub fn eigenfunction(j: usize, rho: f64, d: f64) -> Result<f64> {
    let half = 0.5 * d;
    if rho.abs() > half * (1.0 + 1e-14) {
        return Err(Error::OutOfCrossSection { rho, half_width: half });
    }
    Ok(y(j, rho, d))
}

/// Unchecked eigenfunction evaluation (used inside quadratures).
#[inline]
fn y(j: usize, rho: f64, d: f64) -> f64 {
    (2.0 / d).sqrt() * ((2.0 * rho + d) * 0.5 * mu(j, d)).sin()
}

/// ∂_ρ y_j.
#[inline]
fn dy_drho(j: usize, rho: f64, d: f64) -> f64 {
    let m = mu(j, d);
    (2.0 / d).sqrt() * m * ((2.0 * rho + d) * 0.5 * m).cos()
}

/// ∂_D y_j at fixed ρ; multiplied by D′(z) this is ∂_z y_j.
#[inline]
fn dy_dd(j: usize, rho: f64, d: f64) -> f64 {
    let phase = PI * j as f64 * (rho / d + 0.5);
    let amp = (2.0 / d).sqrt();
    -0.5 / d * amp * phase.sin() - amp * phase.cos() * PI * j as f64 * rho / (d * d)
}

/// The local mode basis of a guide of opening `d` at wavenumber `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeBasis {
    pub k: f64,
    pub d: f64,
    pub n_prop: usize,
    /// μ_1..μ_N.
    pub mu: Vec<f64>,
    /// β_1..β_N (propagating).
    pub beta: Vec<f64>,
}

impl ModeBasis {
    /// Basis with all propagating modes of the opening `d`.
    pub fn new(k: f64, d: f64) -> Result<Self> {
        let n = crate::geometry::mode_count_for_width(k, d);
        Self::with_count(k, d, n)
    }

    /// Basis restricted to the first `n` modes, all of which must propagate.
    pub fn with_count(k: f64, d: f64, n: usize) -> Result<Self> {
        let mu: Vec<f64> = (1..=n).map(|j| mu(j, d)).collect();
        let beta = (1..=n).map(|j| beta_propagating(k, j, d)).collect::<Result<Vec<_>>>()?;
        Ok(Self { k, d, n_prop: n, mu, beta })
    }
}

/// The integral identities satisfied by the eigenfunctions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Identity {
    /// ∫ y_j y_q = δ_jq.
    Orthog,
    /// ∫ ρ y_j² = 0.
    Odd,
    /// ∫ (2ρ+D) y_j ∂_ρ y_q.
    Coef1,
    /// ∫ y_j ∂_z y_q, reported per unit slope D′ = 1.
    Coef2,
    /// ∫ (2ρ+D)² y_j y_q.
    Coef3,
    /// ∫ y_j ∂_ρ y_q.
    Coef4,
    /// ∫ (2ρ+D) y_j y_q.
    Coef5,
    /// ∫ (2ρ+D)² y_j² (diagonal only).
    D6,
}

impl Identity {
    pub const ALL: [Identity; 8] = [
        Identity::Orthog,
        Identity::Odd,
        Identity::Coef1,
        Identity::Coef2,
        Identity::Coef3,
        Identity::Coef4,
        Identity::Coef5,
        Identity::D6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Orthog => "orthog",
            Identity::Odd => "odd",
            Identity::Coef1 => "coef1",
            Identity::Coef2 => "coef2",
            Identity::Coef3 => "coef3",
            Identity::Coef4 => "coef4",
            Identity::Coef5 => "coef5",
            Identity::D6 => "d6",
        }
    }

    /// Whether the identity involves a pair (j, q) or a single index.
    fn applies(self, j: usize, q: usize) -> bool {
        match self {
            Identity::Odd | Identity::D6 => j == q,
            _ => true,
        }
    }

    /// Closed form of the identity, or `None` if it does not apply to (j, q).
    pub fn closed_form(self, j: usize, q: usize, d: f64) -> Option<f64> {
        if !self.applies(j, q) {
            return None;
        }
        let (jf, qf) = (j as f64, q as f64);
        let sign = if (j + q).is_multiple_of(2) { 1.0 } else { -1.0 };
        let diff = jf * jf - qf * qf;
        let d6 = d * d * (4.0 / 3.0 - 2.0 / (PI * jf).powi(2));
        Some(match self {
            Identity::Orthog => {
                if j == q {
                    1.0
                } else {
                    0.0
                }
            }
            Identity::Odd => 0.0,
            Identity::Coef1 => {
                if j == q {
                    -1.0
                } else {
                    -4.0 * jf * qf * sign / diff
                }
            }
            Identity::Coef2 => {
                if j == q {
                    0.0
                } else {
                    jf * qf * (sign + 1.0) / (d * diff)
                }
            }
            Identity::Coef3 => {
                if j == q {
                    d6
                } else {
                    32.0 * d * d * jf * qf * sign / (PI * PI * diff * diff)
                }
            }
            Identity::Coef4 => {
                if j == q {
                    0.0
                } else {
                    2.0 * jf * qf * (1.0 - sign) / (d * diff)
                }
            }
            Identity::Coef5 => {
                if j == q {
                    d
                } else {
                    -8.0 * d * jf * qf * (1.0 - sign) / (PI * PI * diff * diff)
                }
            }
            Identity::D6 => d6,
        })
    }

    /// The integral evaluated by adaptive quadrature over the cross-section.
    pub fn quadrature(self, j: usize, q: usize, d: f64) -> Option<f64> {
        if !self.applies(j, q) {
            return None;
        }
        let integrand = move |r: f64| -> f64 {
            match self {
                Identity::Orthog => y(j, r, d) * y(q, r, d),
                Identity::Odd => r * y(j, r, d) * y(j, r, d),
                Identity::Coef1 => (2.0 * r + d) * y(j, r, d) * dy_drho(q, r, d),
                Identity::Coef2 => y(j, r, d) * dy_dd(q, r, d),
                Identity::Coef3 | Identity::D6 => (2.0 * r + d).powi(2) * y(j, r, d) * y(q, r, d),
                Identity::Coef4 => y(j, r, d) * dy_drho(q, r, d),
                Identity::Coef5 => (2.0 * r + d) * y(j, r, d) * y(q, r, d),
            }
        };
        // One panel per half-wavelength of the fastest factor.
        let panels = 2 * (j + q) + 2;
        let r = integrate(integrand, -0.5 * d, 0.5 * d, panels, QuadOptions { abs_tol: 1e-12, rel_tol: 1e-14, max_panels: 20_000 });
        Some(r.value)
    }
}

/// One row of the identity residual report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResidual {
    pub identity: Identity,
    pub j: usize,
    pub q: usize,
    pub d: f64,
    pub quadrature: f64,
    pub closed_form: f64,
    pub residual: f64,
}

/// Evaluate every applicable identity for the pair (j, q) at opening `d`
/// and report |quadrature − closed form|.
pub fn identity_residuals(j: usize, q: usize, d: f64) -> Vec<IdentityResidual> {
    Identity::ALL
        .iter()
        .filter_map(|&id| {
            let cf = id.closed_form(j, q, d)?;
            let qv = id.quadrature(j, q, d)?;
            Some(IdentityResidual { identity: id, j, q, d, quadrature: qv, closed_form: cf, residual: (qv - cf).abs() })
        })
        .collect()
}

/// Full residual table for 1 ≤ j, q ≤ `max_index` and each opening in `widths`.
pub fn identity_suite(max_index: usize, widths: &[f64]) -> Vec<IdentityResidual> {
    let mut out = Vec::new();
    for &d in widths {
        for j in 1..=max_index {
            for q in 1..=max_index {
                out.extend(identity_residuals(j, q, d));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalue_examples() {
        // Independent arithmetic: 40π/20.25.
        assert!((mu(40, 20.25) - 40.0 * PI / 20.25).abs() < 1e-15);
        assert!((mu(40, 20.25) - 6.205_615_118_202_06).abs() < 1e-12);
        assert!((mu(1, PI) - 1.0).abs() < 1e-15);
        assert!((mu(2, 1.0) - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn beta_examples() {
        let k = 2.0 * PI;
        let b40 = beta_propagating(k, 40, 20.25).unwrap();
        assert!((2.0 * b40 - 1.97).abs() < 0.005);
        let b1 = beta_propagating(k, 1, 20.25).unwrap();
        assert!((b1 - (4.0 * PI * PI - (PI / 20.25f64).powi(2)).sqrt()).abs() < 1e-14);
        assert!(matches!(beta_propagating(PI, 1, 1.0), Err(Error::NotPropagating { .. })));
        let b41 = beta_evanescent(k, 41, 20.25).unwrap();
        // Independent arithmetic: √((41π/20.25)² − 4π²) = 0.990 349 876 324 25…
        assert!((b41 - 0.990_349_876_324_25).abs() < 1e-12, "{b41}");
        // μ_j = k√2 ⇒ β = k: choose D so that μ_1 = √2·k.
        let d = PI / (2f64.sqrt() * k);
        assert!((beta_evanescent(k, 1, d).unwrap() - k).abs() < 1e-12);
    }

    #[test]
    fn eigenfunction_examples() {
        assert!(eigenfunction(3, 0.5, 1.0).unwrap().abs() < 1e-15);
        assert!(eigenfunction(3, -0.5, 1.0).unwrap().abs() < 1e-15);
        assert!((eigenfunction(1, 0.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(eigenfunction(1, 0.6, 1.0), Err(Error::OutOfCrossSection { .. })));
        let d: f64 = 20.49;
        for j in 1..5 {
            let expect = (2.0 / d).sqrt() * ((1.0 / 7.0 + 0.5) * PI * j as f64).sin();
            assert!((eigenfunction(j, d / 7.0, d).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn hand_checked_identities() {
        // Hand evaluations at j = 1, q = 2, D = 1.
        assert!((Identity::Coef1.closed_form(1, 2, 1.0).unwrap() + 8.0 / 3.0).abs() < 1e-15);
        assert!((Identity::Coef4.closed_form(1, 2, 1.0).unwrap() + 8.0 / 3.0).abs() < 1e-15);
        assert!((Identity::Coef5.closed_form(1, 2, 1.0).unwrap() + 32.0 / (9.0 * PI * PI)).abs() < 1e-15);
        assert!((Identity::Coef3.closed_form(1, 2, 1.0).unwrap() + 64.0 / (9.0 * PI * PI)).abs() < 1e-15);
        for r in identity_residuals(1, 2, 1.0).iter().chain(&identity_residuals(3, 3, 2.0)) {
            assert!(r.residual < 1e-10, "{:?}", r);
        }
    }

    #[test]
    fn beta_decreasing_in_j() {
        let b = ModeBasis::new(2.0 * PI, 20.25).unwrap();
        assert_eq!(b.n_prop, 40);
        assert!(b.beta.windows(2).all(|w| w[1] < w[0]));
    }
}
