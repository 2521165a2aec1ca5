//! Limiting prediction risk of ridge and min-norm interpolation.
//!
//! All routines return a [`RiskDecomposition`] whose `total` is the sum of
//! the three components by construction. The interpolation boundary
//! `gamma = 1` is excluded: risks diverge there and callers must keep a
//! guard band around it.

use crate::spectra::{GeometryPair, KappaMode};
use crate::stieltjes::{silverstein_v0, solve_c0, solve_m_ridge};
use crate::{Error, Result};

/// Half-width of the excluded band around `gamma = 1`.
pub const BOUNDARY_BAND: f64 = 1e-9;

/// Limiting risk split into bias, variance, and (for misspecified models)
/// the unexplained-signal floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskDecomposition {
    pub gamma: f64,
    pub lambda: f64,
    pub bias: f64,
    pub variance: f64,
    pub misspec_bias: f64,
    pub total: f64,
}

impl RiskDecomposition {
    pub fn new(gamma: f64, lambda: f64, bias: f64, variance: f64, misspec_bias: f64) -> Self {
        Self { gamma, lambda, bias, variance, misspec_bias, total: bias + variance + misspec_bias }
    }
}

fn guard_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", format!("got {gamma}, need > 0")));
    }
    if (gamma - 1.0).abs() < BOUNDARY_BAND {
        return Err(Error::InterpolationBoundary { gamma, band: BOUNDARY_BAND });
    }
    Ok(())
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::param(name, format!("got {v}, need finite and >= 0")));
    }
    Ok(())
}

/// Min-norm interpolation risk under a general limiting geometry.
///
/// Underparametrized (`gamma < 1`): bias vanishes and the variance
/// `sigma^2 gamma / (1 - gamma)` is spectrum-free. Overparametrized: the
/// bias integrates the survival kernel against `g` with inflation factor
/// `1 + gamma c0 E1/E2`, the variance is `sigma^2 gamma c0 E1/E2`.
pub fn minnorm_risk(geometry: &GeometryPair, gamma: f64, sigma2: f64) -> Result<RiskDecomposition> {
    guard_gamma(gamma)?;
    check_nonneg("sigma2", sigma2)?;
    let r2 = geometry.beta_norm_sq;
    if gamma < 1.0 {
        let variance = sigma2 * gamma / (1.0 - gamma);
        return Ok(RiskDecomposition::new(gamma, 0.0, 0.0, variance, 0.0));
    }
    let c0 = solve_c0(&geometry.h, gamma)?;
    let k = |s: f64| 1.0 + c0 * gamma * s;
    let e1 = geometry.h.integrate(|s| (s / k(s)).powi(2));
    let e2 = geometry.h.integrate(|s| s / (k(s) * k(s)));
    if e2 <= 0.0 {
        return Err(Error::DegenerateSpectrum {
            context: "min-norm risk",
            reason: "vanishing variance functional".into(),
        });
    }
    let ratio = gamma * c0 * e1 / e2;
    let bias = r2 * (1.0 + ratio) * geometry.g.integrate(|s| s / (k(s) * k(s)));
    let variance = sigma2 * ratio;
    Ok(RiskDecomposition::new(gamma, 0.0, bias, variance, 0.0))
}

/// Isotropic min-norm risk in closed form, plus the location of the
/// overparametrized local minimum when it exists.
///
/// The local minimum sits at `gamma = sqrt(snr) / (sqrt(snr) - 1)` with
/// `snr = r^2 / sigma^2`, and exists only for `snr > 1`.
pub fn isotropic_closed_forms(
    gamma: f64,
    r2: f64,
    sigma2: f64,
) -> Result<(RiskDecomposition, Option<f64>)> {
    guard_gamma(gamma)?;
    check_nonneg("r2", r2)?;
    check_nonneg("sigma2", sigma2)?;
    let decomp = if gamma < 1.0 {
        RiskDecomposition::new(gamma, 0.0, 0.0, sigma2 * gamma / (1.0 - gamma), 0.0)
    } else {
        RiskDecomposition::new(gamma, 0.0, r2 * (1.0 - 1.0 / gamma), sigma2 / (gamma - 1.0), 0.0)
    };
    let arg_min = if sigma2 > 0.0 && r2 / sigma2 > 1.0 {
        let root = (r2 / sigma2).sqrt();
        Some(root / (root - 1.0))
    } else {
        None
    };
    Ok((decomp, arg_min))
}

/// Misspecified isotropic risk: a fraction `kappa` of the signal energy is
/// carried by observed features, the rest acts as extra noise and as an
/// irreducible `misspec_bias` floor `r^2 (1 - kappa)`.
pub fn misspecified_risk(
    gamma: f64,
    r2: f64,
    sigma2: f64,
    kappa: &KappaMode,
) -> Result<RiskDecomposition> {
    guard_gamma(gamma)?;
    check_nonneg("r2", r2)?;
    check_nonneg("sigma2", sigma2)?;
    let k = kappa.kappa(gamma)?;
    let r2_eff = k * r2;
    let sigma2_eff = sigma2 + r2 * (1.0 - k);
    let floor = r2 * (1.0 - k);
    let decomp = if gamma < 1.0 {
        RiskDecomposition::new(gamma, 0.0, 0.0, sigma2_eff * gamma / (1.0 - gamma), floor)
    } else {
        RiskDecomposition::new(
            gamma,
            0.0,
            r2_eff * (1.0 - 1.0 / gamma),
            sigma2_eff / (gamma - 1.0),
            floor,
        )
    };
    Ok(decomp)
}

/// Min-norm risk of the latent-space model with factor ratio `psi <= 1`,
/// `gamma > 1`.
///
/// The factor misfit acts as noise: `sigma_eff^2 = sigma_xi^2 +
/// psi r_theta^2 / (1 + psi)`. The normalizer `c0` of the two-atom spectrum
/// solves a quadratic with exactly one positive root.
pub fn latent_minnorm_risk(
    psi: f64,
    gamma: f64,
    r_theta2: f64,
    sigma_xi2: f64,
) -> Result<RiskDecomposition> {
    if !(psi > 0.0 && psi <= 1.0) {
        return Err(Error::param("psi", format!("got {psi}, need in (0, 1]")));
    }
    check_nonneg("r_theta2", r_theta2)?;
    check_nonneg("sigma_xi2", sigma_xi2)?;
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::NotOverparametrized { what: "latent min-norm risk", gamma });
    }
    guard_gamma(gamma)?;
    let sigma_eff2 = sigma_xi2 + psi * r_theta2 / (1.0 + psi);
    let spike = 1.0 + 1.0 / psi;

    // c0 solves (1 - 1/gamma) = (1 - psi)/(1 + c A) + psi/(1 + c B) with
    // A = gamma, B = spike * gamma. Cleared of denominators this is
    // a c^2 + b c + d = 0 with d/a < 0, hence one positive root.
    let t = 1.0 - 1.0 / gamma;
    let a_coef = gamma;
    let b_coef = spike * gamma;
    let qa = t * a_coef * b_coef;
    let qb = t * (a_coef + b_coef) - (1.0 - psi) * b_coef - psi * a_coef;
    let qd = -1.0 / gamma;
    let c0 = (-qb + (qb * qb - 4.0 * qa * qd).sqrt()) / (2.0 * qa);

    let ka = 1.0 + c0 * a_coef;
    let kb = 1.0 + c0 * b_coef;
    let e1 = (1.0 - psi) / (ka * ka) + psi * spike * spike / (kb * kb);
    let e2 = (1.0 - psi) / (ka * ka) + (1.0 + psi) / (kb * kb);
    let ratio = gamma * c0 * e1 / e2;
    let bias = (1.0 + ratio) * r_theta2 / ((1.0 + psi) * kb * kb);
    let variance = sigma_eff2 * ratio;
    Ok(RiskDecomposition::new(gamma, 0.0, bias, variance, 0.0))
}

/// Ridge risk at penalty `lambda > 0` under a general limiting geometry.
pub fn ridge_risk(
    geometry: &GeometryPair,
    gamma: f64,
    sigma2: f64,
    lambda: f64,
) -> Result<RiskDecomposition> {
    guard_gamma(gamma)?;
    check_nonneg("sigma2", sigma2)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param("lambda", format!("got {lambda}, need > 0")));
    }
    let ev = solve_m_ridge(&geometry.h, gamma, lambda)?;
    let c = 1.0 - gamma + gamma * lambda * ev.m;
    let d = |s: f64| lambda + s * c;
    let bias = lambda * lambda
        * geometry.beta_norm_sq
        * (1.0 + gamma * ev.m1)
        * geometry.g.integrate(|s| s / (d(s) * d(s)));
    let variance = sigma2
        * gamma
        * geometry.h.integrate(|s| {
            s * s * (1.0 - gamma + gamma * lambda * lambda * ev.m_prime) / (d(s) * d(s))
        });
    Ok(RiskDecomposition::new(gamma, lambda, bias, variance, 0.0))
}

/// Limiting leave-one-out criterion minus `sigma^2` for the isotropic prior
/// model at penalty `lambda > 0`.
pub fn cv_asymptotic(gamma: f64, r2: f64, sigma2: f64, lambda: f64) -> Result<f64> {
    guard_gamma(gamma)?;
    check_nonneg("r2", r2)?;
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::param("sigma2", format!("got {sigma2}, need > 0")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param("lambda", format!("got {lambda}, need > 0")));
    }
    let (m, m_prime) = crate::stieltjes::mp_stieltjes(gamma, lambda)?;
    let alpha = r2 / (sigma2 * gamma);
    Ok(sigma2 * gamma * (m - lambda * (1.0 - alpha * lambda) * m_prime))
}

/// Limiting squared norm of the min-norm interpolator.
pub fn norm_limit(geometry: &GeometryPair, gamma: f64, sigma2: f64) -> Result<f64> {
    guard_gamma(gamma)?;
    check_nonneg("sigma2", sigma2)?;
    let r2 = geometry.beta_norm_sq;
    if gamma < 1.0 {
        let mass = geometry.h.mass_at_zero();
        if mass > 0.0 {
            return Err(Error::DivergentNorm { mass, gamma });
        }
        return Ok(r2 + sigma2 * gamma / (1.0 - gamma) * geometry.h.integrate(|s| 1.0 / s));
    }
    let c0 = solve_c0(&geometry.h, gamma)?;
    let signal = r2 * geometry.g.integrate(|s| c0 * gamma * s / (1.0 + c0 * gamma * s));
    Ok(signal + c0 * gamma * sigma2)
}

/// Equicorrelated min-norm risk in closed form, `gamma > 1`.
pub fn equicorrelated_risk(
    gamma: f64,
    r2: f64,
    sigma2: f64,
    rho: f64,
) -> Result<RiskDecomposition> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::param("rho", format!("got {rho}, need in [0, 1)")));
    }
    check_nonneg("r2", r2)?;
    check_nonneg("sigma2", sigma2)?;
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::NotOverparametrized { what: "equicorrelated risk", gamma });
    }
    guard_gamma(gamma)?;
    Ok(RiskDecomposition::new(
        gamma,
        0.0,
        r2 * (1.0 - rho) * (1.0 - 1.0 / gamma),
        sigma2 / (gamma - 1.0),
        0.0,
    ))
}

/// Companion-transform view of the ridgeless variance, used for
/// cross-checks: `sigma^2 gamma (v0 - ...)`; exposed for tests.
pub fn ridgeless_variance_via_v0(
    h: &crate::spectra::DiscreteSpectrum,
    gamma: f64,
    sigma2: f64,
) -> Result<f64> {
    let ev = silverstein_v0(h, gamma)?;
    // gamma c0 E1/E2 equals v0' / v0^2 - 1 expressed through the companion
    // transform derivative.
    Ok(sigma2 * (ev.v0_prime / (ev.v0 * ev.v0) - 1.0))
}
