//! Stieltjes transforms of the limiting sample-covariance law.
//!
//! Conventions: `m(z)` is the Stieltjes transform of the eigenvalue law of
//! `X^T X / n` (dimension `p` side), evaluated here at real `z = -lambda < 0`.
//! The companion transform `v(z)` belongs to `X X^T / n` and satisfies
//! `v(z) = gamma m(z) + (gamma - 1) / z`. All population spectra are atomic
//! measures from [`crate::spectra`].
//!
//! Root finding is bisection on monotone one-dimensional maps: brackets are
//! grown geometrically (at most `MAX_DOUBLINGS` doublings) and iterations are
//! capped at `MAX_ITER` with residual target `RESIDUAL_TOL`.

use crate::spectra::DiscreteSpectrum;
use crate::{Error, Result};

pub const RESIDUAL_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 200;
pub const MAX_DOUBLINGS: usize = 60;

/// Value and derivatives of the Stieltjes transform at `z = -lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesEval {
    pub lambda: f64,
    pub gamma: f64,
    /// `m(-lambda)`.
    pub m: f64,
    /// `m'(-lambda)`.
    pub m_prime: f64,
    /// Companion functional driving the ridge bias inflation factor.
    pub m1: f64,
}

/// Companion transform data at the origin, defined for `gamma > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompanionEval {
    pub gamma: f64,
    /// `v(0)`.
    pub v0: f64,
    /// `v'(0)`.
    pub v0_prime: f64,
}

/// Bisection on `[lo, hi]` with `f(lo) > 0 > f(hi)`.
///
/// The map need not be monotone, only single-crossing on the bracket.
fn bisect(
    context: &'static str,
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    let mut mid = 0.5 * (lo + hi);
    let mut res = f(mid);
    for _ in 0..MAX_ITER {
        if res.abs() < RESIDUAL_TOL {
            return Ok(mid);
        }
        if res > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        res = f(mid);
    }
    Err(Error::NoConvergence { context, iterations: MAX_ITER, residual: res.abs() })
}

/// Expands `hi` geometrically until `f(hi) < 0`, starting from `[lo, hi]`.
fn expand_upper(
    context: &'static str,
    f: &impl Fn(f64) -> f64,
    lo: f64,
    mut hi: f64,
) -> Result<(f64, f64)> {
    let mut lo = lo;
    for _ in 0..MAX_DOUBLINGS {
        if f(hi) < 0.0 {
            return Ok((lo, hi));
        }
        lo = hi;
        hi *= 2.0;
    }
    Err(Error::NoBracket { context, doublings: MAX_DOUBLINGS })
}

/// Marchenko-Pastur Stieltjes transform and derivative at `z = -lambda`,
/// identity covariance.
///
/// Closed form. Returns `(m(-lambda), m'(-lambda))`.
pub fn mp_stieltjes(gamma: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", format!("got {gamma}, need > 0")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param("lambda", format!("got {lambda}, need > 0")));
    }
    let a = 1.0 - gamma + lambda;
    let r = (a * a + 4.0 * gamma * lambda).sqrt();
    let m = (r - a) / (2.0 * gamma * lambda);
    // d/dlambda of (r - a) / (2 gamma lambda); m'(-lambda) = -d m / d lambda.
    let dr = (a + 2.0 * gamma) / r;
    let df = ((dr - 1.0) * lambda - (r - a)) / (2.0 * gamma * lambda * lambda);
    Ok((m, -df))
}

/// Normalizing constant `c0` of the ridgeless bias functionals, `gamma > 1`.
///
/// Unique positive solution of `integral dH / (1 + c gamma s) = 1 - 1/gamma`.
pub fn solve_c0(h: &DiscreteSpectrum, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::NotOverparametrized { what: "c0", gamma });
    }
    if !h.has_positive_mass() {
        return Err(Error::DegenerateSpectrum {
            context: "c0",
            reason: "spectrum has no positive atom".into(),
        });
    }
    if h.mass_at_zero() >= 1.0 - 1.0 / gamma {
        return Err(Error::DegenerateSpectrum {
            context: "c0",
            reason: format!(
                "mass {:.3e} at zero exceeds 1 - 1/gamma = {:.3e}",
                h.mass_at_zero(),
                1.0 - 1.0 / gamma
            ),
        });
    }
    let target = 1.0 - 1.0 / gamma;
    // Decreasing in c; positive at c = 0 since the integral starts at 1.
    let f = |c: f64| h.integrate(|s| 1.0 / (1.0 + c * gamma * s)) - target;
    let (lo, hi) = expand_upper("c0 bracket", &f, 0.0, 1.0)?;
    bisect("c0 fixed point", f, lo, hi)
}

/// Companion transform at the origin for `gamma > 1`: `v(0)` and `v'(0)`.
///
/// `v(0)` solves `1/v = gamma integral s / (1 + s v) dH`; the solve runs on
/// the reciprocal variable `x = 1/v` where the map is monotone. `v'(0)` then
/// follows from the inverse-function derivative; a nonpositive denominator
/// means the spectrum cannot support an interpolating limit.
pub fn silverstein_v0(h: &DiscreteSpectrum, gamma: f64) -> Result<CompanionEval> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::NotOverparametrized { what: "v0", gamma });
    }
    if !h.has_positive_mass() {
        return Err(Error::DegenerateSpectrum {
            context: "v0",
            reason: "spectrum has no positive atom".into(),
        });
    }
    if gamma * (1.0 - h.mass_at_zero()) <= 1.0 {
        return Err(Error::DegenerateSpectrum {
            context: "v0",
            reason: format!(
                "effective aspect ratio gamma (1 - H({{0}})) = {:.6} must exceed 1",
                gamma * (1.0 - h.mass_at_zero())
            ),
        });
    }
    // x = 1/v solves gamma integral s/(s + x) dH = 1; LHS decreases in x.
    let f = |x: f64| gamma * h.integrate(|s| if s == 0.0 { 0.0 } else { s / (s + x) }) - 1.0;
    let (lo, hi) = expand_upper("v0 bracket", &f, 0.0, h.max_atom().max(1.0))?;
    let x = bisect("v0 fixed point", f, lo, hi)?;
    let v0 = 1.0 / x;

    let inv_vp = 1.0 / (v0 * v0) - gamma * h.integrate(|s| (s / (1.0 + s * v0)).powi(2));
    if inv_vp <= 0.0 {
        return Err(Error::DegenerateSpectrum {
            context: "v0 derivative",
            reason: format!("1/v'(0) = {inv_vp:.3e} is not positive"),
        });
    }
    Ok(CompanionEval { gamma, v0, v0_prime: 1.0 / inv_vp })
}

/// Stieltjes transform with general population spectrum at `z = -lambda`,
/// `lambda > 0`, any `gamma > 0`.
///
/// Solves the fixed point on `x = 1/v(-lambda)`:
/// `x = lambda + gamma integral s x / (s + x) dH`, which is single-crossing
/// on `[lambda, lambda + gamma s_mean + 1]`. The derivative and the bias
/// functional `m1` come from the implicit equation, no extra solve.
pub fn solve_m_ridge(h: &DiscreteSpectrum, gamma: f64, lambda: f64) -> Result<StieltjesEval> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", format!("got {gamma}, need > 0")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param("lambda", format!("got {lambda}, need > 0 (ridgeless values come from the companion transform)")));
    }
    if !h.has_positive_mass() {
        return Err(Error::DegenerateSpectrum {
            context: "ridge transform",
            reason: "spectrum has no positive atom".into(),
        });
    }
    let f = |x: f64| x - lambda - gamma * h.integrate(|s| if s == 0.0 { 0.0 } else { s * x / (s + x) });
    // f(lambda) <= 0 and f grows past lambda + gamma * mean(s).
    let hi0 = lambda + gamma * h.mean() + 1.0;
    let (lo, hi) = expand_upper("ridge bracket", &|x| -f(x), lambda, hi0)?;
    let x = bisect("ridge fixed point", |t| -f(t), lo, hi)?;

    let v = 1.0 / x;
    let m = (v + (gamma - 1.0) / lambda) / gamma;

    // Denominator shared by m' and m1; D_s = s (1 - gamma + gamma lambda m) + lambda.
    let c = 1.0 - gamma + gamma * lambda * m;
    let d = |s: f64| s * c + lambda;
    let denom = 1.0 - gamma * h.integrate(|s| -lambda * s / (d(s) * d(s)));
    let m_prime = h.integrate(|s| (1.0 + gamma * s * m) / (d(s) * d(s))) / denom;
    let m1 = h.integrate(|s| s * s * c / (d(s) * d(s))) / denom;

    if !(m.is_finite() && m_prime.is_finite() && m1.is_finite()) {
        return Err(Error::NonFinite { context: "ridge transform" });
    }
    Ok(StieltjesEval { lambda, gamma, m, m_prime, m1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> DiscreteSpectrum {
        DiscreteSpectrum::point_mass(1.0)
    }

    fn two_atoms() -> DiscreteSpectrum {
        DiscreteSpectrum::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap()
    }

    fn random_spectrum(rng: &mut ChaCha8Rng, k: usize) -> DiscreteSpectrum {
        let atoms: Vec<f64> = (0..k).map(|_| 0.1 + 2.9 * rng.gen::<f64>()).collect();
        let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        DiscreteSpectrum::new(atoms.into_iter().zip(raw.into_iter().map(|w| w / total))).unwrap()
    }

    #[test]
    fn mp_closed_form_values() {
        // gamma = 2: m(-1) = sqrt(8)/4, m(-2) = (sqrt(17) - 1)/8.
        let (m, _) = mp_stieltjes(2.0, 1.0).unwrap();
        assert!((m - 8.0f64.sqrt() / 4.0).abs() < 1e-14);
        let (m2, _) = mp_stieltjes(2.0, 2.0).unwrap();
        assert!((m2 - (17.0f64.sqrt() - 1.0) / 8.0).abs() < 1e-14);
        assert!((m2 - 0.39038820320220756).abs() < 1e-15);
    }

    #[test]
    fn mp_derivative_matches_finite_difference() {
        for &(gamma, lambda) in &[(0.5, 0.7), (2.0, 1.0), (2.0, 2.0), (5.0, 0.3)] {
            let (_, mp) = mp_stieltjes(gamma, lambda).unwrap();
            let h = 1e-6 * lambda;
            let (m_hi, _) = mp_stieltjes(gamma, lambda + h).unwrap();
            let (m_lo, _) = mp_stieltjes(gamma, lambda - h).unwrap();
            // m'(z) at z = -lambda equals -dm/dlambda.
            let fd = -(m_hi - m_lo) / (2.0 * h);
            assert!((mp - fd).abs() < 1e-7, "gamma {gamma} lambda {lambda}: {mp} vs {fd}");
            assert!(mp > 0.0);
        }
    }

    #[test]
    fn mp_rejects_bad_domain() {
        assert!(mp_stieltjes(2.0, 0.0).is_err());
        assert!(mp_stieltjes(2.0, -1.0).is_err());
        assert!(mp_stieltjes(0.0, 1.0).is_err());
    }

    #[test]
    fn c0_unit_spectrum_closed_form() {
        // c0 = 1 / (gamma (gamma - 1)) at the unit point mass.
        for &gamma in &[1.5, 2.0, 5.0] {
            let c0 = solve_c0(&unit(), gamma).unwrap();
            assert!((c0 - 1.0 / (gamma * (gamma - 1.0))).abs() < 1e-10, "gamma {gamma}");
        }
        assert!((solve_c0(&unit(), 2.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn c0_two_atom_value() {
        // H = (delta_1 + delta_3)/2, gamma = 2: the fixed point reduces to
        // 12 c^2 = 1, c0 = 1/(2 sqrt(3)).
        let c0 = solve_c0(&two_atoms(), 2.0).unwrap();
        assert!((c0 - 0.28867513459481287).abs() < 1e-10);
    }

    #[test]
    fn c0_scales_inversely_with_spectrum() {
        // Replacing s by c s rescales c0 by 1/c.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let h = random_spectrum(&mut rng, 4);
            let gamma = 1.2 + 4.0 * rng.gen::<f64>();
            let scale = 0.5 + 2.0 * rng.gen::<f64>();
            let scaled = DiscreteSpectrum::new(
                h.iter().map(|(a, w)| (scale * a, w)),
            )
            .unwrap();
            let c0 = solve_c0(&h, gamma).unwrap();
            let c0s = solve_c0(&scaled, gamma).unwrap();
            assert!((c0s - c0 / scale).abs() < 1e-9);
        }
    }

    #[test]
    fn c0_requires_overparametrization() {
        assert!(matches!(solve_c0(&unit(), 0.8), Err(Error::NotOverparametrized { .. })));
        assert!(matches!(solve_c0(&unit(), 1.0), Err(Error::NotOverparametrized { .. })));
    }

    #[test]
    fn v0_unit_spectrum_closed_forms() {
        // Unit point mass: v(0) = 1/(gamma - 1), v'(0) = gamma / (gamma - 1)^3.
        for &gamma in &[1.5, 2.0, 5.0] {
            let ev = silverstein_v0(&unit(), gamma).unwrap();
            assert!((ev.v0 - 1.0 / (gamma - 1.0)).abs() < 1e-10, "gamma {gamma}");
            assert!(
                (ev.v0_prime - gamma / (gamma - 1.0).powi(3)).abs() < 1e-9,
                "gamma {gamma}: v0' = {}",
                ev.v0_prime
            );
        }
        let ev = silverstein_v0(&unit(), 5.0).unwrap();
        assert!((ev.v0 - 0.25).abs() < 1e-12);
        assert!((ev.v0_prime - 0.078125).abs() < 1e-10);
    }

    #[test]
    fn v0_scaled_spectrum() {
        // delta_{1/2}, gamma = 2: v0 = 2, v0' = 8 (scaling s -> s/2 doubles
        // v0 and quadruples-then-doubles the derivative).
        let half = DiscreteSpectrum::point_mass(0.5);
        let ev = silverstein_v0(&half, 2.0).unwrap();
        assert!((ev.v0 - 2.0).abs() < 1e-10);
        assert!((ev.v0_prime - 8.0).abs() < 1e-9);
    }

    #[test]
    fn c0_and_v0_are_linked() {
        // c0 gamma = v(0) across random spectra.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..8 {
            let h = random_spectrum(&mut rng, 5);
            let gamma = 1.1 + 5.0 * rng.gen::<f64>();
            let c0 = solve_c0(&h, gamma).unwrap();
            let v0 = silverstein_v0(&h, gamma).unwrap().v0;
            assert!((c0 * gamma - v0).abs() < 1e-10, "c0 gamma = {}, v0 = {v0}", c0 * gamma);
        }
    }

    #[test]
    fn ridge_matches_mp_closed_form() {
        for &(gamma, lambda) in &[(0.5, 1.0), (2.0, 0.5), (2.0, 2.0), (4.0, 3.0)] {
            let ev = solve_m_ridge(&unit(), gamma, lambda).unwrap();
            let (m, mp) = mp_stieltjes(gamma, lambda).unwrap();
            assert!((ev.m - m).abs() < 1e-11, "m mismatch at ({gamma}, {lambda})");
            assert!((ev.m_prime - mp).abs() < 1e-9, "m' mismatch at ({gamma}, {lambda})");
        }
    }

    #[test]
    fn ridge_transform_frozen_point() {
        // gamma = 2, lambda = 2, unit spectrum. Exact values:
        // m = (sqrt(17) - 1)/8, m' = (17 + 7 sqrt(17))/272,
        // m1 = (5 sqrt(17) - 17)/68.
        let s17 = 17f64.sqrt();
        let ev = solve_m_ridge(&unit(), 2.0, 2.0).unwrap();
        assert!((ev.m - (s17 - 1.0) / 8.0).abs() < 1e-11);
        assert!((ev.m_prime - (17.0 + 7.0 * s17) / 272.0).abs() < 1e-10);
        assert!((ev.m1 - (5.0 * s17 - 17.0) / 68.0).abs() < 1e-10);
    }

    #[test]
    fn ridge_derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..6 {
            let h = random_spectrum(&mut rng, 4);
            let gamma = 0.3 + 4.0 * rng.gen::<f64>();
            let lambda = 0.2 + 3.0 * rng.gen::<f64>();
            let ev = solve_m_ridge(&h, gamma, lambda).unwrap();
            // Step large enough that the solver's 1e-12 residual noise does
            // not dominate the quotient.
            let step = 1e-4 * lambda;
            let hi = solve_m_ridge(&h, gamma, lambda + step).unwrap().m;
            let lo = solve_m_ridge(&h, gamma, lambda - step).unwrap().m;
            let fd = -(hi - lo) / (2.0 * step);
            assert!(
                (ev.m_prime - fd).abs() < 1e-6 * (1.0 + ev.m_prime.abs()),
                "gamma {gamma} lambda {lambda}: {} vs {fd}",
                ev.m_prime
            );
        }
    }

    #[test]
    fn ridge_m_decreases_in_lambda() {
        let h = two_atoms();
        let mut prev = f64::INFINITY;
        for k in 1..=10 {
            let lambda = 0.3 * k as f64;
            let ev = solve_m_ridge(&h, 2.0, lambda).unwrap();
            assert!(ev.m < prev);
            assert!(ev.m > 0.0 && ev.m_prime > 0.0);
            prev = ev.m;
        }
    }

    #[test]
    fn ridge_m1_approaches_ridgeless_limit() {
        // Unit spectrum, gamma = 2: gamma c0 E1/E2 = gamma c0 = 1, and
        // m1(-lambda) -> c0 = 1/2 as lambda -> 0.
        let mut lambda = 0.1;
        let mut last = f64::NAN;
        for _ in 0..6 {
            last = solve_m_ridge(&unit(), 2.0, lambda).unwrap().m1;
            lambda *= 0.25;
        }
        assert!((last - 0.5).abs() < 1e-3, "m1 near zero: {last}");
    }

    #[test]
    fn ridge_rejects_lambda_zero() {
        assert!(solve_m_ridge(&unit(), 2.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_spectra_are_reported() {
        let heavy_zero = DiscreteSpectrum::new(vec![(0.0, 0.9), (1.0, 0.1)]).unwrap();
        assert!(matches!(
            solve_c0(&heavy_zero, 2.0),
            Err(Error::DegenerateSpectrum { .. })
        ));
        assert!(matches!(
            silverstein_v0(&heavy_zero, 2.0),
            Err(Error::DegenerateSpectrum { .. })
        ));
    }
}
