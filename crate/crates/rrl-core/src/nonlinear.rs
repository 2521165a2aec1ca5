//! Block resolvents of random-feature Gram matrices.
//!
//! The objects here live on the symmetrized block linearization of
//! `phi(Z W^T)/sqrt(n)`: `m1` traces the feature-side block, `m2` the
//! sample-side block. The limiting system couples them through the aspect
//! ratio `gamma`, the width ratio `psi`, and the squared linear component
//! `c1` of the activation.
//!
//! Branch selection is by continuity: every evaluation starts at a point
//! with large imaginary part, where the Stieltjes branch is the root near
//! `-1/xi`, and descends geometrically towards the target. Real targets
//! inside the spectrum are reported as errors, never silently mis-branched.

use num_complex::Complex64;

use crate::{Error, Result};

/// Residual target for the coupled fixed point, per continuation step.
pub const FP_TOL: f64 = 1e-10;
/// Imaginary part of the first continuation level.
const IM_START: f64 = 10.0;
/// Geometric ratio of the descent in the imaginary part.
const IM_RATIO: f64 = 0.8;
/// Levels below this are replaced by the exact (real) target.
const IM_FLOOR: f64 = 1e-9;
/// Iteration cap per continuation level.
const MAX_FP_ITER: usize = 5000;

/// Joint evaluation of the two block traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventPair {
    pub xi: Complex64,
    pub s: f64,
    pub t: f64,
    pub gamma: f64,
    pub psi: f64,
    pub c1: f64,
    /// Feature-side block trace.
    pub m1: Complex64,
    /// Sample-side block trace.
    pub m2: Complex64,
}

/// Laurent data of the variance slope at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaurentCoefficients {
    pub gamma: f64,
    pub psi: f64,
    pub c1: f64,
    /// Pole coefficient; nonnegative, zero without an atom at the origin.
    pub d_minus1: f64,
    /// Constant term; the limiting ridgeless variance per unit noise.
    pub d0: f64,
}

/// [`laurent_variance`] output: coefficients plus `sigma2 * d0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaurentVariance {
    pub coefficients: LaurentCoefficients,
    pub variance: f64,
    /// Set when cubic and quadratic extrapolations disagree beyond
    /// `1e-3 |d0|`.
    pub accuracy_warning: bool,
}

fn check_common(gamma: f64, psi: f64, c1: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", format!("got {gamma}, need > 0")));
    }
    if !(psi.is_finite() && psi > 0.0) {
        return Err(Error::param("psi", format!("got {psi}, need > 0")));
    }
    if !(0.0..1.0).contains(&c1) {
        return Err(Error::param("c1", format!("got {c1}, need in [0, 1)")));
    }
    Ok(())
}

/// Both roots of `a z^2 + b z + c = 0`, computed with the numerically stable
/// pairing (the subtractive root comes from `c / q`).
fn quadratic_roots(a: Complex64, b: Complex64, c: Complex64) -> (Complex64, Complex64) {
    let disc = b * b - 4.0 * a * c;
    let sq = disc.sqrt();
    let sign = if (b.conj() * sq).re >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * sq);
    (q / a, c / q)
}

fn closer(target: Complex64, r1: Complex64, r2: Complex64) -> Complex64 {
    if (r1 - target).norm_sqr() <= (r2 - target).norm_sqr() {
        r1
    } else {
        r2
    }
}

/// Descent levels from `IM_START` down towards `im_target`, excluding the
/// final exact point.
fn descent_levels(im_target: f64) -> Vec<f64> {
    let mut levels = Vec::new();
    let floor = im_target.abs().max(IM_FLOOR);
    let mut l = IM_START;
    while l > floor {
        levels.push(l);
        l *= IM_RATIO;
    }
    levels
}

/// Sample-side trace for the `psi`-free system (`c1 = 0` limit), closed form
/// per point with continuity branch tracking.
///
/// `m2` solves `xi m2^2 + (xi^2 + xi s - gamma + 1) m2 + (xi + s) = 0`; the
/// feature-side trace follows as `m1 = (-xi - s - m2)^{-1}`. Real `xi`
/// inside the spectrum yields an in-spectrum error (negative discriminant).
pub fn resolvent_simple(xi: Complex64, s: f64, gamma: f64) -> Result<ResolventPair> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", format!("got {gamma}, need > 0")));
    }
    if !s.is_finite() || !xi.re.is_finite() || !xi.im.is_finite() {
        return Err(Error::NonFinite { context: "resolvent_simple arguments" });
    }
    if xi.norm() < 1e-12 {
        return Err(Error::InSpectrum {
            point: format!("{xi}"),
            context: "origin carries spectral mass",
        });
    }
    // Lower half plane by reflection.
    if xi.im < 0.0 {
        let r = resolvent_simple(xi.conj(), s, gamma)?;
        return Ok(ResolventPair { xi, m1: r.m1.conj(), m2: r.m2.conj(), ..r });
    }

    let coeffs = |z: Complex64| {
        let b = z * z + z * s - gamma + 1.0;
        let c = z + s;
        (z, b, c)
    };

    let mut prev: Option<Complex64> = None;
    for level in descent_levels(xi.im) {
        let z = Complex64::new(xi.re, level);
        let (a, b, c) = coeffs(z);
        let (r1, r2) = quadratic_roots(a, b, c);
        let guide = prev.unwrap_or(-1.0 / z);
        prev = Some(closer(guide, r1, r2));
    }

    let m2 = if xi.im > IM_FLOOR {
        let (a, b, c) = coeffs(xi);
        let (r1, r2) = quadratic_roots(a, b, c);
        closer(prev.unwrap_or(-1.0 / xi), r1, r2)
    } else {
        // Real target: real coefficients, discriminant decides membership.
        let b = xi.re * xi.re + xi.re * s - gamma + 1.0;
        let c = xi.re + s;
        let disc = b * b - 4.0 * xi.re * c;
        if disc < 0.0 {
            return Err(Error::InSpectrum {
                point: format!("{}", xi.re),
                context: "negative discriminant",
            });
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let (r1, r2) = (q / xi.re, c / q);
        let guide = prev.ok_or(Error::NonFinite { context: "resolvent_simple path" })?;
        let pick = closer(guide, Complex64::new(r1, 0.0), Complex64::new(r2, 0.0));
        pick
    };

    let den = -xi - s - m2;
    if den.norm() < 1e-14 {
        return Err(Error::InSpectrum {
            point: format!("{xi}"),
            context: "feature-side trace pole",
        });
    }
    Ok(ResolventPair { xi, s, t: 0.0, gamma, psi: f64::NAN, c1: 0.0, m1: 1.0 / den, m2 })
}

/// One application of the coupled fixed-point map. Returns `(f1, f2)`.
fn general_map(
    m1: Complex64,
    m2: Complex64,
    z: Complex64,
    s: f64,
    t: f64,
    gamma: f64,
    psi: f64,
    c1: f64,
) -> Result<(Complex64, Complex64)> {
    let den2 = m1 * (c1 * m2 - t) - psi;
    if den2.norm() < 1e-300 {
        return Err(Error::NonFinite { context: "coupled map inner denominator" });
    }
    let f2_inv = -z - gamma * m1 + gamma * c1 * m1 * m1 * (c1 * m2 - t) / den2;

    let den1 = m1 * (c1 * m2 - psi) - psi;
    if den1.norm() < 1e-300 {
        return Err(Error::NonFinite { context: "coupled map inner denominator" });
    }
    let t2p = t * t / psi;
    let num1 = t2p * m1 * m1 * (c1 * m2 - t) - 2.0 * t * c1 * m1 * m2 + c1 * c1 * m1 * m2 * m2;
    let f1_inv = -z - s - t2p * m1 - m2 + num1 / den1;

    if f1_inv.norm() < 1e-300 || f2_inv.norm() < 1e-300 {
        return Err(Error::NonFinite { context: "coupled map outer denominator" });
    }
    Ok((1.0 / f1_inv, 1.0 / f2_inv))
}

/// Damped fixed point at one continuation level. `m` holds the warm start.
fn solve_level(
    z: Complex64,
    s: f64,
    t: f64,
    gamma: f64,
    psi: f64,
    c1: f64,
    m: &mut (Complex64, Complex64),
) -> Result<()> {
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_FP_ITER {
        let (f1, f2) = general_map(m.0, m.1, z, s, t, gamma, psi, c1)?;
        residual = (f1 - m.0).norm().max((f2 - m.1).norm());
        m.0 += 0.5 * (f1 - m.0);
        m.1 += 0.5 * (f2 - m.1);
        if residual < FP_TOL {
            return Ok(());
        }
    }
    if z.im.abs() <= 1e-6 {
        // Stalling this close to the axis means the target sits in the
        // spectrum (boundary values keep the iteration oscillating).
        return Err(Error::InSpectrum {
            point: format!("{z}"),
            context: "fixed point stalls at the axis",
        });
    }
    Err(Error::NoConvergence {
        context: "coupled resolvent fixed point",
        iterations: MAX_FP_ITER,
        residual,
    })
}

/// Coupled block traces for the general activation system.
///
/// `s` and `t` are the two shift parameters of the linearized block matrix;
/// the intended domain is `s >= t >= 0`, but small negative values are
/// accepted because the derivative extraction differentiates across 0.
/// Solved by damped fixed-point iteration (damping 1/2) with geometric
/// continuation in the imaginary part, warm-started level to level.
pub fn resolvent_general(
    xi: Complex64,
    s: f64,
    t: f64,
    gamma: f64,
    psi: f64,
    c1: f64,
) -> Result<ResolventPair> {
    check_common(gamma, psi, c1)?;
    if !s.is_finite() || !t.is_finite() {
        return Err(Error::NonFinite { context: "resolvent_general shifts" });
    }
    if xi.norm() < 1e-12 {
        return Err(Error::InSpectrum {
            point: format!("{xi}"),
            context: "origin carries spectral mass",
        });
    }
    if xi.im < 0.0 {
        let r = resolvent_general(xi.conj(), s, t, gamma, psi, c1)?;
        return Ok(ResolventPair { xi, m1: r.m1.conj(), m2: r.m2.conj(), ..r });
    }

    let first = Complex64::new(xi.re, IM_START.max(xi.im));
    let mut m = (-1.0 / first, -1.0 / first);
    for level in descent_levels(xi.im) {
        let z = Complex64::new(xi.re, level);
        solve_level(z, s, t, gamma, psi, c1, &mut m)?;
    }
    solve_level(xi, s, t, gamma, psi, c1, &mut m)?;

    if xi.im == 0.0 && (m.0.im.abs() > 1e-6 || m.1.im.abs() > 1e-6) {
        // Converged to a boundary value with positive density.
        return Err(Error::InSpectrum {
            point: format!("{}", xi.re),
            context: "boundary value has positive imaginary part",
        });
    }
    Ok(ResolventPair { xi, s, t, gamma, psi, c1, m1: m.0, m2: m.1 })
}

/// Stieltjes transform of the limiting squared-singular-value law of the
/// random-feature Gram matrix, evaluated at `zeta` off `[0, inf)`.
///
/// The scalar closure in `u = mbar1 mbar2` reduces the system to one
/// polynomial in the transform `sv`:
/// `(-1 - zeta sv - u)(c1 u - psi) + c1^2 u^2 = 0` with
/// `u = (gamma - 1) sv + gamma zeta sv^2`. Solved by Newton continuation in
/// `c1` from the Marchenko-Pastur start.
pub fn stieltjes_nonlinear(zeta: Complex64, gamma: f64, psi: f64, c1: f64) -> Result<Complex64> {
    check_common(gamma, psi, c1)?;
    if zeta.im == 0.0 && zeta.re >= 0.0 {
        return Err(Error::InSpectrum {
            point: format!("{}", zeta.re),
            context: "nonnegative real axis holds the squared spectrum",
        });
    }
    if zeta.im < 0.0 {
        return Ok(stieltjes_nonlinear(zeta.conj(), gamma, psi, c1)?.conj());
    }

    // Marchenko-Pastur start: gamma zeta s^2 + (gamma - 1 + zeta) s + 1 = 0.
    let a = gamma * zeta;
    let b = Complex64::new(gamma - 1.0, 0.0) + zeta;
    let c = Complex64::new(1.0, 0.0);
    let (r1, r2) = quadratic_roots(a, b, c);
    let mut sv = if zeta.im > 0.0 {
        match (r1.im > 0.0, r2.im > 0.0) {
            (true, false) => r1,
            (false, true) => r2,
            // Ambiguity: fall back to the asymptote -1/zeta.
            _ => closer(-1.0 / zeta, r1, r2),
        }
    } else {
        // Real zeta < 0: product of roots 1/(gamma zeta) < 0, exactly one
        // positive root, and the transform of a positive measure is
        // positive there.
        if r1.re > 0.0 {
            Complex64::new(r1.re, 0.0)
        } else {
            Complex64::new(r2.re, 0.0)
        }
    };

    let steps = (c1 / 0.1).ceil().max(1.0) as usize;
    for k in 1..=steps {
        let ck = c1 * k as f64 / steps as f64;
        let mut converged = false;
        for _ in 0..60 {
            let u = (gamma - 1.0) * sv + gamma * zeta * sv * sv;
            let up = gamma - 1.0 + 2.0 * gamma * zeta * sv;
            let p = -1.0 - zeta * sv - u;
            let pp = -zeta - up;
            let q = ck * u - psi;
            let qp = ck * up;
            let g = p * q + ck * ck * u * u;
            let gp = pp * q + p * qp + 2.0 * ck * ck * u * up;
            if gp.norm() < 1e-300 {
                return Err(Error::NonFinite { context: "nonlinear transform derivative" });
            }
            let delta = g / gp;
            sv -= delta;
            if delta.norm() < 1e-14 * (1.0 + sv.norm()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                context: "nonlinear transform continuation",
                iterations: 60,
                residual: f64::NAN,
            });
        }
    }

    // Residual on the rational closure, not just the cleared polynomial.
    let u = (gamma - 1.0) * sv + gamma * zeta * sv * sv;
    let q = c1 * u - psi;
    if q.norm() < 1e-12 {
        return Err(Error::NonFinite { context: "nonlinear transform closure denominator" });
    }
    let res = (-1.0 - zeta * sv - u + c1 * c1 * u * u / q).norm();
    if res > 1e-9 * (1.0 + zeta.norm() * sv.norm()) {
        return Err(Error::NoConvergence {
            context: "nonlinear transform residual",
            iterations: steps,
            residual: res,
        });
    }
    if zeta.im > 0.0 && sv.im < -1e-10 {
        return Err(Error::NoConvergence {
            context: "nonlinear transform branch",
            iterations: steps,
            residual: sv.im,
        });
    }
    Ok(sv)
}

/// Trace combination whose slope in the shift pair drives the variance.
fn slice_trace(xi: f64, x: f64, gamma: f64, psi: f64, c1: f64) -> Result<f64> {
    let r = resolvent_general(Complex64::new(xi, 0.0), x, c1 * x, gamma, psi, c1)?;
    Ok((gamma * r.m1 + r.m2).re)
}

/// Richardson-refined centered derivative of the slice trace in `x` at 0.
///
/// The slope enters with the sign that makes `d0` the ridgeless variance of
/// the corresponding linear model.
fn slope_at(xi: f64, gamma: f64, psi: f64, c1: f64) -> Result<f64> {
    let h = 1e-5;
    let d = |step: f64| -> Result<f64> {
        let hi = slice_trace(xi, step, gamma, psi, c1)?;
        let lo = slice_trace(xi, -step, gamma, psi, c1)?;
        Ok((hi - lo) / (2.0 * step))
    };
    let d1 = d(h)?;
    let d2 = d(h / 2.0)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// `P(0)` and `P'(0)` of the Newton interpolant through `(u_j, f_j)`.
fn newton_at_zero(u: &[f64], f: &[f64]) -> (f64, f64) {
    let n = u.len();
    let mut coef = f.to_vec();
    for k in 1..n {
        for j in (k..n).rev() {
            coef[j] = (coef[j] - coef[j - 1]) / (u[j] - u[j - k]);
        }
    }
    let mut p = coef[n - 1];
    let mut dp = 0.0;
    for j in (0..n - 1).rev() {
        dp = dp * (-u[j]) + p;
        p = p * (-u[j]) + coef[j];
    }
    (p, dp)
}

/// Extracts the Laurent data `q(xi) ~ d_minus1 / xi^2 + d0 + O(xi^2)` of the
/// variance slope near the origin and reports `variance = sigma2 * d0`.
///
/// Six probe points `xi = -eps_k` on a geometric ladder feed a Newton
/// interpolation in `eps^2` (the slope is even in `eps`); a ladder that
/// touches the spectrum is halved, at most six times. The warning flag
/// fires when dropping the top rung moves `d0` by more than a part in a
/// thousand.
pub fn laurent_variance(gamma: f64, psi: f64, c1: f64, sigma2: f64) -> Result<LaurentVariance> {
    check_common(gamma, psi, c1)?;
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::param("sigma2", format!("got {sigma2}, need >= 0")));
    }
    if (gamma - 1.0).abs() < 1e-6 {
        return Err(Error::InterpolationBoundary { gamma, band: 1e-6 });
    }

    const LADDER: usize = 6;
    let mut last_err = None;
    'attempt: for attempt in 0..=6 {
        let top = 0.16 * 0.5f64.powi(attempt);
        let mut u = [0.0f64; LADDER];
        let mut f = [0.0f64; LADDER];
        for j in 0..LADDER {
            let eps = top * 0.5f64.powi(j as i32);
            match slope_at(-eps, gamma, psi, c1) {
                Ok(q) => {
                    u[j] = eps * eps;
                    f[j] = q * eps * eps;
                }
                Err(e @ (Error::InSpectrum { .. } | Error::NoConvergence { .. })) => {
                    last_err = Some(e);
                    continue 'attempt;
                }
                Err(e) => return Err(e),
            }
        }

        let (d_minus1_raw, d0) = newton_at_zero(&u, &f);
        let (_, d0_check) = newton_at_zero(&u[1..], &f[1..]);
        let accuracy_warning = (d0 - d0_check).abs() > 1e-3 * d0.abs().max(1e-12);

        // The pole coefficient is nonnegative; tiny negative values are
        // interpolation noise.
        let d_minus1 = if d_minus1_raw < 0.0 && d_minus1_raw > -1e-6 { 0.0 } else { d_minus1_raw };

        let coefficients = LaurentCoefficients { gamma, psi, c1, d_minus1, d0 };
        return Ok(LaurentVariance { coefficients, variance: sigma2 * d0, accuracy_warning });
    }
    Err(last_err.unwrap_or(Error::NoConvergence {
        context: "laurent ladder",
        iterations: 7,
        residual: f64::NAN,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Marchenko-Pastur transform at complex argument, independent closed
    /// form used as oracle.
    fn mp_oracle(gamma: f64, zeta: Complex64) -> Complex64 {
        let a = gamma * zeta;
        let b = zeta + (gamma - 1.0);
        let disc = (b * b - 4.0 * a).sqrt();
        let r1 = (-b + disc) / (2.0 * a);
        let r2 = (-b - disc) / (2.0 * a);
        if zeta.im > 0.0 {
            if r1.im > 0.0 {
                r1
            } else {
                r2
            }
        } else if r1.re > 0.0 {
            r1
        } else {
            r2
        }
    }

    #[test]
    fn simple_resolvent_below_support() {
        // gamma = 2, s = 0, xi = -3: m2 = (8 - sqrt 28)/6, the root connected
        // to the Stieltjes branch; the printed closed form would pick the
        // other one.
        let r = resolvent_simple(c(-3.0, 0.0), 0.0, 2.0).unwrap();
        let expected = (8.0 - 28f64.sqrt()) / 6.0;
        assert!((r.m2.re - expected).abs() < 1e-12, "{} vs {expected}", r.m2.re);
        assert!(r.m2.im.abs() < 1e-12);
        let m1_expected = 1.0 / (3.0 - expected);
        assert!((r.m1.re - m1_expected).abs() < 1e-12);

        // Both printed equations hold at the solution.
        let res2 = r.m2 * (-r.xi - 2.0 * r.m1) - 1.0;
        let res1 = r.m1 * (-r.xi - r.m2) - 1.0;
        assert!(res1.norm() < 1e-10 && res2.norm() < 1e-10);
    }

    #[test]
    fn simple_resolvent_is_herglotz() {
        for &(re, im) in &[(0.5, 1.0), (-1.0, 0.3), (2.0, 0.05), (0.0, 2.0)] {
            let r = resolvent_simple(c(re, im), 0.3, 1.7).unwrap();
            assert!(r.m1.im > 0.0, "m1 at {re}+{im}i: {}", r.m1);
            assert!(r.m2.im > 0.0, "m2 at {re}+{im}i: {}", r.m2);
            // Transform bound for a probability measure.
            assert!(r.m2.norm() <= 1.0 / im + 1e-9);
            // Reflection symmetry.
            let rc = resolvent_simple(c(re, -im), 0.3, 1.7).unwrap();
            assert!((rc.m2 - r.m2.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn simple_resolvent_detects_bulk() {
        // gamma = 2: the singular support is [sqrt(2)-1, sqrt(2)+1] up to
        // sign; -1 is inside, -3 and -0.32 are not.
        assert!(matches!(
            resolvent_simple(c(-1.0, 0.0), 0.0, 2.0),
            Err(Error::InSpectrum { .. })
        ));
        assert!(resolvent_simple(c(-0.32, 0.0), 0.0, 2.0).is_ok());
        assert!(resolvent_simple(c(-3.0, 0.0), 0.0, 2.0).is_ok());
        assert!(matches!(
            resolvent_simple(c(0.0, 0.0), 0.0, 2.0),
            Err(Error::InSpectrum { .. })
        ));
    }

    #[test]
    fn general_reduces_to_simple_at_c1_zero() {
        for &(re, im, s) in &[(-3.0, 0.0, 0.0), (-0.8, 0.7, 0.2), (1.5, 1.0, 0.0), (-0.32, 0.0, 0.1)] {
            let g = resolvent_general(c(re, im), s, 0.0, 2.0, 0.5, 0.0).unwrap();
            let r = resolvent_simple(c(re, im), s, 2.0).unwrap();
            assert!((g.m1 - r.m1).norm() < 1e-8, "m1 at {re}+{im}i: {} vs {}", g.m1, r.m1);
            assert!((g.m2 - r.m2).norm() < 1e-8, "m2 at {re}+{im}i: {} vs {}", g.m2, r.m2);
        }
    }

    #[test]
    fn general_solution_satisfies_printed_equations() {
        let (gamma, psi, c1) = (2.0, 0.5, 0.3);
        let (s, t) = (0.4, 0.1);
        let xi = c(0.3, 1.2);
        let r = resolvent_general(xi, s, t, gamma, psi, c1).unwrap();
        let (f1, f2) = general_map(r.m1, r.m2, xi, s, t, gamma, psi, c1).unwrap();
        assert!((f1 - r.m1).norm() < 1e-9);
        assert!((f2 - r.m2).norm() < 1e-9);
        assert!(r.m1.im > 0.0 && r.m2.im > 0.0);
        let rc = resolvent_general(xi.conj(), s, t, gamma, psi, c1).unwrap();
        assert!((rc.m1 - r.m1.conj()).norm() < 1e-9);
    }

    #[test]
    fn general_matches_scalar_transform_on_imaginary_axis() {
        // With c1 = 0 the block traces at xi = sqrt(zeta) are tied to the
        // squared-spectrum transform: m1 = xi s(zeta),
        // m2 = (gamma-1)/xi + gamma xi s(zeta).
        let gamma = 2.0;
        let zeta = c(-2.0, 0.0);
        let s_hat = stieltjes_nonlinear(zeta, gamma, 0.5, 0.0).unwrap();
        let xi = c(0.0, 2f64.sqrt());
        let r = resolvent_general(xi, 0.0, 0.0, gamma, 0.5, 0.0).unwrap();
        let m1_expected = xi * s_hat;
        let m2_expected = (gamma - 1.0) / xi + gamma * xi * s_hat;
        assert!((r.m1 - m1_expected).norm() < 1e-8, "{} vs {m1_expected}", r.m1);
        assert!((r.m2 - m2_expected).norm() < 1e-8, "{} vs {m2_expected}", r.m2);
    }

    #[test]
    fn scalar_transform_matches_mp_at_c1_zero() {
        // Real negative arguments against the real closed form.
        for &(gamma, lambda) in &[(0.5, 0.5), (2.0, 1.0), (2.0, 2.0), (5.0, 0.7)] {
            let sv = stieltjes_nonlinear(c(-lambda, 0.0), gamma, 0.7, 0.0).unwrap();
            let (m, _) = crate::stieltjes::mp_stieltjes(gamma, lambda).unwrap();
            assert!((sv.re - m).abs() < 1e-10, "({gamma}, {lambda}): {} vs {m}", sv.re);
            assert!(sv.im.abs() < 1e-12);
        }
        // Complex arguments against the complex oracle.
        for &(gamma, re, im) in &[(2.0, 1.0, 1.0), (2.0, -0.5, 0.25), (0.5, 2.0, 0.1), (3.0, 0.0, 3.0)] {
            let z = c(re, im);
            let sv = stieltjes_nonlinear(z, gamma, 0.7, 0.0).unwrap();
            let oracle = mp_oracle(gamma, z);
            assert!((sv - oracle).norm() < 1e-10, "({gamma}, {z}): {sv} vs {oracle}");
        }
    }

    #[test]
    fn scalar_transform_positive_c1_properties() {
        let (gamma, psi, c1) = (2.0, 0.5, 0.3);
        // Herglotz in the upper half plane.
        let sv = stieltjes_nonlinear(c(0.5, 0.8), gamma, psi, c1).unwrap();
        assert!(sv.im > 0.0);
        // Decays like -1/zeta far away.
        let far = stieltjes_nonlinear(c(0.0, 1e6), gamma, psi, c1).unwrap();
        assert!((far + 1.0 / c(0.0, 1e6)).norm() < 1e-8);
        // Positive on the negative real axis, continuous in c1.
        let near = stieltjes_nonlinear(c(-1.5, 0.0), gamma, psi, 1e-9).unwrap();
        let at0 = stieltjes_nonlinear(c(-1.5, 0.0), gamma, psi, 0.0).unwrap();
        assert!(near.re > 0.0);
        assert!((near - at0).norm() < 1e-6);
    }

    #[test]
    fn laurent_variance_purely_nonlinear() {
        // c1 = 0: the limiting law is Marchenko-Pastur and the variance per
        // unit noise is 1/(gamma-1) above the boundary, gamma/(1-gamma)
        // below.
        for &gamma in &[1.5, 2.0, 5.0] {
            let lv = laurent_variance(gamma, 0.5, 0.0, 1.0).unwrap();
            let expected = 1.0 / (gamma - 1.0);
            assert!(
                (lv.coefficients.d0 - expected).abs() < 1e-3,
                "gamma {gamma}: d0 = {} vs {expected}",
                lv.coefficients.d0
            );
            assert!(
                (lv.coefficients.d_minus1 - (gamma - 1.0)).abs() < 1e-2,
                "gamma {gamma}: d_minus1 = {} vs {}",
                lv.coefficients.d_minus1,
                gamma - 1.0
            );
            assert!(!lv.accuracy_warning);
            assert_eq!(lv.variance, lv.coefficients.d0);
        }
        let under = laurent_variance(0.5, 0.5, 0.0, 2.0).unwrap();
        assert!((under.coefficients.d0 - 1.0).abs() < 1e-3, "d0 = {}", under.coefficients.d0);
        assert!(under.coefficients.d_minus1.abs() < 1e-3);
        assert!((under.variance - 2.0 * under.coefficients.d0).abs() < 1e-15);
    }

    #[test]
    fn laurent_ladder_shrinks_near_narrow_gap() {
        // gamma = 1.2: the gap edge sits at sqrt(1.2) - 1 = 0.0954, under
        // the default ladder top, so the ladder must halve and still
        // deliver 1/(gamma - 1) = 5.
        let lv = laurent_variance(1.2, 0.5, 0.0, 1.0).unwrap();
        assert!((lv.coefficients.d0 - 5.0).abs() < 5e-3, "d0 = {}", lv.coefficients.d0);
    }

    #[test]
    fn laurent_variance_with_linear_component() {
        let lv = laurent_variance(2.0, 0.5, 0.2, 1.0).unwrap();
        assert!(lv.coefficients.d0 > 0.0);
        assert!(lv.coefficients.d_minus1 >= 0.0);
        // Continuity in c1 near zero.
        let lv0 = laurent_variance(2.0, 0.5, 0.0, 1.0).unwrap();
        let lv_eps = laurent_variance(2.0, 0.5, 1e-4, 1.0).unwrap();
        assert!(
            (lv_eps.coefficients.d0 - lv0.coefficients.d0).abs() < 1e-2,
            "{} vs {}",
            lv_eps.coefficients.d0,
            lv0.coefficients.d0
        );
    }

    #[test]
    fn laurent_rejects_boundary() {
        assert!(matches!(
            laurent_variance(1.0, 0.5, 0.0, 1.0),
            Err(Error::InterpolationBoundary { .. })
        ));
    }
}
