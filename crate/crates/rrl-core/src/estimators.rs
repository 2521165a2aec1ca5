//! Ridge and min-norm estimators on finite samples.
//!
//! Everything here conditions on a realized design: closed-form fits, the
//! exact risk decomposition given the design (noise averaged out
//! analytically), and leave-one-out / generalized cross-validation through
//! a single kernel eigendecomposition. The penalized objective throughout
//! is `||y - X b||^2 / n + lambda ||b||^2`, so `lambda` matches the
//! asymptotic formulas without rescaling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::risk_theory::RiskDecomposition;
use crate::{Error, Result};

/// Relative factor deciding which singular values count as zero.
pub const RANK_CUTOFF: f64 = 1e-12;
/// Singular values within this factor of the cutoff raise the ambiguity flag.
const AMBIGUITY_BAND: f64 = 10.0;

/// Population covariance in a form that keeps quadratic forms cheap.
#[derive(Debug, Clone)]
pub enum Covariance {
    Identity,
    /// `eye * I + W W^T` with thin `W`; covers equicorrelated and latent
    /// designs without materializing a dense matrix.
    Spiked { eye: f64, w: DMatrix<f64> },
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Covariance {
    /// `v^T Sigma v`.
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        match self {
            Covariance::Identity => v.norm_squared(),
            Covariance::Spiked { eye, w } => {
                eye * v.norm_squared() + (w.transpose() * v).norm_squared()
            }
            Covariance::Diagonal(d) => v.iter().zip(d.iter()).map(|(vi, di)| di * vi * vi).sum(),
            Covariance::Dense(s) => v.dot(&(s * v)),
        }
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        let got = match self {
            Covariance::Identity => return Ok(()),
            Covariance::Spiked { w, .. } => w.nrows(),
            Covariance::Diagonal(d) => d.len(),
            Covariance::Dense(s) => {
                if s.nrows() != s.ncols() {
                    return Err(Error::DimensionMismatch {
                        context: "covariance matrix squareness",
                        expected: s.nrows(),
                        got: s.ncols(),
                    });
                }
                s.nrows()
            }
        };
        if got != p {
            return Err(Error::DimensionMismatch { context: "covariance dimension", expected: p, got });
        }
        Ok(())
    }
}

/// A realized regression problem: design, response, and the population
/// quantities needed to score estimators against the truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Target coefficients; absent for observational data.
    pub beta_true: Option<DVector<f64>>,
    pub sigma_pop: Covariance,
    /// Effective noise level entering the conditional variance.
    pub noise_var: f64,
    pub seed: u64,
    pub model_tag: String,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        beta_true: Option<DVector<f64>>,
        sigma_pop: Covariance,
        noise_var: f64,
        seed: u64,
        model_tag: impl Into<String>,
    ) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n == 0 || p == 0 {
            return Err(Error::param("x", format!("empty design, {n} x {p}")));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { context: "response length", expected: n, got: y.len() });
        }
        if let Some(b) = &beta_true {
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "target coefficient length",
                    expected: p,
                    got: b.len(),
                });
            }
        }
        sigma_pop.check_dim(p)?;
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::param("noise_var", format!("got {noise_var}, need >= 0")));
        }
        Ok(Dataset { x, y, beta_true, sigma_pop, noise_var, seed, model_tag: model_tag.into() })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Finite-sample aspect ratio `p / n`.
    pub fn aspect(&self) -> f64 {
        self.p() as f64 / self.n() as f64
    }
}

/// Output of a single fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    pub residuals: DVector<f64>,
    /// Diagonal of the smoother mapping `y` to fitted values, on request.
    pub smoother_diag: Option<DVector<f64>>,
    /// Direct solves always converge; iterative fits may not.
    pub converged: bool,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param("lambda", format!("got {lambda}, need >= 0")));
    }
    Ok(())
}

/// Relative cutoff on the scale of Gram eigenvalues. Linear in the
/// tolerance, not squared: symmetric eigensolvers resolve eigenvalues to
/// about machine precision times the largest one, so a squared-singular
/// cutoff would sit below solver noise and misread rank-deficient kernels.
fn cutoff_scale(n: usize, p: usize) -> f64 {
    RANK_CUTOFF * n.max(p) as f64
}

fn flag_ambiguous(evals: &DVector<f64>, cut: f64) -> bool {
    if cut == 0.0 {
        return false;
    }
    let band = AMBIGUITY_BAND * AMBIGUITY_BAND;
    evals.iter().any(|&e| e > cut / band && e <= cut * band)
}

/// Ridge fit (`lambda > 0`) or min-norm least squares (`lambda = 0`).
pub fn ridge_fit(data: &Dataset, lambda: f64) -> Result<FitResult> {
    ridge_fit_full(data, lambda, false)
}

/// As [`ridge_fit`], optionally with the smoother diagonal.
///
/// Positive penalties solve whichever normal-equation side is smaller;
/// the ridgeless fit goes through the singular value decomposition.
pub fn ridge_fit_full(data: &Dataset, lambda: f64, with_smoother: bool) -> Result<FitResult> {
    check_lambda(lambda)?;
    let (n, p) = (data.n(), data.p());
    let x = &data.x;
    let nf = n as f64;

    let coefficients = if lambda > 0.0 {
        if p <= n {
            let mut a = x.transpose() * x;
            for i in 0..p {
                a[(i, i)] += nf * lambda;
            }
            let chol = a.cholesky().ok_or(Error::NonFinite { context: "ridge normal equations" })?;
            chol.solve(&(x.transpose() * &data.y))
        } else {
            let mut k = x * x.transpose();
            for i in 0..n {
                k[(i, i)] += nf * lambda;
            }
            let chol = k.cholesky().ok_or(Error::NonFinite { context: "ridge kernel equations" })?;
            x.transpose() * chol.solve(&data.y)
        }
    } else {
        let svd = x.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = RANK_CUTOFF * smax * n.max(p) as f64;
        svd.solve(&data.y, eps).map_err(|_| Error::NonFinite { context: "ridgeless least squares" })?
    };

    let residuals = &data.y - x * &coefficients;
    let smoother_diag = if with_smoother { Some(smoother_diagonal(x, lambda)?) } else { None };
    Ok(FitResult { coefficients, lambda, residuals, smoother_diag, converged: true })
}

/// Diagonal of `S = X (X^T X + n lambda)^{-1} X^T`, via the kernel side;
/// at `lambda = 0` this is the projection onto the column space.
fn smoother_diagonal(x: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    let nf = n as f64;
    let eig = SymmetricEigen::new(x * x.transpose());
    let g = eig.eigenvalues.map(|t| t.max(0.0));
    let u = eig.eigenvectors;
    let cut = cutoff_scale(n, p) * g.max();
    let weights: Vec<f64> = g
        .iter()
        .map(|&gi| {
            if lambda > 0.0 {
                gi / (gi + nf * lambda)
            } else if gi > cut {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut diag = DVector::zeros(n);
    for i in 0..n {
        diag[i] = (0..n).map(|j| u[(i, j)] * u[(i, j)] * weights[j]).sum();
    }
    Ok(diag)
}

/// Gradient descent on the unpenalized objective from a zero start; the
/// iterates stay in the row space, so convergence lands on the min-norm
/// least-squares solution.
///
/// `step` is validated against the exact largest eigenvalue of `X^T X / n`
/// (computed on the smaller Gram side). Exhausting `max_iter` is reported
/// through `converged`, not as an error.
pub fn gd_minnorm(data: &Dataset, step: f64, tol: f64, max_iter: usize) -> Result<FitResult> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::param("step", format!("got {step}, need > 0")));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::param("tol", format!("got {tol}, need >= 0")));
    }
    let (n, p) = (data.n(), data.p());
    let x = &data.x;
    let nf = n as f64;

    let gram = if p <= n { x.transpose() * x } else { x * x.transpose() };
    let lmax = SymmetricEigen::new(gram).eigenvalues.max().max(0.0) / nf;
    if lmax > 0.0 && step > 1.0 / lmax {
        return Err(Error::param(
            "step",
            format!("step {step} exceeds 1/lambda_max = {:.6e}", 1.0 / lmax),
        ));
    }

    let xty = x.transpose() * &data.y;
    let target = tol * xty.norm();
    let mut beta = DVector::zeros(p);
    let mut grad = xty;
    let mut converged = grad.norm() <= target;
    let mut iters = 0;
    while !converged && iters < max_iter {
        beta += (step / nf) * &grad;
        grad = x.transpose() * (&data.y - x * &beta);
        converged = grad.norm() <= target;
        iters += 1;
    }

    let residuals = &data.y - x * &beta;
    Ok(FitResult { coefficients: beta, lambda: 0.0, residuals, smoother_diag: None, converged })
}

/// [`conditional_risk`] output.
#[derive(Debug, Clone)]
pub struct ConditionalRisk {
    pub risk: RiskDecomposition,
    /// Set when a Gram eigenvalue sits within a factor of ten (on the
    /// singular value scale) of the rank cutoff, making the zero/nonzero
    /// split fragile.
    pub cutoff_ambiguous: bool,
}

/// Exact risk of the ridge (or min-norm) estimator conditional on the
/// design, with the noise integrated out analytically.
///
/// Works on the smaller of the two Gram sides; the wide case never forms a
/// `p x p` matrix. Requires `beta_true`.
pub fn conditional_risk(data: &Dataset, lambda: f64) -> Result<ConditionalRisk> {
    check_lambda(lambda)?;
    let beta = data.beta_true.as_ref().ok_or(Error::InvalidParameter {
        name: "beta_true",
        reason: "conditional risk needs the target coefficients".into(),
    })?;
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let x = &data.x;
    let sigma = &data.sigma_pop;
    let s2 = data.noise_var;

    let (bias, variance, ambiguous) = if p <= n {
        // Primal route: eigendecomposition of X'X / n.
        let eig = SymmetricEigen::new((x.transpose() * x) / nf);
        let d = eig.eigenvalues.map(|t| t.max(0.0));
        let v = eig.eigenvectors;
        let cut = cutoff_scale(n, p) * d.max();
        let ambiguous = flag_ambiguous(&d, cut);
        let cvec = v.transpose() * beta;
        let q_at = |i: usize| match sigma {
            Covariance::Identity => 1.0,
            _ => sigma.quad(&v.column(i).clone_owned()),
        };

        if lambda > 0.0 {
            let scaled = DVector::from_fn(p, |i, _| cvec[i] / (d[i] + lambda));
            let shrunk = &v * scaled;
            let mut var = 0.0;
            for i in 0..p {
                if d[i] > cut {
                    var += d[i] * q_at(i) / ((d[i] + lambda) * (d[i] + lambda));
                }
            }
            (lambda * lambda * sigma.quad(&shrunk), s2 / nf * var, ambiguous)
        } else {
            let mut outside = beta.clone();
            let mut var = 0.0;
            for i in 0..p {
                if d[i] > cut {
                    outside -= &(v.column(i) * cvec[i]);
                    var += q_at(i) / d[i];
                }
            }
            (sigma.quad(&outside), s2 / nf * var, ambiguous)
        }
    } else {
        // Gram route: eigendecomposition of X X', eigenvectors of X'X / n
        // recovered as X'u_i / sqrt(g_i) only where needed.
        let eig = SymmetricEigen::new(x * x.transpose());
        let g = eig.eigenvalues.map(|t| t.max(0.0));
        let u = eig.eigenvectors;
        let cut = cutoff_scale(n, p) * g.max();
        let ambiguous = flag_ambiguous(&g, cut);
        let w = u.transpose() * (x * beta);

        let mut q = vec![0.0f64; n];
        match sigma {
            Covariance::Identity => {
                for i in 0..n {
                    if g[i] > cut {
                        q[i] = 1.0;
                    }
                }
            }
            Covariance::Spiked { eye, w: wmat } => {
                let m = (x * wmat).transpose() * &u;
                for i in 0..n {
                    if g[i] > cut {
                        q[i] = eye + m.column(i).norm_squared() / g[i];
                    }
                }
            }
            Covariance::Diagonal(_) | Covariance::Dense(_) => {
                let vr = x.transpose() * &u;
                for i in 0..n {
                    if g[i] > cut {
                        q[i] = sigma.quad(&vr.column(i).clone_owned()) / g[i];
                    }
                }
            }
        }

        let mut z2 = DVector::zeros(n);
        for i in 0..n {
            if g[i] > cut {
                z2[i] = w[i] / g[i];
            }
        }
        let row_proj = x.transpose() * (&u * z2);

        if lambda > 0.0 {
            let mut z = DVector::zeros(n);
            let mut var = 0.0;
            for i in 0..n {
                if g[i] > cut {
                    let di = g[i] / nf;
                    z[i] = w[i] / (g[i] * (di + lambda));
                    var += di * q[i] / ((di + lambda) * (di + lambda));
                }
            }
            let shrunk = x.transpose() * (&u * z) + (beta - &row_proj) / lambda;
            (lambda * lambda * sigma.quad(&shrunk), s2 / nf * var, ambiguous)
        } else {
            let mut var = 0.0;
            for i in 0..n {
                if g[i] > cut {
                    var += q[i] / (g[i] / nf);
                }
            }
            (sigma.quad(&(beta - &row_proj)), s2 / nf * var, ambiguous)
        }
    };

    Ok(ConditionalRisk {
        risk: RiskDecomposition::new(p as f64 / nf, lambda, bias, variance, 0.0),
        cutoff_ambiguous: ambiguous,
    })
}

/// Kernel eigendecomposition cached across penalties for cross-validation.
pub struct CvEngine {
    g: DVector<f64>,
    u: DMatrix<f64>,
    uty: DVector<f64>,
    n: usize,
    rank: usize,
    cutoff: f64,
}

impl CvEngine {
    pub fn new(data: &Dataset) -> Result<Self> {
        let eig = SymmetricEigen::new(&data.x * data.x.transpose());
        let g = eig.eigenvalues.map(|t| t.max(0.0));
        let cutoff = cutoff_scale(data.n(), data.p()) * g.max();
        let rank = g.iter().filter(|&&gi| gi > cutoff).count();
        let uty = eig.eigenvectors.transpose() * &data.y;
        Ok(CvEngine { g, u: eig.eigenvectors, uty, n: data.n(), rank, cutoff })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Exact leave-one-out mean squared error through the smoother
    /// shortcut; no refits.
    ///
    /// At `lambda = 0` the shortcut is the interpolator identity, which
    /// needs a full-rank kernel.
    pub fn loo(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        let n = self.n;
        let nf = n as f64;
        let mut total = 0.0;
        if lambda > 0.0 {
            let w: Vec<f64> = self.g.iter().map(|&gi| nf * lambda / (gi + nf * lambda)).collect();
            for i in 0..n {
                let mut resid = 0.0;
                let mut den = 0.0;
                for j in 0..n {
                    let uij = self.u[(i, j)];
                    resid += uij * w[j] * self.uty[j];
                    den += uij * uij * w[j];
                }
                if den.abs() < 1e-14 {
                    return Err(Error::ZeroDenominator { index: i });
                }
                total += (resid / den) * (resid / den);
            }
        } else {
            if self.rank < n {
                return Err(Error::RidgelessCvUndefined { rank: self.rank, n });
            }
            for i in 0..n {
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..n {
                    let uij = self.u[(i, j)];
                    num += uij * self.uty[j] / self.g[j];
                    den += uij * uij / self.g[j];
                }
                if den.abs() < 1e-14 {
                    return Err(Error::ZeroDenominator { index: i });
                }
                total += (num / den) * (num / den);
            }
        }
        Ok(total / nf)
    }

    /// Generalized cross-validation score; undefined exactly when the
    /// smoother has full trace (interpolating ridgeless fit).
    pub fn gcv(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        let n = self.n;
        let nf = n as f64;
        if lambda > 0.0 {
            let mut tr = 0.0;
            let mut num = 0.0;
            for j in 0..n {
                let shrink = nf * lambda / (self.g[j] + nf * lambda);
                tr += self.g[j] / (self.g[j] + nf * lambda);
                num += shrink * shrink * self.uty[j] * self.uty[j];
            }
            let den = 1.0 - tr / nf;
            if den.abs() < 1e-14 {
                return Err(Error::GcvUndefined);
            }
            Ok(num / nf / (den * den))
        } else {
            if self.rank == n {
                return Err(Error::GcvUndefined);
            }
            let mut num = 0.0;
            for j in 0..n {
                if self.g[j] <= self.cutoff {
                    num += self.uty[j] * self.uty[j];
                }
            }
            let den = 1.0 - self.rank as f64 / nf;
            Ok(num / nf / (den * den))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneCriterion {
    Cv,
    Gcv,
}

/// One grid point of a tuning sweep; `value` is absent where the criterion
/// is undefined, with the reason in `note`.
#[derive(Debug, Clone)]
pub struct TunePoint {
    pub lambda: f64,
    pub value: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TuneCurve {
    /// Points in ascending penalty order.
    pub points: Vec<TunePoint>,
    pub lambda_hat: f64,
}

/// Sweeps the criterion over the penalty grid and selects the minimizer;
/// ties break towards the smallest penalty.
pub fn tune(data: &Dataset, grid: &[f64], criterion: TuneCriterion) -> Result<TuneCurve> {
    if grid.is_empty() {
        return Err(Error::param("grid", "empty penalty grid"));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let engine = CvEngine::new(data)?;
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("finite by validation"));

    let mut points = Vec::with_capacity(lambdas.len());
    let mut best: Option<(f64, f64)> = None;
    let mut first_err: Option<String> = None;
    for &l in &lambdas {
        let eval = match criterion {
            TuneCriterion::Cv => engine.loo(l),
            TuneCriterion::Gcv => engine.gcv(l),
        };
        match eval {
            Ok(v) => {
                if best.map_or(true, |(bv, _)| v < bv) {
                    best = Some((v, l));
                }
                points.push(TunePoint { lambda: l, value: Some(v), note: None });
            }
            Err(e) => {
                let msg = e.to_string();
                if first_err.is_none() {
                    first_err = Some(msg.clone());
                }
                points.push(TunePoint { lambda: l, value: None, note: Some(msg) });
            }
        }
    }
    match best {
        Some((_, l)) => Ok(TuneCurve { points, lambda_hat: l }),
        None => Err(Error::AllPointsFailed {
            total: lambdas.len(),
            first: first_err.unwrap_or_default(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn gauss_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    fn plain_dataset(x: DMatrix<f64>, y: DVector<f64>, beta: Option<DVector<f64>>, s2: f64) -> Dataset {
        Dataset::new(x, y, beta, Covariance::Identity, s2, 0, "test").unwrap()
    }

    /// Dense oracle for the conditional decomposition, formed the brute
    /// way in p x p space.
    fn dense_conditional(
        x: &DMatrix<f64>,
        beta: &DVector<f64>,
        sigma: &DMatrix<f64>,
        s2: f64,
        lambda: f64,
    ) -> (f64, f64) {
        let (n, p) = (x.nrows(), x.ncols());
        let nf = n as f64;
        let sighat = (x.transpose() * x) / nf;
        let inv = if lambda > 0.0 {
            let mut a = sighat.clone();
            for i in 0..p {
                a[(i, i)] += lambda;
            }
            a.try_inverse().unwrap()
        } else {
            // Pseudo-inverse through the eigendecomposition.
            let eig = SymmetricEigen::new(sighat.clone());
            let mut acc = DMatrix::zeros(p, p);
            for i in 0..p {
                if eig.eigenvalues[i] > 1e-10 {
                    let v = eig.eigenvectors.column(i);
                    acc += (&v * v.transpose()) / eig.eigenvalues[i];
                }
            }
            acc
        };
        let bias_vec = if lambda > 0.0 {
            -lambda * (&inv * beta)
        } else {
            (&inv * &sighat) * beta - beta
        };
        let b = (sigma * &bias_vec).dot(&bias_vec);
        let v = (s2 / nf) * (&inv * sigma * &inv * sighat).trace();
        (b, v)
    }

    #[test]
    fn covariance_quadratic_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = 6;
        let w = gauss_matrix(&mut rng, p, 2);
        let dense = DMatrix::identity(p, p) * 0.3 + &w * w.transpose();
        let spiked = Covariance::Spiked { eye: 0.3, w };
        for _ in 0..5 {
            let v = gauss_vector(&mut rng, p);
            assert!((spiked.quad(&v) - Covariance::Dense(dense.clone()).quad(&v)).abs() < 1e-10);
        }
        let d = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        assert_eq!(Covariance::Diagonal(d).quad(&v), 15.0);
    }

    #[test]
    fn dataset_shape_validation() {
        let x = DMatrix::identity(2, 3);
        let bad_y = DVector::zeros(3);
        assert!(matches!(
            Dataset::new(x.clone(), bad_y, None, Covariance::Identity, 1.0, 0, "t"),
            Err(Error::DimensionMismatch { .. })
        ));
        let y = DVector::zeros(2);
        let bad_cov = Covariance::Diagonal(DVector::zeros(2));
        assert!(matches!(
            Dataset::new(x, y, None, bad_cov, 1.0, 0, "t"),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn conditional_risk_hand_values_wide() {
        // n = 2, p = 3 identity-block design; the sample covariance has
        // eigenvalues {1/2, 1/2, 0}.
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let y = DVector::zeros(2);

        let data = plain_dataset(x.clone(), y.clone(), Some(DVector::from_vec(vec![1.0, 1.0, 1.0])), 1.0);
        let r = conditional_risk(&data, 0.0).unwrap();
        assert!((r.risk.bias - 1.0).abs() < 1e-12);
        assert!((r.risk.variance - 2.0).abs() < 1e-12);
        assert!((r.risk.total - 3.0).abs() < 1e-12);
        assert!((r.risk.gamma - 1.5).abs() < 1e-15);
        assert!(!r.cutoff_ambiguous);

        let data = plain_dataset(x.clone(), y.clone(), Some(DVector::from_vec(vec![1.0, 1.0, 0.0])), 1.0);
        let r = conditional_risk(&data, 0.0).unwrap();
        assert!(r.risk.bias.abs() < 1e-12);
        assert!((r.risk.variance - 2.0).abs() < 1e-12);

        let data = plain_dataset(x, y, Some(DVector::from_vec(vec![1.0, 0.0, 0.0])), 1.0);
        let r = conditional_risk(&data, 1.0).unwrap();
        assert!((r.risk.bias - 4.0 / 9.0).abs() < 1e-12);
        assert!((r.risk.variance - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_risk_hand_values_tall() {
        // n = 3, p = 2: eigenvalues of X'X/3 are {1/3, 1}; full rank, so
        // the ridgeless bias vanishes and the variance sums sigma^2/n
        // times the inverse eigenvalues.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let data = plain_dataset(x, DVector::zeros(3), Some(DVector::from_vec(vec![1.0, 0.0])), 1.0);
        let r = conditional_risk(&data, 0.0).unwrap();
        assert!(r.risk.bias.abs() < 1e-12);
        assert!((r.risk.variance - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_risk_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, p) in &[(12usize, 7usize), (7, 12)] {
            let x = gauss_matrix(&mut rng, n, p);
            let beta = gauss_vector(&mut rng, p);
            let a = gauss_matrix(&mut rng, p, p);
            let dense = DMatrix::identity(p, p) * 0.5 + &a * a.transpose() / p as f64;
            for &lambda in &[0.0, 0.5] {
                let (b_ref, v_ref) = dense_conditional(&x, &beta, &dense, 1.3, lambda);
                let data = Dataset::new(
                    x.clone(),
                    DVector::zeros(n),
                    Some(beta.clone()),
                    Covariance::Dense(dense.clone()),
                    1.3,
                    0,
                    "t",
                )
                .unwrap();
                let r = conditional_risk(&data, lambda).unwrap();
                assert!(
                    (r.risk.bias - b_ref).abs() < 1e-9 * (1.0 + b_ref),
                    "bias {} vs {b_ref} at ({n}, {p}, {lambda})",
                    r.risk.bias
                );
                assert!(
                    (r.risk.variance - v_ref).abs() < 1e-9 * (1.0 + v_ref),
                    "variance {} vs {v_ref} at ({n}, {p}, {lambda})",
                    r.risk.variance
                );
            }
        }
    }

    #[test]
    fn conditional_risk_spiked_equals_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (n, p) = (6usize, 10usize);
        let x = gauss_matrix(&mut rng, n, p);
        let beta = gauss_vector(&mut rng, p);
        let w = gauss_matrix(&mut rng, p, 2);
        let dense = DMatrix::identity(p, p) * 0.7 + &w * w.transpose();
        for &lambda in &[0.0, 0.8] {
            let mk = |cov: Covariance| {
                let data =
                    Dataset::new(x.clone(), DVector::zeros(n), Some(beta.clone()), cov, 1.0, 0, "t")
                        .unwrap();
                conditional_risk(&data, lambda).unwrap().risk
            };
            let rs = mk(Covariance::Spiked { eye: 0.7, w: w.clone() });
            let rd = mk(Covariance::Dense(dense.clone()));
            assert!((rs.bias - rd.bias).abs() < 1e-9 * (1.0 + rd.bias));
            assert!((rs.variance - rd.variance).abs() < 1e-9 * (1.0 + rd.variance));
        }
    }

    #[test]
    fn conditional_risk_needs_target() {
        let data = plain_dataset(DMatrix::identity(3, 3), DVector::zeros(3), None, 1.0);
        assert!(matches!(
            conditional_risk(&data, 0.1),
            Err(Error::InvalidParameter { name: "beta_true", .. })
        ));
    }

    #[test]
    fn ridge_fit_hand_values() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let data = plain_dataset(x, y, None, 1.0);

        let fit = ridge_fit(&data, 0.0).unwrap();
        for (got, want) in fit.coefficients.iter().zip([1.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(fit.residuals.norm() < 1e-12);

        let fit = ridge_fit(&data, 1.0).unwrap();
        for (got, want) in fit.coefficients.iter().zip([1.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![2.0, 2.0]);
        let fit = ridge_fit(&plain_dataset(x, y, None, 1.0), 0.0).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_routes_match_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, p) in &[(9usize, 5usize), (5, 9)] {
            let x = gauss_matrix(&mut rng, n, p);
            let y = gauss_vector(&mut rng, n);
            let lambda = 0.7;
            let mut a = x.transpose() * &x;
            for i in 0..p {
                a[(i, i)] += n as f64 * lambda;
            }
            let want = a.try_inverse().unwrap() * (x.transpose() * &y);
            let fit = ridge_fit(&plain_dataset(x, y, None, 1.0), lambda).unwrap();
            assert!((fit.coefficients - want).norm() < 1e-10, "shape ({n}, {p})");
        }
    }

    #[test]
    fn ridgeless_fit_is_minnorm_interpolator() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, p) = (5usize, 11usize);
        let x = gauss_matrix(&mut rng, n, p);
        let y = gauss_vector(&mut rng, n);
        let fit = ridge_fit(&plain_dataset(x.clone(), y.clone(), None, 1.0), 0.0).unwrap();
        assert!(fit.residuals.norm() < 1e-10);
        // Min-norm solutions live in the row space.
        let k = &x * x.transpose();
        let dual = k.try_inverse().unwrap() * &y;
        let want = x.transpose() * dual;
        assert!((fit.coefficients - want).norm() < 1e-9);
    }

    #[test]
    fn smoother_diagonal_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, p) = (9usize, 5usize);
        let x = gauss_matrix(&mut rng, n, p);
        let y = gauss_vector(&mut rng, n);
        let lambda = 0.8;
        let mut a = x.transpose() * &x;
        for i in 0..p {
            a[(i, i)] += n as f64 * lambda;
        }
        let s = &x * a.try_inverse().unwrap() * x.transpose();
        let fit = ridge_fit_full(&plain_dataset(x.clone(), y.clone(), None, 1.0), lambda, true).unwrap();
        let diag = fit.smoother_diag.unwrap();
        for i in 0..n {
            assert!((diag[i] - s[(i, i)]).abs() < 1e-10);
        }
        // Ridgeless interpolation: the smoother is the identity on a
        // full-row-rank design.
        let xw = gauss_matrix(&mut rng, 4, 9);
        let fit = ridge_fit_full(&plain_dataset(xw, DVector::zeros(4), None, 1.0), 0.0, true).unwrap();
        for v in fit.smoother_diag.unwrap().iter() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_descent_reaches_minnorm() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for &(n, p) in &[(4usize, 9usize), (9, 4)] {
            let x = gauss_matrix(&mut rng, n, p);
            let y = gauss_vector(&mut rng, n);
            let data = plain_dataset(x.clone(), y, None, 1.0);
            let lmax = SymmetricEigen::new(&x * x.transpose()).eigenvalues.max() / n as f64;
            let fit = gd_minnorm(&data, 0.9 / lmax, 1e-13, 200_000).unwrap();
            assert!(fit.converged);
            let direct = ridge_fit(&data, 0.0).unwrap();
            assert!(
                (fit.coefficients - direct.coefficients).norm() < 1e-6,
                "shape ({n}, {p})"
            );
        }
    }

    #[test]
    fn gradient_descent_guards() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = gauss_matrix(&mut rng, 5, 8);
        let y = gauss_vector(&mut rng, 5);
        let data = plain_dataset(x.clone(), y, None, 1.0);
        let lmax = SymmetricEigen::new(&x * x.transpose()).eigenvalues.max() / 5.0;
        assert!(matches!(
            gd_minnorm(&data, 2.0 / lmax, 1e-10, 10),
            Err(Error::InvalidParameter { name: "step", .. })
        ));
        let fit = gd_minnorm(&data, 0.5 / lmax, 1e-12, 1).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn loo_frozen_identity_kernel() {
        // K = I, so the interpolator identity reduces to ||y||^2 / n.
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let engine = CvEngine::new(&plain_dataset(x, y, None, 1.0)).unwrap();
        assert!((engine.loo(0.0).unwrap() - 12.5).abs() < 1e-12);
    }

    #[test]
    fn loo_shortcut_matches_refits() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for &(n, p) in &[(10usize, 6usize), (6, 10)] {
            for &lambda in &[0.5, 2.0] {
                let x = gauss_matrix(&mut rng, n, p);
                let y = gauss_vector(&mut rng, n);
                let engine = CvEngine::new(&plain_dataset(x.clone(), y.clone(), None, 1.0)).unwrap();
                let fast = engine.loo(lambda).unwrap();

                // Naive refits keep the penalty at its full-sample scale.
                let mut total = 0.0;
                for i in 0..n {
                    let xi = x.clone().remove_row(i);
                    let yi = y.clone().remove_row(i);
                    let mut a = xi.transpose() * &xi;
                    for k in 0..p {
                        a[(k, k)] += n as f64 * lambda;
                    }
                    let beta = a.try_inverse().unwrap() * (xi.transpose() * yi);
                    let pred = x.row(i).transpose().dot(&beta);
                    total += (y[i] - pred) * (y[i] - pred);
                }
                let naive = total / n as f64;
                assert!(
                    (fast - naive).abs() < 1e-9 * (1.0 + naive),
                    "({n}, {p}, {lambda}): {fast} vs {naive}"
                );
            }
        }
    }

    #[test]
    fn ridgeless_loo_matches_refits() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (n, p) = (5usize, 12usize);
        let x = gauss_matrix(&mut rng, n, p);
        let y = gauss_vector(&mut rng, n);
        let engine = CvEngine::new(&plain_dataset(x.clone(), y.clone(), None, 1.0)).unwrap();
        let fast = engine.loo(0.0).unwrap();

        let mut total = 0.0;
        for i in 0..n {
            let xi = x.clone().remove_row(i);
            let yi = y.clone().remove_row(i);
            let k = &xi * xi.transpose();
            let beta = xi.transpose() * (k.try_inverse().unwrap() * yi);
            let pred = x.row(i).transpose().dot(&beta);
            total += (y[i] - pred) * (y[i] - pred);
        }
        let naive = total / n as f64;
        assert!((fast - naive).abs() < 1e-9 * (1.0 + naive), "{fast} vs {naive}");
    }

    #[test]
    fn ridgeless_loo_needs_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let x = gauss_matrix(&mut rng, 6, 3);
        let y = gauss_vector(&mut rng, 6);
        let engine = CvEngine::new(&plain_dataset(x, y, None, 1.0)).unwrap();
        assert!(matches!(engine.loo(0.0), Err(Error::RidgelessCvUndefined { rank: 3, n: 6 })));
    }

    #[test]
    fn gcv_matches_dense_and_handles_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let (n, p) = (8usize, 5usize);
        let x = gauss_matrix(&mut rng, n, p);
        let y = gauss_vector(&mut rng, n);
        let lambda = 0.6;
        let mut a = x.transpose() * &x;
        for i in 0..p {
            a[(i, i)] += n as f64 * lambda;
        }
        let s = &x * a.try_inverse().unwrap() * x.transpose();
        let resid = &y - &s * &y;
        let want = (resid.norm_squared() / n as f64) / (1.0 - s.trace() / n as f64).powi(2);
        let engine = CvEngine::new(&plain_dataset(x, y, None, 1.0)).unwrap();
        assert!((engine.gcv(lambda).unwrap() - want).abs() < 1e-10 * (1.0 + want));

        // Rank-deficient ridgeless case with one informative direction:
        // S projects onto it, so the score is y2^2 / (1 - 1/2)^2 / n.
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let engine = CvEngine::new(&plain_dataset(x, y, None, 1.0)).unwrap();
        assert!((engine.gcv(0.0).unwrap() - 32.0).abs() < 1e-12);

        // Full-rank ridgeless: trace(S) = n.
        let x = DMatrix::identity(3, 3);
        let engine = CvEngine::new(&plain_dataset(x, DVector::zeros(3), None, 1.0)).unwrap();
        assert!(matches!(engine.gcv(0.0), Err(Error::GcvUndefined)));
    }

    #[test]
    fn tune_selects_argmin_and_records_failures() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let x = gauss_matrix(&mut rng, 10, 4);
        let y = gauss_vector(&mut rng, 10);
        let data = plain_dataset(x, y, None, 1.0);
        let grid = [2.0, 0.0, 0.5, 1.0];
        let curve = tune(&data, &grid, TuneCriterion::Cv).unwrap();
        assert_eq!(curve.points.len(), 4);
        assert!(curve.points[0].value.is_none(), "ridgeless point undefined on a tall design");
        assert!(curve.points[0].note.is_some());
        let best = curve
            .points
            .iter()
            .filter_map(|p| p.value.map(|v| (p.lambda, v)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(curve.lambda_hat, best.0);
        // Ascending order out.
        for w in curve.points.windows(2) {
            assert!(w[0].lambda <= w[1].lambda);
        }

        assert!(matches!(
            tune(&data, &[0.0], TuneCriterion::Cv),
            Err(Error::AllPointsFailed { total: 1, .. })
        ));
    }

    #[test]
    fn tune_breaks_ties_towards_smallest() {
        // Zero response makes every positive penalty score zero.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let x = gauss_matrix(&mut rng, 6, 3);
        let data = plain_dataset(x, DVector::zeros(6), None, 1.0);
        let curve = tune(&data, &[2.0, 0.5, 1.0], TuneCriterion::Cv).unwrap();
        assert_eq!(curve.lambda_hat, 0.5);
    }
}
