//! Discrete spectral measures and the model catalog.
//!
//! The limiting theory is driven by two probability measures on `[0, inf)`:
//! `h`, the weak limit of the covariance eigenvalue distribution, and `g`, the
//! eigenvalue distribution reweighted by the signal's alignment with each
//! eigenvector. Both are represented here as finite atomic measures. Models
//! with a continuous limit (AR(1)) are discretized on a fixed quadrature grid.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative tolerance for merging nearby atoms.
pub const MERGE_TOL: f64 = 1e-12;
/// Tolerance on the total mass of a spectrum.
pub const MASS_TOL: f64 = 1e-12;
/// Symmetry tolerance for empirical covariance input.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues above this (negative) floor are accepted as PSD and clamped.
pub const PSD_TOL: f64 = -1e-10;

/// Finite atomic probability measure on `[0, inf)`.
///
/// Invariants, enforced at construction: atoms are sorted in descending
/// order, atoms within `MERGE_TOL` relative distance are merged (weights
/// added), all weights are positive, and the weights sum to 1 within
/// `MASS_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpectrum {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteSpectrum {
    /// Builds a spectrum from (atom, weight) pairs in any order.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::param("atoms", "spectrum needs at least one atom"));
        }
        for &(a, w) in &pairs {
            if !a.is_finite() || !w.is_finite() {
                return Err(Error::NonFinite { context: "spectrum atoms" });
            }
            if a < 0.0 {
                return Err(Error::param("atoms", format!("atom {a} is negative")));
            }
            if w < 0.0 {
                return Err(Error::param("weights", format!("weight {w} is negative")));
            }
        }
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite atoms"));

        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match atoms.last() {
                Some(&prev) if (prev - a).abs() <= MERGE_TOL * prev.abs().max(a.abs()) => {
                    // Merge; keep the representative atom from the first hit.
                    *weights.last_mut().expect("nonempty") += w;
                }
                _ => {
                    atoms.push(a);
                    weights.push(w);
                }
            }
        }
        // Zero-weight atoms carry no information; drop them.
        let mut k = 0;
        while k < atoms.len() {
            if weights[k] == 0.0 {
                atoms.remove(k);
                weights.remove(k);
            } else {
                k += 1;
            }
        }
        if atoms.is_empty() {
            return Err(Error::param("weights", "all weights are zero"));
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::param(
                "weights",
                format!("weights sum to {mass}, expected 1 within {MASS_TOL:.1e}"),
            ));
        }
        Ok(Self { atoms, weights })
    }

    /// Point mass at `atom`.
    pub fn point_mass(atom: f64) -> Self {
        Self { atoms: vec![atom], weights: vec![1.0] }
    }

    /// Atoms in descending order.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Weights aligned with `atoms()`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integrates `f` against the measure.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(a, w)| w * f(a)).sum()
    }

    /// Largest atom.
    pub fn max_atom(&self) -> f64 {
        self.atoms[0]
    }

    /// Mass sitting exactly at zero (after merging).
    pub fn mass_at_zero(&self) -> f64 {
        match self.atoms.last() {
            Some(&a) if a == 0.0 => *self.weights.last().expect("aligned"),
            _ => 0.0,
        }
    }

    /// Mean of the measure.
    pub fn mean(&self) -> f64 {
        self.integrate(|s| s)
    }

    /// True if some atom is strictly positive.
    pub fn has_positive_mass(&self) -> bool {
        self.max_atom() > 0.0
    }

    /// True if `atom` coincides with one of the support points within the
    /// merge tolerance.
    fn supports(&self, atom: f64) -> bool {
        self.atoms
            .iter()
            .any(|&a| (a - atom).abs() <= MERGE_TOL * a.abs().max(atom.abs()).max(1.0))
    }
}

/// The pair of limiting measures plus the squared signal norm `r^2`.
///
/// Invariant: every atom of `g` lies in the support of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryPair {
    pub h: DiscreteSpectrum,
    pub g: DiscreteSpectrum,
    pub beta_norm_sq: f64,
}

impl GeometryPair {
    pub fn new(h: DiscreteSpectrum, g: DiscreteSpectrum, beta_norm_sq: f64) -> Result<Self> {
        if !(beta_norm_sq.is_finite() && beta_norm_sq >= 0.0) {
            return Err(Error::param("beta_norm_sq", format!("got {beta_norm_sq}, need >= 0")));
        }
        for (a, _) in g.iter() {
            if !h.supports(a) {
                return Err(Error::param(
                    "g",
                    format!("atom {a} of g is outside the support of h"),
                ));
            }
        }
        Ok(Self { h, g, beta_norm_sq })
    }

    /// Equidistributed geometry: `g = h`.
    pub fn equidistributed(h: DiscreteSpectrum, beta_norm_sq: f64) -> Result<Self> {
        let g = h.clone();
        Self::new(h, g, beta_norm_sq)
    }
}

/// How the misspecification fraction `kappa` depends on the aspect ratio.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaMode {
    /// Constant fraction in `[0, 1]`.
    Fixed(f64),
    /// `kappa(gamma) = 1 - (1 + gamma)^(-a)` with decay exponent `a > 0`.
    PolynomialDecay { a: f64 },
}

impl KappaMode {
    /// Observed-signal fraction at aspect ratio `gamma`.
    pub fn kappa(&self, gamma: f64) -> Result<f64> {
        match *self {
            KappaMode::Fixed(k) => {
                if !(0.0..=1.0).contains(&k) {
                    return Err(Error::param("kappa", format!("got {k}, need in [0, 1]")));
                }
                Ok(k)
            }
            KappaMode::PolynomialDecay { a } => {
                if !(a > 0.0) {
                    return Err(Error::param("a", format!("got {a}, need > 0")));
                }
                Ok(1.0 - (1.0 + gamma).powf(-a))
            }
        }
    }
}

/// Data-generating models understood by the theory and simulation layers.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `Sigma = I`, signal norm `r^2`, noise variance `sigma^2`.
    Isotropic { r2: f64, sigma2: f64 },
    /// `Sigma = (1 - rho) I + rho 11^T` with `rho` in `[0, 1)`.
    Equicorrelated { rho: f64, r2: f64, sigma2: f64 },
    /// `Sigma_jk = rho^|j-k|`; the continuous limit is discretized on
    /// `p_for_quadrature` points.
    Ar1 { rho: f64, r2: f64, sigma2: f64, p_for_quadrature: usize },
    /// Observed isotropic block plus a hidden block carrying a `1 - kappa`
    /// share of the signal.
    Misspecified { r2: f64, sigma2: f64, kappa: KappaMode },
    /// `x = W z + u` with `d = psi p` latent factors, signal on the factors.
    Latent { psi: f64, r_theta2: f64, sigma_xi2: f64 },
    /// Random-feature design `X = phi(Z W^T)`; unit signal and unit noise.
    Nonlinear { activation: crate::simulate::Activation, psi: f64 },
    /// Explicit limiting geometry.
    Custom { geometry: GeometryPair, sigma2: f64 },
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::param(name, format!("got {v}, need finite and >= 0")));
    }
    Ok(())
}

impl ModelSpec {
    /// Validates parameter ranges common to all consumers.
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Isotropic { r2, sigma2 } => {
                check_nonneg("r2", *r2)?;
                check_nonneg("sigma2", *sigma2)
            }
            ModelSpec::Equicorrelated { rho, r2, sigma2 } => {
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::param("rho", format!("got {rho}, need in [0, 1)")));
                }
                check_nonneg("r2", *r2)?;
                check_nonneg("sigma2", *sigma2)
            }
            ModelSpec::Ar1 { rho, r2, sigma2, p_for_quadrature } => {
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::param("rho", format!("got {rho}, need in [0, 1)")));
                }
                if *p_for_quadrature == 0 {
                    return Err(Error::param("p_for_quadrature", "got 0, need >= 1"));
                }
                check_nonneg("r2", *r2)?;
                check_nonneg("sigma2", *sigma2)
            }
            ModelSpec::Misspecified { r2, sigma2, kappa } => {
                check_nonneg("r2", *r2)?;
                check_nonneg("sigma2", *sigma2)?;
                // Probe at an arbitrary aspect ratio to validate the mode.
                kappa.kappa(1.0).map(|_| ())
            }
            ModelSpec::Latent { psi, r_theta2, sigma_xi2 } => {
                if !(*psi > 0.0) {
                    return Err(Error::param("psi", format!("got {psi}, need > 0")));
                }
                check_nonneg("r_theta2", *r_theta2)?;
                check_nonneg("sigma_xi2", *sigma_xi2)
            }
            ModelSpec::Nonlinear { activation, psi } => {
                if !(*psi > 0.0) {
                    return Err(Error::param("psi", format!("got {psi}, need > 0")));
                }
                activation.validate()
            }
            ModelSpec::Custom { geometry, sigma2 } => {
                check_nonneg("sigma2", *sigma2)?;
                if !geometry.h.has_positive_mass() {
                    return Err(Error::param("geometry", "h has no positive atom"));
                }
                Ok(())
            }
        }
    }

    /// Noise variance used by the simulation layer; the latent misfit term is
    /// not included here.
    pub fn noise_variance(&self) -> f64 {
        match self {
            ModelSpec::Isotropic { sigma2, .. }
            | ModelSpec::Equicorrelated { sigma2, .. }
            | ModelSpec::Ar1 { sigma2, .. }
            | ModelSpec::Misspecified { sigma2, .. }
            | ModelSpec::Custom { sigma2, .. } => *sigma2,
            ModelSpec::Latent { sigma_xi2, .. } => *sigma_xi2,
            ModelSpec::Nonlinear { .. } => 1.0,
        }
    }

    /// Limiting variance of the residual around the best linear predictor.
    ///
    /// Differs from [`noise_variance`](Self::noise_variance) when part of
    /// the target is invisible to a linear fit: the latent model leaks the
    /// unprojected signal share, the misspecified model leaks the hidden
    /// block, and both shares land here.
    pub fn effective_noise_variance(&self, gamma: f64) -> Result<f64> {
        match self {
            ModelSpec::Latent { psi, r_theta2, sigma_xi2 } => {
                Ok(sigma_xi2 + r_theta2 * psi / (1.0 + psi))
            }
            ModelSpec::Misspecified { r2, sigma2, kappa } => {
                Ok(sigma2 + (1.0 - kappa.kappa(gamma)?) * r2)
            }
            _ => Ok(self.noise_variance()),
        }
    }
}

/// AR(1) covariance eigenvalue at quadrature node `i` of `p` (midpoint rule).
fn ar1_eigenvalue(rho: f64, i: usize, p: usize) -> f64 {
    let theta = (p - i) as f64 * std::f64::consts::PI / (p as f64 + 1.0)
        + 0.5 * std::f64::consts::PI / (p as f64 + 1.0);
    (1.0 - rho * rho) / (1.0 - 2.0 * rho * theta.cos() + rho * rho)
}

/// Limiting geometry of a model.
///
/// The aspect ratio is accepted for interface uniformity and validated; the
/// catalog measures themselves do not depend on it. Misspecified and
/// nonlinear models have no spectral representation and are rejected.
pub fn build_geometry(spec: &ModelSpec, gamma: f64) -> Result<GeometryPair> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", format!("got {gamma}, need > 0")));
    }
    spec.validate()?;
    match spec {
        ModelSpec::Isotropic { r2, .. } => {
            GeometryPair::equidistributed(DiscreteSpectrum::point_mass(1.0), *r2)
        }
        ModelSpec::Equicorrelated { rho, r2, .. } => {
            // The single spike at 1 - rho + p rho escapes to infinity with
            // vanishing mass; the limiting law is the bulk point mass.
            GeometryPair::equidistributed(DiscreteSpectrum::point_mass(1.0 - rho), *r2)
        }
        ModelSpec::Ar1 { rho, r2, p_for_quadrature, .. } => {
            let p = *p_for_quadrature;
            let w = 1.0 / p as f64;
            let h = DiscreteSpectrum::new((1..=p).map(|i| (ar1_eigenvalue(*rho, i, p), w)))?;
            GeometryPair::equidistributed(h, *r2)
        }
        ModelSpec::Latent { psi, r_theta2, .. } => {
            if *psi > 1.0 {
                return Err(Error::param(
                    "psi",
                    format!("got {psi}, need <= 1 for a latent spectral limit"),
                ));
            }
            let spike = 1.0 + 1.0 / psi;
            let h = DiscreteSpectrum::new(vec![(1.0, 1.0 - psi), (spike, *psi)])?;
            let g = DiscreteSpectrum::point_mass(spike);
            let r2 = psi * r_theta2 / ((1.0 + psi) * (1.0 + psi));
            GeometryPair::new(h, g, r2)
        }
        ModelSpec::Custom { geometry, .. } => Ok(geometry.clone()),
        ModelSpec::Misspecified { .. } => Err(Error::NoSpectrum {
            model: "misspecified",
            hint: "use the dedicated misspecified risk routine",
        }),
        ModelSpec::Nonlinear { .. } => Err(Error::NoSpectrum {
            model: "nonlinear",
            hint: "use the block-resolvent routines",
        }),
    }
}

/// Extracts `(h_p, g_p, |beta|^2)` from a concrete covariance and signal.
///
/// `sigma` must be symmetric within `SYMMETRY_TOL` and PSD within `PSD_TOL`;
/// tiny negative eigenvalues are clamped to zero. `beta` must be nonzero.
pub fn empirical_geometry(sigma: &DMatrix<f64>, beta: &DVector<f64>) -> Result<GeometryPair> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "empirical_geometry covariance",
            expected: p,
            got: sigma.ncols(),
        });
    }
    if beta.len() != p {
        return Err(Error::DimensionMismatch {
            context: "empirical_geometry signal",
            expected: p,
            got: beta.len(),
        });
    }
    let mut defect = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            defect = defect.max((sigma[(i, j)] - sigma[(j, i)]).abs());
        }
    }
    if defect > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { defect, tol: SYMMETRY_TOL });
    }
    let beta_norm_sq = beta.norm_squared();
    if beta_norm_sq == 0.0 {
        return Err(Error::param("beta", "signal vector is zero"));
    }

    let eig = nalgebra::SymmetricEigen::new(sigma.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig < PSD_TOL {
        return Err(Error::NotPsd { min_eig });
    }

    let w = 1.0 / p as f64;
    let mut h_pairs = Vec::with_capacity(p);
    let mut g_pairs = Vec::with_capacity(p);
    for i in 0..p {
        let lam = eig.eigenvalues[i].max(0.0);
        let proj = eig.eigenvectors.column(i).dot(beta);
        h_pairs.push((lam, w));
        g_pairs.push((lam, proj * proj / beta_norm_sq));
    }
    let h = DiscreteSpectrum::new(h_pairs)?;
    let g = DiscreteSpectrum::new(g_pairs)?;
    GeometryPair::new(h, g, beta_norm_sq)
}
