//! Shared model flags and their translation into a concrete model.

use clap::ValueEnum;

use rrl_core::simulate::Activation;
use rrl_core::spectra::{KappaMode, ModelSpec};

use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Isotropic,
    Equicorrelated,
    Ar1,
    Misspecified,
    Latent,
    Nonlinear,
}

impl ModelName {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelName::Isotropic => "isotropic",
            ModelName::Equicorrelated => "equicorrelated",
            ModelName::Ar1 => "ar1",
            ModelName::Misspecified => "misspecified",
            ModelName::Latent => "latent",
            ModelName::Nonlinear => "nonlinear",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct ModelArgs {
    /// Data model.
    #[arg(long, value_enum, default_value_t = ModelName::Isotropic)]
    pub model: ModelName,

    /// Signal energy `r^2`.
    #[arg(long, default_value_t = 1.0)]
    pub r2: f64,

    /// Noise variance `sigma^2`.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,

    /// Correlation level for the equicorrelated and ar1 models.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,

    /// Misspecified model: polynomial-decay exponent of the observed
    /// fraction, `kappa(gamma) = 1 - (1 + gamma)^(-a)`.
    #[arg(long, conflicts_with = "kappa_fixed")]
    pub kappa_a: Option<f64>,

    /// Misspecified model: constant observed fraction in [0, 1].
    #[arg(long)]
    pub kappa_fixed: Option<f64>,

    /// Latent or nonlinear width ratio `d/p`.
    #[arg(long, default_value_t = 0.5)]
    pub psi: f64,

    /// Latent signal energy.
    #[arg(long, default_value_t = 1.0)]
    pub r_theta2: f64,

    /// Latent observation noise variance.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_xi2: f64,

    /// Quadrature resolution for the ar1 spectral law.
    #[arg(long, default_value_t = 2000)]
    pub quadrature: usize,
}

impl ModelArgs {
    pub fn kappa(&self) -> KappaMode {
        match (self.kappa_a, self.kappa_fixed) {
            (_, Some(k)) => KappaMode::Fixed(k),
            (Some(a), None) => KappaMode::PolynomialDecay { a },
            (None, None) => KappaMode::PolynomialDecay { a: 2.0 },
        }
    }

    pub fn to_spec(&self) -> Result<ModelSpec, String> {
        let spec = match self.model {
            ModelName::Isotropic => ModelSpec::Isotropic { r2: self.r2, sigma2: self.sigma2 },
            ModelName::Equicorrelated => {
                ModelSpec::Equicorrelated { rho: self.rho, r2: self.r2, sigma2: self.sigma2 }
            }
            ModelName::Ar1 => ModelSpec::Ar1 {
                rho: self.rho,
                r2: self.r2,
                sigma2: self.sigma2,
                p_for_quadrature: self.quadrature,
            },
            ModelName::Misspecified => ModelSpec::Misspecified {
                r2: self.r2,
                sigma2: self.sigma2,
                kappa: self.kappa(),
            },
            ModelName::Latent => ModelSpec::Latent {
                psi: self.psi,
                r_theta2: self.r_theta2,
                sigma_xi2: self.sigma_xi2,
            },
            ModelName::Nonlinear => ModelSpec::Nonlinear {
                activation: Activation::PurelyNonlinearAbs,
                psi: self.psi,
            },
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    /// Records only the keys the selected model reads.
    pub fn describe(&self, table: &mut Table) {
        table.config("model", self.model.tag());
        match self.model {
            ModelName::Isotropic => {
                table.config("r2", self.r2);
                table.config("sigma2", self.sigma2);
            }
            ModelName::Equicorrelated => {
                table.config("rho", self.rho);
                table.config("r2", self.r2);
                table.config("sigma2", self.sigma2);
            }
            ModelName::Ar1 => {
                table.config("rho", self.rho);
                table.config("r2", self.r2);
                table.config("sigma2", self.sigma2);
                table.config("quadrature", self.quadrature);
            }
            ModelName::Misspecified => {
                table.config("r2", self.r2);
                table.config("sigma2", self.sigma2);
                match self.kappa() {
                    KappaMode::Fixed(k) => table.config("kappa_fixed", k),
                    KappaMode::PolynomialDecay { a } => table.config("kappa_a", a),
                }
            }
            ModelName::Latent => {
                table.config("psi", self.psi);
                table.config("r_theta2", self.r_theta2);
                table.config("sigma_xi2", self.sigma_xi2);
            }
            ModelName::Nonlinear => {
                table.config("psi", self.psi);
                table.config("activation", "abs");
            }
        }
    }
}
