//! Subcommand implementations. Each validates its flags, runs the matching
//! library routine, and lays the results out as a [`Table`].

use clap::Args;

use rrl_core::nonlinear::laurent_variance;
use rrl_core::risk_theory::{minnorm_risk, misspecified_risk, ridge_risk, RiskDecomposition};
use rrl_core::simulate::{mc_cv_curve, mc_risk_curve};
use rrl_core::spectra::{build_geometry, DiscreteSpectrum, GeometryPair, ModelSpec};
use rrl_core::Error as CoreError;

use crate::args::ModelArgs;
use crate::grid::Grid;
use crate::table::{Cell, Table};

/// Grid values this close to the interpolation threshold `gamma = 1` get an
/// `excluded` row instead of a near-divergent limit.
pub const GAMMA_BAND: f64 = 0.02;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or parameter combinations; exit code 2.
    Validation(String),
    /// A computation that should have worked did not; exit code 3.
    Numeric(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<String> for CliError {
    fn from(message: String) -> Self {
        CliError::Validation(message)
    }
}

fn parse_grid(flag: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    let grid: Grid =
        raw.parse().map_err(|e| CliError::Validation(format!("--{flag}: {e}")))?;
    Ok(grid.0)
}

fn reject_nonlinear(spec: &ModelSpec) -> Result<(), CliError> {
    if matches!(spec, ModelSpec::Nonlinear { .. }) {
        return Err(CliError::Validation(
            "the nonlinear feature model has no spectral risk curve; use `rrl nonlinear`"
                .to_string(),
        ));
    }
    Ok(())
}

/// Min-norm limit for any spectral model. The hidden-block and latent models
/// route their invisible signal share through the effective noise level.
fn theory_point(spec: &ModelSpec, gamma: f64) -> rrl_core::Result<RiskDecomposition> {
    match spec {
        ModelSpec::Misspecified { r2, sigma2, kappa } => {
            misspecified_risk(gamma, *r2, *sigma2, kappa)
        }
        _ => {
            let geometry = build_geometry(spec, gamma)?;
            minnorm_risk(&geometry, gamma, spec.effective_noise_variance(gamma)?)
        }
    }
}

/// Ridge limit at `lambda > 0`. The misspecified model reduces to an
/// identity-covariance problem with shrunk signal, inflated noise, and a
/// constant floor.
fn ridge_point(spec: &ModelSpec, gamma: f64, lambda: f64) -> rrl_core::Result<RiskDecomposition> {
    match spec {
        ModelSpec::Misspecified { r2, sigma2, kappa } => {
            let k = kappa.kappa(gamma)?;
            let geometry =
                GeometryPair::equidistributed(DiscreteSpectrum::point_mass(1.0), k * r2)?;
            let base = ridge_risk(&geometry, gamma, sigma2 + (1.0 - k) * r2, lambda)?;
            Ok(RiskDecomposition::new(
                gamma,
                lambda,
                base.bias,
                base.variance,
                (1.0 - k) * r2,
            ))
        }
        _ => {
            let geometry = build_geometry(spec, gamma)?;
            ridge_risk(&geometry, gamma, spec.effective_noise_variance(gamma)?, lambda)
        }
    }
}

fn decomposition_cells(r: &RiskDecomposition) -> [Cell; 4] {
    [
        Cell::Num(r.bias),
        Cell::Num(r.variance),
        Cell::Num(r.misspec_bias),
        Cell::Num(r.total),
    ]
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Aspect ratio grid `p/n`: `x`, `a,b,c`, `lo:hi:count`, or
    /// `lo:hi:count:log`.
    #[arg(long, default_value = "0.1:10:100")]
    pub gamma: String,
}

pub fn theory(args: &TheoryArgs) -> Result<Table, CliError> {
    let spec = args.model.to_spec()?;
    reject_nonlinear(&spec)?;
    let gammas = parse_grid("gamma", &args.gamma)?;

    let mut table = Table::new(
        "theory",
        vec!["gamma", "bias", "variance", "misspec_bias", "total", "status"],
    );
    args.model.describe(&mut table);
    table.config("gamma", &args.gamma);

    for &g in &gammas {
        if (g - 1.0).abs() < GAMMA_BAND {
            table.excluded_gamma.push(g);
            table.push(status_only_row(g, "excluded"));
            continue;
        }
        match theory_point(&spec, g) {
            Ok(r) => {
                let mut row = vec![Cell::Num(g)];
                row.extend(decomposition_cells(&r));
                row.push(Cell::Text("ok".to_string()));
                table.push(row);
            }
            Err(e) => {
                eprintln!("warning: gamma = {g}: {e}");
                table.push(status_only_row(g, "error"));
            }
        }
    }
    Ok(table)
}

fn status_only_row(g: f64, status: &str) -> Vec<Cell> {
    vec![
        Cell::Num(g),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Text(status.to_string()),
    ]
}

#[derive(Debug, Args)]
pub struct RidgeTheoryArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Aspect ratio grid `p/n`.
    #[arg(long, default_value = "2")]
    pub gamma: String,

    /// Penalty grid; every value must be positive.
    #[arg(long, default_value = "0.25:16:17:log")]
    pub lambda: String,
}

pub fn ridge_theory(args: &RidgeTheoryArgs) -> Result<Table, CliError> {
    let spec = args.model.to_spec()?;
    reject_nonlinear(&spec)?;
    let gammas = parse_grid("gamma", &args.gamma)?;
    let lambdas = parse_grid("lambda", &args.lambda)?;
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(CliError::Validation(format!(
            "--lambda: got {bad}, every penalty must be > 0"
        )));
    }

    let mut table = Table::new(
        "ridge-theory",
        vec!["gamma", "lambda", "bias", "variance", "misspec_bias", "total", "status"],
    );
    args.model.describe(&mut table);
    table.config("gamma", &args.gamma);
    table.config("lambda", &args.lambda);

    for &g in &gammas {
        for &l in &lambdas {
            match ridge_point(&spec, g, l) {
                Ok(r) => {
                    let mut row = vec![Cell::Num(g), Cell::Num(l)];
                    row.extend(decomposition_cells(&r));
                    row.push(Cell::Text("ok".to_string()));
                    table.push(row);
                }
                Err(e) => {
                    eprintln!("warning: gamma = {g}, lambda = {l}: {e}");
                    table.push(vec![
                        Cell::Num(g),
                        Cell::Num(l),
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Text("error".to_string()),
                    ]);
                }
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Samples per dataset.
    #[arg(long, default_value_t = 200)]
    pub n: usize,

    /// Aspect ratio grid; each point uses `p = round(gamma n)`.
    #[arg(long, default_value = "0.5:8:8:log")]
    pub gamma: String,

    /// Ridge penalty; `0` fits the min-norm interpolator.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,

    /// Replications per grid point.
    #[arg(long, default_value_t = 50)]
    pub reps: usize,

    /// Master seed; each (point, replication) derives its own stream.
    #[arg(long, default_value_t = 0x5EED)]
    pub seed: u64,

    /// Also evaluate ridgeless points inside the boundary guard band.
    #[arg(long)]
    pub force_boundary: bool,
}

pub fn simulate(args: &SimulateArgs) -> Result<Table, CliError> {
    let spec = args.model.to_spec()?;
    let gammas = parse_grid("gamma", &args.gamma)?;
    if !(args.lambda.is_finite() && args.lambda >= 0.0) {
        return Err(CliError::Validation(format!(
            "--lambda: got {}, need >= 0",
            args.lambda
        )));
    }

    let curve = mc_risk_curve(
        &spec,
        args.n,
        &gammas,
        args.lambda,
        args.reps,
        args.seed,
        args.force_boundary,
    )?;

    let mut table = Table::new(
        "simulate",
        vec![
            "gamma",
            "n",
            "p",
            "theory_bias",
            "theory_variance",
            "misspec_bias",
            "theory_total",
            "mean_bias",
            "mean_variance",
            "mean_total",
            "stderr_total",
            "reps_used",
            "status",
        ],
    );
    args.model.describe(&mut table);
    table.config("n", args.n);
    table.config("gamma", &args.gamma);
    table.config("lambda", args.lambda);
    table.config("reps", args.reps);
    table.config("seed", args.seed);
    table.config("force_boundary", args.force_boundary);
    table.excluded_gamma = curve.excluded_gamma.clone();

    let mut points = curve.points.iter();
    for &g in &gammas {
        if curve.excluded_gamma.contains(&g) {
            let p = ((g * args.n as f64).round() as usize).max(1);
            let mut row = vec![Cell::Num(g), Cell::Int(args.n as u64), Cell::Int(p as u64)];
            row.extend(std::iter::repeat_with(|| Cell::Empty).take(9));
            row.push(Cell::Text("excluded".to_string()));
            table.push(row);
            continue;
        }
        let pt = points.next().expect("curve points align with the requested grid");
        let mut row = vec![Cell::Num(g), Cell::Int(pt.n as u64), Cell::Int(pt.p as u64)];
        row.extend(theory_cells(&spec, g, args.lambda));
        if pt.reps_used == 0 {
            row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]);
        } else {
            row.extend([
                Cell::Num(pt.mean_bias),
                Cell::Num(pt.mean_variance),
                Cell::Num(pt.mean_total),
                Cell::Num(pt.stderr_total),
            ]);
        }
        row.push(Cell::Int(pt.reps_used as u64));
        let status = if pt.valid() { "ok" } else { "failed" };
        row.push(Cell::Text(status.to_string()));
        table.push(row);
    }
    Ok(table)
}

/// Limit columns for a simulation row; empty when no limit is implemented
/// (penalized nonlinear features) or the point sits where the limit blows up.
fn theory_cells(spec: &ModelSpec, gamma: f64, lambda: f64) -> [Cell; 4] {
    let result = match spec {
        ModelSpec::Nonlinear { activation, psi } => {
            if lambda == 0.0 {
                laurent_variance(gamma, *psi, activation.c1(), 1.0)
                    .map(|lv| RiskDecomposition::new(gamma, 0.0, 0.0, lv.variance, 0.0))
            } else {
                return [Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty];
            }
        }
        _ if lambda == 0.0 => theory_point(spec, gamma),
        _ => ridge_point(spec, gamma, lambda),
    };
    match result {
        Ok(r) => decomposition_cells(&r),
        Err(_) => [Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty],
    }
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Samples per dataset.
    #[arg(long, default_value_t = 300)]
    pub n: usize,

    /// Single aspect ratio `p/n`.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,

    /// Penalty grid to score; `0` entries use the ridgeless variant.
    #[arg(long, default_value = "0.25:16:17:log")]
    pub lambda: String,

    /// Replications.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,

    /// Master seed.
    #[arg(long, default_value_t = 0x5EED)]
    pub seed: u64,
}

pub fn cv(args: &CvArgs) -> Result<Table, CliError> {
    let spec = args.model.to_spec()?;
    let lambdas = parse_grid("lambda", &args.lambda)?;

    let mc = mc_cv_curve(&spec, args.n, args.gamma, &lambdas, args.reps, args.seed)?;

    let mut table = Table::new(
        "cv",
        vec![
            "lambda", "mean_cv", "stderr_cv", "mean_gcv", "stderr_gcv", "used_cv",
            "used_gcv", "status",
        ],
    );
    args.model.describe(&mut table);
    table.config("n", args.n);
    table.config("gamma", args.gamma);
    table.config("lambda", &args.lambda);
    table.config("reps", args.reps);
    table.config("seed", args.seed);
    table.config("p", mc.p);
    table.config("reps_used", mc.reps_used);
    table.summary("tuned_lambda_mean", mc.tuned_lambda_mean);
    table.summary("tuned_risk_mean", mc.tuned_risk_mean);
    table.summary("tuned_risk_stderr", mc.tuned_risk_stderr);

    for pt in &mc.points {
        let mut row = vec![Cell::Num(pt.lambda)];
        if pt.used_cv > 0 {
            row.extend([Cell::Num(pt.mean_cv), Cell::Num(pt.stderr_cv)]);
        } else {
            row.extend([Cell::Empty, Cell::Empty]);
        }
        if pt.used_gcv > 0 {
            row.extend([Cell::Num(pt.mean_gcv), Cell::Num(pt.stderr_gcv)]);
        } else {
            row.extend([Cell::Empty, Cell::Empty]);
        }
        row.push(Cell::Int(pt.used_cv as u64));
        row.push(Cell::Int(pt.used_gcv as u64));
        let status = if pt.used_cv > 0 || pt.used_gcv > 0 { "ok" } else { "failed" };
        row.push(Cell::Text(status.to_string()));
        table.push(row);
    }
    Ok(table)
}

#[derive(Debug, Args)]
pub struct NonlinearArgs {
    /// Aspect ratio grid `p/n`.
    #[arg(long, default_value = "1.2:8:30")]
    pub gamma: String,

    /// Width ratio grid `d/p`.
    #[arg(long, default_value = "0.5")]
    pub psi: String,

    /// Squared linear component of the activation, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub c1: f64,

    /// Noise variance scaling the variance column.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
}

pub fn nonlinear(args: &NonlinearArgs) -> Result<Table, CliError> {
    if !(0.0..1.0).contains(&args.c1) {
        return Err(CliError::Validation(format!(
            "--c1: got {}, need in [0, 1)",
            args.c1
        )));
    }
    let gammas = parse_grid("gamma", &args.gamma)?;
    let psis = parse_grid("psi", &args.psi)?;

    let mut table = Table::new(
        "nonlinear",
        vec!["gamma", "psi", "c1", "d_minus1", "d0", "variance", "status"],
    );
    table.config("gamma", &args.gamma);
    table.config("psi", &args.psi);
    table.config("c1", args.c1);
    table.config("sigma2", args.sigma2);

    for &g in &gammas {
        for &psi in &psis {
            match laurent_variance(g, psi, args.c1, args.sigma2) {
                Ok(lv) => {
                    let status = if lv.accuracy_warning { "warn" } else { "ok" };
                    table.push(vec![
                        Cell::Num(g),
                        Cell::Num(psi),
                        Cell::Num(args.c1),
                        Cell::Num(lv.coefficients.d_minus1),
                        Cell::Num(lv.coefficients.d0),
                        Cell::Num(lv.variance),
                        Cell::Text(status.to_string()),
                    ]);
                }
                Err(e) => {
                    eprintln!("warning: gamma = {g}, psi = {psi}: {e}");
                    table.push(vec![
                        Cell::Num(g),
                        Cell::Num(psi),
                        Cell::Num(args.c1),
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Text("error".to_string()),
                    ]);
                }
            }
        }
    }
    Ok(table)
}
