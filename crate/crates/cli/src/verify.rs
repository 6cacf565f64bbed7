//! The `verify` subcommand: runs one lemma or theorem verifier and
//! reports pass/fail through the exit code.

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use satlab_core::{moment_mod3, moment_ue, Error, Model};

use crate::defaults;
use crate::output::{Failure, Outcome, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyId {
    /// Three-symbol slice: OPT along the sparse c-interval.
    Lem1,
    /// Three-symbol slice: OPT along the pinned-a band.
    Lem2,
    /// Three-symbol slice: OPT along the z-split of the wide band.
    Lem3,
    /// Three-symbol slice: OPT near the balanced corner.
    Lem4,
    /// Three-symbol theorem sweep: OPT <= 3 over the class simplex.
    OptMod3,
    /// Closed-form curvature of the rate function at the center.
    Hessian,
    /// Lattice-sum ladder against the Gaussian reference.
    Laplace,
    /// Table-model slice: the flat c = 1 segment.
    Flagekl,
    /// Table-model slice: the steep small-c segment.
    Stgekl,
    /// Table-model rectangle: pinned b = 1 over (a, c).
    Einmi,
    /// Table-model staircase: six coupled corners.
    Pukl,
    /// Table-model tail: the decreasing large-c curve.
    Lagr,
    /// Table-model theorem sweep: OPT <= 4 over the agreement interval.
    Unopt,
    /// Balanced point of the table-model rate function is a maximum.
    CriticalUe,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Verifier to run.
    #[arg(value_enum)]
    pub id: VerifyId,
    /// Evaluation point s (default: the verifier's minimal admissible s).
    #[arg(long)]
    pub s: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Half-width of the neighborhood excluded from strict-margin
    /// checks, and the lattice window half-width for laplace.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Constraint arity for the model-based checks
    /// (hessian, laplace, critical-ue).
    #[arg(long)]
    pub k: Option<u32>,
    /// Constraint density for the model-based checks.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Comma-separated size ladder for laplace.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<u64>>,
    /// Domain size for critical-ue.
    #[arg(long)]
    pub d: Option<u32>,
}

fn usage_on_domain(e: Error) -> Failure {
    match e {
        Error::Domain(msg) => Failure::Usage(msg),
        other => Failure::Runtime(other.to_string()),
    }
}

fn model_for(args: &VerifyArgs) -> Result<Model, Failure> {
    Model::new(
        args.k.unwrap_or(defaults::MODEL_K),
        args.gamma.unwrap_or(defaults::MODEL_GAMMA),
    )
    .map_err(usage_on_domain)
}

fn to_value<T: Serialize>(report: &T) -> Value {
    serde_json::to_value(report).expect("report serialization")
}

/// Dispatches one verifier; the returned outcome carries the resolved
/// parameters and the report, with `pass` deciding the exit code.
pub fn run(args: &VerifyArgs) -> Result<Outcome, Failure> {
    let id = args.id;
    let (params, report, pass): (Value, Value, bool) = match id {
        VerifyId::Lem1 | VerifyId::Lem2 | VerifyId::Lem3 | VerifyId::Lem4 => {
            let name = match id {
                VerifyId::Lem1 => "lem1",
                VerifyId::Lem2 => "lem2",
                VerifyId::Lem3 => "lem3",
                _ => "lem4",
            };
            let grid = args.grid.unwrap_or(defaults::GRID_SLICE);
            let rep = moment_mod3::verify_lemma(name, args.s, grid).map_err(usage_on_domain)?;
            (
                json!({"s": rep.s, "grid": grid}),
                to_value(&rep),
                rep.pass,
            )
        }
        VerifyId::Flagekl
        | VerifyId::Stgekl
        | VerifyId::Einmi
        | VerifyId::Pukl
        | VerifyId::Lagr => {
            let name = match id {
                VerifyId::Flagekl => "flagekl",
                VerifyId::Stgekl => "stgekl",
                VerifyId::Einmi => "einmi",
                VerifyId::Pukl => "pukl",
                _ => "lagr",
            };
            let grid = args.grid.unwrap_or(defaults::GRID_SLICE);
            let rep = moment_ue::verify_lemma_ue(name, args.s, grid).map_err(usage_on_domain)?;
            let mut body = to_value(&rep);
            if id == VerifyId::Pukl {
                // the staircase corners are the lemma's point form
                body["points"] = to_value(&moment_ue::pukl_points(rep.s));
            }
            (json!({"s": rep.s, "grid": grid}), body, rep.pass)
        }
        VerifyId::OptMod3 => {
            let s = args.s.unwrap_or(defaults::SWEEP_S_MOD3);
            let grid = args.grid.unwrap_or(defaults::GRID_SIMPLEX);
            let eps = args.eps.unwrap_or(defaults::EPS);
            let rep = moment_mod3::verify_theorem_opt(s, grid, eps).map_err(usage_on_domain)?;
            (
                json!({"s": s, "grid": grid, "eps": eps}),
                to_value(&rep),
                rep.pass,
            )
        }
        VerifyId::Unopt => {
            let s = args.s.unwrap_or(defaults::SWEEP_S_UE);
            let grid = args.grid.unwrap_or(defaults::GRID_SLICE);
            let eps = args.eps.unwrap_or(defaults::EPS);
            let rep = moment_ue::verify_theorem_unopt(s, grid, eps).map_err(usage_on_domain)?;
            (
                json!({"s": s, "grid": grid, "eps": eps}),
                to_value(&rep),
                rep.pass,
            )
        }
        VerifyId::Hessian => {
            let model = model_for(args)?;
            let rep = moment_mod3::verify_hessian(&model).map_err(usage_on_domain)?;
            (
                json!({"k": model.k, "gamma": model.gamma}),
                to_value(&rep),
                rep.pass,
            )
        }
        VerifyId::Laplace => {
            let model = model_for(args)?;
            let sizes = args
                .sizes
                .clone()
                .unwrap_or_else(|| defaults::LAPLACE_SIZES.to_vec());
            let eps = args.eps.unwrap_or(defaults::EPS);
            let rep =
                moment_mod3::verify_laplace(&model, &sizes, eps).map_err(usage_on_domain)?;
            (
                json!({"k": model.k, "gamma": model.gamma, "sizes": sizes, "eps": eps}),
                to_value(&rep),
                rep.pass,
            )
        }
        VerifyId::CriticalUe => {
            let model = model_for(args)?;
            let d = args.d.unwrap_or(defaults::UE_DOMAIN);
            let rep =
                moment_ue::critical_point_check_ue(&model, d).map_err(usage_on_domain)?;
            (
                json!({"k": model.k, "gamma": model.gamma, "d": d}),
                to_value(&rep),
                rep.pass,
            )
        }
    };
    let mut config = json!({"subcommand": "verify", "id": id});
    config["params"] = params;
    Ok(Outcome {
        config,
        payload: Payload::Report(report),
        pass,
    })
}
