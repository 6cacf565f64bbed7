//! The `exact` subcommand: arbitrary-precision counts emitted as
//! {quantity, params, value, provenance} documents. Values are decimal
//! strings; rationals render as numerator/denominator.

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use satlab_core::exact::counts::{
    exact_m, exact_m_convolution, exact_m_inclusion_exclusion, mloc_ratio,
};
use satlab_core::exact::mod3::{
    enumerate_ex2_mod3, exact_ex2_mod3, exact_k_mod3, exact_n_mod3, exact_nhat_mod3,
};
use satlab_core::exact::ue::{
    enumerate_ex2_ue, enumerate_ue_constraints, exact_ex2_ue, exact_ktilde_ue,
};
use satlab_core::Error;

use crate::output::{Failure, Outcome, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Quantity {
    /// Slot patterns on n variables with m slots, every variable
    /// occupied at least twice.
    #[value(name = "M")]
    #[serde(rename = "M")]
    M,
    /// Constraint-side pair count for the three-symbol model at slot
    /// class counts l0,l1,l2.
    #[value(name = "K")]
    #[serde(rename = "K")]
    K,
    /// K times the per-class occupancy counts.
    #[value(name = "nhat")]
    Nhat,
    /// nhat times the multinomial choice of variable classes.
    #[value(name = "N")]
    #[serde(rename = "N")]
    N,
    /// Exact second moment of the solution count, three-symbol model.
    #[value(name = "ex2-mod3")]
    Ex2Mod3,
    /// Scaled constraint-side pair count for the table model.
    #[value(name = "ktilde-ue")]
    KtildeUe,
    /// Exact second moment of the solution count, table model.
    #[value(name = "ex2-ue")]
    Ex2Ue,
    /// Ratio of the exact pattern count to its asymptotic form.
    #[value(name = "mloc")]
    Mloc,
    /// Number of uniquely extendible tables of the given shape.
    #[value(name = "ue-family")]
    UeFamily,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    /// Quantity to compute.
    #[arg(value_enum)]
    pub quantity: Quantity,
    /// Slot count (M, mloc) or constraint count (all others).
    #[arg(long)]
    pub m: Option<u64>,
    /// Variable count.
    #[arg(long)]
    pub n: Option<u64>,
    /// Constraint arity.
    #[arg(long)]
    pub k: Option<u32>,
    /// Domain size for table-model quantities.
    #[arg(long)]
    pub d: Option<u32>,
    /// Slot class counts: l0,l1,l2 for three-symbol quantities, a
    /// single disagreeing-slot count for ktilde-ue.
    #[arg(long, value_delimiter = ',')]
    pub l: Option<Vec<u64>>,
    /// Variable class counts w0,w1,w2.
    #[arg(long, value_delimiter = ',')]
    pub w: Option<Vec<u64>>,
    /// Cross-check the second-moment value against full enumeration
    /// (small instances only).
    #[arg(long)]
    pub enumerate: bool,
}

fn runtime_on_size(e: Error) -> Failure {
    match e {
        Error::SizeLimit(msg) => Failure::Runtime(msg),
        Error::Domain(msg) => Failure::Usage(msg),
        other => Failure::Runtime(other.to_string()),
    }
}

fn need<T: Copy>(opt: Option<T>, flag: &str, quantity: &str) -> Result<T, Failure> {
    opt.ok_or_else(|| Failure::Usage(format!("exact {quantity} needs --{flag}")))
}

fn triple(opt: &Option<Vec<u64>>, flag: &str, quantity: &str) -> Result<[u64; 3], Failure> {
    match opt {
        Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
        Some(v) => Err(Failure::Usage(format!(
            "exact {quantity} needs --{flag} with three comma-separated counts, got {}",
            v.len()
        ))),
        None => Err(Failure::Usage(format!(
            "exact {quantity} needs --{flag} c0,c1,c2"
        ))),
    }
}

struct Computed {
    params: Value,
    value: String,
    provenance: &'static str,
}

fn compute(args: &ExactArgs) -> Result<Computed, Failure> {
    match args.quantity {
        Quantity::M => {
            let m = need(args.m, "m", "M")?;
            let n = need(args.n, "n", "M")?;
            if m > 5000 || n > 2000 {
                return Err(Failure::Runtime(format!(
                    "exact M guards m <= 5000 and n <= 2000, got ({m}, {n})"
                )));
            }
            let value = exact_m(m, n);
            // independent routes must agree exactly where affordable
            if m <= 200
                && n <= 60
                && (value != exact_m_convolution(m, n)
                    || value != exact_m_inclusion_exclusion(m, n))
            {
                return Err(Failure::Runtime(format!(
                    "exact M({m}, {n}): routes disagree"
                )));
            }
            Ok(Computed {
                params: json!({"m": m, "n": n}),
                value: value.to_string(),
                provenance: "CoeffDP",
            })
        }
        Quantity::K => {
            let k = need(args.k, "k", "K")?;
            let m = need(args.m, "m", "K")? as u32;
            let l = triple(&args.l, "l", "K")?;
            let value = exact_k_mod3(k, m, l).map_err(runtime_on_size)?;
            Ok(Computed {
                params: json!({"k": k, "m": m, "l": l}),
                value: value.to_string(),
                provenance: "CoeffDP",
            })
        }
        Quantity::Nhat => {
            let k = need(args.k, "k", "nhat")?;
            let m = need(args.m, "m", "nhat")? as u32;
            let w = triple(&args.w, "w", "nhat")?;
            let l = triple(&args.l, "l", "nhat")?;
            let value = exact_nhat_mod3(k, m, w, l).map_err(runtime_on_size)?;
            Ok(Computed {
                params: json!({"k": k, "m": m, "w": w, "l": l}),
                value: value.to_string(),
                provenance: "CoeffDP",
            })
        }
        Quantity::N => {
            let k = need(args.k, "k", "N")?;
            let n = need(args.n, "n", "N")?;
            let m = need(args.m, "m", "N")? as u32;
            let w = triple(&args.w, "w", "N")?;
            let l = triple(&args.l, "l", "N")?;
            let value = exact_n_mod3(k, n, m, w, l).map_err(runtime_on_size)?;
            Ok(Computed {
                params: json!({"k": k, "n": n, "m": m, "w": w, "l": l}),
                value: value.to_string(),
                provenance: "CoeffDP",
            })
        }
        Quantity::Ex2Mod3 => {
            let k = need(args.k, "k", "ex2-mod3")?;
            let n = need(args.n, "n", "ex2-mod3")?;
            let m = need(args.m, "m", "ex2-mod3")? as u32;
            let value = exact_ex2_mod3(k, n, m).map_err(runtime_on_size)?;
            let provenance = if args.enumerate {
                let enumerated = enumerate_ex2_mod3(k, n as u32, m).map_err(runtime_on_size)?;
                if enumerated.ex2 != value {
                    return Err(Failure::Runtime(format!(
                        "ex2-mod3({k}, {n}, {m}): summation gives {value}, enumeration gives {}",
                        enumerated.ex2
                    )));
                }
                "Enumeration"
            } else {
                "CoeffDP"
            };
            Ok(Computed {
                params: json!({"k": k, "n": n, "m": m, "enumerate": args.enumerate}),
                value: value.to_string(),
                provenance,
            })
        }
        Quantity::KtildeUe => {
            let k = need(args.k, "k", "ktilde-ue")?;
            let d = need(args.d, "d", "ktilde-ue")?;
            let m = need(args.m, "m", "ktilde-ue")? as u32;
            let l = match &args.l {
                Some(v) if v.len() == 1 => v[0],
                _ => {
                    return Err(Failure::Usage(
                        "exact ktilde-ue needs --l with one disagreeing-slot count".into(),
                    ))
                }
            };
            let value = exact_ktilde_ue(k, d, m, l).map_err(runtime_on_size)?;
            Ok(Computed {
                params: json!({"k": k, "d": d, "m": m, "l": l}),
                value: value.to_string(),
                provenance: "CoeffDP",
            })
        }
        Quantity::Ex2Ue => {
            let k = need(args.k, "k", "ex2-ue")?;
            let d = need(args.d, "d", "ex2-ue")?;
            let n = need(args.n, "n", "ex2-ue")?;
            let m = need(args.m, "m", "ex2-ue")? as u32;
            let value = exact_ex2_ue(k, d, n, m).map_err(runtime_on_size)?;
            let provenance = if args.enumerate {
                let enumerated =
                    enumerate_ex2_ue(k, d, n as u32, m).map_err(runtime_on_size)?;
                if enumerated.ex2 != value {
                    return Err(Failure::Runtime(format!(
                        "ex2-ue({k}, {d}, {n}, {m}): summation gives {value}, enumeration gives {}",
                        enumerated.ex2
                    )));
                }
                "Enumeration"
            } else {
                "CoeffDP"
            };
            Ok(Computed {
                params: json!({"k": k, "d": d, "n": n, "m": m, "enumerate": args.enumerate}),
                value: value.to_string(),
                provenance,
            })
        }
        Quantity::Mloc => {
            let m = need(args.m, "m", "mloc")?;
            let n = need(args.n, "n", "mloc")?;
            if m > 5000 || n > 2000 {
                return Err(Failure::Runtime(format!(
                    "exact mloc guards m <= 5000 and n <= 2000, got ({m}, {n})"
                )));
            }
            let value = mloc_ratio(m, n).map_err(runtime_on_size)?;
            Ok(Computed {
                params: json!({"m": m, "n": n}),
                value: value.to_string(),
                provenance: "CoeffDP",
            })
        }
        Quantity::UeFamily => {
            let k = need(args.k, "k", "ue-family")?;
            let d = need(args.d, "d", "ue-family")?;
            let family = enumerate_ue_constraints(k, d).map_err(runtime_on_size)?;
            Ok(Computed {
                params: json!({"k": k, "d": d}),
                value: family.tables.len().to_string(),
                provenance: "Enumeration",
            })
        }
    }
}

/// Computes one exact quantity and wraps it in the standard document.
pub fn run(args: &ExactArgs) -> Result<Outcome, Failure> {
    let computed = compute(args)?;
    let config = json!({
        "subcommand": "exact",
        "quantity": args.quantity,
        "params": computed.params,
    });
    let report = json!({
        "quantity": args.quantity,
        "params": computed.params,
        "value": computed.value,
        "provenance": computed.provenance,
    });
    Ok(Outcome {
        config,
        payload: Payload::Report(report),
        pass: true,
    })
}
