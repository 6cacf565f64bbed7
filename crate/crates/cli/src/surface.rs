//! The `surface` subcommand: samples one of the three OPT figure
//! families on a regular grid and emits the rows.

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use satlab_core::{moment_mod3, moment_ue};

use crate::defaults;
use crate::output::{Failure, Outcome, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Three-symbol OPT(1,a,a,1,c,c,s) over (a, c) in [0,1] x [0,1].
    Fig1,
    /// Table-model OPT(a,1,c,s) over (a, c) in [0,1] x [0,3].
    Fig2,
    /// Table-model OPT(1,b,1/c,s) over (b, c) in [0,1] x (0,1/3].
    Fig3,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// Figure family to sample.
    #[arg(value_enum)]
    pub family: Family,
    /// Generating-function parameter of the surface (3 and 14 are the
    /// conventional pair).
    #[arg(long, default_value_t = defaults::SURFACE_S)]
    pub s: f64,
    /// Grid points per axis; the output has resolution^2 rows.
    #[arg(long, default_value_t = defaults::RESOLUTION)]
    pub resolution: usize,
}

/// Samples the requested family. Axes are inclusive of their endpoints
/// except the third family's c-axis, which starts one step above zero
/// because OPT grows without bound as c drops to zero.
pub fn run(args: &SurfaceArgs) -> Result<Outcome, Failure> {
    let res = args.resolution;
    if res < 2 {
        return Err(Failure::Usage(format!(
            "surface needs --resolution >= 2, got {res}"
        )));
    }
    if !(args.s.is_finite() && args.s > 0.0) {
        return Err(Failure::Usage(format!(
            "surface needs a positive s, got {}",
            args.s
        )));
    }
    let s = args.s;
    let step = |i: usize| i as f64 / (res - 1) as f64;
    let mut rows = Vec::with_capacity(res * res);
    let header = match args.family {
        Family::Fig1 => {
            for i in 0..res {
                let a = step(i);
                for j in 0..res {
                    let c = step(j);
                    let opt = moment_mod3::opt_mod3(s, &[1.0, a, a], &[1.0, c, c]);
                    rows.push(vec![
                        a.to_string(),
                        c.to_string(),
                        s.to_string(),
                        opt.to_string(),
                    ]);
                }
            }
            ["a", "c", "s", "opt"]
        }
        Family::Fig2 => {
            for i in 0..res {
                let a = step(i);
                for j in 0..res {
                    let c = 3.0 * step(j);
                    let opt = moment_ue::opt_ue(s, 4, a, 1.0, c);
                    rows.push(vec![
                        a.to_string(),
                        c.to_string(),
                        s.to_string(),
                        opt.to_string(),
                    ]);
                }
            }
            ["a", "c", "s", "opt"]
        }
        Family::Fig3 => {
            for i in 0..res {
                let b = step(i);
                for j in 0..res {
                    let c = (j + 1) as f64 / res as f64 / 3.0;
                    let opt = moment_ue::opt_ue(s, 4, 1.0, b, 1.0 / c);
                    rows.push(vec![
                        b.to_string(),
                        c.to_string(),
                        s.to_string(),
                        opt.to_string(),
                    ]);
                }
            }
            ["b", "c", "s", "opt"]
        }
    };
    let config = json!({
        "subcommand": "surface",
        "family": args.family,
        "params": {"s": s, "resolution": res},
    });
    Ok(Outcome {
        config,
        payload: Payload::Table {
            header: header.to_vec(),
            rows,
        },
        pass: true,
    })
}
