//! Exact counting of constraint systems and second-moment summands.
//!
//! Everything in this module is integer/rational arithmetic with no
//! floating point: occupancy counts ([`counts`]), solution-pair counts
//! for equations mod 3 with a full-enumeration cross-check ([`mod3`]),
//! and uniquely extendible constraint tables with their pair statistics
//! ([`ue`]). These serve as ground-truth oracles for the asymptotic
//! machinery in the moment modules.

pub mod counts;
pub mod mod3;
pub mod ue;

pub use counts::{exact_m, ln_big, mloc_ln, mloc_ratio};
pub use mod3::{enumerate_ex2_mod3, exact_ex2_mod3, exact_k_mod3, exact_n_mod3, exact_nhat_mod3};
pub use ue::{enumerate_ex2_ue, enumerate_ue_constraints, exact_ex2_ue, exact_ktilde_ue};
