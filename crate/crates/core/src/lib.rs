//! Numerical vector representation of PEPA models.
//!
//! A parsed [`model::PepaModel`] is turned into labelled activities, the
//! activity matrices `C`, `C^Pre`, `C^Post` and one transition rate function
//! per labelled activity ([`derivation`]). Everything downstream works on that
//! representation: explicit state-space enumeration and CTMC solution
//! ([`statespace`]), Gillespie simulation with reward accumulation
//! ([`simulate`]), the fluid ODE approximation ([`fluid`]) and the
//! underlying Place/Transition system ([`ptnet`]).

pub mod model;
pub mod derivation;
pub mod statespace;
pub mod simulate;
pub mod fluid;
pub mod ptnet;

pub use num_bigint::BigUint;

/// Quotes a CSV field when it contains a separator or quote.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
