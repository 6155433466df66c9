//! Exact inference for logic programs with annotated disjunctions.
//!
//! A program is parsed ([`parser`]), grounded over the atoms its facts can
//! derive ([`grounder`]) and compiled into binary decision diagrams with
//! complement edges ([`bdd`], [`compile`]). [`infer`] answers marginal,
//! most-probable-explanation and maximum-a-posteriori queries on the
//! diagrams; [`oracle`] answers the same queries by enumerating worlds.

pub mod bdd;
pub mod benchgen;
pub mod cli;
pub mod compile;
pub mod error;
pub mod grounder;
pub mod infer;
pub mod model;
pub mod oracle;
pub mod par;
pub mod parser;

pub use error::{Error, Result};
