//! Stress contagion in small human-robot teams.
//!
//! Mission scenarios are written as decision tables and compiled into
//! reduced decision diagrams ([`dd`]). Stress spreads between human
//! teammates by a discrete-time SIS process ([`sis`]); robots only detect
//! it. Marginal stress probabilities come from sum-product message passing
//! over factor graphs ([`fg`]), and the [`scenario`] engine ties the pieces
//! together into mission runs, replays and failure estimates.

pub mod cli;
pub mod dd;
pub mod fg;
pub mod logic;
pub mod pla;
pub mod scenario;
pub mod sis;

pub use dd::{DdCount, Manager, NodeRef, PathCube};
pub use logic::{
    BinaryState, Decision, DecisionTable, Expr, ResponseRule, StressResponse, TeammateId, TeammateKind, Ternary,
};
