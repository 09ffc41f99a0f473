//! Contract state-machine verification.
//!
//! Business contracts are written as communicating party state machines with
//! obligations, rights and considerations ([`dsl`]). The composed system is
//! explored exhaustively ([`kernel`], [`explorer`]) and analysed for design
//! vulnerabilities ([`checkers`]). The [`injector`] plants known flaws for
//! checker validation, and the [`emitter`] renders the model as a TLA+ module.

pub mod checkers;
pub mod cli;
pub mod dsl;
pub mod emitter;
pub mod explorer;
pub mod fixtures;
pub mod injector;
pub mod kernel;
pub mod model;
pub mod report;

pub use dsl::{parse, render, ParseError};
pub use model::{validate_model, ContractModel};
