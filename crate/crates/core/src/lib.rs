//! Phasor-domain solver for multiphase networks with high shares of
//! inverter-based resources (IBRs).
//!
//! The crate provides two coupled engines:
//!
//! * a full-Newton multiphase power flow on an augmented nodal formulation,
//!   where grid-following (GFL) and grid-forming (GFM) converters enter as
//!   sequence-domain constraint rows (positive-sequence P/Q or P/|V|
//!   regulation, admittance-like negative- and zero-sequence laws), and
//! * an iterative steady-state short-circuit solver that linearizes the
//!   network around the power-flow point and re-injects converter currents
//!   shaped by their fault-ride-through limiters until the terminal voltages
//!   settle.
//!
//! Two limiter families are modeled: a current-saturation method for GFL
//! units that caps the worst phase while prioritizing negative-sequence
//! support, and an adaptive virtual-impedance control for GFM units that
//! inserts a complex impedance computed in closed form so the converter
//! current lands exactly on its ceiling.
//!
//! Module map:
//!
//! * [`netmodel`] — network data model, validation, per-unit handling
//! * [`seq`] — symmetrical-component transforms and phase/sequence helpers
//! * [`sparse`] — triplet matrix and the sparse LU used by every solve
//! * [`mana`] — augmented system assembly, Newton power flow
//! * [`linearize`] — power-flow-point linearization and Thevenin probing
//! * [`frt`] — fault-ride-through limiters (CSM, VIC) and converter steps
//! * [`scsolver`] — fault stamping, the outer short-circuit loop, sweeps
//! * [`io`] — file formats, report emission

pub mod error;
pub mod frt;
pub mod io;
pub mod linearize;
pub mod mana;
pub mod netmodel;
pub mod phasor;
pub mod scsolver;
pub mod seq;
pub mod sparse;
#[cfg(test)]
pub(crate) mod testnet;

pub use error::{AssemblyError, ParseError, PfError, ScError, SolveError};
pub use frt::{CsmState, IbrOperatingPoint, InfeasibleLimit, LimiterState, VicState};
pub use io::{
    emit_report, parse_network, parse_scenario, resolve_scenario, serialize_network,
    serialize_scenario, NetworkFile, ReportFormat, ReportSource, ResolvedScenario, ScenarioFile,
};
pub use linearize::{linearize, thevenin_at, LinearizedNetwork};
pub use mana::{solve_pf, IndexMap, ManaSystem, PfOptions, PfSolution, PfStart};
pub use netmodel::{
    Branch, Bus, GflLimiter, IbrMode, IbrUnit, Load, LoadModel, NetworkModel, PerUnitBase, Phase,
    PhaseSet, SourceIdeal, Switch, Transformer, WindingConnection,
};
pub use phasor::Phasor;
pub use scsolver::{
    apply_fault, remove_fault, solve_sc, solve_unfaulted, sweep, AppliedFault, FaultKind,
    FaultSpec, ScOptions, ScOutcome, ScResult,
};
pub use seq::{PhaseTriple, SequenceTriple};
