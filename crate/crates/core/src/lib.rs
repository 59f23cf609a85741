//! Repeated sender-receiver communication games with persistent lying costs.
//!
//! A sender privately observes a binary state each period and sends a cheap-talk
//! message; a receiver chooses whether to act on it. The sender's type is a
//! persistent per-lie cost. This crate provides:
//!
//! * the stage game (payoffs, best replies) under two lying-cost conventions,
//! * closed-form equilibrium payoff bounds in both `f64` and exact rationals,
//! * a linear program over occupation measures whose value matches the bounds,
//! * explicit equilibrium and punishment state machines with belief tracking,
//! * a seeded Monte Carlo simulator over those machines, and
//! * a verifier that checks equilibrium invariants on simulated play.

pub mod bounds;
pub mod composite;
pub mod constants;
pub mod equilibrium;
pub mod error;
pub mod machine;
pub mod occupation_lp;
pub mod punishment;
pub mod scalar;
pub mod simplex;
pub mod simulator;
pub mod stage_game;
pub mod verifier;

pub use bounds::PolytopeVStar;
pub use composite::{
    construct_composite, select_rho_prime, CompositeMachine, CompositeStage, CompositeState,
};
pub use constants::DerivedConstants;
pub use equilibrium::{EquilibriumMachine, EquilibriumState, Phase};
pub use error::{GameError, LpError, MachineError};
pub use machine::{Machine, Prescription};
pub use occupation_lp::{
    check_feasible, occupation_measure, solve as solve_lp, JointDistribution, OccupationMeasure,
    ProgramKind, ProgramSpec,
};
pub use punishment::{PunishmentMachine, PunishmentPhase, PunishmentState};
pub use scalar::Scalar;
pub use simulator::{PathEnsemble, PathRecord, SimConfig};
pub use verifier::{
    class1_eta_drift, detect_always_mixing, kl_diagnostic, reputation_growth_factor, verify_trace,
    CheckResult, MixingReport, VerificationReport,
};
pub use stage_game::{
    Action, CostView, GameParams, Message, MixedSenderAction, ReceiverAction, SenderAction,
    StateOfWorld,
};
