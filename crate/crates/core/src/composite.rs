//! Composite machine for populations that include ethical types (cost ≥ 1).
//!
//! When the cheapest ethical cost `c*` satisfies the attainability condition
//! `c_1 (c* - 1) <= 2`, every non-ethical type can be pushed (almost) to its
//! commitment payoff `v**` by the following orchestration:
//!
//! 1. **Learning.** Types with cost at most `c*` play an auxiliary
//!    equilibrium machine whose target is `ρ v^L + (1-ρ) v^H`; ethical types
//!    with cost strictly above `c*` play honestly. Receivers follow the
//!    auxiliary prescription and update over the full type set.
//! 2. **Signaling.** At the first history whose posterior rules out every
//!    non-ethical type, each surviving type sends one fixed message — `h`
//!    when `c_1 (c - 1) <= 2`, `l` otherwise — while the receiver plays low
//!    after either message.
//! 3. **Alternation.** After the high signal, play alternates between
//!    (Honest, Trust) and (AlwaysHigh, NeverTrust) so that the discounted
//!    frequency of the trusted outcome equals a frequency `ρ̃` calibrated to
//!    type `c*`'s tracked continuation value at the signaling history.
//! 4. **Punishment.** After the low signal, a [`PunishmentMachine`] delivers
//!    the payoff vector `w(ρ')`, with `ρ'` chosen by [`select_rho_prime`].
//!
//! The alternation realizes its discounted frequency with the greedy
//! digit-by-digit schedule: play the trusted outcome whenever the remaining
//! frequency budget covers one period's weight. This keeps the delivered
//! frequency exact and the promised values consistent at every step.

use crate::bounds::{self, CommitmentAttainability};
use crate::equilibrium::{EquilibriumMachine, EquilibriumState, SUPPORT_CUTOFF};
use crate::error::{GameError, MachineError};
use crate::machine::{
    belief_martingale_residual, promise_keeping_residual, receiver_best_reply_residual, Machine,
    Prescription,
};
use crate::punishment::{PunishmentMachine, PunishmentState};
use crate::stage_game::{
    GameParams, Message, MixedSenderAction, ReceiverAction, SenderAction, StateOfWorld,
};

/// Grid resolution for the punishment-frequency search.
const RHO_PRIME_STEP: f64 = 1e-3;

/// Pick the punishment lie frequency `ρ'`: the smallest grid point in
/// `(ρ*, 1]` (step 10⁻³) such that the punishment payoff `w(ρ')` falls
/// strictly below the learning-phase target `ρ v^L + (1-ρ) v^H` for every
/// type with `c_1 (c - 1) <= 2`, and strictly above it for every type with
/// `c_1 (c - 1) > 2`. Returns `Ok(None)` when the grid is exhausted.
///
/// Requires an attainable ethical type (`c_1 (c* - 1) <= 2`) and `ρ < ρ*`.
pub fn select_rho_prime(params: &GameParams, rho: f64) -> Result<Option<f64>, GameError> {
    match bounds::commitment_attainable(params)? {
        CommitmentAttainability::Attainable { .. } => {}
        CommitmentAttainability::TooCostly { witness } => {
            return Err(GameError::InvalidArgument(format!(
                "commitment payoff not attainable: c_1 (c* - 1) = {} > 2",
                params.costs[0] * (witness - 1.0)
            )));
        }
        CommitmentAttainability::NoEthicalType => {
            return Err(GameError::InvalidArgument(
                "no ethical type: the composite construction is undefined".into(),
            ));
        }
    }
    let rho_star = params.rho_star();
    if !(0.0..rho_star).contains(&rho) {
        return Err(GameError::InvalidArgument(format!(
            "rho must lie in [0, rho_star={rho_star}), got {rho}"
        )));
    }
    let c1 = params.costs[0];
    let (v_h, v_l, _) = bounds::payoff_basis(params);
    let target: Vec<f64> =
        (0..params.n_types()).map(|j| (1.0 - rho) * v_h[j] + rho * v_l[j]).collect();

    let admissible = |rho_prime: f64| -> bool {
        let w = bounds::w_of_rho_prime_in(&params.p_h, &params.costs, &rho_prime);
        (0..params.n_types()).all(|j| {
            if c1 * (params.costs[j] - 1.0) <= 2.0 {
                w[j] < target[j]
            } else {
                w[j] > target[j]
            }
        })
    };

    let mut k = 1u64;
    loop {
        let rho_prime = rho_star + k as f64 * RHO_PRIME_STEP;
        if rho_prime > 1.0 {
            break;
        }
        if admissible(rho_prime) {
            return Ok(Some(rho_prime));
        }
        k += 1;
    }
    if admissible(1.0) {
        return Ok(Some(1.0));
    }
    Ok(None)
}

/// Orchestration stage of the composite machine.
#[derive(Clone, Debug, PartialEq)]
pub enum CompositeStage {
    /// Auxiliary equilibrium play while non-ethical types remain plausible.
    Learning { aux: EquilibriumState },
    /// The single separating period after non-ethical types are ruled out;
    /// carries the trusted-outcome frequency promised after the high signal.
    Signaling { rho_tilde: f64 },
    /// Deterministic alternation delivering the trusted outcome with the
    /// stored discounted frequency.
    Alternation { freq: f64 },
    /// Punishment continuation for types that separated with the low signal.
    Punishing { inner: PunishmentState },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeState {
    pub stage: CompositeStage,
    /// Receivers' posterior over the full type set.
    pub posterior: Vec<f64>,
}

/// The orchestrated machine of the module doc; see [`construct_composite`].
#[derive(Clone, Debug)]
pub struct CompositeMachine {
    pub params: GameParams,
    /// Learning-phase lie frequency, strictly below `ρ*`.
    pub rho: f64,
    /// Punishment lie frequency from [`select_rho_prime`].
    pub rho_prime: f64,
    /// Auxiliary machine over the types with cost at most `c*`.
    aux: EquilibriumMachine,
    /// Punishment machine over the types with `c_1 (c - 1) > 2`, when any.
    punisher: Option<PunishmentMachine>,
    /// Full-population payoff bases.
    v_h: Vec<f64>,
    v_l: Vec<f64>,
    v_n: Vec<f64>,
    /// Cheapest ethical cost.
    c_star: f64,
    /// First full index whose cost is at most `c_star` (start of the
    /// auxiliary block; costs are sorted descending).
    aux_start: usize,
    /// Number of types with `c_1 (c - 1) > 2` (a prefix of the cost order).
    n_costly: usize,
    /// Per-type signaling message: `true` sends `h`, `false` sends `l`.
    signal_high: Vec<bool>,
    /// Punishment entry weights of `w(ρ')` on (v^H, v^N).
    w_init: (f64, f64),
}

/// Build the composite machine at learning frequency `rho`, selecting the
/// punishment frequency internally. Errors when [`select_rho_prime`]'s
/// preconditions fail or its grid search comes up empty.
pub fn construct_composite(params: &GameParams, rho: f64) -> Result<CompositeMachine, MachineError> {
    let rho_prime = select_rho_prime(params, rho)?.ok_or_else(|| {
        GameError::InvalidArgument(
            "no admissible punishment frequency rho' on the grid".into(),
        )
    })?;
    CompositeMachine::new(params.clone(), rho, rho_prime)
}

impl CompositeMachine {
    pub fn new(params: GameParams, rho: f64, rho_prime: f64) -> Result<Self, MachineError> {
        params.validate().map_err(GameError::from)?;
        let c_star = match bounds::commitment_attainable(&params).map_err(GameError::from)? {
            CommitmentAttainability::Attainable { witness } => witness,
            other => {
                return Err(GameError::InvalidArgument(format!(
                    "composite machine requires an attainable ethical type, got {other:?}"
                ))
                .into())
            }
        };
        let n = params.n_types();
        let c1 = params.costs[0];
        let aux_start = params
            .costs
            .iter()
            .position(|&c| c <= c_star)
            .expect("c_star is one of the costs");
        let aux_mass: f64 = params.prior[aux_start..].iter().sum();
        let aux_params = GameParams::new(
            params.p_h,
            params.delta,
            params.costs[aux_start..].to_vec(),
            params.prior[aux_start..].iter().map(|&q| q / aux_mass).collect(),
            params.view,
        )
        .map_err(GameError::from)?;
        let aux = EquilibriumMachine::new_auxiliary(aux_params, rho, [1.0 - rho, rho, 0.0])?;

        let n_costly = params.costs.iter().filter(|&&c| c1 * (c - 1.0) > 2.0).count();
        let punisher = if n_costly > 0 {
            let mass: f64 = params.prior[..n_costly].iter().sum();
            let sub = GameParams::new(
                params.p_h,
                params.delta,
                params.costs[..n_costly].to_vec(),
                params.prior[..n_costly].iter().map(|&q| q / mass).collect(),
                params.view,
            )
            .map_err(GameError::from)?;
            Some(PunishmentMachine::new(sub, rho_prime)?)
        } else {
            None
        };

        let signal_high: Vec<bool> =
            params.costs.iter().map(|&c| c1 * (c - 1.0) <= 2.0).collect();
        let (v_h, v_l, v_n) = bounds::payoff_basis(&params);
        let (w_h, w_n, _) = bounds::w_weights(&params, rho_prime);
        let _ = n;
        Ok(CompositeMachine {
            params,
            rho,
            rho_prime,
            aux,
            punisher,
            v_h,
            v_l,
            v_n,
            c_star,
            aux_start,
            n_costly,
            signal_high,
            w_init: (w_h, w_n),
        })
    }

    /// Posterior mass on non-ethical types (cost strictly below 1).
    fn nonethical_mass(&self, posterior: &[f64]) -> f64 {
        posterior
            .iter()
            .zip(self.params.costs.iter())
            .filter(|(_, &c)| c < 1.0)
            .map(|(&q, _)| q)
            .sum()
    }

    /// Trusted-outcome frequency after the high signal, from type `c*`'s
    /// continuation value `v` at the signaling history:
    /// `v = -(1-δ)(1-p_h)c* + δ (ρ̃ p_h - (1-ρ̃)(1-p_h)c*)`.
    fn rho_tilde_from_value(&self, v: f64) -> f64 {
        let p_h = self.params.p_h;
        let lie = (1.0 - p_h) * self.c_star;
        ((v + lie) / (self.params.delta * (p_h + lie))).clamp(0.0, 1.0)
    }

    /// Payoff vector of the alternation at trusted frequency `f`.
    fn alternation_value(&self, f: f64, j: usize) -> f64 {
        f * self.v_h[j] + (1.0 - f) * self.v_n[j]
    }

    /// Punishment entry payoff `w(ρ')` for full type index `j`.
    fn punish_entry_value(&self, j: usize) -> f64 {
        self.w_init.0 * self.v_h[j] + self.w_init.1 * self.v_n[j]
    }

    /// Whether the alternation plays the trusted outcome this period.
    fn alternation_trusted(&self, freq: f64) -> bool {
        freq >= 1.0 - self.params.delta
    }

    /// The signaling-period message of full type `j`.
    fn signal_message(&self, j: usize) -> Message {
        if self.signal_high[j] {
            Message::High
        } else {
            Message::Low
        }
    }

    fn step_learning(
        &self,
        state: &CompositeState,
        aux_state: &EquilibriumState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<CompositeState, MachineError> {
        let prescription = self.prescribe(state)?;
        let n = self.params.n_types();
        let mut posterior: Vec<f64> = (0..n)
            .map(|j| state.posterior[j] * prescription.message_prob(j, omega, message))
            .collect();
        let total: f64 = posterior.iter().sum();
        if total > SUPPORT_CUTOFF {
            for q in posterior.iter_mut() {
                *q /= total;
            }
        } else {
            // A zero-likelihood observation is a deviation: beliefs freeze and
            // the auxiliary machine's own deviation mapping takes over.
            posterior = state.posterior.clone();
        }
        let aux_next = self.aux.step(aux_state, omega, message)?;
        if self.nonethical_mass(&posterior) < SUPPORT_CUTOFF {
            let v_c_star = self.aux.continuation_value(&aux_next)[0];
            return Ok(CompositeState {
                stage: CompositeStage::Signaling { rho_tilde: self.rho_tilde_from_value(v_c_star) },
                posterior,
            });
        }
        Ok(CompositeState { stage: CompositeStage::Learning { aux: aux_next }, posterior })
    }

    fn step_signaling(
        &self,
        state: &CompositeState,
        rho_tilde: f64,
        message: Message,
    ) -> Result<CompositeState, MachineError> {
        let n = self.params.n_types();
        let mut posterior: Vec<f64> = (0..n)
            .map(|j| {
                if self.signal_message(j) == message {
                    state.posterior[j]
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = posterior.iter().sum();
        if total <= SUPPORT_CUTOFF {
            return Err(MachineError::OffPath(format!(
                "signaling message {message:?} has zero prior probability"
            )));
        }
        for q in posterior.iter_mut() {
            *q /= total;
        }
        match message {
            Message::High => Ok(CompositeState {
                stage: CompositeStage::Alternation { freq: rho_tilde },
                posterior,
            }),
            Message::Low => {
                let punisher = self.punisher.as_ref().ok_or_else(|| {
                    MachineError::OffPath(
                        "low signal observed but no type separates downward".into(),
                    )
                })?;
                let sub_posterior = posterior[..self.n_costly].to_vec();
                let inner = punisher.start_state(sub_posterior);
                Ok(CompositeState { stage: CompositeStage::Punishing { inner }, posterior })
            }
        }
    }

    fn step_alternation(
        &self,
        state: &CompositeState,
        freq: f64,
        omega: StateOfWorld,
        message: Message,
    ) -> CompositeState {
        let delta = self.params.delta;
        let next_freq = if self.alternation_trusted(freq) {
            if message == SenderAction::Honest.message(omega) {
                ((freq - (1.0 - delta)) / delta).max(0.0)
            } else {
                // Deviation from honesty: fall to the untrusted absorbing tail.
                0.0
            }
        } else if message == Message::High {
            (freq / delta).min(1.0)
        } else {
            0.0
        };
        CompositeState {
            stage: CompositeStage::Alternation { freq: next_freq },
            posterior: state.posterior.clone(),
        }
    }
}

impl Machine for CompositeMachine {
    type State = CompositeState;

    fn initial_state(&self) -> CompositeState {
        CompositeState {
            stage: CompositeStage::Learning { aux: self.aux.initial_state() },
            posterior: self.params.prior.clone(),
        }
    }

    fn n_types(&self) -> usize {
        self.params.n_types()
    }

    fn prescribe(&self, state: &CompositeState) -> Result<Prescription, MachineError> {
        let n = self.params.n_types();
        match &state.stage {
            CompositeStage::Learning { aux } => {
                let inner = self.aux.prescribe(aux)?;
                let sender = (0..n)
                    .map(|j| {
                        if j < self.aux_start {
                            MixedSenderAction::pure(SenderAction::Honest)
                        } else {
                            inner.sender[j - self.aux_start].clone()
                        }
                    })
                    .collect();
                Ok(Prescription { receiver: inner.receiver, sender })
            }
            CompositeStage::Signaling { .. } => Ok(Prescription {
                receiver: ReceiverAction::NeverTrust,
                sender: (0..n)
                    .map(|j| {
                        MixedSenderAction::pure(if self.signal_high[j] {
                            SenderAction::AlwaysHigh
                        } else {
                            SenderAction::AlwaysLow
                        })
                    })
                    .collect(),
            }),
            CompositeStage::Alternation { freq } => {
                if self.alternation_trusted(*freq) {
                    Ok(Prescription {
                        receiver: ReceiverAction::Trust,
                        sender: vec![MixedSenderAction::pure(SenderAction::Honest); n],
                    })
                } else {
                    Ok(Prescription {
                        receiver: ReceiverAction::NeverTrust,
                        sender: vec![MixedSenderAction::pure(SenderAction::AlwaysHigh); n],
                    })
                }
            }
            CompositeStage::Punishing { inner } => {
                let sub = self.punisher.as_ref().expect("punishing stage requires punisher");
                let pres = sub.prescribe(inner)?;
                let sender = (0..n)
                    .map(|j| {
                        if j < self.n_costly {
                            pres.sender[j].clone()
                        } else {
                            MixedSenderAction::pure(SenderAction::Honest)
                        }
                    })
                    .collect();
                Ok(Prescription { receiver: pres.receiver, sender })
            }
        }
    }

    fn step(
        &self,
        state: &CompositeState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<CompositeState, MachineError> {
        match &state.stage {
            CompositeStage::Learning { aux } => self.step_learning(state, aux, omega, message),
            CompositeStage::Signaling { rho_tilde } => {
                self.step_signaling(state, *rho_tilde, message)
            }
            CompositeStage::Alternation { freq } => {
                Ok(self.step_alternation(state, *freq, omega, message))
            }
            CompositeStage::Punishing { inner } => {
                let sub = self.punisher.as_ref().expect("punishing stage requires punisher");
                let next = sub.step(inner, omega, message)?;
                let mut posterior = vec![0.0; self.params.n_types()];
                posterior[..self.n_costly].copy_from_slice(&next.posterior);
                Ok(CompositeState { stage: CompositeStage::Punishing { inner: next }, posterior })
            }
        }
    }

    fn continuation_value(&self, state: &CompositeState) -> Vec<f64> {
        let n = self.params.n_types();
        match &state.stage {
            CompositeStage::Learning { aux } => {
                let inner = self.aux.continuation_value(aux);
                let w = aux.weights;
                (0..n)
                    .map(|j| {
                        if j < self.aux_start {
                            // Tracked surrogate for ethical types above c*:
                            // the auxiliary weights applied to their own cost.
                            w[0] * self.v_h[j] + w[1] * self.v_l[j] + w[2] * self.v_n[j]
                        } else {
                            inner[j - self.aux_start]
                        }
                    })
                    .collect()
            }
            CompositeStage::Signaling { rho_tilde } => {
                let delta = self.params.delta;
                let p_h = self.params.p_h;
                (0..n)
                    .map(|j| {
                        let m = self.signal_message(j);
                        let stage = p_h
                            * crate::machine::message_payoff(
                                &self.params,
                                self.params.costs[j],
                                StateOfWorld::High,
                                m,
                                ReceiverAction::NeverTrust,
                            )
                            + (1.0 - p_h)
                                * crate::machine::message_payoff(
                                    &self.params,
                                    self.params.costs[j],
                                    StateOfWorld::Low,
                                    m,
                                    ReceiverAction::NeverTrust,
                                );
                        let cont = if self.signal_high[j] {
                            self.alternation_value(*rho_tilde, j)
                        } else {
                            self.punish_entry_value(j)
                        };
                        (1.0 - delta) * stage + delta * cont
                    })
                    .collect()
            }
            CompositeStage::Alternation { freq } => {
                (0..n).map(|j| self.alternation_value(*freq, j)).collect()
            }
            CompositeStage::Punishing { inner } => {
                (0..n).map(|j| inner.weights[0] * self.v_h[j] + inner.weights[1] * self.v_n[j]).collect()
            }
        }
    }

    fn posterior(&self, state: &CompositeState) -> Vec<f64> {
        state.posterior.clone()
    }

    fn phase_label(&self, state: &CompositeState) -> &'static str {
        match &state.stage {
            CompositeStage::Learning { aux } => match aux.phase {
                crate::equilibrium::Phase::Class1 => "learn_class1",
                crate::equilibrium::Phase::Class2 => "learn_class2",
                crate::equilibrium::Phase::Rebounding => "learn_rebounding",
                crate::equilibrium::Phase::Absorbing => "learn_absorbing",
            },
            CompositeStage::Signaling { .. } => "signaling",
            CompositeStage::Alternation { .. } => "alternation",
            CompositeStage::Punishing { inner } => {
                let sub = self.punisher.as_ref().expect("punishing stage requires punisher");
                sub.phase_label(inner)
            }
        }
    }

    fn is_absorbed(&self, state: &CompositeState) -> bool {
        match &state.stage {
            CompositeStage::Learning { aux } => self.aux.is_absorbed(aux),
            CompositeStage::Signaling { .. } => false,
            CompositeStage::Alternation { .. } => true,
            CompositeStage::Punishing { inner } => {
                self.punisher.as_ref().expect("punishing stage requires punisher").is_absorbed(inner)
            }
        }
    }

    fn invariant_residuals(&self, state: &CompositeState) -> Vec<(&'static str, f64, f64)> {
        let sum: f64 = state.posterior.iter().sum();
        let mut out = vec![("posterior_simplex", (sum - 1.0).abs(), 1e-9)];
        match &state.stage {
            CompositeStage::Learning { aux } => {
                out.extend(self.aux.invariant_residuals(aux));
                out.push((
                    "receiver_best_reply_full",
                    receiver_best_reply_residual(self, &self.params, state),
                    1e-9,
                ));
                out.push((
                    "belief_martingale_full",
                    belief_martingale_residual(self, state),
                    1e-12,
                ));
            }
            CompositeStage::Signaling { rho_tilde } => {
                out.push((
                    "promise_keeping",
                    promise_keeping_residual(self, &self.params, state),
                    1e-9,
                ));
                out.push((
                    "receiver_best_reply",
                    receiver_best_reply_residual(self, &self.params, state),
                    1e-9,
                ));
                out.push((
                    "signal_frequency_in_range",
                    (-rho_tilde).max(rho_tilde - 1.0).max(0.0),
                    1e-12,
                ));
            }
            CompositeStage::Alternation { freq } => {
                out.push((
                    "promise_keeping",
                    promise_keeping_residual(self, &self.params, state),
                    1e-9,
                ));
                out.push((
                    "receiver_best_reply",
                    receiver_best_reply_residual(self, &self.params, state),
                    1e-9,
                ));
                out.push((
                    "alternation_frequency_in_range",
                    (-freq).max(freq - 1.0).max(0.0),
                    1e-12,
                ));
            }
            CompositeStage::Punishing { inner } => {
                let sub = self.punisher.as_ref().expect("punishing stage requires punisher");
                out.extend(sub.invariant_residuals(inner));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage_game::CostView;
    use approx::assert_abs_diff_eq;

    fn ethical_params() -> GameParams {
        GameParams::new(0.25, 0.99, vec![1.5, 0.5], vec![0.5, 0.5], CostView::NonConsequentialist)
            .unwrap()
    }

    fn three_type_params() -> GameParams {
        GameParams::new(
            0.25,
            0.99,
            vec![3.0, 1.2, 0.5],
            vec![0.2, 0.3, 0.5],
            CostView::NonConsequentialist,
        )
        .unwrap()
    }

    fn check_invariants(m: &CompositeMachine, s: &CompositeState, context: &str) {
        for (name, residual, tol) in m.invariant_residuals(s) {
            assert!(
                residual <= tol,
                "{context}: invariant {name} residual {residual} exceeds {tol}"
            );
        }
    }

    /// Drive repeated low states with truthful low messages until the belief
    /// cap rules out the non-ethical types and the signaling period arrives.
    fn drive_to_signaling(m: &CompositeMachine) -> CompositeState {
        let mut s = m.initial_state();
        for _ in 0..2000 {
            if matches!(s.stage, CompositeStage::Signaling { .. }) {
                return s;
            }
            s = m.step(&s, StateOfWorld::Low, Message::Low).unwrap();
        }
        panic!("signaling stage not reached; final stage {:?}", s.stage);
    }

    #[test]
    fn selects_the_first_grid_point_for_the_two_type_population() {
        let params = ethical_params();
        let rho_prime = select_rho_prime(&params, 0.3).unwrap().unwrap();
        assert_abs_diff_eq!(rho_prime, 1.0 / 3.0 + 1e-3, epsilon = 1e-12);
        // At rho' just above rho*, the cheap type's punishment payoff is near
        // vunder(0.5) = p_h (c_1 - c_2) / (1 + c_1) = 0.10, well below its
        // learning-phase target 0.7 v^H + 0.3 v^L = 0.3625.
        let w = bounds::w_of_rho_prime(&params, rho_prime).unwrap();
        assert!((w[1] - 0.10).abs() < 5e-3);
    }

    #[test]
    fn preconditions_reject_missing_or_unattainable_ethical_types() {
        let no_ethical =
            GameParams::new(0.25, 0.99, vec![0.5, 0.2], vec![0.5, 0.5], CostView::NonConsequentialist)
                .unwrap();
        assert!(select_rho_prime(&no_ethical, 0.3).is_err());

        let too_costly =
            GameParams::new(0.25, 0.99, vec![3.5, 0.5], vec![0.5, 0.5], CostView::NonConsequentialist)
                .unwrap();
        assert!(select_rho_prime(&too_costly, 0.3).is_err());

        let params = ethical_params();
        assert!(select_rho_prime(&params, params.rho_star()).is_err());
    }

    #[test]
    fn learning_phase_plays_the_auxiliary_equilibrium() {
        let m = construct_composite(&ethical_params(), 0.3).unwrap();
        let s = m.initial_state();
        assert_eq!(m.phase_label(&s), "learn_class1");
        let pres = m.prescribe(&s).unwrap();
        assert_eq!(pres.receiver, ReceiverAction::Trust);
        // Both types sit in the auxiliary block here (no type above c*), so
        // both mix between honesty and the high report in the low state.
        for j in 0..2 {
            let lie = pres.message_prob(j, StateOfWorld::Low, Message::High);
            assert!(lie > 0.0 && lie < 1.0, "type {j} should mix, got {lie}");
        }
        check_invariants(&m, &s, "initial");
    }

    #[test]
    fn truthful_low_reports_lead_to_signaling_then_alternation() {
        let m = construct_composite(&ethical_params(), 0.3).unwrap();
        let s = drive_to_signaling(&m);
        // Non-ethical types are ruled out; all mass sits on the ethical type.
        assert!(s.posterior[1] < 1e-12);
        assert_abs_diff_eq!(s.posterior[0], 1.0, epsilon = 1e-9);
        let pres = m.prescribe(&s).unwrap();
        assert_eq!(pres.receiver, ReceiverAction::NeverTrust);
        assert_abs_diff_eq!(
            pres.message_prob(0, StateOfWorld::Low, Message::High),
            1.0,
            epsilon = 0.0
        );
        check_invariants(&m, &s, "signaling");

        let CompositeStage::Signaling { rho_tilde } = s.stage else { unreachable!() };
        assert!((0.0..=1.0).contains(&rho_tilde), "rho_tilde = {rho_tilde}");
        let next = m.step(&s, StateOfWorld::Low, Message::High).unwrap();
        let CompositeStage::Alternation { freq } = next.stage else {
            panic!("expected alternation, got {:?}", next.stage)
        };
        assert_abs_diff_eq!(freq, rho_tilde, epsilon = 0.0);
        check_invariants(&m, &next, "alternation entry");
    }

    #[test]
    fn alternation_delivers_its_discounted_frequency_exactly() {
        let m = construct_composite(&ethical_params(), 0.3).unwrap();
        let delta = m.params.delta;
        let mut s = CompositeState {
            stage: CompositeStage::Alternation { freq: 0.37 },
            posterior: vec![1.0, 0.0],
        };
        let mut delivered = 0.0;
        let mut weight = 1.0 - delta;
        for t in 0..3000 {
            let pres = m.prescribe(&s).unwrap();
            if pres.receiver == ReceiverAction::Trust {
                delivered += weight;
            }
            weight *= delta;
            if t < 5 {
                check_invariants(&m, &s, "alternation step");
            }
            // Follow the prescription in a low state: honest types report l,
            // the untrusted block reports h.
            let msg = if pres.receiver == ReceiverAction::Trust { Message::Low } else { Message::High };
            s = m.step(&s, StateOfWorld::Low, msg).unwrap();
        }
        // delta^3000 < 1e-13, so the tail truncation is negligible.
        assert_abs_diff_eq!(delivered, 0.37, epsilon = 1e-9);
    }

    #[test]
    fn low_signal_routes_the_costliest_type_into_punishment() {
        let params = three_type_params();
        let m = construct_composite(&params, 0.3).unwrap();
        // The c = 3 type fails c_1 (c - 1) <= 2 and separates with message l.
        let s = drive_to_signaling(&m);
        assert!(s.posterior[2] < 1e-12, "non-ethical mass survived: {:?}", s.posterior);
        let punished = m.step(&s, StateOfWorld::High, Message::Low).unwrap();
        assert!(matches!(punished.stage, CompositeStage::Punishing { .. }));
        assert_abs_diff_eq!(punished.posterior[0], 1.0, epsilon = 1e-12);
        check_invariants(&m, &punished, "punishment entry");
        // w(rho') pins the highest-cost type's payoff at zero.
        let v = m.continuation_value(&punished);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-9);

        // The punishment continuation keeps running under its own mechanics.
        let mut inner = punished;
        for _ in 0..50 {
            inner = m.step(&inner, StateOfWorld::Low, Message::High).unwrap();
            assert!(m.continuation_value(&inner)[0] >= -1e-9);
        }
    }

    #[test]
    fn ethical_types_above_c_star_report_honestly_while_learning() {
        let m = construct_composite(&three_type_params(), 0.3).unwrap();
        let s = m.initial_state();
        let pres = m.prescribe(&s).unwrap();
        // Type c = 3 sits above c* = 1.2 and never lies during learning.
        assert_abs_diff_eq!(
            pres.message_prob(0, StateOfWorld::Low, Message::Low),
            1.0,
            epsilon = 0.0
        );
        check_invariants(&m, &s, "three-type initial");

        // A lie instantly removes the honest ethical block from the posterior.
        let next = m.step(&s, StateOfWorld::Low, Message::High).unwrap();
        assert!(next.posterior[0] < 1e-15, "honest type should be ruled out");
        check_invariants(&m, &next, "after first lie");
    }
}
