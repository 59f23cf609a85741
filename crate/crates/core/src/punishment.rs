//! The punishment state machine: a continuation equilibrium that holds the
//! highest-cost type exactly to payoff zero while inducing lying at a
//! frequency above the trust threshold.
//!
//! Structurally it mirrors the equilibrium machine with the roles of lying
//! and honesty swapped. Continuation payoffs decompose over the basis
//! (v^H, v^N, v^O): the fully-trusted-honesty vector, the untrusted-lying
//! vector, and the zero vector of untrusted honesty. The receiver never
//! trusts while the weight on v^O is being worked off; a sender builds a
//! reputation for *low* costs (mass `zeta` on the cheapest type) by lying,
//! and the machine rewards the lie branch with weight shifted toward v^H.
//!
//! Phases:
//!
//! * **Class 1** (both `pN` and `pO` at least `1−δ̂`): no trust; every type
//!   mixes, the cheapest lying the most, with belief drift mirroring the
//!   equilibrium machine's reputation updates.
//! * **Class 2** (`pO < 1−δ̂ ≤ pN`): no trust; only the highest-cost
//!   survivor still tells the truth (with positive probability), and a
//!   truthful low report reveals it and cashes the remaining weights out at
//!   its exact indifference point.
//! * **Class 2N** (`pN < 1−δ̂ ≤ pO`): no trust; only the cheapest type
//!   still lies, and a lie reveals it and cashes out at its indifference
//!   point.
//! * **Absorbing** (`pO = 0`): identical mechanics to the equilibrium
//!   machine's absorbing phase, alternating (Honest, Trust) and
//!   (AlwaysHigh, NeverTrust) blocks at discount δ.
//!
//! Detected deviations restart the machine at its initial weights (beliefs
//! kept), which is unprofitable because promised values never decrease along
//! the punishment path.

use crate::bounds;
use crate::error::{GameError, MachineError};
use crate::machine::{
    belief_martingale_residual, indifference_residual, promise_keeping_residual,
    receiver_best_reply_residual, Machine, Prescription,
};
use crate::stage_game::{GameParams, Message, MixedSenderAction, ReceiverAction, StateOfWorld};

/// Posterior mass below this is treated as exactly zero.
const SUPPORT_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum PunishmentPhase {
    Class1,
    Class2,
    Class2N,
    Absorbing,
}

impl PunishmentPhase {
    pub fn label(self) -> &'static str {
        match self {
            PunishmentPhase::Class1 => "p_class1",
            PunishmentPhase::Class2 => "p_class2",
            PunishmentPhase::Class2N => "p_class2n",
            PunishmentPhase::Absorbing => "p_absorbing",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PunishmentState {
    pub phase: PunishmentPhase,
    /// Receivers' posterior over types; the mass on the last (cheapest) type
    /// is the lying reputation `zeta`.
    pub posterior: Vec<f64>,
    /// Weights (pH, pN, pO) on (v^H, v^N, v^O).
    pub weights: [f64; 3],
    /// Per-type count of past Class-2 low-state periods while that type was
    /// the highest-cost survivor.
    pub honesty_counters: Vec<u32>,
}

impl PunishmentState {
    /// Posterior mass on the cheapest type.
    pub fn zeta(&self) -> f64 {
        *self.posterior.last().expect("nonempty posterior")
    }

    /// Index of the highest-cost type still in the support.
    pub fn highest_cost_index(&self) -> usize {
        (0..self.posterior.len())
            .find(|&j| self.posterior[j] > SUPPORT_CUTOFF)
            .expect("posterior has support")
    }

    fn is_point(&self) -> bool {
        self.posterior.iter().filter(|&&q| q > SUPPORT_CUTOFF).count() == 1
    }
}

#[derive(Clone, Debug)]
pub struct PunishmentMachine {
    pub params: GameParams,
    /// Target lie frequency of the punishment, strictly above `rho_star`.
    pub rho_prime: f64,
    /// Belief-drift speed for the lying reputation.
    pub lambda: f64,
    /// Floor of the lying reputation on the punishment path.
    pub zeta_star: f64,
    /// Truth-telling counters for highest-cost survivors two or more steps
    /// above the cheapest type; entries at the last two indices are unused.
    pub k_bar: Vec<u64>,
    v_h: Vec<f64>,
    v_n: Vec<f64>,
    init_weights: [f64; 3],
}

/// Lying reputations after a low state: (after message h, after message l).
pub fn punishment_belief_update(
    lambda: f64,
    rho_star: f64,
    zeta_star: f64,
    zeta: f64,
) -> (f64, f64) {
    let gap = zeta - zeta_star;
    let z_lh = zeta_star + ((1.0 + lambda * (1.0 - rho_star)) * gap).min(1.0 - zeta_star);
    let z_ll = zeta_star + (1.0 - lambda * rho_star) * gap;
    (z_lh, z_ll)
}

/// Largest drift speed for which the lying reputation grows geometrically at
/// lie frequency `rho_hat`: root of
/// `ρ̂·ln(1+λ(1−ρ*)) + (1−ρ̂)·ln(1−λρ*) = 0`.
fn punishment_lambda_root(rho_hat: f64, rho_star: f64) -> f64 {
    let g = |lambda: f64| {
        rho_hat * (1.0 + lambda * (1.0 - rho_star)).ln()
            + (1.0 - rho_hat) * (1.0 - lambda * rho_star).ln()
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / rho_star - 1e-12;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl PunishmentMachine {
    pub fn new(params: GameParams, rho_prime: f64) -> Result<Self, MachineError> {
        params.validate().map_err(GameError::from)?;
        let rho_star = params.rho_star();
        if !(rho_prime > rho_star && rho_prime <= 1.0) {
            return Err(GameError::InvalidArgument(format!(
                "rho_prime must lie in (rho_star={rho_star}, 1], got {rho_prime}"
            ))
            .into());
        }
        let rho_hat = 0.5 * (rho_prime + rho_star);
        let cap = (1.0 - (1.0 - rho_star).sqrt()) / rho_star;
        let lambda = 0.9 * punishment_lambda_root(rho_hat, rho_star).min(cap);
        let n = params.n_types();
        let zeta_star = (1.0 - rho_star) * params.prior[n - 1];

        // Truth-telling counters: smallest k with the revealed share
        // (π_j/k)/(π_j/k + π_{j+1}+…+π_n) at most 1−ρ*.
        let mut k_bar = vec![0u64; n];
        for j in 0..n.saturating_sub(2) {
            let below: f64 = params.prior[j + 1..].iter().sum();
            let mut kk = 1u64;
            loop {
                let share = params.prior[j] / kk as f64;
                if share / (share + below) <= 1.0 - rho_star + 1e-15 {
                    break;
                }
                kk += 1;
                if kk > 1_000_000 {
                    return Err(GameError::InvalidArgument(format!(
                        "truth-telling counter for type {j} did not converge"
                    ))
                    .into());
                }
            }
            k_bar[j] = kk;
        }

        let (v_h, _, v_n) = bounds::payoff_basis(&params);
        let (a, b, c) = bounds::w_weights(&params, rho_prime);
        Ok(PunishmentMachine {
            params,
            rho_prime,
            lambda,
            zeta_star,
            k_bar,
            v_h,
            v_n,
            init_weights: [a, b, c],
        })
    }

    fn value_at(&self, w: &[f64; 3], j: usize) -> f64 {
        w[0] * self.v_h[j] + w[1] * self.v_n[j]
    }

    /// Weight on v^H pinning type `j`'s payoff to zero under (v^H, v^N).
    fn p_star_of(&self, j: usize) -> f64 {
        let c = self.params.costs[j];
        c * (1.0 - self.params.p_h) / (self.params.p_h + c * (1.0 - self.params.p_h))
    }

    /// Re-express a target value for a single known type as weights on
    /// (v^H, v^N) alone.
    fn point_weights(&self, j: usize, value: f64) -> [f64; 3] {
        let c = self.params.costs[j];
        let denom = self.params.p_h + c * (1.0 - self.params.p_h);
        let a = ((value + c * (1.0 - self.params.p_h)) / denom).clamp(0.0, 1.0);
        [a, 1.0 - a, 0.0]
    }

    fn classify(&self, posterior: &[f64], w: &[f64; 3]) -> PunishmentPhase {
        let f = 1.0 - self.params.delta_hat();
        let _ = posterior;
        if w[2] <= SUPPORT_CUTOFF {
            PunishmentPhase::Absorbing
        } else if w[1] >= f && w[2] >= f {
            PunishmentPhase::Class1
        } else if w[1] >= f {
            PunishmentPhase::Class2
        } else {
            PunishmentPhase::Class2N
        }
    }

    fn state_from_weights(
        &self,
        posterior: Vec<f64>,
        mut weights: [f64; 3],
        honesty_counters: Vec<u32>,
    ) -> PunishmentState {
        for w in weights.iter_mut() {
            if *w < 0.0 && *w > -1e-9 {
                *w = 0.0;
            }
        }
        // Keep the simplex closed exactly.
        weights[2] = 1.0 - weights[0] - weights[1];
        if weights[2].abs() <= SUPPORT_CUTOFF {
            weights[2] = 0.0;
            weights[1] = 1.0 - weights[0];
        }
        let mut state = PunishmentState {
            phase: PunishmentPhase::Absorbing,
            posterior,
            weights,
            honesty_counters,
        };
        // A point posterior admits an exact re-expression on (v^H, v^N): fold
        // any residual v^O weight away and absorb immediately.
        if state.is_point() && state.weights[2] > 0.0 {
            let j = state.highest_cost_index();
            let v = self.value_at(&state.weights, j);
            state.weights = self.point_weights(j, v);
        }
        state.phase = self.classify(&state.posterior, &state.weights);
        state
    }

    /// Entry point for a punishment that begins at an arbitrary posterior
    /// (fresh counters, initial weights), e.g. after a separating message.
    pub fn start_state(&self, posterior: Vec<f64>) -> PunishmentState {
        let n = posterior.len();
        self.state_from_weights(posterior, self.init_weights, vec![0; n])
    }

    /// Deviations restart the punishment from its initial weights; this is
    /// unprofitable because promised values never fall along the path.
    fn restart(&self, state: &PunishmentState) -> PunishmentState {
        self.state_from_weights(
            state.posterior.clone(),
            self.init_weights,
            state.honesty_counters.clone(),
        )
    }

    /// Per-type lie probabilities in the low state during Class 1.
    fn class1_mixing(&self, state: &PunishmentState) -> (f64, f64) {
        let rho_star = self.params.rho_star();
        let zeta = state.zeta();
        let (z_lh, z_ll) =
            punishment_belief_update(self.lambda, rho_star, self.zeta_star, zeta);
        if z_lh >= 1.0 - SUPPORT_CUTOFF {
            // Cap binding: only the cheapest type lies.
            let p_h_msg = (zeta - z_ll) / (1.0 - z_ll);
            (p_h_msg / zeta, 0.0)
        } else {
            let p_h_msg = (zeta - z_ll) / (z_lh - z_ll);
            let x_low = z_lh * p_h_msg / zeta;
            let x_others =
                if 1.0 - zeta > SUPPORT_CUTOFF { (1.0 - z_lh) * p_h_msg / (1.0 - zeta) } else { 0.0 };
            (x_low.clamp(0.0, 1.0), x_others.clamp(0.0, 1.0))
        }
    }

    /// Truth-telling probability of the highest-cost survivor in Class 2.
    fn class2_truth_prob(&self, state: &PunishmentState) -> f64 {
        let n = self.params.n_types();
        let j = state.highest_cost_index();
        if j + 2 >= n {
            ((1.0 - self.params.rho_star()) / (1.0 - state.zeta())).min(1.0)
        } else {
            let k = self.k_bar[j].max(1);
            let used = state.honesty_counters[j] as u64;
            1.0 / (k.saturating_sub(used).max(1)) as f64
        }
    }

    /// Lie probability of the cheapest type in Class 2N.
    fn class2n_lie_prob(&self, state: &PunishmentState) -> Result<f64, MachineError> {
        let zeta = state.zeta();
        if zeta + 1e-12 < self.params.rho_star() {
            return Err(MachineError::OffPath(format!(
                "lying reserve exhausted with insufficient lying reputation (zeta={zeta})"
            )));
        }
        Ok((self.params.rho_star() / zeta).min(1.0))
    }

    fn bayes(posterior: &[f64], likelihood: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut out: Vec<f64> =
            posterior.iter().enumerate().map(|(j, &p)| p * likelihood(j)).collect();
        let total: f64 = out.iter().sum();
        debug_assert!(total > 0.0, "zero-probability message in Bayes update");
        for v in out.iter_mut() {
            *v /= total;
        }
        out
    }

    fn absorbing_honest(&self, state: &PunishmentState) -> bool {
        let delta = self.params.delta;
        let p_star = self.p_star_of(state.highest_cost_index());
        (state.weights[0] - (1.0 - delta)) / delta >= (p_star + 1.0) / 2.0
    }

    fn underline(&self, state: &PunishmentState) -> PunishmentState {
        let j = state.highest_cost_index();
        let p_star = self.p_star_of(j);
        self.state_from_weights(
            state.posterior.clone(),
            [p_star, 1.0 - p_star, 0.0],
            state.honesty_counters.clone(),
        )
    }

    fn step_class1(
        &self,
        state: &PunishmentState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<PunishmentState, MachineError> {
        let dh = self.params.delta_hat();
        let f = 1.0 - dh;
        let [p_h_w, p_n_w, p_o_w] = state.weights;
        match (omega, message) {
            (StateOfWorld::High, Message::High) => Ok(state.clone()),
            (StateOfWorld::High, Message::Low) => Ok(self.restart(state)),
            (StateOfWorld::Low, m) => {
                let (x_low, x_others) = self.class1_mixing(state);
                let n = self.params.n_types();
                let lie = |j: usize| if j == n - 1 { x_low } else { x_others };
                match m {
                    Message::High => {
                        let posterior = Self::bayes(&state.posterior, lie);
                        let w = [p_h_w / dh, (p_n_w - f) / dh, p_o_w / dh];
                        Ok(self.state_from_weights(posterior, w, state.honesty_counters.clone()))
                    }
                    Message::Low => {
                        let posterior = Self::bayes(&state.posterior, |j| 1.0 - lie(j));
                        let w = [p_h_w / dh, p_n_w / dh, (p_o_w - f) / dh];
                        Ok(self.state_from_weights(posterior, w, state.honesty_counters.clone()))
                    }
                }
            }
        }
    }

    fn step_class2(
        &self,
        state: &PunishmentState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<PunishmentState, MachineError> {
        let dh = self.params.delta_hat();
        let f = 1.0 - dh;
        let [p_h_w, p_n_w, p_o_w] = state.weights;
        let j = state.highest_cost_index();
        match (omega, message) {
            (StateOfWorld::High, Message::High) => Ok(state.clone()),
            (StateOfWorld::High, Message::Low) => Ok(self.restart(state)),
            (StateOfWorld::Low, m) => {
                let y = self.class2_truth_prob(state);
                let mut counters = state.honesty_counters.clone();
                counters[j] = counters[j].saturating_add(1);
                match m {
                    Message::High => {
                        let posterior =
                            Self::bayes(&state.posterior, |t| if t == j { 1.0 - y } else { 1.0 });
                        let w = [p_h_w / dh, (p_n_w - f) / dh, p_o_w / dh];
                        Ok(self.state_from_weights(posterior, w, counters))
                    }
                    Message::Low => {
                        // A truthful low report reveals the highest-cost
                        // survivor; the continuation is pinned by its exact
                        // indifference between revealing and lying on.
                        let delta = self.params.delta;
                        let c_j = self.params.costs[j];
                        let lie_cont = (p_h_w * self.v_h[j] + (p_n_w - f) * self.v_n[j]) / dh;
                        let value = lie_cont - (1.0 - delta) * c_j / delta;
                        let mut posterior = vec![0.0; state.posterior.len()];
                        posterior[j] = 1.0;
                        Ok(PunishmentState {
                            phase: PunishmentPhase::Absorbing,
                            posterior,
                            weights: self.point_weights(j, value),
                            honesty_counters: counters,
                        })
                    }
                }
            }
        }
    }

    fn step_class2n(
        &self,
        state: &PunishmentState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<PunishmentState, MachineError> {
        let dh = self.params.delta_hat();
        let f = 1.0 - dh;
        let [p_h_w, p_n_w, p_o_w] = state.weights;
        if p_o_w + 1e-12 < f {
            return Err(MachineError::OffPath(
                "both branch reserves below the per-period flow".to_string(),
            ));
        }
        let n = self.params.n_types();
        match (omega, message) {
            (StateOfWorld::High, Message::High) => Ok(state.clone()),
            (StateOfWorld::High, Message::Low) => Ok(self.restart(state)),
            (StateOfWorld::Low, m) => {
                let y = self.class2n_lie_prob(state)?;
                match m {
                    Message::High => {
                        // A lie reveals the cheapest type; continuation pinned
                        // by its exact indifference.
                        let delta = self.params.delta;
                        let j = n - 1;
                        let c_j = self.params.costs[j];
                        let honest_cont = (p_h_w * self.v_h[j] + p_n_w * self.v_n[j]) / dh;
                        let value = honest_cont + (1.0 - delta) * c_j / delta;
                        let mut posterior = vec![0.0; state.posterior.len()];
                        posterior[j] = 1.0;
                        Ok(PunishmentState {
                            phase: PunishmentPhase::Absorbing,
                            posterior,
                            weights: self.point_weights(j, value),
                            honesty_counters: state.honesty_counters.clone(),
                        })
                    }
                    Message::Low => {
                        let posterior = Self::bayes(&state.posterior, |t| {
                            if t == n - 1 {
                                1.0 - y
                            } else {
                                1.0
                            }
                        });
                        let w = [p_h_w / dh, p_n_w / dh, (p_o_w - f) / dh];
                        Ok(self.state_from_weights(posterior, w, state.honesty_counters.clone()))
                    }
                }
            }
        }
    }

    fn step_absorbing(
        &self,
        state: &PunishmentState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<PunishmentState, MachineError> {
        let delta = self.params.delta;
        let [p_h_w, p_n_w, _] = state.weights;
        if self.absorbing_honest(state) {
            // Both truthful branches advance to the same state: the honest
            // block consumes (1-δ) of the v^H weight per period regardless of
            // the realized state of the world.
            match (omega, message) {
                (StateOfWorld::High, Message::High) | (StateOfWorld::Low, Message::Low) => {
                    let w = [(p_h_w - (1.0 - delta)) / delta, p_n_w / delta, 0.0];
                    Ok(self.state_from_weights(
                        state.posterior.clone(),
                        w,
                        state.honesty_counters.clone(),
                    ))
                }
                _ => Ok(self.underline(state)),
            }
        } else {
            match message {
                Message::High => {
                    let w = [p_h_w / delta, (p_n_w - (1.0 - delta)) / delta, 0.0];
                    Ok(self.state_from_weights(
                        state.posterior.clone(),
                        w,
                        state.honesty_counters.clone(),
                    ))
                }
                Message::Low => Ok(self.underline(state)),
            }
        }
    }
}

impl Machine for PunishmentMachine {
    type State = PunishmentState;

    fn initial_state(&self) -> PunishmentState {
        self.state_from_weights(
            self.params.prior.clone(),
            self.init_weights,
            vec![0; self.params.n_types()],
        )
    }

    fn n_types(&self) -> usize {
        self.params.n_types()
    }

    fn prescribe(&self, state: &PunishmentState) -> Result<Prescription, MachineError> {
        let n = self.params.n_types();
        match state.phase {
            PunishmentPhase::Class1 => {
                let (x_low, x_others) = self.class1_mixing(state);
                let sender = (0..n)
                    .map(|j| {
                        MixedSenderAction::honest_or_always_high(if j == n - 1 {
                            x_low
                        } else {
                            x_others
                        })
                    })
                    .collect();
                Ok(Prescription { receiver: ReceiverAction::NeverTrust, sender })
            }
            PunishmentPhase::Class2 => {
                let j = state.highest_cost_index();
                let y = self.class2_truth_prob(state);
                let sender = (0..n)
                    .map(|t| {
                        MixedSenderAction::honest_or_always_high(if t == j { 1.0 - y } else { 1.0 })
                    })
                    .collect();
                Ok(Prescription { receiver: ReceiverAction::NeverTrust, sender })
            }
            PunishmentPhase::Class2N => {
                let y = self.class2n_lie_prob(state)?;
                let sender = (0..n)
                    .map(|t| {
                        MixedSenderAction::honest_or_always_high(if t == n - 1 { y } else { 0.0 })
                    })
                    .collect();
                Ok(Prescription { receiver: ReceiverAction::NeverTrust, sender })
            }
            PunishmentPhase::Absorbing => {
                if self.absorbing_honest(state) {
                    Ok(Prescription {
                        receiver: ReceiverAction::Trust,
                        sender: vec![MixedSenderAction::honest_or_always_high(0.0); n],
                    })
                } else {
                    Ok(Prescription {
                        receiver: ReceiverAction::NeverTrust,
                        sender: vec![MixedSenderAction::honest_or_always_high(1.0); n],
                    })
                }
            }
        }
    }

    fn step(
        &self,
        state: &PunishmentState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<PunishmentState, MachineError> {
        match state.phase {
            PunishmentPhase::Class1 => self.step_class1(state, omega, message),
            PunishmentPhase::Class2 => self.step_class2(state, omega, message),
            PunishmentPhase::Class2N => self.step_class2n(state, omega, message),
            PunishmentPhase::Absorbing => self.step_absorbing(state, omega, message),
        }
    }

    fn continuation_value(&self, state: &PunishmentState) -> Vec<f64> {
        (0..self.params.n_types()).map(|j| self.value_at(&state.weights, j)).collect()
    }

    fn posterior(&self, state: &PunishmentState) -> Vec<f64> {
        state.posterior.clone()
    }

    fn phase_label(&self, state: &PunishmentState) -> &'static str {
        state.phase.label()
    }

    fn is_absorbed(&self, state: &PunishmentState) -> bool {
        state.phase == PunishmentPhase::Absorbing
    }

    fn invariant_residuals(&self, state: &PunishmentState) -> Vec<(&'static str, f64, f64)> {
        let mut out = Vec::with_capacity(6);
        let p = &self.params;

        let sum_dev = (state.weights.iter().sum::<f64>() - 1.0).abs();
        let neg = state.weights.iter().cloned().fold(0.0f64, |a, w| a.max(-w));
        out.push(("weights_simplex", sum_dev.max(neg), 1e-12));

        // Every type's promised payoff stays nonnegative (a sender can always
        // guarantee zero by pure honesty).
        let v = self.continuation_value(state);
        let worst_neg = v.iter().cloned().fold(0.0f64, |a, x| a.max(-x));
        out.push(("values_nonnegative", worst_neg, 1e-9));

        if self.prescribe(state).is_err() {
            out.push(("prescription_valid", 1.0, 0.5));
            return out;
        }

        out.push(("promise_keeping", promise_keeping_residual(self, p, state), 1e-9));
        if !self.is_absorbed(state) {
            out.push(("indifference", indifference_residual(self, p, state), 1e-9));
            out.push(("belief_martingale", belief_martingale_residual(self, state), 1e-12));
        }
        out.push(("receiver_best_reply", receiver_best_reply_residual(self, p, state), 1e-9));

        if state.phase == PunishmentPhase::Class1 {
            let viol = (self.zeta_star - state.zeta()).max(0.0);
            out.push(("zeta_floor", viol, 1e-9));
        }
        out
    }
}

/// Aggregate probability of the high message in the low state. In untrusted
/// phases this is at least `rho_star`, keeping distrust a best reply.
pub fn aggregate_lie_rate(
    machine: &PunishmentMachine,
    state: &PunishmentState,
) -> Result<f64, MachineError> {
    let pr = machine.prescribe(state)?;
    Ok(pr.aggregate_prob_high(&state.posterior, StateOfWorld::Low))
}
