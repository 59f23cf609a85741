//! The explicit equilibrium as a deterministic state machine.
//!
//! The public state tracks the receivers' posterior over types, a weight
//! decomposition (pH, pL, pN) of the promised continuation payoff over the
//! basis vectors (v^H, v^L, v^N), and per-type mixing counters. Play moves
//! through four phases:
//!
//! * **Class 1** (active learning, `pL ≥ 1−δ̂`): receiver trusts; every type
//!   mixes between honesty and lying in the low state, with mixing pinned
//!   down by the reputation-drift formulas.
//! * **Class 2** (`0 < pL < 1−δ̂`): receiver trusts; only the lowest-cost
//!   surviving type still mixes.
//! * **Rebounding** (promised value of the highest-cost type would go
//!   negative): receiver stops trusting, everyone sends the high message,
//!   and the weight on v^N is worked off.
//! * **Absorbing** (`pL = 0`): learning stops; play alternates between
//!   (Honest, Trust) and (AlwaysHigh, NeverTrust) blocks via a threshold
//!   rule, discounted at δ rather than δ̂.

use crate::bounds::{self, PolytopeVStar};
use crate::constants::{self, DerivedConstants};
use crate::error::{GameError, MachineError};
use crate::machine::{Machine, Prescription};
use crate::stage_game::{
    CostView, GameParams, Message, MixedSenderAction, ReceiverAction, StateOfWorld,
};

/// Posterior mass below this is treated as exactly zero.
pub const SUPPORT_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum Phase {
    Class1,
    Class2,
    Rebounding,
    Absorbing,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Class1 => "class1",
            Phase::Class2 => "class2",
            Phase::Rebounding => "rebounding",
            Phase::Absorbing => "absorbing",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumState {
    pub phase: Phase,
    /// Receivers' posterior over all types; entry 0 is the reputation `eta`.
    pub posterior: Vec<f64>,
    /// Weights (pH, pL, pN) on (v^H, v^L, v^N); once absorbed, pL = 0 and
    /// (pH, pN) are the absorbing weights.
    pub weights: [f64; 3],
    /// Per-type count of past Class-2 histories with a low state while that
    /// type was the lowest-cost survivor.
    pub lie_counters: Vec<u32>,
    /// Per-type value adjustment applied on entry, when the incoming promise
    /// had drifted past the benchmark-frequency face and was renormalized
    /// back inside the deliverable polytope. Empty for ordinary states.
    pub entry_offset: Vec<f64>,
}

impl EquilibriumState {
    pub fn eta(&self) -> f64 {
        self.posterior[0]
    }

    /// Indices of types with positive posterior mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.posterior.len()).filter(|&j| self.posterior[j] > SUPPORT_CUTOFF).collect()
    }

    /// Index of the lowest-cost type still in the support.
    pub fn lowest_cost_index(&self) -> usize {
        (0..self.posterior.len())
            .rev()
            .find(|&j| self.posterior[j] > SUPPORT_CUTOFF)
            .expect("posterior has support")
    }
}

/// Initial-weight presets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightPreset {
    /// Calibrated mixture: the highest-cost type's payoff equals p_h.
    Target,
    /// The simple three-way mixture at lie frequency rho.
    Mixture,
    /// Explicit weights on (v^H, v^L, v^N).
    Custom([f64; 3]),
}

#[derive(Clone, Debug)]
pub struct EquilibriumMachine {
    pub params: GameParams,
    pub consts: DerivedConstants,
    pub v_h: Vec<f64>,
    pub v_l: Vec<f64>,
    pub v_n: Vec<f64>,
    /// Punishment weight on v^H pinning type 1's punished value to zero.
    pub p_star: f64,
    /// The containment polytope; absent when the highest cost is ethical
    /// (auxiliary machines), where the polytope geometry is undefined.
    pub polytope: Option<PolytopeVStar>,
    init_weights: [f64; 3],
    /// Slope of the benchmark-frequency face in payoff space (two-type games
    /// with the polytope defined); the guard against promise drift past that
    /// face is active exactly when this is set.
    face_slope: Option<f64>,
    /// Reset depth of the face guard, in units of one honest-report step
    /// `(1−δ̂)·|X(v^H)|` past the face.
    pub face_reset_steps: f64,
    /// Trigger threshold of the face guard, in the same step units.
    pub face_trigger_steps: f64,
    /// How close to the face (in step units, negative side) the Class-1 lie
    /// mass starts shifting toward the low-cost type.
    pub paydown_trigger_steps: f64,
    /// Reputation retained after a lie while paying down, as a fraction of
    /// the current excess over the floor; smaller is more aggressive.
    pub paydown_beta: f64,
}

/// Resolved low-state mixing at a Class-1 state.
struct Class1Mixing {
    /// Honesty probability of type 1 (highest cost).
    x1: f64,
    /// Honesty probability of every other type.
    x2: f64,
    /// Posterior on type 1 after a low-state lie.
    eta_lh: f64,
    /// Whether the honest low report reveals type 1 outright, so the
    /// continuation is pinned on the (v^H, v^N) edge.
    pin_on_ll: bool,
}

/// Reputation posteriors after a low state: (after message h, after message l).
pub fn belief_update_class1(consts: &DerivedConstants, eta: f64) -> (f64, f64) {
    let gap = eta - consts.eta_star;
    let eta_lh = consts.eta_star + (1.0 - consts.lambda * (1.0 - consts.rho_star)) * gap;
    let eta_ll =
        consts.eta_star + ((1.0 + consts.lambda * consts.rho_star) * gap).min(1.0 - consts.eta_star);
    (eta_lh, eta_ll)
}

/// Whether the upward reputation update is capped at 1.
pub fn class1_cap_binds(consts: &DerivedConstants, eta: f64) -> bool {
    (1.0 + consts.lambda * consts.rho_star) * (eta - consts.eta_star) >= 1.0 - consts.eta_star
}

/// Invert Bayes rule: honesty probabilities (type 1, other types) in the low
/// state that generate the given posteriors.
pub fn mixing_from_posteriors(
    eta: f64,
    eta_lh: f64,
    eta_ll: f64,
) -> Result<(f64, f64), MachineError> {
    if !(eta_lh < eta && eta < eta_ll) {
        return Err(MachineError::NonBayesian(format!(
            "posteriors not strictly informative: {eta_lh} < {eta} < {eta_ll} fails"
        )));
    }
    let p_l = (eta - eta_lh) / (eta_ll - eta_lh);
    let x1 = eta_ll * p_l / eta;
    let x2 = if 1.0 - eta > SUPPORT_CUTOFF { (1.0 - eta_ll) * p_l / (1.0 - eta) } else { 0.0 };
    for (name, x) in [("x1", x1), ("x2", x2)] {
        if !(-1e-12..=1.0 + 1e-12).contains(&x) {
            return Err(MachineError::NonBayesian(format!(
                "{name} = {x} outside [0,1] for eta={eta}, eta_lh={eta_lh}, eta_ll={eta_ll}"
            )));
        }
    }
    Ok((x1.clamp(0.0, 1.0), x2.clamp(0.0, 1.0)))
}

impl EquilibriumMachine {
    /// Build the machine for a target lie frequency `rho` and initial-weight
    /// preset. Requires all costs below 1.
    pub fn new(params: GameParams, rho: f64, preset: WeightPreset) -> Result<Self, MachineError> {
        let consts = constants::derive_constants(&params, rho)?;
        Self::with_constants(params, consts, preset)
    }

    pub fn with_constants(
        params: GameParams,
        consts: DerivedConstants,
        preset: WeightPreset,
    ) -> Result<Self, MachineError> {
        params.max_cost_below_one().map_err(GameError::from)?;
        let weights = match preset {
            WeightPreset::Target => {
                let (a, b, c) =
                    bounds::v_target_weights(&params, consts.rho).map_err(GameError::from)?;
                [a, b, c]
            }
            WeightPreset::Mixture => {
                let (a, b, c) =
                    bounds::v_rho_mixture_weights(&params, consts.rho).map_err(GameError::from)?;
                [a, b, c]
            }
            WeightPreset::Custom(w) => w,
        };
        let polytope = bounds::polytope(&params).map_err(GameError::from)?;
        if !polytope.contains_weights(&params, weights, 1e-9) {
            return Err(MachineError::WeightsOutsidePolytope(weights[0], weights[1], weights[2]));
        }
        Ok(Self::assemble(params, consts, weights, Some(polytope)))
    }

    /// Auxiliary-machine constructor: permits an ethical highest cost and an
    /// explicit weight vector, skipping the polytope membership test.
    pub fn new_auxiliary(
        params: GameParams,
        rho: f64,
        weights: [f64; 3],
    ) -> Result<Self, MachineError> {
        let consts = constants::derive_constants_allowing_ethical(&params, rho)?;
        let polytope = bounds::polytope(&params).ok();
        Ok(Self::assemble(params, consts, weights, polytope))
    }

    fn assemble(
        params: GameParams,
        consts: DerivedConstants,
        init_weights: [f64; 3],
        polytope: Option<PolytopeVStar>,
    ) -> Self {
        let (v_h, v_l, v_n) = bounds::payoff_basis(&params);
        let c1 = params.costs[0];
        let p_star = c1 * (1.0 - params.p_h) / (params.p_h + c1 * (1.0 - params.p_h));
        let face_slope = if params.n_types() == 2 && polytope.is_some() {
            let denom = 2.0 * params.p_h + c1 * (1.0 - 2.0 * params.p_h);
            let numer = 2.0 * params.p_h + params.costs[1] * (1.0 - 2.0 * params.p_h);
            (denom.abs() > 1e-12).then(|| numer / denom)
        } else {
            None
        };
        EquilibriumMachine {
            params,
            consts,
            v_h,
            v_l,
            v_n,
            p_star,
            polytope,
            init_weights,
            face_slope,
            face_reset_steps: 1.0,
            face_trigger_steps: 0.0,
        }
    }

    /// Face movement of one honest low report, `(1−δ̂)·|X(v^H)|`: the unit in
    /// which the guard's trigger and reset are expressed.
    fn face_step(&self) -> f64 {
        let slope = self.face_slope.unwrap_or(1.0);
        let x_vh = ((self.v_h[1] - self.v_n[1]) - slope * (self.v_h[0] - self.v_n[0])).abs();
        (1.0 - self.consts.delta_hat) * x_vh
    }

    /// Signed distance of the promised value past the benchmark-frequency
    /// face: positive means the trusted-lying share of the promise exceeds
    /// what receiver incentives can deliver. Two-type games only.
    fn face_excess(&self, w: &[f64; 3]) -> Option<f64> {
        let slope = self.face_slope?;
        let v1 = self.value_at(w, 0);
        let v2 = self.value_at(w, 1);
        Some((v2 - self.v_n[1]) - slope * (v1 - self.v_n[0]))
    }

    /// How far inside the face a renormalized promise is reset; the depth
    /// vanishes as δ → 1.
    fn face_reset_depth(&self) -> f64 {
        self.face_reset_steps * self.face_step()
    }

    /// Pull a promise that crossed the face back inside, splitting the
    /// correction between a haircut on the low-cost type and a top-up of the
    /// high-cost type so that neither is systematically shortchanged.
    /// Returns the renormalized weights and the per-type value adjustment.
    fn renormalize_weights(&self, w: &[f64; 3], excess: f64) -> ([f64; 3], Vec<f64>) {
        let slope = self.face_slope.expect("guard active");
        let v1 = self.value_at(w, 0);
        let v2 = self.value_at(w, 1);
        let dx = excess + self.face_reset_depth();
        // Top-up of type 1 is capped by its own polytope face at v^H.
        let headroom = (self.v_h[0] - v1 - 1e-9).max(0.0);
        let a1 = (0.5 * dx / slope).min(headroom);
        let a2 = dx - slope * a1;
        let target = [v1 + a1, v2 - a2];
        // Solve for weights hitting the target value with unit sum.
        let (bh, bl, bn) = (&self.v_h, &self.v_l, &self.v_n);
        let col = |b: &Vec<f64>| [b[0] - bn[0], b[1] - bn[1]];
        let (ch, cl) = (col(bh), col(bl));
        let rhs = [target[0] - bn[0], target[1] - bn[1]];
        let det = ch[0] * cl[1] - ch[1] * cl[0];
        let w0 = (rhs[0] * cl[1] - rhs[1] * cl[0]) / det;
        let w1 = (ch[0] * rhs[1] - ch[1] * rhs[0]) / det;
        ([w0, w1, 1.0 - w0 - w1], vec![a1, -a2])
    }

    /// How far the promised value may drift beyond the polytope at this
    /// discount factor. Every preset starts on the face where the trusted-lie
    /// share of (pH, pL) equals the benchmark frequency; each honest low
    /// report pushes the value past that face by at most 2(1−δ̂) in
    /// barycentric distance, and the reputation cap bounds the number of net
    /// honest low reports before absorption. The drift vanishes as δ → 1.
    pub fn polytope_drift_tolerance(&self) -> f64 {
        let c = &self.consts;
        let eta0 = self.params.prior[0];
        let headroom = (1.0 - c.eta_star) / (eta0 - c.eta_star).max(1e-12);
        let budget = headroom.ln() / (1.0 + c.lambda * c.rho_star).ln();
        2.0 * (1.0 - c.delta_hat) * (budget.max(1.0) + 2.0)
    }

    fn classify(&self, weights: &[f64; 3]) -> Phase {
        if weights[1] <= SUPPORT_CUTOFF {
            Phase::Absorbing
        } else if self.type1_value_after_lh(weights) < 0.0 {
            Phase::Rebounding
        } else if weights[1] >= 1.0 - self.consts.delta_hat {
            Phase::Class1
        } else {
            Phase::Class2
        }
    }

    /// First entry of the continuation vector after (low state, message h)
    /// under the Class-1 recursion: the highest-cost type's promised value if
    /// the trusted-lying weight is drawn down once more.
    fn type1_value_after_lh(&self, w: &[f64; 3]) -> f64 {
        let dh = self.consts.delta_hat;
        (w[0] * self.v_h[0] + (w[1] - (1.0 - dh)) * self.v_l[0] + w[2] * self.v_n[0]) / dh
    }

    fn value_at(&self, w: &[f64; 3], j: usize) -> f64 {
        w[0] * self.v_h[j] + w[1] * self.v_l[j] + w[2] * self.v_n[j]
    }

    fn state_from_weights(
        &self,
        posterior: Vec<f64>,
        mut weights: [f64; 3],
        lie_counters: Vec<u32>,
    ) -> EquilibriumState {
        // Snap tiny negatives and keep the simplex closed exactly; the exact
        // recursions preserve the sum, this only absorbs rounding noise.
        for w in weights.iter_mut() {
            if *w < 0.0 && *w > -1e-9 {
                *w = 0.0;
            }
        }
        weights[2] = 1.0 - weights[0] - weights[1];
        // Out-of-domain guard: while trusted lying is still being delivered,
        // a promise that drifted past the benchmark-frequency face is not
        // deliverable by any incentive-compatible continuation; renormalize
        // it back inside and record the adjustment on the state.
        let mut entry_offset = Vec::new();
        if weights[1] > SUPPORT_CUTOFF {
            if let Some(excess) = self.face_excess(&weights) {
                if excess > self.face_trigger_steps * self.face_step() {
                    let (w_new, offset) = self.renormalize_weights(&weights, excess);
                    weights = w_new;
                    entry_offset = offset;
                }
            }
        }
        let phase = self.classify(&weights);
        EquilibriumState { phase, posterior, weights, lie_counters, entry_offset }
    }

    /// A self-loop transition: same state, but the entry adjustment (if any)
    /// belongs to the transition that created the state, not to this one.
    fn self_loop(state: &EquilibriumState) -> EquilibriumState {
        let mut next = state.clone();
        next.entry_offset = Vec::new();
        next
    }

    /// Absorbing state delivering the punished value (first entry 0).
    fn punished_state(&self, posterior: Vec<f64>, lie_counters: Vec<u32>) -> EquilibriumState {
        self.state_from_weights(posterior, [self.p_star, 0.0, 1.0 - self.p_star], lie_counters)
    }

    /// Whether an absorbing state plays the honest block this period.
    fn absorbing_honest(&self, weights: &[f64; 3]) -> bool {
        let delta = self.params.delta;
        (weights[0] - (1.0 - delta)) / delta >= (self.p_star + 1.0) / 2.0
    }

    /// Lie probability of the lowest-cost surviving type in Class 2.
    fn class2_lie_prob(&self, state: &EquilibriumState) -> f64 {
        let j = state.lowest_cost_index();
        debug_assert!(j >= 1, "Class 2 requires at least two surviving types");
        if j == 1 {
            (self.consts.rho_star / (1.0 - state.eta())).min(1.0)
        } else {
            let k = self.consts.k[j].max(1);
            let used = state.lie_counters[j] as u64;
            1.0 / (k.saturating_sub(used).max(1)) as f64
        }
    }

    /// Bayes update of the posterior given per-type probabilities of the
    /// realized message.
    fn bayes(posterior: &[f64], likelihood: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut out: Vec<f64> = posterior.iter().enumerate().map(|(j, &p)| p * likelihood(j)).collect();
        let total: f64 = out.iter().sum();
        debug_assert!(total > 0.0, "zero-probability message in Bayes update");
        for v in out.iter_mut() {
            *v /= total;
        }
        out
    }

    /// Solve `q·v^H_1 + (1−q)·v^N_1 = target_first` for q; used when an
    /// upward belief jump is capped and the continuation must be re-expressed
    /// on the (v^H, v^N) edge with the same first entry.
    fn pin_first_entry(&self, target_first: f64) -> [f64; 3] {
        let q = (target_first - self.v_n[0]) / (self.v_h[0] - self.v_n[0]);
        [q, 0.0, 1.0 - q]
    }

    fn step_class1(
        &self,
        state: &EquilibriumState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<EquilibriumState, MachineError> {
        let dh = self.consts.delta_hat;
        let [p_h_w, p_l_w, p_n_w] = state.weights;
        match (omega, message) {
            (StateOfWorld::High, Message::High) => Ok(Self::self_loop(state)),
            (StateOfWorld::High, Message::Low) => {
                // Deviation: belief free (kept), continuation punished.
                Ok(self.punished_state(state.posterior.clone(), state.lie_counters.clone()))
            }
            (StateOfWorld::Low, m) => {
                let eta = state.eta();
                let (eta_lh, eta_ll) = belief_update_class1(&self.consts, eta);
                let capped = class1_cap_binds(&self.consts, eta);
                let (x1, x2) = if capped {
                    let p_l = (eta - eta_lh) / (1.0 - eta_lh);
                    (p_l / eta, 0.0)
                } else {
                    mixing_from_posteriors(eta, eta_lh, eta_ll)?
                };
                match m {
                    Message::High => {
                        let posterior =
                            Self::bayes(&state.posterior, |j| if j == 0 { 1.0 - x1 } else { 1.0 - x2 });
                        let w = [p_h_w / dh, (p_l_w - (1.0 - dh)) / dh, p_n_w / dh];
                        Ok(self.state_from_weights(posterior, w, state.lie_counters.clone()))
                    }
                    Message::Low => {
                        if capped {
                            // Only the highest-cost type sends l; the posterior
                            // jumps to 1 and the continuation is re-expressed
                            // with the same first entry on the (v^H, v^N) edge.
                            let mut posterior = vec![0.0; state.posterior.len()];
                            posterior[0] = 1.0;
                            let first = (p_h_w * self.v_h[0] + p_l_w * self.v_l[0]
                                + p_n_w * self.v_n[0]
                                - (1.0 - dh) * self.v_h[0])
                                / dh;
                            let w = self.pin_first_entry(first);
                            Ok(self.state_from_weights(posterior, w, state.lie_counters.clone()))
                        } else {
                            let posterior =
                                Self::bayes(&state.posterior, |j| if j == 0 { x1 } else { x2 });
                            let w =
                                [(p_h_w - (1.0 - dh)) / dh, p_l_w / dh, p_n_w / dh];
                            Ok(self.state_from_weights(posterior, w, state.lie_counters.clone()))
                        }
                    }
                }
            }
        }
    }

    fn step_class2(
        &self,
        state: &EquilibriumState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<EquilibriumState, MachineError> {
        let dh = self.consts.delta_hat;
        let [p_h_w, p_l_w, p_n_w] = state.weights;
        let j = state.lowest_cost_index();
        match (omega, message) {
            (StateOfWorld::High, Message::High) => Ok(Self::self_loop(state)),
            (StateOfWorld::High, Message::Low) => {
                Ok(self.punished_state(state.posterior.clone(), state.lie_counters.clone()))
            }
            (StateOfWorld::Low, m) => {
                let y = self.class2_lie_prob(state);
                let mut counters = state.lie_counters.clone();
                counters[j] = counters[j].saturating_add(1);
                match m {
                    Message::High => {
                        // Only the lowest-cost survivor lies: belief collapses
                        // onto it, and the trusted-lying weight is cashed out
                        // at that type's indifference point.
                        let mut posterior = vec![0.0; state.posterior.len()];
                        posterior[j] = 1.0;
                        let c_j = self.params.costs[j];
                        let s = self.params.p_h + c_j * (1.0 - self.params.p_h);
                        let q = p_h_w - (1.0 - dh)
                            + (p_l_w - (1.0 - dh) * (1.0 - self.params.p_h) * (1.0 - c_j)) / s;
                        let w = [q / dh, 0.0, 1.0 - q / dh];
                        Ok(self.state_from_weights(posterior, w, counters))
                    }
                    Message::Low => {
                        let posterior =
                            Self::bayes(&state.posterior, |t| if t == j { 1.0 - y } else { 1.0 });
                        if posterior[0] >= 1.0 - SUPPORT_CUTOFF {
                            let first = (p_h_w * self.v_h[0] + p_l_w * self.v_l[0]
                                + p_n_w * self.v_n[0]
                                - (1.0 - dh) * self.v_h[0])
                                / dh;
                            let mut post = vec![0.0; state.posterior.len()];
                            post[0] = 1.0;
                            let w = self.pin_first_entry(first);
                            Ok(self.state_from_weights(post, w, counters))
                        } else {
                            let w =
                                [(p_h_w - (1.0 - dh)) / dh, p_l_w / dh, p_n_w / dh];
                            Ok(self.state_from_weights(posterior, w, counters))
                        }
                    }
                }
            }
        }
    }

    fn step_rebounding(
        &self,
        state: &EquilibriumState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<EquilibriumState, MachineError> {
        let dh = self.consts.delta_hat;
        let [p_h_w, p_l_w, p_n_w] = state.weights;
        match (omega, message) {
            (StateOfWorld::High, _) => Ok(Self::self_loop(state)),
            (StateOfWorld::Low, Message::High) => {
                let w = [p_h_w / dh, p_l_w / dh, (p_n_w - (1.0 - dh)) / dh];
                Ok(self.state_from_weights(state.posterior.clone(), w, state.lie_counters.clone()))
            }
            (StateOfWorld::Low, Message::Low) => {
                // Deviation from the prescribed high message.
                Ok(self.punished_state(state.posterior.clone(), state.lie_counters.clone()))
            }
        }
    }

    fn step_absorbing(
        &self,
        state: &EquilibriumState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<EquilibriumState, MachineError> {
        let delta = self.params.delta;
        let [p_h_w, _, p_n_w] = state.weights;
        if self.absorbing_honest(&state.weights) {
            // Both truthful branches advance to the same state: the honest
            // block consumes (1-δ) of the v^H weight per period regardless of
            // the realized state of the world.
            match (omega, message) {
                (StateOfWorld::High, Message::High) | (StateOfWorld::Low, Message::Low) => {
                    let w = [(p_h_w - (1.0 - delta)) / delta, 0.0, p_n_w / delta];
                    Ok(self.state_from_weights(
                        state.posterior.clone(),
                        w,
                        state.lie_counters.clone(),
                    ))
                }
                _ => Ok(self.punished_state(state.posterior.clone(), state.lie_counters.clone())),
            }
        } else {
            match message {
                Message::High => {
                    let w = [p_h_w / delta, 0.0, (p_n_w - (1.0 - delta)) / delta];
                    Ok(self.state_from_weights(
                        state.posterior.clone(),
                        w,
                        state.lie_counters.clone(),
                    ))
                }
                Message::Low => {
                    Ok(self.punished_state(state.posterior.clone(), state.lie_counters.clone()))
                }
            }
        }
    }
}

impl Machine for EquilibriumMachine {
    type State = EquilibriumState;

    fn initial_state(&self) -> EquilibriumState {
        self.state_from_weights(
            self.params.prior.clone(),
            self.init_weights,
            vec![0; self.params.n_types()],
        )
    }

    fn n_types(&self) -> usize {
        self.params.n_types()
    }

    fn prescribe(&self, state: &EquilibriumState) -> Result<Prescription, MachineError> {
        let n = self.params.n_types();
        match state.phase {
            Phase::Class1 => {
                let eta = state.eta();
                let (eta_lh, eta_ll) = belief_update_class1(&self.consts, eta);
                let (x1, x2) = if class1_cap_binds(&self.consts, eta) {
                    let p_l = (eta - eta_lh) / (1.0 - eta_lh);
                    (p_l / eta, 0.0)
                } else {
                    mixing_from_posteriors(eta, eta_lh, eta_ll)?
                };
                let sender = (0..n)
                    .map(|j| {
                        MixedSenderAction::honest_or_always_high(if j == 0 {
                            1.0 - x1
                        } else {
                            1.0 - x2
                        })
                    })
                    .collect();
                Ok(Prescription { receiver: ReceiverAction::Trust, sender })
            }
            Phase::Class2 => {
                let j = state.lowest_cost_index();
                let y = self.class2_lie_prob(state);
                let sender = (0..n)
                    .map(|t| {
                        MixedSenderAction::honest_or_always_high(if t == j { y } else { 0.0 })
                    })
                    .collect();
                Ok(Prescription { receiver: ReceiverAction::Trust, sender })
            }
            Phase::Rebounding => Ok(Prescription {
                receiver: ReceiverAction::NeverTrust,
                sender: vec![MixedSenderAction::honest_or_always_high(1.0); n],
            }),
            Phase::Absorbing => {
                if self.absorbing_honest(&state.weights) {
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
        state: &EquilibriumState,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<EquilibriumState, MachineError> {
        match state.phase {
            Phase::Class1 => self.step_class1(state, omega, message),
            Phase::Class2 => self.step_class2(state, omega, message),
            Phase::Rebounding => self.step_rebounding(state, omega, message),
            Phase::Absorbing => self.step_absorbing(state, omega, message),
        }
    }

    fn continuation_value(&self, state: &EquilibriumState) -> Vec<f64> {
        (0..self.params.n_types()).map(|j| self.value_at(&state.weights, j)).collect()
    }

    fn posterior(&self, state: &EquilibriumState) -> Vec<f64> {
        state.posterior.clone()
    }

    fn phase_label(&self, state: &EquilibriumState) -> &'static str {
        state.phase.label()
    }

    fn is_absorbed(&self, state: &EquilibriumState) -> bool {
        state.phase == Phase::Absorbing
    }

    fn entry_adjustment(&self, state: &EquilibriumState) -> Option<Vec<f64>> {
        (!state.entry_offset.is_empty()).then(|| state.entry_offset.clone())
    }

    fn invariant_residuals(&self, state: &EquilibriumState) -> Vec<(&'static str, f64, f64)> {
        let mut out = Vec::with_capacity(6);
        let p = &self.params;

        // Simplex closure.
        let sum_dev = (state.weights.iter().sum::<f64>() - 1.0).abs();
        let neg = state.weights.iter().cloned().fold(0.0f64, |a, w| a.max(-w));
        out.push(("weights_simplex", sum_dev.max(neg), 1e-12));

        // Polytope membership, when the geometry is defined, up to the
        // finite-δ drift past the benchmark-frequency face.
        if let Some(poly) = &self.polytope {
            let violation = poly.violation(p, state.weights);
            out.push(("weights_in_polytope", violation, self.polytope_drift_tolerance()));
        }

        if self.prescribe(state).is_err() {
            out.push(("prescription_valid", 1.0, 0.5));
            return out;
        }

        // Promise keeping: the promised vector equals the one-period payoff
        // recursion under the prescription, for every type.
        out.push(("promise_keeping", crate::machine::promise_keeping_residual(self, p, state), 1e-9));

        // Indifference: any type mixing between honesty and lying in the low
        // state must be exactly indifferent between the two branches.
        if matches!(state.phase, Phase::Class1 | Phase::Class2) {
            out.push(("indifference", crate::machine::indifference_residual(self, p, state), 1e-9));
        }

        // Receiver best reply: the prescribed response to each positive-
        // probability message must be optimal against the implied posterior
        // over states.
        out.push((
            "receiver_best_reply",
            crate::machine::receiver_best_reply_residual(self, p, state),
            1e-9,
        ));

        // Belief martingale in the low state: the message-probability-
        // weighted posteriors must average back to the prior.
        if !self.is_absorbed(state) {
            out.push((
                "belief_martingale",
                crate::machine::belief_martingale_residual(self, state),
                1e-12,
            ));
        }

        // Reputation floor in the active-learning phase.
        if state.phase == Phase::Class1 {
            let viol = (self.consts.eta_star - state.eta()).max(0.0);
            out.push(("eta_floor", viol, 1e-9));
        }

        out
    }
}

/// Aggregate probability of the high message in the low state, under the
/// current posterior. At uncapped Class-1 states this equals `rho_star`.
pub fn aggregate_lie_rate(
    machine: &EquilibriumMachine,
    state: &EquilibriumState,
) -> Result<f64, MachineError> {
    let pr = machine.prescribe(state)?;
    Ok(pr.aggregate_prob_high(&state.posterior, StateOfWorld::Low))
}

impl EquilibriumMachine {
    /// Convenience: machine value at the initial state.
    pub fn initial_value(&self) -> Vec<f64> {
        self.continuation_value(&self.initial_state())
    }

    pub fn view(&self) -> CostView {
        self.params.view
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn baseline(delta: f64) -> GameParams {
        GameParams::new(0.25, delta, vec![0.5, 0.2], vec![0.5, 0.5], CostView::NonConsequentialist)
            .unwrap()
    }

    fn machine(delta: f64, rho: f64, preset: WeightPreset) -> EquilibriumMachine {
        EquilibriumMachine::new(baseline(delta), rho, preset).unwrap()
    }

    #[test]
    fn initial_presets() {
        // Simple mixture at rho = rho_star - epsilon approaches (1/2, 1/4, 1/4).
        let m = machine(0.9, 1.0 / 3.0 - 1e-9, WeightPreset::Mixture);
        let s = m.initial_state();
        assert_abs_diff_eq!(s.weights[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(s.weights[1], 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(s.weights[2], 0.25, epsilon = 1e-6);
        // Calibrated preset near rho_star approaches (5/9, 5/18, 1/6).
        let m = machine(0.9, 1.0 / 3.0 - 1e-9, WeightPreset::Target);
        let s = m.initial_state();
        assert_abs_diff_eq!(s.weights[0], 5.0 / 9.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.weights[1], 5.0 / 18.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.weights[2], 1.0 / 6.0, epsilon = 1e-6);
        // rho = 0 starts absorbed at full honesty.
        let m = machine(0.9, 0.0, WeightPreset::Target);
        let s = m.initial_state();
        assert_eq!(s.phase, Phase::Absorbing);
        assert_eq!(s.weights, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_weights_outside_polytope() {
        let err = EquilibriumMachine::new(
            baseline(0.9),
            0.3,
            WeightPreset::Custom([0.0, 0.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, MachineError::WeightsOutsidePolytope(..)));
    }

    #[test]
    fn class1_low_high_step_matches_hand_values() {
        let m = machine(0.9, 0.3, WeightPreset::Custom([0.5, 0.25, 0.25]));
        let s = m.initial_state();
        assert_eq!(s.phase, Phase::Class1);
        let next = m.step(&s, StateOfWorld::Low, Message::High).unwrap();
        assert_abs_diff_eq!(next.weights[0], 0.574074, epsilon = 1e-6);
        assert_abs_diff_eq!(next.weights[1], 0.138889, epsilon = 1e-6);
        assert_abs_diff_eq!(next.weights[2], 0.287037, epsilon = 1e-6);
        assert_abs_diff_eq!(next.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // (h, h) leaves everything unchanged.
        let same = m.step(&s, StateOfWorld::High, Message::High).unwrap();
        assert_eq!(same, s);
    }

    #[test]
    fn belief_updates_match_hand_values() {
        let m = machine(0.99, 0.3, WeightPreset::Target);
        let mut consts = m.consts.clone();
        consts.eta_star = 0.1;
        consts.lambda = 0.05;
        let (eta_lh, eta_ll) = belief_update_class1(&consts, 0.5);
        assert_abs_diff_eq!(eta_lh, 0.486667, epsilon = 1e-6);
        assert_abs_diff_eq!(eta_ll, 0.506667, epsilon = 1e-6);
        let (x1, x2) = mixing_from_posteriors(0.5, eta_lh, eta_ll).unwrap();
        assert_abs_diff_eq!(x1, 0.675556, epsilon = 1e-6);
        assert_abs_diff_eq!(x2, 0.657778, epsilon = 1e-6);
        assert!(x1 > x2);
        // Fixed point at eta_star.
        let (a, b) = belief_update_class1(&consts, 0.1);
        assert_abs_diff_eq!(a, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn aggregate_lie_rate_is_rho_star_when_uncapped() {
        let m = machine(0.99, 0.3, WeightPreset::Target);
        let s = m.initial_state();
        assert_eq!(s.phase, Phase::Class1);
        assert!(!class1_cap_binds(&m.consts, s.eta()));
        let rate = aggregate_lie_rate(&m, &s).unwrap();
        assert_abs_diff_eq!(rate, m.consts.rho_star, epsilon = 1e-12);
    }

    #[test]
    fn invariants_hold_on_a_mixed_path() {
        let m = machine(0.99, 0.3, WeightPreset::Target);
        let mut s = m.initial_state();
        let script = [
            (StateOfWorld::Low, Message::High),
            (StateOfWorld::High, Message::High),
            (StateOfWorld::Low, Message::Low),
            (StateOfWorld::Low, Message::High),
            (StateOfWorld::Low, Message::Low),
            (StateOfWorld::Low, Message::Low),
            (StateOfWorld::Low, Message::High),
        ];
        for (w, msg) in script {
            for (name, residual, tol) in m.invariant_residuals(&s) {
                assert!(residual <= tol, "{name} residual {residual} at {s:?}");
            }
            s = m.step(&s, w, msg).unwrap();
        }
    }

    #[test]
    fn deviation_high_low_is_punished_at_zero_for_type1() {
        let m = machine(0.99, 0.3, WeightPreset::Target);
        let s = m.initial_state();
        let punished = m.step(&s, StateOfWorld::High, Message::Low).unwrap();
        assert_eq!(punished.phase, Phase::Absorbing);
        let v = m.continuation_value(&punished);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn repeated_low_high_reaches_class2_then_absorbs() {
        let m = machine(0.99, 0.3, WeightPreset::Target);
        let mut s = m.initial_state();
        let mut saw_class2 = false;
        for _ in 0..2000 {
            if s.phase == Phase::Absorbing {
                break;
            }
            if s.phase == Phase::Class2 {
                saw_class2 = true;
            }
            s = m.step(&s, StateOfWorld::Low, Message::High).unwrap();
        }
        assert!(saw_class2, "trusted-lying weight should pass through Class 2");
        assert_eq!(s.phase, Phase::Absorbing);
        // Absorption from Class 2 after (l, h) collapses belief on the liar.
        assert_abs_diff_eq!(s.posterior[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn repeated_low_low_caps_belief_and_absorbs() {
        let m = machine(0.99, 0.3, WeightPreset::Target);
        let mut s = m.initial_state();
        let mut iterations = 0;
        while s.phase != Phase::Absorbing && iterations < 5000 {
            // Eta must be nondecreasing along truthful low reports.
            let eta_before = s.eta();
            s = m.step(&s, StateOfWorld::Low, Message::Low).unwrap();
            if s.phase != Phase::Absorbing {
                assert!(s.eta() >= eta_before - 1e-12);
            }
            iterations += 1;
        }
        assert_eq!(s.phase, Phase::Absorbing);
        assert_abs_diff_eq!(s.eta(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn class2_lie_probability_rules() {
        // Two types: the low-cost type lies with min{1, rho_star/(1-eta)}.
        let m = machine(0.99, 0.3, WeightPreset::Target);
        let mut s = m.initial_state();
        while s.phase == Phase::Class1 {
            s = m.step(&s, StateOfWorld::Low, Message::High).unwrap();
        }
        assert_eq!(s.phase, Phase::Class2);
        let y = m.class2_lie_prob(&s);
        let expect = (m.consts.rho_star / (1.0 - s.eta())).min(1.0);
        assert_abs_diff_eq!(y, expect, epsilon = 1e-12);
    }
}
