//! A common interface for the equilibrium, punishment, and composite state
//! machines so the simulator and verifier can drive any of them.

use crate::error::MachineError;
use crate::stage_game::{
    sender_realized_payoff, Action, GameParams, Message, MixedSenderAction, ReceiverAction,
    SenderAction, StateOfWorld,
};

/// What play looks like at a state: the receiver's (pure) action rule and
/// each type's mixed stage action.
#[derive(Clone, Debug, PartialEq)]
pub struct Prescription {
    pub receiver: ReceiverAction,
    /// Per-type mixture over the four pure sender stage actions.
    pub sender: Vec<MixedSenderAction>,
}

impl Prescription {
    /// Probability of the high message in state `w`, aggregated under the
    /// posterior weights provided.
    pub fn aggregate_prob_high(&self, posterior: &[f64], w: StateOfWorld) -> f64 {
        self.sender
            .iter()
            .zip(posterior.iter())
            .map(|(mix, &q)| q * mix.prob_high_message(w))
            .sum()
    }

    /// Probability that type `j` sends message `m` in state `w`.
    pub fn message_prob(&self, j: usize, w: StateOfWorld, m: Message) -> f64 {
        let hi = self.sender[j].prob_high_message(w);
        match m {
            Message::High => hi,
            Message::Low => 1.0 - hi,
        }
    }
}

/// A deterministic transition system over public histories. States are
/// immutable values; `step` consumes an observed (state-of-world, message)
/// pair exactly as the receivers would.
pub trait Machine {
    type State: Clone + std::fmt::Debug;

    fn initial_state(&self) -> Self::State;
    fn n_types(&self) -> usize;
    fn prescribe(&self, state: &Self::State) -> Result<Prescription, MachineError>;
    fn step(
        &self,
        state: &Self::State,
        omega: StateOfWorld,
        message: Message,
    ) -> Result<Self::State, MachineError>;

    /// The payoff vector the machine promises at `state`.
    fn continuation_value(&self, state: &Self::State) -> Vec<f64>;

    /// Posterior over types at `state` (receivers' belief).
    fn posterior(&self, state: &Self::State) -> Vec<f64>;

    /// Short label of the state's phase, for trace output and statistics.
    fn phase_label(&self, state: &Self::State) -> &'static str;

    /// Whether learning has stopped (play is absorbed in a pure regime).
    fn is_absorbed(&self, state: &Self::State) -> bool;

    /// Named invariant residuals at a state (promise keeping, indifference,
    /// Bayes consistency, …): (name, |residual|, tolerance).
    fn invariant_residuals(&self, state: &Self::State) -> Vec<(&'static str, f64, f64)>;

    /// Per-type value adjustment applied when `state` was entered through an
    /// out-of-domain renormalization: `continuation_value(state)` minus the
    /// value the one-period recursion would have required. `None` for
    /// ordinary states. The recursion residuals net this adjustment out; its
    /// magnitude and frequency are reported by the simulator instead.
    fn entry_adjustment(&self, _state: &Self::State) -> Option<Vec<f64>> {
        None
    }
}

/// Realized stage payoff of a sender of cost `c` who delivers message `m` in
/// state `w` against receiver rule `b`.
pub fn message_payoff(params: &GameParams, c: f64, w: StateOfWorld, m: Message, b: ReceiverAction) -> f64 {
    let a = if m == SenderAction::Honest.message(w) {
        SenderAction::Honest
    } else if m == Message::High {
        SenderAction::AlwaysHigh
    } else {
        SenderAction::AlwaysLow
    };
    sender_realized_payoff(w, &c, a, b, params.view)
}

/// Promise-keeping residual at a state: the largest gap, over types, between
/// the promised payoff and its one-period expansion under the prescription.
pub fn promise_keeping_residual<M: Machine>(
    machine: &M,
    params: &GameParams,
    state: &M::State,
) -> f64 {
    let prescription = match machine.prescribe(state) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    let v_now = machine.continuation_value(state);
    let delta = params.delta;
    let mut worst = 0.0f64;
    for j in 0..machine.n_types() {
        let mut rhs = 0.0;
        for (omega, p_w) in [(StateOfWorld::High, params.p_h), (StateOfWorld::Low, 1.0 - params.p_h)]
        {
            for m in [Message::High, Message::Low] {
                let pm = prescription.message_prob(j, omega, m);
                if pm <= 0.0 {
                    continue;
                }
                let stage = message_payoff(params, params.costs[j], omega, m, prescription.receiver);
                let next = match machine.step(state, omega, m) {
                    Ok(s) => s,
                    Err(_) => return f64::INFINITY,
                };
                let mut v_next = machine.continuation_value(&next)[j];
                if let Some(adj) = machine.entry_adjustment(&next) {
                    v_next -= adj[j];
                }
                rhs += p_w * pm * ((1.0 - delta) * stage + delta * v_next);
            }
        }
        worst = worst.max((v_now[j] - rhs).abs());
    }
    worst
}

/// Indifference residual at a state: for every type strictly mixing over the
/// low-state message, the gap between the lie branch and the honest branch.
pub fn indifference_residual<M: Machine>(
    machine: &M,
    params: &GameParams,
    state: &M::State,
) -> f64 {
    let prescription = match machine.prescribe(state) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    let mixing: Vec<usize> = (0..machine.n_types())
        .filter(|&j| {
            let y = prescription.message_prob(j, StateOfWorld::Low, Message::High);
            y > 1e-12 && y < 1.0 - 1e-12
        })
        .collect();
    if mixing.is_empty() {
        return 0.0;
    }
    let (next_h, next_l) = match (
        machine.step(state, StateOfWorld::Low, Message::High),
        machine.step(state, StateOfWorld::Low, Message::Low),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return f64::INFINITY,
    };
    let mut vh = machine.continuation_value(&next_h);
    let mut vl = machine.continuation_value(&next_l);
    if let Some(adj) = machine.entry_adjustment(&next_h) {
        for (v, a) in vh.iter_mut().zip(&adj) {
            *v -= a;
        }
    }
    if let Some(adj) = machine.entry_adjustment(&next_l) {
        for (v, a) in vl.iter_mut().zip(&adj) {
            *v -= a;
        }
    }
    let delta = params.delta;
    let mut worst = 0.0f64;
    for j in mixing {
        let lie = (1.0 - delta)
            * message_payoff(params, params.costs[j], StateOfWorld::Low, Message::High, prescription.receiver)
            + delta * vh[j];
        let tell = (1.0 - delta)
            * message_payoff(params, params.costs[j], StateOfWorld::Low, Message::Low, prescription.receiver)
            + delta * vl[j];
        worst = worst.max((lie - tell).abs());
    }
    worst
}

/// Receiver best-reply residual: for each positive-probability message, how
/// far the prescribed response falls short of optimal against the implied
/// posterior over states.
pub fn receiver_best_reply_residual<M: Machine>(
    machine: &M,
    params: &GameParams,
    state: &M::State,
) -> f64 {
    let prescription = match machine.prescribe(state) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    let posterior = machine.posterior(state);
    let ph_m = prescription.aggregate_prob_high(&posterior, StateOfWorld::High);
    let pl_m = prescription.aggregate_prob_high(&posterior, StateOfWorld::Low);
    let mut worst = 0.0f64;
    for m in [Message::High, Message::Low] {
        let (like_h, like_l) = match m {
            Message::High => (ph_m, pl_m),
            Message::Low => (1.0 - ph_m, 1.0 - pl_m),
        };
        let mass = params.p_h * like_h + (1.0 - params.p_h) * like_l;
        if mass <= 1e-15 {
            continue;
        }
        let post_high = params.p_h * like_h / mass;
        let viol = match prescription.receiver.action(m) {
            Action::High => 0.5 - post_high,
            Action::Low => post_high - 0.5,
        };
        worst = worst.max(viol);
    }
    worst
}

/// Belief-martingale residual in the low state: the message-probability-
/// weighted next-period posteriors must average back to today's posterior.
pub fn belief_martingale_residual<M: Machine>(machine: &M, state: &M::State) -> f64 {
    let prescription = match machine.prescribe(state) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    let posterior = machine.posterior(state);
    let n = machine.n_types();
    let mut mixes: Vec<(f64, Vec<f64>)> = Vec::new();
    for m in [Message::High, Message::Low] {
        let pm: f64 = (0..n)
            .map(|j| posterior[j] * prescription.message_prob(j, StateOfWorld::Low, m))
            .sum();
        if pm <= 1e-15 {
            continue;
        }
        match machine.step(state, StateOfWorld::Low, m) {
            Ok(next) => mixes.push((pm, machine.posterior(&next))),
            Err(_) => return f64::INFINITY,
        }
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        let mixed: f64 = mixes.iter().map(|(pm, post)| pm * post[j]).sum();
        worst = worst.max((mixed - posterior[j]).abs());
    }
    worst
}
