//! The stage game: binary states, cheap-talk messages, a receiver who either
//! acts on the message or not, and senders whose per-lie cost is their type.

use crate::error::GameError;
use crate::scalar::Scalar;

/// The realized state of the world each period.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum StateOfWorld {
    High,
    Low,
}

/// The sender's message.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum Message {
    High,
    Low,
}

/// The receiver's physical action.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum Action {
    High,
    Low,
}

/// Pure sender stage strategies: maps from state to message.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash, PartialOrd, Ord)]
pub enum SenderAction {
    /// Report the state truthfully.
    Honest,
    /// Send the high message in both states (lie in the low state).
    AlwaysHigh,
    /// Send the low message in both states (lie in the high state).
    AlwaysLow,
    /// Misreport both states.
    Invert,
}

/// Pure receiver stage strategies: maps from message to action.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash, PartialOrd, Ord)]
pub enum ReceiverAction {
    /// Act high after the high message, low after the low message.
    Trust,
    /// Act low after either message.
    NeverTrust,
    /// Act low after the high message, high after the low message.
    Oppose,
    /// Act high after either message.
    AlwaysAct,
}

pub const SENDER_ACTIONS: [SenderAction; 4] = [
    SenderAction::Honest,
    SenderAction::AlwaysHigh,
    SenderAction::AlwaysLow,
    SenderAction::Invert,
];

pub const RECEIVER_ACTIONS: [ReceiverAction; 4] = [
    ReceiverAction::Trust,
    ReceiverAction::NeverTrust,
    ReceiverAction::Oppose,
    ReceiverAction::AlwaysAct,
];

impl SenderAction {
    pub fn message(self, w: StateOfWorld) -> Message {
        match (self, w) {
            (SenderAction::Honest, StateOfWorld::High) => Message::High,
            (SenderAction::Honest, StateOfWorld::Low) => Message::Low,
            (SenderAction::AlwaysHigh, _) => Message::High,
            (SenderAction::AlwaysLow, _) => Message::Low,
            (SenderAction::Invert, StateOfWorld::High) => Message::Low,
            (SenderAction::Invert, StateOfWorld::Low) => Message::High,
        }
    }

    pub fn index(self) -> usize {
        match self {
            SenderAction::Honest => 0,
            SenderAction::AlwaysHigh => 1,
            SenderAction::AlwaysLow => 2,
            SenderAction::Invert => 3,
        }
    }
}

impl ReceiverAction {
    pub fn action(self, m: Message) -> Action {
        match (self, m) {
            (ReceiverAction::Trust, Message::High) => Action::High,
            (ReceiverAction::Trust, Message::Low) => Action::Low,
            (ReceiverAction::NeverTrust, _) => Action::Low,
            (ReceiverAction::Oppose, Message::High) => Action::Low,
            (ReceiverAction::Oppose, Message::Low) => Action::High,
            (ReceiverAction::AlwaysAct, _) => Action::High,
        }
    }

    pub fn index(self) -> usize {
        match self {
            ReceiverAction::Trust => 0,
            ReceiverAction::NeverTrust => 1,
            ReceiverAction::Oppose => 2,
            ReceiverAction::AlwaysAct => 3,
        }
    }
}

/// How a lie is costed.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Hash)]
pub enum CostView {
    /// Every misreport costs `c`, regardless of consequences.
    NonConsequentialist,
    /// A misreport costs `c` scaled by how much it degrades the receiver's
    /// realized payoff relative to her best feasible response in that state.
    Consequentialist,
}

/// Primitives of the repeated game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameParams {
    /// Probability of the high state, in (0, 1/2).
    pub p_h: f64,
    /// Common discount factor, in (0, 1).
    pub delta: f64,
    /// Lying costs, strictly decreasing, nonnegative. `costs[0]` is the
    /// highest cost; the last entry is the lowest.
    pub costs: Vec<f64>,
    /// Prior over types, strictly positive, summing to one.
    pub prior: Vec<f64>,
    pub view: CostView,
}

impl GameParams {
    pub fn new(
        p_h: f64,
        delta: f64,
        costs: Vec<f64>,
        prior: Vec<f64>,
        view: CostView,
    ) -> Result<Self, GameError> {
        let p = Self { p_h, delta, costs, prior, view };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if !(self.p_h > 0.0 && self.p_h < 0.5) {
            return Err(GameError::ProbabilityOutOfRange(self.p_h));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(GameError::DiscountOutOfRange(self.delta));
        }
        if self.costs.is_empty() {
            return Err(GameError::BadCosts("empty".into()));
        }
        for w in self.costs.windows(2) {
            if !(w[0] > w[1]) {
                return Err(GameError::BadCosts(format!("{:?} not strictly decreasing", self.costs)));
            }
        }
        if *self.costs.last().unwrap() < 0.0 {
            return Err(GameError::BadCosts(format!("{:?} has negative entries", self.costs)));
        }
        if self.costs.len() != self.prior.len() {
            return Err(GameError::LengthMismatch {
                costs: self.costs.len(),
                prior: self.prior.len(),
            });
        }
        if self.prior.iter().any(|&x| x <= 0.0) {
            return Err(GameError::BadPrior(format!("{:?} has nonpositive entries", self.prior)));
        }
        let sum: f64 = self.prior.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(GameError::BadPrior(format!("sums to {sum}")));
        }
        Ok(())
    }

    pub fn n_types(&self) -> usize {
        self.costs.len()
    }

    /// Probability of a lie being tolerated by a trusting receiver:
    /// `rho_star = p_h / (1 - p_h)`, the lie frequency at which the high
    /// message carries exactly even odds.
    pub fn rho_star(&self) -> f64 {
        self.p_h / (1.0 - self.p_h)
    }

    /// Effective discount factor on periods with a low state.
    pub fn delta_hat(&self) -> f64 {
        self.delta * (1.0 - self.p_h) / (1.0 - self.delta * self.p_h)
    }

    pub fn max_cost_below_one(&self) -> Result<(), GameError> {
        if self.costs[0] >= 1.0 {
            return Err(GameError::RequiresCostsBelowOne(self.costs[0]));
        }
        Ok(())
    }
}

/// Receiver's payoff from a realized (state, action) pair: 0 when passive,
/// +1 for acting in the high state, -1 for acting in the low state.
pub fn receiver_utility<S: Scalar>(w: StateOfWorld, act: Action) -> S {
    match (act, w) {
        (Action::Low, _) => S::zero(),
        (Action::High, StateOfWorld::High) => S::one(),
        (Action::High, StateOfWorld::Low) => -S::one(),
    }
}

/// Sender's realized payoff in state `w` under pure stage actions.
pub fn sender_realized_payoff<S: Scalar>(
    w: StateOfWorld,
    c: &S,
    a: SenderAction,
    b: ReceiverAction,
    view: CostView,
) -> S {
    let m = a.message(w);
    let act = b.action(m);
    let base = match act {
        Action::High => S::one(),
        Action::Low => S::zero(),
    };
    let lied = m != SenderAction::Honest.message(w);
    if !lied {
        return base;
    }
    match view {
        CostView::NonConsequentialist => base - c.clone(),
        CostView::Consequentialist => {
            // Harm scale: receiver's best attainable payoff over her two
            // feasible responses, minus what she actually got.
            let got: S = receiver_utility(w, act);
            let best_h: S = receiver_utility(w, b.action(Message::High));
            let best_l: S = receiver_utility(w, b.action(Message::Low));
            let best = if best_h >= best_l { best_h } else { best_l };
            base - c.clone() * (best - got)
        }
    }
}

/// Sender's expected stage payoff under pure stage actions.
pub fn sender_stage_payoff_in<S: Scalar>(
    p_h: &S,
    c: &S,
    a: SenderAction,
    b: ReceiverAction,
    view: CostView,
) -> S {
    let hi = sender_realized_payoff(StateOfWorld::High, c, a, b, view);
    let lo = sender_realized_payoff(StateOfWorld::Low, c, a, b, view);
    p_h.clone() * hi + (S::one() - p_h.clone()) * lo
}

/// Receiver's expected stage payoff under pure stage actions.
pub fn receiver_stage_payoff_in<S: Scalar>(p_h: &S, a: SenderAction, b: ReceiverAction) -> S {
    let hi: S = receiver_utility(StateOfWorld::High, b.action(a.message(StateOfWorld::High)));
    let lo: S = receiver_utility(StateOfWorld::Low, b.action(a.message(StateOfWorld::Low)));
    p_h.clone() * hi + (S::one() - p_h.clone()) * lo
}

/// A mixed sender stage action: probabilities over `SENDER_ACTIONS`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSenderAction(pub [f64; 4]);

impl MixedSenderAction {
    pub fn pure(a: SenderAction) -> Self {
        let mut w = [0.0; 4];
        w[a.index()] = 1.0;
        MixedSenderAction(w)
    }

    /// Mix of `Honest` (weight `1 - lie_prob`) and `AlwaysHigh` (`lie_prob`).
    pub fn honest_or_always_high(lie_prob: f64) -> Self {
        MixedSenderAction([1.0 - lie_prob, lie_prob, 0.0, 0.0])
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.0.iter().any(|&x| x < -1e-12) {
            return Err(GameError::InvalidArgument(format!("negative weight in {:?}", self.0)));
        }
        let s: f64 = self.0.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(GameError::InvalidArgument(format!("weights sum to {s}")));
        }
        Ok(())
    }

    /// Probability of sending the high message in state `w`.
    pub fn prob_high_message(&self, w: StateOfWorld) -> f64 {
        SENDER_ACTIONS
            .iter()
            .zip(self.0.iter())
            .filter(|(a, _)| a.message(w) == Message::High)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Sender's expected stage payoff (f64 convenience on `GameParams`).
pub fn sender_stage_payoff(params: &GameParams, c: f64, a: SenderAction, b: ReceiverAction) -> f64 {
    sender_stage_payoff_in(&params.p_h, &c, a, b, params.view)
}

/// Receiver's expected stage payoff against a mixed sender action.
pub fn receiver_stage_payoff(params: &GameParams, alpha: &MixedSenderAction, b: ReceiverAction) -> f64 {
    SENDER_ACTIONS
        .iter()
        .zip(alpha.0.iter())
        .map(|(a, p)| p * receiver_stage_payoff_in(&params.p_h, *a, b))
        .sum()
}

/// All receiver pure actions maximizing her expected payoff against `alpha`,
/// ties included (tolerance 1e-12).
pub fn receiver_best_replies(
    params: &GameParams,
    alpha: &MixedSenderAction,
) -> Result<Vec<ReceiverAction>, GameError> {
    alpha.validate()?;
    let vals: Vec<f64> =
        RECEIVER_ACTIONS.iter().map(|&b| receiver_stage_payoff(params, alpha, b)).collect();
    let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(RECEIVER_ACTIONS
        .iter()
        .zip(vals.iter())
        .filter(|(_, &v)| v >= best - 1e-12)
        .map(|(&b, _)| b)
        .collect())
}
