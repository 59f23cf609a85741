//! Seeded Monte Carlo execution of any machine implementing [`Machine`].
//!
//! Each path draws a sender type (from the prior or fixed), then iterates the
//! game protocol: draw the state of the world, draw the message from the
//! type's prescribed mixture, apply the receiver's prescribed rule, record
//! the realized stage payoff, and advance the machine. Per-path generators
//! are derived from the master seed by path index, so results are
//! reproducible bit-for-bit and independent of execution order; paths are
//! embarrassingly parallel with no shared mutable state.
//!
//! Invariant residuals can be evaluated inline at every visited state. A
//! state identical to its predecessor is not re-checked (its residuals are a
//! pure function of the state), which keeps long quiet stretches cheap.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::MachineError;
use crate::machine::{message_payoff, Machine};
use crate::stage_game::{Action, GameParams, Message, StateOfWorld};

/// How the sender's persistent type is chosen per path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeMode {
    /// Draw the type from the prior independently on each path.
    Sampled,
    /// Fix the type index on every path.
    Fixed(usize),
}

/// Simulation settings.
#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Number of periods per path (≥ 1).
    pub horizon: usize,
    /// Number of independent paths (≥ 1).
    pub num_paths: usize,
    /// Master seed; path `i` uses stream `i` of the generator family.
    pub seed: u64,
    pub type_mode: TypeMode,
    /// Keep full per-period step records (memory ∝ paths × horizon).
    pub store_traces: bool,
    /// Evaluate machine invariant residuals at every visited state.
    pub check_invariants: bool,
}

impl SimConfig {
    pub fn new(horizon: usize, num_paths: usize, seed: u64, type_mode: TypeMode) -> Self {
        SimConfig {
            horizon,
            num_paths,
            seed,
            type_mode,
            store_traces: false,
            check_invariants: false,
        }
    }

    pub fn with_traces(mut self) -> Self {
        self.store_traces = true;
        self
    }

    pub fn with_invariant_checks(mut self) -> Self {
        self.check_invariants = true;
        self
    }
}

/// One recorded period of one path.
#[derive(Clone, Debug)]
pub struct StepRecord<S> {
    /// Machine state at the start of the period.
    pub state: S,
    pub omega: StateOfWorld,
    pub message: Message,
    pub action: Action,
    /// Realized sender stage payoff.
    pub payoff: f64,
}

/// One simulated path.
#[derive(Clone, Debug)]
pub struct PathRecord<S> {
    pub type_index: usize,
    /// Per-period records; empty unless traces are stored.
    pub steps: Vec<StepRecord<S>>,
    /// `(1-δ) Σ_t δ^t u_t` over the truncated horizon.
    pub discounted_payoff: f64,
    /// First period at which the machine reports absorption, if any.
    pub absorption_time: Option<usize>,
    /// Periods spent in each phase label.
    pub phase_counts: Vec<(&'static str, u32)>,
    /// Longest run of consecutive periods per phase label.
    pub max_phase_spell: Vec<(&'static str, u32)>,
    /// Most low-state periods inside one consecutive run, per phase label.
    pub max_low_spell: Vec<(&'static str, u32)>,
    /// Number of transitions whose target state carried an entry adjustment
    /// (the machine's out-of-domain renormalization guard).
    pub renormalizations: u32,
    /// Signed discounted sum of those adjustments for this path's type:
    /// the realized-minus-promised payoff contribution they induce.
    pub renormalization_bias: f64,
    /// Periods with a low state of the world, per phase label.
    pub low_state_counts: Vec<(&'static str, u32)>,
    /// Empirical continuation payoffs `(1-δ) Σ_{τ≥t} δ^{τ-t} u_τ` started at
    /// each decile of the horizon.
    pub decile_continuations: Vec<f64>,
}

impl<S> PathRecord<S> {
    fn count(table: &mut Vec<(&'static str, u32)>, label: &'static str, add: u32) {
        match table.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += add,
            None => table.push((label, add)),
        }
    }

    /// Count of periods in the phase with this label.
    pub fn phase_count(&self, label: &str) -> u32 {
        self.phase_counts.iter().find(|(l, _)| *l == label).map_or(0, |&(_, c)| c)
    }

    /// Longest consecutive spell in the phase with this label.
    pub fn phase_spell(&self, label: &str) -> u32 {
        self.max_phase_spell.iter().find(|(l, _)| *l == label).map_or(0, |&(_, c)| c)
    }

    /// Low-state period count in the phase with this label.
    pub fn low_state_count(&self, label: &str) -> u32 {
        self.low_state_counts.iter().find(|(l, _)| *l == label).map_or(0, |&(_, c)| c)
    }

    /// Most low-state periods inside one consecutive spell of this phase.
    pub fn low_spell(&self, label: &str) -> u32 {
        self.max_low_spell.iter().find(|(l, _)| *l == label).map_or(0, |&(_, c)| c)
    }
}

/// Mean and standard error of discounted payoffs for one type.
#[derive(Clone, Copy, Debug)]
pub struct TypeAggregate {
    pub type_index: usize,
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Worst observed residual of one named invariant across the ensemble.
#[derive(Clone, Copy, Debug)]
pub struct ResidualWorst {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    /// Path and period of the worst observation.
    pub path: usize,
    pub t: usize,
}

/// A full simulation run.
#[derive(Clone, Debug)]
pub struct PathEnsemble<S> {
    pub params: GameParams,
    pub config: SimConfig,
    pub paths: Vec<PathRecord<S>>,
    pub per_type: Vec<TypeAggregate>,
    /// Worst residual per invariant name (when checks were enabled).
    pub residuals: Vec<ResidualWorst>,
    /// Upper bound on the truncation error: `δ^T · max_t |u_t|`-style bound
    /// with the stage payoff bounded by `1 + c_1`.
    pub tail_bound: f64,
    /// Number of high states of the world observed across all periods.
    pub high_state_periods: u64,
    /// Total periods simulated.
    pub total_periods: u64,
}

impl<S> PathEnsemble<S> {
    /// Fraction of paths absorbed by period `t`.
    pub fn absorption_fraction(&self, t: usize) -> f64 {
        let hit =
            self.paths.iter().filter(|p| p.absorption_time.map_or(false, |a| a <= t)).count();
        hit as f64 / self.paths.len() as f64
    }

    /// Empirical frequency of the high state of the world.
    pub fn high_state_frequency(&self) -> f64 {
        self.high_state_periods as f64 / self.total_periods as f64
    }
}

/// A machine error raised mid-path, with the offending state serialized.
#[derive(Clone, Debug)]
pub struct SimError {
    pub path: usize,
    pub t: usize,
    pub state: String,
    pub source: MachineError,
}

impl std::fmt::Display for SimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "machine error on path {}, period {}: {} at state {}",
            self.path, self.t, self.source, self.state
        )
    }
}

impl std::error::Error for SimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

struct PathOutcome<S> {
    record: PathRecord<S>,
    residuals: HashMap<&'static str, ResidualWorst>,
    high_states: u64,
}

fn simulate_path<M: Machine>(
    machine: &M,
    params: &GameParams,
    config: &SimConfig,
    path_index: usize,
) -> Result<PathOutcome<M::State>, SimError>
where
    M::State: PartialEq,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(path_index as u64);
    let type_index = match config.type_mode {
        TypeMode::Fixed(j) => j,
        TypeMode::Sampled => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut drawn = params.prior.len() - 1;
            for (j, &q) in params.prior.iter().enumerate() {
                acc += q;
                if u < acc {
                    drawn = j;
                    break;
                }
            }
            drawn
        }
    };
    let cost = params.costs[type_index];
    let delta = params.delta;
    let horizon = config.horizon;

    let mut state = machine.initial_state();
    let mut record = PathRecord {
        type_index,
        steps: Vec::with_capacity(if config.store_traces { horizon } else { 0 }),
        discounted_payoff: 0.0,
        absorption_time: None,
        phase_counts: Vec::new(),
        max_phase_spell: Vec::new(),
        max_low_spell: Vec::new(),
        renormalizations: 0,
        renormalization_bias: 0.0,
        low_state_counts: Vec::new(),
        decile_continuations: vec![0.0; 10.min(horizon)],
    };
    let mut residuals: HashMap<&'static str, ResidualWorst> = HashMap::new();
    let mut high_states = 0u64;

    let check = |state: &M::State, t: usize, residuals: &mut HashMap<_, ResidualWorst>| {
        for (name, value, tolerance) in machine.invariant_residuals(state) {
            let entry = residuals.entry(name).or_insert(ResidualWorst {
                name,
                worst: f64::NEG_INFINITY,
                tolerance,
                path: path_index,
                t,
            });
            if value > entry.worst {
                entry.worst = value;
                entry.t = t;
            }
        }
    };
    if config.check_invariants {
        check(&state, 0, &mut residuals);
    }

    let deciles = record.decile_continuations.len();
    let decile_start = |d: usize| d * horizon / deciles;
    // Per-decile discount weights, activated when the decile time is reached.
    let mut decile_weights = vec![0.0f64; deciles];

    let mut weight = 1.0 - delta;
    let mut spell_label: Option<&'static str> = None;
    let mut spell_len = 0u32;
    let mut spell_lows = 0u32;

    for t in 0..horizon {
        let label = machine.phase_label(&state);
        PathRecord::<M::State>::count(&mut record.phase_counts, label, 1);
        if spell_label == Some(label) {
            spell_len += 1;
        } else {
            spell_label = Some(label);
            spell_len = 1;
            spell_lows = 0;
        }
        match record.max_phase_spell.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c = (*c).max(spell_len),
            None => record.max_phase_spell.push((label, spell_len)),
        }
        if record.absorption_time.is_none() && machine.is_absorbed(&state) {
            record.absorption_time = Some(t);
        }

        let omega = if rng.gen::<f64>() < params.p_h {
            StateOfWorld::High
        } else {
            StateOfWorld::Low
        };
        if omega == StateOfWorld::High {
            high_states += 1;
        } else {
            PathRecord::<M::State>::count(&mut record.low_state_counts, label, 1);
            spell_lows += 1;
            match record.max_low_spell.iter_mut().find(|(l, _)| *l == label) {
                Some((_, c)) => *c = (*c).max(spell_lows),
                None => record.max_low_spell.push((label, spell_lows)),
            }
        }

        let prescription = machine.prescribe(&state).map_err(|e| SimError {
            path: path_index,
            t,
            state: format!("{state:?}"),
            source: e,
        })?;
        let p_high = prescription.sender[type_index].prob_high_message(omega);
        let message = if rng.gen::<f64>() < p_high { Message::High } else { Message::Low };
        let action = prescription.receiver.action(message);
        let payoff = message_payoff(params, cost, omega, message, prescription.receiver);

        record.discounted_payoff += weight * payoff;
        for d in 0..deciles {
            if t == decile_start(d) {
                decile_weights[d] = 1.0 - delta;
            }
            if decile_weights[d] > 0.0 {
                record.decile_continuations[d] += decile_weights[d] * payoff;
                decile_weights[d] *= delta;
            }
        }
        weight *= delta;

        let next = machine.step(&state, omega, message).map_err(|e| SimError {
            path: path_index,
            t,
            state: format!("{state:?}"),
            source: e,
        })?;
        if let Some(adj) = machine.entry_adjustment(&next) {
            record.renormalizations += 1;
            // `weight` has already been advanced to (1−δ)δ^{t+1}; the
            // continuation entering at t+1 carries coefficient δ^{t+1}.
            record.renormalization_bias += weight / (1.0 - delta) * adj[type_index];
        }
        if config.check_invariants && next != state {
            check(&next, t + 1, &mut residuals);
        }
        if config.store_traces {
            record.steps.push(StepRecord { state, omega, message, action, payoff });
            state = next;
        } else {
            state = next;
        }
    }

    Ok(PathOutcome { record, residuals, high_states })
}

/// Run the Monte Carlo protocol. See the module documentation.
pub fn run<M: Machine + Sync>(
    machine: &M,
    params: &GameParams,
    config: &SimConfig,
) -> Result<PathEnsemble<M::State>, SimError>
where
    M::State: PartialEq + Send,
{
    assert!(config.horizon >= 1, "horizon must be at least 1");
    assert!(config.num_paths >= 1, "at least one path required");
    if let TypeMode::Fixed(j) = config.type_mode {
        assert!(j < params.n_types(), "fixed type index {j} out of range");
    }

    let outcomes: Result<Vec<PathOutcome<M::State>>, SimError> = (0..config.num_paths)
        .into_par_iter()
        .map(|i| simulate_path(machine, params, config, i))
        .collect();
    let outcomes = outcomes?;

    let mut residuals: HashMap<&'static str, ResidualWorst> = HashMap::new();
    let mut high_state_periods = 0u64;
    let mut paths = Vec::with_capacity(config.num_paths);
    for outcome in outcomes {
        high_state_periods += outcome.high_states;
        for (name, worst) in outcome.residuals {
            let entry = residuals.entry(name).or_insert(worst);
            if worst.worst > entry.worst {
                *entry = worst;
            }
        }
        paths.push(outcome.record);
    }

    let n_types = params.n_types();
    let mut per_type = Vec::new();
    for j in 0..n_types {
        let payoffs: Vec<f64> =
            paths.iter().filter(|p| p.type_index == j).map(|p| p.discounted_payoff).collect();
        if payoffs.is_empty() {
            continue;
        }
        let count = payoffs.len();
        let mean = payoffs.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            payoffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count as f64 - 1.0)
        } else {
            0.0
        };
        per_type.push(TypeAggregate {
            type_index: j,
            count,
            mean,
            std_error: (var / count as f64).sqrt(),
        });
    }

    let mut residuals: Vec<ResidualWorst> = residuals.into_values().collect();
    residuals.sort_by_key(|r| r.name);
    let tail_bound = params.delta.powi(config.horizon as i32) * (1.0 + params.costs[0]);
    Ok(PathEnsemble {
        params: params.clone(),
        config: config.clone(),
        paths,
        per_type,
        residuals,
        tail_bound,
        high_state_periods,
        total_periods: (config.num_paths * config.horizon) as u64,
    })
}

/// Per-ensemble counting report used by the equilibrium-machine lemmas.
#[derive(Clone, Debug)]
pub struct PhaseReport {
    /// Longest rebounding spell on any path.
    pub max_rebound_spell: u32,
    /// Largest per-path count of Class-2 periods with a low state.
    pub max_class2_low: u32,
    /// Absorption fractions at `T/2` and `T`.
    pub absorption_half: f64,
    pub absorption_full: f64,
}

/// Summarize phase statistics of an ensemble (any machine; labels that do
/// not occur count as zero).
pub fn phase_statistics<S>(ensemble: &PathEnsemble<S>) -> PhaseReport {
    let max_rebound_spell =
        ensemble.paths.iter().map(|p| p.phase_spell("rebounding")).max().unwrap_or(0);
    let max_class2_low =
        ensemble.paths.iter().map(|p| p.low_state_count("class2")).max().unwrap_or(0);
    PhaseReport {
        max_rebound_spell,
        max_class2_low,
        absorption_half: ensemble.absorption_fraction(ensemble.config.horizon / 2),
        absorption_full: ensemble.absorption_fraction(ensemble.config.horizon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{EquilibriumMachine, WeightPreset};
    use crate::machine::Machine;
    use crate::stage_game::CostView;
    use approx::assert_abs_diff_eq;

    fn params() -> GameParams {
        GameParams::new(0.25, 0.99, vec![0.5, 0.2], vec![0.5, 0.5], CostView::NonConsequentialist)
            .unwrap()
    }

    #[test]
    fn honest_preset_pays_every_type_p_h_exactly() {
        let params = params();
        let machine = EquilibriumMachine::new(params.clone(), 0.0, WeightPreset::Target).unwrap();
        let config = SimConfig::new(200, 16, 7, TypeMode::Sampled).with_invariant_checks();
        let ensemble = run(&machine, &params, &config).unwrap();
        for path in &ensemble.paths {
            // (1-δ) Σ_{t<T} δ^t p_h-payoffs: honest play under trust pays 1
            // in high states and 0 in low ones, so only truncation noise
            // separates the discounted payoff from its per-state realization.
            assert_eq!(path.absorption_time, Some(0));
        }
        for agg in &ensemble.per_type {
            // E[(1-δ) Σ δ^t 1{ω_t=h}] = p_h (1 - δ^T).
            let target = 0.25 * (1.0 - 0.99f64.powi(200));
            assert!((agg.mean - target).abs() < 3.0 * agg.std_error + 0.05);
        }
        for r in &ensemble.residuals {
            assert!(r.worst <= r.tolerance, "{}: {} > {}", r.name, r.worst, r.tolerance);
        }
    }

    #[test]
    fn ensembles_are_reproducible_and_seed_sensitive() {
        let params = params();
        let machine = EquilibriumMachine::new(params.clone(), 0.3, WeightPreset::Target).unwrap();
        let config = SimConfig::new(50, 8, 42, TypeMode::Sampled);
        let a = run(&machine, &params, &config).unwrap();
        let b = run(&machine, &params, &config).unwrap();
        let payoffs = |e: &PathEnsemble<_>| -> Vec<f64> {
            e.paths.iter().map(|p| p.discounted_payoff).collect::<Vec<_>>()
        };
        assert_eq!(payoffs(&a), payoffs(&b));

        let mut other = config.clone();
        other.seed = 43;
        let c = run(&machine, &params, &other).unwrap();
        assert_ne!(payoffs(&a), payoffs(&c));
    }

    #[test]
    fn discounted_payoff_matches_trace_recomputation() {
        let params = params();
        let machine = EquilibriumMachine::new(params.clone(), 0.3, WeightPreset::Target).unwrap();
        let config = SimConfig::new(120, 6, 11, TypeMode::Fixed(1)).with_traces();
        let ensemble = run(&machine, &params, &config).unwrap();
        for path in &ensemble.paths {
            let recomputed: f64 = path
                .steps
                .iter()
                .enumerate()
                .map(|(t, s)| (1.0 - params.delta) * params.delta.powi(t as i32) * s.payoff)
                .sum();
            assert_abs_diff_eq!(recomputed, path.discounted_payoff, epsilon = 1e-12);
        }
    }

    #[test]
    fn state_frequency_concentrates_at_p_h() {
        let params = params();
        let machine = EquilibriumMachine::new(params.clone(), 0.3, WeightPreset::Target).unwrap();
        let config = SimConfig::new(400, 250, 3, TypeMode::Sampled);
        let ensemble = run(&machine, &params, &config).unwrap();
        let n = (400 * 250) as f64;
        let band = 4.0 * (0.25 * 0.75 / n).sqrt();
        assert!((ensemble.high_state_frequency() - 0.25).abs() <= band);
    }

    #[test]
    fn phase_report_orders_absorption_fractions() {
        let params = params();
        let machine = EquilibriumMachine::new(params.clone(), 0.3, WeightPreset::Target).unwrap();
        let config = SimConfig::new(600, 60, 5, TypeMode::Sampled);
        let ensemble = run(&machine, &params, &config).unwrap();
        let report = phase_statistics(&ensemble);
        assert!(report.absorption_full >= report.absorption_half);
        assert!(report.absorption_full > 0.0, "no path absorbed in 600 periods");
    }

    #[test]
    fn decile_continuations_recompute_from_traces() {
        let params = params();
        let machine = EquilibriumMachine::new(params.clone(), 0.3, WeightPreset::Target).unwrap();
        let config = SimConfig::new(100, 4, 19, TypeMode::Sampled).with_traces();
        let ensemble = run(&machine, &params, &config).unwrap();
        for path in &ensemble.paths {
            for (d, &got) in path.decile_continuations.iter().enumerate() {
                let t0 = d * 100 / 10;
                let expect: f64 = path.steps[t0..]
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        (1.0 - params.delta) * params.delta.powi(i as i32) * s.payoff
                    })
                    .sum();
                assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
            }
        }
    }
}
