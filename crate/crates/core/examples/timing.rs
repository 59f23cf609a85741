use repcomm::equilibrium::{EquilibriumMachine, WeightPreset};
use repcomm::simulator::{run, SimConfig, TypeMode};
use repcomm::stage_game::{CostView, GameParams};

fn main() {
    let p = GameParams::new(
        0.25,
        0.99,
        vec![0.5, 0.2],
        vec![0.5, 0.5],
        CostView::NonConsequentialist,
    )
    .unwrap();
    for (trig, reset) in [(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.0, 2.0), (0.0, 4.0), (1.0, 0.0), (2.0, 0.0)] {
        let mut m = EquilibriumMachine::new(p.clone(), 0.3, WeightPreset::Target).unwrap();
        m.face_trigger_steps = trig;
        m.face_reset_steps = reset;
        let promised = m.initial_value();
        for ty in 0..2usize {
            let config = SimConfig::new(3000, 3000, 99, TypeMode::Fixed(ty)).with_invariant_checks();
            let ens = run(&m, &p, &config).unwrap();
            let agg = &ens.per_type[0];
            let z = (agg.mean - promised[ty]) / agg.std_error;
            let total_renorms: u32 = ens.paths.iter().map(|r| r.renormalizations).sum();
            let mean_bias: f64 = ens.paths.iter().map(|r| r.renormalization_bias).sum::<f64>()
                / ens.paths.len() as f64;
            let worst = ens
                .residuals
                .iter()
                .filter(|r| r.name == "promise_keeping" || r.name == "indifference")
                .map(|r| r.worst)
                .fold(0.0f64, f64::max);
            println!(
                "trig {trig} reset {reset} type {ty}: z {:+.2} bias {:+.6} se {:.6} events {} absorbed {:.3} worst_resid {:.1e}",
                z,
                mean_bias,
                agg.std_error,
                total_renorms,
                ens.absorption_fraction(2999),
                worst
            );
        }
    }
}
