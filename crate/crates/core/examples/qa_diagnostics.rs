//! Answer scoring, then a solver run with the question alone and with the
//! gold evidence.

use hopsynth::bridge::run_bridge;
use hopsynth::eval::qa::{diagnostic_qa, em, token_f1, SolverMode};
use hopsynth::sim::{SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (pred, gold) in [("The Osk University", "Osk University"), ("Osk", "Osk University"), ("1871.", "1871"), ("Brenmoor", "Arlen Vale")] {
        println!("{pred:>20} vs {gold:<16} EM {:.0}  F1 {:.3}", em(pred, gold).unwrap(), token_f1(pred, gold).unwrap());
    }

    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let data = run_bridge(&env.context(), &RunParams { budget: 15, ..RunParams::default() })?.outputs;
    let solver = env.solver("sim-solver");
    println!();
    for mode in [SolverMode::QOnly, SolverMode::QDocs] {
        let r = diagnostic_qa(&data, &solver, "sim-solver", mode);
        println!("{:<7} EM {:5.1}  F1 {:5.1}  n {}", mode.to_string(), 100.0 * r.em, 100.0 * r.f1, r.n);
    }
    Ok(())
}
