//! Replay a fixed failure schedule and read the per-stage rejection ledger.

use hopsynth::bridge::run_bridge;
use hopsynth::comparison::{run_comparison, CompareParams};
use hopsynth::record::{RejectionLedger, Stage};
use hopsynth::sim::{bridge_schedule_world, comparison_schedule_world, BridgeSchedule, ComparisonSchedule, SimEnv};
use hopsynth::synth::RunParams;

fn show(label: &str, l: &RejectionLedger, stages: &[Stage]) {
    println!("{label}: {} attempts, {} successes, reconciles {}", l.attempts, l.successes, l.reconciles());
    for s in stages {
        println!("  {:<16} {:>3}  {:>5.1}%", s.name(), l.rejected(*s), 100.0 * l.rate(*s));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = BridgeSchedule::PUBLISHED;
    let (w, pool) = bridge_schedule_world(&s, 11);
    let env = SimEnv::new(w)?;
    let run = RunParams { budget: s.sources(), source_pool: Some(pool), ..RunParams::default() };
    let out = run_bridge(&env.context(), &run)?;
    show("bridge", &out.ledger, &[Stage::Step3aSubq, Stage::Step3bFusion, Stage::PolisherReject]);

    let s = ComparisonSchedule::PUBLISHED;
    let (w, pool) = comparison_schedule_world(&s, 11);
    let env = SimEnv::new(w)?;
    let run = RunParams { budget: s.sources(), source_pool: Some(pool), ..RunParams::default() };
    let out = run_comparison(&env.context(), &run, &CompareParams::default())?;
    show("comparison", &out.ledger, &[Stage::Filter, Stage::Construction, Stage::PolisherReject]);
    Ok(())
}
