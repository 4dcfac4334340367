//! Repeated judging of one dataset by two simulated judges of different
//! consistency, then the per-judge reliability summary and quality table.

use hopsynth::bridge::run_bridge;
use hopsynth::eval::judge::{aggregate_quality, format_quality_table, judge_dataset, reliability_report, AvgPolicy};
use hopsynth::eval::reliability::{fleiss_kappa, krippendorff_alpha, Metric};
use hopsynth::sim::{SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let data = run_bridge(&env.context(), &RunParams { budget: 20, ..RunParams::default() })?.outputs;

    let mut all = Vec::new();
    println!("{:<10} {:>6} {:>7} {:>7}", "judge", "AvgSD", "alpha", "kappa");
    for (name, noise) in [("steady", 50), ("jittery", 400)] {
        let batch = judge_dataset(&data, &env.judge(name, 1, noise), name, 5, true)?;
        let r = reliability_report(&batch.assessments, name, 5)?;
        println!("{name:<10} {:>6.3} {:>7.3} {:>7.3}", r.avg_sd, r.alpha, r.kappa.unwrap_or(f64::NAN));
        all.extend(batch.assessments);
    }
    println!();
    print!("{}", format_quality_table(&[("bridge".into(), aggregate_quality(&all, None, AvgPolicy::IncludeAll))]));

    // The metrics on their own, on three raters and four items.
    let ratings = vec![vec![5, 5, 4], vec![3, 3, 3], vec![4, 5, 4], vec![1, 2, 1]];
    let as_f: Vec<Vec<Option<f64>>> = ratings.iter().map(|r| r.iter().map(|&x| Some(f64::from(x))).collect()).collect();
    println!(
        "\nalpha nominal {:.3}  interval {:.3}  kappa {:.3}",
        krippendorff_alpha(&as_f, Metric::Nominal)?.value,
        krippendorff_alpha(&as_f, Metric::Interval)?.value,
        fleiss_kappa(&ratings)?.kappa
    );
    Ok(())
}
