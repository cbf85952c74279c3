//! Runs the ablation modes and the target-only baseline on the synthetic
//! heterogeneous task over several seeds and prints mean accuracies.
//!
//! cargo run --release --example synthetic_benchmark -- [seeds] [max_iters] [config.toml]

use std::time::Instant;

use handa::data::{make_synthetic, SplitSpec, SyntheticSpec};
use handa::eval::mean_std;
use handa::experiment::Experiment;
use handa::trainer::{ablate, train_target_only, AblationMode, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let max_iters: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let modes = [AblationMode::Full, AblationMode::NoSdl, AblationMode::NoAdv];
    let mut acc = vec![Vec::new(); modes.len() + 1];
    let start = Instant::now();
    for seed in 0..seeds {
        let spec = SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        };
        let (source, target) = make_synthetic(&spec)?;
        let exp = Experiment::prepare(&source, &target, &SplitSpec::new(10, seed), true)?;
        let base: TrainConfig = match args.get(3) {
            Some(path) => toml::from_str(&std::fs::read_to_string(path)?)?,
            None => TrainConfig::default(),
        };
        let cfg = TrainConfig {
            seed,
            max_outer_iters: max_iters,
            ..base
        };
        for (i, mode) in modes.iter().enumerate() {
            let out = ablate(*mode, &exp, &cfg)?;
            println!(
                "seed {seed} {mode:<8} acc {:.4} iters {} converged {:?}",
                out.metrics.accuracy, out.metrics.iterations, out.metrics.converged_at
            );
            acc[i].push(out.metrics.accuracy);
            if let Ok(dir) = std::env::var("TRACE_DIR") {
                std::fs::write(format!("{dir}/{mode}_{seed}.csv"), out.state.traces.to_csv())?;
            }
        }
        let (_, m) = train_target_only(&exp, &cfg)?;
        println!("seed {seed} target   acc {:.4} iters {}", m.accuracy, m.iterations);
        acc[modes.len()].push(m.accuracy);
    }
    let names = ["full", "nosdl", "noadv", "target-only"];
    for (name, a) in names.iter().zip(&acc) {
        let (m, s) = mean_std(a);
        println!("{name:<12} {m:.4} ± {s:.4}");
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
