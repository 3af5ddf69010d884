// Temporary probe for the qualitative-regret experiment: median regret of
// the learner vs the uniform baseline on the two-state hard instance.

use mnlrl::agent::ObjectiveMode;
use mnlrl::estimator::PolytopeMode;
use mnlrl::hard::{HardMode, InfiniteHardParams};
use mnlrl::harness::{run_experiment, AgentKind, EnvironmentSpec, ExperimentConfig};
use std::path::PathBuf;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn regret_at(path: &std::path::Path, t: usize) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[0].parse::<usize>().unwrap() == t {
            return cols[6].parse().unwrap();
        }
    }
    panic!("t not found");
}

fn main() {
    let t0 = 10_000usize;
    let horizon = 4 * t0;
    let params =
        InfiniteHardParams::new(2, HardMode::Average { diameter: 20.0 }, horizon).unwrap();
    eprintln!(
        "Delta = {:.3e}, width = {:.3e}, J* = {:.6}",
        params.prob_gap,
        params.logit_width,
        params.optimal_gain()
    );
    let base = ExperimentConfig {
        environment: EnvironmentSpec::Infinite(params),
        agent: AgentKind::Ucmnlk,
        objective: ObjectiveMode::Average {
            diameter_bound: Some(20.0),
        },
        horizon,
        n_devi: None,
        delta: 0.1,
        c_beta: 1.7,
        lambda: None,
        eta: None,
        polytope_mode: PolytopeMode::Simplified,
        start_state: 0,
        seeds: (0..10).collect(),
        out_dir: PathBuf::from("/tmp/probe9/ucmnlk"),
        stride: 100,
        full_log: false,
        workers: None,
    };
    let start = std::time::Instant::now();
    let out = run_experiment(&base).unwrap();
    eprintln!("ucmnlk took {:?}", start.elapsed());
    let mut rnd = base.clone();
    rnd.agent = AgentKind::Random;
    rnd.out_dir = PathBuf::from("/tmp/probe9/random");
    let rout = run_experiment(&rnd).unwrap();

    for (label, o) in [("ucmnlk", &out), ("random", &rout)] {
        let at_t0 = median(o.seed_files.iter().map(|p| regret_at(p, t0)).collect());
        let at_end = median(o.seed_files.iter().map(|p| regret_at(p, horizon)).collect());
        println!(
            "{label}: median regret(T0) = {at_t0:.2}, median regret(4T0) = {at_end:.2}, ratio = {:.2}",
            at_end / at_t0
        );
        let finals: Vec<f64> = o.final_regrets.iter().map(|(_, r)| *r).collect();
        println!("  per-seed finals: {:?}", finals.iter().map(|x| *x as i64).collect::<Vec<_>>());
    }
}
