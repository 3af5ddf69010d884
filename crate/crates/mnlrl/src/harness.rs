//! Experiment runner: builds or loads environments, runs learners and
//! baselines over seeds (concurrently), measures regret against the exact
//! oracle, and writes per-seed CSVs, an across-seed aggregate, and a
//! metadata document.
//!
//! Average-reward regret is accumulated as Σ (J* − r_t), which keeps the
//! per-step bookkeeping identity exact in floating point. Discounted-mode
//! regret uses the per-episode stationary surrogate: the value of the
//! episode's stationary policy replaces the true non-stationary value,
//! which coincides with it whenever no episode switch occurs within the
//! effective horizon 1/(1−γ); the metadata records this choice.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    self, env_summary, resolve_auto, AgentConfig, EpisodeRecord, ObjectiveMode, ResolvedAgentConfig,
    RunHeader, RunLog, StepRecord,
};
use crate::error::{Error, Result};
use crate::estimator::PolytopeMode;
use crate::hard::{build_finite, build_infinite, FiniteHardParams, InfiniteHardParams};
use crate::io::load_instance;
use crate::mdp::MnlMdp;
use crate::oracle::{evaluate_policy_discounted, solve_average, solve_discounted};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Infinite(InfiniteHardParams),
    Finite(FiniteHardParams),
    InstancePath(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Ucmnlk,
    Random,
    OracleOptimal,
}

fn default_stride() -> usize {
    100
}

/// Full experiment description; serializes as the JSON config file the CLI
/// consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub agent: AgentKind,
    pub objective: ObjectiveMode,
    pub horizon: usize,
    #[serde(default)]
    pub n_devi: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c_beta")]
    pub c_beta: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_polytope_mode")]
    pub polytope_mode: PolytopeMode,
    #[serde(default)]
    pub start_state: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub full_log: bool,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_delta() -> f64 {
    0.1
}
fn default_c_beta() -> f64 {
    1.0
}
fn default_polytope_mode() -> PolytopeMode {
    PolytopeMode::Simplified
}

/// Instance facts recorded in the metadata document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub u_max: usize,
    pub diameter: Option<f64>,
    pub optimal_gain: Option<f64>,
    pub optimal_value_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentMetadata {
    pub config: ExperimentConfig,
    pub resolved_objective: ObjectiveMode,
    pub instance: InstanceSummary,
    pub regret_definition: String,
    pub library_version: String,
}

/// Paths produced by one experiment plus the per-seed terminal regrets.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub seed_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub metadata_file: PathBuf,
    /// (seed, regret at the horizon), in seed order.
    pub final_regrets: Vec<(u64, f64)>,
}

pub fn build_environment(spec: &EnvironmentSpec) -> Result<MnlMdp> {
    match spec {
        EnvironmentSpec::Infinite(p) => build_infinite(p),
        EnvironmentSpec::Finite(p) => build_finite(p),
        EnvironmentSpec::InstancePath(path) => load_instance(path),
    }
}

fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One snapshot row of a per-seed output file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedRow {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub episode: usize,
    pub cum_reward: f64,
    pub regret: f64,
}

const SEED_HEADER: &str = "t,state,action,reward,episode,cum_reward,regret";

fn rows_to_csv(rows: &[SeedRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 64 + SEED_HEADER.len() + 1);
    out.push_str(SEED_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t,
            r.state,
            r.action,
            format_float(r.reward),
            r.episode,
            format_float(r.cum_reward),
            format_float(r.regret),
        ));
    }
    out
}

/// Ground truth prepared once per experiment and shared across seeds.
enum RegretOracle {
    /// Optimal gain J*.
    Average { gain: f64 },
    /// Optimal values and discount; per-episode policy values are computed
    /// per run (they depend on the episode policies).
    Discounted { v_star: Vec<f64>, gamma: f64 },
}

fn snapshot_rows(
    log: &RunLog,
    oracle: &RegretOracle,
    mdp: &MnlMdp,
    stride: usize,
    full_log: bool,
    policies: &[Vec<usize>],
) -> Result<Vec<SeedRow>> {
    let horizon = log.header.config.horizon;
    let mut rows = Vec::new();
    let mut cum = 0.0_f64;
    let mut regret = 0.0_f64;
    // Discounted mode: value of each episode's stationary policy.
    let episode_values: Vec<Vec<f64>> = match oracle {
        RegretOracle::Average { .. } => Vec::new(),
        RegretOracle::Discounted { gamma, .. } => policies
            .iter()
            .map(|pi| evaluate_policy_discounted(mdp, pi, *gamma, 1e-9))
            .collect::<Result<_>>()?,
    };
    for step in &log.steps {
        cum += step.reward;
        match oracle {
            RegretOracle::Average { gain } => {
                regret += gain - step.reward;
            }
            RegretOracle::Discounted { v_star, .. } => {
                let v_pi = &episode_values[step.episode - 1];
                regret += v_star[step.state] - v_pi[step.state];
            }
        }
        if full_log || step.t % stride == 0 || step.t == horizon {
            rows.push(SeedRow {
                t: step.t,
                state: step.state,
                action: step.action,
                reward: step.reward,
                episode: step.episode,
                cum_reward: cum,
                regret,
            });
        }
    }
    Ok(rows)
}

fn agent_config_for(config: &ExperimentConfig, objective: ObjectiveMode, seed: u64) -> AgentConfig {
    AgentConfig {
        mode: objective,
        n_devi: config.n_devi,
        delta: config.delta,
        c_beta: config.c_beta,
        lambda: config.lambda,
        eta: config.eta,
        polytope_mode: config.polytope_mode,
        horizon: config.horizon,
        seed,
        start_state: config.start_state,
    }
}

fn baseline_log(
    mdp: &MnlMdp,
    resolved: ResolvedAgentConfig,
    action_of: impl Fn(usize, &mut ChaCha20Rng) -> usize,
) -> Result<RunLog> {
    let mut rng = ChaCha20Rng::seed_from_u64(resolved.seed);
    let mut state = resolved.start_state;
    let mut steps = Vec::with_capacity(resolved.horizon);
    let mut cum = 0.0;
    for t in 1..=resolved.horizon {
        let action = action_of(state, &mut rng);
        let reward = mdp.reward(state, action);
        steps.push(StepRecord {
            t,
            state,
            action,
            reward,
            episode: 1,
        });
        cum += reward;
        state = mdp.sample_transition(state, action, &mut rng)?.next_state;
    }
    let dim = mdp.dim();
    let logdet = dim as f64 * resolved.lambda.ln();
    Ok(RunLog {
        header: RunHeader {
            config: resolved,
            env: env_summary(mdp),
        },
        steps,
        episodes: vec![EpisodeRecord {
            index: 1,
            t_start: 1,
            logdet_sigma_start: logdet,
            devi_gap: 0.0,
            planning_nanos: 0,
        }],
        cumulative_reward: cum,
        episode_count: 1,
        final_logdet_sigma: logdet,
    })
}

/// The stationary policy active in each episode of a run. The learner's
/// policies are reconstructed from the step records; baselines have a
/// single episode.
fn episode_policies(log: &RunLog, mdp: &MnlMdp, kind: AgentKind, oracle_policy: &[usize]) -> Vec<Vec<usize>> {
    match kind {
        AgentKind::OracleOptimal => vec![oracle_policy.to_vec()],
        AgentKind::Random => {
            // Surrogate: uniform stationary policy, marked by usize::MAX and
            // resolved in the evaluator.
            vec![vec![usize::MAX; mdp.num_states()]]
        }
        AgentKind::Ucmnlk => {
            let mut out: Vec<Vec<usize>> = vec![vec![0; mdp.num_states()]; log.episode_count];
            let mut seen: Vec<Vec<bool>> = vec![vec![false; mdp.num_states()]; log.episode_count];
            for s in &log.steps {
                out[s.episode - 1][s.state] = s.action;
                seen[s.episode - 1][s.state] = true;
            }
            // States not visited in an episode keep action 0; their value
            // only matters if visited, so the gap definition is unaffected.
            let _ = seen;
            out
        }
    }
}

/// Discounted value of the uniformly-random stationary policy (the
/// baseline surrogate), by direct linear solve.
fn uniform_policy_value(mdp: &MnlMdp, gamma: f64) -> Result<Vec<f64>> {
    let ns = mdp.num_states();
    let na = mdp.num_actions() as f64;
    let mut p = DMatrix::zeros(ns, ns);
    let mut r = DVector::zeros(ns);
    for s in 0..ns {
        for a in 0..mdp.num_actions() {
            let probs = mdp.transition_probs(s, a, mdp.theta_star())?;
            for (k, &sp) in mdp.reachable(s, a).iter().enumerate() {
                p[(s, sp)] += probs[k] / na;
            }
            r[s] += mdp.reward(s, a) / na;
        }
    }
    let system = DMatrix::identity(ns, ns) - p * gamma;
    let sol = system
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Numerical("uniform policy evaluation is singular".into()))?;
    Ok(sol.iter().cloned().collect())
}

/// Runs the full experiment: every seed, regret bookkeeping, per-seed CSVs,
/// the across-seed aggregate, and the metadata file. Seeds run concurrently
/// up to the configured worker cap; each seed's pipeline is sequential.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    if config.seeds.is_empty() {
        return Err(Error::Config("seed list must be nonempty".into()));
    }
    let mut sorted = config.seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("seeds must be distinct".into()));
    }
    if config.stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let mdp = build_environment(&config.environment)?;
    if config.start_state >= mdp.num_states() {
        return Err(Error::Config(format!(
            "start state {} out of range",
            config.start_state
        )));
    }

    // Resolve the objective, auto-filling the diameter bound when absent.
    let mut diameter = None;
    let objective = match config.objective {
        ObjectiveMode::Average { diameter_bound } => {
            let d = match diameter_bound {
                Some(d) => d,
                None => {
                    let d = mdp.compute_diameter(1e-9)?;
                    diameter = Some(d);
                    d
                }
            };
            if diameter.is_none() {
                diameter = Some(d);
            }
            ObjectiveMode::Average {
                diameter_bound: Some(d),
            }
        }
        disc => disc,
    };

    // Oracle ground truth.
    let (regret_oracle, oracle_policy, instance) = match objective {
        ObjectiveMode::Average { .. } => {
            let vt = solve_average(&mdp, 1e-9)?;
            let gain = vt.gain.expect("average solve returns a gain");
            let policy = crate::devi::greedy_policy(&vt.q);
            let summary = InstanceSummary {
                num_states: mdp.num_states(),
                num_actions: mdp.num_actions(),
                dim: mdp.dim(),
                u_max: mdp.max_reachable(),
                diameter,
                optimal_gain: Some(gain),
                optimal_value_range: None,
            };
            (RegretOracle::Average { gain }, policy, summary)
        }
        ObjectiveMode::Discounted { gamma } => {
            let vt = solve_discounted(&mdp, gamma, 1e-9)?;
            let policy = crate::devi::greedy_policy(&vt.q);
            let lo = vt.v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vt.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let summary = InstanceSummary {
                num_states: mdp.num_states(),
                num_actions: mdp.num_actions(),
                dim: mdp.dim(),
                u_max: mdp.max_reachable(),
                diameter: mdp.compute_diameter(1e-9).ok(),
                optimal_gain: None,
                optimal_value_range: Some((lo, hi)),
            };
            (
                RegretOracle::Discounted { v_star: vt.v, gamma },
                policy,
                summary,
            )
        }
    };

    fs::create_dir_all(&config.out_dir)?;

    let run_one_seed = |&seed: &u64| -> std::result::Result<(PathBuf, f64), (u64, Error, Option<RunLog>)> {
        let agent_cfg = agent_config_for(config, objective, seed);
        let log = match config.agent {
            AgentKind::Ucmnlk => match agent::run(&mdp, &agent_cfg) {
                Ok(log) => log,
                Err(failure) => return Err((seed, failure.error, Some(failure.partial))),
            },
            AgentKind::Random | AgentKind::OracleOptimal => {
                let resolved =
                    resolve_auto(&agent_cfg, mdp.dim(), mdp.max_reachable(), mdp.l_phi(), mdp.l_theta())
                        .map_err(|e| (seed, e, None))?;
                let result = match config.agent {
                    AgentKind::Random => {
                        let na = mdp.num_actions();
                        baseline_log(&mdp, resolved, move |_s, rng| rng.gen_range(0..na))
                    }
                    _ => {
                        let pi = oracle_policy.clone();
                        baseline_log(&mdp, resolved, move |s, _rng| pi[s])
                    }
                };
                result.map_err(|e| (seed, e, None))?
            }
        };
        let policies = episode_policies(&log, &mdp, config.agent, &oracle_policy);
        let rows = match &regret_oracle {
            RegretOracle::Average { gain } => snapshot_rows(
                &log,
                &RegretOracle::Average { gain: *gain },
                &mdp,
                config.stride,
                config.full_log,
                &policies,
            ),
            RegretOracle::Discounted { v_star, gamma } => {
                // Random baseline: substitute the uniform-mixture value.
                if config.agent == AgentKind::Random {
                    let v_pi = uniform_policy_value(&mdp, *gamma).map_err(|e| (seed, e, None))?;
                    let mut rows = Vec::new();
                    let mut cum = 0.0;
                    let mut regret = 0.0;
                    for step in &log.steps {
                        cum += step.reward;
                        regret += v_star[step.state] - v_pi[step.state];
                        if config.full_log
                            || step.t % config.stride == 0
                            || step.t == config.horizon
                        {
                            rows.push(SeedRow {
                                t: step.t,
                                state: step.state,
                                action: step.action,
                                reward: step.reward,
                                episode: step.episode,
                                cum_reward: cum,
                                regret,
                            });
                        }
                    }
                    Ok(rows)
                } else {
                    snapshot_rows(
                        &log,
                        &RegretOracle::Discounted {
                            v_star: v_star.clone(),
                            gamma: *gamma,
                        },
                        &mdp,
                        config.stride,
                        config.full_log,
                        &policies,
                    )
                }
            }
        }
        .map_err(|e| (seed, e, Some(log.clone())))?;
        let path = config.out_dir.join(format!("seed_{seed}.csv"));
        fs::write(&path, rows_to_csv(&rows)).map_err(|e| (seed, Error::Io(e), None))?;
        let final_regret = rows.last().map(|r| r.regret).unwrap_or(0.0);
        Ok((path, final_regret))
    };

    let results: Vec<std::result::Result<(PathBuf, f64), (u64, Error, Option<RunLog>)>> =
        match config.workers {
            Some(w) if w >= 1 => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
                pool.install(|| config.seeds.par_iter().map(run_one_seed).collect())
            }
            _ => config.seeds.par_iter().map(run_one_seed).collect(),
        };

    let mut seed_files = Vec::new();
    let mut final_regrets = Vec::new();
    let mut failures: Vec<(u64, Error)> = Vec::new();
    for (seed, result) in config.seeds.iter().zip(results) {
        match result {
            Ok((path, final_regret)) => {
                seed_files.push(path);
                final_regrets.push((*seed, final_regret));
            }
            Err((s, e, partial)) => {
                if let Some(log) = partial {
                    let path = config.out_dir.join(format!("seed_{s}.partial.csv"));
                    let _ = fs::write(&path, log.steps_csv());
                }
                failures.push((s, e));
            }
        }
    }
    if !failures.is_empty() {
        let manifest: Vec<serde_json::Value> = failures
            .iter()
            .map(|(s, e)| serde_json::json!({"seed": s, "error": e.to_string()}))
            .collect();
        fs::write(
            config.out_dir.join("error_manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        let (s, e) = failures.into_iter().next().unwrap();
        return Err(Error::Solver(format!("seed {s} failed: {e}")));
    }

    let aggregate_file = config.out_dir.join("aggregate.csv");
    let table = aggregate(&seed_files)?;
    fs::write(&aggregate_file, table)?;

    let metadata = ExperimentMetadata {
        config: config.clone(),
        resolved_objective: objective,
        instance,
        regret_definition: match objective {
            ObjectiveMode::Average { .. } => "t*J_star - cumulative_reward".to_string(),
            ObjectiveMode::Discounted { .. } => "per-episode-stationary-surrogate".to_string(),
        },
        library_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let metadata_file = config.out_dir.join("metadata.json");
    fs::write(&metadata_file, serde_json::to_string_pretty(&metadata)?)?;

    Ok(ExperimentOutput {
        seed_files,
        aggregate_file,
        metadata_file,
        final_regrets,
    })
}

/// Linear-interpolation quantile on a sorted slice (the R type-7 rule).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Reduces per-seed CSVs to a per-snapshot table of
/// `t,mean_regret,median,q25,q75,n_seeds`. All input files must share the
/// same snapshot grid; offenders are listed otherwise.
pub fn aggregate(paths: &[PathBuf]) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::Config("aggregate needs at least one input file".into()));
    }
    let mut grids: Vec<Vec<usize>> = Vec::new();
    let mut regrets: Vec<Vec<f64>> = Vec::new();
    for path in paths {
        let text = fs::read_to_string(path)?;
        let mut ts = Vec::new();
        let mut rs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                if line != SEED_HEADER {
                    return Err(Error::Config(format!(
                        "{}: unexpected header {line:?}",
                        path.display()
                    )));
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(Error::Config(format!(
                    "{}: line {} has {} columns, expected 7",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            let t: usize = cols[0].parse().map_err(|_| {
                Error::Config(format!("{}: bad t at line {}", path.display(), lineno + 1))
            })?;
            let regret: f64 = cols[6].parse().map_err(|_| {
                Error::Config(format!("{}: bad regret at line {}", path.display(), lineno + 1))
            })?;
            ts.push(t);
            rs.push(regret);
        }
        grids.push(ts);
        regrets.push(rs);
    }
    let reference = &grids[0];
    let offenders: Vec<String> = paths
        .iter()
        .zip(grids.iter())
        .filter(|(_, g)| *g != reference)
        .map(|(p, _)| p.display().to_string())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Config(format!(
            "snapshot grids differ from {}: {}",
            paths[0].display(),
            offenders.join(", ")
        )));
    }
    let n = paths.len();
    let mut out = String::from("t,mean_regret,median,q25,q75,n_seeds\n");
    for (i, &t) in reference.iter().enumerate() {
        let mut vals: Vec<f64> = regrets.iter().map(|r| r[i]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = vals.iter().sum::<f64>() / n as f64;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t,
            format_float(mean),
            format_float(quantile(&vals, 0.5)),
            format_float(quantile(&vals, 0.25)),
            format_float(quantile(&vals, 0.75)),
            n
        ));
    }
    Ok(out)
}

/// Per-step estimator trace against a reference core, as CSV:
/// `t,err_l2,err_sigma,beta_t,logdet_sigma`.
pub fn write_estimator_trace(path: &Path, rows: &[(usize, f64, f64, f64, f64)]) -> Result<()> {
    let mut out = String::from("t,err_l2,err_sigma,beta_t,logdet_sigma\n");
    for &(t, l2, sig, b, ld) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t,
            format_float(l2),
            format_float(sig),
            format_float(b),
            format_float(ld)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hard::HardMode;

    fn fig2_config(agent: AgentKind, out: &Path) -> ExperimentConfig {
        let params =
            InfiniteHardParams::new(2, HardMode::Average { diameter: 10.0 }, 4000).unwrap();
        ExperimentConfig {
            environment: EnvironmentSpec::Infinite(params),
            agent,
            objective: ObjectiveMode::Average {
                diameter_bound: Some(10.0),
            },
            horizon: 2000,
            n_devi: Some(50),
            delta: 0.1,
            c_beta: 0.05,
            lambda: Some(5.0),
            eta: None,
            polytope_mode: PolytopeMode::Simplified,
            start_state: 0,
            seeds: vec![0, 1, 2],
            out_dir: out.to_path_buf(),
            stride: 100,
            full_log: false,
            workers: Some(2),
        }
    }

    #[test]
    fn experiment_writes_all_outputs_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let out1 = run_experiment(&fig2_config(AgentKind::Ucmnlk, &dir.path().join("a"))).unwrap();
        let out2 = run_experiment(&fig2_config(AgentKind::Ucmnlk, &dir.path().join("b"))).unwrap();
        assert_eq!(out1.seed_files.len(), 3);
        for (p1, p2) in out1.seed_files.iter().zip(out2.seed_files.iter()) {
            let a = fs::read(p1).unwrap();
            let b = fs::read(p2).unwrap();
            assert_eq!(a, b, "per-seed CSVs must be byte-identical across runs");
        }
        assert!(out1.aggregate_file.exists());
        assert!(out1.metadata_file.exists());
        let meta: ExperimentMetadata =
            serde_json::from_str(&fs::read_to_string(&out1.metadata_file).unwrap()).unwrap();
        assert!(meta.instance.optimal_gain.is_some());
    }

    #[test]
    fn regret_identity_holds_for_average_mode() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fig2_config(AgentKind::Random, dir.path());
        cfg.full_log = true;
        cfg.seeds = vec![7];
        cfg.horizon = 500;
        let out = run_experiment(&cfg).unwrap();
        let meta: ExperimentMetadata =
            serde_json::from_str(&fs::read_to_string(&out.metadata_file).unwrap()).unwrap();
        let gain = meta.instance.optimal_gain.unwrap();
        let text = fs::read_to_string(&out.seed_files[0]).unwrap();
        let mut prev_regret = 0.0;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            let reward: f64 = cols[3].parse().unwrap();
            let regret: f64 = cols[6].parse().unwrap();
            assert!(
                ((regret - prev_regret) - (gain - reward)).abs() <= 1e-12,
                "bookkeeping identity violated"
            );
            prev_regret = regret;
        }
    }

    #[test]
    fn empty_and_duplicate_seed_lists_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fig2_config(AgentKind::Random, dir.path());
        cfg.seeds.clear();
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        cfg.seeds = vec![1, 1];
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn aggregate_handles_single_and_constant_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |name: &str, vals: &[f64]| -> PathBuf {
            let rows: Vec<SeedRow> = vals
                .iter()
                .enumerate()
                .map(|(i, &v)| SeedRow {
                    t: (i + 1) * 10,
                    state: 0,
                    action: 0,
                    reward: 0.0,
                    episode: 1,
                    cum_reward: 0.0,
                    regret: v,
                })
                .collect();
            let p = dir.path().join(name);
            fs::write(&p, rows_to_csv(&rows)).unwrap();
            p
        };
        let a = mk("a.csv", &[0.0, 0.0]);
        let table = aggregate(&[a.clone()]).unwrap();
        let line = table.lines().nth(1).unwrap();
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], "10");
        assert_eq!(cols[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);

        let b = mk("b.csv", &[2.0, 2.0]);
        let table = aggregate(&[a.clone(), b.clone()]).unwrap();
        let line = table.lines().nth(1).unwrap();
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(cols[2].parse::<f64>().unwrap(), 1.0);

        // Mismatched grids are rejected with the offender named.
        let c = mk("c.csv", &[1.0, 1.0, 1.0]);
        let err = aggregate(&[a, c]).unwrap_err();
        assert!(err.to_string().contains("c.csv"), "{err}");
    }

    #[test]
    fn aggregate_matches_independent_recomputation() {
        let dir = tempfile::tempdir().unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(113);
        let curves: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..5).map(|_| rng.gen::<f64>() * 10.0).collect())
            .collect();
        let paths: Vec<PathBuf> = curves
            .iter()
            .enumerate()
            .map(|(i, vals)| {
                let rows: Vec<SeedRow> = vals
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| SeedRow {
                        t: (j + 1) * 100,
                        state: 0,
                        action: 0,
                        reward: 0.0,
                        episode: 1,
                        cum_reward: 0.0,
                        regret: v,
                    })
                    .collect();
                let p = dir.path().join(format!("s{i}.csv"));
                fs::write(&p, rows_to_csv(&rows)).unwrap();
                p
            })
            .collect();
        let table = aggregate(&paths).unwrap();
        for (j, line) in table.lines().skip(1).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            let mean: f64 = cols[1].parse().unwrap();
            let expect: f64 = curves.iter().map(|c| c[j]).sum::<f64>() / 20.0;
            assert!((mean - expect).abs() < 1e-12);
            let median: f64 = cols[2].parse().unwrap();
            let mut sorted: Vec<f64> = curves.iter().map(|c| c[j]).collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = 0.5 * (sorted[9] + sorted[10]);
            assert!((median - want).abs() < 1e-12);
        }
    }
}
