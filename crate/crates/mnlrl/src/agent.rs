//! The episodic optimistic learner.
//!
//! Each episode plans with discounted extended value iteration on the
//! confidence polytope built from the current estimator state, then executes
//! the greedy policy until the log-determinant of the precision matrix has
//! grown by log 2 since the episode started (determinant doubling), at which
//! point it replans. Works for both average-reward (via a discounted
//! approximation with an auto-resolved discount) and discounted-reward
//! objectives.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::devi::{devi, greedy_policy};
use crate::error::{Error, Result};
use crate::estimator::{beta, paper_default_eta, paper_default_lambda, EstimatorState, PolytopeMode};
use crate::mdp::MnlMdp;

/// Planning objective. The average-reward case needs a diameter bound to
/// auto-resolve the discount; the harness may fill it from the exact
/// diameter when it has environment access.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    Average { diameter_bound: Option<f64> },
    Discounted { gamma: f64 },
}

/// Learner configuration before resolution. `None` fields resolve to the
/// theorem defaults in [`resolve_auto`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub mode: ObjectiveMode,
    /// DEVI rounds per episode; `None` resolves from the theorem formulas.
    pub n_devi: Option<usize>,
    /// Confidence level in (0, 1).
    pub delta: f64,
    /// Scale knob of the ellipsoid radius.
    pub c_beta: f64,
    /// Ridge weight; `None` resolves to 84√2 (L_θ L_φ³ + d L_φ²) η.
    pub lambda: Option<f64>,
    /// Step size; `None` resolves to (1/2) log U + L_θ L_φ + 1.
    pub eta: Option<f64>,
    pub polytope_mode: PolytopeMode,
    /// Number of environment steps T.
    pub horizon: usize,
    pub seed: u64,
    pub start_state: usize,
}

impl AgentConfig {
    /// Average-reward configuration with every tunable at its default.
    pub fn average(diameter_bound: f64, horizon: usize, seed: u64) -> Self {
        Self {
            mode: ObjectiveMode::Average {
                diameter_bound: Some(diameter_bound),
            },
            n_devi: None,
            delta: 0.1,
            c_beta: 1.0,
            lambda: None,
            eta: None,
            polytope_mode: PolytopeMode::Simplified,
            horizon,
            seed,
            start_state: 0,
        }
    }

    /// Discounted configuration with every tunable at its default.
    pub fn discounted(gamma: f64, horizon: usize, seed: u64) -> Self {
        Self {
            mode: ObjectiveMode::Discounted { gamma },
            n_devi: None,
            delta: 0.1,
            c_beta: 1.0,
            lambda: None,
            eta: None,
            polytope_mode: PolytopeMode::Simplified,
            horizon,
            seed,
            start_state: 0,
        }
    }
}

/// Fully resolved configuration, echoed verbatim into the run header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAgentConfig {
    pub mode: ObjectiveMode,
    pub gamma: f64,
    pub n_devi: usize,
    pub delta: f64,
    pub c_beta: f64,
    pub lambda: f64,
    pub eta: f64,
    pub polytope_mode: PolytopeMode,
    pub horizon: usize,
    pub seed: u64,
    pub start_state: usize,
}

/// Environment facts the learner is allowed to see, echoed into the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub u_max: usize,
    pub l_phi: f64,
    pub l_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub config: ResolvedAgentConfig,
    pub env: EnvSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub episode: usize,
}

/// Per-episode bookkeeping. Planning time is wall-clock and therefore
/// excluded from both equality and serialization; everything else is
/// deterministic given seed and config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub t_start: usize,
    pub logdet_sigma_start: f64,
    pub devi_gap: f64,
    #[serde(skip)]
    pub planning_nanos: u128,
}

impl PartialEq for EpisodeRecord {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index
            && self.t_start == other.t_start
            && self.logdet_sigma_start == other.logdet_sigma_start
            && self.devi_gap == other.devi_gap
    }
}

/// Complete trajectory of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub cumulative_reward: f64,
    /// K_T: number of episodes started within the horizon.
    pub episode_count: usize,
    /// log det Σ at the end of the run.
    pub final_logdet_sigma: f64,
}

impl RunLog {
    /// Step table as CSV text: t,state,action,reward,episode.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("t,state,action,reward,episode\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{:.16e},{}\n",
                s.t, s.state, s.action, s.reward, s.episode
            ));
        }
        out
    }

    pub fn header_json(&self) -> String {
        serde_json::to_string_pretty(&self.header).expect("header serializes")
    }

    /// Whether the episode count obeys 1 + d log2(1 + 2 T L_φ² / λ).
    pub fn episode_bound_holds(&self) -> bool {
        let bound = episode_count_bound(
            self.header.env.dim,
            self.header.config.horizon,
            self.header.env.l_phi,
            self.header.config.lambda,
        );
        (self.episode_count as f64) <= bound
    }
}

/// 1 + d log2(1 + 2 T L_φ² / λ): the determinant-doubling episode cap.
pub fn episode_count_bound(dim: usize, horizon: usize, l_phi: f64, lambda: f64) -> f64 {
    1.0 + dim as f64 * (1.0 + 2.0 * horizon as f64 * l_phi * l_phi / lambda).log2()
}

/// A run that failed mid-flight, with whatever was logged up to the error.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: RunLog,
}

/// Fills every `None`/auto field from the theorem defaults.
///
/// Average mode: γ = 1 − √(d/(D·T)) and N = ⌈√(DT/d) · log(√T/(dD))⌉,
/// floored at 1. Discounted mode: N = ⌈log(√T/d)/(1−γ)⌉, floored at 1.
/// An average-mode config without a diameter bound is a configuration error.
pub fn resolve_auto(
    config: &AgentConfig,
    dim: usize,
    u_max: usize,
    l_phi: f64,
    l_theta: f64,
) -> Result<ResolvedAgentConfig> {
    if !(0.0 < config.delta && config.delta < 1.0) {
        return Err(Error::Config(format!("delta = {} outside (0, 1)", config.delta)));
    }
    if config.horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    if config.c_beta < 0.0 {
        return Err(Error::Config("c_beta must be nonnegative".into()));
    }
    let t = config.horizon as f64;
    let d = dim as f64;
    let (gamma, n_auto) = match config.mode {
        ObjectiveMode::Average { diameter_bound } => {
            let diam = diameter_bound.ok_or_else(|| {
                Error::Config("average mode requires a diameter bound".into())
            })?;
            if diam <= 0.0 {
                return Err(Error::Config("diameter bound must be positive".into()));
            }
            let gamma = (1.0 - (d / (diam * t)).sqrt()).max(0.0);
            let n = ((diam * t / d).sqrt() * (t.sqrt() / (d * diam)).ln()).ceil();
            (gamma, n)
        }
        ObjectiveMode::Discounted { gamma } => {
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::Config(format!("gamma = {gamma} outside [0, 1)")));
            }
            let n = ((t.sqrt() / d).ln() / (1.0 - gamma)).ceil();
            (gamma, n)
        }
    };
    let n_devi = match config.n_devi {
        Some(n) if n >= 1 => n,
        Some(_) => return Err(Error::Config("n_devi must be >= 1".into())),
        None => {
            if n_auto.is_finite() && n_auto >= 1.0 {
                n_auto as usize
            } else {
                1
            }
        }
    };
    let eta = config.eta.unwrap_or_else(|| paper_default_eta(u_max, l_theta, l_phi));
    let lambda = config
        .lambda
        .unwrap_or_else(|| paper_default_lambda(dim, l_theta, l_phi, eta));
    if eta < 0.0 || lambda <= 0.0 {
        return Err(Error::Config("eta must be >= 0 and lambda > 0".into()));
    }
    Ok(ResolvedAgentConfig {
        mode: config.mode,
        gamma,
        n_devi,
        delta: config.delta,
        c_beta: config.c_beta,
        lambda,
        eta,
        polytope_mode: config.polytope_mode,
        horizon: config.horizon,
        seed: config.seed,
        start_state: config.start_state,
    })
}

pub fn env_summary(mdp: &MnlMdp) -> EnvSummary {
    EnvSummary {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        dim: mdp.dim(),
        u_max: mdp.max_reachable(),
        l_phi: mdp.l_phi(),
        l_theta: mdp.l_theta(),
    }
}

/// Executes the learner for `config.horizon` steps on the environment.
///
/// The agent sees only features, rewards, reachable sets, U, and the norm
/// bounds; the hidden core is touched exclusively through sampling. On a
/// numerical failure the partial log collected so far is attached to the
/// error. The final episode is truncated at the horizon.
pub fn run(mdp: &MnlMdp, config: &AgentConfig) -> std::result::Result<RunLog, Box<RunFailure>> {
    let summary = env_summary(mdp);
    let make_log = |resolved: &ResolvedAgentConfig| RunLog {
        header: RunHeader {
            config: resolved.clone(),
            env: summary.clone(),
        },
        steps: Vec::new(),
        episodes: Vec::new(),
        cumulative_reward: 0.0,
        episode_count: 0,
        final_logdet_sigma: 0.0,
    };
    let fail = |error: Error, partial: RunLog| Box::new(RunFailure { error, partial });

    let resolved = match resolve_auto(config, mdp.dim(), summary.u_max, mdp.l_phi(), mdp.l_theta())
    {
        Ok(r) => r,
        Err(e) => {
            let placeholder = ResolvedAgentConfig {
                mode: config.mode,
                gamma: 0.0,
                n_devi: 1,
                delta: config.delta,
                c_beta: config.c_beta,
                lambda: f64::NAN,
                eta: f64::NAN,
                polytope_mode: config.polytope_mode,
                horizon: config.horizon,
                seed: config.seed,
                start_state: config.start_state,
            };
            return Err(fail(e, make_log(&placeholder)));
        }
    };
    if config.start_state >= mdp.num_states() {
        return Err(fail(
            Error::Config(format!("start state {} out of range", config.start_state)),
            make_log(&resolved),
        ));
    }

    let mut log = make_log(&resolved);
    let mut rng = ChaCha20Rng::seed_from_u64(resolved.seed);
    let mut est = match EstimatorState::new(mdp.dim(), resolved.lambda, resolved.eta, mdp.l_theta())
    {
        Ok(e) => e,
        Err(e) => return Err(fail(e, log)),
    };
    let mut state = resolved.start_state;
    let mut t = 1usize;
    let horizon = resolved.horizon;
    let log2 = std::f64::consts::LN_2;

    while t <= horizon {
        let t_k = t;
        let logdet_start = est.logdet_sigma();
        let episode = log.episodes.len() + 1;
        let beta_t = beta(t_k, mdp.dim(), summary.u_max, resolved.delta, resolved.c_beta);
        let plan_clock = Instant::now();
        let polytope = match est.build_polytope(mdp, beta_t, resolved.polytope_mode) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, log)),
        };
        let plan = match devi(mdp, &polytope, resolved.gamma, resolved.n_devi) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, log)),
        };
        let policy = greedy_policy(&plan.q);
        log.episodes.push(EpisodeRecord {
            index: episode,
            t_start: t_k,
            logdet_sigma_start: logdet_start,
            devi_gap: plan.final_gap,
            planning_nanos: plan_clock.elapsed().as_nanos(),
        });
        log.episode_count = episode;

        // Execute: at least one step per episode (the doubling test runs
        // after each estimator update).
        loop {
            let action = policy[state];
            let reward = mdp.reward(state, action);
            let sample = match mdp.sample_transition(state, action, &mut rng) {
                Ok(s) => s,
                Err(e) => return Err(fail(e, log)),
            };
            log.steps.push(StepRecord {
                t,
                state,
                action,
                reward,
                episode,
            });
            log.cumulative_reward += reward;
            est = match est.update(&sample) {
                Ok(e) => e,
                Err(e) => return Err(fail(e, log)),
            };
            state = sample.next_state;
            t += 1;
            if t > horizon || est.logdet_sigma() > logdet_start + log2 {
                break;
            }
        }
    }
    log.final_logdet_sigma = est.logdet_sigma();
    Ok(log)
}
