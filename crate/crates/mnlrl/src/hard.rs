//! Hard-to-learn benchmark MDP families.
//!
//! Two constructions, both with action set {−1, +1}^(d−1) and transitions
//! driven by the scalar logistic map f(x) = 1 / (1 + (1/δ − 1) e^(−x)):
//!
//! * an infinite-horizon two-state family (one rewarding state, one not,
//!   with the action only influencing the escape probability from the bad
//!   state), parameterized for either an average-reward diameter target or
//!   a discounted-reward discount target;
//! * a finite-horizon layered family (a chain of H states, each of which
//!   can drop into an absorbing rewarding state), encoded *stationarily* by
//!   packing the per-step cores into one block-structured core of dimension
//!   d·H so the same estimator and agent run on it unchanged.
//!
//! Every derived parameter is stored as a plain field so validators can be
//! exercised against tampered values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::MnlMdp;

/// Objective the infinite-horizon family is built for; fixes δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardMode {
    /// δ = 1 / diameter.
    Average { diameter: f64 },
    /// δ = 1 − gamma.
    Discounted { gamma: f64 },
}

/// Parameters of the two-state infinite-horizon family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteHardParams {
    /// Core dimension d >= 2; the action space is {−1, 1}^(d−1).
    pub dim: usize,
    pub mode: HardMode,
    /// Horizon the instance is calibrated against.
    pub horizon: usize,
    /// Sign of each core coordinate (+1/−1), length d − 1.
    pub signs: Vec<i8>,
    /// δ: the action-independent switch probability of the good state.
    pub base_prob: f64,
    /// Δ: the probability advantage of the best action at the bad state.
    pub prob_gap: f64,
    /// Δ̄: the largest achievable action-core inner product; f(Δ̄) = δ + Δ.
    pub logit_width: f64,
    /// α: scaling of the action block of the features.
    pub action_scale: f64,
    /// β: scaling of the constant-offset coordinate of the features.
    pub offset_scale: f64,
}

/// Parameters of the layered finite-horizon family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteHardParams {
    /// Per-step core dimension d >= 2.
    pub dim: usize,
    /// Steps per episode, H >= 3.
    pub horizon: usize,
    /// Number of episodes the instance is calibrated against.
    pub episodes: usize,
    /// Per-step coordinate signs, `horizon` rows of length d − 1.
    pub signs: Vec<Vec<i8>>,
    /// δ = 1/H.
    pub base_prob: f64,
    /// Δ = 1/(4 √(2HK)).
    pub prob_gap: f64,
    /// Δ̄ with f((d−1)Δ̄) = δ + (d−1)Δ.
    pub logit_width: f64,
    pub action_scale: f64,
    pub offset_scale: f64,
}

/// Scalar logistic transition map f(x) = 1 / (1 + (1/δ − 1) e^(−x)).
pub fn mnl_sigmoid(x: f64, delta: f64) -> f64 {
    1.0 / (1.0 + (1.0 / delta - 1.0) * (-x).exp())
}

/// f'(x) = f(x) − f(x)².
pub fn mnl_sigmoid_deriv(x: f64, delta: f64) -> f64 {
    let f = mnl_sigmoid(x, delta);
    f - f * f
}

const MAX_ACTIONS: usize = 1 << 16;
const MAX_CELLS: usize = 10_000_000;

/// Enumerates {−1, 1}^(d−1) lexicographically with −1 before +1.
fn action_vectors(dim_minus_one: usize) -> Vec<Vec<f64>> {
    let count = 1usize << dim_minus_one;
    (0..count)
        .map(|i| {
            (0..dim_minus_one)
                .map(|j| {
                    if (i >> (dim_minus_one - 1 - j)) & 1 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect()
}

fn check_signs(signs: &[i8], len: usize) -> Result<()> {
    if signs.len() != len {
        return Err(Error::Precondition(format!(
            "sign pattern has length {}, expected {len}",
            signs.len()
        )));
    }
    if signs.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::Precondition("sign entries must be +1 or -1".into()));
    }
    Ok(())
}

impl InfiniteHardParams {
    /// Derives all instance parameters for dimension `dim`, objective
    /// `mode`, and calibration horizon `horizon`, with an all-(+1) sign
    /// pattern. Fails if any construction precondition is violated, naming
    /// the failing inequality.
    pub fn new(dim: usize, mode: HardMode, horizon: usize) -> Result<Self> {
        Self::with_signs(dim, mode, horizon, vec![1; dim.saturating_sub(1)])
    }

    pub fn with_signs(dim: usize, mode: HardMode, horizon: usize, signs: Vec<i8>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Precondition("dim must be >= 2".into()));
        }
        check_signs(&signs, dim - 1)?;
        let delta = match mode {
            HardMode::Average { diameter } => {
                if diameter <= 1.0 {
                    return Err(Error::Precondition("diameter must exceed 1".into()));
                }
                1.0 / diameter
            }
            HardMode::Discounted { gamma } => {
                if !(0.0..1.0).contains(&gamma) || gamma <= 0.5 {
                    return Err(Error::Precondition(
                        "gamma must lie in (0.5, 1) so that delta = 1 - gamma < 1/2".into(),
                    ));
                }
                1.0 - gamma
            }
        };
        let t = horizon as f64;
        let d1 = (dim - 1) as f64;
        if t < 45.0 * d1 * d1 / delta {
            return Err(Error::Precondition(format!(
                "horizon {horizon} violates T >= 45 (d-1)^2 / delta = {}",
                45.0 * d1 * d1 / delta
            )));
        }
        let prob_gap = d1 / (45.0 * ((2.0 / 5.0) * (t / delta) * 2.0_f64.ln()).sqrt());
        let params = Self::from_raw(dim, mode, horizon, signs, delta, prob_gap)?;
        Ok(params)
    }

    /// Assembles the derived quantities from explicit (δ, Δ); validates the
    /// construction inequalities.
    pub fn from_raw(
        dim: usize,
        mode: HardMode,
        horizon: usize,
        signs: Vec<i8>,
        base_prob: f64,
        prob_gap: f64,
    ) -> Result<Self> {
        let delta = base_prob;
        if 100.0 * prob_gap > delta {
            return Err(Error::Precondition(format!(
                "100 Delta <= delta violated: 100 * {prob_gap} > {delta}"
            )));
        }
        if 2.0 * delta + prob_gap > 1.0 {
            return Err(Error::Precondition("2 delta + Delta <= 1 violated".into()));
        }
        if prob_gap > delta * (1.0 - delta) {
            return Err(Error::Precondition("Delta <= delta (1 - delta) violated".into()));
        }
        let logit_width =
            ((1.0 - delta) * (delta + prob_gap) / (delta * (1.0 - delta - prob_gap))).ln();
        let d1 = (dim - 1) as f64;
        let action_scale = (logit_width / (d1 * (1.0 + logit_width))).sqrt();
        let offset_scale = (1.0 / (1.0 + logit_width)).sqrt();
        Ok(Self {
            dim,
            mode,
            horizon,
            signs,
            base_prob,
            prob_gap,
            logit_width,
            action_scale,
            offset_scale,
        })
    }

    /// δ + Δ: the best action's transition probability to the good state.
    pub fn best_prob(&self) -> f64 {
        self.base_prob + self.prob_gap
    }

    /// Optimal long-run average reward (δ + Δ) / (2δ + Δ).
    pub fn optimal_gain(&self) -> f64 {
        (self.base_prob + self.prob_gap) / (2.0 * self.base_prob + self.prob_gap)
    }

    /// Optimal discounted value at the bad state,
    /// γ(Δ + δ) / ((1−γ)(γ(2δ + Δ − 1) + 1)).
    pub fn optimal_discounted_value_bad_state(&self, gamma: f64) -> f64 {
        let (d, g) = (self.base_prob, self.prob_gap);
        gamma * (g + d) / ((1.0 - gamma) * (gamma * (2.0 * d + g - 1.0) + 1.0))
    }
}

/// Builds the two-state instance: state 0 gives reward 0, state 1 gives
/// reward 1; the action only matters at state 0, where the best action
/// reaches state 1 with probability δ + Δ and every action at state 1
/// returns to state 0 with probability δ.
pub fn build_infinite(params: &InfiniteHardParams) -> Result<MnlMdp> {
    let dim = params.dim;
    check_signs(&params.signs, dim - 1)?;
    let num_actions = 1usize
        .checked_shl((dim - 1) as u32)
        .filter(|&a| a <= MAX_ACTIONS)
        .ok_or_else(|| {
            Error::Precondition(format!("2^(d-1) actions exceed the cap of {MAX_ACTIONS}"))
        })?;
    if 2 * num_actions * 2 > MAX_CELLS {
        return Err(Error::Precondition("S*A*U exceeds the memory guard".into()));
    }
    let offset_logit = params.offset_scale * (1.0 / params.base_prob - 1.0).ln();
    let actions = action_vectors(dim - 1);
    let mut reachable = vec![vec![Vec::new(); num_actions]; 2];
    let mut features = vec![vec![Vec::new(); num_actions]; 2];
    let mut rewards = vec![vec![0.0; num_actions]; 2];
    for (a_idx, a) in actions.iter().enumerate() {
        // Bad state 0: stay (nonzero feature) or escape to 1 (zero feature).
        let mut stay = Vec::with_capacity(dim);
        for &aj in a.iter() {
            stay.push(-params.action_scale * aj);
        }
        stay.push(offset_logit);
        reachable[0][a_idx] = vec![0, 1];
        features[0][a_idx] = vec![stay, vec![0.0; dim]];
        rewards[0][a_idx] = 0.0;
        // Good state 1: return to 0 (zero feature) or stay (offset feature).
        let mut stay1 = vec![0.0; dim];
        stay1[dim - 1] = offset_logit;
        reachable[1][a_idx] = vec![0, 1];
        features[1][a_idx] = vec![vec![0.0; dim], stay1];
        rewards[1][a_idx] = 1.0;
    }
    let per_coord = params.logit_width / (dim - 1) as f64;
    let mut theta_star = Vec::with_capacity(dim);
    for &s in &params.signs {
        theta_star.push(s as f64 * per_coord / params.action_scale);
    }
    theta_star.push(1.0 / params.offset_scale);
    let l_phi = 1.0 + (1.0 / params.base_prob - 1.0).ln();
    let l_theta = 1.0 + params.logit_width;
    MnlMdp::new(
        2,
        num_actions,
        dim,
        reachable,
        features,
        theta_star,
        rewards,
        l_phi,
        l_theta,
    )
}

impl FiniteHardParams {
    pub fn new(dim: usize, horizon: usize, episodes: usize) -> Result<Self> {
        Self::with_signs(dim, horizon, episodes, vec![vec![1; dim.saturating_sub(1)]; horizon])
    }

    pub fn with_signs(
        dim: usize,
        horizon: usize,
        episodes: usize,
        signs: Vec<Vec<i8>>,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Precondition("dim must be >= 2".into()));
        }
        if horizon < 3 {
            return Err(Error::Precondition("horizon H must be >= 3".into()));
        }
        if signs.len() != horizon {
            return Err(Error::Precondition(format!(
                "expected {horizon} per-step sign rows, got {}",
                signs.len()
            )));
        }
        for row in &signs {
            check_signs(row, dim - 1)?;
        }
        let d1 = (dim - 1) as f64;
        let h = horizon as f64;
        let k = episodes as f64;
        // Both episode-count hypotheses must hold; the proof uses both.
        let k_floor = (d1 * d1 * h / 2.0).max(h.powi(3) * d1 * d1 / 32.0);
        if k < k_floor {
            return Err(Error::Precondition(format!(
                "episodes {episodes} violate K >= max((d-1)^2 H / 2, H^3 (d-1)^2 / 32) = {k_floor}"
            )));
        }
        let base_prob = 1.0 / h;
        let prob_gap = 1.0 / (4.0 * (2.0 * h * k).sqrt());
        let spread = d1 * prob_gap;
        if spread > base_prob / h {
            return Err(Error::Precondition("(d-1) Delta <= delta / H violated".into()));
        }
        let logit_width = (1.0 / d1)
            * ((1.0 - base_prob) * (base_prob + spread)
                / (base_prob * (1.0 - base_prob - spread)))
                .ln();
        let action_scale = (logit_width / (1.0 + d1 * logit_width)).sqrt();
        let offset_scale = (1.0 / (1.0 + d1 * logit_width)).sqrt();
        Ok(Self {
            dim,
            horizon,
            episodes,
            signs,
            base_prob,
            prob_gap,
            logit_width,
            action_scale,
            offset_scale,
        })
    }
}

/// Builds the layered finite-horizon instance as a stationary MDP.
///
/// States: ids 0..H-1 are the chain layers, id H is the non-rewarding
/// absorbing terminal, id H+1 the rewarding absorbing state. The packed
/// core has dimension d·H: the step-h transition reads only block h, so a
/// single stationary core reproduces the per-step transition probabilities
/// exactly at the cost of inflating the ambient dimension.
pub fn build_finite(params: &FiniteHardParams) -> Result<MnlMdp> {
    let d = params.dim;
    let h = params.horizon;
    let num_states = h + 2;
    let num_actions = 1usize
        .checked_shl((d - 1) as u32)
        .filter(|&a| a <= MAX_ACTIONS)
        .ok_or_else(|| {
            Error::Precondition(format!("2^(d-1) actions exceed the cap of {MAX_ACTIONS}"))
        })?;
    let packed_dim = d * h;
    if num_states * num_actions * 2 > MAX_CELLS {
        return Err(Error::Precondition("S*A*U exceeds the memory guard".into()));
    }
    let offset_logit = params.offset_scale * ((h - 1) as f64).ln();
    let actions = action_vectors(d - 1);
    let mut reachable = vec![vec![Vec::new(); num_actions]; num_states];
    let mut features = vec![vec![Vec::new(); num_actions]; num_states];
    let mut rewards = vec![vec![0.0; num_actions]; num_states];
    for layer in 0..h {
        for (a_idx, a) in actions.iter().enumerate() {
            // Continue to the next layer (nonzero feature in block `layer`)
            // or drop into the rewarding absorber (zero feature).
            let mut advance = vec![0.0; packed_dim];
            let base = layer * d;
            for (j, &aj) in a.iter().enumerate() {
                advance[base + j] = -params.action_scale * aj;
            }
            advance[base + d - 1] = offset_logit;
            reachable[layer][a_idx] = vec![layer + 1, h + 1];
            features[layer][a_idx] = vec![advance, vec![0.0; packed_dim]];
        }
    }
    for absorbing in [h, h + 1] {
        for a_idx in 0..num_actions {
            reachable[absorbing][a_idx] = vec![absorbing];
            features[absorbing][a_idx] = vec![vec![0.0; packed_dim]];
            rewards[absorbing][a_idx] = if absorbing == h + 1 { 1.0 } else { 0.0 };
        }
    }
    let mut theta_star = vec![0.0; packed_dim];
    for layer in 0..h {
        let base = layer * d;
        for (j, &s) in params.signs[layer].iter().enumerate() {
            theta_star[base + j] = s as f64 * params.logit_width / params.action_scale;
        }
        theta_star[base + d - 1] = 1.0 / params.offset_scale;
    }
    let block_norm = 1.0 + (d - 1) as f64 * params.logit_width;
    let l_theta = (h as f64).sqrt() * block_norm;
    let l_phi = 1.0 + ((h - 1) as f64).ln();
    MnlMdp::new(
        num_states,
        num_actions,
        packed_dim,
        reachable,
        features,
        theta_star,
        rewards,
        l_phi,
        l_theta,
    )
}

/// Hard-instance parameter bundle for validation dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardInstanceParams {
    Infinite(InfiniteHardParams),
    Finite(FiniteHardParams),
}

/// One named structural check with its worst observed margin; negative
/// margins beyond −1e-12 fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
    fn add(&mut self, name: &str, margin: f64) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            pass: margin >= -1e-12,
            worst_margin: margin,
        });
    }
}

const GRID_POINTS: usize = 2000;

/// Checks every structural claim of a built hard instance against its
/// parameters: the construction inequalities, the f(Δ̄) identity, the
/// mean-value sandwich on a 2000-point logit grid, the norm-bound lemmas,
/// and the base type invariants. Failures are reported, never raised.
pub fn validate_instance(mdp: &MnlMdp, params: &HardInstanceParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (delta, gap_eff, width_total) = match params {
        HardInstanceParams::Infinite(p) => (p.base_prob, p.prob_gap, p.logit_width),
        HardInstanceParams::Finite(p) => (
            p.base_prob,
            (p.dim - 1) as f64 * p.prob_gap,
            (p.dim - 1) as f64 * p.logit_width,
        ),
    };

    match params {
        HardInstanceParams::Infinite(p) => {
            report.add("100 Delta <= delta", delta - 100.0 * p.prob_gap);
            report.add("2 delta + Delta <= 1", 1.0 - (2.0 * delta + p.prob_gap));
            report.add("Delta <= delta (1 - delta)", delta * (1.0 - delta) - p.prob_gap);
        }
        HardInstanceParams::Finite(p) => {
            report.add(
                "(d-1) Delta <= delta / H",
                delta / p.horizon as f64 - gap_eff,
            );
        }
    }

    // f at the extreme logit equals delta + (effective) Delta.
    let identity_err = (mnl_sigmoid(width_total, delta) - (delta + gap_eff)).abs();
    report.add("f(width) = delta + Delta", 1e-12 - identity_err);

    // Mean-value sandwich over all ordered grid pairs.
    let slope = delta + gap_eff;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| -width_total + 2.0 * width_total * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| mnl_sigmoid(x, delta)).collect();
    let mut worst = f64::INFINITY;
    for i in 0..GRID_POINTS {
        for j in 0..i {
            // grid[i] >= grid[j]
            let rise = values[i] - values[j];
            let run = grid[i] - grid[j];
            worst = worst.min(rise).min(slope * run - rise);
        }
    }
    report.add("mean-value sandwich on grid", worst);

    // Norm-bound lemmas.
    let theta_norm = mdp.theta_star().iter().map(|x| x * x).sum::<f64>().sqrt();
    match params {
        HardInstanceParams::Infinite(p) => {
            report.add("||theta*|| <= 100/99", 100.0 / 99.0 - theta_norm);
            let bound = 1.0 + (1.0 / p.base_prob - 1.0).ln();
            report.add("||phi|| <= 1 + log(1/delta - 1)", phi_margin(mdp, bound));
        }
        HardInstanceParams::Finite(p) => {
            let d = p.dim;
            let mut worst_block = f64::INFINITY;
            for layer in 0..p.horizon {
                let block = &mdp.theta_star()[layer * d..(layer + 1) * d];
                let n = block.iter().map(|x| x * x).sum::<f64>().sqrt();
                worst_block = worst_block.min(1.5 - n);
            }
            report.add("per-step ||theta_h|| <= 3/2", worst_block);
            let bound = 1.0 + ((p.horizon - 1) as f64).ln();
            report.add("||phi|| <= 1 + log(H - 1)", phi_margin(mdp, bound));
        }
    }

    // Base type invariants: simplex at theta*, zero feature present,
    // declared bounds honored.
    let mut simplex_margin = f64::INFINITY;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            match mdp.transition_probs(s, a, mdp.theta_star()) {
                Ok(p) => {
                    let sum: f64 = p.iter().sum();
                    simplex_margin = simplex_margin.min(1e-12 - (sum - 1.0).abs());
                }
                Err(_) => simplex_margin = f64::NEG_INFINITY,
            }
        }
    }
    report.add("simplex at theta*", simplex_margin);
    report.add(
        "zero feature per pair",
        if mdp.validate_zero_feature().is_ok() { 0.0 } else { -1.0 },
    );
    report.add("||theta*|| <= declared l_theta", mdp.l_theta() - theta_norm);
    report.add("||phi|| <= declared l_phi", phi_margin(mdp, mdp.l_phi()));
    report
}

fn phi_margin(mdp: &MnlMdp, bound: f64) -> f64 {
    let mut worst = f64::INFINITY;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            for f in mdp.features(s, a) {
                let n = f.iter().map(|x| x * x).sum::<f64>().sqrt();
                worst = worst.min(bound - n);
            }
        }
    }
    worst
}
