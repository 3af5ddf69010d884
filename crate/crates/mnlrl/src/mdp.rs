//! Finite MDPs whose transition function is a multinomial-logistic (softmax)
//! model over per-triple feature vectors.
//!
//! For a pair `(s, a)` with reachable set `S_{s,a}`, the probability of
//! landing on `s'` is
//!
//! ```text
//! p(s' | s, a, θ) = exp(φ(s,a,s')·θ) / Σ_{s''∈S_{s,a}} exp(φ(s,a,s'')·θ)
//! ```
//!
//! The environment owns a hidden core `θ*`; learners only ever see the
//! feature map, rewards, reachable sets, and the declared norm bounds.
//! Feature storage is ragged: only reachable successors carry vectors.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A multinomial-logistic transition MDP.
///
/// Immutable after construction; safe to share across worker threads.
/// The reachable-set order is fixed at construction and defines the
/// inverse-CDF sampling order, so runs are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct MnlMdp {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    /// `reachable[s][a]` — ordered ids of states reachable in one step.
    reachable: Vec<Vec<Vec<usize>>>,
    /// `features[s][a][k]` — feature vector of the k-th reachable state.
    features: Vec<Vec<Vec<Vec<f64>>>>,
    /// Hidden true transition core; used only by the environment and oracles.
    theta_star: Vec<f64>,
    /// `rewards[s][a]` in [0, 1].
    rewards: Vec<Vec<f64>>,
    l_phi: f64,
    l_theta: f64,
}

/// One observed environment transition together with the learner-visible
/// context: the feature vectors of every reachable successor and the one-hot
/// response indicating which successor occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    /// φ(s,a,s'') for all s'' in the reachable set, in stored order.
    pub reachable_features: Vec<Vec<f64>>,
    /// One-hot over the reachable set; exactly one entry equals 1.
    pub response: Vec<f64>,
}

impl TransitionSample {
    /// Index of the observed successor within the reachable list.
    pub fn observed_index(&self) -> usize {
        self.response
            .iter()
            .position(|&y| y == 1.0)
            .expect("response must contain a 1")
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl MnlMdp {
    /// Builds and validates an instance.
    ///
    /// Checks shapes, finiteness, reward range, reachable-set sanity, the
    /// declared norm bounds on features and core, and that the transition
    /// probabilities at `theta_star` form a simplex vector for every pair.
    /// The zero-feature condition is *not* required here so that raw
    /// instances can be constructed and then passed through [`MnlMdp::recenter`];
    /// use [`MnlMdp::validate_zero_feature`] to enforce it.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        reachable: Vec<Vec<Vec<usize>>>,
        features: Vec<Vec<Vec<Vec<f64>>>>,
        theta_star: Vec<f64>,
        rewards: Vec<Vec<f64>>,
        l_phi: f64,
        l_theta: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || dim == 0 {
            return Err(Error::Argument(
                "num_states, num_actions, dim must be positive".into(),
            ));
        }
        if theta_star.len() != dim {
            return Err(Error::Argument(format!(
                "theta_star has length {}, expected dim {}",
                theta_star.len(),
                dim
            )));
        }
        if !theta_star.iter().all(|x| x.is_finite()) {
            return Err(Error::Argument("theta_star must be finite".into()));
        }
        if !(l_phi.is_finite() && l_phi >= 0.0 && l_theta.is_finite() && l_theta >= 0.0) {
            return Err(Error::Argument("l_phi and l_theta must be finite and >= 0".into()));
        }
        let tn = norm2(&theta_star);
        if tn > l_theta + 1e-12 {
            return Err(Error::InstanceValidation(format!(
                "||theta_star||_2 = {tn} exceeds declared l_theta = {l_theta}"
            )));
        }
        if reachable.len() != num_states || features.len() != num_states || rewards.len() != num_states
        {
            return Err(Error::Argument("per-state arrays must have num_states entries".into()));
        }
        for s in 0..num_states {
            if reachable[s].len() != num_actions
                || features[s].len() != num_actions
                || rewards[s].len() != num_actions
            {
                return Err(Error::Argument(format!(
                    "state {s}: per-action arrays must have num_actions entries"
                )));
            }
            for a in 0..num_actions {
                let reach = &reachable[s][a];
                if reach.is_empty() {
                    return Err(Error::InstanceValidation(format!(
                        "reachable set of (s={s}, a={a}) is empty"
                    )));
                }
                let mut seen = vec![false; num_states];
                for &sp in reach {
                    if sp >= num_states {
                        return Err(Error::InstanceValidation(format!(
                            "reachable set of (s={s}, a={a}) references state {sp} >= num_states"
                        )));
                    }
                    if seen[sp] {
                        return Err(Error::InstanceValidation(format!(
                            "reachable set of (s={s}, a={a}) lists state {sp} twice"
                        )));
                    }
                    seen[sp] = true;
                }
                let feats = &features[s][a];
                if feats.len() != reach.len() {
                    return Err(Error::InstanceValidation(format!(
                        "(s={s}, a={a}): {} feature vectors for {} reachable states",
                        feats.len(),
                        reach.len()
                    )));
                }
                for (k, f) in feats.iter().enumerate() {
                    if f.len() != dim {
                        return Err(Error::InstanceValidation(format!(
                            "(s={s}, a={a}, k={k}): feature has length {}, expected {dim}",
                            f.len()
                        )));
                    }
                    if !f.iter().all(|x| x.is_finite()) {
                        return Err(Error::InstanceValidation(format!(
                            "(s={s}, a={a}, k={k}): feature vector has non-finite entries"
                        )));
                    }
                    let fnorm = norm2(f);
                    if fnorm > l_phi + 1e-9 {
                        return Err(Error::InstanceValidation(format!(
                            "(s={s}, a={a}, k={k}): ||phi||_2 = {fnorm} exceeds declared l_phi = {l_phi}"
                        )));
                    }
                }
                let r = rewards[s][a];
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::InstanceValidation(format!(
                        "reward({s}, {a}) = {r} outside [0, 1]"
                    )));
                }
            }
        }
        let mdp = Self {
            num_states,
            num_actions,
            dim,
            reachable,
            features,
            theta_star,
            rewards,
            l_phi,
            l_theta,
        };
        // Simplex sanity at the true core.
        for s in 0..num_states {
            for a in 0..num_actions {
                let p = mdp.transition_probs(s, a, &mdp.theta_star.clone())?;
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || p.iter().any(|&x| x <= 0.0) {
                    return Err(Error::InstanceValidation(format!(
                        "(s={s}, a={a}): probabilities at theta_star are not a simplex vector"
                    )));
                }
            }
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn l_phi(&self) -> f64 {
        self.l_phi
    }
    pub fn l_theta(&self) -> f64 {
        self.l_theta
    }
    /// The hidden core. Only the environment and oracles may look at it.
    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s][a]
    }
    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }
    pub fn reachable(&self, s: usize, a: usize) -> &[usize] {
        &self.reachable[s][a]
    }
    /// Feature vectors of the reachable successors of `(s, a)`, stored order.
    pub fn features(&self, s: usize, a: usize) -> &[Vec<f64>] {
        &self.features[s][a]
    }
    /// U = max over (s,a) of |S_{s,a}|.
    pub fn max_reachable(&self) -> usize {
        self.reachable
            .iter()
            .flat_map(|per_a| per_a.iter().map(|r| r.len()))
            .max()
            .unwrap_or(0)
    }

    fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.num_states || a >= self.num_actions {
            return Err(Error::Domain(format!(
                "(s={s}, a={a}) outside {} states x {} actions",
                self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    /// Softmax transition probabilities over the reachable set of `(s, a)`
    /// at an arbitrary core `theta`. The max logit is subtracted before
    /// exponentiating so large inner products cannot overflow.
    pub fn transition_probs(&self, s: usize, a: usize, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_pair(s, a)?;
        if theta.len() != self.dim || !theta.iter().all(|x| x.is_finite()) {
            return Err(Error::Argument(format!(
                "theta must be a finite vector of length {}",
                self.dim
            )));
        }
        Ok(softmax_probs(&self.features[s][a], theta))
    }

    /// Draws one transition from the true model by inverse CDF over the
    /// reachable list in its stored order.
    pub fn sample_transition<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> Result<TransitionSample> {
        let probs = self.transition_probs(s, a, &self.theta_star)?;
        let reach = &self.reachable[s][a];
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut idx = reach.len() - 1;
        for (k, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                idx = k;
                break;
            }
        }
        let mut response = vec![0.0; reach.len()];
        response[idx] = 1.0;
        Ok(TransitionSample {
            state: s,
            action: a,
            next_state: reach[idx],
            reachable_features: self.features[s][a].clone(),
            response,
        })
    }

    /// Enforces the zero-feature convention by subtracting the feature
    /// vector of the *first* reachable state from every feature vector of
    /// the same pair. Transition probabilities are unchanged at every theta
    /// (softmax shift invariance). If any subtraction was nonzero, the
    /// declared `l_phi` doubles. Idempotent.
    pub fn recenter(&self) -> MnlMdp {
        let mut out = self.clone();
        let mut changed = false;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let base = out.features[s][a][0].clone();
                if base.iter().all(|&x| x == 0.0) {
                    continue;
                }
                changed = true;
                for f in out.features[s][a].iter_mut() {
                    for (fi, bi) in f.iter_mut().zip(base.iter()) {
                        *fi -= bi;
                    }
                }
            }
        }
        if changed {
            out.l_phi = 2.0 * self.l_phi;
        }
        out
    }

    /// Checks the zero-feature condition: every pair must have some reachable
    /// successor with an exactly-zero feature vector.
    pub fn validate_zero_feature(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let ok = self.features[s][a]
                    .iter()
                    .any(|f| f.iter().all(|&x| x == 0.0));
                if !ok {
                    return Err(Error::InstanceValidation(format!(
                        "(s={s}, a={a}) has no zero feature vector; run recenter first"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Diameter: max over ordered pairs (s, s'), s != s', of the minimal
    /// expected first-hitting time of s' from s. Computed per target by
    /// value iteration on h(s) = 1 + min_a Σ_x p(x|s,a) h(x), h(s') = 0,
    /// until the sup-norm change drops below `tol`.
    ///
    /// Intended for instances small enough for exact dynamic programming
    /// (roughly S·A·U <= 1e6). A non-converging iteration signals a
    /// non-communicating MDP and returns [`Error::DiameterInfinite`].
    pub fn compute_diameter(&self, tol: f64) -> Result<f64> {
        if tol <= 0.0 {
            return Err(Error::Argument("tol must be positive".into()));
        }
        const MAX_SWEEPS: usize = 1_000_000;
        // Transition probabilities at theta_star, computed once.
        let mut probs = vec![vec![Vec::new(); self.num_actions]; self.num_states];
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                probs[s][a] = self.transition_probs(s, a, &self.theta_star)?;
            }
        }
        let mut diameter: f64 = 0.0;
        for target in 0..self.num_states {
            let mut h = vec![0.0_f64; self.num_states];
            let mut converged = false;
            for _ in 0..MAX_SWEEPS {
                let mut next = vec![0.0_f64; self.num_states];
                let mut delta: f64 = 0.0;
                for s in 0..self.num_states {
                    if s == target {
                        continue;
                    }
                    let mut best = f64::INFINITY;
                    for a in 0..self.num_actions {
                        let mut exp = 1.0;
                        for (k, &sp) in self.reachable[s][a].iter().enumerate() {
                            if sp != target {
                                exp += probs[s][a][k] * h[sp];
                            }
                        }
                        if exp < best {
                            best = exp;
                        }
                    }
                    next[s] = best;
                    delta = delta.max((next[s] - h[s]).abs());
                }
                h = next;
                if delta < tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::DiameterInfinite(format!(
                    "hitting-time iteration for target state {target} did not converge in {MAX_SWEEPS} sweeps"
                )));
            }
            for (s, &hs) in h.iter().enumerate() {
                if s != target && hs > diameter {
                    diameter = hs;
                }
            }
        }
        Ok(diameter)
    }

    /// Sampled upper estimate of the pairwise-probability-product constant:
    /// the minimum over `n_samples` draws of theta uniform in the ball
    /// ||theta||_2 <= l_theta, over all (s,a) and ordered reachable pairs
    /// (s', s''), of p(s'|s,a,theta) * p(s''|s,a,theta).
    ///
    /// Sampling cannot certify the infimum over the ball, so the returned
    /// value only ever over-estimates the true constant.
    pub fn estimate_kappa<R: Rng>(&self, n_samples: usize, rng: &mut R) -> Result<f64> {
        if n_samples == 0 {
            return Err(Error::Argument("n_samples must be >= 1".into()));
        }
        let mut kappa = f64::INFINITY;
        for _ in 0..n_samples {
            let theta = sample_ball(self.dim, self.l_theta, rng);
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let p = self.transition_probs(s, a, &theta)?;
                    let pmin = p.iter().cloned().fold(f64::INFINITY, f64::min);
                    let prod = pmin * pmin;
                    if prod < kappa {
                        kappa = prod;
                    }
                }
            }
        }
        Ok(kappa)
    }
}

/// Softmax over logits φ_k·θ with max-logit subtraction.
pub(crate) fn softmax_probs(features: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = features
        .iter()
        .map(|f| f.iter().zip(theta.iter()).map(|(x, t)| x * t).sum::<f64>())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Uniform draw from the Euclidean ball of radius `radius` in dimension `dim`.
pub fn sample_ball<R: Rng>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm2(&dir);
    if n == 0.0 {
        return vec![0.0; dim];
    }
    let u: f64 = rng.gen::<f64>();
    let r = radius * u.powf(1.0 / dim as f64);
    for x in dir.iter_mut() {
        *x = *x / n * r;
    }
    dir
}

/// Deterministic pseudo-random communicating instance used by tests and
/// examples. Every pair's reachable set contains `(s + 1) mod S`, so the
/// chain communicates for any core. Each reachable set carries one zero
/// feature vector (on the successor `(s + 1) mod S`).
pub fn random_communicating<R: Rng>(
    num_states: usize,
    num_actions: usize,
    dim: usize,
    max_reachable: usize,
    l_phi: f64,
    l_theta: f64,
    rng: &mut R,
) -> MnlMdp {
    assert!(max_reachable >= 1 && max_reachable <= num_states);
    let mut reachable = vec![vec![Vec::new(); num_actions]; num_states];
    let mut features = vec![vec![Vec::new(); num_actions]; num_states];
    let mut rewards = vec![vec![0.0; num_actions]; num_states];
    for s in 0..num_states {
        for a in 0..num_actions {
            let ring = (s + 1) % num_states;
            let mut reach = vec![ring];
            let mut pool: Vec<usize> = (0..num_states).filter(|&x| x != ring).collect();
            while reach.len() < max_reachable && !pool.is_empty() {
                let i = rng.gen_range(0..pool.len());
                reach.push(pool.swap_remove(i));
            }
            reach.sort_unstable();
            let zero_at = reach.iter().position(|&x| x == ring).unwrap();
            let mut feats = Vec::with_capacity(reach.len());
            for k in 0..reach.len() {
                if k == zero_at {
                    feats.push(vec![0.0; dim]);
                } else {
                    let mut f: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                    let n = norm2(&f);
                    let scale = l_phi * rng.gen::<f64>() / n.max(1e-12);
                    for x in f.iter_mut() {
                        *x *= scale;
                    }
                    feats.push(f);
                }
            }
            reachable[s][a] = reach;
            features[s][a] = feats;
            rewards[s][a] = rng.gen::<f64>();
        }
    }
    let theta_star = sample_ball(dim, l_theta, rng);
    MnlMdp::new(
        num_states,
        num_actions,
        dim,
        reachable,
        features,
        theta_star,
        rewards,
        l_phi,
        l_theta,
    )
    .expect("generated instance must validate")
}
