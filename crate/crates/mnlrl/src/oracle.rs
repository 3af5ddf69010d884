//! Exact solvers on the true model: discounted optimal values, average-reward
//! optimal gain and bias, and stationary-policy evaluation. These are the
//! ground truth that regret is measured against; they read the hidden core.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::MnlMdp;

/// Which objective a [`ValueTable`] was solved under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discounting {
    Discounted(f64),
    Average,
}

/// Optimal values of one MDP: v(s) = max_a q(s, a) always holds; `gain` is
/// populated in the average case only.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub discounting: Discounting,
    pub gain: Option<f64>,
}

fn true_probs(mdp: &MnlMdp) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = vec![vec![Vec::new(); mdp.num_actions()]; mdp.num_states()];
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            out[s][a] = mdp.transition_probs(s, a, mdp.theta_star())?;
        }
    }
    Ok(out)
}

/// Value iteration at discount `gamma` until the sup-norm change of Q drops
/// below tol·(1−γ)/(2γ), which guarantees a sup-norm error of at most `tol`.
pub fn solve_discounted(mdp: &MnlMdp, gamma: f64, tol: f64) -> Result<ValueTable> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Argument(format!("gamma = {gamma} outside [0, 1)")));
    }
    if tol <= 0.0 {
        return Err(Error::Argument("tol must be positive".into()));
    }
    let probs = true_probs(mdp)?;
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let threshold = if gamma > 0.0 {
        tol * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY // gamma = 0 is exact after one sweep
    };
    let mut q = vec![vec![0.0; na]; ns];
    let mut v = vec![0.0; ns];
    const MAX_SWEEPS: usize = 10_000_000;
    for sweep in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        let mut q_next = vec![vec![0.0; na]; ns];
        for s in 0..ns {
            for a in 0..na {
                let mut exp = 0.0;
                for (k, &sp) in mdp.reachable(s, a).iter().enumerate() {
                    exp += probs[s][a][k] * v[sp];
                }
                q_next[s][a] = mdp.reward(s, a) + gamma * exp;
                delta = delta.max((q_next[s][a] - q[s][a]).abs());
            }
        }
        q = q_next;
        for s in 0..ns {
            v[s] = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        if delta < threshold || gamma == 0.0 {
            return Ok(ValueTable {
                v,
                q,
                discounting: Discounting::Discounted(gamma),
                gain: None,
            });
        }
        if sweep + 1 == MAX_SWEEPS {
            break;
        }
    }
    Err(Error::Solver(format!(
        "discounted value iteration did not reach threshold {threshold} in {MAX_SWEEPS} sweeps"
    )))
}

/// Relative value iteration for the average-reward objective.
///
/// Plain sweeps subtract the reference-state value (state 0) and stop when
/// the span of successive differences drops below `tol`; if that fails to
/// converge (periodic chains), the sweep restarts under the aperiodicity
/// transform P ← 0.01·I + 0.99·P, which leaves the optimal gain unchanged
/// and scales the bias by 1/0.99. The returned bias is normalized to
/// min_s v(s) = 0.
pub fn solve_average(mdp: &MnlMdp, tol: f64) -> Result<ValueTable> {
    if tol <= 0.0 {
        return Err(Error::Argument("tol must be positive".into()));
    }
    let probs = true_probs(mdp)?;
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    const PLAIN_SWEEPS: usize = 200_000;
    const TRANSFORMED_SWEEPS: usize = 800_000;

    let run = |self_mix: f64, max_sweeps: usize| -> Option<(Vec<f64>, f64)> {
        let move_w = 1.0 - self_mix;
        let mut h = vec![0.0_f64; ns];
        for _ in 0..max_sweeps {
            let mut w = vec![0.0_f64; ns];
            for s in 0..ns {
                let mut best = f64::NEG_INFINITY;
                for a in 0..na {
                    let mut exp = 0.0;
                    for (k, &sp) in mdp.reachable(s, a).iter().enumerate() {
                        exp += probs[s][a][k] * h[sp];
                    }
                    let val = mdp.reward(s, a) + self_mix * h[s] + move_w * exp;
                    if val > best {
                        best = val;
                    }
                }
                w[s] = best;
            }
            let mut dmax = f64::NEG_INFINITY;
            let mut dmin = f64::INFINITY;
            for s in 0..ns {
                let d = w[s] - h[s];
                dmax = dmax.max(d);
                dmin = dmin.min(d);
            }
            if dmax - dmin < tol {
                let gain = 0.5 * (dmax + dmin);
                return Some((h, gain));
            }
            let anchor = w[0];
            for s in 0..ns {
                h[s] = w[s] - anchor;
            }
        }
        None
    };

    let (h, gain, bias_scale) = match run(0.0, PLAIN_SWEEPS) {
        Some((h, gain)) => (h, gain, 1.0),
        None => match run(0.01, TRANSFORMED_SWEEPS) {
            Some((h, gain)) => (h, gain, 0.99),
            None => {
                return Err(Error::Solver(
                    "relative value iteration did not converge even under the \
                     aperiodicity transform; the chain may not be communicating"
                        .into(),
                ))
            }
        },
    };

    // Recover q from the original Bellman operator at the (rescaled) bias.
    let bias: Vec<f64> = h.iter().map(|x| x * bias_scale).collect();
    let mut q = vec![vec![0.0; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let mut exp = 0.0;
            for (k, &sp) in mdp.reachable(s, a).iter().enumerate() {
                exp += probs[s][a][k] * bias[sp];
            }
            q[s][a] = mdp.reward(s, a) + exp - gain;
        }
    }
    let mut v: Vec<f64> = (0..ns)
        .map(|s| q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let low = v.iter().cloned().fold(f64::INFINITY, f64::min);
    for s in 0..ns {
        v[s] -= low;
        for a in 0..na {
            q[s][a] -= low;
        }
    }
    Ok(ValueTable {
        v,
        q,
        discounting: Discounting::Average,
        gain: Some(gain),
    })
}

/// Value of a deterministic stationary policy at discount `gamma`.
///
/// Small state spaces (S <= 200) use a direct linear solve of
/// (I − γ P_π) V = r_π; larger ones fall back to fixed-point iteration with
/// the same error guarantee as [`solve_discounted`].
pub fn evaluate_policy_discounted(
    mdp: &MnlMdp,
    policy: &[usize],
    gamma: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Argument(format!("gamma = {gamma} outside [0, 1)")));
    }
    if policy.len() != mdp.num_states() {
        return Err(Error::Argument("policy length must equal num_states".into()));
    }
    for (s, &a) in policy.iter().enumerate() {
        if a >= mdp.num_actions() {
            return Err(Error::Domain(format!("policy({s}) = {a} is not an action")));
        }
    }
    let ns = mdp.num_states();
    if ns <= 200 {
        let mut p = DMatrix::zeros(ns, ns);
        for s in 0..ns {
            let probs = mdp.transition_probs(s, policy[s], mdp.theta_star())?;
            for (k, &sp) in mdp.reachable(s, policy[s]).iter().enumerate() {
                p[(s, sp)] += probs[k];
            }
        }
        let r = DVector::from_fn(ns, |s, _| mdp.reward(s, policy[s]));
        let system = DMatrix::identity(ns, ns) - p * gamma;
        let sol = system
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Numerical("I - gamma P_pi is singular".into()))?;
        return Ok(sol.iter().cloned().collect());
    }
    let threshold = if gamma > 0.0 {
        tol * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY
    };
    let mut v = vec![0.0_f64; ns];
    const MAX_SWEEPS: usize = 10_000_000;
    for _ in 0..MAX_SWEEPS {
        let mut next = vec![0.0_f64; ns];
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            let probs = mdp.transition_probs(s, policy[s], mdp.theta_star())?;
            let mut exp = 0.0;
            for (k, &sp) in mdp.reachable(s, policy[s]).iter().enumerate() {
                exp += probs[k] * v[sp];
            }
            next[s] = mdp.reward(s, policy[s]) + gamma * exp;
            delta = delta.max((next[s] - v[s]).abs());
        }
        v = next;
        if delta < threshold || gamma == 0.0 {
            return Ok(v);
        }
    }
    Err(Error::Solver("policy evaluation did not converge".into()))
}
