//! Independent reference implementations used as test oracles.
//!
//! Everything here deliberately avoids the production code paths: the LP
//! solver enumerates candidate vertices instead of running the greedy
//! construction, and the policy evaluators enumerate all deterministic
//! stationary policies instead of iterating Bellman operators. Slow and
//! only suitable for tiny instances.

#![doc(hidden)]

use nalgebra::{DMatrix, DVector};

use crate::mdp::MnlMdp;

/// max Σ v·p over {p >= 0, Σp = 1, Σ|p − p_hat| <= radius} by enumerating
/// candidate vertices of the feasible polytope.
///
/// A vertex makes U constraints tight: the simplex equality plus some mix
/// of zero constraints, L1-kink loci (p_i = p̂_i, the intersection of two
/// cross-polytope facets), and at most one free facet pair. Coordinates are
/// therefore assigned one of {zero, pinned to p̂, free} with at most two
/// free; the free block is resolved by the equality constraint alone (one
/// free) or together with a tight signed L1 facet (two free).
pub fn l1_simplex_lp_max(p_hat: &[f64], radius: f64, v: &[f64]) -> f64 {
    let u = p_hat.len();
    assert_eq!(v.len(), u);
    let mut best = f64::NEG_INFINITY;
    let mut consider = |p: &[f64]| {
        let mut sum = 0.0;
        let mut l1 = 0.0;
        for k in 0..u {
            if p[k] < -1e-10 {
                return;
            }
            sum += p[k];
            l1 += (p[k] - p_hat[k]).abs();
        }
        if (sum - 1.0).abs() > 1e-9 || l1 > radius + 1e-9 {
            return;
        }
        let val: f64 = p.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        if val > best {
            best = val;
        }
    };

    consider(p_hat);
    for i in 0..u {
        let mut corner = vec![0.0; u];
        corner[i] = 1.0;
        consider(&corner);
    }

    // Base-3 assignment per coordinate: 0 = zero, 1 = pinned, 2 = free.
    let mut assign = vec![0u8; u];
    loop {
        let free: Vec<usize> = (0..u).filter(|&k| assign[k] == 2).collect();
        if free.len() == 1 || free.len() == 2 {
            let pinned_sum: f64 = (0..u).filter(|&k| assign[k] == 1).map(|k| p_hat[k]).sum();
            let mass = 1.0 - pinned_sum;
            let zero_l1: f64 = (0..u).filter(|&k| assign[k] == 0).map(|k| p_hat[k]).sum();
            if free.len() == 1 {
                let mut p: Vec<f64> = (0..u)
                    .map(|k| match assign[k] {
                        0 => 0.0,
                        1 => p_hat[k],
                        _ => mass,
                    })
                    .collect();
                p[free[0]] = mass;
                consider(&p);
            } else {
                let (f, g) = (free[0], free[1]);
                let tight = radius - zero_l1;
                if tight >= -1e-9 {
                    for (sf, sg) in [(1.0, -1.0), (-1.0, 1.0)] {
                        // sf (p_f − p̂_f) + sg (p_g − p̂_g) = tight, p_f + p_g = mass
                        let rhs = tight + sf * p_hat[f] + sg * p_hat[g];
                        let det: f64 = sf - sg;
                        let pf = (rhs - sg * mass) / det;
                        let pg = mass - pf;
                        if sf * (pf - p_hat[f]) >= -1e-9 && sg * (pg - p_hat[g]) >= -1e-9 {
                            let mut p: Vec<f64> = (0..u)
                                .map(|k| match assign[k] {
                                    0 => 0.0,
                                    1 => p_hat[k],
                                    _ => 0.0,
                                })
                                .collect();
                            p[f] = pf;
                            p[g] = pg;
                            consider(&p);
                        }
                    }
                }
            }
        }
        let mut i = 0;
        loop {
            if i == u {
                return best;
            }
            assign[i] += 1;
            if assign[i] == 3 {
                assign[i] = 0;
                i += 1;
            } else {
                break;
            }
        }
    }
}

/// All deterministic stationary policies of an S-state, A-action MDP.
pub fn all_policies(num_states: usize, num_actions: usize) -> Vec<Vec<usize>> {
    let total = num_actions.pow(num_states as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut pi = vec![0usize; num_states];
        for slot in pi.iter_mut() {
            *slot = idx % num_actions;
            idx /= num_actions;
        }
        out.push(pi);
    }
    out
}

/// Dense transition matrix of a deterministic policy at theta_star.
pub fn policy_matrix(mdp: &MnlMdp, policy: &[usize]) -> DMatrix<f64> {
    let n = mdp.num_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let a = policy[s];
        let probs = mdp.transition_probs(s, a, mdp.theta_star()).unwrap();
        for (k, &sp) in mdp.reachable(s, a).iter().enumerate() {
            p[(s, sp)] += probs[k];
        }
    }
    p
}

/// Exact discounted value of a stationary policy by direct linear solve.
pub fn policy_value_discounted(mdp: &MnlMdp, policy: &[usize], gamma: f64) -> Vec<f64> {
    let n = mdp.num_states();
    let p = policy_matrix(mdp, policy);
    let r = DVector::from_fn(n, |s, _| mdp.reward(s, policy[s]));
    let system = DMatrix::identity(n, n) - p * gamma;
    let sol = system.lu().solve(&r).expect("I - gamma P is invertible");
    sol.iter().cloned().collect()
}

/// Best discounted value over all deterministic stationary policies,
/// maximized per state.
pub fn brute_force_discounted(mdp: &MnlMdp, gamma: f64) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; mdp.num_states()];
    for pi in all_policies(mdp.num_states(), mdp.num_actions()) {
        let v = policy_value_discounted(mdp, &pi, gamma);
        for (b, x) in best.iter_mut().zip(v.iter()) {
            if *x > *b {
                *b = *x;
            }
        }
    }
    best
}

/// Stationary distribution of an irreducible chain: solves x' P = x',
/// Σx = 1 by replacing one balance equation with the normalization row.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut system = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = system.lu().solve(&rhs).expect("chain must be irreducible");
    sol.iter().cloned().collect()
}

/// Long-run average reward of a deterministic policy whose chain is
/// irreducible, via its stationary distribution.
pub fn policy_gain(mdp: &MnlMdp, policy: &[usize]) -> f64 {
    let p = policy_matrix(mdp, policy);
    let mu = stationary_distribution(&p);
    mu.iter()
        .enumerate()
        .map(|(s, &w)| w * mdp.reward(s, policy[s]))
        .sum()
}

/// Best gain over all deterministic stationary policies.
pub fn brute_force_gain(mdp: &MnlMdp) -> f64 {
    all_policies(mdp.num_states(), mdp.num_actions())
        .into_iter()
        .map(|pi| policy_gain(mdp, &pi))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_handles_degenerate_budgets() {
        // radius 0: only p_hat is feasible.
        let got = l1_simplex_lp_max(&[0.3, 0.7], 0.0, &[2.0, 1.0]);
        assert!((got - (0.3 * 2.0 + 0.7)).abs() < 1e-12);
        // radius 2: whole simplex, best corner wins.
        let got = l1_simplex_lp_max(&[0.3, 0.4, 0.3], 2.0, &[0.0, 5.0, 1.0]);
        assert!((got - 5.0).abs() < 1e-12);
    }

    #[test]
    fn lp_two_point_hand_case() {
        let got = l1_simplex_lp_max(&[0.5, 0.5], 0.4, &[1.0, 0.0]);
        assert!((got - 0.7).abs() < 1e-12);
    }

    #[test]
    fn stationary_distribution_of_two_state_chain() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let mu = stationary_distribution(&p);
        assert!((mu[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((mu[1] - 1.0 / 3.0).abs() < 1e-12);
    }
}
