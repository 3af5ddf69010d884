//! Discounted extended value iteration over a confidence polytope.
//!
//! Each backup maximizes the expected successor value over the per-(s,a)
//! feasible set {simplex} ∩ {L1 ball around the plug-in distribution}.
//! That inner maximization has a closed-form greedy solution: pour budget
//! onto the best successor, drain it from the worst ones.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::ConfidencePolytope;
use crate::mdp::MnlMdp;

/// Cell count above which one round's backups run on the rayon pool.
/// Results are identical either way; each cell is independent.
const PARALLEL_CELLS: usize = 4096;

/// Output of a DEVI run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviResult {
    /// Q^(N) over (state, action).
    pub q: Vec<Vec<f64>>,
    /// V(s) = max_a Q^(N)(s, a).
    pub v: Vec<f64>,
    pub iterations: usize,
    /// sup over (s,a) of Q^(N-1) − Q^(N).
    pub final_gap: f64,
    /// Whether V^(n) <= V^(n-1) + 1e-12 held at every round.
    pub monotone: bool,
}

/// Maximizes Σ p·v over {p: simplex, Σ|p − p_hat| <= radius}.
///
/// Greedy: sort successors by value descending (ties to the lower index),
/// move min(radius/2, 1 − p̂_best) of mass onto the best successor, and
/// remove the same total from successors in ascending value order (ties to
/// the lower index), flooring each at zero. Returns the maximizer and the
/// attained value exactly as computed.
pub fn inner_max(p_hat: &[f64], radius: f64, v: &[f64]) -> (Vec<f64>, f64) {
    debug_assert_eq!(p_hat.len(), v.len());
    let u = p_hat.len();
    let mut p = p_hat.to_vec();
    if radius > 0.0 && u > 1 {
        let mut desc: Vec<usize> = (0..u).collect();
        desc.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap().then(i.cmp(&j)));
        let best = desc[0];
        let add = (radius / 2.0).min(1.0 - p[best]);
        p[best] += add;
        let mut asc: Vec<usize> = (0..u).collect();
        asc.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap().then(i.cmp(&j)));
        let mut remaining = add;
        for &k in &asc {
            if k == best {
                continue;
            }
            if remaining <= 0.0 {
                break;
            }
            let take = p[k].min(remaining);
            p[k] -= take;
            remaining -= take;
        }
    }
    let value = p.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    (p, value)
}

/// Runs N rounds of discounted extended value iteration starting from
/// Q^(0) ≡ 1/(1−γ).
pub fn devi(
    mdp: &MnlMdp,
    polytope: &ConfidencePolytope,
    gamma: f64,
    n_rounds: usize,
) -> Result<DeviResult> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Argument(format!("gamma = {gamma} outside [0, 1)")));
    }
    if n_rounds == 0 {
        return Err(Error::Argument("n_rounds must be >= 1".into()));
    }
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    if polytope.num_states() != ns || polytope.num_actions() != na {
        return Err(Error::Argument("polytope shape does not match the MDP".into()));
    }
    let q0 = 1.0 / (1.0 - gamma);
    let mut q = vec![vec![q0; na]; ns];
    let mut v_prev: Vec<f64> = vec![q0; ns];
    let mut monotone = true;
    let mut gap = 0.0_f64;
    for round in 0..n_rounds {
        let v: Vec<f64> = (0..ns)
            .map(|s| q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        if round > 0 {
            for s in 0..ns {
                if v[s] > v_prev[s] + 1e-12 {
                    monotone = false;
                }
            }
        }
        let backup = |s: usize, a: usize| -> f64 {
            let reach = mdp.reachable(s, a);
            let values: Vec<f64> = reach.iter().map(|&sp| v[sp]).collect();
            let (_, inner) = inner_max(polytope.p_hat(s, a), polytope.radius(s, a), &values);
            mdp.reward(s, a) + gamma * inner
        };
        let q_next: Vec<Vec<f64>> = if ns * na >= PARALLEL_CELLS {
            (0..ns)
                .into_par_iter()
                .map(|s| (0..na).map(|a| backup(s, a)).collect())
                .collect()
        } else {
            (0..ns).map(|s| (0..na).map(|a| backup(s, a)).collect()).collect()
        };
        if round + 1 == n_rounds {
            gap = q
                .iter()
                .flatten()
                .zip(q_next.iter().flatten())
                .map(|(old, new)| old - new)
                .fold(f64::NEG_INFINITY, f64::max);
        }
        q = q_next;
        v_prev = v;
    }
    let v_final: Vec<f64> = (0..ns)
        .map(|s| q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    for s in 0..ns {
        if v_final[s] > v_prev[s] + 1e-12 {
            monotone = false;
        }
    }
    Ok(DeviResult {
        q,
        v: v_final,
        iterations: n_rounds,
        final_gap: gap,
        monotone,
    })
}

/// Per-state argmax over actions, ties broken by the lowest action index.
pub fn greedy_policy(q: &[Vec<f64>]) -> Vec<usize> {
    q.iter()
        .map(|row| {
            let mut best = 0;
            for (a, &val) in row.iter().enumerate() {
                if val > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorState, PolytopeMode};
    use crate::mdp::random_communicating;
    use crate::reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn inner_max_radius_zero_returns_p_hat() {
        let p = vec![0.2, 0.5, 0.3];
        let v = vec![1.0, -1.0, 0.0];
        let (q, val) = inner_max(&p, 0.0, &v);
        assert_eq!(q, p);
        assert_eq!(val, 0.2 - 0.5);
    }

    #[test]
    fn inner_max_two_point_case() {
        let (p, val) = inner_max(&[0.5, 0.5], 0.4, &[1.0, 0.0]);
        assert!((p[0] - 0.7).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
        assert!((val - 0.7).abs() < 1e-15);
    }

    #[test]
    fn inner_max_saturates_to_best_corner() {
        let p_hat = [0.25, 0.25, 0.25, 0.25];
        let v = [0.1, 3.0, 0.2, 0.2];
        let (p, val) = inner_max(&p_hat, 2.0 * (1.0 - 0.25), &v);
        assert_eq!(p[1], 1.0);
        assert!((val - 3.0).abs() < 1e-15);
    }

    #[test]
    fn inner_max_matches_vertex_lp() {
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        for _ in 0..300 {
            let u = rng.gen_range(2..=6);
            let mut p_hat: Vec<f64> = (0..u).map(|_| rng.gen::<f64>() + 0.01).collect();
            let sum: f64 = p_hat.iter().sum();
            for x in p_hat.iter_mut() {
                *x /= sum;
            }
            let radius = rng.gen::<f64>() * 2.2;
            let radius = radius.min(2.0);
            let v: Vec<f64> = (0..u).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let (_, got) = inner_max(&p_hat, radius, &v);
            let want = reference::l1_simplex_lp_max(&p_hat, radius, &v);
            assert!((got - want).abs() <= 1e-9, "greedy {got} vs LP {want}");
        }
    }

    #[test]
    fn devi_gamma_zero_single_round_is_reward() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let mdp = random_communicating(4, 3, 2, 3, 1.0, 1.0, &mut rng);
        let st = EstimatorState::new(2, 1.0, 1.0, 1.0).unwrap();
        let poly = st.build_polytope(&mdp, 1.0, PolytopeMode::Simplified).unwrap();
        let res = devi(&mdp, &poly, 0.0, 1).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                assert!((res.q[s][a] - mdp.reward(s, a)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn devi_monotone_and_gap_bound_on_random_polytopes() {
        let mut rng = ChaCha20Rng::seed_from_u64(59);
        for _ in 0..10 {
            let s = rng.gen_range(2..=6);
            let a = rng.gen_range(1..=4);
            let u = rng.gen_range(2..=4).min(s);
            let mdp = random_communicating(s, a, 2, u, 1.0, 1.0, &mut rng);
            let mut p_hat = vec![vec![Vec::new(); a]; s];
            let mut radius = vec![vec![0.0; a]; s];
            for si in 0..s {
                for ai in 0..a {
                    let len = mdp.reachable(si, ai).len();
                    let mut p: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() + 0.01).collect();
                    let tot: f64 = p.iter().sum();
                    for x in p.iter_mut() {
                        *x /= tot;
                    }
                    p_hat[si][ai] = p;
                    radius[si][ai] = rng.gen::<f64>() * 2.0;
                }
            }
            let poly = ConfidencePolytope::from_parts(p_hat, radius).unwrap();
            for gamma in [0.5, 0.9, 0.99] {
                let n = 50;
                let res = devi(&mdp, &poly, gamma, n).unwrap();
                assert!(res.monotone);
                assert!(res.final_gap <= gamma.powi(n as i32 - 1) + 1e-12);
                for s in 0..res.v.len() {
                    let vmax = res.q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    assert!((res.v[s] - vmax).abs() < 1e-12);
                    assert!(res.v[s] <= 1.0 / (1.0 - gamma) + 1e-9 && res.v[s] >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn greedy_policy_tie_breaks_to_lowest_index() {
        let q = vec![vec![1.0, 1.0, 0.5], vec![0.1, 0.7, 0.7]];
        assert_eq!(greedy_policy(&q), vec![0, 1]);
    }

    #[test]
    fn greedy_policy_strict_maxima() {
        let q = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        assert_eq!(greedy_policy(&q), vec![1, 0]);
    }
}
