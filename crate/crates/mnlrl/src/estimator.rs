//! Online estimation of the transition core.
//!
//! Per-step multinomial-logistic loss, its gradient and Hessian, the
//! incremental precision-matrix recursion, and the weighted mirror-descent
//! update with projection onto the parameter ball:
//!
//! ```text
//! Σ̂_t   = Σ_t + η ∇²ℓ_t(θ̂_t)
//! θ̂_{t+1} = argmin_{||θ||≤L} ||θ − (θ̂_t − η Σ̂_t⁻¹ ∇ℓ_t(θ̂_t))||_{Σ̂_t}
//! Σ_{t+1} = Σ_t + ∇²ℓ_t(θ̂_{t+1})
//! ```
//!
//! All applications of Σ̂_t⁻¹ and Σ_t⁻¹ go through Cholesky factor solves;
//! no matrix is ever inverted explicitly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::mdp::{softmax_probs, MnlMdp, TransitionSample};

/// The learner's running state: core estimate, precision matrix, and the
/// hyperparameters that drive the update. A value advanced by a single
/// owner; the pure operations in this module are safe to call concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    theta_hat: DVector<f64>,
    sigma: DMatrix<f64>,
    t: usize,
    lambda: f64,
    eta: f64,
    l_theta: f64,
    logdet_sigma: f64,
}

/// Per-(s,a) plug-in distribution plus an L1 budget: the feasible set for
/// the planner's inner maximization. Radii are clipped to 2, the L1
/// diameter of the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidencePolytope {
    p_hat: Vec<Vec<Vec<f64>>>,
    radius: Vec<Vec<f64>>,
}

/// Which radius formula backs the polytope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolytopeMode {
    /// Radius B¹ + B² with B¹ the probability-weighted centered-feature
    /// norm term and B² the squared max-feature term.
    Exact,
    /// Radius 2β · max ||φ||_{Σ⁻¹}.
    Simplified,
}

/// Step size from the theorem defaults: (1/2) log U + (L_θ L_φ + 1).
pub fn paper_default_eta(u_max: usize, l_theta: f64, l_phi: f64) -> f64 {
    0.5 * (u_max as f64).ln() + l_theta * l_phi + 1.0
}

/// Ridge weight from the theorem defaults: 84√2 (L_θ L_φ³ + d L_φ²) η.
pub fn paper_default_lambda(dim: usize, l_theta: f64, l_phi: f64, eta: f64) -> f64 {
    84.0 * 2.0_f64.sqrt() * (l_theta * l_phi.powi(3) + dim as f64 * l_phi * l_phi) * eta
}

/// Negative log-likelihood of the observed one-hot response under the
/// softmax at `theta`, computed via log-sum-exp so nothing underflows.
pub fn loss(theta: &[f64], sample: &TransitionSample) -> f64 {
    let logits: Vec<f64> = sample
        .reachable_features
        .iter()
        .map(|f| dot(f, theta))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    let observed = sample.observed_index();
    lse - logits[observed]
}

/// Gradient of the per-step loss: Σ (p_{s'} − y_{s'}) φ_{s'}.
pub fn grad(theta: &[f64], sample: &TransitionSample) -> DVector<f64> {
    let probs = softmax_probs(&sample.reachable_features, theta);
    let dim = theta.len();
    let mut g: DVector<f64> = DVector::zeros(dim);
    for (k, f) in sample.reachable_features.iter().enumerate() {
        let w = probs[k] - sample.response[k];
        for i in 0..dim {
            g[i] += w * f[i];
        }
    }
    g
}

/// Hessian of the per-step loss in the rank-one-corrected form
/// Σ p φφᵀ − (Σ p φ)(Σ p φ)ᵀ, which is symmetric by construction and
/// positive semidefinite.
pub fn hessian(theta: &[f64], sample: &TransitionSample) -> DMatrix<f64> {
    let probs = softmax_probs(&sample.reachable_features, theta);
    let dim = theta.len();
    let mut h: DMatrix<f64> = DMatrix::zeros(dim, dim);
    let mut mean: DVector<f64> = DVector::zeros(dim);
    for (k, f) in sample.reachable_features.iter().enumerate() {
        let p = probs[k];
        for i in 0..dim {
            mean[i] += p * f[i];
            for j in 0..=i {
                h[(i, j)] += p * f[i] * f[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = h[(i, j)] - mean[i] * mean[j];
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Confidence-ellipsoid radius β_t = c √d (log(max(U t / δ, e)))².
///
/// The scale polynomial in (L_θ, L_φ) is an unnamed constant in the source
/// analysis, so it is exposed as the knob `c_beta`. The log argument is
/// floored at e so small t cannot drive the radius negative.
pub fn beta(t: usize, dim: usize, u_max: usize, delta: f64, c_beta: f64) -> f64 {
    let arg = ((u_max as f64) * (t as f64) / delta).max(std::f64::consts::E);
    c_beta * (dim as f64).sqrt() * arg.ln().powi(2)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn cholesky_or_err(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| {
        let eig = m.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        Error::Numerical(format!(
            "{what} is not numerically positive definite (lambda_min = {min:.3e}, \
             lambda_max = {max:.3e}, condition = {:.3e}); lambda may be set too small",
            max / min.abs().max(f64::MIN_POSITIVE)
        ))
    })
}

fn ln_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// Projection onto the Euclidean ball of radius `l` in the metric induced
/// by the SPD matrix `m`: argmin over ||θ||₂ ≤ l of ||θ − v||_m.
///
/// Interior points are returned unchanged. Otherwise the KKT system
/// (m + μI) θ = m v is solved by bisection on μ > 0, with the upper end of
/// the bracket doubling from λ_max(m)(||v||/l − 1) until the constraint
/// flips, until ||θ||₂ matches l to a 1e-10 relative tolerance.
pub fn project_ball_weighted(v: &[f64], m: &DMatrix<f64>, l: f64) -> Result<Vec<f64>> {
    let vn = norm2(v);
    if vn <= l {
        return Ok(v.to_vec());
    }
    if l == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let dim = v.len();
    let vv = DVector::from_column_slice(v);
    let mv = m * &vv;
    let theta_at = |mu: f64| -> Result<DVector<f64>> {
        let mut shifted = m.clone();
        for i in 0..dim {
            shifted[(i, i)] += mu;
        }
        let chol = cholesky_or_err(&shifted, "shifted projection system")?;
        Ok(chol.solve(&mv))
    };
    let lambda_max = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut hi = (lambda_max * (vn / l - 1.0)).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        if theta_at(hi)?.norm() < l {
            break;
        }
        hi *= 2.0;
    }
    // Any norm overshoot left by the bisection tolerance is scaled away so
    // the ball constraint holds exactly.
    let finish = |theta: DVector<f64>| -> Vec<f64> {
        let n = theta.norm();
        if n > l {
            theta.iter().map(|x| x * l / n).collect()
        } else {
            theta.iter().cloned().collect()
        }
    };
    let mut lo = 0.0;
    let mut theta = theta_at(hi)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        theta = theta_at(mid)?;
        let n = theta.norm();
        if (n - l).abs() <= 1e-10 * l {
            return Ok(finish(theta));
        }
        if n > l {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let n = theta.norm();
    if (n - l).abs() <= 1e-8 * l {
        // Bracket collapsed slightly short of the tight tolerance.
        return Ok(finish(theta));
    }
    Err(Error::Numerical(format!(
        "ball projection bisection did not converge: ||theta|| = {n}, target {l}"
    )))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl EstimatorState {
    /// Fresh state at t = 1: θ̂ = 0, Σ = λ I.
    pub fn new(dim: usize, lambda: f64, eta: f64, l_theta: f64) -> Result<Self> {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::Argument("lambda must be positive and finite".into()));
        }
        if eta < 0.0 || !eta.is_finite() {
            return Err(Error::Argument("eta must be nonnegative and finite".into()));
        }
        Ok(Self {
            theta_hat: DVector::zeros(dim),
            sigma: DMatrix::identity(dim, dim) * lambda,
            t: 1,
            lambda,
            eta,
            l_theta,
            logdet_sigma: dim as f64 * lambda.ln(),
        })
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn l_theta(&self) -> f64 {
        self.l_theta
    }
    pub fn logdet_sigma(&self) -> f64 {
        self.logdet_sigma
    }

    /// ||x||_{Σ_t}: used by coverage diagnostics against a reference core.
    pub fn sigma_norm(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        (xv.dot(&(&self.sigma * &xv))).max(0.0).sqrt()
    }

    /// Distance of the current estimate to a reference core, in the
    /// Euclidean and Σ_t norms. Environment-side diagnostic.
    pub fn error_against(&self, theta_ref: &[f64]) -> (f64, f64) {
        let diff: Vec<f64> = self
            .theta_hat
            .iter()
            .zip(theta_ref.iter())
            .map(|(a, b)| a - b)
            .collect();
        (norm2(&diff), self.sigma_norm(&diff))
    }

    /// Advances the state by one observed transition.
    pub fn update(&self, sample: &TransitionSample) -> Result<EstimatorState> {
        let theta_slice: Vec<f64> = self.theta_hat.iter().cloned().collect();
        let h_t = hessian(&theta_slice, sample);
        let mut sigma_hat = &self.sigma + &h_t * self.eta;
        symmetrize(&mut sigma_hat);
        let chol = cholesky_or_err(&sigma_hat, "sigma_hat")?;
        let g = grad(&theta_slice, sample);
        let step = chol.solve(&g);
        let v: Vec<f64> = self
            .theta_hat
            .iter()
            .zip(step.iter())
            .map(|(th, st)| th - self.eta * st)
            .collect();
        let theta_next = project_ball_weighted(&v, &sigma_hat, self.l_theta)?;
        let h_next = hessian(&theta_next, sample);
        let mut sigma_next = &self.sigma + h_next;
        symmetrize(&mut sigma_next);
        let chol_next = cholesky_or_err(&sigma_next, "sigma")?;
        let logdet = ln_det_from_cholesky(&chol_next);
        Ok(EstimatorState {
            theta_hat: DVector::from_vec(theta_next),
            sigma: sigma_next,
            t: self.t + 1,
            lambda: self.lambda,
            eta: self.eta,
            l_theta: self.l_theta,
            logdet_sigma: logdet,
        })
    }

    /// Builds the per-(s,a) confidence polytope at the current estimate.
    ///
    /// Exact mode: radius B¹ + B² where
    /// B¹ = β Σ_{s'} p̂(s') ||φ(s,a,s') − Σ_{s''} p̂(s'') φ(s,a,s'')||_{Σ⁻¹}
    /// and B² = 3β² max_{s'} ||φ(s,a,s')||²_{Σ⁻¹}.
    /// Simplified mode: radius 2β max_{s'} ||φ(s,a,s')||_{Σ⁻¹}.
    /// All radii are clipped to 2.
    pub fn build_polytope(
        &self,
        mdp: &MnlMdp,
        beta_t: f64,
        mode: PolytopeMode,
    ) -> Result<ConfidencePolytope> {
        if beta_t < 0.0 {
            return Err(Error::Argument("beta_t must be nonnegative".into()));
        }
        let chol = cholesky_or_err(&self.sigma, "sigma")?;
        let dim = mdp.dim();
        let theta_slice: Vec<f64> = self.theta_hat.iter().cloned().collect();
        let sq_norm_inv = |x: &DVector<f64>| -> f64 { x.dot(&chol.solve(x)).max(0.0) };
        let mut p_hat = vec![vec![Vec::new(); mdp.num_actions()]; mdp.num_states()];
        let mut radius = vec![vec![0.0; mdp.num_actions()]; mdp.num_states()];
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let feats = mdp.features(s, a);
                let probs = softmax_probs(feats, &theta_slice);
                let r = match mode {
                    PolytopeMode::Exact => {
                        let mut mean: DVector<f64> = DVector::zeros(dim);
                        for (k, f) in feats.iter().enumerate() {
                            for i in 0..dim {
                                mean[i] += probs[k] * f[i];
                            }
                        }
                        let mut b1 = 0.0;
                        let mut max_sq = 0.0_f64;
                        for (k, f) in feats.iter().enumerate() {
                            let fv = DVector::from_column_slice(f);
                            let centered = &fv - &mean;
                            b1 += probs[k] * sq_norm_inv(&centered).sqrt();
                            max_sq = max_sq.max(sq_norm_inv(&fv));
                        }
                        beta_t * b1 + 3.0 * beta_t * beta_t * max_sq
                    }
                    PolytopeMode::Simplified => {
                        let mut max_norm = 0.0_f64;
                        for f in feats.iter() {
                            let fv = DVector::from_column_slice(f);
                            max_norm = max_norm.max(sq_norm_inv(&fv).sqrt());
                        }
                        2.0 * beta_t * max_norm
                    }
                };
                p_hat[s][a] = probs;
                radius[s][a] = r.min(2.0);
            }
        }
        Ok(ConfidencePolytope { p_hat, radius })
    }
}

impl ConfidencePolytope {
    /// Assembles a polytope from explicit parts. Each nominal distribution
    /// must sum to 1 within 1e-12; radii are clipped into [0, 2].
    pub fn from_parts(p_hat: Vec<Vec<Vec<f64>>>, radius: Vec<Vec<f64>>) -> Result<Self> {
        if p_hat.len() != radius.len() {
            return Err(Error::Argument("p_hat and radius shapes differ".into()));
        }
        let mut clipped = radius;
        for (s, per_a) in p_hat.iter().enumerate() {
            if per_a.len() != clipped[s].len() {
                return Err(Error::Argument(format!("state {s}: p_hat/radius shapes differ")));
            }
            for (a, p) in per_a.iter().enumerate() {
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || p.iter().any(|&x| x < 0.0) {
                    return Err(Error::Argument(format!(
                        "p_hat({s}, {a}) is not a simplex vector (sum = {sum})"
                    )));
                }
                let r = clipped[s][a];
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::Argument(format!("radius({s}, {a}) = {r} invalid")));
                }
                clipped[s][a] = r.min(2.0);
            }
        }
        Ok(Self { p_hat, radius: clipped })
    }

    pub fn num_states(&self) -> usize {
        self.p_hat.len()
    }
    pub fn num_actions(&self) -> usize {
        self.p_hat.first().map(|x| x.len()).unwrap_or(0)
    }
    pub fn p_hat(&self, s: usize, a: usize) -> &[f64] {
        &self.p_hat[s][a]
    }
    pub fn radius(&self, s: usize, a: usize) -> f64 {
        self.radius[s][a]
    }

    /// True when the reference distribution lies inside every per-(s,a)
    /// L1 ball. Environment-side soundness check.
    pub fn contains(&self, mdp: &MnlMdp, theta_ref: &[f64]) -> Result<bool> {
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let p = mdp.transition_probs(s, a, theta_ref)?;
                let l1: f64 = p
                    .iter()
                    .zip(self.p_hat[s][a].iter())
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                if l1 > self.radius[s][a] + 1e-12 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_communicating, sample_ball};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sample_from(feats: Vec<Vec<f64>>, observed: usize) -> TransitionSample {
        let u = feats.len();
        let mut response = vec![0.0; u];
        response[observed] = 1.0;
        TransitionSample {
            state: 0,
            action: 0,
            next_state: observed,
            reachable_features: feats,
            response,
        }
    }

    /// Random sample satisfying the zero-feature convention.
    pub(crate) fn random_sample<R: Rng>(dim: usize, u: usize, rng: &mut R) -> TransitionSample {
        let zero_at = rng.gen_range(0..u);
        let feats: Vec<Vec<f64>> = (0..u)
            .map(|k| {
                if k == zero_at {
                    vec![0.0; dim]
                } else {
                    sample_ball(dim, 2.0, rng)
                }
            })
            .collect();
        let observed = rng.gen_range(0..u);
        sample_from(feats, observed)
    }

    #[test]
    fn loss_of_uniform_is_log_u() {
        let s = sample_from(vec![vec![0.0, 0.0]; 3], 1);
        assert!((loss(&[0.7, -0.3], &s) - 3.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_two_outcome_logit_zero_is_log_2() {
        let s = sample_from(vec![vec![1.0], vec![0.0]], 0);
        assert!((loss(&[0.0], &s) - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_direct_probability() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..100 {
            let d = rng.gen_range(1..=6);
            let u = rng.gen_range(2..=5);
            let s = random_sample(d, u, &mut rng);
            let theta = sample_ball(d, 1.5, &mut rng);
            let p = softmax_probs(&s.reachable_features, &theta);
            let direct = -p[s.observed_index()].ln();
            assert!((loss(&theta, &s) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_zero_for_zero_features_and_saturated_softmax() {
        let s = sample_from(vec![vec![0.0, 0.0]; 4], 2);
        assert_eq!(grad(&[1.0, 2.0], &s).norm(), 0.0);

        // Response on the argmax outcome with a +50 logit: probabilities
        // saturate to the one-hot response, gradient vanishes.
        let s = sample_from(vec![vec![1.0], vec![0.0]], 0);
        let g = grad(&[50.0], &s);
        assert!(g.norm() <= 1e-15);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let h = 1e-5;
        for _ in 0..100 {
            let d = rng.gen_range(1..=8);
            let u = rng.gen_range(2..=6);
            let s = random_sample(d, u, &mut rng);
            let theta = sample_ball(d, 1.5, &mut rng);
            let g = grad(&theta, &s);
            let mut fd = vec![0.0; d];
            for i in 0..d {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                fd[i] = (loss(&tp, &s) - loss(&tm, &s)) / (2.0 * h);
            }
            let diff: f64 = g
                .iter()
                .zip(fd.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let rel = diff / g.norm().max(1e-6);
            assert!(rel <= 1e-6, "rel = {rel}");
        }
    }

    #[test]
    fn hessian_two_outcome_scalar_case() {
        // d = 1, logits (theta*x, 0): Hessian is x^2 p (1 - p).
        let x = 1.7;
        let s = sample_from(vec![vec![x], vec![0.0]], 1);
        let theta = [0.45];
        let p = (x * theta[0]).exp() / ((x * theta[0]).exp() + 1.0);
        let h = hessian(&theta, &s);
        assert!((h[(0, 0)] - x * x * p * (1.0 - p)).abs() < 1e-14);
    }

    #[test]
    fn hessian_matches_finite_differences_and_is_psd() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let h = 1e-5;
        for _ in 0..100 {
            let d = rng.gen_range(1..=6);
            let u = rng.gen_range(2..=6);
            let s = random_sample(d, u, &mut rng);
            let theta = sample_ball(d, 1.5, &mut rng);
            let hess = hessian(&theta, &s);
            let mut fd = DMatrix::zeros(d, d);
            for i in 0..d {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let gp = grad(&tp, &s);
                let gm = grad(&tm, &s);
                for j in 0..d {
                    fd[(j, i)] = (gp[j] - gm[j]) / (2.0 * h);
                }
            }
            let rel = (&hess - &fd).norm() / hess.norm().max(1e-6);
            assert!(rel <= 1e-5, "rel = {rel}");
            let eig = hess.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10, "lambda_min = {min}");
        }
    }

    #[test]
    fn update_with_zero_features_is_inert() {
        let s = sample_from(vec![vec![0.0, 0.0]; 3], 0);
        let st = EstimatorState::new(2, 1.0, 0.5, 1.0).unwrap();
        let next = st.update(&s).unwrap();
        assert_eq!(next.t(), 2);
        assert_eq!(next.theta_hat(), st.theta_hat());
        assert_eq!(next.sigma(), st.sigma());
    }

    #[test]
    fn update_with_eta_zero_only_accumulates_hessian() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let s = random_sample(3, 4, &mut rng);
        let st = EstimatorState::new(3, 2.0, 0.0, 1.0).unwrap();
        let next = st.update(&s).unwrap();
        assert_eq!(next.theta_hat(), st.theta_hat());
        let theta: Vec<f64> = st.theta_hat().iter().cloned().collect();
        let expect = st.sigma() + hessian(&theta, &s);
        assert!((next.sigma() - expect).norm() < 1e-14);
    }

    #[test]
    fn update_matches_straight_line_reference() {
        // Single update from theta = 0, d = 2, hand-built sample, checked
        // against a direct transcription of the two-stage recursion.
        let feats = vec![vec![0.0, 0.0], vec![0.8, -0.4]];
        let s = sample_from(feats.clone(), 1);
        let (lambda, eta, l) = (0.7, 0.9, 10.0);
        let st = EstimatorState::new(2, lambda, eta, l).unwrap();
        let next = st.update(&s).unwrap();

        // Reference: probabilities at 0 are (1/2, 1/2).
        let p = 0.5;
        let f = &feats[1];
        // hessian = p f f^T - (p f)(p f)^T = p(1-p) f f^T
        let w = p * (1.0 - p);
        let h = DMatrix::from_row_slice(2, 2, &[
            w * f[0] * f[0],
            w * f[0] * f[1],
            w * f[1] * f[0],
            w * f[1] * f[1],
        ]);
        let sigma_hat = DMatrix::identity(2, 2) * lambda + &h * eta;
        // grad at 0: (p - 1) f
        let g = DVector::from_column_slice(&[(p - 1.0) * f[0], (p - 1.0) * f[1]]);
        let v = -eta * sigma_hat.clone().try_inverse().unwrap() * g;
        // ||v|| < l here, so no projection.
        assert!(v.norm() < l);
        assert!((next.theta_hat() - &v).norm() < 1e-12);
        let theta1: Vec<f64> = v.iter().cloned().collect();
        let sigma_next = DMatrix::identity(2, 2) * lambda + hessian(&theta1, &s);
        assert!((next.sigma() - sigma_next).norm() < 1e-12);
    }

    #[test]
    fn state_invariants_hold_along_a_run() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        let mdp = random_communicating(4, 2, 3, 3, 1.0, 1.0, &mut rng);
        let mut st = EstimatorState::new(3, 0.5, 1.2, 1.0).unwrap();
        let mut state = 0;
        for i in 0..300 {
            let a = i % 2;
            let smp = mdp.sample_transition(state, a, &mut rng).unwrap();
            state = smp.next_state;
            let prev_sigma = st.sigma().clone();
            st = st.update(&smp).unwrap();
            // Exactly symmetric.
            assert_eq!(st.sigma(), &st.sigma().transpose());
            // Sigma >= lambda I and the increment is PSD.
            let eig = (st.sigma() - &prev_sigma).symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-9);
            let eig2 = (st.sigma() - DMatrix::identity(3, 3) * 0.5).symmetric_eigen();
            let min2 = eig2.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min2 >= -1e-9);
            // Ball constraint.
            assert!(st.theta_hat().norm() <= 1.0 + 1e-12);
            // Cached log-determinant agrees with a fresh factorization.
            let chol = Cholesky::new(st.sigma().clone()).unwrap();
            assert!((st.logdet_sigma() - ln_det_from_cholesky(&chol)).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_interior_and_euclidean_cases() {
        let m = DMatrix::identity(3, 3);
        let v = [0.1, 0.2, -0.1];
        assert_eq!(project_ball_weighted(&v, &m, 1.0).unwrap(), v.to_vec());

        let v = [3.0, 0.0, 4.0];
        let p = project_ball_weighted(&v, &m, 1.0).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-9 && (p[2] - 0.8).abs() < 1e-9);
        assert!((norm2(&p) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn projection_is_optimal_against_random_probes() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for _ in 0..20 {
            let d = rng.gen_range(2..=6);
            // Random SPD matrix A A^T + 0.1 I.
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let mut m = &a * a.transpose();
            for i in 0..d {
                m[(i, i)] += 0.1;
            }
            let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let l = 0.5;
            let p = project_ball_weighted(&v, &m, l).unwrap();
            let obj = |x: &[f64]| -> f64 {
                let diff = DVector::from_column_slice(x) - DVector::from_column_slice(&v);
                diff.dot(&(&m * &diff))
            };
            let best = obj(&p);
            // Random feasible points never beat the projection.
            for _ in 0..5_000 {
                let q = sample_ball(d, l, &mut rng);
                assert!(obj(&q) >= best - 1e-9);
            }
            // Small perturbations along random tangent directions of the
            // sphere surface never improve either.
            if norm2(&v) > l {
                for _ in 0..20 {
                    let dir = sample_ball(d, 1.0, &mut rng);
                    for sign in [-1.0, 1.0] {
                        let mut q: Vec<f64> = p
                            .iter()
                            .zip(dir.iter())
                            .map(|(x, t)| x + sign * 1e-4 * t)
                            .collect();
                        let n = norm2(&q);
                        if n > l {
                            for x in q.iter_mut() {
                                *x *= l / n;
                            }
                        }
                        assert!(obj(&q) >= best - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn beta_formula_and_monotonicity() {
        assert_eq!(beta(1, 4, 2, 0.1, 0.0), 0.0);
        let b = beta(1, 4, 2, 0.1, 1.0);
        let direct = 2.0 * (20.0_f64).ln().powi(2);
        assert!((b - direct).abs() < 1e-12);
        let mut prev = 0.0;
        for t in 1..200 {
            let bt = beta(t, 3, 4, 0.05, 0.7);
            assert!(bt >= prev);
            prev = bt;
        }
    }

    #[test]
    fn polytope_radius_zero_and_zero_features() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let mdp = random_communicating(3, 2, 2, 3, 1.0, 1.0, &mut rng);
        let st = EstimatorState::new(2, 1.0, 1.0, 1.0).unwrap();
        for mode in [PolytopeMode::Exact, PolytopeMode::Simplified] {
            let p = st.build_polytope(&mdp, 0.0, mode).unwrap();
            for s in 0..3 {
                for a in 0..2 {
                    assert_eq!(p.radius(s, a), 0.0);
                    let theta: Vec<f64> = st.theta_hat().iter().cloned().collect();
                    let probs = mdp.transition_probs(s, a, &theta).unwrap();
                    assert_eq!(p.p_hat(s, a), &probs[..]);
                }
            }
        }
        // All-zero features at every pair: radius 0 in both modes even for
        // beta > 0 in exact mode (centered features vanish)… the simplified
        // mode also vanishes because max ||phi|| = 0.
        let flat = MnlMdp::new(
            2,
            1,
            2,
            vec![vec![vec![0, 1]]; 2],
            vec![vec![vec![vec![0.0, 0.0]; 2]]; 2],
            vec![0.0, 0.0],
            vec![vec![0.5]; 2],
            1.0,
            1.0,
        )
        .unwrap();
        for mode in [PolytopeMode::Exact, PolytopeMode::Simplified] {
            let p = st.build_polytope(&flat, 5.0, mode).unwrap();
            assert_eq!(p.radius(0, 0), 0.0);
            assert_eq!(p.radius(1, 0), 0.0);
        }
    }

    #[test]
    fn polytope_hand_case_matches_straight_line_formulas() {
        // d = 2, Sigma = 2I, features (0,0) and (1,0), beta = 1 at theta = 0:
        // p_hat = (1/2, 1/2).
        let mdp = MnlMdp::new(
            2,
            1,
            2,
            vec![vec![vec![0, 1]]; 2],
            vec![vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]]]; 2],
            vec![0.0, 0.0],
            vec![vec![0.5]; 2],
            1.0,
            1.0,
        )
        .unwrap();
        let mut st = EstimatorState::new(2, 2.0, 1.0, 1.0).unwrap();
        st.sigma = DMatrix::identity(2, 2) * 2.0;
        let simp = st.build_polytope(&mdp, 1.0, PolytopeMode::Simplified).unwrap();
        assert!((simp.radius(0, 0) - 2.0 / 2.0_f64.sqrt()).abs() < 1e-12);

        let exact = st.build_polytope(&mdp, 1.0, PolytopeMode::Exact).unwrap();
        // Centered features: +-(1/2, 0); ||(1/2,0)||_{inv} = 1/(2 sqrt 2).
        // B1 = 1 * (0.5 + 0.5) * 1/(2 sqrt 2) = 1/(2 sqrt 2).
        // B2 = 3 * max ||phi||^2_{inv} = 3 * (1/2) = 3/2.
        let b1 = 1.0 / (2.0 * 2.0_f64.sqrt());
        let b2 = 3.0 * 0.5;
        assert!((exact.radius(0, 0) - (b1 + b2)).abs() < 1e-12);
    }
}
