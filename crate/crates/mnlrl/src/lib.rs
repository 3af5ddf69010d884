//! Model-based reinforcement learning with multinomial-logistic transition
//! models.
//!
//! The crate provides:
//!
//! * [`mdp`] — finite MDPs whose next-state distribution is a softmax over
//!   feature-core inner products, restricted to per-pair reachable sets;
//! * [`oracle`] — exact discounted and average-reward solvers on the true
//!   model, the ground truth for regret;
//! * [`estimator`] — the online mirror-descent estimator of the transition
//!   core with its confidence ellipsoid radius and per-pair confidence
//!   polytopes;
//! * [`devi`] — discounted extended value iteration with a closed-form
//!   greedy solver for the per-pair inner maximization;
//! * [`agent`] — the episodic optimistic learner with determinant-doubling
//!   episode switches, for average-reward and discounted objectives;
//! * [`hard`] — the hard-to-learn two-state and layered benchmark families
//!   with validators for their structural claims;
//! * [`harness`] — a seeded multi-run experiment driver producing
//!   regret CSVs;
//! * [`io`] — the JSON instance-file format.
//!
//! Start with the `examples/` directory: each example exercises one of the
//! capabilities above end to end.

pub mod agent;
pub mod devi;
pub mod error;
pub mod estimator;
pub mod hard;
pub mod harness;
pub mod io;
pub mod mdp;
pub mod oracle;
pub mod reference;

pub use agent::{run, AgentConfig, ObjectiveMode, RunLog};
pub use devi::{devi, greedy_policy, inner_max, DeviResult};
pub use error::{Error, Result};
pub use estimator::{beta, grad, hessian, loss, ConfidencePolytope, EstimatorState, PolytopeMode};
pub use hard::{
    build_finite, build_infinite, mnl_sigmoid, validate_instance, FiniteHardParams, HardMode,
    InfiniteHardParams,
};
pub use harness::{aggregate, run_experiment, ExperimentConfig};
pub use mdp::{MnlMdp, TransitionSample};
pub use oracle::{evaluate_policy_discounted, solve_average, solve_discounted, ValueTable};
