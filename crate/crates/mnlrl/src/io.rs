//! Instance file format: a JSON document with the complete environment
//! description, including the hidden core (instance files are environment
//! artifacts, not learner inputs).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::MnlMdp;

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    rewards: Vec<Vec<f64>>,
    reachable: Vec<Vec<Vec<usize>>>,
    features: Vec<Vec<Vec<Vec<f64>>>>,
    theta_star: Vec<f64>,
    l_phi: f64,
    l_theta: f64,
}

pub fn save_instance(mdp: &MnlMdp, path: &Path) -> Result<()> {
    let file = InstanceFile {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        dim: mdp.dim(),
        rewards: (0..mdp.num_states())
            .map(|s| (0..mdp.num_actions()).map(|a| mdp.reward(s, a)).collect())
            .collect(),
        reachable: (0..mdp.num_states())
            .map(|s| {
                (0..mdp.num_actions())
                    .map(|a| mdp.reachable(s, a).to_vec())
                    .collect()
            })
            .collect(),
        features: (0..mdp.num_states())
            .map(|s| {
                (0..mdp.num_actions())
                    .map(|a| mdp.features(s, a).to_vec())
                    .collect()
            })
            .collect(),
        theta_star: mdp.theta_star().to_vec(),
        l_phi: mdp.l_phi(),
        l_theta: mdp.l_theta(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(path, text)?;
    Ok(())
}

/// Loads and fully validates an instance file. Parse errors carry the line
/// and column; semantic failures name the offending field.
pub fn load_instance(path: &Path) -> Result<MnlMdp> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| {
        Error::InstanceValidation(format!(
            "{}: parse error at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let mdp = MnlMdp::new(
        file.num_states,
        file.num_actions,
        file.dim,
        file.reachable,
        file.features,
        file.theta_star,
        file.rewards,
        file.l_phi,
        file.l_theta,
    )
    .map_err(|e| Error::InstanceValidation(format!("{}: {e}", path.display())))?;
    mdp.validate_zero_feature()
        .map_err(|e| Error::InstanceValidation(format!("{}: {e}", path.display())))?;
    Ok(mdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_communicating;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_preserves_instance() {
        let mut rng = ChaCha20Rng::seed_from_u64(107);
        let mdp = random_communicating(4, 2, 3, 3, 1.0, 1.0, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instance.json");
        save_instance(&mdp, &path).unwrap();
        let loaded = load_instance(&path).unwrap();
        assert_eq!(mdp, loaded);
    }

    #[test]
    fn parse_errors_carry_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{\n  \"num_states\": oops\n}").unwrap();
        let err = load_instance(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let mut rng = ChaCha20Rng::seed_from_u64(109);
        let mdp = random_communicating(3, 2, 2, 2, 1.0, 1.0, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        save_instance(&mdp, &path).unwrap();
        // Corrupt one reward out of range.
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        v["rewards"][0][0] = serde_json::json!(7.0);
        std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        let err = load_instance(&path).unwrap_err();
        assert!(err.to_string().contains("reward"), "{err}");
    }
}
