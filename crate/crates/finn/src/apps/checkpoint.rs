//! Versioned model checkpoints.
//!
//! JSON with every float stored as the hex of its IEEE-754 bits, so
//! save -> load -> save is byte-identical and a loaded model evaluates
//! to exactly the pre-save values. Loading validates the format
//! version and the parameter count against the architecture.

use crate::integral::{Constraint, ConstraintKind, ConstrainedModel, Domain};
use crate::network::{LayerSpec, Network};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model plus its provenance.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ConstrainedModel<f64>,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: f64,
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn unhex(s: &str) -> crate::Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| crate::Error::MalformedCheckpoint(format!("bad float '{s}': {e}")))
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    architecture: ArchitectureDto,
    params: Vec<String>,
    constraint: ConstraintDto,
    seed: u64,
    metadata: MetadataDto,
}

#[derive(Serialize, Deserialize)]
struct ArchitectureDto {
    input_dim: usize,
    positive: bool,
    layers: Vec<LayerSpec>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintDto {
    kind: ConstraintKind,
    epsilon: String,
    lower: Vec<String>,
    upper: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MetadataDto {
    steps: usize,
    final_loss: String,
}

pub fn save(ck: &Checkpoint, path: &Path) -> crate::Result<()> {
    let net = ck.model.net();
    let constraint = ck.model.constraint();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        architecture: ArchitectureDto {
            input_dim: net.input_dim(),
            positive: net.is_positive(),
            layers: net.layers().to_vec(),
        },
        params: net.params().iter().copied().map(hex).collect(),
        constraint: ConstraintDto {
            kind: constraint.kind,
            epsilon: hex(constraint.epsilon),
            lower: constraint.domain.lower().iter().copied().map(hex).collect(),
            upper: constraint.domain.upper().iter().copied().map(hex).collect(),
        },
        seed: ck.seed,
        metadata: MetadataDto {
            steps: ck.steps,
            final_loss: hex(ck.final_loss),
        },
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| crate::Error::MalformedCheckpoint(e.to_string()))?;
    super::output::atomic_write(path, json.as_bytes())?;
    Ok(())
}

pub fn load(path: &Path) -> crate::Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| crate::Error::MalformedCheckpoint(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(crate::Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            got: file.version,
        });
    }
    let params = file
        .params
        .iter()
        .map(|s| unhex(s))
        .collect::<crate::Result<Vec<f64>>>()?;
    let net = Network::from_layers(file.architecture.layers, params, file.architecture.positive)?;
    let lower = file
        .constraint
        .lower
        .iter()
        .map(|s| unhex(s))
        .collect::<crate::Result<Vec<f64>>>()?;
    let upper = file
        .constraint
        .upper
        .iter()
        .map(|s| unhex(s))
        .collect::<crate::Result<Vec<f64>>>()?;
    let constraint = Constraint {
        kind: file.constraint.kind,
        epsilon: unhex(&file.constraint.epsilon)?,
        domain: Domain::new(lower, upper)?,
    };
    Ok(Checkpoint {
        model: ConstrainedModel::new(net, constraint)?,
        seed: file.seed,
        steps: file.metadata.steps,
        final_loss: unhex(&file.metadata.final_loss)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ArchSpec;

    fn sample_checkpoint() -> Checkpoint {
        let net = Network::init(
            &ArchSpec {
                input_dim: 2,
                hidden: vec![5, 3],
                positive: true,
            },
            42,
        )
        .unwrap();
        let domain = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let model = ConstrainedModel::new(net, Constraint::equality(1.0, domain)).unwrap();
        Checkpoint {
            model,
            seed: 42,
            steps: 100,
            final_loss: 0.1 + 0.2,
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = std::env::temp_dir().join("finn-ckpt-test");
        let a = dir.join("a.json");
        let b = dir.join("b.json");
        let ck = sample_checkpoint();
        save(&ck, &a).unwrap();
        let loaded = load(&a).unwrap();
        save(&loaded, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(loaded.model.net().params(), ck.model.net().params());
        assert_eq!(loaded.final_loss.to_bits(), ck.final_loss.to_bits());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn loaded_model_evaluates_identically() {
        let dir = std::env::temp_dir().join("finn-ckpt-test-2");
        let path = dir.join("ck.json");
        let ck = sample_checkpoint();
        save(&ck, &path).unwrap();
        let loaded = load(&path).unwrap();
        for i in 0..10 {
            let x = [-0.9 + 0.2 * i as f64, 0.33 * i as f64 - 1.0];
            assert_eq!(
                ck.model.integrand(&x).unwrap().to_bits(),
                loaded.model.integrand(&x).unwrap().to_bits()
            );
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_is_malformed() {
        let dir = std::env::temp_dir().join("finn-ckpt-test-3");
        let path = dir.join("ck.json");
        let ck = sample_checkpoint();
        save(&ck, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(
            load(&path),
            Err(crate::Error::MalformedCheckpoint(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unknown_version_is_refused() {
        let dir = std::env::temp_dir().join("finn-ckpt-test-4");
        let path = dir.join("ck.json");
        let ck = sample_checkpoint();
        save(&ck, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load(&path),
            Err(crate::Error::CheckpointVersion { got: 99, .. })
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn parameter_count_is_validated() {
        let dir = std::env::temp_dir().join("finn-ckpt-test-5");
        let path = dir.join("ck.json");
        let ck = sample_checkpoint();
        save(&ck, &path).unwrap();
        let mut file: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        file["params"].as_array_mut().unwrap().pop();
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(
            load(&path),
            Err(crate::Error::ParamCountMismatch { .. })
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
