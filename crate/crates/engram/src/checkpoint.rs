//! Binary run checkpoints: a JSON header (version, config hash, step,
//! parameter names/shapes, optimizer slot layout) followed by all values as
//! little-endian 64-bit floats. Saving is deterministic, so
//! save → load → save reproduces the file byte for byte.
//!
//! Layout: `u64` header length (LE), the UTF-8 JSON header, then the
//! payload — every parameter's data in header order, then for each
//! optimizer slot its two accumulators.

use crate::optim::{OptimizerState, SlotPair};
use crate::params::ParamStore;
use crate::tape::Shape;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint belongs to config {found}, expected {expected}")]
    ConfigHash { expected: String, found: String },
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config_hash: String,
    step: u64,
    params: Vec<ParamEntry>,
    optimizer: Option<OptimizerMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    kind: crate::optim::OptimKind,
    step: u64,
    slots: Vec<SlotEntry>,
}

#[derive(Serialize, Deserialize)]
struct SlotEntry {
    name: String,
    len: usize,
}

fn shape_dims(shape: Shape) -> Vec<usize> {
    match shape {
        Shape::Scalar => vec![],
        Shape::Vector(n) => vec![n],
        Shape::Matrix(r, c) => vec![r, c],
    }
}

fn dims_shape(dims: &[usize]) -> Result<Shape, CheckpointError> {
    match dims {
        [] => Ok(Shape::Scalar),
        [n] => Ok(Shape::Vector(*n)),
        [r, c] => Ok(Shape::Matrix(*r, *c)),
        _ => Err(CheckpointError::Corrupt(format!("unsupported shape rank {}", dims.len()))),
    }
}

/// Everything a saved run carries.
#[derive(Debug)]
pub struct Checkpoint {
    pub config_hash: String,
    pub step: u64,
    pub store: ParamStore,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    /// Copies the saved values into a freshly initialized store with the
    /// same parameter layout, matching by name.
    pub fn restore(&self, target: &mut ParamStore) -> Result<(), CheckpointError> {
        let by_name: BTreeMap<&str, _> =
            self.store.iter().map(|(_, p)| (p.name.as_str(), p)).collect();
        for (_, p) in target.iter_mut() {
            let src = by_name
                .get(p.name.as_str())
                .ok_or_else(|| CheckpointError::Mismatch(format!("missing parameter {}", p.name)))?;
            if src.shape != p.shape {
                return Err(CheckpointError::Mismatch(format!(
                    "parameter {} has shape {:?}, checkpoint holds {:?}",
                    p.name, p.shape, src.shape
                )));
            }
            p.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

pub fn save(
    path: impl AsRef<Path>,
    config_hash: &str,
    step: u64,
    store: &ParamStore,
    optimizer: Option<&OptimizerState>,
) -> Result<(), CheckpointError> {
    let header = Header {
        version: VERSION,
        config_hash: config_hash.to_string(),
        step,
        params: store
            .iter()
            .map(|(_, p)| ParamEntry { name: p.name.clone(), shape: shape_dims(p.shape) })
            .collect(),
        optimizer: optimizer.map(|o| OptimizerMeta {
            kind: o.kind,
            step: o.step,
            slots: o
                .slots
                .iter()
                .map(|(name, s)| SlotEntry { name: name.clone(), len: s.a.len() })
                .collect(),
        }),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    let mut payload: Vec<f64> = Vec::with_capacity(store.total_len());
    for (_, p) in store.iter() {
        payload.extend_from_slice(&p.data);
    }
    if let Some(o) = optimizer {
        for s in o.slots.values() {
            payload.extend_from_slice(&s.a);
            payload.extend_from_slice(&s.b);
        }
    }

    let mut file = fs::File::create(path)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    let mut bytes = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let mut file = fs::File::open(path)?;
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)
        .map_err(|_| CheckpointError::Corrupt("missing header length".into()))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| CheckpointError::Corrupt("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| CheckpointError::Corrupt(format!("bad header: {e}")))?;
    if header.version != VERSION {
        return Err(CheckpointError::Version { found: header.version });
    }

    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(CheckpointError::Corrupt("payload is not a whole number of floats".into()));
    }
    let values: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let param_floats: usize = header.params.iter().map(|p| dims_len(&p.shape)).sum();
    let slot_floats: usize = header
        .optimizer
        .as_ref()
        .map(|o| o.slots.iter().map(|s| 2 * s.len).sum())
        .unwrap_or(0);
    if values.len() != param_floats + slot_floats {
        return Err(CheckpointError::Corrupt(format!(
            "payload holds {} floats, header promises {}",
            values.len(),
            param_floats + slot_floats
        )));
    }

    let mut store = ParamStore::new();
    let mut cursor = 0usize;
    for entry in &header.params {
        let shape = dims_shape(&entry.shape)?;
        let n = shape.len();
        store.add(entry.name.clone(), shape, values[cursor..cursor + n].to_vec());
        cursor += n;
    }
    let optimizer = header.optimizer.map(|meta| {
        let mut slots = BTreeMap::new();
        for entry in &meta.slots {
            let a = values[cursor..cursor + entry.len].to_vec();
            cursor += entry.len;
            let b = values[cursor..cursor + entry.len].to_vec();
            cursor += entry.len;
            slots.insert(entry.name.clone(), SlotPair { a, b });
        }
        OptimizerState { kind: meta.kind, step: meta.step, slots }
    });

    Ok(Checkpoint { config_hash: header.config_hash, step: header.step, store, optimizer })
}

fn dims_len(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Load and verify the checkpoint was produced by the given config.
pub fn load_expecting(
    path: impl AsRef<Path>,
    config_hash: &str,
) -> Result<Checkpoint, CheckpointError> {
    let ckpt = load(path)?;
    if ckpt.config_hash != config_hash {
        return Err(CheckpointError::ConfigHash {
            expected: config_hash.to_string(),
            found: ckpt.config_hash,
        });
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Optimizer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn demo_store(seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.add_uniform("enc.w", Shape::Matrix(4, 3), &mut rng);
        store.add_uniform("enc.b", Shape::Vector(4), &mut rng);
        store.add_uniform("gain", Shape::Scalar, &mut rng);
        store
    }

    fn stepped_optimizer(store: &mut ParamStore) -> Optimizer {
        let mut opt = Optimizer::adam(1e-3).with_clip(10.0);
        for (_, p) in store.iter_mut() {
            p.grad.iter_mut().enumerate().for_each(|(i, g)| *g = 0.1 * (i as f64 + 1.0));
        }
        opt.step(store);
        opt
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = demo_store(1);
        let opt = stepped_optimizer(&mut store);
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save(&p1, "cafef00d", 17, &store, Some(&opt.export_state())).unwrap();

        let loaded = load(&p1).unwrap();
        assert_eq!(loaded.step, 17);
        assert_eq!(loaded.config_hash, "cafef00d");
        save(&p2, &loaded.config_hash, loaded.step, &loaded.store, loaded.optimizer.as_ref())
            .unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn loaded_values_and_optimizer_state_match_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = demo_store(2);
        let opt = stepped_optimizer(&mut store);
        let path = dir.path().join("c.ckpt");
        save(&path, "h", 5, &store, Some(&opt.export_state())).unwrap();
        let back = load(&path).unwrap();
        for ((_, a), (_, b)) in store.iter().zip(back.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            assert_eq!(a.data, b.data);
        }
        assert_eq!(back.optimizer.unwrap(), opt.export_state());
    }

    #[test]
    fn wrong_config_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = demo_store(3);
        let path = dir.path().join("d.ckpt");
        save(&path, "aaaa", 0, &store, None).unwrap();
        match load_expecting(&path, "bbbb") {
            Err(CheckpointError::ConfigHash { expected, found }) => {
                assert_eq!(expected, "bbbb");
                assert_eq!(found, "aaaa");
            }
            other => panic!("expected config-hash error, got {other:?}"),
        }
        assert!(load_expecting(&path, "aaaa").is_ok());
    }

    #[test]
    fn truncated_payload_reports_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let store = demo_store(4);
        let path = dir.path().join("e.ckpt");
        save(&path, "h", 0, &store, None).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn future_versions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let header = serde_json::json!({
            "version": 2,
            "config_hash": "h",
            "step": 0,
            "params": [],
            "optimizer": null,
        });
        let header = serde_json::to_vec(&header).unwrap();
        let path = dir.path().join("f.ckpt");
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(&header);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load(&path), Err(CheckpointError::Version { found: 2 })));
    }

    #[test]
    fn hundred_thousand_parameters_fit_in_five_megabytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        for i in 0..10 {
            store.add(format!("block{i}"), Shape::Matrix(100, 100), vec![0.5; 10_000]);
        }
        assert_eq!(store.total_len(), 100_000);
        let path = dir.path().join("g.ckpt");
        save(&path, "h", 0, &store, None).unwrap();
        let len = fs::metadata(&path).unwrap().len();
        assert!(len < 5 * 1024 * 1024, "checkpoint is {len} bytes");
    }

    #[test]
    fn restore_refuses_mismatched_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let store = demo_store(5);
        let path = dir.path().join("i.ckpt");
        save(&path, "h", 0, &store, None).unwrap();
        let ckpt = load(&path).unwrap();

        let mut same = demo_store(99);
        ckpt.restore(&mut same).unwrap();
        assert_eq!(same.get(crate::params::ParamId(0)).data, store.get(crate::params::ParamId(0)).data);

        let mut renamed = ParamStore::new();
        renamed.add_zeros("enc.w2", Shape::Matrix(4, 3));
        assert!(matches!(ckpt.restore(&mut renamed), Err(CheckpointError::Mismatch(_))));

        let mut reshaped = ParamStore::new();
        reshaped.add_zeros("enc.w", Shape::Matrix(3, 4));
        assert!(matches!(ckpt.restore(&mut reshaped), Err(CheckpointError::Mismatch(_))));
    }
}
