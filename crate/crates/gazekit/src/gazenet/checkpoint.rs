//! Portable binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "GZTK" | version: u32 | header_len: u64 | header JSON bytes
//! | entry_count: u32
//! | entries: name_len u32, name, dtype_len u32, dtype ("f32"/"f64"),
//!            ndim u32, dims u64 x ndim, payload offset u64
//! | payload_len: u64 | payload (little-endian scalars)
//! ```
//!
//! The header JSON embeds the full config snapshot plus the step
//! counters and schedule state, so loading needs no external config.
//! Tensors cover parameter values, batch-norm running statistics and
//! Adam moments; entries are written in name order, making saves
//! byte-deterministic.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{ScheduleState, Tensor};
use crate::scalar::Scalar;

use super::{GazeNet, GazeNetConfig, GazeNetError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Serialize, Deserialize)]
struct HeaderJson {
    config: GazeNetConfig,
    step: u64,
    adam_t: u64,
    schedule_state: ScheduleState,
}

/// Named parameter tensors plus optimizer and schedule state.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub format_version: u32,
    pub config: GazeNetConfig,
    /// Optimizer steps completed when the snapshot was taken.
    pub step: u64,
    /// Adam step counter (1-based count of updates applied).
    pub adam_t: u64,
    pub schedule_state: ScheduleState,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

fn fail(detail: impl Into<String>) -> GazeNetError {
    GazeNetError::CheckpointFormat {
        detail: detail.into(),
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&HeaderJson {
            config: self.config.clone(),
            step: self.step,
            adam_t: self.adam_t,
            schedule_state: self.schedule_state.clone(),
        })
        .expect("header serializes");

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);

        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut payload: Vec<u8> = Vec::new();
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(T::DTYPE.len() as u32).to_le_bytes());
            out.extend_from_slice(T::DTYPE.as_bytes());
            out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            for v in tensor.data() {
                v.write_le(&mut payload);
            }
        }
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GazeNetError> {
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8], GazeNetError> {
            let end = cursor
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| fail("truncated checkpoint"))?;
            let slice = &bytes[*cursor..end];
            *cursor = end;
            Ok(slice)
        };
        let take_u32 = |cursor: &mut usize| -> Result<u32, GazeNetError> {
            Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
        };
        let take_u64 = |cursor: &mut usize| -> Result<u64, GazeNetError> {
            Ok(u64::from_le_bytes(take(cursor, 8)?.try_into().unwrap()))
        };

        if take(&mut cursor, 4)? != CHECKPOINT_MAGIC {
            return Err(fail("bad magic, not a GZTK checkpoint"));
        }
        let version = take_u32(&mut cursor)?;
        if version != CHECKPOINT_VERSION {
            return Err(fail(format!(
                "unsupported format version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = take_u64(&mut cursor)? as usize;
        let header: HeaderJson = serde_json::from_slice(take(&mut cursor, header_len)?)
            .map_err(|e| fail(format!("header JSON: {e}")))?;

        let count = take_u32(&mut cursor)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = take_u32(&mut cursor)? as usize;
            let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
                .map_err(|_| fail("tensor name is not utf-8"))?;
            let dtype_len = take_u32(&mut cursor)? as usize;
            let dtype = String::from_utf8(take(&mut cursor, dtype_len)?.to_vec())
                .map_err(|_| fail("dtype is not utf-8"))?;
            if dtype != T::DTYPE {
                return Err(fail(format!(
                    "tensor {name} has dtype {dtype}, expected {}",
                    T::DTYPE
                )));
            }
            let ndim = take_u32(&mut cursor)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(take_u64(&mut cursor)? as usize);
            }
            let offset = take_u64(&mut cursor)? as usize;
            entries.push((name, shape, offset));
        }
        let payload_len = take_u64(&mut cursor)? as usize;
        let payload = take(&mut cursor, payload_len)?;

        let mut tensors = BTreeMap::new();
        for (name, shape, offset) in entries {
            let len: usize = shape.iter().product();
            let end = offset + len * T::BYTE_WIDTH;
            if end > payload.len() {
                return Err(fail(format!("tensor {name} payload out of bounds")));
            }
            let data: Vec<T> = payload[offset..end]
                .chunks_exact(T::BYTE_WIDTH)
                .map(T::read_le)
                .collect();
            let tensor = Tensor::from_vec(&shape, data)
                .map_err(|e| fail(format!("tensor {name}: {e}")))?;
            tensors.insert(name, tensor);
        }
        Ok(Checkpoint {
            format_version: version,
            config: header.config,
            step: header.step,
            adam_t: header.adam_t,
            schedule_state: header.schedule_state,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), GazeNetError> {
        fs::write(path, self.to_bytes()).map_err(|e| GazeNetError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GazeNetError> {
        let bytes = fs::read(path).map_err(|e| GazeNetError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}

impl<T: Scalar> GazeNet<T> {
    /// Snapshots parameters, running stats and optimizer state.
    pub fn to_checkpoint(&self, step: u64, adam_t: u64, schedule_state: ScheduleState) -> Checkpoint<T> {
        let mut tensors = BTreeMap::new();
        self.visit_params(&mut |name, p| {
            tensors.insert(name.to_string(), p.value.clone());
            tensors.insert(format!("adam.m.{name}"), p.adam_m.clone());
            tensors.insert(format!("adam.v.{name}"), p.adam_v.clone());
        });
        self.visit_bn_states(&mut |name, s| {
            tensors.insert(format!("{name}.running_mean"), s.running_mean.clone());
            tensors.insert(format!("{name}.running_var"), s.running_var.clone());
        });
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step,
            adam_t,
            schedule_state,
            tensors,
        }
    }

    /// Reconstructs a network from a checkpoint; every tensor must be
    /// present with a matching shape.
    pub fn from_checkpoint(checkpoint: &Checkpoint<T>) -> Result<Self, GazeNetError> {
        let mut net = GazeNet::new(checkpoint.config.clone())?;
        let mut missing: Vec<String> = Vec::new();
        net.visit_params_mut(&mut |name, p| {
            let mut assign = |key: String, dst: &mut Tensor<T>| {
                match checkpoint.tensors.get(&key) {
                    Some(t) if t.shape() == dst.shape() => *dst = t.clone(),
                    Some(t) => missing.push(format!(
                        "{key}: shape {:?} != expected {:?}",
                        t.shape(),
                        dst.shape()
                    )),
                    None => missing.push(format!("{key}: absent")),
                }
            };
            assign(name.clone(), &mut p.value);
            assign(format!("adam.m.{name}"), &mut p.adam_m);
            assign(format!("adam.v.{name}"), &mut p.adam_v);
        });
        net.visit_bn_states_mut(&mut |name, s| {
            for (suffix, dst) in [
                ("running_mean", &mut s.running_mean),
                ("running_var", &mut s.running_var),
            ] {
                let key = format!("{name}.{suffix}");
                match checkpoint.tensors.get(&key) {
                    Some(t) if t.shape() == dst.shape() => *dst = t.clone(),
                    Some(_) => missing.push(format!("{key}: shape mismatch")),
                    None => missing.push(format!("{key}: absent")),
                }
            }
        });
        if !missing.is_empty() {
            return Err(fail(format!("checkpoint incomplete: {}", missing.join("; "))));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{BnMode, LrSchedule};
    use crate::gazenet::{EyeBatch, EyeInputs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> GazeNetConfig {
        GazeNetConfig {
            crop_size: 16,
            tower_channels: [2, 3, 4],
            batch_size: 2,
            seed: 3,
            ..GazeNetConfig::default()
        }
    }

    fn random_batch(seed: u64) -> EyeBatch<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frames = Vec::new();
        for _ in 0..3 {
            let gen_t = |rng: &mut ChaCha8Rng| {
                let data: Vec<f32> = (0..16 * 16 * 3).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                Tensor::from_vec(&[16, 16, 3], data).unwrap()
            };
            let left_crop = gen_t(&mut rng);
            let right_crop = gen_t(&mut rng);
            let mut corners = [0.0f32; 8];
            for c in corners.iter_mut() {
                *c = rng.gen_range(0.0..1.0);
            }
            frames.push(EyeInputs {
                left_crop,
                right_crop,
                corners,
            });
        }
        let refs: Vec<&EyeInputs<f32>> = frames.iter().collect();
        EyeBatch::from_inputs(&refs).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let mut net = GazeNet::<f32>::new(tiny_config()).unwrap();
        // Push the net off its init state so moments are nonzero.
        let batch = random_batch(1);
        let targets = Tensor::from_vec(&[3, 2], vec![1.0f32, 0.0, -1.0, 2.0, 0.5, 0.5]).unwrap();
        for t in 1..=3 {
            net.train_step(&batch, &targets, 0.01, t).unwrap();
        }
        let state = ScheduleState::new(LrSchedule::default());
        let ckpt = net.to_checkpoint(3, 3, state);
        let bytes = ckpt.to_bytes();
        let reloaded = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(reloaded.step, 3);
        assert_eq!(reloaded.adam_t, 3);
        assert_eq!(reloaded.config, ckpt.config);
        assert_eq!(reloaded.tensors.len(), ckpt.tensors.len());
        for (name, t) in &ckpt.tensors {
            let r = &reloaded.tensors[name];
            assert_eq!(t.shape(), r.shape(), "{name}");
            assert_eq!(t.data(), r.data(), "{name}");
        }
        // Byte-determinism of the save itself.
        assert_eq!(bytes, reloaded.to_bytes());
    }

    #[test]
    fn forward_after_reload_is_bit_identical() {
        let mut net = GazeNet::<f32>::new(tiny_config()).unwrap();
        let batch = random_batch(2);
        let targets = Tensor::from_vec(&[3, 2], vec![0.1f32, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        for t in 1..=5 {
            net.train_step(&batch, &targets, 0.005, t).unwrap();
        }
        let before = net.forward(&batch, BnMode::Infer, false).unwrap();
        let ckpt = net.to_checkpoint(5, 5, ScheduleState::new(LrSchedule::default()));
        let mut restored = GazeNet::from_checkpoint(&ckpt).unwrap();
        let after = restored.forward(&batch, BnMode::Infer, false).unwrap();
        assert_eq!(before.pred.data(), after.pred.data());
        assert_eq!(before.penultimate.data(), after.penultimate.data());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let net = GazeNet::<f32>::new(tiny_config()).unwrap();
        let mut bytes = net
            .to_checkpoint(0, 0, ScheduleState::new(LrSchedule::default()))
            .to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes),
            Err(GazeNetError::CheckpointFormat { .. })
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let net = GazeNet::<f32>::new(tiny_config()).unwrap();
        let bytes = net
            .to_checkpoint(0, 0, ScheduleState::new(LrSchedule::default()))
            .to_bytes();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                Checkpoint::<f32>::from_bytes(&bytes[..cut]).is_err(),
                "accepted a checkpoint truncated to {cut} bytes"
            );
        }
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let net = GazeNet::<f32>::new(tiny_config()).unwrap();
        let bytes = net
            .to_checkpoint(0, 0, ScheduleState::new(LrSchedule::default()))
            .to_bytes();
        assert!(matches!(
            Checkpoint::<f64>::from_bytes(&bytes),
            Err(GazeNetError::CheckpointFormat { .. })
        ));
    }
}
