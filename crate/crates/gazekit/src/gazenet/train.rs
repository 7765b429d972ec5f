//! Dataset preparation, the training loop, evaluation and penultimate
//! feature extraction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::evalviz;
use crate::ingest::Manifest;
use crate::numerics::{BnMode, ScheduleState, Tensor};
use crate::scalar::Scalar;
use crate::splits::{SplitAssignment, SplitId};

use super::{preprocess_file, Checkpoint, EyeBatch, EyeInputs, GazeNet, GazeNetConfig, GazeNetError};

/// One preprocessed frame ready for the network.
pub struct PreparedFrame<T> {
    pub key: String,
    pub participant: String,
    pub device: String,
    pub dot_id: i64,
    pub inputs: EyeInputs<T>,
    pub target: [T; 2],
}

/// A frame that could not be preprocessed, with the reason.
#[derive(Debug, Clone)]
pub struct SkippedFrame {
    pub key: String,
    pub reason: String,
}

/// Frames preprocessed into memory. Construction is parallel per frame
/// and deterministic: results keep manifest order.
pub struct PreparedDataset<T> {
    pub frames: Vec<PreparedFrame<T>>,
    pub skipped: Vec<SkippedFrame>,
}

impl<T: Scalar> PreparedDataset<T> {
    /// Preprocesses every manifest record (optionally restricted to one
    /// split of an assignment) against images under the manifest root.
    pub fn from_manifest(
        manifest: &Manifest,
        assignment: Option<&SplitAssignment>,
        split: Option<SplitId>,
        crop_size: usize,
    ) -> Self {
        let root: &Path = &manifest.source_root;
        let selected: Vec<_> = manifest
            .records
            .iter()
            .filter(|r| match (assignment, split) {
                (Some(a), Some(s)) => a.split_of(&r.key()) == Some(s),
                (Some(a), None) => a.split_of(&r.key()).is_some(),
                _ => true,
            })
            .collect();
        let results: Vec<Result<PreparedFrame<T>, SkippedFrame>> = selected
            .par_iter()
            .map(|record| {
                if !record.eyes_valid {
                    return Err(SkippedFrame {
                        key: record.key(),
                        reason: "eyes not valid".to_string(),
                    });
                }
                preprocess_file::<T>(record, root, crop_size)
                    .map(|inputs| PreparedFrame {
                        key: record.key(),
                        participant: record.participant_id.clone(),
                        device: record.device_model.clone(),
                        dot_id: record.dot_id,
                        inputs,
                        target: [
                            T::from_config(record.gaze.x_cm),
                            T::from_config(record.gaze.y_cm),
                        ],
                    })
                    .map_err(|e| SkippedFrame {
                        key: record.key(),
                        reason: e.to_string(),
                    })
            })
            .collect();
        let mut frames = Vec::new();
        let mut skipped = Vec::new();
        for r in results {
            match r {
                Ok(f) => frames.push(f),
                Err(s) => skipped.push(s),
            }
        }
        PreparedDataset { frames, skipped }
    }

    pub fn from_frames(frames: Vec<PreparedFrame<T>>) -> Self {
        PreparedDataset {
            frames,
            skipped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn batch(&self, indices: &[usize]) -> Result<(EyeBatch<T>, Tensor<T>), GazeNetError> {
        let refs: Vec<&EyeInputs<T>> = indices.iter().map(|&i| &self.frames[i].inputs).collect();
        let batch = EyeBatch::from_inputs(&refs)?;
        let mut targets = Vec::with_capacity(indices.len() * 2);
        for &i in indices {
            targets.extend_from_slice(&self.frames[i].target);
        }
        Ok((batch, Tensor::from_vec(&[indices.len(), 2], targets)?))
    }
}

/// One log row per optimizer step.
#[derive(Debug, Clone)]
pub struct TrainEvent {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_med_cm: Option<f64>,
}

pub struct TrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<TrainEvent>,
    /// Best validation MED seen, when a validation set was provided.
    pub best_val_med_cm: Option<f64>,
}

/// Trains a fresh network from `config`.
pub fn train<T: Scalar>(
    train_ds: &PreparedDataset<T>,
    val_ds: Option<&PreparedDataset<T>>,
    config: &GazeNetConfig,
) -> Result<TrainOutcome<T>, GazeNetError> {
    let mut net = GazeNet::new(config.clone())?;
    let schedule_state = ScheduleState::new(config.schedule);
    train_loop(&mut net, train_ds, val_ds, 0, 0, schedule_state)
}

/// Continues training from a checkpoint; the step counter resumes where
/// the checkpoint left off.
pub fn resume_training<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    train_ds: &PreparedDataset<T>,
    val_ds: Option<&PreparedDataset<T>>,
) -> Result<TrainOutcome<T>, GazeNetError> {
    let mut net = GazeNet::from_checkpoint(checkpoint)?;
    train_loop(
        &mut net,
        train_ds,
        val_ds,
        checkpoint.step,
        checkpoint.adam_t,
        checkpoint.schedule_state.clone(),
    )
}

fn train_loop<T: Scalar>(
    net: &mut GazeNet<T>,
    train_ds: &PreparedDataset<T>,
    val_ds: Option<&PreparedDataset<T>>,
    start_step: u64,
    start_adam_t: u64,
    mut schedule_state: ScheduleState,
) -> Result<TrainOutcome<T>, GazeNetError> {
    if train_ds.is_empty() {
        return Err(GazeNetError::EmptySplit);
    }
    let config = net.config.clone();
    let batch_size = config.batch_size;
    let mut log = Vec::new();
    let mut step = start_step;
    let mut adam_t = start_adam_t;
    let mut best: Option<(f64, Checkpoint<T>)> = None;
    let mut epoch: u64 = 0;
    // Plateau training halts once the rate has collapsed to 1e-3 of the
    // initial value; staircase/constant run to max_steps.
    let lr_floor = config.schedule.initial_lr * 1e-3;

    'outer: while step < config.max_steps {
        let mut order: Vec<usize> = (0..train_ds.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch.wrapping_mul(0x9e3779b97f4a7c15)));
        order.shuffle(&mut rng);
        epoch += 1;

        for chunk in order.chunks(batch_size) {
            if chunk.len() < 2 {
                continue; // batch norm needs at least two frames
            }
            if step >= config.max_steps {
                break 'outer;
            }
            let (batch, targets) = train_ds.batch(chunk)?;
            let mut val_signal = None;
            let due_eval = config.eval_every > 0 && step.is_multiple_of(config.eval_every);
            if due_eval {
                if let Some(val) = val_ds {
                    if !val.is_empty() {
                        let outcome = evaluate_net(net, val, batch_size)?;
                        val_signal = Some(outcome.med_cm);
                        let is_better = best
                            .as_ref()
                            .is_none_or(|(b, _)| outcome.med_cm < *b);
                        if is_better {
                            best = Some((
                                outcome.med_cm,
                                net.to_checkpoint(step, adam_t, schedule_state.clone()),
                            ));
                        }
                    }
                }
            }
            let lr = schedule_state.lr_at(step, val_signal);
            adam_t += 1;
            let loss = net
                .train_step(&batch, &targets, lr, adam_t)
                .map_err(|e| match e {
                    GazeNetError::Numerics(n) => GazeNetError::NumericFault {
                        step,
                        detail: n.to_string(),
                    },
                    other => other,
                })?;
            step += 1;
            log.push(TrainEvent {
                step,
                lr,
                train_loss: loss.to_f64_lossy(),
                val_med_cm: val_signal,
            });
            if lr < lr_floor {
                break 'outer;
            }
        }
    }

    // Final validation so the best snapshot reflects the last state too.
    if let Some(val) = val_ds {
        if !val.is_empty() {
            let outcome = evaluate_net(net, val, batch_size)?;
            let is_better = best.as_ref().is_none_or(|(b, _)| outcome.med_cm < *b);
            if is_better {
                best = Some((
                    outcome.med_cm,
                    net.to_checkpoint(step, adam_t, schedule_state.clone()),
                ));
            }
            if let Some(last) = log.last_mut() {
                last.val_med_cm = Some(outcome.med_cm);
            }
        }
    }

    let (best_val, checkpoint) = match best {
        Some((med, ckpt)) => (Some(med), ckpt),
        None => (None, net.to_checkpoint(step, adam_t, schedule_state)),
    };
    Ok(TrainOutcome {
        checkpoint,
        log,
        best_val_med_cm: best_val,
    })
}

/// Per-frame evaluation record.
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub key: String,
    pub participant: String,
    pub device: String,
    pub dot_id: i64,
    pub pred: [f64; 2],
    pub truth: [f64; 2],
    pub error_cm: f64,
}

pub struct EvalOutcome {
    pub med_cm: f64,
    pub frames: Vec<FrameEval>,
}

fn evaluate_net<T: Scalar>(
    net: &mut GazeNet<T>,
    ds: &PreparedDataset<T>,
    batch_size: usize,
) -> Result<EvalOutcome, GazeNetError> {
    if ds.is_empty() {
        return Err(GazeNetError::EmptyEvalSet);
    }
    let mut frames = Vec::with_capacity(ds.len());
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (batch, _) = ds.batch(chunk)?;
        let out = net.forward(&batch, BnMode::Infer, false)?;
        for (row, &i) in chunk.iter().enumerate() {
            let frame = &ds.frames[i];
            let pred = [
                out.pred.data()[row * 2].to_f64_lossy(),
                out.pred.data()[row * 2 + 1].to_f64_lossy(),
            ];
            let truth = [
                frame.target[0].to_f64_lossy(),
                frame.target[1].to_f64_lossy(),
            ];
            frames.push(FrameEval {
                key: frame.key.clone(),
                participant: frame.participant.clone(),
                device: frame.device.clone(),
                dot_id: frame.dot_id,
                pred,
                truth,
                error_cm: evalviz::frame_error(pred, truth),
            });
        }
    }
    let preds: Vec<[f64; 2]> = frames.iter().map(|f| f.pred).collect();
    let truths: Vec<[f64; 2]> = frames.iter().map(|f| f.truth).collect();
    let med_cm = evalviz::med(&preds, &truths).expect("nonempty evaluation set");
    Ok(EvalOutcome { med_cm, frames })
}

/// Evaluates a checkpoint on a prepared dataset: MED plus per-frame
/// errors.
pub fn evaluate<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    ds: &PreparedDataset<T>,
) -> Result<EvalOutcome, GazeNetError> {
    let mut net = GazeNet::from_checkpoint(checkpoint)?;
    let batch = net.config.batch_size;
    evaluate_net(&mut net, ds, batch)
}

/// Penultimate features with aligned predictions and ground truth for
/// one frame; the personalization input.
#[derive(Debug, Clone)]
pub struct FeatureTriple {
    pub key: String,
    pub participant: String,
    pub device: String,
    pub dot_id: i64,
    pub features: [f64; 4],
    pub base_pred: [f64; 2],
    pub truth: [f64; 2],
}

/// Runs infer-mode forward passes and emits key-aligned
/// (penultimate, prediction, truth) triples.
pub fn extract_features<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    ds: &PreparedDataset<T>,
) -> Result<Vec<FeatureTriple>, GazeNetError> {
    if ds.is_empty() {
        return Err(GazeNetError::EmptyEvalSet);
    }
    let mut net = GazeNet::from_checkpoint(checkpoint)?;
    let batch_size = net.config.batch_size.max(1);
    let mut out_rows = Vec::with_capacity(ds.len());
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let (batch, _) = ds.batch(chunk)?;
        let out = net.forward(&batch, BnMode::Infer, false)?;
        for (row, &i) in chunk.iter().enumerate() {
            let frame = &ds.frames[i];
            let mut features = [0.0f64; 4];
            for (j, f) in features.iter_mut().enumerate() {
                *f = out.penultimate.data()[row * 4 + j].to_f64_lossy();
            }
            out_rows.push(FeatureTriple {
                key: frame.key.clone(),
                participant: frame.participant.clone(),
                device: frame.device.clone(),
                dot_id: frame.dot_id,
                features,
                base_pred: [
                    out.pred.data()[row * 2].to_f64_lossy(),
                    out.pred.data()[row * 2 + 1].to_f64_lossy(),
                ],
                truth: [
                    frame.target[0].to_f64_lossy(),
                    frame.target[1].to_f64_lossy(),
                ],
            });
        }
    }
    Ok(out_rows)
}

