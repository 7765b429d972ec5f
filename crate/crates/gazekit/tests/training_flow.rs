//! Training-loop behavior on in-memory synthetic data: determinism,
//! feature extraction alignment, resume semantics, error paths.

use gazekit::gazenet::{
    evaluate, extract_features, resume_training, train, GazeNet, GazeNetConfig, GazeNetError,
    PreparedDataset,
};
use gazekit::numerics::{BnMode, LrSchedule, LrScheduleKind};
use gazekit::synth::{synthetic_prepared, SynthSpec};

fn small_config(seed: u64) -> GazeNetConfig {
    GazeNetConfig {
        crop_size: 8,
        tower_channels: [2, 3, 4],
        batch_size: 8,
        max_steps: 40,
        eval_every: 10,
        seed,
        schedule: LrSchedule::constant(0.01),
        ..GazeNetConfig::default()
    }
}

fn small_dataset(seed: u64) -> (PreparedDataset<f32>, PreparedDataset<f32>) {
    let spec = SynthSpec {
        participants: 6,
        dots_per_participant: 5,
        frames_per_dot: 3,
        seed,
        ..SynthSpec::default()
    };
    let all = synthetic_prepared::<f32>(&spec, 8);
    let mut train_frames = Vec::new();
    let mut val_frames = Vec::new();
    for f in all.frames {
        if f.participant.ends_with('5') {
            val_frames.push(f);
        } else {
            train_frames.push(f);
        }
    }
    (
        PreparedDataset::from_frames(train_frames),
        PreparedDataset::from_frames(val_frames),
    )
}

#[test]
fn same_seed_and_data_give_identical_loss_curves_and_checkpoints() {
    let (train_ds, val_ds) = small_dataset(7);
    let config = small_config(21);
    let a = train(&train_ds, Some(&val_ds), &config).unwrap();
    let b = train(&train_ds, Some(&val_ds), &config).unwrap();
    assert_eq!(a.log.len(), b.log.len());
    for (ea, eb) in a.log.iter().zip(&b.log) {
        assert_eq!(ea.step, eb.step);
        assert_eq!(ea.lr, eb.lr);
        assert_eq!(ea.train_loss, eb.train_loss, "loss diverged at step {}", ea.step);
        assert_eq!(ea.val_med_cm, eb.val_med_cm);
    }
    assert_eq!(
        a.checkpoint.to_bytes(),
        b.checkpoint.to_bytes(),
        "checkpoints must be bit-identical"
    );
}

#[test]
fn different_seeds_differ() {
    let (train_ds, val_ds) = small_dataset(7);
    let a = train(&train_ds, Some(&val_ds), &small_config(21)).unwrap();
    let b = train(&train_ds, Some(&val_ds), &small_config(22)).unwrap();
    assert_ne!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
}

#[test]
fn extract_features_is_key_aligned_and_width_four() {
    let (train_ds, val_ds) = small_dataset(9);
    let outcome = train(&train_ds, Some(&val_ds), &small_config(5)).unwrap();
    let triples = extract_features(&outcome.checkpoint, &val_ds).unwrap();
    assert_eq!(triples.len(), val_ds.len());
    for (t, f) in triples.iter().zip(&val_ds.frames) {
        assert_eq!(t.key, f.key);
        assert_eq!(t.features.len(), 4);
        assert_eq!(t.truth[0] as f32, f.target[0]);
    }

    // base_pred agrees with a direct forward pass on the same frames.
    let mut net = GazeNet::from_checkpoint(&outcome.checkpoint).unwrap();
    let refs: Vec<&gazekit::gazenet::EyeInputs<f32>> =
        val_ds.frames.iter().map(|f| &f.inputs).collect();
    let batch = gazekit::gazenet::EyeBatch::from_inputs(&refs).unwrap();
    let fwd = net.forward(&batch, BnMode::Infer, false).unwrap();
    for (row, t) in triples.iter().enumerate() {
        assert_eq!(fwd.pred.data()[row * 2] as f64, t.base_pred[0]);
        assert_eq!(fwd.pred.data()[row * 2 + 1] as f64, t.base_pred[1]);
    }
}

#[test]
fn evaluate_errors_on_empty_set_and_training_on_empty_split() {
    let (train_ds, _) = small_dataset(3);
    let outcome = train(&train_ds, None, &small_config(1)).unwrap();
    let empty = PreparedDataset::<f32>::from_frames(Vec::new());
    assert!(matches!(
        evaluate(&outcome.checkpoint, &empty),
        Err(GazeNetError::EmptyEvalSet)
    ));
    assert!(matches!(
        train(&empty, None, &small_config(1)),
        Err(GazeNetError::EmptySplit)
    ));
}

#[test]
fn resume_continues_the_step_counter() {
    let (train_ds, val_ds) = small_dataset(11);
    let mut config = small_config(2);
    config.max_steps = 20;
    let first = train(&train_ds, Some(&val_ds), &config).unwrap();
    let halted_at = first.checkpoint.step;
    assert!(halted_at <= 20);

    // The checkpoint embeds its config; raising max_steps requires a
    // fresh config round, so resume with the stored one runs up to the
    // stored max_steps again.
    let resumed = resume_training(&first.checkpoint, &train_ds, Some(&val_ds)).unwrap();
    assert!(resumed.checkpoint.step >= halted_at);
    if let Some(first_event) = resumed.log.first() {
        assert_eq!(first_event.step, halted_at + 1);
    }
}

#[test]
fn plateau_schedule_reduces_rate_during_training() {
    let (train_ds, val_ds) = small_dataset(13);
    let mut config = small_config(3);
    config.max_steps = 60;
    config.eval_every = 5;
    config.schedule = LrSchedule {
        kind: LrScheduleKind::ReduceOnPlateau,
        initial_lr: 0.01,
        plateau_patience: 1,
        plateau_factor: 0.5,
        ..LrSchedule::default()
    };
    let outcome = train(&train_ds, Some(&val_ds), &config).unwrap();
    let rates: Vec<f64> = outcome.log.iter().map(|e| e.lr).collect();
    let mut prev = f64::INFINITY;
    for r in &rates {
        assert!(*r <= prev + 1e-18);
        prev = *r;
    }
}
