//! Network definition, parameter storage and manual backpropagation.
//!
//! Both eye crops run through one weight-shared tower; the crops are
//! stacked along the batch axis so batch-norm statistics cover both eyes
//! symmetrically, then the per-eye vectors are summed after the shared
//! reduction layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::gradcheck::Fingerprint;
use crate::numerics::{
    adam_step, batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward,
    fully_connected_backward, fully_connected_forward, global_avg_pool_backward,
    global_avg_pool_forward, mse_loss_backward, mse_loss_forward, pool2d_backward, pool2d_forward,
    relu_backward, relu_forward, AdamHyper, BatchNormCache, BatchNormState, BnMode, Padding,
    Parameter, PoolKind, Tensor,
};
use crate::scalar::Scalar;

use super::{EyeInputs, GazeNetConfig, GazeNetError};

struct ConvStage<T> {
    weight: Parameter<T>,
    bias: Parameter<T>,
    gamma: Parameter<T>,
    beta: Parameter<T>,
    bn_state: BatchNormState<T>,
}

struct FcLayer<T> {
    weight: Parameter<T>,
    bias: Parameter<T>,
}

/// Batched network inputs: crops `[n, s, s, 3]` and corners `[n, 8]`.
pub struct EyeBatch<T> {
    pub left: Tensor<T>,
    pub right: Tensor<T>,
    pub corners: Tensor<T>,
}

impl<T: Scalar> EyeBatch<T> {
    pub fn from_inputs(frames: &[&EyeInputs<T>]) -> Result<Self, GazeNetError> {
        if frames.is_empty() {
            return Err(GazeNetError::EmptyEvalSet);
        }
        let s = frames[0].left_crop.shape()[0];
        let n = frames.len();
        let mut left = Vec::with_capacity(n * s * s * 3);
        let mut right = Vec::with_capacity(n * s * s * 3);
        let mut corners = Vec::with_capacity(n * 8);
        for f in frames {
            left.extend_from_slice(f.left_crop.data());
            right.extend_from_slice(f.right_crop.data());
            corners.extend_from_slice(&f.corners);
        }
        Ok(EyeBatch {
            left: Tensor::from_vec(&[n, s, s, 3], left)?,
            right: Tensor::from_vec(&[n, s, s, 3], right)?,
            corners: Tensor::from_vec(&[n, 8], corners)?,
        })
    }

    pub fn len(&self) -> usize {
        self.left.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct StageTape<T> {
    conv_in: Tensor<T>,
    bn_cache: BatchNormCache<T>,
    bn_out: Tensor<T>,
    relu_out: Tensor<T>,
}

struct FcTape<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
}

/// Intermediates needed by [`GazeNet::backward`]; produced by train-mode
/// forward passes.
pub struct Tape<T> {
    stages: Vec<StageTape<T>>,
    gap_in_shape: Vec<usize>,
    gap_out: Tensor<T>,
    reduce_pre: Tensor<T>,
    landmark: Vec<FcTape<T>>,
    fusion: Vec<FcTape<T>>,
    penultimate: Tensor<T>,
}

/// Output of a forward pass: gaze prediction in cm, the width-4
/// penultimate features, an activation-pattern fingerprint (used by the
/// gradient checker to skip kinked components), and the backward tape in
/// train mode.
pub struct ForwardResult<T> {
    pub pred: Tensor<T>,
    pub penultimate: Tensor<T>,
    pub fingerprint: u64,
    pub tape: Option<Tape<T>>,
}

fn concat_rows<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.shape()[1..], b.shape()[1..]);
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&shape, data).expect("concat shapes verified")
}

fn concat_cols<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let n = a.shape()[0];
    debug_assert_eq!(n, b.shape()[0]);
    let (wa, wb) = (a.shape()[1], b.shape()[1]);
    let mut data = Vec::with_capacity(n * (wa + wb));
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * wa..(i + 1) * wa]);
        data.extend_from_slice(&b.data()[i * wb..(i + 1) * wb]);
    }
    Tensor::from_vec(&[n, wa + wb], data).expect("concat shapes verified")
}

fn split_cols<T: Scalar>(x: &Tensor<T>, wa: usize) -> (Tensor<T>, Tensor<T>) {
    let n = x.shape()[0];
    let w = x.shape()[1];
    let wb = w - wa;
    let mut a = Vec::with_capacity(n * wa);
    let mut b = Vec::with_capacity(n * wb);
    for i in 0..n {
        a.extend_from_slice(&x.data()[i * w..i * w + wa]);
        b.extend_from_slice(&x.data()[i * w + wa..(i + 1) * w]);
    }
    (
        Tensor::from_vec(&[n, wa], a).expect("split"),
        Tensor::from_vec(&[n, wb], b).expect("split"),
    )
}

fn push_relu_mask<T: Scalar>(fp: &mut Fingerprint, pre: &Tensor<T>) {
    for v in pre.data() {
        fp.push_bit(*v > T::zero());
    }
}

/// The two-tower gaze regression network.
pub struct GazeNet<T: Scalar> {
    pub config: GazeNetConfig,
    stages: Vec<ConvStage<T>>,
    eye_reduce: FcLayer<T>,
    landmark: Vec<FcLayer<T>>,
    fusion: Vec<FcLayer<T>>,
    output: FcLayer<T>,
}

fn he_uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data: Vec<T> = (0..len)
        .map(|_| T::from_config(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

fn fc_layer<T: Scalar>(rng: &mut ChaCha8Rng, din: usize, dout: usize) -> FcLayer<T> {
    FcLayer {
        weight: Parameter::new(he_uniform(rng, &[din, dout], din)),
        bias: Parameter::new(Tensor::zeros(&[dout])),
    }
}

impl<T: Scalar> GazeNet<T> {
    /// Builds a freshly initialized network; weight init is deterministic
    /// in `config.seed`.
    pub fn new(config: GazeNetConfig) -> Result<Self, GazeNetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut stages = Vec::new();
        let mut cin = 3;
        for (k, cout) in config.tower_kernels.iter().zip(config.tower_channels) {
            stages.push(ConvStage {
                weight: Parameter::new(he_uniform(&mut rng, &[*k, *k, cin, cout], k * k * cin)),
                bias: Parameter::new(Tensor::zeros(&[cout])),
                gamma: Parameter::new(Tensor::filled(&[cout], T::one())),
                beta: Parameter::new(Tensor::zeros(&[cout])),
                bn_state: BatchNormState::new(cout),
            });
            cin = cout;
        }
        let eye_feat = config.eye_feature_width();
        let eye_reduce = fc_layer(&mut rng, cin, eye_feat);
        let mut landmark = Vec::new();
        let mut lin = 8;
        for u in config.landmark_units {
            landmark.push(fc_layer(&mut rng, lin, u));
            lin = u;
        }
        let mut fusion = Vec::new();
        let mut fin = eye_feat + lin;
        for &u in &config.fusion_units {
            fusion.push(fc_layer(&mut rng, fin, u));
            fin = u;
        }
        let output = fc_layer(&mut rng, fin, config.output_dim);
        Ok(GazeNet {
            config,
            stages,
            eye_reduce,
            landmark,
            fusion,
            output,
        })
    }

    /// Forward pass. Train mode uses batch statistics, updates running
    /// stats and returns a tape; infer mode uses running statistics.
    pub fn forward(
        &mut self,
        batch: &EyeBatch<T>,
        mode: BnMode,
        want_tape: bool,
    ) -> Result<ForwardResult<T>, GazeNetError> {
        let n = batch.len();
        if n == 0 {
            return Err(GazeNetError::EmptyEvalSet);
        }
        let mut fp = Fingerprint::new();
        // Left crops stacked above right crops: one tower pass for both.
        let mut x = concat_rows(&batch.left, &batch.right);
        let mut stage_tapes = Vec::new();
        for stage in self.stages.iter_mut() {
            let conv_in = x;
            let conv_out = conv2d_forward(
                &conv_in,
                &stage.weight.value,
                &stage.bias.value,
                1,
                Padding::Same,
            )?;
            let (bn_out, cache) = batchnorm_forward(
                &conv_out,
                &stage.gamma.value,
                &stage.beta.value,
                &mut stage.bn_state,
                self.config.bn_eps,
                self.config.bn_momentum,
                mode,
            )?;
            push_relu_mask(&mut fp, &bn_out);
            let relu_out = relu_forward(&bn_out);
            if self.config.pooling == PoolKind::Max {
                fp.push_u64(pool_argmax_signature(&relu_out, 2, 2));
            }
            let pool_out = pool2d_forward(&relu_out, self.config.pooling, 2, 2)?;
            if want_tape {
                stage_tapes.push(StageTape {
                    conv_in,
                    bn_cache: cache.ok_or_else(|| GazeNetError::InvalidConfig {
                        detail: "tape requires train-mode batch norm".to_string(),
                    })?,
                    bn_out,
                    relu_out,
                });
            }
            x = pool_out;
        }
        let gap_in_shape = x.shape().to_vec();
        let gap_out = global_avg_pool_forward(&x)?;
        drop(x);

        let reduce_pre = fully_connected_forward(
            &gap_out,
            &self.eye_reduce.weight.value,
            &self.eye_reduce.bias.value,
        )?;
        push_relu_mask(&mut fp, &reduce_pre);
        let eye_vecs = relu_forward(&reduce_pre);

        // Sum the left/right halves: order-symmetric merge.
        let feat = eye_vecs.shape()[1];
        let mut merged = Tensor::zeros(&[n, feat]);
        {
            let src = eye_vecs.data();
            let dst = merged.data_mut();
            for i in 0..n {
                for j in 0..feat {
                    dst[i * feat + j] = src[i * feat + j] + src[(n + i) * feat + j];
                }
            }
        }

        let mut lm = batch.corners.clone();
        let mut lm_tapes = Vec::new();
        for layer in &self.landmark {
            let pre = fully_connected_forward(&lm, &layer.weight.value, &layer.bias.value)?;
            push_relu_mask(&mut fp, &pre);
            let out = relu_forward(&pre);
            if want_tape {
                lm_tapes.push(FcTape {
                    input: lm,
                    pre: pre.clone(),
                });
            }
            lm = out;
        }

        let mut h = concat_cols(&merged, &lm);
        let mut fusion_tapes = Vec::new();
        for layer in &self.fusion {
            let pre = fully_connected_forward(&h, &layer.weight.value, &layer.bias.value)?;
            push_relu_mask(&mut fp, &pre);
            let out = relu_forward(&pre);
            if want_tape {
                fusion_tapes.push(FcTape {
                    input: h,
                    pre: pre.clone(),
                });
            }
            h = out;
        }
        let penultimate = h;
        let pred = fully_connected_forward(
            &penultimate,
            &self.output.weight.value,
            &self.output.bias.value,
        )?;

        let tape = want_tape.then(|| Tape {
            stages: stage_tapes,
            gap_in_shape,
            gap_out,
            reduce_pre,
            landmark: lm_tapes,
            fusion: fusion_tapes,
            penultimate: penultimate.clone(),
        });
        Ok(ForwardResult {
            pred,
            penultimate,
            fingerprint: fp.value(),
            tape,
        })
    }

    /// Backpropagates `grad_pred` through the tape, accumulating into
    /// every parameter's `grad`.
    pub fn backward(&mut self, tape: &Tape<T>, grad_pred: &Tensor<T>) -> Result<(), GazeNetError> {
        let n = grad_pred.shape()[0];
        let out_grads =
            fully_connected_backward(&tape.penultimate, &self.output.weight.value, grad_pred)?;
        self.output.weight.accumulate_grad(&out_grads.weights);
        self.output.bias.accumulate_grad(&out_grads.bias);
        let mut d = out_grads.input;

        for (layer, t) in self.fusion.iter_mut().zip(&tape.fusion).rev() {
            let d_pre = relu_backward(&t.pre, &d)?;
            let grads = fully_connected_backward(&t.input, &layer.weight.value, &d_pre)?;
            layer.weight.accumulate_grad(&grads.weights);
            layer.bias.accumulate_grad(&grads.bias);
            d = grads.input;
        }

        let eye_feat = self.config.eye_feature_width();
        let (d_merged, mut d_lm) = split_cols(&d, eye_feat);

        for (layer, t) in self.landmark.iter_mut().zip(&tape.landmark).rev() {
            let d_pre = relu_backward(&t.pre, &d_lm)?;
            let grads = fully_connected_backward(&t.input, &layer.weight.value, &d_pre)?;
            layer.weight.accumulate_grad(&grads.weights);
            layer.bias.accumulate_grad(&grads.bias);
            d_lm = grads.input;
        }

        // The merge summed the two stacked halves; its gradient copies
        // d_merged into both.
        let mut d_eye = Tensor::zeros(&[2 * n, eye_feat]);
        {
            let src = d_merged.data();
            let dst = d_eye.data_mut();
            dst[..n * eye_feat].copy_from_slice(src);
            dst[n * eye_feat..].copy_from_slice(src);
        }

        let d_reduce_pre = relu_backward(&tape.reduce_pre, &d_eye)?;
        let grads =
            fully_connected_backward(&tape.gap_out, &self.eye_reduce.weight.value, &d_reduce_pre)?;
        self.eye_reduce.weight.accumulate_grad(&grads.weights);
        self.eye_reduce.bias.accumulate_grad(&grads.bias);

        let mut d_stage = global_avg_pool_backward(&tape.gap_in_shape, &grads.input)?;
        for (stage, t) in self.stages.iter_mut().zip(&tape.stages).rev() {
            let d_relu_out =
                pool2d_backward(&t.relu_out, self.config.pooling, 2, 2, &d_stage)?;
            let d_bn_out = relu_backward(&t.bn_out, &d_relu_out)?;
            let bn_grads = batchnorm_backward(&t.bn_cache, &stage.gamma.value, &d_bn_out)?;
            stage.gamma.accumulate_grad(&bn_grads.gamma);
            stage.beta.accumulate_grad(&bn_grads.beta);
            let conv_grads = conv2d_backward(
                &t.conv_in,
                &stage.weight.value,
                1,
                Padding::Same,
                &bn_grads.input,
            )?;
            stage.weight.accumulate_grad(&conv_grads.weights);
            stage.bias.accumulate_grad(&conv_grads.bias);
            d_stage = conv_grads.input;
        }
        Ok(())
    }

    /// One full optimization step on a batch; returns the batch loss.
    pub fn train_step(
        &mut self,
        batch: &EyeBatch<T>,
        targets: &Tensor<T>,
        lr: f64,
        adam_t: u64,
    ) -> Result<T, GazeNetError> {
        let result = self.forward(batch, BnMode::Train, true)?;
        let loss = mse_loss_forward(&result.pred, targets)?;
        let grad = mse_loss_backward(&result.pred, targets)?;
        self.zero_grads();
        self.backward(result.tape.as_ref().expect("train tape"), &grad)?;
        let hyper = AdamHyper::default();
        let mut params = self.trainable_params_mut();
        adam_step(&mut params, lr, hyper, adam_t)?;
        Ok(loss)
    }

    pub fn zero_grads(&mut self) {
        for p in self.trainable_params_mut() {
            p.zero_grad();
        }
    }

    pub(crate) fn trainable_params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<&mut Parameter<T>> = Vec::new();
        for s in self.stages.iter_mut() {
            v.push(&mut s.weight);
            v.push(&mut s.bias);
            v.push(&mut s.gamma);
            v.push(&mut s.beta);
        }
        v.push(&mut self.eye_reduce.weight);
        v.push(&mut self.eye_reduce.bias);
        for l in self.landmark.iter_mut() {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        for l in self.fusion.iter_mut() {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v.push(&mut self.output.weight);
        v.push(&mut self.output.bias);
        v
    }

    /// Visits every trainable parameter with its checkpoint name.
    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Parameter<T>)) {
        for (i, s) in self.stages.iter().enumerate() {
            f(&format!("tower.conv{}.weight", i + 1), &s.weight);
            f(&format!("tower.conv{}.bias", i + 1), &s.bias);
            f(&format!("tower.bn{}.gamma", i + 1), &s.gamma);
            f(&format!("tower.bn{}.beta", i + 1), &s.beta);
        }
        f("eye_reduce.weight", &self.eye_reduce.weight);
        f("eye_reduce.bias", &self.eye_reduce.bias);
        for (i, l) in self.landmark.iter().enumerate() {
            f(&format!("landmark{}.weight", i + 1), &l.weight);
            f(&format!("landmark{}.bias", i + 1), &l.bias);
        }
        for (i, l) in self.fusion.iter().enumerate() {
            f(&format!("fusion{}.weight", i + 1), &l.weight);
            f(&format!("fusion{}.bias", i + 1), &l.bias);
        }
        f("output.weight", &self.output.weight);
        f("output.bias", &self.output.bias);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Parameter<T>)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            f(format!("tower.conv{}.weight", i + 1), &mut s.weight);
            f(format!("tower.conv{}.bias", i + 1), &mut s.bias);
            f(format!("tower.bn{}.gamma", i + 1), &mut s.gamma);
            f(format!("tower.bn{}.beta", i + 1), &mut s.beta);
        }
        f("eye_reduce.weight".to_string(), &mut self.eye_reduce.weight);
        f("eye_reduce.bias".to_string(), &mut self.eye_reduce.bias);
        for (i, l) in self.landmark.iter_mut().enumerate() {
            f(format!("landmark{}.weight", i + 1), &mut l.weight);
            f(format!("landmark{}.bias", i + 1), &mut l.bias);
        }
        for (i, l) in self.fusion.iter_mut().enumerate() {
            f(format!("fusion{}.weight", i + 1), &mut l.weight);
            f(format!("fusion{}.bias", i + 1), &mut l.bias);
        }
        f("output.weight".to_string(), &mut self.output.weight);
        f("output.bias".to_string(), &mut self.output.bias);
    }

    pub fn visit_bn_states(&self, f: &mut dyn FnMut(&str, &BatchNormState<T>)) {
        for (i, s) in self.stages.iter().enumerate() {
            f(&format!("tower.bn{}", i + 1), &s.bn_state);
        }
    }

    pub fn visit_bn_states_mut(&mut self, f: &mut dyn FnMut(String, &mut BatchNormState<T>)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            f(format!("tower.bn{}", i + 1), &mut s.bn_state);
        }
    }

    /// Actual trainable scalar count; matches
    /// [`GazeNetConfig::parameter_count`].
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        self.visit_params(&mut |_, p| total += p.value.len());
        total
    }

    /// All trainable parameters flattened in visit order; the inverse of
    /// [`GazeNet::load_flat_params`].
    pub fn flatten_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.visit_params(&mut |_, p| out.extend_from_slice(p.value.data()));
        out
    }

    pub fn load_flat_params(&mut self, flat: &[T]) {
        let mut cursor = 0;
        self.visit_params_mut(&mut |_, p| {
            let len = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[cursor..cursor + len]);
            cursor += len;
        });
        assert_eq!(cursor, flat.len(), "flat parameter length mismatch");
    }

    /// Accumulated gradients flattened in visit order.
    pub fn flatten_grads(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.visit_params(&mut |_, p| out.extend_from_slice(p.grad.data()));
        out
    }
}

fn pool_argmax_signature<T: Scalar>(input: &Tensor<T>, size: usize, stride: usize) -> u64 {
    let (n, h, w, c) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let out_h = (h - size) / stride + 1;
    let out_w = (w - size) / stride + 1;
    let mut fp = Fingerprint::new();
    let x = input.data();
    for ni in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut best_off = 0u64;
                    for ky in 0..size {
                        for kx in 0..size {
                            let off = ((ni * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
                            if x[off] > best {
                                best = x[off];
                                best_off = off as u64;
                            }
                        }
                    }
                    fp.push_u64(best_off);
                }
            }
        }
    }
    fp.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> GazeNetConfig {
        GazeNetConfig {
            crop_size: 16,
            tower_channels: [2, 3, 4],
            tower_kernels: [7, 5, 3],
            landmark_units: [16, 16],
            fusion_units: vec![16, 8, 4],
            batch_size: 2,
            seed: 7,
            ..GazeNetConfig::default()
        }
    }

    fn random_inputs(seed: u64, crop: usize) -> EyeInputs<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |shape: &[usize]| {
            let len: usize = shape.iter().product();
            let data: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Tensor::from_vec(shape, data).unwrap()
        };
        let left_crop = gen(&[crop, crop, 3]);
        let right_crop = gen(&[crop, crop, 3]);
        let mut corners = [0.0f32; 8];
        for c in corners.iter_mut() {
            *c = rng.gen_range(0.0..1.0);
        }
        EyeInputs {
            left_crop,
            right_crop,
            corners,
        }
    }

    #[test]
    fn forward_shapes_and_penultimate_width() {
        let mut net = GazeNet::<f32>::new(tiny_config()).unwrap();
        let frames = [random_inputs(1, 16), random_inputs(2, 16), random_inputs(3, 16)];
        let refs: Vec<&EyeInputs<f32>> = frames.iter().collect();
        let batch = EyeBatch::from_inputs(&refs).unwrap();
        let out = net.forward(&batch, BnMode::Train, false).unwrap();
        assert_eq!(out.pred.shape(), &[3, 2]);
        assert_eq!(out.penultimate.shape(), &[3, 4]);
    }

    #[test]
    fn identical_inputs_give_identical_rows_in_infer_mode() {
        let mut net = GazeNet::<f32>::new(tiny_config()).unwrap();
        let a = random_inputs(5, 16);
        let refs = [&a, &a];
        let batch = EyeBatch::from_inputs(&refs).unwrap();
        let out = net.forward(&batch, BnMode::Infer, false).unwrap();
        let p = out.pred.data();
        assert_eq!(p[0], p[2]);
        assert_eq!(p[1], p[3]);
    }

    #[test]
    fn net_parameter_count_matches_config_formula() {
        let config = tiny_config();
        let net = GazeNet::<f32>::new(config.clone()).unwrap();
        assert_eq!(net.parameter_count(), config.parameter_count());
        let reference = GazeNet::<f32>::new(GazeNetConfig::default()).unwrap();
        assert_eq!(
            reference.parameter_count(),
            GazeNetConfig::default().parameter_count()
        );
    }

    #[test]
    fn same_seed_builds_identical_networks() {
        let a = GazeNet::<f32>::new(tiny_config()).unwrap();
        let b = GazeNet::<f32>::new(tiny_config()).unwrap();
        let mut equal = true;
        a.visit_params(&mut |name, pa| {
            b.visit_params(&mut |name_b, pb| {
                if name == name_b && pa.value.data() != pb.value.data() {
                    equal = false;
                }
            });
        });
        assert!(equal);
    }

    #[test]
    fn composed_network_gradient_matches_finite_differences() {
        // End-to-end check in f64 through conv/bn/relu/pool stacks, the
        // landmark branch and the fusion head, on a sample of parameter
        // components. Components whose perturbation flips a ReLU mask or
        // pool argmax are skipped via the forward fingerprint.
        use crate::numerics::gradcheck::{check_components, DEFAULT_H};
        use crate::numerics::{mse_loss_backward, mse_loss_forward};

        let mut config = tiny_config();
        config.seed = 11;
        let mut net = GazeNet::<f64>::new(config).unwrap();
        let frames: Vec<EyeInputs<f64>> = (0..2)
            .map(|i| {
                let f32_inputs = random_inputs(100 + i, 16);
                EyeInputs {
                    left_crop: f32_inputs.left_crop.cast(),
                    right_crop: f32_inputs.right_crop.cast(),
                    corners: f32_inputs.corners.map(|v| v as f64),
                }
            })
            .collect();
        let refs: Vec<&EyeInputs<f64>> = frames.iter().collect();
        let batch = EyeBatch::from_inputs(&refs).unwrap();
        let targets = Tensor::from_vec(&[2, 2], vec![1.0, -0.5, 0.25, 2.0]).unwrap();

        let result = net.forward(&batch, BnMode::Train, true).unwrap();
        let loss_grad = mse_loss_backward(&result.pred, &targets).unwrap();
        net.zero_grads();
        net.backward(result.tape.as_ref().unwrap(), &loss_grad).unwrap();
        let analytic = net.flatten_grads();
        let mut flat = net.flatten_params();

        // Every 7th component plus all head parameters (the tail of the
        // flat vector) keeps the runtime small while touching each layer.
        let n = flat.len();
        let mut components: Vec<usize> = (0..n).step_by(7).collect();
        components.extend(n - 60..n);
        let outcome = check_components(
            |v| {
                net.load_flat_params(v);
                let out = net.forward(&batch, BnMode::Train, false).unwrap();
                let loss = mse_loss_forward(&out.pred, &targets).unwrap();
                (loss, out.fingerprint)
            },
            &mut flat,
            &analytic,
            &components,
            DEFAULT_H,
        );
        assert!(
            outcome.max_rel_err < 1e-3,
            "max relative error {} over {} checked ({} skipped)",
            outcome.max_rel_err,
            outcome.checked,
            outcome.skipped
        );
        assert!(outcome.checked > components.len() / 2, "too many skips");
    }

    #[test]
    fn training_step_reduces_loss_on_fixed_batch() {
        let mut net = GazeNet::<f32>::new(tiny_config()).unwrap();
        let frames: Vec<EyeInputs<f32>> = (0..4).map(|i| random_inputs(i, 16)).collect();
        let refs: Vec<&EyeInputs<f32>> = frames.iter().collect();
        let batch = EyeBatch::from_inputs(&refs).unwrap();
        let targets =
            Tensor::from_vec(&[4, 2], vec![1.0f32, -1.0, 0.5, 0.5, -0.5, 1.0, 0.0, 2.0]).unwrap();
        let mut losses = Vec::new();
        for t in 1..=30 {
            losses.push(net.train_step(&batch, &targets, 0.01, t).unwrap());
        }
        assert!(
            losses.last().unwrap() < &(losses[0] * 0.5),
            "loss did not halve: {losses:?}"
        );
    }
}
