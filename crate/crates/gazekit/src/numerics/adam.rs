use crate::scalar::Scalar;

use super::{NumericsError, Tensor};

/// A trainable tensor together with its gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
        }
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = T::zero();
        }
    }

    pub fn accumulate_grad(&mut self, delta: &Tensor<T>) {
        debug_assert_eq!(self.grad.shape(), delta.shape());
        for (g, d) in self.grad.data_mut().iter_mut().zip(delta.data()) {
            *g += *d;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// One bias-corrected Adam update, in place, over every parameter.
///
/// `t` is the 1-based step count used for bias correction.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Parameter<T>],
    lr: f64,
    hyper: AdamHyper,
    t: u64,
) -> Result<(), NumericsError> {
    assert!(t >= 1, "adam step count is 1-based");
    let b1 = T::from_config(hyper.beta1);
    let b2 = T::from_config(hyper.beta2);
    let eps = T::from_config(hyper.eps);
    let lr_t = T::from_config(lr);
    let one = T::one();
    let corr1 = one - b1.powi(t as i32);
    let corr2 = one - b2.powi(t as i32);

    for param in params.iter_mut() {
        param.grad.check_finite("adam_step")?;
        let g = param.grad.data();
        let m = param.adam_m.data_mut();
        let v = param.adam_v.data_mut();
        let val = param.value.data_mut();
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            val[i] -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        param.value.check_finite("adam_step")?;
    }
    Ok(())
}
