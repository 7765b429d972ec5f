use crate::scalar::Scalar;

use super::NumericsError;

/// Dense n-dimensional array, row-major.
///
/// The unit of all numeric computation in the pipeline. Shapes are
/// validated at construction; `data.len()` always equals the product of
/// `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NumericsError> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(NumericsError::shape(
                "from_vec",
                format!("shape {:?} needs {} elements, got {}", shape, expect, data.len()),
            ));
        }
        if shape.contains(&0) {
            return Err(NumericsError::shape(
                "from_vec",
                format!("shape {:?} has a zero dimension", shape),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Element at a multi-dimensional index. Convenience for tests and
    /// cold paths; hot loops do their own offset arithmetic.
    pub fn at(&self, index: &[usize]) -> T {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        self.data[off]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            off = off * self.shape[i] + ix;
        }
        self.data[off] = value;
    }

    /// Errors with [`NumericsError::NumericFault`] if any element is NaN
    /// or infinite.
    pub fn check_finite(&self, op: &str) -> Result<(), NumericsError> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumericsError::NumericFault {
                    op: op.to_string(),
                    detail: format!("non-finite value {v} at flat index {i}"),
                });
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Convert every element through `f64`; used at precision boundaries.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64_lossy()).expect("cast"))
                .collect(),
        }
    }
}
