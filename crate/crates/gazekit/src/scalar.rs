//! Scalar abstraction for the numeric core.
//!
//! All tensor math is generic over [`Scalar`] so the same kernels run in
//! `f32` for training/inference and in `f64` inside the finite-difference
//! and QP test oracles. Concrete aliases live at the crate root.

use std::fmt::{Debug, Display};

/// Floating-point scalar usable by the numeric core: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssignOps
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::iter::Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Dtype tag used by the checkpoint format.
    const DTYPE: &'static str;
    /// Payload width in bytes per element.
    const BYTE_WIDTH: usize;

    /// Lossy conversion from an `f64` configuration value.
    fn from_config(v: f64) -> Self {
        Self::from_f64(v).expect("configuration value representable as scalar")
    }

    /// Widen to `f64` for metrics and reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Appends the little-endian encoding of `self`.
    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes one value from exactly `BYTE_WIDTH` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTE_WIDTH: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTE_WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}
