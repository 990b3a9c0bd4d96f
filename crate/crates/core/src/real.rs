//! Scalar precision abstraction.
//!
//! The engine runs at two precisions: `f32` is the working precision used for
//! training, `f64` is the extended precision used by gradient checks and the
//! scalar-loop oracles. Everything numeric is generic over [`Real`].

use std::fmt;

/// Floating-point scalar usable by tensors, layers, and optimizers.
pub trait Real:
    num_traits::Float + fmt::Debug + fmt::Display + fmt::LowerExp + Default + Send + Sync + 'static
{
    /// Tag written into checkpoint headers so files are precision-checked on load.
    const TAG: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }

    /// Raw bit pattern, widened to u64. Used for bitwise equality checks and
    /// parameter checksums.
    fn bits(self) -> u64;

    /// Parse the shortest round-trip decimal form produced by `{:e}`.
    fn parse(s: &str) -> Option<Self>;
}

impl Real for f32 {
    const TAG: &'static str = "f32";

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn bits(self) -> u64 {
        u64::from(self.to_bits())
    }
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl Real for f64 {
    const TAG: &'static str = "f64";

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn bits(self) -> u64 {
        self.to_bits()
    }
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}
