use core::fmt::{Debug, Display};
use num_traits::Float;

/// Floating point element type of the engine: `f32` for training, `f64`
/// for gradient checking, double-double for the finite-difference side of
/// the check.
pub trait Real: Float + Default + Debug + Display + Send + Sync + 'static {
    const NAME: &'static str;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    // The engine's transcendentals. `num_traits::Float` switches between std
    // and libm depending on which features the build unifies, which changes
    // low bits and so training trajectories; these always give the same bits.
    fn exp_(self) -> Self;

    fn ln_(self) -> Self;

    fn tanh_(self) -> Self;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn exp_(self) -> Self {
        libm::expf(self)
    }

    fn ln_(self) -> Self {
        libm::logf(self)
    }

    fn tanh_(self) -> Self {
        libm::tanhf(self)
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn exp_(self) -> Self {
        libm::exp(self)
    }

    fn ln_(self) -> Self {
        libm::log(self)
    }

    fn tanh_(self) -> Self {
        libm::tanh(self)
    }
}
