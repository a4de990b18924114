//! Kernels and their exact evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shift-invariant similarity functions with unit bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `exp(-||x - y||_2^2)`
    Gaussian,
    /// `exp(-||x - y||_2)`
    Exponential,
    /// `exp(-||x - y||_1)`
    Laplacian,
    /// `1 / (1 + ||x - y||_2)`
    Inv1pL2,
    /// `1 / (1 + ||x - y||_2^2)`
    Inv1pL2Sq,
    /// `1 / (1 + ||x - y||_1)`
    Inv1pL1,
}

impl Kernel {
    pub const ALL: [Kernel; 6] = [
        Kernel::Gaussian,
        Kernel::Exponential,
        Kernel::Laplacian,
        Kernel::Inv1pL2,
        Kernel::Inv1pL2Sq,
        Kernel::Inv1pL1,
    ];

    /// Whether the kernel is one of the `1 / (1 + h)` family.
    pub fn is_smooth(self) -> bool {
        matches!(self, Kernel::Inv1pL2 | Kernel::Inv1pL2Sq | Kernel::Inv1pL1)
    }

    /// Whether the kernel depends on the points only through `||x - y||_1`.
    pub fn is_l1(self) -> bool {
        matches!(self, Kernel::Laplacian | Kernel::Inv1pL1)
    }

    /// The exponential kernel `exp(-h)` sharing this kernel's `h`.
    pub fn exponential_counterpart(self) -> Kernel {
        match self {
            Kernel::Gaussian | Kernel::Inv1pL2Sq => Kernel::Gaussian,
            Kernel::Exponential | Kernel::Inv1pL2 => Kernel::Exponential,
            Kernel::Laplacian | Kernel::Inv1pL1 => Kernel::Laplacian,
        }
    }

    /// `h(x, y)` for this kernel.
    pub fn divergence<T: Scalar>(self, x: &[T], y: &[T]) -> T {
        match self {
            Kernel::Gaussian | Kernel::Inv1pL2Sq => crate::scalar::sq_dist(x, y),
            Kernel::Exponential | Kernel::Inv1pL2 => crate::scalar::sq_dist(x, y).sqrt(),
            Kernel::Laplacian | Kernel::Inv1pL1 => {
                x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs())
            }
        }
    }

    /// Kernel value as a function of `h`.
    pub fn profile<T: Scalar>(self, h: T) -> T {
        if self.is_smooth() {
            T::one() / (T::one() + h)
        } else {
            (-h).exp()
        }
    }

    pub fn eval<T: Scalar>(self, x: &[T], y: &[T]) -> T {
        self.profile(self.divergence(x, y))
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gauss-kde",
            Kernel::Exponential => "exp-kde",
            Kernel::Laplacian => "laplace-kde",
            Kernel::Inv1pL2 => "inv1p-l2",
            Kernel::Inv1pL2Sq => "inv1p-l2sq",
            Kernel::Inv1pL1 => "inv1p-l1",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::param(format!("unsupported kernel `{name}`")))
    }
}
