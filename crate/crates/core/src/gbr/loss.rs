use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossFunction {
    /// ½(y − f)², so the negative gradient is exactly y − f.
    #[default]
    Squared,
    /// |y − f|.
    Absolute,
}

impl LossFunction {
    pub fn name(self) -> &'static str {
        match self {
            LossFunction::Squared => "squared",
            LossFunction::Absolute => "absolute",
        }
    }

    pub fn value(self, y: f64, f: f64) -> f64 {
        match self {
            LossFunction::Squared => 0.5 * (y - f) * (y - f),
            LossFunction::Absolute => (y - f).abs(),
        }
    }

    /// −∂L/∂f. The absolute loss uses 0 as its subgradient at y = f.
    pub fn negative_gradient(self, y: f64, f: f64) -> f64 {
        match self {
            LossFunction::Squared => y - f,
            LossFunction::Absolute => {
                if y > f {
                    1.0
                } else if y < f {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// argmin over constants γ of Σ L(yᵢ, γ): the mean or the median.
    pub fn best_constant(self, y: &[f64]) -> f64 {
        match self {
            LossFunction::Squared => y.iter().sum::<f64>() / y.len() as f64,
            LossFunction::Absolute => median(y),
        }
    }

    pub fn total(self, y: &[f64], f: &[f64]) -> f64 {
        y.iter().zip(f).map(|(&a, &b)| self.value(a, b)).sum()
    }
}

/// Median with the even-length convention of averaging the middle pair.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl fmt::Display for LossFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "squared" => Ok(LossFunction::Squared),
            "absolute" => Ok(LossFunction::Absolute),
            other => Err(Error::InvalidInput(format!("unknown loss {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn squared_pseudo_residual() {
        assert_eq!(LossFunction::Squared.negative_gradient(3.0, 1.0), 2.0);
        assert_eq!(LossFunction::Squared.value(3.0, 1.0), 2.0);
    }

    #[test]
    fn zero_at_target() {
        for loss in [LossFunction::Squared, LossFunction::Absolute] {
            assert_eq!(loss.value(4.2, 4.2), 0.0);
            assert!(loss.value(-1.0, 7.0) >= 0.0);
        }
    }

    #[test]
    fn best_constants() {
        assert_eq!(LossFunction::Squared.best_constant(&[1.0, 2.0, 6.0]), 3.0);
        assert_eq!(LossFunction::Absolute.best_constant(&[1.0, 2.0, 6.0]), 2.0);
        assert_eq!(LossFunction::Absolute.best_constant(&[1.0, 2.0, 6.0, 8.0]), 4.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for loss in [LossFunction::Squared, LossFunction::Absolute] {
            for _ in 0..100 {
                let y: f64 = rng.gen_range(-10.0..10.0);
                let mut f: f64 = rng.gen_range(-10.0..10.0);
                if (y - f).abs() < 1e-3 {
                    f += 0.5;
                }
                let h = 1e-6 * (1.0 + f.abs());
                let fd = -(loss.value(y, f + h) - loss.value(y, f - h)) / (2.0 * h);
                let g = loss.negative_gradient(y, f);
                assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-12), "{loss} y={y} f={f}: {fd} vs {g}");
            }
        }
    }
}
