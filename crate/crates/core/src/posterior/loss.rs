//! Label losses `ℓ(x, y)` and their first two derivatives in `x`, written
//! `F` and `F′` throughout.

use serde::{Deserialize, Serialize};

use super::labels::Label;
use crate::error::{invalid, Result};
use crate::normal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    /// `ψ_γ` is the normal density with standard deviation γ.
    GaussianCdf,
    /// `ψ_γ` is the logistic density with scale γ.
    LogisticCdf,
}

/// Observation noise: `y = sign(u + η)` with `η ~ ψ_γ` for the probit model,
/// `y = u + η`, `η ~ N(0, γ²)` for regression. γ = 0 only makes sense for the
/// harmonic model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gamma: f64,
    pub family: NoiseFamily,
}

impl NoiseModel {
    pub fn new(gamma: f64, family: NoiseFamily) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be finite and nonnegative, got {gamma}")));
        }
        Ok(NoiseModel { gamma, family })
    }

    pub fn gaussian(gamma: f64) -> Self {
        NoiseModel {
            gamma,
            family: NoiseFamily::GaussianCdf,
        }
    }

    pub(crate) fn require_positive(&self) -> Result<()> {
        if self.gamma > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("gamma must be positive for this model, got {}", self.gamma)))
        }
    }

    /// `Ψ_γ(t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let z = t / self.gamma;
        match self.family {
            NoiseFamily::GaussianCdf => normal::cdf(z),
            NoiseFamily::LogisticCdf => normal::logistic(z),
        }
    }

    /// `-log Ψ_γ(t)`.
    pub fn neg_log_cdf(&self, t: f64) -> f64 {
        let z = t / self.gamma;
        match self.family {
            NoiseFamily::GaussianCdf => -normal::log_cdf(z),
            NoiseFamily::LogisticCdf => normal::softplus(-z),
        }
    }
}

/// A twice-differentiable label loss.
pub trait Loss: Sync {
    fn value(&self, x: f64, y: Label) -> f64;
    /// `F(x, y) = ∂ℓ/∂x`.
    fn first(&self, x: f64, y: Label) -> f64;
    /// `F′(x, y) = ∂²ℓ/∂x²`.
    fn second(&self, x: f64, y: Label) -> f64;
}

/// `ℓ(x, y) = -log Ψ_γ(xy)`.
#[derive(Clone, Copy, Debug)]
pub struct ProbitLoss(pub NoiseModel);

/// `ℓ(x, y) = (x - y)² / 2γ²`.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticLoss {
    pub gamma: f64,
}

impl Loss for ProbitLoss {
    fn value(&self, x: f64, y: Label) -> f64 {
        self.0.neg_log_cdf(x * y.sign())
    }

    fn first(&self, x: f64, y: Label) -> f64 {
        probit_f(x, y, &self.0)
    }

    fn second(&self, x: f64, y: Label) -> f64 {
        probit_fprime(x, y, &self.0)
    }
}

impl Loss for QuadraticLoss {
    fn value(&self, x: f64, y: Label) -> f64 {
        let r = x - y.sign();
        0.5 * r * r / (self.gamma * self.gamma)
    }

    fn first(&self, x: f64, y: Label) -> f64 {
        (x - y.sign()) / (self.gamma * self.gamma)
    }

    fn second(&self, _x: f64, _y: Label) -> f64 {
        1.0 / (self.gamma * self.gamma)
    }
}

/// `F(x, y) = -y ψ_γ(xy) / Ψ_γ(xy)`.
pub fn probit_f(x: f64, y: Label, noise: &NoiseModel) -> f64 {
    let g = noise.gamma;
    let z = x * y.sign() / g;
    let ratio = match noise.family {
        NoiseFamily::GaussianCdf => normal::inverse_mills(z),
        // ψ/Ψ for the logistic: σ(z)σ(-z)/σ(z) = σ(-z)
        NoiseFamily::LogisticCdf => normal::logistic(-z),
    };
    -y.sign() * ratio / g
}

/// `F′(x, y) = (ψ_γ/Ψ_γ)² - ψ_γ′/Ψ_γ` at `xy`, positive by log-concavity.
pub fn probit_fprime(x: f64, y: Label, noise: &NoiseModel) -> f64 {
    let g = noise.gamma;
    let z = x * y.sign() / g;
    match noise.family {
        NoiseFamily::GaussianCdf => {
            // ψ′/Ψ = -z r for the normal density, so F′ = r (r + z) / γ².
            let (r, shift) = normal::inverse_mills_with_shift(z);
            r * shift / (g * g)
        }
        NoiseFamily::LogisticCdf => normal::logistic(z) * normal::logistic(-z) / (g * g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STD: NoiseModel = NoiseModel {
        gamma: 1.0,
        family: NoiseFamily::GaussianCdf,
    };

    #[test]
    fn values_at_zero() {
        assert!((probit_f(0.0, Label::Positive, &STD) + 0.797_884_560_802_865_4).abs() < 1e-12);
        assert!((probit_fprime(0.0, Label::Positive, &STD) - 0.636_619_772_367_581_3).abs() < 1e-12);
    }

    #[test]
    fn sign_symmetry() {
        for &x in &[-7.0, -1.3, 0.0, 0.4, 5.0] {
            for noise in [STD, NoiseModel { gamma: 0.3, family: NoiseFamily::LogisticCdf }] {
                let a = probit_f(x, Label::Positive, &noise);
                let b = probit_f(-x, Label::Negative, &noise);
                assert!((a + b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fprime_positive() {
        for &x in &[-10.0, -1.0, 0.0, 1.0, 10.0] {
            for y in Label::BOTH {
                assert!(probit_fprime(x, y, &STD) > 0.0, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn deep_tail_is_finite() {
        let f = probit_f(-40.0, Label::Positive, &STD);
        assert!(f.is_finite());
        assert!((f + 40.024_968_847_207_26).abs() < 1e-10);
        let fp = probit_fprime(-40.0, Label::Positive, &STD);
        assert!((fp - 0.999_377_331_621_408_6).abs() < 1e-10);
        assert!(probit_f(-1e6, Label::Positive, &STD).is_finite());
    }

    #[test]
    fn gamma_validation() {
        assert!(NoiseModel::new(-0.1, NoiseFamily::GaussianCdf).is_err());
        assert!(NoiseModel::new(0.0, NoiseFamily::GaussianCdf).unwrap().require_positive().is_err());
    }
}
