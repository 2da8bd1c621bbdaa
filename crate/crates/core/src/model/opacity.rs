use crate::error::{Error, Result};

/// Opacity `σ(u)`, bounded below by `σ_*` and above by `σ^*`, Lipschitz.
#[derive(Debug, Clone, Copy)]
pub enum Opacity {
    /// `σ ≡ value`.
    Constant { value: f64 },
    /// `σ(u) = σ_* + (σ^* - σ_*) / (1 + u²)`; `σ_* = σ^* / 2 = 1` gives
    /// `1 + 1/(1 + u²)`.
    Rational { sigma_star: f64, sigma_upper: f64 },
    /// Any bounded Lipschitz function with declared constants. No closed-form
    /// primitive, so the limit solver rejects it.
    Custom {
        func: fn(f64) -> f64,
        sigma_star: f64,
        sigma_upper: f64,
        lipschitz: f64,
    },
}

impl Opacity {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidOpacity(format!(
                "constant opacity must be positive, got {value}"
            )));
        }
        Ok(Opacity::Constant { value })
    }

    pub fn rational(sigma_star: f64, sigma_upper: f64) -> Result<Self> {
        if !(sigma_star > 0.0 && sigma_upper >= sigma_star && sigma_upper.is_finite()) {
            return Err(Error::InvalidOpacity(format!(
                "need 0 < sigma_star <= sigma_upper, got {sigma_star}, {sigma_upper}"
            )));
        }
        Ok(Opacity::Rational {
            sigma_star,
            sigma_upper,
        })
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Opacity::Constant { value } => value,
            Opacity::Rational {
                sigma_star,
                sigma_upper,
            } => sigma_star + (sigma_upper - sigma_star) / (1.0 + u * u),
            Opacity::Custom { func, .. } => func(u),
        }
    }

    pub fn sigma_star(&self) -> f64 {
        match *self {
            Opacity::Constant { value } => value,
            Opacity::Rational { sigma_star, .. } | Opacity::Custom { sigma_star, .. } => sigma_star,
        }
    }

    pub fn sigma_upper(&self) -> f64 {
        match *self {
            Opacity::Constant { value } => value,
            Opacity::Rational { sigma_upper, .. } | Opacity::Custom { sigma_upper, .. } => sigma_upper,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Opacity::Constant { .. } => 0.0,
            // max |d/du (1+u²)^{-1}| = 3√3/8 at u = 1/√3
            Opacity::Rational {
                sigma_star,
                sigma_upper,
            } => (sigma_upper - sigma_star) * 3.0 * 3f64.sqrt() / 8.0,
            Opacity::Custom { lipschitz, .. } => lipschitz,
        }
    }

    /// `G(ρ) = ∫_0^ρ dy / σ(y)`.
    pub fn primitive(&self, rho: f64) -> Result<f64> {
        match *self {
            Opacity::Constant { value } => Ok(rho / value),
            Opacity::Rational {
                sigma_star,
                sigma_upper,
            } => {
                // (1+y²)/(b(1+y²)+a) = (1/b)(1 - (a/b)/(c² + y²)), c² = 1 + a/b
                let b = sigma_star;
                let a = sigma_upper - sigma_star;
                let c = (1.0 + a / b).sqrt();
                Ok((rho - (a / b) / c * (rho / c).atan()) / b)
            }
            Opacity::Custom { .. } => Err(Error::UnsupportedOpacity("custom".into())),
        }
    }

    pub fn has_primitive(&self) -> bool {
        !matches!(self, Opacity::Custom { .. })
    }
}
