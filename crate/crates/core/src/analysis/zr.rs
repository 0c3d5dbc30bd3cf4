use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};

/// Power law `Z = a * R^b` (Z in mm^6/m^3, R in mm/h).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZrParams {
    pub a: f64,
    pub b: f64,
}

impl Default for ZrParams {
    /// Marshall-Palmer.
    fn default() -> Self {
        ZrParams { a: 200.0, b: 1.6 }
    }
}

impl ZrParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = ZrParams { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite() {
            Ok(())
        } else {
            Err(AnalysisError::InvalidArgument(format!("Z-R coefficients must be positive, got a={} b={}", self.a, self.b)))
        }
    }
}

/// `R = (10^(dbz/10) / a)^(1/b)` with the constants folded, evaluated as
/// `exp(k * dbz - c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCurve {
    k: f64,
    c: f64,
}

impl RateCurve {
    pub fn new(p: &ZrParams) -> Self {
        RateCurve { k: std::f64::consts::LN_10 / (10.0 * p.b), c: p.a.ln() / p.b }
    }

    #[inline]
    pub fn rate(&self, dbz: f64) -> f64 {
        (self.k * dbz - self.c).exp()
    }
}

/// Rain rate in mm/h; NaN stays NaN.
pub fn dbz_to_rate(dbz: f64, p: &ZrParams) -> f64 {
    RateCurve::new(p).rate(dbz)
}

pub fn rate_to_dbz(rate: f64, p: &ZrParams) -> f64 {
    10.0 * (p.a * rate.powf(p.b)).log10()
}
