use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tunable constants of the four indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    /// Critical threshold of the significant-area proportion. 0.694 puts a
    /// uniform map at `R_su = 1 - e^-0.694 ≈ 0.5`.
    pub alpha: f64,
    /// Guard added to the non-GT mass.
    pub eps: f64,
    /// Candidate radius expansion factor.
    pub expansion: f64,
    /// Attention-shift nonlinearity.
    pub beta: f64,
    /// Softening of the attention-count term.
    pub eta: f64,
    /// Local maxima at or below this probability are ignored.
    pub rho: f64,
    /// Side of the square neighborhood used to find local maxima.
    pub nms_window: usize,
    pub w_su: f64,
    pub w_as: f64,
    pub w_da: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            alpha: 0.694,
            eps: 1e-7,
            expansion: 1.5,
            beta: 3.0,
            eta: 0.5,
            rho: 0.5,
            nms_window: 5,
            w_su: 0.4,
            w_as: 0.35,
            w_da: 0.25,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("expansion", self.expansion),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be nonnegative, got {}", self.eps));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if self.nms_window == 0 || self.nms_window % 2 == 0 {
            return bad(format!("nms_window must be odd and >= 1, got {}", self.nms_window));
        }
        let w = [self.w_su, self.w_as, self.w_da];
        if w.iter().any(|&x| x.is_nan() || x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("weights must be nonnegative and sum to 1, got {w:?}"));
        }
        Ok(())
    }

    /// Reads a JSON parameter file; missing fields keep their defaults.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| Error::Schema {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }
}
