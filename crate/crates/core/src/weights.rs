//! Decaying recursion weights `w_i = (i + 1)^(-gamma)`.

use crate::error::{PrError, Result};

pub const DEFAULT_GAMMA: f64 = 0.67;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    gamma: f64,
    values: Vec<f64>,
}

impl WeightSchedule {
    /// `gamma` must lie in `(2/3, 1]`.
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        Self::build(n, gamma, false)
    }

    /// Like [`WeightSchedule::new`] but accepts any `gamma` in `(0, 1]`.
    pub fn new_relaxed(n: usize, gamma: f64) -> Result<Self> {
        Self::build(n, gamma, true)
    }

    fn build(n: usize, gamma: f64, relaxed: bool) -> Result<Self> {
        if n == 0 {
            return Err(PrError::InvalidConfig("weight schedule needs n >= 1".into()));
        }
        let lower = if relaxed { 0.0 } else { 2.0 / 3.0 };
        if !(gamma > lower && gamma <= 1.0) {
            return Err(PrError::InvalidConfig(format!(
                "gamma must be in ({lower:.4}, 1], got {gamma}"
            )));
        }
        let values = (1..=n).map(|i| ((i + 1) as f64).powf(-gamma)).collect();
        Ok(Self { gamma, values })
    }

    /// Arbitrary weights in `[0, 1)`; used for degenerate schedules in tests
    /// and diagnostics.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(PrError::InvalidConfig("weight schedule needs n >= 1".into()));
        }
        if values.iter().any(|w| !(0.0..1.0).contains(w)) {
            return Err(PrError::InvalidConfig("weights must lie in [0, 1)".into()));
        }
        Ok(Self { gamma: f64::NAN, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// NaN for schedules built with [`WeightSchedule::from_values`].
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn make_weight_schedule(n: usize, gamma: f64) -> Result<WeightSchedule> {
    WeightSchedule::new(n, gamma)
}
