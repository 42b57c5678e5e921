//! Per-dataset dB standardization, with statistics taken from the training
//! split only.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use wisp_core::em::PowerUnit;

use crate::error::CliError;

/// Mean and population standard deviation of every training reading, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean_db: f64,
    pub std_db: f64,
    /// Readings the statistics were computed over.
    pub count: u64,
}

/// Running sums in f64; merge order is fixed by the caller.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn of(values_db: impl IntoIterator<Item = f64>) -> Self {
        values_db.into_iter().fold(Self::default(), |m, v| Self {
            count: m.count + 1,
            sum: m.sum + v,
            sum_sq: m.sum_sq + v * v,
        })
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            count: self.count + o.count,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    pub fn finish(self) -> Result<Normalization, CliError> {
        if self.count == 0 {
            return Err(CliError::Failed(
                "normalization over an empty training split".into(),
            ));
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        Ok(Normalization {
            mean_db: mean,
            std_db: var.sqrt(),
            count: self.count,
        })
    }
}

/// Stored readings converted to dB in f64.
pub fn to_db(values: &Array2<f32>, unit: PowerUnit) -> Array2<f64> {
    match unit {
        PowerUnit::Db => values.mapv(f64::from),
        PowerUnit::LinearPower => values.mapv(|p| 10.0 * f64::from(p).log10()),
    }
}

impl Normalization {
    fn check(&self) -> Result<(), CliError> {
        if !(self.std_db > 0.0 && self.std_db.is_finite()) {
            return Err(CliError::Failed(format!(
                "normalization std {} dB is not positive",
                self.std_db
            )));
        }
        Ok(())
    }

    /// `(db - mean) / std`.
    pub fn normalize(&self, db: &Array2<f64>) -> Result<Array2<f64>, CliError> {
        self.check()?;
        Ok(db.mapv(|v| (v - self.mean_db) / self.std_db))
    }

    pub fn denormalize(&self, z: &Array2<f64>) -> Result<Array2<f64>, CliError> {
        self.check()?;
        Ok(z.mapv(|v| v * self.std_db + self.mean_db))
    }
}
