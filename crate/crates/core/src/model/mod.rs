//! Recurrent encoder, forecasting pretraining and verb classifiers.

pub mod adam;
pub mod checkpoint;
pub mod encoder;
pub mod loss;
pub mod nn;
pub mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{FeatureMatrix, FeatureRow, FEATURES};

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encoder::{batch_steps, flatten_steps, Classifier, Encoder, HeadInput};
pub use loss::{discounted_mse, discounted_mse_batch, masked_bce};
pub use nn::{sigmoid, Dense, Lstm, ParamSet};
pub use train::{
    pretrain, sample_windows, train_end_to_end, train_linear_head, HeadConfig, LabeledSet, PretrainLog, TrainConfig,
    TrainLog, WindowSet,
};

/// Per-column affine normalization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURES],
    pub std: [f64; FEATURES],
}

impl Default for Standardizer {
    fn default() -> Self {
        Standardizer {
            mean: [0.0; FEATURES],
            std: [1.0; FEATURES],
        }
    }
}

impl Standardizer {
    /// Columns with (near) zero variance get unit scale.
    pub fn fit<'a, I: IntoIterator<Item = &'a FeatureRow>>(rows: I) -> Result<Standardizer> {
        let mut n = 0usize;
        let mut mean = [0.0; FEATURES];
        let mut m2 = [0.0; FEATURES];
        for r in rows {
            n += 1;
            for f in 0..FEATURES {
                let d = r[f] - mean[f];
                mean[f] += d / n as f64;
                m2[f] += d * (r[f] - mean[f]);
            }
        }
        if n == 0 {
            return Err(Error::invalid("cannot fit a standardizer on zero rows"));
        }
        let std = m2.map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-9 {
                sd
            } else {
                1.0
            }
        });
        Ok(Standardizer { mean, std })
    }

    pub fn apply_row(&self, r: &FeatureRow) -> FeatureRow {
        std::array::from_fn(|f| (r[f] - self.mean[f]) / self.std[f])
    }

    /// `rows × 10` standardized array.
    pub fn apply(&self, rows: &[FeatureRow]) -> Array2<f64> {
        let mut a = Array2::zeros((rows.len(), FEATURES));
        for (t, r) in rows.iter().enumerate() {
            for (f, v) in self.apply_row(r).into_iter().enumerate() {
                a[[t, f]] = v;
            }
        }
        a
    }

    pub fn apply_matrix(&self, m: &FeatureMatrix) -> Array2<f64> {
        self.apply(m.rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_columns_have_zero_mean_unit_variance() {
        let rows: Vec<FeatureRow> = (0..50)
            .map(|i| std::array::from_fn(|f| if f == 0 { 2.0 } else { (i * f) as f64 * 0.3 + 1.0 }))
            .collect();
        let s = Standardizer::fit(&rows).unwrap();
        let a = s.apply(&rows);
        for f in 1..FEATURES {
            let col = a.column(f);
            let m = col.mean().unwrap();
            let v = col.mapv(|x| (x - m) * (x - m)).mean().unwrap();
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-9);
        }
        // constant column keeps unit scale
        assert_eq!(s.std[0], 1.0);
    }
}
