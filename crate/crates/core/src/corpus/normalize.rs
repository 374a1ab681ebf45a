use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{shape_err, Error, Result};

/// Floor applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    mean: Array1<f64>,
    std: Array1<f64>,
}

impl Normalizer {
    /// Population mean and standard deviation of every column.
    pub fn fit(data: ArrayView2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Empty("cannot fit a normalizer on zero rows"));
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let std = data.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn from_parts(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return shape_err(format!("mean has {} entries, std {}", mean.len(), std.len()));
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("normalizer statistics must be finite with positive std".into()));
        }
        Ok(Self { mean: mean.into(), std: std.into() })
    }

    /// Statistics that leave data unchanged.
    pub fn identity(dim: usize) -> Self {
        Self { mean: Array1::zeros(dim), std: Array1::ones(dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn std(&self) -> &Array1<f64> {
        &self.std
    }

    fn check(&self, data: &ArrayView2<f64>) -> Result<()> {
        if data.ncols() != self.dim() {
            return shape_err(format!("data has {} columns, normalizer has {}", data.ncols(), self.dim()));
        }
        Ok(())
    }

    pub fn apply(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&data)?;
        Ok((&data - &self.mean) / &self.std)
    }

    pub fn invert(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&data)?;
        Ok(&data * &self.std + &self.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn self_application_is_standardized() {
        let x = array![[1.0, 10.0, 3.0], [2.0, -4.0, 3.0], [7.0, 0.5, 3.0], [-1.0, 2.0, 3.0]];
        let n = Normalizer::fit(x.view()).unwrap();
        let z = n.apply(x.view()).unwrap();
        for j in 0..2 {
            let col = z.column(j);
            let m = col.mean().unwrap();
            let s = col.std(0.0);
            assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9, "col {j}: {m} {s}");
        }
        // constant column collapses to zero instead of blowing up
        assert!(z.column(2).iter().all(|&v| v == 0.0));
        assert_eq!(n.std()[2], STD_FLOOR);
    }

    #[test]
    fn empty_and_width_mismatch_rejected() {
        assert!(Normalizer::fit(Array2::<f64>::zeros((0, 3)).view()).is_err());
        let n = Normalizer::identity(2);
        assert!(n.apply(array![[1.0, 2.0, 3.0]].view()).is_err());
    }

    proptest! {
        #[test]
        fn normalize_then_denormalize_round_trips(
            rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..12)
        ) {
            let x = Array2::from_shape_fn((rows.len(), 3), |(i, j)| rows[i][j]);
            let n = Normalizer::fit(x.view()).unwrap();
            let back = n.invert(n.apply(x.view()).unwrap().view()).unwrap();
            for (a, b) in back.iter().zip(x.iter()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
