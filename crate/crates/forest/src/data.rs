use crate::error::{ForestError, Result};

/// Borrowed row-major feature matrix plus targets.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    pub x: &'a [f64],
    pub n_features: usize,
    pub y: &'a [f64],
}

impl<'a> DataView<'a> {
    pub fn new(x: &'a [f64], n_features: usize, y: &'a [f64]) -> Result<Self> {
        if n_features == 0 {
            return Err(ForestError::Param("n_features must be positive".into()));
        }
        if x.len() % n_features != 0 {
            return Err(ForestError::Shape {
                len: x.len(),
                n_features,
            });
        }
        let rows = x.len() / n_features;
        if rows != y.len() {
            return Err(ForestError::TargetCount {
                rows,
                targets: y.len(),
            });
        }
        if rows == 0 {
            return Err(ForestError::EmptyDataset);
        }
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(ForestError::NonFinite {
                    row: i / n_features,
                    column: i % n_features,
                });
            }
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite {
                row,
                column: n_features,
            });
        }
        Ok(Self { x, n_features, y })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(
            DataView::new(&[1.0, 2.0, 3.0], 2, &[0.0]).unwrap_err(),
            ForestError::Shape { len: 3, n_features: 2 }
        );
        assert!(matches!(
            DataView::new(&[], 2, &[]),
            Err(ForestError::EmptyDataset)
        ));
        assert!(matches!(
            DataView::new(&[1.0, f64::NAN], 2, &[0.0]),
            Err(ForestError::NonFinite { row: 0, column: 1 })
        ));
        assert!(matches!(
            DataView::new(&[1.0, 2.0], 2, &[f64::INFINITY]),
            Err(ForestError::NonFinite { row: 0, column: 2 })
        ));
    }
}
