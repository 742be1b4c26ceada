use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear lookup over strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Curve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let c = Curve { x, y };
        c.validate()?;
        Ok(c)
    }

    /// Samples `f` at `n` evenly spaced nodes over `[lo, hi]`.
    pub fn sample(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let x: Vec<f64> = (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let y = x.iter().map(|&v| f(v)).collect();
        Curve { x, y }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::Shape(format!(
                "curve has {} abscissae and {} values",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.len() < 2 {
            return Err(Error::Shape("curve needs at least two nodes".into()));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::Param("curve contains non-finite values".into()));
        }
        if self.x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Param("curve abscissae must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn eval(&self, x: f64, what: &str) -> Result<f64> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return Err(Error::range(what, x, self.x_min(), self.x_max()));
        }
        Ok(self.eval_clamped(x))
    }

    /// Like `eval` but saturates outside the abscissa range.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.y[0];
        }
        if x >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= x) - 1;
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let t = (x - x0) / (x1 - x0);
        self.y[i] + t * (self.y[i + 1] - self.y[i])
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.y.windows(2).all(|w| w[1] >= w[0])
    }
}
