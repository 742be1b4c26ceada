use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEGREE: usize = 7;

/// Degree-7 least-squares fit of a SOC-rate curve against battery power.
///
/// The fit is solved on the abscissa mapped to [-1, 1]; `coefficients` are
/// the same polynomial re-expanded in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocPolynomial {
    /// a_0..a_7 in original units (per W^j).
    pub coefficients: [f64; DEGREE + 1],
    pub domain: (f64, f64),
    pub fit_rmse: f64,
    center: f64,
    half_width: f64,
    scaled: [f64; DEGREE + 1],
}

impl SocPolynomial {
    /// Evaluates inside the domain (a relative slack of 1e-9 absorbs rounding
    /// in `u * P_load`).
    pub fn eval(&self, x: f64) -> Option<f64> {
        let slack = 1e-9 * (self.domain.1 - self.domain.0).max(1.0);
        if !(x >= self.domain.0 - slack && x <= self.domain.1 + slack) {
            return None;
        }
        Some(self.eval_unchecked(x))
    }

    /// Horner on the rescaled abscissa, no domain check.
    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.half_width;
        let mut acc = self.scaled[DEGREE];
        for k in (0..DEGREE).rev() {
            acc = acc * t + self.scaled[k];
        }
        acc
    }

    /// Σ a_j x^j with the original-unit coefficients.
    pub fn eval_original_units(&self, x: f64) -> f64 {
        let mut acc = self.coefficients[DEGREE];
        for k in (0..DEGREE).rev() {
            acc = acc * x + self.coefficients[k];
        }
        acc
    }

    /// The identically zero polynomial on a domain.
    pub fn zero(domain: (f64, f64)) -> Self {
        Self {
            coefficients: [0.0; DEGREE + 1],
            domain,
            fit_rmse: 0.0,
            center: 0.5 * (domain.0 + domain.1),
            half_width: (0.5 * (domain.1 - domain.0)).max(f64::MIN_POSITIVE),
            scaled: [0.0; DEGREE + 1],
        }
    }
}

/// Least-squares polynomial of any degree on a rescaled abscissa. Returns the
/// scaled coefficients, centre and half-width.
pub fn fit_scaled(x: &[f64], y: &[f64], degree: usize) -> Result<(Vec<f64>, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} abscissae for {} values", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite curve point".into()));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= degree {
        return Err(Error::Fit(format!(
            "{} distinct abscissae cannot determine a degree-{degree} polynomial",
            distinct.len()
        )));
    }
    let lo = distinct[0];
    let hi = distinct[distinct.len() - 1];
    let center = 0.5 * (lo + hi);
    let half_width = 0.5 * (hi - lo);
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| ((x[i] - center) / half_width).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-12 * smax) {
        return Err(Error::Fit(format!("rank-deficient system (condition {:.3e})", smax / smin)));
    }
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    Ok((sol.iter().cloned().collect(), center, half_width))
}

/// Degree-7 fit of ΔSOC-rate against p_batt.
pub fn fit_soc_polynomial(p_batt: &[f64], values: &[f64]) -> Result<SocPolynomial> {
    if p_batt.len() < DEGREE + 1 {
        return Err(Error::Fit(format!("need at least {} points, got {}", DEGREE + 1, p_batt.len())));
    }
    let (c, center, half_width) = fit_scaled(p_batt, values, DEGREE)?;
    let mut scaled = [0.0; DEGREE + 1];
    scaled.copy_from_slice(&c);
    let mut poly = SocPolynomial {
        coefficients: expand(&scaled, center, half_width),
        domain: (center - half_width, center + half_width),
        fit_rmse: 0.0,
        center,
        half_width,
        scaled,
    };
    let se: f64 = p_batt
        .iter()
        .zip(values)
        .map(|(&x, &y)| (poly.eval_unchecked(x) - y).powi(2))
        .sum();
    poly.fit_rmse = (se / p_batt.len() as f64).sqrt();
    Ok(poly)
}

/// Re-expands Σ b_k ((x - c)/h)^k into Σ a_j x^j.
fn expand(b: &[f64; DEGREE + 1], c: f64, h: f64) -> [f64; DEGREE + 1] {
    let mut a = [0.0; DEGREE + 1];
    // Coefficients of ((x - c)/h)^k, built up one factor at a time.
    let mut basis = [0.0; DEGREE + 1];
    basis[0] = 1.0;
    for (k, bk) in b.iter().enumerate() {
        for j in 0..=k {
            a[j] += bk * basis[j];
        }
        let mut next = [0.0; DEGREE + 1];
        for j in 0..=k {
            if j + 1 <= DEGREE {
                next[j + 1] += basis[j] / h;
            }
            next[j] -= basis[j] * c / h;
        }
        basis = next;
    }
    a
}
