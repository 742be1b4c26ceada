use serde::{Deserialize, Serialize};

use super::curve::Curve;
use crate::error::{Error, Result};

/// Fuel-cell system seen from the DC bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuelCellModel {
    /// W
    pub p_min: f64,
    /// W
    pub p_max: f64,
    pub efficiency_curve: Curve,
    /// g/s against W
    pub h2_rate_curve: Curve,
    /// Linear hydrogen-rate coefficient used by the controllers, g/J.
    pub c_h2: f64,
    /// J/kg
    pub lhv_h2: f64,
}

pub const RATED_POWER: f64 = 61_560.0;
pub const LHV_H2: f64 = 1.2e8;

impl Default for FuelCellModel {
    fn default() -> Self {
        Self::synthetic(RATED_POWER, 0.55, 0.40, 201)
    }
}

impl FuelCellModel {
    /// Concave quadratic efficiency peaking at `eta_peak` at a quarter of
    /// rated power and falling to `eta_rated` at rated power.
    pub fn synthetic(p_max: f64, eta_peak: f64, eta_rated: f64, nodes: usize) -> Self {
        let p_star = 0.25 * p_max;
        let c = (eta_peak - eta_rated) / (0.75 * p_max).powi(2);
        let eta = move |p: f64| eta_peak - c * (p - p_star).powi(2);
        let efficiency_curve = Curve::sample(0.0, p_max, nodes, eta);
        let h2_rate_curve = Curve::sample(0.0, p_max, nodes, |p| 1000.0 * p / (LHV_H2 * eta(p)));
        let mut fc = Self {
            p_min: 0.0,
            p_max,
            efficiency_curve,
            h2_rate_curve,
            c_h2: 0.0,
            lhv_h2: LHV_H2,
        };
        fc.c_h2 = fc.secant_c_h2(25_000.0_f64.min(p_max));
        fc
    }

    /// Secant slope of the hydrogen map through the origin, g/J.
    pub fn secant_c_h2(&self, p_ref: f64) -> f64 {
        self.h2_rate_curve.eval_clamped(p_ref) / p_ref
    }

    pub fn validate(&self) -> Result<()> {
        self.efficiency_curve.validate()?;
        self.h2_rate_curve.validate()?;
        if !(self.p_min >= 0.0 && self.p_max > self.p_min) {
            return Err(Error::Param("fuel cell needs 0 <= p_min < p_max".into()));
        }
        for c in [&self.efficiency_curve, &self.h2_rate_curve] {
            if c.x_min() > self.p_min || c.x_max() < self.p_max {
                return Err(Error::Param("fuel cell curves must cover [p_min, p_max]".into()));
            }
        }
        if self.efficiency_curve.y.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Param("fuel cell efficiency must lie in (0, 1)".into()));
        }
        if self.h2_rate_curve.y.iter().any(|&m| m < 0.0) || !self.h2_rate_curve.is_nondecreasing() {
            return Err(Error::Param("hydrogen rate must be nonnegative and nondecreasing".into()));
        }
        if !(self.c_h2 > 0.0) || !(self.lhv_h2 > 0.0) {
            return Err(Error::Param("c_h2 and lhv_h2 must be positive".into()));
        }
        Ok(())
    }

    pub fn efficiency(&self, p_fc: f64) -> Result<f64> {
        self.efficiency_curve.eval(p_fc, "fuel cell power")
    }
}

/// Hydrogen mass flow at a fuel-cell output power, g/s.
pub fn fc_hydrogen_rate(model: &FuelCellModel, p_fc: f64) -> Result<f64> {
    if !(p_fc >= model.p_min && p_fc <= model.p_max) {
        return Err(Error::range("fuel cell power", p_fc, model.p_min, model.p_max));
    }
    model.h2_rate_curve.eval(p_fc, "fuel cell power")
}
