use serde::{Deserialize, Serialize};

use super::curve::Curve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryModel {
    /// Ah
    pub capacity: f64,
    /// V against SOC
    pub ocv_curve: Curve,
    /// Ω against SOC
    pub r_discharge_curve: Curve,
    /// Ω against SOC
    pub r_charge_curve: Curve,
    /// W, negative
    pub p_charge_min: f64,
    /// W
    pub p_discharge_max: f64,
    pub soc_floor: f64,
    pub soc_ceiling: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        // Affine through (0.1, 320 V) and (0.9, 400 V); resistances fall
        // across their bands as SOC rises.
        let ocv_curve = Curve::sample(0.0, 1.0, 2, |s| 310.0 + 100.0 * s);
        let r_discharge_curve = Curve::sample(0.0, 1.0, 2, |s| 0.54 - 0.05 * s);
        let r_charge_curve = Curve::sample(0.0, 1.0, 2, |s| 0.49 - 0.05 * s);
        Self {
            capacity: 40.0,
            ocv_curve,
            r_discharge_curve,
            r_charge_curve,
            p_charge_min: -35_000.0,
            p_discharge_max: 40_000.0,
            soc_floor: 0.1,
            soc_ceiling: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
    /// V
    pub terminal_voltage: f64,
    /// A, positive when discharging
    pub current: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampSide {
    Floor,
    Ceiling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocStep {
    pub soc: f64,
    pub clamped: Option<ClampSide>,
}

impl BatteryModel {
    pub fn validate(&self) -> Result<()> {
        for c in [&self.ocv_curve, &self.r_discharge_curve, &self.r_charge_curve] {
            c.validate()?;
        }
        if !(self.capacity > 0.0) {
            return Err(Error::Param("battery capacity must be positive".into()));
        }
        if !(0.0 <= self.soc_floor && self.soc_floor < self.soc_ceiling && self.soc_ceiling <= 1.0) {
            return Err(Error::Param("need 0 <= soc_floor < soc_ceiling <= 1".into()));
        }
        for c in [&self.ocv_curve, &self.r_discharge_curve, &self.r_charge_curve] {
            if c.x_min() > self.soc_floor || c.x_max() < self.soc_ceiling {
                return Err(Error::Param("battery curves must cover the SOC window".into()));
            }
        }
        if self.ocv_curve.y.iter().any(|&u| !(u > 0.0)) || !self.ocv_curve.is_nondecreasing() {
            return Err(Error::Param("OCV must be positive and nondecreasing in SOC".into()));
        }
        if self.r_discharge_curve.y.iter().chain(&self.r_charge_curve.y).any(|&r| !(r > 0.0)) {
            return Err(Error::Param("resistances must be positive".into()));
        }
        if !(self.p_charge_min < 0.0 && self.p_discharge_max > 0.0) {
            return Err(Error::Param("need p_charge_min < 0 < p_discharge_max".into()));
        }
        // Worst case for the discharge limit is the lowest OCV with the
        // highest resistance inside the window.
        let mut s = self.soc_floor;
        while s <= self.soc_ceiling {
            let u = self.ocv_curve.eval_clamped(s);
            let r = self.r_discharge_curve.eval_clamped(s);
            if u * u - 4.0 * r * self.p_discharge_max < 0.0 {
                return Err(Error::Param(format!(
                    "p_discharge_max {} W exceeds the battery's maximum power at SOC {s:.3}",
                    self.p_discharge_max
                )));
            }
            s += 0.01;
        }
        Ok(())
    }

    pub fn ocv(&self, soc: f64) -> f64 {
        self.ocv_curve.eval_clamped(soc)
    }

    /// Internal resistance for the current direction implied by `p_batt`.
    pub fn resistance(&self, soc: f64, p_batt: f64) -> f64 {
        if p_batt < 0.0 {
            self.r_charge_curve.eval_clamped(soc)
        } else {
            self.r_discharge_curve.eval_clamped(soc)
        }
    }

    /// Coulomb capacity, A·s.
    pub fn capacity_coulombs(&self) -> f64 {
        3600.0 * self.capacity
    }

    pub fn state(&self, soc: f64, p_batt: f64) -> Result<BatteryState> {
        let current = battery_current(self, soc, p_batt)?;
        let r = self.resistance(soc, p_batt);
        Ok(BatteryState {
            soc,
            terminal_voltage: self.ocv(soc) - r * current,
            current,
        })
    }
}

/// Pack current for a requested terminal power.
///
/// Uses the rationalised root `2P / (U + sqrt(U² − 4RP))`, algebraically equal
/// to `(U − sqrt(U² − 4RP)) / 2R` without the cancellation at small `P`.
pub fn battery_current(model: &BatteryModel, soc: f64, p_batt: f64) -> Result<f64> {
    current_from(model.ocv(soc), model.resistance(soc, p_batt), p_batt).ok_or_else(|| {
        let (u, r) = (model.ocv(soc), model.resistance(soc, p_batt));
        Error::InfeasiblePower {
            p_batt,
            soc,
            discriminant: u * u - 4.0 * r * p_batt,
        }
    })
}

pub(crate) fn current_from(u_ocv: f64, r: f64, p_batt: f64) -> Option<f64> {
    let disc = u_ocv * u_ocv - 4.0 * r * p_batt;
    if !(disc >= 0.0) {
        return None;
    }
    Some(2.0 * p_batt / (u_ocv + disc.sqrt()))
}

/// Coulomb counting over one step, clamped to the configured window.
pub fn soc_step(model: &BatteryModel, soc: f64, current: f64, dt: f64) -> SocStep {
    clamp_soc(model, soc - current * dt / model.capacity_coulombs())
}

pub(crate) fn clamp_soc(model: &BatteryModel, soc: f64) -> SocStep {
    if soc < model.soc_floor {
        SocStep {
            soc: model.soc_floor,
            clamped: Some(ClampSide::Floor),
        }
    } else if soc > model.soc_ceiling {
        SocStep {
            soc: model.soc_ceiling,
            clamped: Some(ClampSide::Ceiling),
        }
    } else {
        SocStep { soc, clamped: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid() {
        let b = BatteryModel::default();
        b.validate().unwrap();
        assert!((b.ocv(0.1) - 320.0).abs() < 1e-12);
        assert!((b.ocv(0.9) - 400.0).abs() < 1e-12);
        assert!(b.resistance(0.5, -1.0) < b.resistance(0.5, 1.0));
    }

    #[test]
    fn over_limit_discharge_is_rejected() {
        let b = BatteryModel {
            p_discharge_max: 60_000.0,
            ..Default::default()
        };
        assert!(b.validate().is_err());
    }

    #[test]
    fn clamp_is_reported() {
        let b = BatteryModel::default();
        let s = soc_step(&b, 0.1, 40.0, 10.0);
        assert_eq!(s.clamped, Some(ClampSide::Floor));
        assert_eq!(s.soc, 0.1);
    }
}
