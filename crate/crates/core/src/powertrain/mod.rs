//! Plant model: longitudinal dynamics, fuel-cell system, battery equivalent
//! circuit and the two axle motors.

mod battery;
mod curve;
mod fuel_cell;
mod io;
mod motor;
mod plant;

pub use battery::{battery_current, soc_step, BatteryModel, BatteryState, ClampSide, SocStep};
pub use curve::Curve;
pub use fuel_cell::{fc_hydrogen_rate, FuelCellModel};
pub use io::{load_curve_csv, load_motor_grid_csv, write_curve_csv, MapFiles, PlantConfig};
pub use motor::{motor_efficiency, Axle, MotorMap};
pub use plant::Plant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// m/s²
    pub gravity: f64,
    pub rolling_coeff: f64,
    pub drag_coeff: f64,
    /// m²
    pub frontal_area: f64,
    /// kg/m³
    pub air_density: f64,
    /// δ, rotating-mass factor.
    pub rotating_mass_factor: f64,
    /// m
    pub tire_radius: f64,
    pub front_split: f64,
    pub rear_split: f64,
    pub dcac_efficiency: f64,
    pub dcdc_efficiency: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1860.0,
            gravity: 9.81,
            rolling_coeff: 0.015,
            drag_coeff: 0.3,
            frontal_area: 2.0,
            air_density: 1.18,
            rotating_mass_factor: 1.05,
            tire_radius: 0.35,
            front_split: 0.6,
            rear_split: 0.4,
            dcac_efficiency: 0.95,
            dcdc_efficiency: 0.8775,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("rolling_coeff", self.rolling_coeff),
            ("drag_coeff", self.drag_coeff),
            ("frontal_area", self.frontal_area),
            ("air_density", self.air_density),
            ("rotating_mass_factor", self.rotating_mass_factor),
            ("tire_radius", self.tire_radius),
            ("front_split", self.front_split),
            ("rear_split", self.rear_split),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("{name} must be positive, got {v}")));
            }
        }
        if ((self.front_split + self.rear_split) - 1.0).abs() > 1e-12 {
            return Err(Error::Param("front_split + rear_split must equal 1".into()));
        }
        for (name, v) in [("dcac_efficiency", self.dcac_efficiency), ("dcdc_efficiency", self.dcdc_efficiency)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Param(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Longitudinal force at the wheels, N. Drag includes air density.
pub fn tractive_force(v: f64, accel: f64, p: &VehicleParams) -> f64 {
    p.mass * p.gravity * p.rolling_coeff
        + 0.5 * p.air_density * p.drag_coeff * p.frontal_area * v * v
        + p.rotating_mass_factor * p.mass * accel
}

/// Electrical power drawn from the DC bus, W. Negative when regenerating.
pub fn demand_power(v: f64, accel: f64, p: &VehicleParams, motor_eff: f64) -> f64 {
    bus_power(tractive_force(v, accel, p) * v, p.dcac_efficiency * motor_eff)
}

/// Converts wheel power to bus power through a chain efficiency.
pub(crate) fn bus_power(p_traction: f64, eff: f64) -> f64 {
    if p_traction >= 0.0 {
        p_traction / eff
    } else {
        p_traction * eff
    }
}

/// Fixed front/rear distribution. The rear share is the remainder so the sum
/// is exact.
pub fn split_axle_power(p_traction: f64, p: &VehicleParams) -> (f64, f64) {
    let front = p.front_split * p_traction;
    (front, p_traction - front)
}
