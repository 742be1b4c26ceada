use serde::{Deserialize, Serialize};

use super::battery::{clamp_soc, current_from, BatteryModel, ClampSide};
use super::fuel_cell::{fc_hydrogen_rate, FuelCellModel};
use super::motor::MotorMap;
use super::{demand_power, split_axle_power, tractive_force, VehicleParams};
use crate::error::{Error, Result};

/// The complete powertrain with its maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub vehicle: VehicleParams,
    pub fuel_cell: FuelCellModel,
    pub battery: BatteryModel,
    pub front_motor: MotorMap,
    pub rear_motor: MotorMap,
}

impl Default for Plant {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            fuel_cell: FuelCellModel::default(),
            battery: BatteryModel::default(),
            front_motor: MotorMap::front_default(),
            rear_motor: MotorMap::rear_default(),
        }
    }
}

/// Result of integrating the battery over one step at constant power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryStep {
    pub soc_next: f64,
    pub clamped: Option<ClampSide>,
    /// Current at the start of the step, A.
    pub current: f64,
    /// Resistance used at the start of the step, Ω.
    pub resistance: f64,
    /// Terminal voltage at the start of the step, V.
    pub terminal_voltage: f64,
}

impl Plant {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.fuel_cell.validate()?;
        self.battery.validate()?;
        self.front_motor.validate()?;
        self.rear_motor.validate()
    }

    /// Combined efficiency of both axle motors at a wheel power.
    ///
    /// Motoring combines the axles harmonically (total input over total
    /// output), regenerating arithmetically (total output over total input).
    pub fn motor_efficiency_at(&self, v: f64, p_traction: f64) -> f64 {
        let (pf, pr) = split_axle_power(p_traction, &self.vehicle);
        let wheel_rate = v / self.vehicle.tire_radius;
        let eff = |map: &MotorMap, p: f64| {
            let omega = wheel_rate * map.gear_ratio;
            let rpm = omega * 60.0 / std::f64::consts::TAU;
            let torque = if omega > 1e-9 { p / omega } else { 0.0 };
            map.efficiency_clamped(torque, rpm)
        };
        let (ef, er) = (eff(&self.front_motor, pf), eff(&self.rear_motor, pr));
        if p_traction > 0.0 {
            p_traction / (pf / ef + pr / er)
        } else if p_traction < 0.0 {
            (pf * ef + pr * er) / p_traction
        } else {
            self.vehicle.front_split * ef + self.vehicle.rear_split * er
        }
    }

    /// Bus-side demand power for a velocity and acceleration, W.
    pub fn load_power(&self, v: f64, accel: f64) -> f64 {
        let p_traction = tractive_force(v, accel, &self.vehicle) * v;
        demand_power(v, accel, &self.vehicle, self.motor_efficiency_at(v, p_traction))
    }

    pub fn hydrogen_rate(&self, p_fc: f64) -> Result<f64> {
        fc_hydrogen_rate(&self.fuel_cell, p_fc)
    }

    /// Advances SOC over `dt` at constant battery power with the trapezoidal
    /// rule on the current.
    pub fn battery_step(&self, soc: f64, p_batt: f64, dt: f64) -> Result<BatteryStep> {
        let b = &self.battery;
        let u0 = b.ocv(soc);
        let r0 = b.resistance(soc, p_batt);
        let i0 = current_from(u0, r0, p_batt).ok_or(Error::InfeasiblePower {
            p_batt,
            soc,
            discriminant: u0 * u0 - 4.0 * r0 * p_batt,
        })?;
        let cap = b.capacity_coulombs();
        let soc_pred = soc - i0 * dt / cap;
        let i1 = current_from(b.ocv(soc_pred), b.resistance(soc_pred, p_batt), p_batt).unwrap_or(i0);
        let s = clamp_soc(b, soc - 0.5 * (i0 + i1) * dt / cap);
        Ok(BatteryStep {
            soc_next: s.soc,
            clamped: s.clamped,
            current: i0,
            resistance: r0,
            terminal_voltage: u0 - r0 * i0,
        })
    }
}
