use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axle {
    Front,
    Rear,
}

/// Efficiency grid over |torque| × speed. Negative torques look up their
/// magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorMap {
    pub axle: Axle,
    /// Nm, strictly increasing, starting at 0
    pub torques: Vec<f64>,
    /// rpm, strictly increasing
    pub speeds: Vec<f64>,
    /// Row-major: `efficiency[i * speeds.len() + j]` is η(torques[i], speeds[j]).
    pub efficiency: Vec<f64>,
    /// Motor revolutions per wheel revolution.
    pub gear_ratio: f64,
}

impl MotorMap {
    /// Paraboloid map peaking at 0.95 in the middle of the operating range.
    pub fn synthetic(axle: Axle, torque_max: f64, speed_max: f64) -> Self {
        let nt = 21;
        let ns = 21;
        let torques: Vec<f64> = (0..nt).map(|i| torque_max * i as f64 / (nt - 1) as f64).collect();
        let speeds: Vec<f64> = (0..ns).map(|j| speed_max * j as f64 / (ns - 1) as f64).collect();
        let mut efficiency = Vec::with_capacity(nt * ns);
        for &t in &torques {
            for &n in &speeds {
                let a = t / torque_max - 0.5;
                let b = n / speed_max - 0.5;
                efficiency.push(0.95 - 0.3 * a * a - 0.3 * b * b);
            }
        }
        Self {
            axle,
            torques,
            speeds,
            efficiency,
            gear_ratio: 9.0,
        }
    }

    pub fn front_default() -> Self {
        Self::synthetic(Axle::Front, 137.0, 10_000.0)
    }

    pub fn rear_default() -> Self {
        Self::synthetic(Axle::Rear, 195.0, 10_000.0)
    }

    pub fn torque_max(&self) -> f64 {
        self.torques[self.torques.len() - 1]
    }

    pub fn speed_max(&self) -> f64 {
        self.speeds[self.speeds.len() - 1]
    }

    pub fn validate(&self) -> Result<()> {
        let inc = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !inc(&self.torques) || !inc(&self.speeds) {
            return Err(Error::Param("motor grid axes must be strictly increasing with >= 2 nodes".into()));
        }
        if self.torques[0] != 0.0 {
            return Err(Error::Param("motor torque axis must start at 0 Nm".into()));
        }
        if self.efficiency.len() != self.torques.len() * self.speeds.len() {
            return Err(Error::Shape("motor efficiency grid size does not match its axes".into()));
        }
        if self.efficiency.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Param("motor efficiency must lie in (0, 1)".into()));
        }
        if !(self.gear_ratio > 0.0) {
            return Err(Error::Param("gear ratio must be positive".into()));
        }
        Ok(())
    }

    fn bilinear(&self, t: f64, n: f64) -> f64 {
        let cell = |axis: &[f64], x: f64| {
            let i = axis.partition_point(|&v| v <= x).clamp(1, axis.len() - 1) - 1;
            (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
        };
        let (i, u) = cell(&self.torques, t);
        let (j, w) = cell(&self.speeds, n);
        let ns = self.speeds.len();
        let e = |a: usize, b: usize| self.efficiency[a * ns + b];
        (1.0 - u) * (1.0 - w) * e(i, j) + u * (1.0 - w) * e(i + 1, j) + (1.0 - u) * w * e(i, j + 1)
            + u * w * e(i + 1, j + 1)
    }

    /// Saturating lookup used inside the plant.
    pub fn efficiency_clamped(&self, torque: f64, speed: f64) -> f64 {
        self.bilinear(
            torque.abs().min(self.torque_max()),
            speed.clamp(self.speeds[0], self.speed_max()),
        )
    }
}

/// Bilinear efficiency lookup, symmetric in torque sign.
pub fn motor_efficiency(map: &MotorMap, torque: f64, speed: f64) -> Result<f64> {
    let t = torque.abs();
    if !(t <= map.torque_max()) {
        return Err(Error::range("motor torque", torque, -map.torque_max(), map.torque_max()));
    }
    if !(speed >= map.speeds[0] && speed <= map.speed_max()) {
        return Err(Error::range("motor speed", speed, map.speeds[0], map.speed_max()));
    }
    Ok(map.bilinear(t, speed))
}
