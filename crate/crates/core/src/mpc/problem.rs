use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the SOC deviation enters the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateCost {
    /// q2·(x − x_ref), as the cost is usually written.
    #[default]
    Linear,
    /// q2·(x − x_ref)², for sensitivity studies.
    Squared,
}

/// Coefficients of the equivalent-hydrogen observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydrogenCoefficients {
    /// Fuel-cell hydrogen per joule, g/J.
    pub c_h2: f64,
    /// Equivalence factor S.
    pub s: f64,
    /// Lower heating value, J/kg.
    pub lhv: f64,
}

impl HydrogenCoefficients {
    /// S/LHV expressed in g/J.
    pub fn battery_g_per_j(&self) -> f64 {
        1000.0 * self.s / self.lhv
    }

    /// Equivalent hydrogen rate, g/s.
    pub fn rate(&self, p_fc: f64, p_batt: f64) -> f64 {
        p_fc * self.c_h2 + p_batt * self.battery_g_per_j()
    }
}

/// Operating parameters held constant across the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub u_batt: f64,
    pub r_batt: f64,
    pub p_fc: f64,
}

/// One receding-horizon instance. Controls are split ratios
/// u = P_batt / P_load, so P_fc = P_load·(1 − u).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonProblem {
    pub soc0: f64,
    /// Disturbance sequence, W, one per step; all strictly positive.
    pub p_load: Vec<f64>,
    pub z: OperatingPoint,
    pub dt: f64,
    pub k: Vec<f64>,
    pub q1: f64,
    pub q2: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub state_cost: StateCost,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub p_batt_min: f64,
    pub p_batt_max: f64,
    pub p_fc_min: f64,
    pub p_fc_max: f64,
    /// Per-step change limits on P_fc, W.
    pub dp_fc_min: f64,
    pub dp_fc_max: f64,
    /// Fuel-cell power applied on the step before the horizon, W.
    pub p_fc_prev: f64,
    /// Constraint pair: m_i·u_i + n_i ≥ 0.
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub hydrogen: HydrogenCoefficients,
}

impl HorizonProblem {
    pub fn horizon(&self) -> usize {
        self.p_load.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.horizon();
        if n == 0 {
            return Err(Error::Param("horizon must have at least one step".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Param("dt must be positive".into()));
        }
        for (name, len) in [
            ("k", self.k.len()),
            ("u_min", self.u_min.len()),
            ("u_max", self.u_max.len()),
            ("m", self.m.len()),
            ("n", self.n.len()),
        ] {
            if len != n {
                return Err(Error::Shape(format!("{name} has length {len}, horizon is {n}")));
            }
        }
        if self.p_load.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Param("p_load must be finite and strictly positive".into()));
        }
        let ordered = self.u_min.iter().zip(&self.u_max).all(|(a, b)| a <= b)
            && self.p_batt_min <= self.p_batt_max
            && self.p_fc_min <= self.p_fc_max
            && self.dp_fc_min <= self.dp_fc_max;
        if !ordered {
            return Err(Error::Param("bound pairs must be ordered".into()));
        }
        Ok(())
    }

    /// Per-step control boxes combining every single-step constraint.
    pub fn step_boxes(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        (0..self.horizon())
            .map(|i| {
                let (lo, hi) = self.step_box(i);
                if lo <= hi {
                    Ok((lo, hi))
                } else {
                    Err(Error::Infeasible(format!("step {i}: empty control box [{lo}, {hi}]")))
                }
            })
            .collect()
    }

    /// Control box of one step; empty when lo > hi.
    pub(crate) fn step_box(&self, i: usize) -> (f64, f64) {
        let p = self.p_load[i];
        let mut lo = self.u_min[i].max(self.p_batt_min / p).max(1.0 - self.p_fc_max / p);
        let mut hi = self.u_max[i].min(self.p_batt_max / p).min(1.0 - self.p_fc_min / p);
        let (m, nn) = (self.m[i], self.n[i]);
        if m > 0.0 {
            lo = lo.max(-nn / m);
        } else if m < 0.0 {
            hi = hi.min(-nn / m);
        } else if nn < 0.0 {
            hi = f64::NEG_INFINITY;
        }
        (lo, hi)
    }

    /// Checks the rate chain by forward interval propagation in P_fc.
    pub fn check_feasible(&self) -> Result<Vec<(f64, f64)>> {
        let boxes = self.step_boxes()?;
        let mut lo = self.p_fc_prev;
        let mut hi = self.p_fc_prev;
        for (i, &(ulo, uhi)) in boxes.iter().enumerate() {
            let p = self.p_load[i];
            let (flo, fhi) = (p * (1.0 - uhi), p * (1.0 - ulo));
            lo = (lo + self.dp_fc_min).max(flo);
            hi = (hi + self.dp_fc_max).min(fhi);
            if lo > hi + 1e-9 {
                return Err(Error::Infeasible(format!(
                    "step {i}: fuel-cell rate limits cannot reach [{flo:.1}, {fhi:.1}] W"
                )));
            }
        }
        Ok(boxes)
    }

    pub fn p_batt(&self, i: usize, u: f64) -> f64 {
        u * self.p_load[i]
    }

    pub fn p_fc(&self, i: usize, u: f64) -> f64 {
        self.p_load[i] - u * self.p_load[i]
    }

    /// Largest violation of any constraint, in the constraint's own units
    /// relative to its scale.
    pub fn max_violation(&self, u: &[f64]) -> f64 {
        let boxes = match self.step_boxes() {
            Ok(b) => b,
            Err(_) => return f64::INFINITY,
        };
        let mut worst: f64 = 0.0;
        let mut prev = self.p_fc_prev;
        for (i, &ui) in u.iter().enumerate() {
            let (lo, hi) = boxes[i];
            worst = worst.max(lo - ui).max(ui - hi);
            let fc = self.p_fc(i, ui);
            let d = fc - prev;
            let scale = self.p_load[i].max(1.0);
            worst = worst.max((self.dp_fc_min - d) / scale).max((d - self.dp_fc_max) / scale);
            prev = fc;
        }
        worst
    }
}

/// Σ k_i·[q1·(y_i − y_ref)² + q2·cost(x_i − x_ref)].
pub fn objective(problem: &HorizonProblem, soc_traj: &[f64], y_traj: &[f64]) -> f64 {
    let mut j = 0.0;
    for i in 0..soc_traj.len() {
        let dy = y_traj[i] - problem.y_ref;
        let dx = soc_traj[i] - problem.x_ref;
        let state = match problem.state_cost {
            StateCost::Linear => dx,
            StateCost::Squared => dx * dx,
        };
        j += problem.k[i] * (problem.q1 * dy * dy + problem.q2 * state);
    }
    j
}
