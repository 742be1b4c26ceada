use serde::{Deserialize, Serialize};

use super::problem::{HorizonProblem, HydrogenCoefficients};
use crate::error::{Error, Result};
use crate::powertrain::BatteryModel;

/// Battery quantities frozen at the start of a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryCoefficients {
    pub u_ocv: f64,
    pub r_discharge: f64,
    pub r_charge: f64,
    /// A·s
    pub capacity: f64,
}

impl BatteryCoefficients {
    pub fn at(model: &BatteryModel, soc: f64) -> Self {
        Self {
            u_ocv: model.ocv(soc),
            r_discharge: model.resistance(soc, 1.0),
            r_charge: model.resistance(soc, -1.0),
            capacity: model.capacity_coulombs(),
        }
    }

    pub fn resistance(&self, p_batt: f64) -> f64 {
        if p_batt < 0.0 {
            self.r_charge
        } else {
            self.r_discharge
        }
    }

    fn sqrt_disc(&self, p_batt: f64) -> Option<f64> {
        let d = self.u_ocv * self.u_ocv - 4.0 * self.resistance(p_batt) * p_batt;
        (d > 0.0).then(|| d.sqrt())
    }

    /// Exact SOC rate at a battery power, 1/s.
    pub fn soc_rate(&self, p_batt: f64) -> Result<f64> {
        let s = self.sqrt_disc(p_batt).ok_or_else(|| self.infeasible(p_batt))?;
        Ok(-2.0 * p_batt / (self.capacity * (self.u_ocv + s)))
    }

    fn infeasible(&self, p_batt: f64) -> Error {
        Error::Linearization {
            p_batt,
            discriminant: self.u_ocv * self.u_ocv - 4.0 * self.resistance(p_batt) * p_batt,
        }
    }
}

/// Per-step state and observation coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMatrices {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

/// Jacobians of the SOC rate and hydrogen observation at (P_batt, P_load).
pub fn linearize_step(
    bat: &BatteryCoefficients,
    h2: &HydrogenCoefficients,
    p_batt: f64,
    p_load: f64,
) -> Result<StepMatrices> {
    let s = bat.sqrt_disc(p_batt).ok_or_else(|| bat.infeasible(p_batt))?;
    let u = p_batt / p_load;
    let e_coef = h2.battery_g_per_j() - h2.c_h2;
    Ok(StepMatrices {
        a: 0.0,
        b: -p_load / (bat.capacity * s),
        c: -p_batt / (p_load * bat.capacity * s),
        d: 0.0,
        e: e_coef * p_load,
        f: h2.c_h2 + e_coef * u,
        g: -e_coef * p_batt,
    })
}

/// Linearized model along a control sequence, with the stacked lower
/// triangular forms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub steps: Vec<StepMatrices>,
    pub dt: f64,
    /// n × n, row-major: `b_stack[i*n + j] = B_j·T` for j ≤ i.
    pub b_stack: Vec<f64>,
    pub c_stack: Vec<f64>,
}

impl LinearizedModel {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

/// Linearizes every step at its own (u_i·P_load_i, P_load_i).
pub fn linearize(
    bat: &BatteryCoefficients,
    h2: &HydrogenCoefficients,
    u: &[f64],
    p_load: &[f64],
    dt: f64,
) -> Result<LinearizedModel> {
    let n = u.len();
    let steps = u
        .iter()
        .zip(p_load)
        .map(|(&ui, &v)| linearize_step(bat, h2, ui * v, v))
        .collect::<Result<Vec<_>>>()?;
    let mut b_stack = vec![0.0; n * n];
    let mut c_stack = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            b_stack[i * n + j] = steps[j].b * dt;
            c_stack[i * n + j] = steps[j].c * dt;
        }
    }
    Ok(LinearizedModel {
        steps,
        dt,
        b_stack,
        c_stack,
    })
}

/// Step-by-step propagation x_{i+1} = x_i + (A x_i + B_i u_i + C_i v_i)·T.
pub fn tmpc_rollout(model: &LinearizedModel, problem: &HorizonProblem, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = model.horizon();
    let mut soc = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut x = problem.soc0;
    for i in 0..n {
        let m = &model.steps[i];
        let v = problem.p_load[i];
        y.push(m.d * x + m.e * u[i] + m.f * v + m.g);
        x += (m.a * x + m.b * u[i] + m.c * v) * model.dt;
        soc.push(x);
    }
    (soc, y)
}

/// X = Ã·x0 + B̃·U + C̃·V.
pub fn tmpc_rollout_stacked(model: &LinearizedModel, problem: &HorizonProblem, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = model.horizon();
    let mut soc = vec![problem.soc0; n];
    let mut y = Vec::with_capacity(n);
    stacked_into(model, &problem.p_load, u, &mut soc);
    for i in 0..n {
        let m = &model.steps[i];
        y.push(m.e * u[i] + m.f * problem.p_load[i] + m.g);
    }
    (soc, y)
}

/// Adds B̃U + C̃V onto `soc` (pre-filled with x0).
pub(crate) fn stacked_into(model: &LinearizedModel, v: &[f64], u: &[f64], soc: &mut [f64]) {
    let n = model.horizon();
    for i in 0..n {
        let row_b = &model.b_stack[i * n..i * n + n];
        let row_c = &model.c_stack[i * n..i * n + n];
        let mut acc = 0.0;
        for j in 0..=i {
            acc += row_b[j] * u[j] + row_c[j] * v[j];
        }
        soc[i] += acc;
    }
}

/// One-step SOC change of the linearized observer with U_OCV and R frozen
/// at the start of a segment: (B·u + C·v)·T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenLinearPredictor {
    pub battery: BatteryCoefficients,
    pub dt: f64,
}

impl FrozenLinearPredictor {
    pub fn delta_soc(&self, p_batt: f64, p_load: f64) -> Result<f64> {
        let s = self
            .battery
            .sqrt_disc(p_batt)
            .ok_or_else(|| self.battery.infeasible(p_batt))?;
        if p_load.abs() < 1e-9 {
            // B·u + C·v collapses to −2P/(C·s) for any nonzero v.
            return Ok(-2.0 * p_batt / (self.battery.capacity * s) * self.dt);
        }
        let u = p_batt / p_load;
        let b = -p_load / (self.battery.capacity * s);
        let c = -p_batt / (p_load * self.battery.capacity * s);
        Ok((b * u + c * p_load) * self.dt)
    }
}
