use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cycle::DrivingCycle;
use super::record::{Mode, StepRecord};
use crate::error::{Error, Result};
use crate::mpc::{ControlContext, Decision, EnergyController, OperatingPoint};
use crate::powertrain::Plant;
use crate::velocity::{predict_horizon, to_demand_power, LagWindow, SpeedPredictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// s
    pub dt: f64,
    pub initial_soc: f64,
    /// Hybrid mode engages at or below this SOC.
    pub soc_hev_on: f64,
    /// and releases at or above this one.
    pub soc_hev_off: f64,
    /// Equivalence factor S for the accounting.
    pub equivalence_factor: f64,
    /// Length of the demand sequence handed to the controller.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            initial_soc: 0.6,
            soc_hev_on: 0.55,
            soc_hev_off: 0.60,
            equivalence_factor: 2.0,
            horizon: 20,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Param("dt must be positive".into()));
        }
        if !(0.0 < self.soc_hev_on && self.soc_hev_on < self.soc_hev_off && self.soc_hev_off < 1.0) {
            return Err(Error::Param("need 0 < soc_hev_on < soc_hev_off < 1".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) || self.horizon == 0 {
            return Err(Error::Param("initial_soc must be in [0, 1] and horizon at least 1".into()));
        }
        Ok(())
    }
}

/// Records plus run totals.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub strategy: String,
    pub records: Vec<StepRecord>,
    pub final_soc: f64,
    /// g
    pub h2_fc: f64,
    /// g
    pub h2_equiv: f64,
    /// s
    pub wall_time: f64,
    pub hev_steps: usize,
    /// s, over hybrid steps only.
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
}

/// |P_fc + P_batt − P_load| relative to the load.
pub fn power_balance_residual(r: &StepRecord) -> f64 {
    (r.p_fc + r.p_batt - r.p_load).abs() / r.p_load.abs().max(1.0)
}

/// Hysteresis: engage at or below `on`, release at or above `off`.
pub fn next_hev(hev: bool, soc: f64, config: &SimConfig) -> bool {
    if hev {
        soc < config.soc_hev_off
    } else {
        soc <= config.soc_hev_on
    }
}

/// Runs the closed loop over a cycle. The cycle is resampled onto the `dt`
/// grid; the load on each step uses the backward-difference acceleration.
pub fn run_simulation(
    cycle: &DrivingCycle,
    config: &SimConfig,
    plant: &Plant,
    controller: &mut dyn EnergyController,
    predictor: &dyn SpeedPredictor,
) -> Result<SimOutcome> {
    config.validate()?;
    plant.validate()?;
    let started = Instant::now();
    let cycle = cycle.resample(config.dt)?;
    let dt = config.dt;
    let stride = (1.0 / dt).round().max(1.0) as usize;
    let g_per_j = 1000.0 * config.equivalence_factor / plant.fuel_cell.lhv_h2;
    let bat = &plant.battery;
    controller.reset();

    let mut soc = config.initial_soc;
    let mut hev = next_hev(false, soc, config);
    let mut p_fc_prev = 0.0;
    let st0 = bat.state(soc, 0.0)?;
    let mut z = OperatingPoint {
        u_batt: st0.terminal_voltage,
        r_batt: bat.resistance(soc, 0.0),
        p_fc: 0.0,
    };
    let (mut h2_fc, mut h2_equiv) = (0.0, 0.0);
    let mut records = Vec::with_capacity(cycle.t.len());
    let mut solve_times = Vec::new();
    let mut history = Vec::new();

    for k in 0..cycle.t.len() {
        let (t, v) = (cycle.t[k], cycle.v[k]);
        let v_prev = if k == 0 { v } else { cycle.v[k - 1] };
        let a = (v - v_prev) / dt;
        let p_load = plant.load_power(v, a);
        hev = next_hev(hev, soc, config);
        let dump = |p_fc: f64, p_batt: f64, mode: &str| {
            format!("soc={soc} v={v} a={a} p_load={p_load} p_fc={p_fc} p_batt={p_batt} mode={mode}")
        };
        let step_err = |source: Error, state: String| Error::Step {
            step: k,
            t,
            state,
            source: Box::new(source),
        };

        let mut solve_time = 0.0;
        let (mode, decision) = if p_load <= 0.0 {
            let p_batt = p_load.max(bat.p_charge_min);
            (Mode::Regen, Decision { p_fc: 0.0, p_batt, u: None, stats: None })
        } else if hev {
            history.clear();
            let lags = predictor.lags();
            for j in (0..=lags).rev() {
                if let Some(idx) = k.checked_sub(j * stride) {
                    history.push(cycle.v[idx]);
                }
            }
            let mut seq = vec![p_load];
            if config.horizon > 1 {
                let window = LagWindow::from_history(&history, lags).map_err(|e| step_err(e, dump(0.0, 0.0, "hev")))?;
                let speeds = predict_horizon(predictor, &window, config.horizon - 1, dt)
                    .map_err(|e| step_err(e, dump(0.0, 0.0, "hev")))?;
                seq.extend(to_demand_power(&speeds, v, dt, plant));
            }
            let ctx = ControlContext {
                soc,
                z,
                p_fc_prev,
                p_load_seq: &seq,
                plant,
            };
            let clock = Instant::now();
            let d = controller.allocate(&ctx).map_err(|e| step_err(e, dump(f64::NAN, f64::NAN, "hev")))?;
            solve_time = clock.elapsed().as_secs_f64();
            solve_times.push(solve_time);
            (Mode::Hev, d)
        } else {
            (Mode::Ev, Decision { p_fc: 0.0, p_batt: p_load, u: None, stats: None })
        };
        let (p_fc, p_batt) = (decision.p_fc, decision.p_batt);
        let fc = &plant.fuel_cell;
        if !(p_fc >= fc.p_min && p_fc <= fc.p_max) || !(p_batt >= bat.p_charge_min && p_batt <= bat.p_discharge_max) {
            return Err(step_err(
                Error::Infeasible("power split outside component limits".into()),
                dump(p_fc, p_batt, mode.as_str()),
            ));
        }
        let step = plant
            .battery_step(soc, p_batt, dt)
            .map_err(|e| step_err(e, dump(p_fc, p_batt, mode.as_str())))?;
        let fc_rate = plant.hydrogen_rate(p_fc).map_err(|e| step_err(e, dump(p_fc, p_batt, mode.as_str())))?;
        h2_fc += fc_rate * dt;
        h2_equiv += (fc_rate + p_batt * g_per_j) * dt;
        records.push(StepRecord {
            t,
            v,
            p_load,
            p_fc,
            p_batt,
            soc,
            u_batt: step.terminal_voltage,
            r_batt: step.resistance,
            i_batt: step.current,
            h2_fc_cum: h2_fc,
            h2_equiv_cum: h2_equiv,
            mode,
            solve_time,
            soc_clamped: step.clamped.is_some(),
        });
        soc = step.soc_next;
        p_fc_prev = p_fc;
        z = OperatingPoint {
            u_batt: step.terminal_voltage,
            r_batt: step.resistance,
            p_fc,
        };
    }

    let hev_steps = solve_times.len();
    let mean_solve_time = if hev_steps > 0 { solve_times.iter().sum::<f64>() / hev_steps as f64 } else { 0.0 };
    let max_solve_time = solve_times.iter().cloned().fold(0.0, f64::max);
    Ok(SimOutcome {
        strategy: controller.name().to_string(),
        records,
        final_soc: soc,
        h2_fc,
        h2_equiv,
        wall_time: started.elapsed().as_secs_f64(),
        hev_steps,
        mean_solve_time,
        max_solve_time,
    })
}
