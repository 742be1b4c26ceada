use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linearize::BatteryCoefficients;
use super::observer::{LinearizedObserver, PolynomialObserver};
use super::problem::{HorizonProblem, HydrogenCoefficients, OperatingPoint, StateCost};
use super::solver::{solve, ControlSolution, SolverSettings, SolverStats};
use crate::error::{Error, Result};
use crate::observer::{fit_soc_polynomial, ExplicitTable, SocPolynomial};
use crate::powertrain::Plant;

/// Tuning shared by both receding-horizon controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// s
    pub dt: f64,
    /// Per-step weights k_i; empty means all ones.
    pub weights: Vec<f64>,
    pub q1: f64,
    pub q2: f64,
    pub x_ref: f64,
    /// g/s
    pub y_ref: f64,
    pub state_cost: StateCost,
    /// Half-width of the control band around the warm start.
    pub k1: f64,
    /// Fuel-cell power the warm start aims for, W.
    pub anchor_power: f64,
    /// W per step
    pub dp_fc_min: f64,
    /// W per step
    pub dp_fc_max: f64,
    /// Equivalence factor S.
    pub equivalence_factor: f64,
    /// Overrides the fuel-cell model's linear hydrogen coefficient, g/J.
    pub c_h2: Option<f64>,
    /// Predicted loads are floored here so the split ratio stays defined, W.
    pub min_predicted_load: f64,
    pub solver: SolverSettings,
}

/// Default state weight.
pub const DEFAULT_Q2: f64 = 5000.0;

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            weights: Vec::new(),
            q1: 1.0,
            q2: DEFAULT_Q2,
            x_ref: 0.6,
            y_ref: 0.0,
            state_cost: StateCost::Linear,
            k1: 0.3,
            anchor_power: 25_000.0,
            dp_fc_min: -2000.0,
            dp_fc_max: 2000.0,
            equivalence_factor: 2.0,
            c_h2: None,
            min_predicted_load: 500.0,
            solver: SolverSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Param("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Param("dt must be positive".into()));
        }
        if !self.weights.is_empty() && self.weights.len() != self.horizon {
            return Err(Error::Shape(format!(
                "{} weights for horizon {}",
                self.weights.len(),
                self.horizon
            )));
        }
        if !(self.k1 >= 0.0 && self.dp_fc_min <= self.dp_fc_max && self.min_predicted_load > 0.0) {
            return Err(Error::Param("k1, rate bounds or load floor out of range".into()));
        }
        Ok(())
    }

    pub fn hydrogen(&self, plant: &Plant) -> HydrogenCoefficients {
        HydrogenCoefficients {
            c_h2: self.c_h2.unwrap_or(plant.fuel_cell.c_h2),
            s: self.equivalence_factor,
            lhv: plant.fuel_cell.lhv_h2,
        }
    }

    /// Warm-start split ratio 1 − anchor/P_load.
    pub fn anchor_split(&self, p_load: f64) -> f64 {
        1.0 - self.anchor_power / p_load
    }
}

/// Everything a controller sees on one step.
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    pub soc: f64,
    /// Battery voltage, resistance and fuel-cell power of the previous step.
    pub z: OperatingPoint,
    /// Fuel-cell power applied on the previous step, W.
    pub p_fc_prev: f64,
    /// Demand power; index 0 is the current step's actual load.
    pub p_load_seq: &'a [f64],
    pub plant: &'a Plant,
}

/// Power split chosen for the current step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub p_fc: f64,
    pub p_batt: f64,
    /// Split ratio when the controller works in those units.
    pub u: Option<f64>,
    pub stats: Option<SolverStats>,
}

pub trait EnergyController: Send {
    fn name(&self) -> &str;
    /// Called only while the hybrid mode is active and the load is positive.
    fn allocate(&mut self, ctx: &ControlContext<'_>) -> Result<Decision>;
    /// Forget warm starts and other step-to-step state.
    fn reset(&mut self);
}

/// Builds the horizon problem shared by both MPC variants.
///
/// Bands are u0 ± k1 around the anchor split. A step the fuel-cell rate
/// chain cannot reach inside its band is pinned to the nearest reachable
/// fuel-cell power.
pub fn build_problem(cfg: &MpcConfig, ctx: &ControlContext<'_>) -> Result<HorizonProblem> {
    cfg.validate()?;
    let n = cfg.horizon;
    let seq = ctx.p_load_seq;
    let first = *seq.first().ok_or_else(|| Error::Empty("demand sequence".into()))?;
    if !(first > 0.0) {
        return Err(Error::Param(format!("controller called with non-positive load {first}")));
    }
    let p_load: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                first
            } else {
                let p = seq.get(i).or(seq.last()).copied().unwrap_or(first);
                p.max(cfg.min_predicted_load)
            }
        })
        .collect();
    let plant = ctx.plant;
    let (fc, bat) = (&plant.fuel_cell, &plant.battery);
    let u0: Vec<f64> = p_load.iter().map(|&p| cfg.anchor_split(p)).collect();
    let mut problem = HorizonProblem {
        soc0: ctx.soc,
        z: ctx.z,
        dt: cfg.dt,
        k: if cfg.weights.is_empty() { vec![1.0; n] } else { cfg.weights.clone() },
        q1: cfg.q1,
        q2: cfg.q2,
        x_ref: cfg.x_ref,
        y_ref: cfg.y_ref,
        state_cost: cfg.state_cost,
        u_min: u0.iter().map(|u| u - cfg.k1).collect(),
        u_max: u0.iter().map(|u| u + cfg.k1).collect(),
        p_batt_min: bat.p_charge_min,
        p_batt_max: bat.p_discharge_max,
        p_fc_min: fc.p_min,
        p_fc_max: fc.p_max,
        dp_fc_min: cfg.dp_fc_min,
        dp_fc_max: cfg.dp_fc_max,
        p_fc_prev: ctx.p_fc_prev,
        m: p_load.clone(),
        n: p_load.iter().map(|p| fc.p_max - p).collect(),
        hydrogen: cfg.hydrogen(plant),
        p_load,
    };
    problem.validate()?;
    let (mut lo, mut hi) = (ctx.p_fc_prev, ctx.p_fc_prev);
    for i in 0..n {
        let p = problem.p_load[i];
        let reach = |pr: &HorizonProblem| {
            let (ulo, uhi) = pr.step_box(i);
            let nlo = (lo + pr.dp_fc_min).max(p * (1.0 - uhi));
            let nhi = (hi + pr.dp_fc_max).min(p * (1.0 - ulo));
            (ulo <= uhi && nlo <= nhi + 1e-9).then_some((nlo, nhi))
        };
        let next = match reach(&problem) {
            Some(r) => r,
            None => {
                // Band out of reach: pin the step to the closest reachable
                // fuel-cell power inside the physical limits.
                let band_lo = p * (1.0 - problem.u_max[i]);
                problem.u_min[i] = bat.p_charge_min / p;
                problem.u_max[i] = bat.p_discharge_max / p;
                let (nlo, nhi) = reach(&problem).ok_or_else(|| {
                    Error::Infeasible(format!(
                        "step {i}: load {p:.1} W unreachable from fuel-cell power in [{lo:.1}, {hi:.1}] W"
                    ))
                })?;
                let f = if band_lo > nhi { nhi } else { nlo };
                problem.u_min[i] = 1.0 - f / p;
                problem.u_max[i] = 1.0 - f / p;
                (f, f)
            }
        };
        (lo, hi) = next;
    }
    Ok(problem)
}

fn shifted(prev: &Option<Vec<f64>>, n: usize) -> Option<Vec<f64>> {
    let p = prev.as_ref()?;
    if p.len() != n {
        return None;
    }
    let mut w = p[1..].to_vec();
    w.push(p[n - 1]);
    Some(w)
}

/// Applies the first control, keeping P_fc inside its box and the power
/// balance exact.
fn first_decision(problem: &HorizonProblem, sol: &ControlSolution) -> Decision {
    let p = problem.p_load[0];
    let p_fc = problem.p_fc(0, sol.u[0]).clamp(problem.p_fc_min, problem.p_fc_max);
    Decision {
        p_fc,
        p_batt: p - p_fc,
        u: Some(sol.u[0]),
        stats: Some(sol.stats),
    }
}

/// Receding-horizon controller with the linearized SOC observer.
#[derive(Debug, Clone)]
pub struct TmpcController {
    pub config: MpcConfig,
    previous: Option<Vec<f64>>,
}

impl TmpcController {
    pub fn new(config: MpcConfig) -> Self {
        Self { config, previous: None }
    }

    pub fn solve_step(&self, ctx: &ControlContext<'_>) -> Result<(HorizonProblem, ControlSolution)> {
        let problem = build_problem(&self.config, ctx)?;
        let observer = LinearizedObserver {
            battery: BatteryCoefficients::at(&ctx.plant.battery, ctx.soc),
        };
        let warm = shifted(&self.previous, problem.horizon());
        let sol = solve(&problem, &observer, warm.as_deref(), &self.config.solver)?;
        Ok((problem, sol))
    }
}

impl EnergyController for TmpcController {
    fn name(&self) -> &str {
        "tmpc"
    }

    fn allocate(&mut self, ctx: &ControlContext<'_>) -> Result<Decision> {
        let (problem, sol) = self.solve_step(ctx)?;
        let d = first_decision(&problem, &sol);
        self.previous = Some(sol.u);
        Ok(d)
    }

    fn reset(&mut self) {
        self.previous = None;
    }
}

/// Receding-horizon controller whose observer comes from an explicit ΔSOC
/// table reduced to one polynomial per predicted step.
#[derive(Debug, Clone)]
pub struct LrmpcController {
    pub config: MpcConfig,
    table: Arc<ExplicitTable>,
    cache: HashMap<([usize; 3], usize), SocPolynomial>,
    previous: Option<Vec<f64>>,
}

impl LrmpcController {
    pub fn new(config: MpcConfig, table: Arc<ExplicitTable>) -> Result<Self> {
        table.validate()?;
        if !(table.provenance.dt > 0.0) {
            return Err(Error::Param("table dt must be positive".into()));
        }
        Ok(Self {
            config,
            table,
            cache: HashMap::new(),
            previous: None,
        })
    }

    pub fn table(&self) -> &ExplicitTable {
        &self.table
    }

    /// Per-step SOC-rate polynomials for a horizon problem. The operating
    /// point and loads are clamped into the table's axes before snapping.
    pub fn polynomials(&mut self, problem: &HorizonProblem) -> Result<Vec<SocPolynomial>> {
        let t = &self.table;
        let z = problem.z;
        let slice = t.filter_stage1(t.axes[2].clamp(z.u_batt), t.axes[3].clamp(z.r_batt), t.axes[4].clamp(z.p_fc))?;
        let inv_dt = 1.0 / t.provenance.dt;
        let mut polys = Vec::with_capacity(problem.horizon());
        for &p in &problem.p_load {
            let il = slice.p_load.snap(slice.p_load.clamp(p))?;
            let key = (slice.snapped, il);
            let poly = match self.cache.get(&key) {
                Some(poly) => poly.clone(),
                None => {
                    let curve = slice.row(il);
                    let rates: Vec<f64> = curve.delta_soc.iter().map(|d| d * inv_dt).collect();
                    let poly = fit_soc_polynomial(&curve.p_batt, &rates)?;
                    self.cache.insert(key, poly.clone());
                    poly
                }
            };
            polys.push(poly);
        }
        Ok(polys)
    }

    /// One pass of the online algorithm: problem, filters, fits, solve.
    pub fn alg1_step(&mut self, ctx: &ControlContext<'_>) -> Result<(HorizonProblem, ControlSolution)> {
        let problem = build_problem(&self.config, ctx)?;
        let observer = PolynomialObserver {
            polys: self.polynomials(&problem)?,
        };
        let warm = shifted(&self.previous, problem.horizon());
        let sol = solve(&problem, &observer, warm.as_deref(), &self.config.solver)?;
        Ok((problem, sol))
    }
}

impl EnergyController for LrmpcController {
    fn name(&self) -> &str {
        "lrmpc"
    }

    fn allocate(&mut self, ctx: &ControlContext<'_>) -> Result<Decision> {
        let (problem, sol) = self.alg1_step(ctx)?;
        let d = first_decision(&problem, &sol);
        self.previous = Some(sol.u);
        Ok(d)
    }

    fn reset(&mut self) {
        self.previous = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RulePolicy {
    /// Follow the load with an SOC correction.
    ChargeSustaining,
    /// Run the stack as hard as the rate limit allows.
    MaxFuelCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub policy: RulePolicy,
    pub soc_target: f64,
    /// W per unit SOC error.
    pub soc_gain: f64,
    /// Peak amplitude of the random offset added to the target, W.
    pub dither_amplitude: f64,
    /// Steps each random offset is held for.
    pub dither_hold: usize,
    pub dp_fc_min: f64,
    pub dp_fc_max: f64,
    pub seed: u64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            policy: RulePolicy::ChargeSustaining,
            soc_target: 0.6,
            soc_gain: 200_000.0,
            dither_amplitude: 0.0,
            dither_hold: 40,
            dp_fc_min: -2000.0,
            dp_fc_max: 2000.0,
            seed: 0,
        }
    }
}

/// Rule-based split used as a baseline and to excite the plant when
/// recording observer training data.
#[derive(Debug, Clone)]
pub struct RuleBasedController {
    pub config: RuleConfig,
    rng: ChaCha8Rng,
    offset: f64,
    held: usize,
}

impl RuleBasedController {
    pub fn new(config: RuleConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            config,
            rng,
            offset: 0.0,
            held: 0,
        }
    }

    fn dither(&mut self) -> f64 {
        let c = &self.config;
        if c.dither_amplitude <= 0.0 {
            return 0.0;
        }
        if self.held == 0 {
            self.offset = self.rng.gen_range(-c.dither_amplitude..=c.dither_amplitude);
            self.held = c.dither_hold.max(1);
        }
        self.held -= 1;
        self.offset
    }
}

impl EnergyController for RuleBasedController {
    fn name(&self) -> &str {
        match self.config.policy {
            RulePolicy::ChargeSustaining => "rule_cs",
            RulePolicy::MaxFuelCell => "rule_max_fc",
        }
    }

    fn allocate(&mut self, ctx: &ControlContext<'_>) -> Result<Decision> {
        let p = *ctx.p_load_seq.first().ok_or_else(|| Error::Empty("demand sequence".into()))?;
        let (fc, bat) = (&ctx.plant.fuel_cell, &ctx.plant.battery);
        let target = match self.config.policy {
            RulePolicy::ChargeSustaining => {
                p + self.config.soc_gain * (self.config.soc_target - ctx.soc) + self.dither()
            }
            RulePolicy::MaxFuelCell => fc.p_max,
        };
        let lo = (ctx.p_fc_prev + self.config.dp_fc_min).max(fc.p_min).max(p - bat.p_discharge_max);
        let hi = (ctx.p_fc_prev + self.config.dp_fc_max).min(fc.p_max).min(p - bat.p_charge_min);
        let p_fc = if lo <= hi {
            target.clamp(lo, hi)
        } else {
            // Rate limit and battery window conflict; the battery window wins.
            target.clamp(p - bat.p_discharge_max, p - bat.p_charge_min).clamp(fc.p_min, fc.p_max)
        };
        Ok(Decision {
            p_fc,
            p_batt: p - p_fc,
            u: None,
            stats: None,
        })
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.offset = 0.0;
        self.held = 0;
    }
}
