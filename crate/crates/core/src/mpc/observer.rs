use super::linearize::{linearize, stacked_into, BatteryCoefficients};
use super::problem::HorizonProblem;
use crate::error::{Error, Result};
use crate::observer::SocPolynomial;

/// Predicts the SOC trajectory and hydrogen rate for a candidate control
/// sequence.
pub trait SocObserver: Send + Sync {
    /// `soc[i]` is the SOC after step i; `y[i]` the equivalent hydrogen rate
    /// during it, g/s.
    fn rollout(&self, problem: &HorizonProblem, u: &[f64], soc: &mut [f64], y: &mut [f64]) -> Result<()>;
}

/// Linearized observer: re-linearizes at the candidate trajectory and
/// propagates the stacked form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedObserver {
    pub battery: BatteryCoefficients,
}

impl SocObserver for LinearizedObserver {
    fn rollout(&self, problem: &HorizonProblem, u: &[f64], soc: &mut [f64], y: &mut [f64]) -> Result<()> {
        let model = linearize(&self.battery, &problem.hydrogen, u, &problem.p_load, problem.dt)?;
        soc.fill(problem.soc0);
        stacked_into(&model, &problem.p_load, u, soc);
        for (i, m) in model.steps.iter().enumerate() {
            y[i] = m.e * u[i] + m.f * problem.p_load[i] + m.g;
        }
        Ok(())
    }
}

/// Table-derived observer: one SOC-rate polynomial in P_batt per step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialObserver {
    pub polys: Vec<SocPolynomial>,
}

impl SocObserver for PolynomialObserver {
    fn rollout(&self, problem: &HorizonProblem, u: &[f64], soc: &mut [f64], y: &mut [f64]) -> Result<()> {
        lrmpc_rollout_into(&self.polys, problem, u, soc)?;
        for i in 0..u.len() {
            let pb = problem.p_batt(i, u[i]);
            y[i] = problem.hydrogen.rate(problem.p_fc(i, u[i]), pb);
        }
        Ok(())
    }
}

/// x_{i+1} = x_i + T·poly_i(u_i·P_load_i).
pub fn lrmpc_rollout(polys: &[SocPolynomial], problem: &HorizonProblem, u: &[f64]) -> Result<Vec<f64>> {
    let mut soc = vec![0.0; u.len()];
    lrmpc_rollout_into(polys, problem, u, &mut soc)?;
    Ok(soc)
}

fn lrmpc_rollout_into(polys: &[SocPolynomial], problem: &HorizonProblem, u: &[f64], soc: &mut [f64]) -> Result<()> {
    if polys.len() != u.len() {
        return Err(Error::Shape(format!("{} polynomials for {} controls", polys.len(), u.len())));
    }
    let mut x = problem.soc0;
    for (i, p) in polys.iter().enumerate() {
        let pb = problem.p_batt(i, u[i]);
        let rate = p.eval(pb).ok_or(Error::Domain {
            step: i,
            value: pb,
            lo: p.domain.0,
            hi: p.domain.1,
        })?;
        x += problem.dt * rate;
        soc[i] = x;
    }
    Ok(())
}
