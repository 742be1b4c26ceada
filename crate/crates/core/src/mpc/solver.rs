use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::observer::SocObserver;
use super::problem::{objective, HorizonProblem};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stop when the projected-gradient step is this small (∞-norm).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Central-difference step in control units.
    pub fd_step: f64,
    /// Length of the nonmonotone line-search memory.
    pub memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 200,
            fd_step: 1e-5,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// s
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    pub u: Vec<f64>,
    pub soc_traj: Vec<f64>,
    pub y_traj: Vec<f64>,
    pub objective: f64,
    pub stats: SolverStats,
}

/// Convex piecewise quadratic a2·x² + a1·x + a0 on consecutive pieces.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    a2: f64,
    a1: f64,
    a0: f64,
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        (self.a2 * x + self.a1) * x + self.a0
    }

    fn argmin(&self) -> f64 {
        if self.a2 > 0.0 {
            (-self.a1 / (2.0 * self.a2)).clamp(self.lo, self.hi)
        } else if self.a1 > 0.0 {
            self.lo
        } else if self.a1 < 0.0 {
            self.hi
        } else {
            0.5 * (self.lo + self.hi)
        }
    }

    /// x ↦ f(x − s)
    fn shifted(&self, s: f64) -> Self {
        Self {
            lo: self.lo + s,
            hi: self.hi + s,
            a2: self.a2,
            a1: self.a1 - 2.0 * self.a2 * s,
            a0: (self.a2 * s - self.a1) * s + self.a0,
        }
    }
}

fn pwq_argmin(f: &[Piece]) -> (f64, f64) {
    f.iter()
        .map(|p| {
            let x = p.argmin();
            (x, p.eval(x))
        })
        .fold((f64::NAN, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

/// g(x) = min over y ∈ [x − b, x − a] of f(y).
fn min_convolve(f: &[Piece], a: f64, b: f64) -> Vec<Piece> {
    let (m, vm) = pwq_argmin(f);
    let mut out = Vec::with_capacity(f.len() + 2);
    for p in f {
        if p.lo < m {
            out.push(Piece { hi: p.hi.min(m), ..*p }.shifted(a));
        }
    }
    out.push(Piece {
        lo: m + a,
        hi: m + b,
        a2: 0.0,
        a1: 0.0,
        a0: vm,
    });
    for p in f {
        if p.hi > m {
            out.push(Piece { lo: p.lo.max(m), ..*p }.shifted(b));
        }
    }
    out
}

fn restrict(f: Vec<Piece>, lo: f64, hi: f64) -> Vec<Piece> {
    f.into_iter()
        .filter(|p| p.hi >= lo && p.lo <= hi)
        .map(|p| Piece {
            lo: p.lo.max(lo),
            hi: p.hi.min(hi),
            ..p
        })
        .collect()
}

/// Feasible set: per-step boxes plus the fuel-cell rate chain.
pub(crate) struct FeasibleSet<'a> {
    problem: &'a HorizonProblem,
    boxes: Vec<(f64, f64)>,
}

impl<'a> FeasibleSet<'a> {
    pub(crate) fn new(problem: &'a HorizonProblem) -> Result<Self> {
        let boxes = problem.check_feasible()?;
        Ok(Self { problem, boxes })
    }

    pub(crate) fn boxes(&self) -> &[(f64, f64)] {
        &self.boxes
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.boxes) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Exact Euclidean projection. In fuel-cell power f_i = P_i·(1 − u_i)
    /// the set is a chain with bounded differences, so the projection is a
    /// dynamic program over convex piecewise quadratics.
    pub(crate) fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut x = z.to_vec();
        self.clamp(&mut x);
        if self.problem.max_violation(&x) <= 0.0 {
            return x;
        }
        let pr = self.problem;
        let (a, b) = (pr.dp_fc_min, pr.dp_fc_max);
        let n = z.len();
        let mut stages: Vec<Vec<Piece>> = Vec::with_capacity(n);
        let mut f = vec![Piece {
            lo: pr.p_fc_prev,
            hi: pr.p_fc_prev,
            a2: 0.0,
            a1: 0.0,
            a0: 0.0,
        }];
        for i in 0..n {
            let p = pr.p_load[i];
            let (ulo, uhi) = self.boxes[i];
            let w = 1.0 / (p * p);
            let g = p * (1.0 - z[i]);
            let mut next = restrict(min_convolve(&f, a, b), p * (1.0 - uhi), p * (1.0 - ulo));
            if next.is_empty() {
                // Rounding at a touching boundary; keep the nearest point.
                let c = min_convolve(&f, a, b);
                let edge = if c[0].lo > p * (1.0 - ulo) { c[0].lo } else { c[c.len() - 1].hi };
                next = vec![Piece { lo: edge, hi: edge, a2: 0.0, a1: 0.0, a0: 0.0 }];
            }
            for piece in &mut next {
                piece.a2 += w;
                piece.a1 -= 2.0 * w * g;
                piece.a0 += w * g * g;
            }
            stages.push(f);
            f = next;
        }
        let mut fc = pwq_argmin(&f).0;
        for i in (0..n).rev() {
            let p = pr.p_load[i];
            x[i] = (1.0 - fc / p).clamp(self.boxes[i].0, self.boxes[i].1);
            if i > 0 {
                let (m, _) = pwq_argmin(&stages[i]);
                fc = m.clamp(fc - b, fc - a);
            }
        }
        x
    }
}

struct Evaluator<'a> {
    problem: &'a HorizonProblem,
    observer: &'a dyn SocObserver,
    soc: Vec<f64>,
    y: Vec<f64>,
    count: usize,
}

impl Evaluator<'_> {
    fn eval(&mut self, u: &[f64]) -> Result<f64> {
        self.count += 1;
        self.observer.rollout(self.problem, u, &mut self.soc, &mut self.y)?;
        Ok(objective(self.problem, &self.soc, &self.y))
    }

    fn grad(&mut self, u: &[f64], boxes: &[(f64, f64)], h: f64, g: &mut [f64]) -> Result<()> {
        let mut w = u.to_vec();
        for j in 0..u.len() {
            let step = h * u[j].abs().max(1.0);
            let up = (u[j] + step).min(boxes[j].1);
            let dn = (u[j] - step).max(boxes[j].0);
            if up - dn <= 0.0 {
                g[j] = 0.0;
                continue;
            }
            w[j] = up;
            let fu = self.eval(&w)?;
            w[j] = dn;
            let fd = self.eval(&w)?;
            w[j] = u[j];
            g[j] = (fu - fd) / (up - dn);
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Spectral projected gradient with a nonmonotone line search and
/// central-difference gradients. Returns the best iterate found.
pub fn solve(
    problem: &HorizonProblem,
    observer: &dyn SocObserver,
    warm_start: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<ControlSolution> {
    let started = Instant::now();
    let set = FeasibleSet::new(problem)?;
    let n = problem.horizon();
    let boxes = set.boxes().to_vec();
    let start: Vec<f64> = match warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        _ => boxes.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect(),
    };
    let mut ev = Evaluator {
        problem,
        observer,
        soc: vec![0.0; n],
        y: vec![0.0; n],
        count: 0,
    };

    let mut x = set.project(&start);
    let mut f = ev.eval(&x)?;
    let mut g = vec![0.0; n];
    ev.grad(&x, &boxes, settings.fd_step, &mut g)?;
    let mut best = (x.clone(), f);
    let mut history: VecDeque<f64> = VecDeque::from([f]);

    let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
    let pg0 = inf_norm_diff(&set.project(&trial), &x);
    let mut alpha = if pg0 > 0.0 { (1.0 / pg0).clamp(1e-10, 1e10) } else { 1.0 };

    let mut converged = false;
    let mut iterations = 0;
    let mut gn = vec![0.0; n];
    let mut trial = vec![0.0; n];
    while iterations < settings.max_iterations {
        for k in 0..n {
            trial[k] = x[k] - g[k];
        }
        if inf_norm_diff(&set.project(&trial), &x) <= settings.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        for k in 0..n {
            trial[k] = x[k] - alpha * g[k];
        }
        let d: Vec<f64> = set.project(&trial).iter().zip(&x).map(|(p, xi)| p - xi).collect();
        let gtd = dot(&g, &d);
        if !(gtd < 0.0) {
            break;
        }
        let f_max = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let mut xn = vec![0.0; n];
        let fnew = loop {
            for k in 0..n {
                xn[k] = x[k] + lambda * d[k];
            }
            let ft = ev.eval(&xn)?;
            if ft <= f_max + 1e-4 * lambda * gtd {
                break Some(ft);
            }
            let denom = ft - f - lambda * gtd;
            let lt = if denom > 0.0 { -0.5 * lambda * lambda * gtd / denom } else { 0.5 * lambda };
            lambda = if lt >= 0.1 * lambda && lt <= 0.9 * lambda { lt } else { 0.5 * lambda };
            if lambda < 1e-12 {
                break None;
            }
        };
        let Some(fnew) = fnew else { break };
        ev.grad(&xn, &boxes, settings.fd_step, &mut gn)?;
        let mut sts = 0.0;
        let mut sty = 0.0;
        for k in 0..n {
            let s = xn[k] - x[k];
            sts += s * s;
            sty += s * (gn[k] - g[k]);
        }
        alpha = if sty > 0.0 { (sts / sty).clamp(1e-10, 1e10) } else { 1e10 };
        x = xn;
        f = fnew;
        std::mem::swap(&mut g, &mut gn);
        history.push_back(f);
        if history.len() > settings.memory.max(1) {
            history.pop_front();
        }
        if f < best.1 {
            best = (x.clone(), f);
        }
    }

    let (u, objective_value) = best;
    let mut soc = vec![0.0; n];
    let mut y = vec![0.0; n];
    observer.rollout(problem, &u, &mut soc, &mut y)?;
    Ok(ControlSolution {
        u,
        soc_traj: soc,
        y_traj: y,
        objective: objective_value,
        stats: SolverStats {
            iterations,
            evaluations: ev.count,
            converged,
            wall_time: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::problem::{HydrogenCoefficients, OperatingPoint, StateCost};

    fn problem(n: usize) -> HorizonProblem {
        let p_load = vec![20_000.0; n];
        HorizonProblem {
            soc0: 0.55,
            p_load: p_load.clone(),
            z: OperatingPoint {
                u_batt: 360.0,
                r_batt: 0.5,
                p_fc: 20_000.0,
            },
            dt: 0.05,
            k: vec![1.0; n],
            q1: 1.0,
            q2: 0.0,
            x_ref: 0.6,
            y_ref: 0.0,
            state_cost: StateCost::Linear,
            u_min: vec![-1.0; n],
            u_max: vec![1.0; n],
            p_batt_min: -35_000.0,
            p_batt_max: 40_000.0,
            p_fc_min: 0.0,
            p_fc_max: 61_560.0,
            dp_fc_min: -2000.0,
            dp_fc_max: 2000.0,
            p_fc_prev: 20_000.0,
            m: p_load.clone(),
            n: p_load.iter().map(|p| 61_560.0 - p).collect(),
            hydrogen: HydrogenCoefficients {
                c_h2: 1.5e-5,
                s: 2.0,
                lhv: 1.2e8,
            },
        }
    }

    #[test]
    fn projection_satisfies_rate_chain() {
        let p = problem(4);
        let set = FeasibleSet::new(&p).unwrap();
        let x = set.project(&[1.0, -1.0, 1.0, -1.0]);
        assert!(p.max_violation(&x) <= 1e-9, "{x:?}");
        // A feasible point projects to itself.
        let y = set.project(&[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn infeasible_chain_is_reported() {
        let mut p = problem(2);
        p.p_fc_prev = 0.0;
        p.u_max = vec![-0.9; 2];
        assert!(FeasibleSet::new(&p).is_err());
    }

    #[test]
    fn projection_matches_grid_search() {
        let mut p = problem(2);
        p.p_load = vec![12_000.0, 30_000.0];
        p.m = p.p_load.clone();
        p.n = p.p_load.iter().map(|l| 61_560.0 - l).collect();
        p.p_fc_prev = 15_000.0;
        let set = FeasibleSet::new(&p).unwrap();
        for z in [[0.9, -0.8], [-0.5, 0.7], [0.3, 0.3], [-1.0, -1.0]] {
            let x = set.project(&z);
            assert!(p.max_violation(&x) <= 1e-9);
            let d = |u: &[f64]| (u[0] - z[0]).powi(2) + (u[1] - z[1]).powi(2);
            let mut best = f64::INFINITY;
            let steps = 400;
            for a in 0..=steps {
                for b in 0..=steps {
                    let u = [-1.0 + 2.0 * a as f64 / steps as f64, -1.0 + 2.0 * b as f64 / steps as f64];
                    if p.max_violation(&u) <= 0.0 {
                        best = best.min(d(&u));
                    }
                }
            }
            assert!(d(&x) <= best + 1e-12, "{z:?} -> {x:?}: {} vs {best}", d(&x));
            assert!(d(&x) >= best - 2e-2, "{z:?} -> {x:?}: {} vs {best}", d(&x));
        }
    }
}
