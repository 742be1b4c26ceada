use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::cascade::{train_cascade, CascadeConfig, CascadeForestModel};
use crate::error::{Error, Result};
use crate::powertrain::Plant;

/// Last `len` speeds at 1 s spacing and their backward differences, oldest
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct LagWindow {
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl LagWindow {
    /// Builds a window from 1 s speed history (most recent last). Missing
    /// history is padded with the oldest speed.
    pub fn from_history(history: &[f64], len: usize) -> Result<Self> {
        let first = *history.first().ok_or_else(|| Error::Empty("speed history".into()))?;
        let mut ext: Vec<f64> = vec![first; (len + 1).saturating_sub(history.len())];
        ext.extend_from_slice(&history[history.len().saturating_sub(len + 1)..]);
        let v = ext[1..].to_vec();
        let a = ext.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { v, a })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn current(&self) -> f64 {
        *self.v.last().unwrap_or(&0.0)
    }

    /// v ⊕ a
    pub fn features(&self) -> Vec<f64> {
        self.v.iter().chain(&self.a).copied().collect()
    }

    /// Drops the oldest entry and appends a new speed.
    pub fn push(&mut self, v_next: f64) {
        let a_next = v_next - self.current();
        self.v.remove(0);
        self.a.remove(0);
        self.v.push(v_next);
        self.a.push(a_next);
    }
}

/// One 1 s-ahead prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStep {
    /// m/s
    pub v_next: f64,
    /// m/s²
    pub a_next: f64,
    /// The raw prediction was negative and has been clamped to zero.
    pub clamped: bool,
}

impl OneStep {
    fn from_raw(v_now: f64, raw: f64) -> Self {
        let clamped = raw < 0.0;
        let v_next = raw.max(0.0);
        Self {
            v_next,
            a_next: v_next - v_now,
            clamped,
        }
    }
}

/// Anything that predicts the speed one second ahead.
pub trait SpeedPredictor: Send + Sync {
    fn name(&self) -> &str;
    /// Number of past speeds the predictor looks at.
    fn lags(&self) -> usize;
    fn predict_one_step(&self, window: &LagWindow) -> Result<OneStep>;
}

/// Repeats the last observed speed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PersistencePredictor;

impl SpeedPredictor for PersistencePredictor {
    fn name(&self) -> &str {
        "persistence"
    }

    fn lags(&self) -> usize {
        1
    }

    fn predict_one_step(&self, window: &LagWindow) -> Result<OneStep> {
        Ok(OneStep::from_raw(window.current(), window.current()))
    }
}

/// Cascade forest predicting the 1 s speed change from a lag window of
/// m/2 speeds and m/2 accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepForestPredictor {
    pub model: CascadeForestModel,
}

impl DeepForestPredictor {
    pub fn new(model: CascadeForestModel) -> Result<Self> {
        if model.feature_dim() % 2 != 0 {
            return Err(Error::Param(format!(
                "feature_dim {} must be even (speeds plus accelerations)",
                model.feature_dim()
            )));
        }
        Ok(Self { model })
    }
}

impl SpeedPredictor for DeepForestPredictor {
    fn name(&self) -> &str {
        "deep_forest"
    }

    fn lags(&self) -> usize {
        self.model.feature_dim() / 2
    }

    fn predict_one_step(&self, window: &LagWindow) -> Result<OneStep> {
        let dv = self.model.predict_raw(&window.features())?;
        Ok(OneStep::from_raw(window.current(), window.current() + dv))
    }
}

/// Caches another predictor's answers by lag window. Predictions depend on
/// the window alone, so runs over the same cycle can share them.
pub struct MemoPredictor<'a> {
    inner: &'a dyn SpeedPredictor,
    cache: Mutex<HashMap<Vec<u64>, OneStep>>,
}

impl<'a> MemoPredictor<'a> {
    pub fn new(inner: &'a dyn SpeedPredictor) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl SpeedPredictor for MemoPredictor<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn lags(&self) -> usize {
        self.inner.lags()
    }

    fn predict_one_step(&self, window: &LagWindow) -> Result<OneStep> {
        let key: Vec<u64> = window.v.iter().chain(&window.a).map(|x| x.to_bits()).collect();
        if let Some(s) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(*s);
        }
        let s = self.inner.predict_one_step(window)?;
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, s);
        Ok(s)
    }
}

/// Lag matrix and 1 s speed-change targets from a 1 s speed series.
pub fn lag_training_set(speeds: &[f64], lags: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if speeds.len() < 2 {
        return Err(Error::Empty("speed series needs at least two samples".into()));
    }
    let mut x = Vec::with_capacity((speeds.len() - 1) * 2 * lags);
    let mut y = Vec::with_capacity(speeds.len() - 1);
    for k in 0..speeds.len() - 1 {
        let w = LagWindow::from_history(&speeds[..=k], lags)?;
        x.extend(w.features());
        y.push(speeds[k + 1] - speeds[k]);
    }
    Ok((x, y))
}

/// Trains the deep-forest predictor on one or more 1 s speed series.
pub fn train_velocity_model(series: &[&[f64]], config: &CascadeConfig, seed: u64) -> Result<DeepForestPredictor> {
    config.validate()?;
    if config.mgsp.feature_dim % 2 != 0 {
        return Err(Error::Param("feature_dim must be even".into()));
    }
    let lags = config.mgsp.feature_dim / 2;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for s in series {
        if s.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Param("speeds must be finite and non-negative".into()));
        }
        let (sx, sy) = lag_training_set(s, lags)?;
        x.extend(sx);
        y.extend(sy);
    }
    DeepForestPredictor::new(train_cascade(&x, &y, config, seed)?)
}

/// Recursive 1 s predictions.
pub fn predict_seconds(pred: &dyn SpeedPredictor, window: &LagWindow, seconds: usize) -> Result<Vec<OneStep>> {
    let mut w = window.clone();
    let mut out = Vec::with_capacity(seconds);
    for _ in 0..seconds {
        let s = pred.predict_one_step(&w)?;
        w.push(s.v_next);
        out.push(s);
    }
    Ok(out)
}

/// Speeds at t + i·dt for i = 1..=steps: 1 s recursive predictions linearly
/// interpolated onto the controller grid.
pub fn predict_horizon(pred: &dyn SpeedPredictor, window: &LagWindow, steps: usize, dt: f64) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Param("steps must be at least 1".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Param("dt must be positive".into()));
    }
    let horizon = steps as f64 * dt;
    let seconds = (horizon - 1e-9).ceil().max(1.0) as usize;
    let mut knots = vec![window.current()];
    knots.extend(predict_seconds(pred, window, seconds)?.iter().map(|s| s.v_next));
    Ok((1..=steps)
        .map(|i| {
            let t = i as f64 * dt;
            let j = (t.floor() as usize).min(seconds - 1);
            let frac = t - j as f64;
            knots[j] + (knots[j + 1] - knots[j]) * frac
        })
        .collect())
}

/// Demand power for a speed sequence on a grid of spacing `dt`, using
/// backward differences with `v_prev` before the first element.
pub fn to_demand_power(v_seq: &[f64], v_prev: f64, dt: f64, plant: &Plant) -> Vec<f64> {
    let mut prev = v_prev;
    v_seq
        .iter()
        .map(|&v| {
            let a = (v - prev) / dt;
            prev = v;
            plant.load_power(v, a)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// m/s
    pub mae: f64,
    /// m/s
    pub rmse: f64,
}

pub fn metrics(predicted: &[f64], actual: &[f64]) -> Result<ErrorMetrics> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!("{} predictions for {} observations", predicted.len(), actual.len())));
    }
    if predicted.is_empty() {
        return Err(Error::Empty("metrics need at least one pair".into()));
    }
    let n = predicted.len() as f64;
    let (mut ae, mut se) = (0.0, 0.0);
    for (p, a) in predicted.iter().zip(actual) {
        let e = p - a;
        ae += e.abs();
        se += e * e;
    }
    Ok(ErrorMetrics {
        mae: ae / n,
        rmse: (se / n).sqrt(),
    })
}

/// Error of `seconds`-ahead recursive predictions along a 1 s speed series.
pub fn evaluate_horizon(pred: &dyn SpeedPredictor, speeds: &[f64], seconds: usize) -> Result<ErrorMetrics> {
    if seconds == 0 || speeds.len() <= seconds {
        return Err(Error::Param(format!("series of {} samples too short for {seconds} s", speeds.len())));
    }
    let lags = pred.lags();
    let mut p = Vec::with_capacity(speeds.len() - seconds);
    let mut a = Vec::with_capacity(speeds.len() - seconds);
    for k in 0..speeds.len() - seconds {
        let w = LagWindow::from_history(&speeds[..=k], lags)?;
        let out = predict_seconds(pred, &w, seconds)?;
        p.push(out[seconds - 1].v_next);
        a.push(speeds[k + seconds]);
    }
    metrics(&p, &a)
}
