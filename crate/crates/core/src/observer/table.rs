use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regressor::{ObserverRegressor, RegressorSpec};
use super::samples::FEATURE_NAMES;
use crate::container;
use crate::error::{Error, Result};
use crate::powertrain::Plant;

/// Largest grid built unless the caller raises the budget.
pub const DEFAULT_POINT_BUDGET: usize = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub fn linear(name: &str, min: f64, max: f64, points: usize) -> Self {
        Self {
            name: name.to_string(),
            min,
            max,
            points,
            spacing: Spacing::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.points >= 1
            && self.min.is_finite()
            && self.max.is_finite()
            && if self.points == 1 { self.min == self.max } else { self.max > self.min };
        if !ok {
            return Err(Error::Param(format!(
                "axis `{}` must be strictly increasing (min {}, max {}, points {})",
                self.name, self.min, self.max, self.points
            )));
        }
        Ok(())
    }

    pub fn coord(&self, i: usize) -> f64 {
        if self.points == 1 {
            return self.min;
        }
        if i + 1 == self.points {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }

    /// Index of the nearest grid coordinate.
    pub fn snap(&self, value: f64) -> Result<usize> {
        if !(value >= self.min && value <= self.max) {
            return Err(Error::range(self.name.clone(), value, self.min, self.max));
        }
        if self.points == 1 {
            return Ok(0);
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        let i = ((value - self.min) / step).round() as usize;
        Ok(i.min(self.points - 1))
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

/// Five axes in feature order: p_batt, p_load, u_batt, r_batt, p_fc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: [Axis; 5],
}

impl GridSpec {
    pub fn with_counts(plant: &Plant, counts: [usize; 5]) -> Self {
        let b = &plant.battery;
        let fc = &plant.fuel_cell;
        // Terminal voltage spans deep discharge at the lowest OCV to full
        // charge power at the highest.
        let (u_lo, u_hi) = terminal_voltage_span(plant);
        let r_lo = b.r_charge_curve.y.iter().chain(&b.r_discharge_curve.y).cloned().fold(f64::INFINITY, f64::min);
        let r_hi = b.r_charge_curve.y.iter().chain(&b.r_discharge_curve.y).cloned().fold(0.0, f64::max);
        let p_load_max = fc.p_max + b.p_discharge_max;
        Self {
            axes: [
                Axis::linear(FEATURE_NAMES[0], b.p_charge_min, b.p_discharge_max, counts[0]),
                Axis::linear(FEATURE_NAMES[1], 0.0, p_load_max.min(60_000.0), counts[1]),
                Axis::linear(FEATURE_NAMES[2], u_lo, u_hi, counts[2]),
                Axis::linear(FEATURE_NAMES[3], r_lo, r_hi, counts[3]),
                Axis::linear(FEATURE_NAMES[4], fc.p_min, fc.p_max, counts[4]),
            ],
        }
    }

    /// 9 × 15 × 7 × 7 × 9 ≈ 59.5k points.
    pub fn desk(plant: &Plant) -> Self {
        Self::with_counts(plant, [9, 15, 7, 7, 9])
    }

    /// 37 × 33 × 35 × 13 × 7 = 3,888,885 points.
    pub fn full_scale(plant: &Plant) -> Self {
        Self::with_counts(plant, [37, 33, 35, 13, 7])
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }
}

fn terminal_voltage_span(plant: &Plant) -> (f64, f64) {
    let b = &plant.battery;
    let u_lo_ocv = b.ocv(b.soc_floor);
    let u_hi_ocv = b.ocv(b.soc_ceiling);
    let r_d = b.resistance(b.soc_floor, 1.0);
    let r_c = b.resistance(b.soc_ceiling, -1.0);
    let i_d = crate::powertrain::battery_current(b, b.soc_floor, b.p_discharge_max).unwrap_or(u_lo_ocv / (2.0 * r_d));
    let i_c = crate::powertrain::battery_current(b, b.soc_ceiling, b.p_charge_min).unwrap_or(0.0);
    let lo = ((u_lo_ocv - r_d * i_d) / 10.0).floor() * 10.0;
    let hi = ((u_hi_ocv - r_c * i_c) / 10.0).ceil() * 10.0;
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub regressor: String,
    pub spec: Option<RegressorSpec>,
    pub data_digest: String,
    /// Simulation step the ΔSOC values refer to, s.
    pub dt: f64,
}

/// Dense ΔSOC grid, row-major in axis order (the last axis varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitTable {
    pub axes: [Axis; 5],
    pub values: Vec<f64>,
    pub provenance: TableProvenance,
}

/// p_load × p_batt slice at fixed (u_batt, r_batt, p_fc).
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2 {
    pub p_load: Axis,
    pub p_batt: Axis,
    /// `values[l * p_batt.points + b]`
    pub values: Vec<f64>,
    /// Snapped (u_batt, r_batt, p_fc) indices.
    pub snapped: [usize; 3],
}

/// ΔSOC against p_batt at one p_load coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve1 {
    pub p_batt: Vec<f64>,
    pub delta_soc: Vec<f64>,
    pub p_load_index: usize,
}

fn strides(axes: &[Axis; 5]) -> [usize; 5] {
    let mut s = [1usize; 5];
    for k in (0..4).rev() {
        s[k] = s[k + 1] * axes[k + 1].points;
    }
    s
}

/// Evaluates the regressor at every grid node.
pub fn build_explicit_table(
    regressor: &dyn ObserverRegressor,
    grid: &GridSpec,
    provenance: TableProvenance,
    budget_points: usize,
) -> Result<ExplicitTable> {
    for a in &grid.axes {
        a.validate()?;
    }
    let product = grid
        .axes
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.points))
        .unwrap_or(usize::MAX);
    if product > budget_points {
        return Err(Error::Budget {
            product,
            budget: budget_points,
        });
    }
    let axes = grid.axes.clone();
    let coords: Vec<Vec<f64>> = axes.iter().map(Axis::coords).collect();
    let st = strides(&axes);
    let mut values = vec![0.0; product];
    let inner = axes[4].points;
    values.par_chunks_mut(inner).enumerate().for_each(|(row, out)| {
        let base = row * inner;
        let mut f = [0.0; 5];
        for k in 0..4 {
            f[k] = coords[k][(base / st[k]) % axes[k].points];
        }
        for (i4, v) in out.iter_mut().enumerate() {
            f[4] = coords[4][i4];
            *v = regressor.predict(&f);
        }
    });
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Param(format!("regressor produced a non-finite value at grid index {i}")));
    }
    Ok(ExplicitTable {
        axes,
        values,
        provenance,
    })
}

const KIND: &str = "explicit-table";

impl ExplicitTable {
    pub fn flat_index(&self, idx: [usize; 5]) -> usize {
        let st = strides(&self.axes);
        (0..5).map(|k| idx[k] * st[k]).sum()
    }

    pub fn value_at(&self, idx: [usize; 5]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    pub fn point(&self, idx: [usize; 5]) -> [f64; 5] {
        let mut p = [0.0; 5];
        for k in 0..5 {
            p[k] = self.axes[k].coord(idx[k]);
        }
        p
    }

    /// Multi-index of a flat position.
    pub fn unflatten(&self, mut flat: usize) -> [usize; 5] {
        let mut idx = [0; 5];
        for k in (0..5).rev() {
            idx[k] = flat % self.axes[k].points;
            flat /= self.axes[k].points;
        }
        idx
    }

    pub fn validate(&self) -> Result<()> {
        for a in &self.axes {
            a.validate()?;
        }
        let n: usize = self.axes.iter().map(|a| a.points).product();
        if n != self.values.len() {
            return Err(Error::Shape(format!("table has {} values for {n} grid points", self.values.len())));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("table contains non-finite values".into()));
        }
        Ok(())
    }

    /// First filter: snap the operating point and keep the p_load × p_batt
    /// slice.
    pub fn filter_stage1(&self, u_batt: f64, r_batt: f64, p_fc: f64) -> Result<Slice2> {
        let iu = self.axes[2].snap(u_batt)?;
        let ir = self.axes[3].snap(r_batt)?;
        let ifc = self.axes[4].snap(p_fc)?;
        Ok(self.slice_at([iu, ir, ifc]))
    }

    pub(crate) fn slice_at(&self, snapped: [usize; 3]) -> Slice2 {
        let (nb, nl) = (self.axes[0].points, self.axes[1].points);
        let mut values = Vec::with_capacity(nb * nl);
        for il in 0..nl {
            for ib in 0..nb {
                values.push(self.value_at([ib, il, snapped[0], snapped[1], snapped[2]]));
            }
        }
        Slice2 {
            p_load: self.axes[1].clone(),
            p_batt: self.axes[0].clone(),
            values,
            snapped,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::json!({
            "axes": self.axes,
            "provenance": self.provenance,
            "count": self.values.len(),
        });
        container::encode(KIND, header, &container::f64s_to_le_bytes(&self.values))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(bytes, KIND)?;
        let axes: [Axis; 5] =
            serde_json::from_value(header["axes"].clone()).map_err(|e| Error::Format(e.to_string()))?;
        let provenance: TableProvenance =
            serde_json::from_value(header["provenance"].clone()).map_err(|e| Error::Format(e.to_string()))?;
        let t = ExplicitTable {
            axes,
            values: container::le_bytes_to_f64s(payload)?,
            provenance,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }

    /// Lossless CSV export, one row per grid node in storage order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let coords: Vec<Vec<f64>> = self.axes.iter().map(Axis::coords).collect();
        let mut run = || -> std::io::Result<()> {
            writeln!(w, "{},delta_soc", FEATURE_NAMES.join(","))?;
            for (flat, v) in self.values.iter().enumerate() {
                let idx = self.unflatten(flat);
                for k in 0..5 {
                    write!(w, "{:?},", coords[k][idx[k]])?;
                }
                writeln!(w, "{v:?}")?;
            }
            w.flush()
        };
        run().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV export back, checking every row sits on this table's grid.
    pub fn read_csv_values(&self, path: &Path) -> Result<Vec<f64>> {
        let name = path.display().to_string();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
            source_name: name.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        let coords: Vec<Vec<f64>> = self.axes.iter().map(Axis::coords).collect();
        let mut out = Vec::with_capacity(self.values.len());
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| Error::Parse {
                source_name: name.clone(),
                line,
                msg: e.to_string(),
            })?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    source_name: name.clone(),
                    line,
                    msg: e.to_string(),
                })?;
            let idx = self.unflatten(row);
            if nums.len() != 6 || (0..5).any(|k| nums[k] != coords[k][idx[k]]) {
                return Err(Error::Parse {
                    source_name: name.clone(),
                    line,
                    msg: "row is not at the expected grid node".into(),
                });
            }
            out.push(nums[5]);
        }
        if out.len() != self.values.len() {
            return Err(Error::Shape(format!("CSV has {} rows, table has {}", out.len(), self.values.len())));
        }
        Ok(out)
    }
}

impl Slice2 {
    /// Second filter: the p_batt row at the p_load coordinate nearest to
    /// `p_load`.
    pub fn filter_stage2(&self, p_load: f64) -> Result<Curve1> {
        let il = self.p_load.snap(p_load)?;
        Ok(self.row(il))
    }

    pub(crate) fn row(&self, il: usize) -> Curve1 {
        let nb = self.p_batt.points;
        Curve1 {
            p_batt: self.p_batt.coords(),
            delta_soc: self.values[il * nb..(il + 1) * nb].to_vec(),
            p_load_index: il,
        }
    }
}
