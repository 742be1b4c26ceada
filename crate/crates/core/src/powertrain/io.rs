use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::curve::Curve;
use super::motor::{Axle, MotorMap};
use super::plant::Plant;
use super::VehicleParams;
use super::{BatteryModel, FuelCellModel};
use crate::error::{Error, Result};

/// Optional map files replacing the synthetic defaults. Relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapFiles {
    pub fc_efficiency: Option<PathBuf>,
    pub fc_h2_rate: Option<PathBuf>,
    pub ocv: Option<PathBuf>,
    pub r_discharge: Option<PathBuf>,
    pub r_charge: Option<PathBuf>,
    pub front_motor: Option<PathBuf>,
    pub rear_motor: Option<PathBuf>,
}

/// Vehicle configuration as stored in JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub vehicle: VehicleParams,
    pub fuel_cell: Option<FuelCellModel>,
    pub battery: Option<BatteryModel>,
    pub front_motor: Option<MotorMap>,
    pub rear_motor: Option<MotorMap>,
    pub maps: MapFiles,
}

impl PlantConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let mut s = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut s))
            .map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// Builds and validates the plant, loading any referenced map files.
    pub fn build(&self, base_dir: &Path) -> Result<Plant> {
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base_dir.join(p) };
        let mut plant = Plant {
            vehicle: self.vehicle.clone(),
            fuel_cell: self.fuel_cell.clone().unwrap_or_default(),
            battery: self.battery.clone().unwrap_or_default(),
            front_motor: self.front_motor.clone().unwrap_or_else(MotorMap::front_default),
            rear_motor: self.rear_motor.clone().unwrap_or_else(MotorMap::rear_default),
        };
        let m = &self.maps;
        if let Some(p) = &m.fc_efficiency {
            plant.fuel_cell.efficiency_curve = load_curve_csv(&resolve(p))?;
        }
        if let Some(p) = &m.fc_h2_rate {
            plant.fuel_cell.h2_rate_curve = load_curve_csv(&resolve(p))?;
        }
        if let Some(p) = &m.ocv {
            plant.battery.ocv_curve = load_curve_csv(&resolve(p))?;
        }
        if let Some(p) = &m.r_discharge {
            plant.battery.r_discharge_curve = load_curve_csv(&resolve(p))?;
        }
        if let Some(p) = &m.r_charge {
            plant.battery.r_charge_curve = load_curve_csv(&resolve(p))?;
        }
        if let Some(p) = &m.front_motor {
            let ratio = plant.front_motor.gear_ratio;
            plant.front_motor = load_motor_grid_csv(&resolve(p), Axle::Front, ratio)?;
        }
        if let Some(p) = &m.rear_motor {
            let ratio = plant.rear_motor.gear_ratio;
            plant.rear_motor = load_motor_grid_csv(&resolve(p), Axle::Rear, ratio)?;
        }
        plant.validate()?;
        Ok(plant)
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
    let got = rdr.headers().map_err(|e| csv_err(path, 1, e))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::Parse {
            source_name: path.display().to_string(),
            line: 1,
            msg: format!("expected header `{}`", header.join(",")),
        });
    }
    Ok(rdr)
}

fn csv_err(path: &Path, line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        source_name: path.display().to_string(),
        line,
        msg: e.to_string(),
    }
}

fn parse_row(path: &Path, rec: &csv::StringRecord, width: usize) -> Result<Vec<f64>> {
    let line = rec.position().map_or(0, |p| p.line() as usize);
    if rec.len() != width {
        return Err(csv_err(path, line, format!("expected {width} fields, found {}", rec.len())));
    }
    rec.iter()
        .map(|f| f.parse::<f64>().map_err(|e| csv_err(path, line, format!("`{f}`: {e}"))))
        .collect()
}

/// Reads an `x,y` curve.
pub fn load_curve_csv(path: &Path) -> Result<Curve> {
    let mut rdr = open_csv(path, &["x", "y"])?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, 0, e))?;
        let v = parse_row(path, &rec, 2)?;
        x.push(v[0]);
        y.push(v[1]);
    }
    Curve::new(x, y)
}

pub fn write_curve_csv(path: &Path, curve: &Curve) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from("x,y\n");
    for (x, y) in curve.x.iter().zip(&curve.y) {
        s.push_str(&format!("{x:?},{y:?}\n"));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a `torque_nm,speed_rpm,eff` grid. Every (torque, speed) pair of the
/// rectangular grid must appear exactly once.
pub fn load_motor_grid_csv(path: &Path, axle: Axle, gear_ratio: f64) -> Result<MotorMap> {
    let mut rdr = open_csv(path, &["torque_nm", "speed_rpm", "eff"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, 0, e))?;
        rows.push(parse_row(path, &rec, 3)?);
    }
    let axis = |k: usize| {
        let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let torques = axis(0);
    let speeds = axis(1);
    if torques.len() * speeds.len() != rows.len() {
        return Err(csv_err(path, 0, "motor grid is not rectangular"));
    }
    let mut efficiency = vec![f64::NAN; rows.len()];
    for r in &rows {
        let i = torques.partition_point(|&t| t < r[0]);
        let j = speeds.partition_point(|&s| s < r[1]);
        let slot = &mut efficiency[i * speeds.len() + j];
        if !slot.is_nan() {
            return Err(csv_err(path, 0, format!("duplicate grid node ({}, {})", r[0], r[1])));
        }
        *slot = r[2];
    }
    let map = MotorMap {
        axle,
        torques,
        speeds,
        efficiency,
        gear_ratio,
    };
    map.validate()?;
    Ok(map)
}
