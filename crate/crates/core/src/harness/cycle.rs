use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powertrain::{tractive_force, VehicleParams};

pub const CYCLE_HEADER: [&str; 2] = ["t_s", "v_mps"];

/// Speed against time, starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingCycle {
    pub name: String,
    /// s
    pub t: Vec<f64>,
    /// m/s
    pub v: Vec<f64>,
}

impl DrivingCycle {
    pub fn new(name: impl Into<String>, t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let c = Self { name: name.into(), t, v };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.is_empty() {
            return Err(Error::Empty(format!("cycle {:?} has no samples", self.name)));
        }
        if self.t.len() != self.v.len() {
            return Err(Error::Shape(format!("{} times for {} speeds", self.t.len(), self.v.len())));
        }
        if self.t[0] != 0.0 {
            return Err(Error::Param(format!("cycle must start at t = 0, starts at {}", self.t[0])));
        }
        for k in 1..self.t.len() {
            if !(self.t[k] > self.t[k - 1]) {
                return Err(Error::Param(format!("time not strictly increasing at sample {k}")));
            }
        }
        if let Some(k) = self.v.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Param(format!("invalid speed {} at sample {k}", self.v[k])));
        }
        Ok(())
    }

    /// s
    pub fn duration(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    /// Linear interpolation, clamped to the ends.
    pub fn speed_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.v[0];
        }
        let j = self.t.partition_point(|&x| x <= t);
        if j >= self.t.len() {
            return *self.v.last().unwrap();
        }
        let (t0, t1) = (self.t[j - 1], self.t[j]);
        self.v[j - 1] + (self.v[j] - self.v[j - 1]) * (t - t0) / (t1 - t0)
    }

    /// Samples at k·dt for every k with k·dt inside the cycle.
    pub fn resample(&self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Param("dt must be positive".into()));
        }
        let n = (self.duration() / dt + 1e-9).floor() as usize + 1;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let v = t.iter().map(|&x| self.speed_at(x)).collect();
        Ok(Self {
            name: self.name.clone(),
            t,
            v,
        })
    }

    /// Speeds at whole seconds.
    pub fn speeds_1s(&self) -> Vec<f64> {
        let n = (self.duration() + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.speed_at(k as f64)).collect()
    }

    pub fn standstill(duration: f64, dt: f64) -> Result<Self> {
        Self::new("standstill", vec![0.0, duration], vec![0.0, 0.0])?.resample(dt)
    }
}

/// Reads a `t_s,v_mps` CSV without resampling.
pub fn read_cycle_csv<R: Read>(input: R, name: &str) -> Result<DrivingCycle> {
    let perr = |line: usize, msg: String| Error::Parse {
        source_name: name.to_string(),
        line,
        msg,
    };
    let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut rows = rd.records();
    let header = rows
        .next()
        .ok_or_else(|| perr(1, "empty file".into()))?
        .map_err(|e| perr(1, e.to_string()))?;
    if header.iter().ne(CYCLE_HEADER.iter().copied()) {
        return Err(perr(1, format!("expected header t_s,v_mps, found {:?}", header.iter().collect::<Vec<_>>())));
    }
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (k, row) in rows.enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| perr(line, e.to_string()))?;
        if row.len() != 2 {
            return Err(perr(line, format!("expected 2 fields, found {}", row.len())));
        }
        let num = |i: usize| row[i].parse::<f64>().map_err(|e| perr(line, format!("{}: {e}", CYCLE_HEADER[i])));
        let (ti, vi) = (num(0)?, num(1)?);
        if !ti.is_finite() || !vi.is_finite() {
            return Err(perr(line, "non-finite value".into()));
        }
        if t.is_empty() && ti != 0.0 {
            return Err(perr(line, format!("time must start at 0, found {ti}")));
        }
        if let Some(&last) = t.last() {
            if !(ti > last) {
                return Err(perr(line, format!("time {ti} does not increase past {last}")));
            }
        }
        if vi < 0.0 {
            return Err(perr(line, format!("negative speed {vi}")));
        }
        t.push(ti);
        v.push(vi);
    }
    if t.is_empty() {
        return Err(perr(2, "no data rows".into()));
    }
    DrivingCycle::new(name, t, v)
}

/// Reads a cycle CSV and resamples it onto the `dt` grid.
pub fn load_cycle(path: &Path, dt: f64) -> Result<DrivingCycle> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_cycle_csv(file, &name)?.resample(dt).map(|mut c| {
        c.name = name;
        c
    })
}

pub fn write_cycle_csv(path: &Path, cycle: &DrivingCycle) -> Result<()> {
    let mut s = String::from("t_s,v_mps\n");
    for (t, v) in cycle.t.iter().zip(&cycle.v) {
        s.push_str(&format!("{t},{v}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleKind {
    /// Stop-and-go city driving.
    Urban,
    /// City driving interleaved with faster suburban stretches.
    Mixed,
}

/// Seeded stochastic cycle generator. Speeds are produced at 1 s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCycle {
    pub kind: CycleKind,
    /// s
    pub duration: f64,
    pub seed: u64,
    /// Cap on wheel power while accelerating, W.
    pub max_wheel_power: f64,
    /// m/s²
    pub max_accel: f64,
}

impl Default for SyntheticCycle {
    fn default() -> Self {
        Self {
            kind: CycleKind::Mixed,
            duration: 1800.0,
            seed: 7,
            max_wheel_power: 28_000.0,
            max_accel: 3.0,
        }
    }
}

/// Seeds of the two bundled cycles.
pub const URBAN_SEED: u64 = 11;
pub const MIXED_SEED: u64 = 7;

impl SyntheticCycle {
    pub fn bundled(kind: CycleKind) -> Self {
        let seed = match kind {
            CycleKind::Urban => URBAN_SEED,
            CycleKind::Mixed => MIXED_SEED,
        };
        Self {
            kind,
            seed,
            ..Default::default()
        }
    }

    pub fn generate(&self, vehicle: &VehicleParams) -> Result<DrivingCycle> {
        if !(self.duration >= 1.0 && self.max_wheel_power > 0.0 && self.max_accel > 0.0) {
            return Err(Error::Param("duration, power cap and acceleration cap must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.duration.floor() as usize;
        let mut v = Vec::with_capacity(n + 1);
        v.push(0.0);
        let cap = |v0: f64, a: f64| -> f64 {
            // Shrink a until the wheel power at the end of the second fits.
            let mut a = a.clamp(-self.max_accel, self.max_accel);
            while a > 0.0 && tractive_force(v0 + a, a, vehicle) * (v0 + a) > self.max_wheel_power {
                a *= 0.9;
                if a < 1e-3 {
                    a = 0.0;
                }
            }
            a
        };
        let push = |v: &mut Vec<f64>, a: f64| {
            let last = *v.last().unwrap();
            v.push((last + a).max(0.0));
        };
        while v.len() <= n {
            let fast = self.kind == CycleKind::Mixed && rng.gen_bool(0.4);
            // Idle at a stop.
            for _ in 0..rng.gen_range(4..16) {
                push(&mut v, 0.0);
            }
            let (target, cruise_len) = if fast {
                (rng.gen_range(18.0..27.0), rng.gen_range(40..140))
            } else {
                (rng.gen_range(6.0..16.0), rng.gen_range(8..45))
            };
            let a_up: f64 = rng.gen_range(0.6..1.8);
            while *v.last().unwrap() < target && v.len() <= n {
                let cur = *v.last().unwrap();
                let a = cap(cur, a_up.min(target - cur));
                if a <= 0.0 {
                    break;
                }
                push(&mut v, a);
            }
            let mut cruise = *v.last().unwrap();
            for _ in 0..cruise_len {
                if v.len() > n {
                    break;
                }
                let cur = *v.last().unwrap();
                let drift = rng.gen_range(-0.4..0.4) + 0.2 * (cruise - cur);
                let a = cap(cur, drift);
                push(&mut v, a);
                if fast && rng.gen_bool(0.03) {
                    cruise = (cruise + rng.gen_range(-4.0..4.0)).clamp(12.0, 28.0);
                }
            }
            let a_down: f64 = -rng.gen_range(0.8..2.5);
            while *v.last().unwrap() > 0.0 && v.len() <= n {
                let cur = *v.last().unwrap();
                push(&mut v, a_down.max(-cur));
            }
        }
        v.truncate(n + 1);
        let t = (0..=n).map(|k| k as f64).collect();
        let name = match self.kind {
            CycleKind::Urban => "urban",
            CycleKind::Mixed => "mixed",
        };
        DrivingCycle::new(format!("{name}-{}", self.seed), t, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_zero_rows_resample_to_21() {
        let c = read_cycle_csv("t_s,v_mps\n0,0\n1,0\n".as_bytes(), "z").unwrap();
        let r = c.resample(0.05).unwrap();
        assert_eq!(r.t.len(), 21);
        assert!(r.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_interpolates() {
        let c = read_cycle_csv("t_s,v_mps\n0,0\n10,10\n".as_bytes(), "ramp").unwrap();
        let r = c.resample(0.05).unwrap();
        assert!((r.v[50] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn malformed_files_name_the_row() {
        for (text, line) in [
            ("0,0\n1,0\n", 1),
            ("", 1),
            ("t_s,v_mps\n", 2),
            ("t_s,v_mps\n0,0\n1,-1\n", 3),
            ("t_s,v_mps\n0,0\n2,1\n1,1\n", 4),
        ] {
            match read_cycle_csv(text.as_bytes(), "bad") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn synthetic_cycles_respect_limits() {
        let vp = VehicleParams::default();
        for kind in [CycleKind::Urban, CycleKind::Mixed] {
            let c = SyntheticCycle::bundled(kind).generate(&vp).unwrap();
            assert_eq!(c.t.len(), 1801);
            for w in c.v.windows(2) {
                let a = w[1] - w[0];
                assert!(a.abs() <= 3.0 + 1e-12);
                if a > 0.0 {
                    assert!(tractive_force(w[1], a, &vp) * w[1] <= 28_000.0 + 1e-6);
                }
            }
            assert_eq!(c, SyntheticCycle::bundled(kind).generate(&vp).unwrap());
        }
    }
}
