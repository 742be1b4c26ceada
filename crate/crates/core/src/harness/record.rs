use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which source carries the load on a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Battery only.
    Ev,
    /// Controller splits the load.
    Hev,
    /// Negative demand routed into the battery.
    Regen,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ev => "ev",
            Mode::Hev => "hev",
            Mode::Regen => "regen",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ev" => Ok(Mode::Ev),
            "hev" => Ok(Mode::Hev),
            "regen" => Ok(Mode::Regen),
            other => Err(Error::Format(format!("unknown mode {other:?}"))),
        }
    }
}

/// One simulation step. Power and battery quantities hold over the step;
/// `soc` is the value at its start and the cumulative masses include it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub v: f64,
    pub p_load: f64,
    pub p_fc: f64,
    pub p_batt: f64,
    pub soc: f64,
    pub u_batt: f64,
    pub r_batt: f64,
    pub i_batt: f64,
    /// g
    pub h2_fc_cum: f64,
    /// g
    pub h2_equiv_cum: f64,
    pub mode: Mode,
    /// s, wall clock spent in the controller.
    pub solve_time: f64,
    /// The SOC update on this step hit the floor or ceiling.
    pub soc_clamped: bool,
}

pub const STEP_LOG_HEADER: [&str; 14] = [
    "t", "v", "p_load", "p_fc", "p_batt", "soc", "u_batt", "r_batt", "i_batt", "h2_fc_cum",
    "h2_equiv_cum", "mode", "solve_time", "soc_clamped",
];

/// Nine significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.8e}")
}

/// Writes the step log. `mask_timing` zeroes the solve-time column so that
/// logs from different runs can be compared byte for byte.
pub fn write_step_log<W: Write>(out: W, records: &[StepRecord], mask_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(STEP_LOG_HEADER).map_err(fmt_err)?;
    for r in records {
        let solve = if mask_timing { 0.0 } else { r.solve_time };
        let nums = [
            r.t, r.v, r.p_load, r.p_fc, r.p_batt, r.soc, r.u_batt, r.r_batt, r.i_batt, r.h2_fc_cum,
            r.h2_equiv_cum,
        ];
        let mut row: Vec<String> = nums.iter().map(|&x| sig9(x)).collect();
        row.push(r.mode.to_string());
        row.push(sig9(solve));
        row.push(if r.soc_clamped { "1" } else { "0" }.into());
        w.write_record(&row).map_err(fmt_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn read_step_log<R: Read>(input: R, source_name: &str) -> Result<Vec<StepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let parse_err = |line: usize, msg: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let header = rd.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(STEP_LOG_HEADER.iter().copied()) {
        return Err(parse_err(1, format!("unexpected header {:?}", header)));
    }
    let mut out = Vec::new();
    for (k, row) in rd.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|e| parse_err(line, format!("column {}: {e}", STEP_LOG_HEADER[i])))
        };
        out.push(StepRecord {
            t: num(0)?,
            v: num(1)?,
            p_load: num(2)?,
            p_fc: num(3)?,
            p_batt: num(4)?,
            soc: num(5)?,
            u_batt: num(6)?,
            r_batt: num(7)?,
            i_batt: num(8)?,
            h2_fc_cum: num(9)?,
            h2_equiv_cum: num(10)?,
            mode: row[11].parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
            solve_time: num(12)?,
            soc_clamped: match &row[13] {
                "1" => true,
                "0" => false,
                other => return Err(parse_err(line, format!("bad soc_clamped {other:?}"))),
            },
        });
    }
    Ok(out)
}
