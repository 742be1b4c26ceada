use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::StepRecord;

pub const FEATURE_NAMES: [&str; 5] = ["p_batt", "p_load", "u_batt", "r_batt", "p_fc"];

/// One supervised example: five step features and the SOC change they caused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverSample {
    pub p_batt: f64,
    pub p_load: f64,
    pub u_batt: f64,
    pub r_batt: f64,
    pub p_fc: f64,
    pub delta_soc: f64,
}

impl ObserverSample {
    /// Features in table-axis order.
    pub fn features(&self) -> [f64; 5] {
        [self.p_batt, self.p_load, self.u_batt, self.r_batt, self.p_fc]
    }
}

/// Pairs each step with the SOC change it produced. Record `k` carries the
/// SOC at the start of its step, so the change is `soc[k+1] - soc[k]`.
pub fn generate_training_set(logs: &[StepRecord]) -> Result<Vec<ObserverSample>> {
    if logs.len() < 2 {
        return Err(Error::Empty(format!(
            "need at least 2 log steps to form a sample, got {}",
            logs.len()
        )));
    }
    Ok(logs
        .windows(2)
        .map(|w| ObserverSample {
            p_batt: w[0].p_batt,
            p_load: w[0].p_load,
            u_batt: w[0].u_batt,
            r_batt: w[0].r_batt,
            p_fc: w[0].p_fc,
            delta_soc: w[1].soc - w[0].soc,
        })
        .collect())
}

/// Deterministic shuffled split; returns (train, held_out).
pub fn split_holdout(samples: &[ObserverSample], holdout: f64, seed: u64) -> (Vec<ObserverSample>, Vec<ObserverSample>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((samples.len() as f64) * holdout).round() as usize;
    let (hold, train) = idx.split_at(n_hold);
    let pick = |ix: &[usize]| {
        let mut ix = ix.to_vec();
        ix.sort_unstable();
        ix.into_iter().map(|i| samples[i]).collect::<Vec<_>>()
    };
    (pick(train), pick(hold))
}

pub fn write_training_csv(path: &Path, samples: &[ObserverSample]) -> Result<()> {
    let mut s = String::from("p_batt,p_load,u_batt,r_batt,p_fc,delta_soc\n");
    for o in samples {
        s.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?},{:?}\n",
            o.p_batt, o.p_load, o.u_batt, o.r_batt, o.p_fc, o.delta_soc
        ));
    }
    File::create(path)
        .and_then(|mut f| f.write_all(s.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn read_training_csv(path: &Path) -> Result<Vec<ObserverSample>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let s: ObserverSample = rec.map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

/// Row-major feature matrix and target vector.
pub(crate) fn to_matrix(samples: &[ObserverSample]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(samples.len() * 5);
    let mut y = Vec::with_capacity(samples.len());
    for s in samples {
        x.extend_from_slice(&s.features());
        y.push(s.delta_soc);
    }
    (x, y)
}
