use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fem::Geometry;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Provenance {
    /// Simulated from the material model at a known parameter vector.
    Synthetic { y0: Vec<f64> },
    External,
}

/// Probe positions, excitation currents and observed `B_y` per (current, probe).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub probes: Vec<[f64; 2]>,
    pub currents: Vec<f64>,
    /// `data[n][p]` in tesla.
    pub data: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    #[serde(rename = "current_A")]
    current: f64,
    #[serde(rename = "x_m")]
    x: f64,
    #[serde(rename = "y_m")]
    y: f64,
    #[serde(rename = "By_T")]
    by: f64,
}

impl ObservationSet {
    pub fn validate(&self, geometry: &Geometry) -> Result<()> {
        if self.probes.is_empty() || self.currents.is_empty() {
            return Err(Error::Input("observation set has no probes or no currents".into()));
        }
        if let Some(p) = self.probes.iter().find(|p| !geometry.in_gap(p[0], p[1])) {
            return Err(Error::Input(format!(
                "probe ({}, {}) is outside the air gap",
                p[0], p[1]
            )));
        }
        if self.currents.windows(2).any(|w| !(w[1] > w[0])) || !(self.currents[0] >= 0.0) {
            return Err(Error::Input("currents must be nonnegative and strictly increasing".into()));
        }
        if self.data.len() != self.currents.len()
            || self.data.iter().any(|r| r.len() != self.probes.len())
        {
            return Err(Error::Input("data table does not match currents × probes".into()));
        }
        if self.data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("observation data contains non-finite values".into()));
        }
        Ok(())
    }

    /// Long-format CSV `current_A,x_m,y_m,By_T`, current-major.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let map = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(map)?;
        for (n, &current) in self.currents.iter().enumerate() {
            for (p, probe) in self.probes.iter().enumerate() {
                w.serialize(Row {
                    current,
                    x: probe[0],
                    y: probe[1],
                    by: self.data[n][p],
                })
                .map_err(map)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the long-format CSV; every current must list the same probes in the same order.
    pub fn read_csv(path: &Path, provenance: Provenance) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let mut currents: Vec<f64> = Vec::new();
        let mut probes: Vec<[f64; 2]> = Vec::new();
        let mut data: Vec<Vec<f64>> = Vec::new();
        for (i, row) in r.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            })?;
            if currents.last() != Some(&row.current) {
                if let Some(prev) = data.last() {
                    if prev.len() != probes.len() {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line,
                            reason: "current block has a different probe count".into(),
                        });
                    }
                }
                currents.push(row.current);
                data.push(Vec::new());
            }
            let block = data.last_mut().unwrap();
            let k = block.len();
            if currents.len() == 1 {
                probes.push([row.x, row.y]);
            } else if probes.get(k) != Some(&[row.x, row.y]) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: "probe order differs from the first current block".into(),
                });
            }
            block.push(row.by);
        }
        let set = Self {
            probes,
            currents,
            data,
            provenance,
        };
        if set.data.iter().any(|r| r.len() != set.probes.len()) || set.currents.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: "incomplete observation table".into(),
            });
        }
        Ok(set)
    }
}

/// `count` log-spaced levels on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo * (hi / lo).powf(i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}
