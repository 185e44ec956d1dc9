// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::invelope::dee_draw;
use super::path::{half_cells, simulate_path_stream};
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Draws within this distance below 0 are treated as quadrature noise.
pub const NEGATIVE_DRAW_TOL: f64 = 1e-8;

const EMBEDDED_CSV: &str = include_str!("../../data/critical_table.csv");
const EMBEDDED_META: &str = include_str!("../../data/critical_table.csv.meta.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    #[serde(rename = "M")]
    pub m: usize,
    pub c: f64,
    pub h: f64,
    pub b: f64,
    pub seed: u64,
    /// Number of raw draws below `-NEGATIVE_DRAW_TOL` (reported, then clamped to 0).
    pub negative_draws: usize,
    pub min_raw_draw: f64,
    pub code_version: String,
}

/// Sorted draws of the limit statistic, used as critical values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalTable {
    draws: Vec<f64>,
    meta: TableMeta,
}

impl CriticalTable {
    pub fn from_draws(mut draws: Vec<f64>, meta: TableMeta) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::invalid("a critical table needs at least one draw"));
        }
        if draws.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("critical-table draws must be finite and nonnegative"));
        }
        draws.sort_by(f64::total_cmp);
        Ok(Self { draws, meta })
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Inverse of the right-continuous ECDF: the smallest draw `d` with `ECDF(d) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let m = self.draws.len();
        let k = (p.clamp(0.0, 1.0) * m as f64 - 1e-9).ceil().max(1.0) as usize;
        self.draws[k.min(m) - 1]
    }

    /// Fraction of draws `<= x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.draws.partition_point(|d| *d <= x) as f64 / self.draws.len() as f64
    }

    /// Fraction of draws `>= x`.
    pub fn upper_tail(&self, x: f64) -> f64 {
        let below = self.draws.partition_point(|d| *d < x);
        (self.draws.len() - below) as f64 / self.draws.len() as f64
    }

    /// Writes `p,quantile` rows, one per draw (`p = k / M`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["p", "quantile"])?;
        let m = self.draws.len() as f64;
        for (k, d) in self.draws.iter().enumerate() {
            w.write_record([format!("{}", (k + 1) as f64 / m), format!("{d}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, meta: TableMeta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut draws = Vec::new();
        for row in r.records() {
            let row = row?;
            let value = row.get(1).ok_or_else(|| Error::invalid("critical table rows need two columns"))?;
            draws.push(value.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad quantile {value:?}: {e}")))?);
        }
        Self::from_draws(draws, meta)
    }

    /// Path of the metadata file written next to `path`.
    pub fn sidecar(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_csv(std::fs::File::create(path)?)?;
        let meta = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(Self::sidecar(path), meta + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta: TableMeta = serde_json::from_str(&std::fs::read_to_string(Self::sidecar(path))?)?;
        let table = Self::read_csv(std::fs::File::open(path)?, meta)?;
        if table.len() != table.meta.m {
            return Err(Error::invalid(format!("table has {} rows, metadata says {}", table.len(), table.meta.m)));
        }
        Ok(table)
    }

    /// The table shipped with the crate.
    pub fn embedded() -> Result<Self> {
        let meta: TableMeta = serde_json::from_str(EMBEDDED_META)?;
        Self::read_csv(EMBEDDED_CSV.as_bytes(), meta)
    }
}

/// Raw limit draws for replications `0..m`; replication `k` uses stream `k` of `seed`.
pub fn limit_draws(m: usize, c: f64, h: f64, b: f64, seed: u64, exec: Execution) -> Result<Vec<f64>> {
    half_cells(c, h)?;
    if !(b > 0.0 && b < c) {
        return Err(Error::invalid(format!("window b={b} must lie in (0, c={c})")));
    }
    exec.try_map_indexed(m, |k| {
        let path = simulate_path_stream(c, h, 1.0, 1.0, seed, k as u64)?;
        dee_draw(&path, b)
    })
}

/// Simulates `m` canonical limit draws and tabulates them.
pub fn critical_table(m: usize, c: f64, h: f64, b: f64, seed: u64, exec: Execution) -> Result<CriticalTable> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    let raw = limit_draws(m, c, h, b, seed, exec)?;
    let min_raw_draw = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let negative_draws = raw.iter().filter(|d| **d < -NEGATIVE_DRAW_TOL).count();
    if negative_draws > 0 {
        log::warn!("{negative_draws} of {m} limit draws were negative (min {min_raw_draw:e}); clamped to 0");
    }
    let draws = raw.into_iter().map(|d| d.max(0.0)).collect();
    let meta = TableMeta {
        m,
        c,
        h,
        b,
        seed,
        negative_draws,
        min_raw_draw,
        code_version: env!("CARGO_PKG_VERSION").to_owned(),
    };
    CriticalTable::from_draws(draws, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(m: usize) -> TableMeta {
        TableMeta { m, c: 1.0, h: 0.1, b: 0.5, seed: 0, negative_draws: 0, min_raw_draw: 0.0, code_version: "t".into() }
    }

    #[test]
    fn quantiles_and_ecdf() {
        let t = CriticalTable::from_draws(vec![3.0, 1.0, 2.0, 4.0], meta(4)).unwrap();
        assert_eq!(t.quantile(0.0), 1.0);
        assert_eq!(t.quantile(1.0), 4.0);
        assert_eq!(t.quantile(0.5), 2.0);
        assert_eq!(t.quantile(0.51), 3.0);
        assert_eq!(t.ecdf(2.0), 0.5);
        assert_eq!(t.ecdf(0.5), 0.0);
        assert_eq!(t.upper_tail(0.0), 1.0);
        assert_eq!(t.upper_tail(2.0), 0.75);
        assert_eq!(t.upper_tail(4.5), 0.0);
        assert!(CriticalTable::from_draws(vec![-1.0], meta(1)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = CriticalTable::from_draws(vec![0.1, 0.7, 1.0 / 3.0], meta(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        t.save(&path).unwrap();
        assert!(dir.path().join("table.csv.meta.json").exists());
        assert_eq!(CriticalTable::load(&path).unwrap(), t);
    }

    #[test]
    fn small_table_is_deterministic() {
        let a = critical_table(6, 2.0, 0.02, 1.5, 42, Execution::Parallel).unwrap();
        let b = critical_table(6, 2.0, 0.02, 1.5, 42, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.draws().iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn embedded_table_loads() {
        let t = CriticalTable::embedded().unwrap();
        assert_eq!(t.len(), t.meta().m);
        assert!(t.quantile(0.95) > 0.0);
    }
}
