//! CSV serialization of trajectories and ensemble statistics.
//!
//! Trajectory columns, in order: `t, lambda, x_0..x_{N-1}, occ_0..occ_{N-1}`,
//! then `re_coh_u_w, im_coh_u_w` for every `u < w`, then `purity, trace_err`.
//! Numbers carry 17 significant digits so they read back bit-exactly.

use std::io::{Read, Write};

use crate::ensemble::EnsembleStats;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "lambda".to_string()];
    h.extend((0..n).map(|i| format!("x_{i}")));
    h.extend((0..n).map(|i| format!("occ_{i}")));
    for u in 0..n {
        for w in (u + 1)..n {
            h.push(format!("re_coh_{u}_{w}"));
            h.push(format!("im_coh_{u}_{w}"));
        }
    }
    h.push("purity".into());
    h.push("trace_err".into());
    h
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let n = traj.samples.first().map_or(0, |s| s.x.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n))?;
    for s in &traj.samples {
        let mut row = vec![num(s.t), num(s.lambda)];
        row.extend(s.x.iter().map(|&x| num(x)));
        row.extend((0..n).map(|i| num(s.rho[(i, i)].re)));
        for u in 0..n {
            for v in (u + 1)..n {
                row.push(num(s.rho[(u, v)].re));
                row.push(num(s.rho[(u, v)].im));
            }
        }
        row.push(num(s.purity));
        row.push(num(s.trace_error));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A trajectory CSV read back for plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    /// Same table a CSV round trip would give.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let mut buf = Vec::new();
        write_trajectory_csv(traj, &mut buf)?;
        read_trajectory_csv(buf.as_slice())
    }

    fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(0)
    }

    pub fn level(&self, i: usize) -> Vec<f64> {
        self.column(2 + i)
    }

    pub fn occupation(&self, i: usize) -> Vec<f64> {
        self.column(2 + self.n + i)
    }

    pub fn purity(&self) -> Vec<f64> {
        self.column(self.rows[0].len() - 2)
    }
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<TrajectoryTable> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let n = header.iter().filter(|h| h.starts_with("x_")).count();
    if n == 0 || header != trajectory_header(n) {
        return Err(Error::SchemaMismatch(format!(
            "unexpected columns: {}",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::SchemaMismatch(format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::SchemaMismatch("no samples".into()));
    }
    Ok(TrajectoryTable { n, rows })
}

pub fn ensemble_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..n).map(|i| format!("mean_occ_{i}")));
    h.extend((0..n).map(|i| format!("std_occ_{i}")));
    for s in ["mean_purity", "std_purity", "ensemble_purity"] {
        h.push(s.into());
    }
    h
}

pub fn write_ensemble_csv<W: Write>(stats: &EnsembleStats, out: W) -> Result<()> {
    let n = stats.mean_occupations.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ensemble_header(n))?;
    for k in 0..stats.times.len() {
        let mut row = vec![num(stats.times[k])];
        row.extend(stats.mean_occupations[k].iter().map(|&v| num(v)));
        row.extend(stats.std_occupations[k].iter().map(|&v| num(v)));
        row.push(num(stats.mean_purity[k]));
        row.push(num(stats.std_purity[k]));
        row.push(num(stats.ensemble_purity[k]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
