//! Columnar text format for seismograms.
//!
//! Header `t, ux_r1, uz_r1, ..., ux_rN, uz_rN`, then one row per time
//! sample. Floats are written in shortest round-trip form.

use std::io::{BufRead, Write};

use super::Seismogram;
use crate::error::{Error, Result};

pub fn write_seismograms<W: Write>(mut w: W, traces: &[Seismogram]) -> Result<()> {
    let Some(first) = traces.first() else {
        writeln!(w, "t")?;
        return Ok(());
    };
    if traces.iter().any(|s| s.len() != first.len() || s.t0 != first.t0 || s.dt != first.dt) {
        return Err(Error::GridMismatch("receivers do not share a time grid".into()));
    }
    let mut header = String::from("t");
    for k in 1..=traces.len() {
        header.push_str(&format!(", ux_r{k}, uz_r{k}"));
    }
    writeln!(w, "{header}")?;
    for n in 0..first.len() {
        let mut row = format!("{}", first.time(n));
        for s in traces {
            row.push_str(&format!(", {}, {}", s.ux[n], s.uz[n]));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn read_seismograms<R: BufRead>(r: R) -> Result<Vec<Seismogram>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty seismogram file".into()))??;
    let cols = header.split(',').count();
    if cols % 2 == 0 {
        return Err(Error::Parse(format!("bad header: {header}")));
    }
    let nrec = (cols - 1) / 2;
    let mut t = Vec::new();
    let mut data = vec![Vec::new(); 2 * nrec];
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", ln + 2)))?;
        if vals.len() != cols {
            return Err(Error::Parse(format!("row {} has {} columns", ln + 2, vals.len())));
        }
        t.push(vals[0]);
        for (c, v) in vals[1..].iter().enumerate() {
            data[c].push(*v);
        }
    }
    if t.len() < 2 {
        return Err(Error::Parse("need at least two time samples".into()));
    }
    let n = t.len() - 1;
    let dt = (t[n] - t[0]) / n as f64;
    if t.iter().enumerate().any(|(k, &tk)| (tk - (t[0] + k as f64 * dt)).abs() > 1e-9 * dt.abs().max(1e-300) * n as f64) {
        return Err(Error::GridMismatch("time column is not uniform".into()));
    }
    let mut cols = data.into_iter();
    Ok((0..nrec)
        .map(|receiver| Seismogram {
            receiver,
            t0: t[0],
            dt,
            ux: cols.next().unwrap_or_default(),
            uz: cols.next().unwrap_or_default(),
        })
        .collect())
}
