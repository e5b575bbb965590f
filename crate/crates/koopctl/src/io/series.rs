//! `t,x1,...,xd,u` time series. Trajectories are separated by blank lines;
//! the input column is empty for unforced rows and for the final state.

use std::io::Write;
use std::path::Path;

use koopctl_core::systems::Trajectory;
use koopctl_core::SnapshotData;

use super::{read_file, write_file, IoError, IoResult};

/// One or more trajectories read from a single file.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub trajectories: Vec<Trajectory>,
}

impl TimeSeries {
    pub fn state_dim(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::state_dim)
    }

    /// Consecutive pairs inside each trajectory; nothing spans a gap.
    pub fn snapshots(&self) -> IoResult<SnapshotData> {
        let parts: Vec<SnapshotData> = self
            .trajectories
            .iter()
            .filter(|t| t.steps() > 0)
            .map(Trajectory::to_snapshots)
            .collect::<Result<_, _>>()?;
        if parts.is_empty() {
            return Err(IoError::Empty("no trajectory has two rows"));
        }
        Ok(SnapshotData::concat(&parts)?)
    }

    /// Common sampling step, `None` for maps indexed by step number.
    pub fn time_step(&self) -> IoResult<Option<f64>> {
        let mut steps = self.trajectories.iter().filter(|t| t.steps() > 0).map(|t| t.dt);
        let first = steps.next().flatten();
        if steps.any(|dt| dt != first) {
            return Err(IoError::Inconsistent("trajectories use different time steps".into()));
        }
        Ok(first)
    }
}

fn header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=d).map(|i| format!("x{i}")));
    h.push("u".into());
    h
}

/// Serializes trajectories with shortest round-trip float formatting.
pub fn write_timeseries_csv(path: &Path, trajectories: &[Trajectory]) -> IoResult<()> {
    let d = trajectories.first().map_or(0, Trajectory::state_dim);
    if d == 0 {
        return Err(IoError::Empty("no states to write"));
    }
    let mut out = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().from_writer(&mut out);
        w.write_record(header(d)).map_err(csv_write)?;
        w.flush().map_err(|e| csv_write(e.into()))?;
    }
    for (k, traj) in trajectories.iter().enumerate() {
        if traj.state_dim() != d {
            return Err(IoError::Inconsistent("trajectories differ in state dimension".into()));
        }
        if k > 0 {
            out.push(b'\n');
        }
        let mut w = csv::WriterBuilder::new().from_writer(&mut out);
        for (t, x) in traj.states.iter().enumerate() {
            let mut row = Vec::with_capacity(d + 2);
            row.push(traj.time(t).to_string());
            row.extend(x.iter().map(f64::to_string));
            row.push(match &traj.inputs {
                Some(u) if t < u.len() => u[t].to_string(),
                _ => String::new(),
            });
            w.write_record(&row).map_err(csv_write)?;
        }
        w.flush().map_err(|e| csv_write(e.into()))?;
    }
    out.flush().ok();
    write_file(path, &out)
}

fn csv_write(e: csv::Error) -> IoError {
    IoError::Inconsistent(format!("csv writer: {e}"))
}

fn parse_field(text: &str, line: usize, column: &str) -> IoResult<f64> {
    let v: f64 = text.trim().parse().map_err(|_| IoError::Parse {
        line,
        message: format!("column `{column}`: `{text}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IoError::Parse {
            line,
            message: format!("column `{column}`: non-finite value"),
        });
    }
    Ok(v)
}

/// Parses a time-series file.
pub fn read_timeseries_csv(path: &Path) -> IoResult<TimeSeries> {
    parse_timeseries(&read_file(path)?)
}

pub(crate) fn parse_timeseries(text: &str) -> IoResult<TimeSeries> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, head) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(IoError::Empty("file has no header"))?;
    let names: Vec<&str> = head.split(',').map(str::trim).collect();
    let d = names.len().saturating_sub(2);
    if d == 0 || names != header(d).iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(IoError::Header(format!(
            "expected `t,x1,...,xd,u`, found `{head}`"
        )));
    }

    // blocks of (line number, text) separated by blank lines
    let mut blocks: Vec<Vec<(usize, &str)>> = vec![Vec::new()];
    for (n, l) in lines {
        if l.trim().is_empty() {
            if !blocks.last().is_some_and(Vec::is_empty) {
                blocks.push(Vec::new());
            }
        } else {
            blocks.last_mut().expect("non-empty").push((n, l));
        }
    }
    blocks.retain(|b| !b.is_empty());
    if blocks.is_empty() {
        return Err(IoError::Empty("file has no data rows"));
    }

    let mut trajectories = Vec::with_capacity(blocks.len());
    for block in blocks {
        trajectories.push(parse_block(&block, &names, d)?);
    }
    Ok(TimeSeries { trajectories })
}

fn parse_block(block: &[(usize, &str)], names: &[&str], d: usize) -> IoResult<Trajectory> {
    let mut times = Vec::with_capacity(block.len());
    let mut states = Vec::with_capacity(block.len());
    let mut inputs: Vec<Option<f64>> = Vec::with_capacity(block.len());
    for &(line, text) in block {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let record = reader
            .records()
            .next()
            .transpose()
            .map_err(|e| IoError::Parse {
                line,
                message: e.to_string(),
            })?
            .ok_or(IoError::Parse {
                line,
                message: "empty row".into(),
            })?;
        if record.len() != d + 2 {
            return Err(IoError::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 2, record.len()),
            });
        }
        times.push(parse_field(&record[0], line, names[0])?);
        let x = (1..=d)
            .map(|j| parse_field(&record[j], line, names[j]))
            .collect::<IoResult<Vec<f64>>>()?;
        states.push(x);
        let u = &record[d + 1];
        inputs.push(if u.trim().is_empty() {
            None
        } else {
            Some(parse_field(u, line, "u")?)
        });
    }

    let n = states.len();
    let forced = inputs[..n - 1].iter().any(Option::is_some);
    let inputs = if forced {
        let mut u = Vec::with_capacity(n - 1);
        for (k, v) in inputs[..n - 1].iter().enumerate() {
            u.push(v.ok_or(IoError::Parse {
                line: block[k].0,
                message: "missing input in a forced trajectory".into(),
            })?);
        }
        Some(u)
    } else {
        None
    };

    let indexed = times.iter().enumerate().all(|(k, &t)| t == k as f64);
    let dt = if n < 2 || indexed {
        None
    } else {
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(IoError::Parse {
                line: block[1].0,
                message: "time column is not increasing".into(),
            });
        }
        Some(dt)
    };
    Ok(Trajectory { states, inputs, dt })
}
