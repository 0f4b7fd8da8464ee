//! Trajectory CSV and ground-truth sidecar files.
//!
//! Trajectory files carry the header `traj_id,x0..x{d-1},v0..v{d-1}` with
//! rows ordered by trajectory id, then time.

use std::fmt::Write as _;
use std::path::Path;

use attractorscope::{StateSample, Trajectory, TrajectorySet};

use crate::CliError;

fn parse_header(header: &str) -> Result<usize, CliError> {
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"traj_id") {
        return Err(CliError::Csv { line: 1, reason: "header must start with traj_id".into() });
    }
    let rest = &cols[1..];
    let d = rest.iter().take_while(|c| c.starts_with('x')).count();
    if d == 0 {
        return Err(CliError::Csv { line: 1, reason: "no position columns".into() });
    }
    if rest.len() != 2 * d {
        return Err(CliError::Csv {
            line: 1,
            reason: format!("expected {d} velocity columns, found {}", rest.len() - d),
        });
    }
    for k in 0..d {
        if rest[k] != format!("x{k}") || rest[d + k] != format!("v{k}") {
            return Err(CliError::Csv {
                line: 1,
                reason: format!("expected columns x{k} and v{k}"),
            });
        }
    }
    Ok(d)
}

/// Parses trajectory CSV text.
pub fn parse_trajectories(text: &str, sampling_frequency: f64) -> Result<TrajectorySet, CliError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(CliError::Csv { line: 1, reason: "empty file".into() })?;
    let d = parse_header(header.trim_end_matches('\r'))?;
    let dt = 1.0 / sampling_frequency;
    let mut trajectories = Vec::new();
    let mut current: Option<(u64, usize, Vec<StateSample>)> = None;
    let finish = |cur: Option<(u64, usize, Vec<StateSample>)>,
                      out: &mut Vec<Trajectory>|
     -> Result<(), CliError> {
        if let Some((_, line, samples)) = cur {
            let t = Trajectory::new(samples, dt)
                .map_err(|e| CliError::Csv { line, reason: e.to_string() })?;
            out.push(t);
        }
        Ok(())
    };
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = line - 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 1 + 2 * d {
            return Err(CliError::Csv {
                line,
                reason: format!("row {row} has {} fields, expected {}", fields.len(), 1 + 2 * d),
            });
        }
        let id: u64 = fields[0].parse().map_err(|_| CliError::Csv {
            line,
            reason: format!("row {row}: invalid traj_id `{}`", fields[0]),
        })?;
        let mut values = Vec::with_capacity(2 * d);
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| CliError::Csv {
                line,
                reason: format!("row {row}: invalid number `{f}`"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Csv { line, reason: format!("row {row}: non-finite value `{f}`") });
            }
            values.push(v);
        }
        let sample = StateSample::new(values[..d].to_vec(), values[d..].to_vec())
            .map_err(|e| CliError::Csv { line, reason: format!("row {row}: {e}") })?;
        match &mut current {
            Some((cur, _, samples)) if *cur == id => samples.push(sample),
            Some((cur, _, _)) if *cur > id => {
                return Err(CliError::Csv {
                    line,
                    reason: format!("row {row}: traj_id {id} after {cur}; rows must be ordered"),
                });
            }
            _ => {
                finish(current.take(), &mut trajectories)?;
                current = Some((id, line, vec![sample]));
            }
        }
    }
    finish(current.take(), &mut trajectories)?;
    if trajectories.is_empty() {
        return Err(CliError::Csv { line: 2, reason: "no trajectory rows".into() });
    }
    TrajectorySet::new(trajectories, sampling_frequency)
        .map_err(|e| CliError::Csv { line: 1, reason: e.to_string() })
}

pub fn ingest_csv(path: &Path, sampling_frequency: f64) -> Result<TrajectorySet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    parse_trajectories(&text, sampling_frequency)
}

/// Renders a trajectory set in the CSV format read by [`parse_trajectories`].
pub fn format_trajectories(data: &TrajectorySet) -> String {
    let d = data.dim();
    let mut s = String::from("traj_id");
    for k in 0..d {
        write!(s, ",x{k}").unwrap();
    }
    for k in 0..d {
        write!(s, ",v{k}").unwrap();
    }
    s.push('\n');
    for (id, t) in data.trajectories().iter().enumerate() {
        for sample in t.samples() {
            write!(s, "{id}").unwrap();
            for v in sample.position.iter().chain(&sample.velocity) {
                write!(s, ",{v:?}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

/// Reads `point_index,label` rows; indices must run 0..M in order.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate().skip(1) {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (i, l) = raw
            .split_once(',')
            .ok_or_else(|| CliError::Csv { line, reason: "expected point_index,label".into() })?;
        let i: usize = i.trim().parse().map_err(|_| CliError::Csv { line, reason: "bad point_index".into() })?;
        let l: usize = l.trim().parse().map_err(|_| CliError::Csv { line, reason: "bad label".into() })?;
        if i != labels.len() {
            return Err(CliError::Csv { line, reason: format!("expected point_index {}", labels.len()) });
        }
        labels.push(l);
    }
    Ok(labels)
}

/// Reads one attractor per row, header `x0..x{d-1}`.
pub fn read_attractors(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate().skip(1) {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row = raw
            .split(',')
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Csv { line, reason: "invalid coordinate".into() })?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "traj_id,x0,x1,v0,v1\n0,0,0,1,0\n0,1,0,1,0\n0,2,0,1,0\n1,0,1,0,1\n1,0,2,0,1\n1,0,3,0,1\n";

    #[test]
    fn two_by_three_samples() {
        let data = parse_trajectories(SMALL, 10.0).unwrap();
        assert_eq!(data.total_samples(), 6);
        assert_eq!(data.trajectories().len(), 2);
        assert_eq!(data.dim(), 2);
    }

    #[test]
    fn nan_row_names_row() {
        let text = SMALL.replace("0,1,0,1,0\n", "0,NaN,0,1,0\n");
        let err = parse_trajectories(&text, 10.0).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("row 2"), "{err}");
    }

    #[test]
    fn missing_velocity_columns() {
        let err = parse_trajectories("traj_id,x0,x1,v0\n0,1,2,3\n", 1.0).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn ragged_row() {
        let text = SMALL.replace("1,0,2,0,1\n", "1,0,2,0\n");
        let err = parse_trajectories(&text, 10.0).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");
    }

    #[test]
    fn unordered_ids_rejected() {
        let text = format!("{SMALL}0,5,5,1,1\n0,6,6,1,1\n");
        assert!(parse_trajectories(&text, 10.0).is_err());
    }

    #[test]
    fn single_sample_trajectory_rejected() {
        let text = format!("{SMALL}2,0,0,1,1\n");
        let err = parse_trajectories(&text, 10.0).unwrap_err().to_string();
        assert!(err.contains("line 8"), "{err}");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_trajectories("traj_id,x0,v0\n", 1.0).is_err());
    }

    #[test]
    fn format_uses_lf_and_header() {
        let data = parse_trajectories(SMALL, 10.0).unwrap();
        let out = format_trajectories(&data);
        assert!(out.starts_with("traj_id,x0,x1,v0,v1\n"));
        assert!(!out.contains('\r'));
        assert_eq!(parse_trajectories(&out, 10.0).unwrap(), data);
    }
}
