//! Writes a run's artifacts plus a manifest of their content hashes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::pipeline::PipelineOutcome;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub partial: bool,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Rendered file contents in manifest order.
pub fn render(outcome: &PipelineOutcome) -> Vec<(String, String)> {
    let r = &outcome.report;
    let mut files = Vec::new();
    if !r.spectrum.is_empty() {
        let mut s = String::from("index,eigenvalue\n");
        for (i, l) in r.spectrum.iter().enumerate() {
            writeln!(s, "{i},{l:?}").unwrap();
        }
        files.push(("spectrum.csv".to_string(), s));
    }
    if !r.labels.is_empty() {
        let mut s = String::from("point_index,label\n");
        for (i, l) in r.labels.iter().enumerate() {
            writeln!(s, "{i},{l}").unwrap();
        }
        files.push(("labels.csv".to_string(), s));
    }
    for (c, rows) in r.embeddings.iter().enumerate() {
        let dim = rows.first().map_or(0, |row| row.1.len());
        if dim == 0 {
            continue;
        }
        let mut s = String::from("point_index");
        for k in 0..dim {
            write!(s, ",coord_{k}").unwrap();
        }
        s.push('\n');
        for (i, coords) in rows {
            write!(s, "{i}").unwrap();
            for v in coords {
                write!(s, ",{v:?}").unwrap();
            }
            s.push('\n');
        }
        files.push((format!("embedding_{c}.csv"), s));
    }
    if !r.attractors.is_empty() {
        let text = serde_json::to_string_pretty(&r.attractors).expect("serializable");
        files.push(("attractors.json".to_string(), text + "\n"));
    }
    for d in &r.diffeo {
        files.push((format!("diffeo_{}.json", d.cluster), d.stack.to_json() + "\n"));
    }
    let error = outcome.error.as_ref().map(|e| json!({ "module": e.module(), "message": e.to_string() }));
    let metrics = json!({
        "partial": outcome.is_partial(),
        "error": error,
        "source": r.source,
        "sampling_frequency": r.sampling_frequency,
        "trajectories": r.trajectories,
        "total_samples": r.total_samples,
        "dim": r.dim,
        "kernel": r.kernel,
        "components": r.components,
        "q": r.q,
        "relevant": r.relevant,
        "assigned_eigvecs": r.assigned_eigvecs,
        "accuracy": r.accuracy,
        "truth_errors": r.truth_errors,
        "baselines": r.baselines.iter().map(|b| json!({
            "method": b.method,
            "accuracy": b.accuracy,
            "iterations": b.iterations,
        })).collect::<Vec<_>>(),
        "diffeo": r.diffeo,
        "warnings": r.warnings,
        "stages": r.stages,
    });
    files.push((
        "metrics.json".to_string(),
        serde_json::to_string_pretty(&metrics).expect("serializable") + "\n",
    ));
    files
}

/// Writes every artifact and `manifest.json` into `dir`.
pub fn export_results(outcome: &PipelineOutcome, dir: &Path) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    let mut entries = Vec::new();
    for (name, text) in render(outcome) {
        let path = dir.join(&name);
        std::fs::write(&path, &text).map_err(|e| CliError::Io(path.clone(), e))?;
        entries.push(ManifestEntry {
            bytes: text.len(),
            sha256: sha256_hex(text.as_bytes()),
            file: name,
        });
    }
    let manifest = Manifest {
        partial: outcome.is_partial(),
        files: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::Io(path.clone(), e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::PipelineReport;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn empty_sections_omitted() {
        let outcome = PipelineOutcome {
            report: PipelineReport::default(),
            error: Some(CliError::Config("x".into())),
        };
        let names: Vec<String> = render(&outcome).into_iter().map(|f| f.0).collect();
        assert_eq!(names, vec!["metrics.json".to_string()]);
    }

    #[test]
    fn partial_marker_and_module() {
        let outcome = PipelineOutcome {
            report: PipelineReport::default(),
            error: Some(CliError::Csv { line: 3, reason: "bad".into() }),
        };
        let files = render(&outcome);
        let v: serde_json::Value = serde_json::from_str(&files[0].1).unwrap();
        assert_eq!(v["partial"], true);
        assert_eq!(v["error"]["module"], "cli");
        assert!(v["error"]["message"].as_str().unwrap().contains("line 3"));
    }
}
