//! Pipeline configuration and the flat `key = value` config file format.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Source {
    Benchmark(String),
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub source: Source,
    /// Hz. Required for CSV input; benchmarks fall back to their defaults.
    pub sampling_frequency: Option<f64>,
    /// Seconds per generated benchmark trajectory.
    pub duration: Option<f64>,
    /// Keep every `stride`-th sample of each trajectory.
    pub stride: Option<usize>,
    pub sigma: Option<f64>,
    pub theta_r: Option<f64>,
    pub sigma_f: Option<f64>,
    pub epsilon: Option<f64>,
    /// Upper bound on the embedding dimension of each cluster.
    pub embed_dim: Option<usize>,
    pub baselines: bool,
    pub diffeo: bool,
    /// Restricts diffeomorphism training to one cluster.
    pub diffeo_cluster: Option<usize>,
    pub layers: usize,
    pub features: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub truth_labels: Option<PathBuf>,
    pub truth_attractors: Option<PathBuf>,
    pub out: PathBuf,
}

impl PipelineConfig {
    pub fn new(source: Source, out: impl Into<PathBuf>) -> Self {
        Self {
            source,
            sampling_frequency: None,
            duration: None,
            stride: None,
            sigma: None,
            theta_r: None,
            sigma_f: None,
            epsilon: None,
            embed_dim: None,
            baselines: false,
            diffeo: false,
            diffeo_cluster: None,
            layers: 10,
            features: 200,
            epochs: 1000,
            learning_rate: 0.5,
            seed: 0,
            truth_labels: None,
            truth_attractors: None,
            out: out.into(),
        }
    }

    pub fn benchmark(name: &str, out: impl Into<PathBuf>) -> Self {
        Self::new(Source::Benchmark(name.to_string()), out)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => {
                Err(CliError::Config(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        positive("freq", self.sampling_frequency)?;
        positive("duration", self.duration)?;
        positive("sigma", self.sigma)?;
        positive("theta_r", self.theta_r)?;
        positive("sigma_f", self.sigma_f)?;
        positive("learning_rate", Some(self.learning_rate))?;
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(CliError::Config(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        if self.stride == Some(0) {
            return Err(CliError::Config("stride must be at least 1".into()));
        }
        if self.embed_dim == Some(0) {
            return Err(CliError::Config("embed_dim must be at least 1".into()));
        }
        if self.layers == 0 || self.features == 0 {
            return Err(CliError::Config("layers and features must be at least 1".into()));
        }
        if matches!(self.source, Source::Csv(_)) && self.sampling_frequency.is_none() {
            return Err(CliError::Config("CSV input requires freq".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "benchmark" => self.source = Source::Benchmark(value.to_string()),
            "input" => self.source = Source::Csv(PathBuf::from(value)),
            "freq" => self.sampling_frequency = Some(parse(key, value)?),
            "duration" => self.duration = Some(parse(key, value)?),
            "stride" => self.stride = Some(parse(key, value)?),
            "sigma" => self.sigma = Some(parse(key, value)?),
            "theta_r" => self.theta_r = Some(parse(key, value)?),
            "sigma_f" => self.sigma_f = Some(parse(key, value)?),
            "epsilon" => self.epsilon = Some(parse(key, value)?),
            "embed_dim" => self.embed_dim = Some(parse(key, value)?),
            "baselines" => self.baselines = parse(key, value)?,
            "diffeo" => self.diffeo = parse(key, value)?,
            "diffeo_cluster" => self.diffeo_cluster = Some(parse(key, value)?),
            "layers" => self.layers = parse(key, value)?,
            "features" => self.features = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "truth_labels" => self.truth_labels = Some(PathBuf::from(value)),
            "truth_attractors" => self.truth_attractors = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }
}

/// Parses config text into `(line number, key, value)` triples.
pub fn parse_config_text(text: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key or value", n + 1)));
        }
        out.push((n + 1, key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Applies every setting of a config file on top of `config`.
pub fn apply_config_file(config: &mut PipelineConfig, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    for (line, key, value) in parse_config_text(&text)? {
        config
            .set(&key, &value)
            .map_err(|e| CliError::Config(format!("line {line}: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# header\nfreq = 100\n\nsigma = 0.2 # trailing\n";
        let kv = parse_config_text(text).unwrap();
        assert_eq!(kv.len(), 2);
        assert_eq!(kv[0], (2, "freq".into(), "100".into()));
        assert_eq!(kv[1], (4, "sigma".into(), "0.2".into()));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = PipelineConfig::benchmark("heart", "out");
        let err = c.set("colour", "red").unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn missing_equals_names_line() {
        let err = parse_config_text("freq = 1\nbogus\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn csv_needs_frequency() {
        let c = PipelineConfig::new(Source::Csv("a.csv".into()), "out");
        assert!(c.validate().is_err());
        let mut c = c;
        c.set("freq", "50").unwrap();
        assert!(c.validate().is_ok());
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = PipelineConfig::benchmark("heart", "out");
        assert!(c.set("epochs", "many").is_err());
        c.set("epsilon", "1.5").unwrap();
        assert!(c.validate().is_err());
    }
}
