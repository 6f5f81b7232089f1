use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pathways::{DEFAULT_EPS, DEFAULT_TOL};
use crate::protocol::{default_temperature_sweep, DEFAULT_X_POINTS};

use super::CliError;

/// Parameter varied by the `sweep` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    NMax,
    Dlambda,
    A,
}

impl SweepParam {
    pub fn column(&self) -> &'static str {
        match self {
            SweepParam::NMax => "n_max",
            SweepParam::Dlambda => "dlambda",
            SweepParam::A => "a",
        }
    }

    pub fn default_values(&self) -> Vec<f64> {
        match self {
            SweepParam::NMax => [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 50].map(f64::from).to_vec(),
            SweepParam::Dlambda => (2..=20).rev().map(|m| 1.0 / m as f64).collect(),
            SweepParam::A => default_temperature_sweep(),
        }
    }
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub s: Option<usize>,
    pub a: Option<f64>,
    pub n_max: Option<usize>,
    pub lambda_s: Option<f64>,
    pub dlambda: Option<f64>,
    pub omega_ratio: Option<f64>,
    pub tol: Option<f64>,
    pub eps: Option<f64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub x_points: Option<usize>,
    pub w_points: Option<usize>,
    pub param: Option<SweepParam>,
    pub values: Option<Vec<f64>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: ConfigFile) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(s, a, n_max, lambda_s, dlambda, omega_ratio, tol, eps, jobs, out, x_points, w_points, param, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    RunCenter,
    RunSpring,
    Sweep,
    Pathways,
}

/// Fully resolved settings of one invocation, echoed into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub s: usize,
    /// `a` for the center protocol, `a0` for the spring protocol.
    pub a: f64,
    pub n_max: usize,
    pub lambda_s: f64,
    pub dlambda: Option<f64>,
    pub omega_ratio: f64,
    pub tol: f64,
    pub eps: f64,
    pub jobs: usize,
    pub out: PathBuf,
    pub x_points: usize,
    pub w_points: Option<usize>,
    pub param: Option<SweepParam>,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn resolve(command: Command, file: ConfigFile) -> Result<Self, CliError> {
        let (s, a, n_max) = match command {
            Command::RunCenter | Command::Sweep => (11, 1.0, 10),
            Command::RunSpring => (11, 0.1, 100),
            Command::Pathways => (3, 1.0, 3),
        };
        let param = match command {
            Command::Sweep => Some(file.param.unwrap_or(SweepParam::Dlambda)),
            _ => None,
        };
        let values = match (param, file.values) {
            (Some(p), None) => p.default_values(),
            (_, Some(v)) => v,
            (None, None) => Vec::new(),
        };
        if param.is_some() && values.is_empty() {
            return Err(CliError::config("sweep needs at least one value"));
        }
        let jobs = file.jobs.unwrap_or(0);
        Ok(Self {
            command,
            s: file.s.unwrap_or(s),
            a: file.a.unwrap_or(a),
            n_max: file.n_max.unwrap_or(n_max),
            lambda_s: file.lambda_s.unwrap_or(1.0),
            dlambda: file.dlambda,
            omega_ratio: file.omega_ratio.unwrap_or(1.3),
            tol: file.tol.unwrap_or(DEFAULT_TOL),
            eps: file.eps.unwrap_or(DEFAULT_EPS),
            jobs,
            out: file.out.unwrap_or_else(|| PathBuf::from("stepwise-out")),
            x_points: file.x_points.unwrap_or(DEFAULT_X_POINTS),
            w_points: file.w_points,
            param,
            values,
        })
    }

    /// Single-line JSON used in output metadata.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configs always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_the_upper_layer() {
        let base = ConfigFile {
            s: Some(5),
            a: Some(2.0),
            ..Default::default()
        };
        let top = ConfigFile {
            a: Some(4.0),
            ..Default::default()
        };
        let merged = base.overlay(top);
        assert_eq!(merged.s, Some(5));
        assert_eq!(merged.a, Some(4.0));
    }

    #[test]
    fn defaults_per_command() {
        let c = RunConfig::resolve(Command::RunSpring, ConfigFile::default()).unwrap();
        assert_eq!((c.s, c.a, c.n_max, c.omega_ratio), (11, 0.1, 100, 1.3));
        let p = RunConfig::resolve(Command::Pathways, ConfigFile::default()).unwrap();
        assert_eq!((p.s, p.n_max, p.tol), (3, 3, 0.05));
        let w = RunConfig::resolve(Command::Sweep, ConfigFile::default()).unwrap();
        assert_eq!(w.param, Some(SweepParam::Dlambda));
        assert_eq!(w.values.first(), Some(&0.05));
        assert_eq!(w.values.last(), Some(&0.5));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"bogus": 1}"#).is_err());
        let c: ConfigFile = serde_json::from_str(r#"{"s": 4, "param": "n-max"}"#).unwrap();
        assert_eq!(c.param, Some(SweepParam::NMax));
    }
}
