use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::grid::{fmt_num, GriddedDensity};

use super::CliError;

/// Output directory; every file starts with `# config: {...}`.
pub struct OutputDir {
    root: PathBuf,
    config_json: String,
}

impl OutputDir {
    pub fn create(root: &Path, config_json: String) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::unwritable(root, e))?;
        let probe = root.join(".stepwise-probe");
        File::create(&probe).map_err(|e| CliError::unwritable(root, e))?;
        let _ = fs::remove_file(probe);
        Ok(Self {
            root: root.to_path_buf(),
            config_json,
        })
    }

    fn open(&self, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|e| CliError::unwritable(&path, e))?;
        Ok((BufWriter::new(file), path))
    }

    /// Writes a table whose cells are already formatted.
    pub fn table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let (mut w, path) = self.open(name)?;
        let io = |e| CliError::unwritable(&path, e);
        writeln!(w, "# config: {}", self.config_json).map_err(io)?;
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for row in rows {
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn density(&self, name: &str, rho: &GriddedDensity, header: (&str, &str)) -> Result<(), CliError> {
        let (mut w, path) = self.open(name)?;
        let io = |e| CliError::unwritable(&path, e);
        writeln!(w, "# config: {}", self.config_json).map_err(io)?;
        rho.write_csv(&mut w, header).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Pretty JSON document with the resolved config under `"config"`.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), CliError> {
        let config: serde_json::Value = serde_json::from_str(&self.config_json).expect("config JSON is valid");
        let mut doc = serde_json::to_value(body).expect("results always serialize");
        if let serde_json::Value::Object(map) = &mut doc {
            map.insert("config".into(), config);
        }
        let (mut w, path) = self.open(name)?;
        let io = |e| CliError::unwritable(&path, e);
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::unwritable(&path, e.into()))?;
        writeln!(w).map_err(io)?;
        w.flush().map_err(io)
    }
}

pub fn nums(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| fmt_num(*v)).collect()
}
