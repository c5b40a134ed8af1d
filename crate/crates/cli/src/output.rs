//! CSV tables with `# key=value` footer lines, and the run manifest.

use crate::error::CliError;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Shortest round-trip form, so reruns reproduce files byte for byte.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    footer: Vec<(String, String)>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.header.len());
        self.rows.push(fields);
    }

    pub fn footer(&mut self, key: &str, value: impl Into<String>) {
        self.footer.push((key.to_string(), value.into()));
    }

    pub fn render(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let mut out = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        for (k, v) in &self.footer {
            out.extend_from_slice(format!("# {k}={v}\n").as_bytes());
        }
        Ok(out)
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        std::fs::write(&path, self.render()?)?;
        Ok(path)
    }
}

/// Two-column `key,value` table, used for fit summaries.
pub fn key_value(pairs: &[(&str, String)]) -> Table {
    let mut t = Table::new(&["key", "value"]);
    for (k, v) in pairs {
        t.row(vec![k.to_string(), v.clone()]);
    }
    t
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub sidw_cli_version: String,
    pub sidw_core_version: String,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub exit_code: i32,
    pub status: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footer_follows_rows() {
        let mut t = Table::new(&["t", "err"]);
        t.row(vec![num(1.0), num(0.25)]);
        t.footer("fitted_rate", "exact");
        let text = String::from_utf8(t.render().unwrap()).unwrap();
        assert_eq!(text, "t,err\n1e0,2.5e-1\n# fitted_rate=exact\n");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
