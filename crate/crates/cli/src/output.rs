//! CSV writing and run manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::failure::CmdResult;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// 17 significant digits, enough to round-trip any f64.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub struct CsvOut {
    inner: BufWriter<File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> CmdResult<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut inner = BufWriter::new(File::create(path)?);
        writeln!(inner, "{}", header.join(","))?;
        Ok(Self { inner })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> CmdResult {
        let line: Vec<&str> = fields.iter().map(AsRef::as_ref).collect();
        writeln!(self.inner, "{}", line.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> CmdResult {
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub seed: Option<u64>,
    pub resolved_config: C,
    pub outputs: Vec<PathBuf>,
    pub started: String,
    pub finished: String,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes `<output>.manifest.json` next to `output`.
pub fn write_manifest<C: Serialize>(output: &Path, manifest: &RunManifest<C>) -> CmdResult {
    let mut f = BufWriter::new(File::create(manifest_path(output))?);
    serde_json::to_writer_pretty(&mut f, manifest)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trips() {
        for x in [0.1, 1.0 / 3.0, 0.597, -2.5e-300, 123456.789] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(float(f64::NAN), "NaN");
    }

    #[test]
    fn manifest_name() {
        assert_eq!(
            manifest_path(Path::new("out/fig4.csv")),
            PathBuf::from("out/fig4.csv.manifest.json")
        );
    }
}
