use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use super::CliError;
use crate::sim::MetricsReport;

/// Paths written for one run.
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub summary: PathBuf,
    pub alignment: PathBuf,
    pub drift: PathBuf,
    pub rtt: PathBuf,
    pub trace: Option<PathBuf>,
}

/// Writes `contents` to `dir/name` via a temporary file and rename, so a
/// reader never sees a half-written file.
pub(crate) fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

/// The report as it appears in `summary.toml`.
pub fn summary_toml(report: &MetricsReport) -> Result<String, CliError> {
    toml::to_string(report).map_err(|e| CliError::Io {
        path: "summary.toml".into(),
        source: std::io::Error::other(e.to_string()),
    })
}

pub fn write_report(
    dir: &Path,
    report: &MetricsReport,
    trace: Option<&[String]>,
) -> Result<OutputFiles, CliError> {
    let summary = summary_toml(report)?;

    let mut hist = String::from("bin,count\n");
    for (bin, count) in report.pooled_alignment() {
        writeln!(hist, "{bin},{count}").expect("string write");
    }
    let mut drift = String::from("frame,delta_samples\n");
    for p in &report.drift_trace {
        writeln!(drift, "{},{}", p.frame, p.delta_samples).expect("string write");
    }
    let mut rtt = String::from("rtt_ns\n");
    for v in &report.rtt_samples {
        writeln!(rtt, "{v}").expect("string write");
    }

    Ok(OutputFiles {
        summary: write_atomic(dir, "summary.toml", summary.as_bytes())?,
        alignment: write_atomic(dir, "alignment_hist.csv", hist.as_bytes())?,
        drift: write_atomic(dir, "drift_trace.csv", drift.as_bytes())?,
        rtt: write_atomic(dir, "rtt_samples.csv", rtt.as_bytes())?,
        trace: match trace {
            Some(lines) => {
                let mut text = lines.join("\n");
                text.push('\n');
                Some(write_atomic(dir, "trace.txt", text.as_bytes())?)
            }
            None => None,
        },
    })
}
