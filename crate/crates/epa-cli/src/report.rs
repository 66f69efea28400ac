//! Report assembly: CSV and human-readable test summaries plus the run
//! manifest with its configuration hash.

use std::fs;
use std::path::Path;

use epa_core::{CdReport, Distribution, TestReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// One line of a report: a computed test with its provenance.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub statistic: f64,
    pub distribution: String,
    pub p_value: f64,
    pub two_sided: bool,
    pub provenance: String,
    pub notes: String,
}

impl From<&TestReport> for ReportRow {
    fn from(r: &TestReport) -> Self {
        ReportRow {
            name: r.name.clone(),
            statistic: r.statistic,
            distribution: distribution_label(r.distribution),
            p_value: r.p_value,
            two_sided: r.two_sided,
            provenance: r.variance_provenance.clone(),
            notes: r.notes.join("; "),
        }
    }
}

impl From<&CdReport> for ReportRow {
    fn from(r: &CdReport) -> Self {
        let notes = if r.defactored {
            format!("computed on residuals after removing {} factors", r.m_used)
        } else {
            String::new()
        };
        ReportRow {
            name: r.name.clone(),
            statistic: r.statistic,
            distribution: distribution_label(r.distribution),
            p_value: r.p_value,
            two_sided: matches!(r.distribution, Distribution::StdNormal),
            provenance: "pairwise_correlations".into(),
            notes,
        }
    }
}

fn distribution_label(d: Distribution) -> String {
    match d {
        Distribution::StdNormal => "N(0,1)".into(),
        Distribution::ChiSquare(df) => format!("chi2({df})"),
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("test,statistic,distribution,p_value,two_sided,provenance,notes\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},\"{}\"\n",
            r.name, r.statistic, r.distribution, r.p_value, r.two_sided, r.provenance, r.notes
        ));
    }
    out
}

pub fn rows_to_text(title: &str, rows: &[ReportRow]) -> String {
    let mut out = format!("{title}\n{}\n", "-".repeat(title.len()));
    out.push_str(&format!(
        "{:<14} {:>12} {:>10} {:>10}  {}\n",
        "test", "statistic", "p-value", "dist", "variance"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<14} {:>12.4} {:>10.4} {:>10}  {}\n",
            r.name, r.statistic, r.p_value, r.distribution, r.provenance
        ));
        if !r.notes.is_empty() {
            out.push_str(&format!("{:<14} note: {}\n", "", r.notes));
        }
    }
    out
}

/// Machine-readable run provenance.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub seed: Option<u64>,
    pub config_hash: String,
    pub version: String,
}

/// Hex SHA-256 of the canonical configuration string; identical
/// configurations produce identical hashes and hence comparable reports.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(seed: Option<u64>, canonical_config: &str) -> Self {
        Manifest {
            seed,
            config_hash: config_hash(canonical_config),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Write `<prefix>.csv`, `<prefix>.txt` and `<prefix>_manifest.json`.
pub fn write_outputs(prefix: &Path, csv: &str, text: &str, manifest: &Manifest) -> Result<()> {
    let write = |path: std::path::PathBuf, content: &str| -> Result<()> {
        fs::write(&path, content)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    };
    write(prefix.with_extension("csv"), csv)?;
    write(prefix.with_extension("txt"), text)?;
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::input(format!("manifest serialization failed: {e}")))?;
    let mut manifest_path = prefix.as_os_str().to_owned();
    manifest_path.push("_manifest.json");
    write(std::path::PathBuf::from(manifest_path), &json)?;
    Ok(())
}
