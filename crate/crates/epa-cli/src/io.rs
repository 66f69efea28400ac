//! CSV ingestion and emission for panels and distance matrices.

use std::collections::HashMap;
use std::path::Path;

use epa_core::{DistanceMatrix, ErrorPanel};
use nalgebra::DMatrix;

use crate::error::{CliError, Result};

/// Read a balanced panel from long-format CSV with columns
/// `unit,time,e1,e2`. Units keep their first-appearance order; times are
/// sorted ascending (numerically when every time parses as a number,
/// lexicographically otherwise).
pub fn ingest_long_csv(path: &Path) -> Result<ErrorPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::input(format!("cannot read header: {e}")))?
        .clone();
    let expect = ["unit", "time", "e1", "e2"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expect {
        return Err(CliError::input(format!(
            "expected header unit,time,e1,e2; found {}",
            got.join(",")
        )));
    }

    struct Row {
        unit: String,
        time: String,
        e1: f64,
        e2: f64,
        line: u64,
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(format!("malformed CSV: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(CliError::input(format!("line {line}: expected 4 fields")));
        }
        let parse = |field: usize, name: &str| -> Result<f64> {
            record[field].parse::<f64>().map_err(|_| {
                CliError::input(format!("line {line}: non-numeric {name} value '{}'", &record[field]))
            })
        };
        rows.push(Row {
            unit: record[0].to_string(),
            time: record[1].to_string(),
            e1: parse(2, "e1")?,
            e2: parse(3, "e2")?,
            line,
        });
    }
    if rows.is_empty() {
        return Err(CliError::input("no data rows".into()));
    }

    let mut units: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    for row in &rows {
        if !unit_index.contains_key(&row.unit) {
            unit_index.insert(row.unit.clone(), units.len());
            units.push(row.unit.clone());
        }
    }
    let mut times: Vec<String> = rows.iter().map(|r| r.time.clone()).collect();
    times.sort();
    times.dedup();
    if times.iter().all(|t| t.parse::<f64>().is_ok()) {
        times.sort_by(|a, b| {
            a.parse::<f64>().unwrap().partial_cmp(&b.parse::<f64>().unwrap()).unwrap()
        });
    }
    let time_index: HashMap<&str, usize> =
        times.iter().enumerate().map(|(k, t)| (t.as_str(), k)).collect();

    let (n, t) = (units.len(), times.len());
    let mut e1 = DMatrix::from_element(n, t, f64::NAN);
    let mut e2 = DMatrix::from_element(n, t, f64::NAN);
    let mut seen = vec![false; n * t];
    for row in &rows {
        let i = unit_index[&row.unit];
        let j = time_index[row.time.as_str()];
        if seen[i * t + j] {
            return Err(CliError::input(format!(
                "line {}: duplicate cell ({},{})",
                row.line, row.unit, row.time
            )));
        }
        seen[i * t + j] = true;
        e1[(i, j)] = row.e1;
        e2[(i, j)] = row.e2;
    }
    for i in 0..n {
        for j in 0..t {
            if !seen[i * t + j] {
                return Err(CliError::input(format!(
                    "unbalanced panel at ({},{})",
                    units[i], times[j]
                )));
            }
        }
    }
    ErrorPanel::new(e1, e2, units, times).map_err(CliError::from)
}

/// Write a panel back to long-format CSV. Values round-trip bitwise because
/// f64 formatting uses the shortest exact representation.
#[cfg_attr(not(test), allow(dead_code))]
pub fn emit_long_csv<W: std::io::Write>(panel: &ErrorPanel, out: &mut W) -> Result<()> {
    let write = |out: &mut W, text: String| {
        out.write_all(text.as_bytes()).map_err(|e| CliError::input(format!("write failed: {e}")))
    };
    write(out, "unit,time,e1,e2\n".into())?;
    for i in 0..panel.n_units() {
        for j in 0..panel.n_periods() {
            write(
                out,
                format!(
                    "{},{},{},{}\n",
                    panel.unit_labels()[i],
                    panel.time_labels()[j],
                    panel.e1()[(i, j)],
                    panel.e2()[(i, j)]
                ),
            )?;
        }
    }
    Ok(())
}

/// Read an n x n distance matrix from CSV with a `unit` label column and one
/// labeled column per unit, aligned to the panel's unit order. Asymmetries
/// up to 1e-9 are averaged away; larger ones are errors.
pub fn ingest_distance_csv(path: &Path, unit_labels: &[String]) -> Result<DistanceMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::input(format!("cannot read header: {e}")))?
        .clone();
    let n = unit_labels.len();
    let cols: Vec<&str> = headers.iter().skip(1).collect();
    let col_of: HashMap<&str, usize> = cols.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    for label in unit_labels {
        if !col_of.contains_key(label.as_str()) {
            return Err(CliError::input(format!("distance CSV is missing unit '{label}'")));
        }
    }

    let mut raw = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(format!("malformed CSV: {e}")))?;
        let row_label = record[0].to_string();
        for (k, col) in cols.iter().enumerate() {
            let value: f64 = record[k + 1].parse().map_err(|_| {
                CliError::input(format!("non-numeric distance '{}' at ({row_label},{col})", &record[k + 1]))
            })?;
            raw.insert((row_label.clone(), col.to_string()), value);
        }
    }

    let mut d = DMatrix::zeros(n, n);
    for (i, ui) in unit_labels.iter().enumerate() {
        for (j, uj) in unit_labels.iter().enumerate() {
            let key = (ui.clone(), uj.clone());
            d[(i, j)] = *raw
                .get(&key)
                .ok_or_else(|| CliError::input(format!("distance CSV is missing row '{ui}'")))?;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let gap = (d[(i, j)] - d[(j, i)]).abs();
            if gap > 1e-9 {
                return Err(CliError::input(format!(
                    "distances not symmetric at ({},{}): {} vs {}",
                    unit_labels[i],
                    unit_labels[j],
                    d[(i, j)],
                    d[(j, i)]
                )));
            }
            let avg = 0.5 * (d[(i, j)] + d[(j, i)]);
            d[(i, j)] = avg;
            d[(j, i)] = avg;
        }
    }
    DistanceMatrix::new(d).map_err(CliError::from)
}

/// Nearest-rank q-quantile of the off-diagonal distances.
pub fn bandwidth_from_quantile(dist: &DistanceMatrix, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(CliError::input(format!("quantile {q} outside [0,1]")));
    }
    let n = dist.n_units();
    if n < 2 {
        return Err(CliError::input("quantile bandwidth needs at least 2 units".into()));
    }
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            values.push(dist.get(i, j));
        }
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Ok(values[rank - 1])
}
