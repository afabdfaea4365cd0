//! Claims JSONL and feature-view manifest/CSV files.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{validate, Claim, Coverage, Dataset, FeatureView};
use crate::error::{Result, VeriflowError};

#[derive(Debug, Serialize, Deserialize)]
struct ViewManifest {
    name: String,
    dim: usize,
    /// Data CSV path, relative to the manifest's directory.
    rows: String,
}

#[derive(Deserialize)]
struct RawClaim {
    claim_id: String,
    debate_id: String,
    speaker: String,
    text: String,
    label: String,
    split: super::Split,
    #[serde(default)]
    audio: Option<super::AudioSpan>,
}

pub fn load_claims(path: &Path) -> Result<Vec<Claim>> {
    let raw = fs::read_to_string(path).map_err(|e| VeriflowError::io(path, e))?;
    let mut claims = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = || format!("{}:{}", path.display(), lineno + 1);
        let raw: RawClaim =
            serde_json::from_str(line).map_err(|e| VeriflowError::parse(location(), e))?;
        let claim = Claim {
            claim_id: raw.claim_id,
            debate_id: raw.debate_id,
            speaker: raw.speaker,
            text: raw.text,
            label: raw.label.parse()?,
            split: raw.split,
            audio_span: raw.audio,
        };
        if !seen.insert(claim.claim_id.clone()) {
            return Err(VeriflowError::DuplicateClaim(claim.claim_id));
        }
        claims.push(claim);
    }
    Ok(claims)
}

pub fn write_claims(path: &Path, claims: &[Claim]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| VeriflowError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for claim in claims {
        let line = serde_json::to_string(claim).map_err(|e| VeriflowError::parse("claim", e))?;
        writeln!(out, "{line}").map_err(|e| VeriflowError::io(path, e))?;
    }
    out.flush().map_err(|e| VeriflowError::io(path, e))
}

pub fn load_view(manifest_path: &Path) -> Result<FeatureView> {
    let raw = fs::read_to_string(manifest_path).map_err(|e| VeriflowError::io(manifest_path, e))?;
    let manifest: ViewManifest = serde_json::from_str(&raw)
        .map_err(|e| VeriflowError::parse(manifest_path.display().to_string(), e))?;
    let data_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.rows);
    let location = data_path.display().to_string();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&data_path)
        .map_err(|e| VeriflowError::parse(&location, e))?;
    let headers = reader
        .headers()
        .map_err(|e| VeriflowError::parse(&location, e))?
        .clone();
    if headers.len() != manifest.dim + 1 {
        return Err(VeriflowError::DimensionMismatch {
            context: format!("header of {location}"),
            expected: manifest.dim,
            actual: headers.len().saturating_sub(1),
        });
    }
    let expected_header = std::iter::once("claim_id".to_string())
        .chain((0..manifest.dim).map(|j| format!("f{j}")));
    if !headers.iter().zip(expected_header).all(|(a, b)| a == b) {
        return Err(VeriflowError::parse(&location, "header must be claim_id,f0,...,f{dim-1}"));
    }

    let mut view = FeatureView::new(manifest.name, manifest.dim);
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| VeriflowError::parse(&location, e))?;
        if record.len() != manifest.dim + 1 {
            return Err(VeriflowError::DimensionMismatch {
                context: format!("{location} row {}", i + 1),
                expected: manifest.dim,
                actual: record.len().saturating_sub(1),
            });
        }
        let claim_id = record[0].to_string();
        let row = record
            .iter()
            .skip(1)
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| VeriflowError::parse(format!("{location} row {}", i + 1), e))
            })
            .collect::<Result<Vec<f64>>>()?;
        if view.rows.contains_key(&claim_id) {
            return Err(VeriflowError::DuplicateClaim(format!("{claim_id} in view {}", view.name)));
        }
        view.insert(claim_id, row)?;
    }
    Ok(view)
}

/// Writes `<stem>.json` (manifest) and `<stem>.csv` (rows) side by side.
/// Rows are emitted in claim-id order with shortest round-trip float text.
pub fn write_view(view: &FeatureView, manifest_path: &Path) -> Result<PathBuf> {
    let data_path = manifest_path.with_extension("csv");
    let rows_name = data_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| VeriflowError::invalid(format!("bad view path {}", manifest_path.display())))?
        .to_string();
    let manifest = ViewManifest {
        name: view.name.clone(),
        dim: view.dim,
        rows: rows_name,
    };
    let text = serde_json::to_string(&manifest).map_err(|e| VeriflowError::parse("manifest", e))?;
    fs::write(manifest_path, format!("{text}\n")).map_err(|e| VeriflowError::io(manifest_path, e))?;

    let file = fs::File::create(&data_path).map_err(|e| VeriflowError::io(&data_path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| VeriflowError::io(&data_path, e);
    write!(out, "claim_id").map_err(io_err)?;
    for j in 0..view.dim {
        write!(out, ",f{j}").map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;
    for (claim_id, row) in &view.rows {
        write!(out, "{claim_id}").map_err(io_err)?;
        for value in row {
            write!(out, ",{value}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(data_path)
}

/// Strict-coverage load: every view must cover every claim.
pub fn load_dataset(claims_path: &Path, view_paths: &[PathBuf]) -> Result<Dataset> {
    load_dataset_with(claims_path, view_paths, Coverage::Strict)
}

pub fn load_dataset_with(
    claims_path: &Path,
    view_paths: &[PathBuf],
    coverage: Coverage,
) -> Result<Dataset> {
    let claims = load_claims(claims_path)?;
    let views = view_paths
        .iter()
        .map(|p| load_view(p))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(claims, views);
    let report = validate(&dataset, coverage);
    match report.error_count() {
        0 => Ok(dataset),
        n => Err(VeriflowError::Validation(n)),
    }
}
