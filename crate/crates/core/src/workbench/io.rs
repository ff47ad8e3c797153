//! Dense matrix and label files.
//!
//! Matrices are comma-separated decimal text, one matrix row per line,
//! preceded by a `rows,cols` header line. Values are written with 17
//! significant digits so a save/load cycle reproduces every bit. Readers
//! also accept headerless files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{Dataset, KernelMatrix};
use crate::numerics::SymmetricMatrix;
use crate::spc::SimilarityGraph;

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
    f.write_all(contents)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming into {}", path.display()), e))
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{},{}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, format_matrix(m).as_bytes())
}

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses matrix text; `path` only labels diagnostics.
pub fn parse_matrix(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(parse_err(path, 1, 1, "empty matrix file"));
    }

    let header = parse_header(lines[0].1).filter(|&(r, c)| {
        lines.len() - 1 == r && lines[1..].iter().all(|(_, l)| l.split(',').count() == c)
    });
    let (body, expected_cols) = match header {
        Some((_, c)) => (&lines[1..], Some(c)),
        None => (&lines[..], None),
    };

    let mut values = Vec::new();
    let mut cols = expected_cols;
    for &(lineno, line) in body {
        let fields: Vec<&str> = line.split(',').collect();
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    fields.len().min(c) + 1,
                    format!("expected {c} fields, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, col + 1, format!("not a number: `{}`", field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, col + 1, "non-finite value"));
            }
            values.push(v);
        }
    }
    let cols = cols.unwrap_or(0);
    Ok(DMatrix::from_row_slice(body.len(), cols, &values))
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let (r, c) = line.split_once(',')?;
    Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_matrix(&text, path)
}

/// Companion ground-truth file for a data matrix: same stem, `.labels` extension.
pub fn labels_path_for(data: &Path) -> PathBuf {
    data.with_extension("labels")
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    write_atomic(path, format_labels(labels).as_bytes())
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, 1, format!("not a label: `{}`", l.trim())))
        })
        .collect()
}

/// Loads an `m × n` matrix (columns are samples) and its companion labels
/// file when one exists.
pub fn load_dense_matrix(path: &Path) -> Result<Dataset> {
    let values = load_matrix(path)?;
    let lp = labels_path_for(path);
    let labels = if lp.exists() { Some(load_labels(&lp)?) } else { None };
    if let Some(l) = &labels {
        if l.len() != values.ncols() {
            return Err(Error::InvalidLabels(format!(
                "{} has {} labels but {} has {} samples",
                lp.display(),
                l.len(),
                path.display(),
                values.ncols()
            )));
        }
    }
    Dataset::new(values, labels)
}

/// Writes the data matrix and, if present, its labels alongside.
pub fn save_dataset(path: &Path, x: &Dataset) -> Result<()> {
    save_matrix(path, x.values())?;
    if let Some(l) = x.labels() {
        save_labels(&labels_path_for(path), l)?;
    }
    Ok(())
}

pub fn save_kernel(path: &Path, k: &KernelMatrix) -> Result<()> {
    save_matrix(path, k.as_matrix())
}

/// Loads a kernel matrix as a precomputed kernel.
pub fn load_kernel(path: &Path) -> Result<KernelMatrix> {
    Ok(KernelMatrix::precomputed(SymmetricMatrix::new(load_matrix(path)?)?))
}

pub fn save_graph(path: &Path, z: &SimilarityGraph) -> Result<()> {
    save_matrix(path, z.as_matrix())
}

pub fn load_graph(path: &Path) -> Result<SimilarityGraph> {
    SimilarityGraph::new(load_matrix(path)?)
}
