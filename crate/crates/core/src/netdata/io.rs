//! Dataset directory format.
//!
//! ```text
//! <dir>/manifest.json                 {"n_r", "n_v", "view_names", "subjects": [{"id", "label"}]}
//! <dir>/subjects/<id>/view_<v>.csv    n_r rows of n_r comma-separated floats, no header
//! ```
//!
//! Floats are written with 17 significant digits so every `f64` round-trips.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{validate_view, DataError, MultiViewSample, Population};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub n_r: usize,
    pub n_v: usize,
    pub view_names: Vec<String>,
    pub subjects: Vec<ManifestSubject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSubject {
    pub id: String,
    pub label: String,
}

/// 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

pub fn write_matrix_csv(path: &Path, m: &Tensor) -> Result<(), DataError> {
    let mut out = String::with_capacity(m.len() * 24);
    for r in 0..m.rows() {
        let line: Vec<String> = m.row_slice(r).iter().map(|&x| format_float(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads a headerless CSV of floats. Rows must all have the same width.
pub fn read_matrix_csv(path: &Path) -> Result<Tensor, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut width = 0;
        for field in line.split(',') {
            let value: f64 = field.trim().parse().map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("{field:?}: {e}"),
            })?;
            data.push(value);
            width += 1;
        }
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("row has {width} fields, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    Ok(Tensor::from_vec(rows, cols.unwrap_or(0), data).expect("row widths checked"))
}

fn view_path(dir: &Path, id: &str, v: usize) -> PathBuf {
    dir.join("subjects").join(id).join(format!("view_{v}.csv"))
}

/// Loads and validates a dataset directory. Sample order follows the manifest.
pub fn load_dataset(dir: &Path) -> Result<Population, DataError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(DataError::MissingFile(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| DataError::Manifest { path: manifest_path.clone(), message: e.to_string() })?;
    if manifest.view_names.len() != manifest.n_v {
        return Err(DataError::Manifest {
            path: manifest_path,
            message: format!("n_v = {} but {} view names", manifest.n_v, manifest.view_names.len()),
        });
    }
    let mut samples = Vec::with_capacity(manifest.subjects.len());
    for subject in &manifest.subjects {
        let mut views = Vec::with_capacity(manifest.n_v);
        for v in 0..manifest.n_v {
            let m = read_matrix_csv(&view_path(dir, &subject.id, v))?;
            if m.rows() != manifest.n_r || m.cols() != manifest.n_r {
                return Err(DataError::DimensionMismatch {
                    subject: subject.id.clone(),
                    view: v,
                    expected: manifest.n_r,
                    rows: m.rows(),
                    cols: m.cols(),
                });
            }
            validate_view(&subject.id, v, &m)?;
            views.push(m);
        }
        samples.push(MultiViewSample::new(subject.id.clone(), subject.label.clone(), views)?);
    }
    Population::new(manifest.view_names, samples)
}

pub fn save_dataset(population: &Population, dir: &Path) -> Result<(), DataError> {
    if population.is_empty() {
        return Err(DataError::EmptyPopulation);
    }
    let manifest = Manifest {
        n_r: population.n_r(),
        n_v: population.n_v(),
        view_names: population.view_names().to_vec(),
        subjects: population
            .samples()
            .iter()
            .map(|s| ManifestSubject { id: s.subject_id().to_string(), label: s.label().to_string() })
            .collect(),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
    for s in population.samples() {
        let sub = dir.join("subjects").join(s.subject_id());
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        for (v, m) in s.views().iter().enumerate() {
            write_matrix_csv(&view_path(dir, s.subject_id(), v), m)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, n: usize, scale: f64) -> MultiViewSample {
        let view = |k: f64| Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { (i + j) as f64 * scale * k / 3.0 });
        MultiViewSample::new(id, "ctl", vec![view(1.0), view(0.1)]).unwrap()
    }

    #[test]
    fn round_trip_two_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let pop = Population::new(vec!["a".into(), "b".into()], vec![sample("s0", 3, 0.7), sample("s1", 3, 1.3)]).unwrap();
        save_dataset(&pop, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, pop);
        assert_eq!(back.n_r(), 3);
        assert_eq!(back.n_v(), 2);
    }

    #[test]
    fn single_subject_layout() {
        let dir = tempfile::tempdir().unwrap();
        let pop = Population::new(vec!["a".into(), "b".into()], vec![sample("only", 4, 1.0)]).unwrap();
        save_dataset(&pop, dir.path()).unwrap();
        assert!(dir.path().join("manifest.json").is_file());
        assert!(dir.path().join("subjects/only/view_0.csv").is_file());
        assert!(dir.path().join("subjects/only/view_1.csv").is_file());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let pop = Population::new(vec!["a".into(), "b".into()], vec![sample("s0", 35, 0.01)]).unwrap();
        save_dataset(&pop, dir.path()).unwrap();
        let path = dir.path().join("subjects/s0/view_1.csv");
        let text = fs::read_to_string(&path).unwrap();
        let trimmed: Vec<&str> = text.lines().take(34).collect();
        fs::write(&path, trimmed.join("\n")).unwrap();
        match load_dataset(dir.path()) {
            Err(DataError::DimensionMismatch { subject, view, expected, rows, cols }) => {
                assert_eq!((subject.as_str(), view, expected, rows, cols), ("s0", 1, 35, 34, 35));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_entry_names_location() {
        let dir = tempfile::tempdir().unwrap();
        let pop = Population::new(vec!["a".into(), "b".into()], vec![sample("s0", 3, 1.0)]).unwrap();
        save_dataset(&pop, dir.path()).unwrap();
        fs::write(dir.path().join("subjects/s0/view_0.csv"), "0,-0.1,1\n-0.1,0,1\n1,1,0\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, DataError::Negative { ref subject, view: 0, i: 0, j: 1, .. } if subject == "s0"), "{err}");
    }

    #[test]
    fn missing_view_file() {
        let dir = tempfile::tempdir().unwrap();
        let pop = Population::new(vec!["a".into(), "b".into()], vec![sample("s0", 3, 1.0)]).unwrap();
        save_dataset(&pop, dir.path()).unwrap();
        fs::remove_file(dir.path().join("subjects/s0/view_1.csv")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DataError::MissingFile(_))));
        assert!(matches!(load_dataset(&dir.path().join("nope")), Err(DataError::MissingFile(_))));
    }

    #[test]
    fn seventeen_digit_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 0.084, 2.0_f64.sqrt() * 1e-7, 3.740, 0.0] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }
}
