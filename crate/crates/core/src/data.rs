//! Observations, datasets and CSV I/O.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Gaussian,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Scalar(f64),
    Labeled { features: Vec<f64>, label: bool },
}

impl Observation {
    pub fn task(&self) -> Task {
        match self {
            Observation::Scalar(_) => Task::Gaussian,
            Observation::Labeled { .. } => Task::Logistic,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Observation::Scalar(v) => Some(*v),
            Observation::Labeled { .. } => None,
        }
    }
}

/// An ordered collection of observations of a single task.
///
/// Empty datasets are legal; they stand for "no real data" (`n_L = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    provenance: Provenance,
    task: Task,
    dim: usize,
}

impl Dataset {
    pub fn empty(task: Task, provenance: Provenance) -> Self {
        Self { observations: Vec::new(), provenance, task, dim: 0 }
    }

    pub fn gaussian(values: impl IntoIterator<Item = f64>, provenance: Provenance) -> Self {
        Self {
            observations: values.into_iter().map(Observation::Scalar).collect(),
            provenance,
            task: Task::Gaussian,
            dim: 0,
        }
    }

    pub fn logistic(rows: impl IntoIterator<Item = (Vec<f64>, bool)>, provenance: Provenance) -> Result<Self> {
        let mut dim = None;
        let mut observations = Vec::new();
        for (i, (features, label)) in rows.into_iter().enumerate() {
            match dim {
                None => dim = Some(features.len()),
                Some(d) if d != features.len() => {
                    return Err(Error::invalid(format!("row {i} has {} features, expected {d}", features.len())))
                }
                _ => {}
            }
            observations.push(Observation::Labeled { features, label });
        }
        Ok(Self { observations, provenance, task: Task::Logistic, dim: dim.unwrap_or(0) })
    }

    pub fn from_observations(observations: Vec<Observation>, task: Task, provenance: Provenance) -> Result<Self> {
        let mut dim = None;
        for (i, o) in observations.iter().enumerate() {
            if o.task() != task {
                return Err(Error::incompatible(format!("observation {i} is not a {task:?} row")));
            }
            if let Observation::Labeled { features, .. } = o {
                match dim {
                    None => dim = Some(features.len()),
                    Some(d) if d != features.len() => {
                        return Err(Error::invalid(format!("row {i} has inconsistent width")))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { observations, provenance, task, dim: dim.unwrap_or(0) })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Feature dimension for logistic data; zero for scalar data.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Scalar values, or `None` for logistic data.
    pub fn scalars(&self) -> Option<Vec<f64>> {
        self.observations.iter().map(Observation::as_scalar).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.observations
            .iter()
            .filter_map(|o| match o {
                Observation::Labeled { label, .. } => Some(*label),
                Observation::Scalar(_) => None,
            })
            .collect()
    }

    /// The first `n` observations.
    pub fn prefix(&self, n: usize) -> Dataset {
        self.select(0..n.min(self.len()))
    }

    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Dataset {
        Dataset {
            observations: indices.into_iter().map(|i| self.observations[i].clone()).collect(),
            provenance: self.provenance,
            task: self.task,
            dim: self.dim,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}

fn parse_cell(cell: &str, path: &Path, line: usize) -> Result<f64> {
    let t = cell.trim();
    t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("non-numeric cell {t:?}"),
    })
}

/// Load a dataset from a comma-separated file.
///
/// Gaussian files hold a single `value` column. A headerless single-column file
/// is also accepted. Logistic files need a header with a `label` column; every
/// other column is a feature, kept in file order.
pub fn load_csv(path: impl AsRef<Path>, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut records = reader.records();
    let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };

    let first = match records.next() {
        Some(r) => r?,
        None => return Ok(Dataset::empty(task, Provenance::Real)),
    };

    match task {
        Task::Gaussian => {
            let mut values = Vec::new();
            if first.len() != 1 {
                return Err(parse_err(1, format!("expected 1 column, found {}", first.len())));
            }
            let head = first.get(0).unwrap_or_default();
            if head.trim().parse::<f64>().is_ok() {
                values.push(parse_cell(head, path, 1)?);
            }
            for (i, rec) in records.enumerate() {
                let rec = rec?;
                let line = i + 2;
                if rec.len() != 1 {
                    return Err(parse_err(line, format!("expected 1 column, found {}", rec.len())));
                }
                values.push(parse_cell(&rec[0], path, line)?);
            }
            Ok(Dataset::gaussian(values, Provenance::Real))
        }
        Task::Logistic => {
            let header: Vec<String> = first.iter().map(|s| s.to_string()).collect();
            let label_col = header
                .iter()
                .position(|h| h == "label")
                .ok_or_else(|| parse_err(1, "missing `label` column".into()))?;
            let width = header.len();
            let mut rows = Vec::new();
            for (i, rec) in records.enumerate() {
                let rec = rec?;
                let line = i + 2;
                if rec.len() != width {
                    return Err(parse_err(line, format!("expected {width} columns, found {}", rec.len())));
                }
                let mut features = Vec::with_capacity(width - 1);
                let mut label = false;
                for (j, cell) in rec.iter().enumerate() {
                    let v = parse_cell(cell, path, line)?;
                    if j == label_col {
                        label = match v {
                            0.0 => false,
                            1.0 => true,
                            other => return Err(parse_err(line, format!("label {other} is not 0 or 1"))),
                        };
                    } else {
                        features.push(v);
                    }
                }
                rows.push((features, label));
            }
            Dataset::logistic(rows, Provenance::Real)
        }
    }
}

/// Write a dataset in the format read by [`load_csv`]. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut buf = String::new();
    match dataset.task() {
        Task::Gaussian => {
            buf.push_str("value\n");
            for o in dataset {
                if let Observation::Scalar(v) = o {
                    buf.push_str(&format!("{v:?}\n"));
                }
            }
        }
        Task::Logistic => {
            let header: Vec<String> =
                (1..=dataset.dim()).map(|j| format!("f{j}")).chain(["label".to_string()]).collect();
            buf.push_str(&header.join(","));
            buf.push('\n');
            for o in dataset {
                if let Observation::Labeled { features, label } = o {
                    for f in features {
                        buf.push_str(&format!("{f:?},"));
                    }
                    buf.push_str(if *label { "1\n" } else { "0\n" });
                }
            }
        }
    }
    out.write_all(buf.as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}
