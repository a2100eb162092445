//! Loading raw categorical tables, preprocessing recipes that bring them to a
//! single uniform domain size, and the coded CSV + JSON metadata format shared
//! with synthetic data.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{uniform_domains, Dataset, MarginalTable};
use crate::error::{Error, Result};
use crate::synth::{measure_correlation, SynthSpec};

/// Labels treated as missing values.
pub const MISSING_MARKERS: [&str; 2] = ["?", ""];

/// Label assigned to values folded together by `top_m_group`.
pub const OTHER_LABEL: &str = "Other";

fn is_missing(label: &str) -> bool {
    MISSING_MARKERS.contains(&label)
}

/// An in-memory table of string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a comma-separated file, or a whitespace-separated one when the first
/// non-empty line has no comma. Without a header, columns are named `c0, c1, ..`.
pub fn load_csv(path: &Path, has_header: bool) -> Result<RawTable> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_table(&text, has_header)
}

pub fn parse_table(text: &str, has_header: bool) -> Result<RawTable> {
    let comma = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.contains(','));
    let mut lines: Vec<(usize, Vec<String>)> = Vec::new();
    if comma {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            lines.push((line, rec.iter().map(str::to_string).collect()));
        }
    } else {
        for (i, l) in text.lines().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            lines.push((i + 1, l.split_whitespace().map(str::to_string).collect()));
        }
    }
    let mut iter = lines.into_iter();
    let columns = if has_header {
        iter.next()
            .map(|(_, cells)| cells)
            .ok_or_else(|| Error::ShapeError("empty file".into()))?
    } else {
        Vec::new()
    };
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut width = (!columns.is_empty()).then_some(columns.len());
    for (line, cells) in iter {
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(Error::RaggedRows {
                line,
                expected,
                found: cells.len(),
            });
        }
        rows.push(cells);
    }
    let width = width.unwrap_or(0);
    let columns = if columns.is_empty() {
        (0..width).map(|i| format!("c{i}")).collect()
    } else {
        columns
    };
    Ok(RawTable { columns, rows })
}

/// A column by position or by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeStep {
    SelectColumns(Vec<ColumnRef>),
    DropColumns(Vec<ColumnRef>),
    /// Keep the `m` most frequent labels per column and fold the rest into
    /// [`OTHER_LABEL`].
    TopMGroup(usize),
    /// Drop rows with missing cells, then code labels by descending frequency.
    FrequencyRankEncode,
    /// Remove columns with at most `t` distinct non-missing labels.
    DropIfDomainLeq(usize),
}

impl RecipeStep {
    fn name(&self) -> String {
        match self {
            Self::SelectColumns(_) => "select_columns".into(),
            Self::DropColumns(_) => "drop_columns".into(),
            Self::TopMGroup(m) => format!("top_m_group({m})"),
            Self::FrequencyRankEncode => "frequency_rank_encode".into(),
            Self::DropIfDomainLeq(t) => format!("drop_if_domain_leq({t})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessRecipe {
    pub name: String,
    pub steps: Vec<RecipeStep>,
}

impl PreprocessRecipe {
    /// First 16 binary onset columns.
    pub fn clave() -> Self {
        Self {
            name: "clave".into(),
            steps: vec![
                RecipeStep::SelectColumns((0..16).map(ColumnRef::Index).collect()),
                RecipeStep::FrequencyRankEncode,
            ],
        }
    }

    /// Drop the binary `finance` column (position 5), then two most frequent
    /// labels plus `Other` per column.
    pub fn nursery() -> Self {
        Self {
            name: "nursery".into(),
            steps: vec![
                RecipeStep::DropColumns(vec![ColumnRef::Index(5)]),
                RecipeStep::TopMGroup(2),
                RecipeStep::FrequencyRankEncode,
            ],
        }
    }

    /// Drop columns with five or fewer labels, then five most frequent labels
    /// plus `Other`.
    pub fn mushroom() -> Self {
        Self {
            name: "mushroom".into(),
            steps: vec![
                RecipeStep::DropIfDomainLeq(5),
                RecipeStep::TopMGroup(5),
                RecipeStep::FrequencyRankEncode,
            ],
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "clave" => Some(Self::clave()),
            "nursery" => Some(Self::nursery()),
            "mushroom" => Some(Self::mushroom()),
            _ => None,
        }
    }

    /// A builtin name, or a path to a JSON recipe file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(r) = Self::builtin(spec) {
            return Ok(r);
        }
        let path = Path::new(spec);
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Output of [`run_recipe`]: the coded dataset plus the code books.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub columns: Vec<String>,
    /// `labels[j][code]` is the original label behind `code` in column `j`.
    pub labels: Vec<Vec<String>>,
    pub dropped_rows: usize,
}

struct Working {
    columns: Vec<String>,
    /// column-major cells
    cells: Vec<Vec<String>>,
    n: usize,
}

impl Working {
    fn resolve(&self, step: &RecipeStep, refs: &[ColumnRef]) -> Result<Vec<usize>> {
        refs.iter()
            .map(|r| match r {
                ColumnRef::Index(i) if *i < self.columns.len() => Ok(*i),
                ColumnRef::Index(i) => Err(Error::RecipeError {
                    step: step.name(),
                    reason: format!("column index {i} out of range ({} columns)", self.columns.len()),
                }),
                ColumnRef::Name(name) => self.columns.iter().position(|c| c == name).ok_or_else(|| {
                    Error::RecipeError {
                        step: step.name(),
                        reason: format!("no column named `{name}`"),
                    }
                }),
            })
            .collect()
    }

    fn keep(&mut self, keep: &[usize]) {
        self.columns = keep.iter().map(|&i| self.columns[i].clone()).collect();
        self.cells = keep.iter().map(|&i| std::mem::take(&mut self.cells[i])).collect();
    }

    fn drop_missing_rows(&mut self) -> usize {
        let keep: Vec<bool> = (0..self.n)
            .map(|r| self.cells.iter().all(|col| !is_missing(&col[r])))
            .collect();
        let kept = keep.iter().filter(|&&k| k).count();
        for col in &mut self.cells {
            let mut it = keep.iter();
            col.retain(|_| *it.next().unwrap());
        }
        let dropped = self.n - kept;
        self.n = kept;
        dropped
    }
}

/// Labels of one column ordered by descending frequency, ties broken by label.
fn ranked_labels(col: &[String]) -> Vec<(String, usize)> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for cell in col.iter().filter(|c| !is_missing(c)) {
        *freq.entry(cell.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().map(|(l, c)| (l.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn run_recipe(table: &RawTable, recipe: &PreprocessRecipe) -> Result<Ingested> {
    let width = table.num_columns();
    let mut work = Working {
        columns: table.columns.clone(),
        cells: (0..width)
            .map(|j| table.rows.iter().map(|r| r[j].clone()).collect())
            .collect(),
        n: table.num_rows(),
    };
    let mut dropped_rows = 0;
    for step in &recipe.steps {
        match step {
            RecipeStep::SelectColumns(refs) => {
                let keep = work.resolve(step, refs)?;
                work.keep(&keep);
            }
            RecipeStep::DropColumns(refs) => {
                let drop = work.resolve(step, refs)?;
                let keep: Vec<usize> = (0..work.columns.len()).filter(|i| !drop.contains(i)).collect();
                work.keep(&keep);
            }
            RecipeStep::DropIfDomainLeq(t) => {
                let keep: Vec<usize> = (0..work.columns.len())
                    .filter(|&j| ranked_labels(&work.cells[j]).len() > *t)
                    .collect();
                work.keep(&keep);
            }
            RecipeStep::TopMGroup(m) => {
                if *m == 0 {
                    return Err(Error::RecipeError {
                        step: step.name(),
                        reason: "m must be at least 1".into(),
                    });
                }
                for col in &mut work.cells {
                    let ranked = ranked_labels(col);
                    if ranked.len() <= *m {
                        continue;
                    }
                    let top: Vec<&str> = ranked[..*m].iter().map(|(l, _)| l.as_str()).collect();
                    for cell in col.iter_mut() {
                        if !is_missing(cell) && !top.contains(&cell.as_str()) {
                            *cell = OTHER_LABEL.to_string();
                        }
                    }
                }
            }
            RecipeStep::FrequencyRankEncode => {
                dropped_rows += work.drop_missing_rows();
            }
        }
        if work.columns.is_empty() {
            return Err(Error::RecipeError {
                step: step.name(),
                reason: "no columns left".into(),
            });
        }
    }
    dropped_rows += work.drop_missing_rows();
    if work.n == 0 {
        return Err(Error::RecipeError {
            step: "frequency_rank_encode".into(),
            reason: "no rows left".into(),
        });
    }

    let labels: Vec<Vec<String>> = work
        .cells
        .iter()
        .map(|col| ranked_labels(col).into_iter().map(|(l, _)| l).collect())
        .collect();
    let k = labels.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let d = work.columns.len();
    let books: Vec<HashMap<&str, u32>> = labels
        .iter()
        .map(|ls| ls.iter().enumerate().map(|(c, l)| (l.as_str(), c as u32)).collect())
        .collect();
    let mut values = Vec::with_capacity(work.n * d);
    for r in 0..work.n {
        for j in 0..d {
            values.push(books[j][work.cells[j][r].as_str()]);
        }
    }
    let dataset = Dataset::from_flat(uniform_domains(d, k)?, values)?;
    Ok(Ingested {
        dataset,
        columns: work.columns,
        labels,
        dropped_rows,
    })
}

pub fn apply_recipe(table: &RawTable, recipe: &PreprocessRecipe) -> Result<Dataset> {
    run_recipe(table, recipe).map(|i| i.dataset)
}

/// Exact per-attribute value frequencies.
pub fn true_marginals(dataset: &Dataset) -> MarginalTable {
    let n = dataset.n() as f64;
    MarginalTable::new(
        dataset
            .counts()
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / n).collect())
            .collect(),
    )
}

/// Sidecar metadata written next to every coded CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub source: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<PreprocessRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub dropped_rows: usize,
    /// Pearson correlation of the integer codes.
    pub correlation: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependence: Option<String>,
}

impl DatasetMetadata {
    pub fn for_synthetic(spec: &SynthSpec, dataset: &Dataset) -> Self {
        Self {
            source: format!("rho={}", spec.rho),
            n: dataset.n(),
            d: dataset.d(),
            k: spec.k,
            synth: Some(*spec),
            recipe: None,
            columns: None,
            labels: None,
            dropped_rows: 0,
            correlation: measure_correlation(dataset),
            dependence: Some("hub-and-spoke: attribute 0 is the hub, others copy it with probability rho".into()),
        }
    }

    pub fn for_ingested(recipe: &PreprocessRecipe, ingested: &Ingested) -> Self {
        let ds = &ingested.dataset;
        Self {
            source: recipe.name.clone(),
            n: ds.n(),
            d: ds.d(),
            k: ds.domains()[0].size(),
            synth: None,
            recipe: Some(recipe.clone()),
            columns: Some(ingested.columns.clone()),
            labels: Some(ingested.labels.clone()),
            dropped_rows: ingested.dropped_rows,
            correlation: measure_correlation(ds),
            dependence: None,
        }
    }
}

/// `data.csv` -> `data.meta.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes `attr_0,..,attr_{d-1}` followed by one coded row per record.
pub fn write_coded_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..dataset.d()).map(|j| format!("attr_{j}")))?;
    for rec in dataset.records() {
        w.write_record(rec.iter().map(u32::to_string))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, meta: &DatasetMetadata, path: &Path) -> Result<()> {
    write_coded_csv(dataset, path)?;
    let meta_path = metadata_path(path);
    let json = serde_json::to_string_pretty(meta)?;
    fs::write(&meta_path, json + "\n").map_err(|e| io_err(&meta_path, e))
}

/// Reads a coded CSV. The domain size comes from the sidecar metadata when
/// present, otherwise from the largest code.
pub fn read_coded_csv(path: &Path) -> Result<(Dataset, Option<DatasetMetadata>)> {
    let table = load_csv(path, true)?;
    let meta_path = metadata_path(path);
    let meta: Option<DatasetMetadata> = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    let mut values = Vec::with_capacity(table.num_rows() * table.num_columns());
    for (r, row) in table.rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let v: u32 = cell.parse().map_err(|_| Error::DomainViolation { row: r, col: c })?;
            values.push(v);
        }
    }
    let max_code = values.iter().copied().max().unwrap_or(0) as usize;
    let k = meta.as_ref().map_or(max_code + 1, |m| m.k).max(2);
    let ds = Dataset::from_flat(uniform_domains(table.num_columns(), k)?, values)?;
    Ok((ds, meta))
}
