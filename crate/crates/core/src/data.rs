//! Dataset layouts and the subset/combine algebra.
//!
//! Three layouts are used throughout: the RCT sample (covariates,
//! binary treatment, outcome), the external-control (EC) sample
//! (covariates and outcome only; every EC unit is a control), and the
//! combined sample carrying a source indicator `R` (1 = RCT row,
//! 0 = EC row). Datasets are immutable after validation and safe to
//! share across threads.
//!
//! CSV schema: header row; covariate columns first, then `a` (RCT
//! files only), then `y`. Missing values are rejected. UTF-8, `.`
//! decimal separator.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Violation, ViolationKind};

/// Whether outcomes are real-valued or 0/1.
///
/// Binary outcomes are stored as 0.0/1.0 so all numeric paths are
/// shared; the flag only tightens validation and steers default model
/// families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// The randomized-trial sample: covariates, treatment, outcome.
///
/// The intercept is not stored in `x`; model code prepends it. Column
/// order is authoritative for coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RctDataset {
    x: DMatrix<f64>,
    a: Vec<u8>,
    y: DVector<f64>,
    outcome_kind: OutcomeKind,
    columns: Vec<String>,
}

/// The external-control sample. Treatment is implicitly 0 everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct EcDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    outcome_kind: OutcomeKind,
    columns: Vec<String>,
}

/// RCT rows followed by borrowed EC rows, with the source flag `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedDataset {
    x: DMatrix<f64>,
    a: Vec<u8>,
    y: DVector<f64>,
    r: Vec<u8>,
    outcome_kind: OutcomeKind,
    columns: Vec<String>,
}

/// Control rows extracted from any layout: covariates, outcomes, and
/// the source flag (1 = RCT, 0 = EC).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRows {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub r: Vec<u8>,
}

impl ControlRows {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

fn default_columns(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn check_finite_matrix(x: &DMatrix<f64>, columns: &[String], out: &mut Vec<Violation>) {
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if !x[(i, j)].is_finite() {
                out.push(Violation {
                    kind: ViolationKind::NonFiniteValue,
                    row: Some(i),
                    column: columns.get(j).cloned(),
                    reason: format!("non-finite covariate value {}", x[(i, j)]),
                });
            }
        }
    }
}

fn check_finite_outcome(y: &DVector<f64>, out: &mut Vec<Violation>) {
    for (i, v) in y.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation {
                kind: ViolationKind::NonFiniteValue,
                row: Some(i),
                column: Some("y".into()),
                reason: format!("non-finite outcome value {v}"),
            });
        }
    }
}

fn check_binary_outcome(y: &DVector<f64>, kind: OutcomeKind, out: &mut Vec<Violation>) {
    if kind != OutcomeKind::Binary {
        return;
    }
    for (i, v) in y.iter().enumerate() {
        if *v != 0.0 && *v != 1.0 {
            out.push(Violation {
                kind: ViolationKind::NonBinaryOutcome,
                row: Some(i),
                column: Some("y".into()),
                reason: format!("binary outcome must be 0 or 1, got {v}"),
            });
        }
    }
}

fn check_treatment(a: &[u8], out: &mut Vec<Violation>) {
    for (i, v) in a.iter().enumerate() {
        if *v > 1 {
            out.push(Violation {
                kind: ViolationKind::NonBinaryTreatment,
                row: Some(i),
                column: Some("a".into()),
                reason: format!("treatment must be 0 or 1, got {v}"),
            });
        }
    }
}

impl RctDataset {
    /// Validates and builds an RCT dataset. `columns` defaults to
    /// `x1..xp` when `None`.
    pub fn new(
        x: DMatrix<f64>,
        a: Vec<u8>,
        y: DVector<f64>,
        outcome_kind: OutcomeKind,
        columns: Option<Vec<String>>,
    ) -> Result<Self> {
        let columns = columns.unwrap_or_else(|| default_columns(x.ncols()));
        let ds = Self { x, a, y, outcome_kind, columns };
        match ds.validate() {
            Ok(()) => Ok(ds),
            Err(v) => Err(Error::Invalid(v)),
        }
    }

    /// Checks every type invariant; returns the full violation list on failure.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        if self.a.len() != self.x.nrows() || self.y.len() != self.x.nrows() {
            v.push(Violation {
                kind: ViolationKind::ShapeMismatch,
                row: None,
                column: None,
                reason: format!(
                    "x has {} rows, a has {}, y has {}",
                    self.x.nrows(),
                    self.a.len(),
                    self.y.len()
                ),
            });
            return Err(v);
        }
        if self.columns.len() != self.x.ncols() {
            v.push(Violation {
                kind: ViolationKind::ShapeMismatch,
                row: None,
                column: None,
                reason: format!(
                    "{} column names for {} covariate columns",
                    self.columns.len(),
                    self.x.ncols()
                ),
            });
        }
        check_finite_matrix(&self.x, &self.columns, &mut v);
        check_finite_outcome(&self.y, &mut v);
        check_treatment(&self.a, &mut v);
        check_binary_outcome(&self.y, self.outcome_kind, &mut v);
        let n_treated = self.a.iter().filter(|&&a| a == 1).count();
        if n_treated == 0 {
            v.push(Violation {
                kind: ViolationKind::ArmMissing,
                row: None,
                column: Some("a".into()),
                reason: "no treated units".into(),
            });
        }
        if n_treated == self.a.len() {
            v.push(Violation {
                kind: ViolationKind::ArmMissing,
                row: None,
                column: Some("a".into()),
                reason: "no control units".into(),
            });
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&a| a == 1).count()
    }

    pub fn n_controls(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Rows with A=0, in original order.
    pub fn controls_only(&self) -> ControlRows {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.a[i] == 0).collect();
        ControlRows {
            x: select_matrix_rows(&self.x, &idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            r: vec![1; idx.len()],
        }
    }

    /// Rows with A=1, in original order.
    pub fn treated_only(&self) -> ControlRows {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.a[i] == 1).collect();
        ControlRows {
            x: select_matrix_rows(&self.x, &idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            r: vec![1; idx.len()],
        }
    }

    /// Keeps only the covariate columns in `keep` (in the given order).
    pub fn with_columns(&self, keep: &[usize]) -> Result<Self> {
        let (x, columns) = select_columns(&self.x, &self.columns, keep)?;
        Self::new(x, self.a.clone(), self.y.clone(), self.outcome_kind, Some(columns))
    }
}

impl EcDataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        outcome_kind: OutcomeKind,
        columns: Option<Vec<String>>,
    ) -> Result<Self> {
        let columns = columns.unwrap_or_else(|| default_columns(x.ncols()));
        let ds = Self { x, y, outcome_kind, columns };
        match ds.validate() {
            Ok(()) => Ok(ds),
            Err(v) => Err(Error::Invalid(v)),
        }
    }

    /// An EC dataset with zero rows (the empty borrowing subset).
    pub fn empty(p: usize, outcome_kind: OutcomeKind, columns: Option<Vec<String>>) -> Self {
        Self {
            x: DMatrix::zeros(0, p),
            y: DVector::zeros(0),
            outcome_kind,
            columns: columns.unwrap_or_else(|| default_columns(p)),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        if self.y.len() != self.x.nrows() {
            v.push(Violation {
                kind: ViolationKind::ShapeMismatch,
                row: None,
                column: None,
                reason: format!("x has {} rows, y has {}", self.x.nrows(), self.y.len()),
            });
            return Err(v);
        }
        if self.columns.len() != self.x.ncols() {
            v.push(Violation {
                kind: ViolationKind::ShapeMismatch,
                row: None,
                column: None,
                reason: format!(
                    "{} column names for {} covariate columns",
                    self.columns.len(),
                    self.x.ncols()
                ),
            });
        }
        check_finite_matrix(&self.x, &self.columns, &mut v);
        check_finite_outcome(&self.y, &mut v);
        check_binary_outcome(&self.y, self.outcome_kind, &mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Every EC row is a control; this is the identity view.
    pub fn controls_only(&self) -> ControlRows {
        ControlRows { x: self.x.clone(), y: self.y.clone(), r: vec![0; self.n()] }
    }

    /// New dataset holding the rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::ShapeMismatch(format!(
                "row index {bad} out of range for {} EC rows",
                self.n()
            )));
        }
        Ok(Self {
            x: select_matrix_rows(&self.x, indices),
            y: DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i])),
            outcome_kind: self.outcome_kind,
            columns: self.columns.clone(),
        })
    }

    /// Same rows with outcomes replaced (used by outcome calibration).
    /// Calibrated outcomes are continuous regardless of the source kind.
    pub fn with_outcomes(&self, y: DVector<f64>, outcome_kind: OutcomeKind) -> Result<Self> {
        Self::new(self.x.clone(), y, outcome_kind, Some(self.columns.clone()))
    }

    pub fn with_columns(&self, keep: &[usize]) -> Result<Self> {
        let (x, columns) = select_columns(&self.x, &self.columns, keep)?;
        Self::new(x, self.y.clone(), self.outcome_kind, Some(columns))
    }
}

impl CombinedDataset {
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        let n = self.x.nrows();
        if self.a.len() != n || self.y.len() != n || self.r.len() != n {
            v.push(Violation {
                kind: ViolationKind::ShapeMismatch,
                row: None,
                column: None,
                reason: format!(
                    "x has {} rows, a has {}, y has {}, r has {}",
                    n,
                    self.a.len(),
                    self.y.len(),
                    self.r.len()
                ),
            });
            return Err(v);
        }
        check_finite_matrix(&self.x, &self.columns, &mut v);
        check_finite_outcome(&self.y, &mut v);
        check_treatment(&self.a, &mut v);
        check_binary_outcome(&self.y, self.outcome_kind, &mut v);
        for i in 0..n {
            if self.r[i] == 0 && self.a[i] != 0 {
                v.push(Violation {
                    kind: ViolationKind::NonBinaryTreatment,
                    row: Some(i),
                    column: Some("a".into()),
                    reason: "EC row (R=0) must have A=0".into(),
                });
            }
        }
        // RCT rows first, then EC rows: r must be non-increasing.
        if self.r.windows(2).any(|w| w[0] < w[1]) {
            v.push(Violation {
                kind: ViolationKind::ShapeMismatch,
                row: None,
                column: Some("r".into()),
                reason: "rows must be ordered RCT first, then EC".into(),
            });
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_rct(&self) -> usize {
        self.r.iter().filter(|&&r| r == 1).count()
    }

    pub fn n_ec(&self) -> usize {
        self.n() - self.n_rct()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn r(&self) -> &[u8] {
        &self.r
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Rows with A=0 (RCT controls plus every EC row), original order,
    /// carrying the source flag.
    pub fn controls_only(&self) -> ControlRows {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.a[i] == 0).collect();
        ControlRows {
            x: select_matrix_rows(&self.x, &idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            r: idx.iter().map(|&i| self.r[i]).collect(),
        }
    }
}

/// Stacks the RCT sample on top of a borrowed EC subset.
///
/// EC rows get A=0 and R=0; RCT rows keep their treatment and get R=1.
/// When the outcome kinds differ (calibrated ECs paired with a binary
/// RCT) the combined outcome is treated as continuous.
pub fn combine(rct: &RctDataset, ec_subset: &EcDataset) -> Result<CombinedDataset> {
    if ec_subset.p() != rct.p() {
        return Err(Error::ShapeMismatch(format!(
            "EC has {} covariate columns, RCT has {}",
            ec_subset.p(),
            rct.p()
        )));
    }
    let n1 = rct.n();
    let k = ec_subset.n();
    let mut x = DMatrix::zeros(n1 + k, rct.p());
    x.view_mut((0, 0), (n1, rct.p())).copy_from(rct.x());
    if k > 0 {
        x.view_mut((n1, 0), (k, rct.p())).copy_from(ec_subset.x());
    }
    let mut a = Vec::with_capacity(n1 + k);
    a.extend_from_slice(rct.a());
    a.extend(std::iter::repeat_n(0u8, k));
    let mut r = Vec::with_capacity(n1 + k);
    r.extend(std::iter::repeat_n(1u8, n1));
    r.extend(std::iter::repeat_n(0u8, k));
    let y = DVector::from_iterator(
        n1 + k,
        rct.y().iter().chain(ec_subset.y().iter()).copied(),
    );
    let outcome_kind = if rct.outcome_kind() == ec_subset.outcome_kind() {
        rct.outcome_kind()
    } else {
        OutcomeKind::Continuous
    };
    let ds = CombinedDataset {
        x,
        a,
        y,
        r,
        outcome_kind,
        columns: rct.columns().to_vec(),
    };
    match ds.validate() {
        Ok(()) => Ok(ds),
        Err(v) => Err(Error::Invalid(v)),
    }
}

fn select_matrix_rows(x: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let p = x.ncols();
    DMatrix::from_fn(indices.len(), p, |i, j| x[(indices[i], j)])
}

fn select_columns(
    x: &DMatrix<f64>,
    columns: &[String],
    keep: &[usize],
) -> Result<(DMatrix<f64>, Vec<String>)> {
    if let Some(&bad) = keep.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::ShapeMismatch(format!(
            "column index {bad} out of range for {} columns",
            x.ncols()
        )));
    }
    let sub = DMatrix::from_fn(x.nrows(), keep.len(), |i, j| x[(i, keep[j])]);
    let names = keep.iter().map(|&j| columns[j].clone()).collect();
    Ok((sub, names))
}

// ---------------------------------------------------------------------------
// CSV input/output
// ---------------------------------------------------------------------------

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::Invalid(vec![Violation {
            kind: ViolationKind::NonFiniteValue,
            row: Some(row),
            column: Some(column.to_string()),
            reason: "missing value".into(),
        }]));
    }
    trimmed.parse::<f64>().map_err(|_| {
        Error::Invalid(vec![Violation {
            kind: ViolationKind::NonFiniteValue,
            row: Some(row),
            column: Some(column.to_string()),
            reason: format!("cannot parse `{trimmed}` as a number"),
        }])
    })
}

fn infer_outcome_kind(y: &DVector<f64>) -> OutcomeKind {
    if !y.is_empty() && y.iter().all(|&v| v == 0.0 || v == 1.0) {
        OutcomeKind::Binary
    } else {
        OutcomeKind::Continuous
    }
}

struct ParsedTable {
    headers: Vec<String>,
    values: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<ParsedTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut values = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::ShapeMismatch(format!(
                "row {row_idx} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (j, raw) in record.iter().enumerate() {
            row.push(parse_cell(raw, row_idx, &headers[j])?);
        }
        values.push(row);
    }
    Ok(ParsedTable { headers, values })
}

fn column_matrix(values: &[Vec<f64>], cols: std::ops::Range<usize>) -> DMatrix<f64> {
    DMatrix::from_fn(values.len(), cols.len(), |i, j| values[i][cols.start + j])
}

/// Reads an RCT CSV (`covariates..., a, y`). The outcome kind is
/// inferred: binary iff every `y` is 0 or 1.
pub fn read_rct_csv<P: AsRef<Path>>(path: P) -> Result<RctDataset> {
    let table = read_table(path.as_ref())?;
    let ncols = table.headers.len();
    if ncols < 3 {
        return Err(Error::ShapeMismatch(
            "RCT CSV needs at least one covariate column plus `a` and `y`".into(),
        ));
    }
    if table.headers[ncols - 1] != "y" || table.headers[ncols - 2] != "a" {
        return Err(Error::ShapeMismatch(format!(
            "RCT CSV must end with columns `a,y`, got `{},{}`",
            table.headers[ncols - 2],
            table.headers[ncols - 1]
        )));
    }
    let x = column_matrix(&table.values, 0..ncols - 2);
    let mut violations = Vec::new();
    let mut a = Vec::with_capacity(table.values.len());
    for (i, row) in table.values.iter().enumerate() {
        let v = row[ncols - 2];
        if v == 0.0 {
            a.push(0u8);
        } else if v == 1.0 {
            a.push(1u8);
        } else {
            violations.push(Violation {
                kind: ViolationKind::NonBinaryTreatment,
                row: Some(i),
                column: Some("a".into()),
                reason: format!("treatment must be 0 or 1, got {v}"),
            });
            a.push(0u8);
        }
    }
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let y = DVector::from_iterator(table.values.len(), table.values.iter().map(|r| r[ncols - 1]));
    let kind = infer_outcome_kind(&y);
    let columns = table.headers[..ncols - 2].to_vec();
    RctDataset::new(x, a, y, kind, Some(columns))
}

/// Reads an EC CSV (`covariates..., y`; no treatment column).
pub fn read_ec_csv<P: AsRef<Path>>(path: P) -> Result<EcDataset> {
    let table = read_table(path.as_ref())?;
    let ncols = table.headers.len();
    if ncols < 2 {
        return Err(Error::ShapeMismatch(
            "EC CSV needs at least one covariate column plus `y`".into(),
        ));
    }
    if table.headers[ncols - 1] != "y" {
        return Err(Error::ShapeMismatch(format!(
            "EC CSV must end with column `y`, got `{}`",
            table.headers[ncols - 1]
        )));
    }
    if table.headers[..ncols - 1].iter().any(|h| h == "a") {
        return Err(Error::ShapeMismatch("EC CSV must not contain a treatment column".into()));
    }
    let x = column_matrix(&table.values, 0..ncols - 1);
    let y = DVector::from_iterator(table.values.len(), table.values.iter().map(|r| r[ncols - 1]));
    let kind = infer_outcome_kind(&y);
    let columns = table.headers[..ncols - 1].to_vec();
    EcDataset::new(x, y, kind, Some(columns))
}

pub fn write_rct_csv<P: AsRef<Path>>(ds: &RctDataset, path: P) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = ds.columns().to_vec();
    header.push("a".into());
    header.push("y".into());
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = (0..ds.p()).map(|j| ds.x()[(i, j)].to_string()).collect();
        record.push(ds.a()[i].to_string());
        record.push(ds.y()[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_ec_csv<P: AsRef<Path>>(ds: &EcDataset, path: P) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = ds.columns().to_vec();
    header.push("y".into());
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = (0..ds.p()).map(|j| ds.x()[(i, j)].to_string()).collect();
        record.push(ds.y()[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_rct() -> RctDataset {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let a = vec![1, 0, 1, 0];
        let y = DVector::from_vec(vec![1.0, 0.5, 2.0, 1.5]);
        RctDataset::new(x, a, y, OutcomeKind::Continuous, None).unwrap()
    }

    fn small_ec() -> EcDataset {
        let x = DMatrix::from_row_slice(3, 1, &[0.5, 1.5, 2.5]);
        let y = DVector::from_vec(vec![0.7, 1.2, 1.9]);
        EcDataset::new(x, y, OutcomeKind::Continuous, None).unwrap()
    }

    #[test]
    fn all_treated_is_arm_missing() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let err = RctDataset::new(x, vec![1, 1, 1], y, OutcomeKind::Binary, None).unwrap_err();
        assert!(err
            .violations()
            .iter()
            .any(|v| v.kind == ViolationKind::ArmMissing));
    }

    #[test]
    fn non_finite_and_non_binary_reported_with_rows() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, f64::NAN, 2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let err = RctDataset::new(x, vec![1, 0, 2], y, OutcomeKind::Binary, None).unwrap_err();
        let kinds: Vec<ViolationKind> = err.violations().iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::NonFiniteValue));
        assert!(kinds.contains(&ViolationKind::NonBinaryTreatment));
        assert!(kinds.contains(&ViolationKind::NonBinaryOutcome));
        let nf = err
            .violations()
            .iter()
            .find(|v| v.kind == ViolationKind::NonFiniteValue)
            .unwrap();
        assert_eq!(nf.row, Some(1));
    }

    #[test]
    fn combine_counts_and_flags() {
        let rct = small_rct();
        let ec = small_ec();
        let combined = combine(&rct, &ec).unwrap();
        assert_eq!(combined.n(), 7);
        assert_eq!(combined.n_ec(), 3);
        assert_eq!(&combined.r()[..4], &[1, 1, 1, 1]);
        assert_eq!(&combined.r()[4..], &[0, 0, 0]);
        assert!(combined.a()[4..].iter().all(|&a| a == 0));
        assert_eq!(combined.y()[6], 1.9);
    }

    #[test]
    fn combine_empty_subset_is_rct_with_r1() {
        let rct = small_rct();
        let empty = EcDataset::empty(1, OutcomeKind::Continuous, None);
        let combined = combine(&rct, &empty).unwrap();
        assert_eq!(combined.n(), rct.n());
        assert!(combined.r().iter().all(|&r| r == 1));
        assert_eq!(combined.x(), rct.x());
    }

    #[test]
    fn combine_shape_mismatch() {
        let rct = small_rct();
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 1.5, 0.2]);
        let y = DVector::from_vec(vec![0.7, 1.2]);
        let ec = EcDataset::new(x, y, OutcomeKind::Continuous, None).unwrap();
        assert!(matches!(combine(&rct, &ec), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn combine_concatenation_matches_row_union() {
        // combine(rct, S_j ∪ S_Δ) has exactly the rows of combine(rct, S_j)
        // plus the S_Δ rows.
        let rct = small_rct();
        let ec = small_ec();
        let s_j = ec.select_rows(&[0, 1]).unwrap();
        let s_union = ec.select_rows(&[0, 1, 2]).unwrap();
        let a = combine(&rct, &s_j).unwrap();
        let b = combine(&rct, &s_union).unwrap();
        assert_eq!(b.n(), a.n() + 1);
        for i in 0..a.n() {
            assert_eq!(a.y()[i], b.y()[i]);
            assert_eq!(a.x()[(i, 0)], b.x()[(i, 0)]);
        }
        assert_eq!(b.y()[a.n()], ec.y()[2]);
    }

    #[test]
    fn controls_only_counts() {
        let rct = small_rct();
        let ec = small_ec();
        assert_eq!(rct.controls_only().n(), 2);
        assert_eq!(ec.controls_only().n(), 3);
        let combined = combine(&rct, &ec).unwrap();
        let controls = combined.controls_only();
        assert_eq!(controls.n(), rct.n_controls() + ec.n());
        assert_eq!(controls.r.iter().filter(|&&r| r == 1).count(), rct.n_controls());
    }

    #[test]
    fn ec_controls_only_is_identity() {
        let ec = small_ec();
        let view = ec.controls_only();
        assert_eq!(view.x, *ec.x());
        assert_eq!(view.y, *ec.y());
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let rct = small_rct();
        let p1 = dir.path().join("rct1.csv");
        let p2 = dir.path().join("rct2.csv");
        write_rct_csv(&rct, &p1).unwrap();
        let reread = read_rct_csv(&p1).unwrap();
        write_rct_csv(&reread, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(reread, rct);
    }

    #[test]
    fn csv_missing_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,a,y\n1.0,1,2.0\n,0,1.0\n").unwrap();
        let err = read_rct_csv(&path).unwrap_err();
        assert!(err.to_string().contains("missing value"), "{err}");
    }

    #[test]
    fn csv_binary_outcome_inferred() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bin.csv");
        std::fs::write(&path, "x1,a,y\n1.0,1,1\n2.0,0,0\n0.5,1,1\n-0.5,0,0\n").unwrap();
        let ds = read_rct_csv(&path).unwrap();
        assert_eq!(ds.outcome_kind(), OutcomeKind::Binary);
    }
}
