//! Two-sample data model: raw tables, formulas, design-matrix expansion,
//! the non-probability and probability samples, and population benchmarks.
//!
//! Categorical terms use treatment coding with the lexicographically first
//! level as reference. Without an intercept the first categorical term is
//! expanded with every level, as `model.matrix` does.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

/// Values treated as missing under the listwise-deletion policy.
pub fn is_missing(value: &str) -> bool {
    matches!(value.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

/// Parses a numeric cell; logical values map to 1/0.
pub fn parse_number(value: &str) -> Option<f64> {
    let v = value.trim();
    match v {
        "TRUE" | "true" | "True" => Some(1.0),
        "FALSE" | "false" | "False" => Some(0.0),
        _ => v.parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

/// A raw, string-typed table as read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl DataTable {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(Error::Degenerate(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    headers.len()
                )));
            }
        }
        Ok(Self { headers, rows })
    }

    /// Builds a table from named columns of equal length.
    pub fn from_columns<S: ToString>(columns: Vec<(&str, Vec<S>)>) -> Result<Self> {
        let n = columns.first().map(|c| c.1.len()).unwrap_or(0);
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(Error::Degenerate("columns differ in length".into()));
        }
        let headers = columns.iter().map(|c| c.0.to_string()).collect();
        let rows = (0..n).map(|i| columns.iter().map(|c| c.1[i].to_string()).collect()).collect();
        Ok(Self { headers, rows })
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
        if headers.is_empty() {
            return Err(Error::Degenerate("CSV has no header row".into()));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            rows.push(record.iter().map(|s| s.to_string()).collect());
        }
        Self::new(headers, rows)
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    /// Parses a column as numbers, reporting the 1-based data row on failure.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                parse_number(&r[j]).ok_or_else(|| Error::Parse {
                    row: i + 1,
                    column: name.to_string(),
                    value: r[j].clone(),
                })
            })
            .collect()
    }

    /// Listwise deletion over the named columns. Returns the filtered table and
    /// the number of rows removed.
    pub fn drop_missing(&self, columns: &[String]) -> Result<(DataTable, usize)> {
        let idx: Vec<usize> = columns.iter().map(|c| self.column_index(c)).collect::<Result<_>>()?;
        let rows: Vec<Vec<String>> =
            self.rows.iter().filter(|r| idx.iter().all(|&j| !is_missing(&r[j]))).cloned().collect();
        let removed = self.rows.len() - rows.len();
        Ok((DataTable { headers: self.headers.clone(), rows }, removed))
    }

    /// Keeps rows whose `column` equals `value` (string comparison).
    pub fn filter_equal(&self, column: &str, value: &str) -> Result<DataTable> {
        let j = self.column_index(column)?;
        Ok(DataTable {
            headers: self.headers.clone(),
            rows: self.rows.iter().filter(|r| r[j] == value).cloned().collect(),
        })
    }
}

/// A single right-hand-side term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub name: String,
    /// Declared with `factor(...)`; forces categorical treatment.
    pub factor: bool,
}

/// `y1 + y2 ~ x1 + factor(x2) - 1`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub responses: Vec<String>,
    pub terms: Vec<Term>,
    pub intercept: bool,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

impl Formula {
    pub fn parse(text: &str) -> Result<Formula> {
        let (lhs, rhs) = match text.split_once('~') {
            Some((l, r)) => (l.trim(), r.trim()),
            None => return Err(Error::Formula(format!("missing `~` in `{text}`"))),
        };
        let mut responses = Vec::new();
        if !lhs.is_empty() {
            for part in lhs.split('+') {
                let name = part.trim();
                if !valid_name(name) {
                    return Err(Error::Formula(format!("bad response `{name}` in `{text}`")));
                }
                responses.push(name.to_string());
            }
        }

        let mut terms: Vec<Term> = Vec::new();
        let mut intercept = true;
        // split into signed tokens
        let mut sign = '+';
        let mut current = String::new();
        let mut tokens = Vec::new();
        for c in rhs.chars() {
            if c == '+' || c == '-' {
                tokens.push((sign, current.trim().to_string()));
                current.clear();
                sign = c;
            } else {
                current.push(c);
            }
        }
        tokens.push((sign, current.trim().to_string()));
        for (i, (sign, tok)) in tokens.into_iter().enumerate() {
            if tok.is_empty() {
                if i == 0 && sign == '+' {
                    continue;
                }
                return Err(Error::Formula(format!("empty term in `{text}`")));
            }
            match (sign, tok.as_str()) {
                ('-', "1") | ('+', "0") => intercept = false,
                ('+', "1") => intercept = true,
                ('-', _) => {
                    return Err(Error::Formula(format!("term removal other than `- 1` is not supported in `{text}`")))
                }
                _ => {
                    let term = if let Some(inner) = tok.strip_prefix("factor(").and_then(|t| t.strip_suffix(')')) {
                        Term { name: inner.trim().to_string(), factor: true }
                    } else {
                        Term { name: tok.clone(), factor: false }
                    };
                    if !valid_name(&term.name) {
                        return Err(Error::Formula(format!("bad term `{tok}` in `{text}`")));
                    }
                    if !terms.iter().any(|t| t.name == term.name) {
                        terms.push(term);
                    }
                }
            }
        }
        if responses.iter().any(|r| terms.iter().any(|t| &t.name == r)) {
            return Err(Error::Formula(format!("a response also appears as a predictor in `{text}`")));
        }
        Ok(Formula { responses, terms, intercept })
    }

    pub fn predictor_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name.clone()).collect()
    }

    /// Union of the right-hand sides; responses are dropped.
    pub fn union(&self, other: &Formula) -> Formula {
        let mut terms = self.terms.clone();
        for t in &other.terms {
            if !terms.iter().any(|u| u.name == t.name) {
                terms.push(t.clone());
            }
        }
        Formula { responses: Vec::new(), terms, intercept: self.intercept || other.intercept }
    }
}

impl std::fmt::Display for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lhs = self.responses.join(" + ");
        let mut rhs: Vec<String> =
            self.terms.iter().map(|t| if t.factor { format!("factor({})", t.name) } else { t.name.clone() }).collect();
        if !self.intercept {
            rhs.push("- 1".into());
        }
        if lhs.is_empty() {
            write!(f, "~ {}", rhs.join(" + ").replace("+ - 1", "- 1"))
        } else {
            write!(f, "{lhs} ~ {}", rhs.join(" + ").replace("+ - 1", "- 1"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermKind {
    Numeric,
    Factor {
        levels: Vec<String>,
        /// Every level gets a column (no reference dropped).
        full: bool,
    },
}

/// How a formula expands into design columns; carries the categorical levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    intercept: bool,
    terms: Vec<(String, TermKind)>,
}

impl DesignSpec {
    /// Infers term kinds and categorical levels from one or more tables.
    /// Levels are the sorted union over all tables.
    pub fn infer(formula: &Formula, tables: &[&DataTable]) -> Result<DesignSpec> {
        let mut terms = Vec::with_capacity(formula.terms.len());
        let mut first_factor = true;
        for term in &formula.terms {
            let mut values: Vec<Vec<&str>> = Vec::new();
            for t in tables {
                values.push(t.column(&term.name)?);
            }
            let numeric =
                !term.factor && values.iter().flatten().filter(|v| !is_missing(v)).all(|v| parse_number(v).is_some());
            let kind = if numeric {
                TermKind::Numeric
            } else {
                let levels: BTreeSet<String> =
                    values.iter().flatten().filter(|v| !is_missing(v)).map(|v| v.to_string()).collect();
                let full = !formula.intercept && first_factor;
                first_factor = false;
                TermKind::Factor { levels: levels.into_iter().collect(), full }
            };
            terms.push((term.name.clone(), kind));
        }
        Ok(DesignSpec { intercept: formula.intercept, terms })
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn terms(&self) -> &[(String, TermKind)] {
        &self.terms
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        if self.intercept {
            cols.push(INTERCEPT.to_string());
        }
        for (name, kind) in &self.terms {
            match kind {
                TermKind::Numeric => cols.push(name.clone()),
                TermKind::Factor { levels, full } => {
                    let skip = if *full { 0 } else { 1 };
                    for level in levels.iter().skip(skip) {
                        cols.push(format!("{name}{level}"));
                    }
                }
            }
        }
        cols
    }

    /// Unions categorical levels of two specs over the same terms.
    pub fn merge(&self, other: &DesignSpec) -> Result<DesignSpec> {
        if self.intercept != other.intercept || self.terms.len() != other.terms.len() {
            return Err(Error::ColumnMismatch(format!(
                "designs have different terms: {:?} vs {:?}",
                self.columns(),
                other.columns()
            )));
        }
        let mut terms = Vec::with_capacity(self.terms.len());
        for ((na, ka), (nb, kb)) in self.terms.iter().zip(&other.terms) {
            if na != nb {
                return Err(Error::ColumnMismatch(format!("term `{na}` does not match term `{nb}`")));
            }
            let kind = match (ka, kb) {
                (TermKind::Numeric, TermKind::Numeric) => TermKind::Numeric,
                (TermKind::Factor { levels: la, full: fa }, TermKind::Factor { levels: lb, .. }) => {
                    let merged: BTreeSet<String> = la.iter().chain(lb).cloned().collect();
                    TermKind::Factor { levels: merged.into_iter().collect(), full: *fa }
                }
                _ => {
                    return Err(Error::ColumnMismatch(format!(
                        "term `{na}` is numeric in one source and categorical in the other"
                    )))
                }
            };
            terms.push((na.clone(), kind));
        }
        Ok(DesignSpec { intercept: self.intercept, terms })
    }

    /// Extracts the referenced columns of a table (no missing values allowed).
    pub fn frame(&self, table: &DataTable) -> Result<Frame> {
        let mut columns = Vec::with_capacity(self.terms.len());
        for (name, kind) in &self.terms {
            let col = match kind {
                TermKind::Numeric => FrameColumn::Numeric(table.numeric_column(name)?),
                TermKind::Factor { .. } => {
                    FrameColumn::Factor(table.column(name)?.into_iter().map(String::from).collect())
                }
            };
            columns.push((name.clone(), col));
        }
        Ok(Frame { n_rows: table.n_rows(), columns })
    }

    pub fn expand(&self, frame: &Frame) -> Result<DMatrix<f64>> {
        let cols = self.columns();
        let n = frame.n_rows;
        let mut x = DMatrix::<f64>::zeros(n, cols.len());
        let mut j = 0;
        if self.intercept {
            x.column_mut(0).fill(1.0);
            j = 1;
        }
        for ((name, kind), (fname, fcol)) in self.terms.iter().zip(&frame.columns) {
            debug_assert_eq!(name, fname);
            match (kind, fcol) {
                (TermKind::Numeric, FrameColumn::Numeric(v)) => {
                    for (i, &val) in v.iter().enumerate() {
                        x[(i, j)] = val;
                    }
                    j += 1;
                }
                (TermKind::Factor { levels, full }, FrameColumn::Factor(v)) => {
                    let skip = if *full { 0 } else { 1 };
                    let width = levels.len() - skip;
                    for (i, val) in v.iter().enumerate() {
                        let pos = levels
                            .binary_search(val)
                            .map_err(|_| Error::ColumnMismatch(format!("unknown level `{val}` of `{name}`")))?;
                        if pos >= skip {
                            x[(i, j + pos - skip)] = 1.0;
                        }
                    }
                    j += width;
                }
                _ => return Err(Error::ColumnMismatch(format!("term `{name}` has the wrong kind in the data frame"))),
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameColumn {
    Numeric(Vec<f64>),
    Factor(Vec<String>),
}

/// Typed per-term columns kept so a design can be re-expanded after level
/// alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    n_rows: usize,
    columns: Vec<(String, FrameColumn)>,
}

/// Expanded design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    columns: Vec<String>,
    x: DMatrix<f64>,
    spec: Option<DesignSpec>,
    frame: Option<Frame>,
}

impl Design {
    pub fn from_matrix(columns: Vec<String>, x: DMatrix<f64>) -> Result<Design> {
        if columns.len() != x.ncols() {
            return Err(Error::ColumnMismatch(format!("{} names for {} columns", columns.len(), x.ncols())));
        }
        let unique: BTreeSet<&String> = columns.iter().collect();
        if unique.len() != columns.len() {
            return Err(Error::ColumnMismatch("duplicate column names".into()));
        }
        Ok(Design { columns, x, spec: None, frame: None })
    }

    pub fn build(spec: &DesignSpec, table: &DataTable) -> Result<Design> {
        let frame = spec.frame(table)?;
        let x = spec.expand(&frame)?;
        Ok(Design { columns: spec.columns(), x, spec: Some(spec.clone()), frame: Some(frame) })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn spec(&self) -> Option<&DesignSpec> {
        self.spec.as_ref()
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn intercept_index(&self) -> Option<usize> {
        self.column_index(INTERCEPT)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        Design {
            columns: self.columns.clone(),
            x: self.x.select_rows(rows.iter()),
            spec: self.spec.clone(),
            frame: None,
        }
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Design> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<_>>()?;
        Ok(Design { columns: names.to_vec(), x: self.x.select_columns(idx.iter()), spec: None, frame: None })
    }

    fn realign(&self, spec: &DesignSpec) -> Result<Design> {
        let frame = self
            .frame
            .as_ref()
            .ok_or_else(|| Error::ColumnMismatch("design has no source frame to re-expand".into()))?;
        Ok(Design {
            columns: spec.columns(),
            x: spec.expand(frame)?,
            spec: Some(spec.clone()),
            frame: Some(frame.clone()),
        })
    }
}

/// The self-selected sample with observed outcomes.
#[derive(Debug, Clone)]
pub struct NonProbSample {
    design: Design,
    outcomes: Vec<(String, Vec<f64>)>,
    case_weights: Vec<f64>,
    unit_ids: Vec<String>,
}

impl NonProbSample {
    pub fn new(design: Design, outcomes: Vec<(String, Vec<f64>)>, case_weights: Option<Vec<f64>>) -> Result<Self> {
        let n = design.n_rows();
        if n == 0 {
            return Err(Error::Degenerate("non-probability sample is empty".into()));
        }
        for (name, y) in &outcomes {
            if y.len() != n {
                return Err(Error::Degenerate(format!(
                    "outcome `{name}` has length {} but the sample has {n} rows",
                    y.len()
                )));
            }
        }
        let case_weights = case_weights.unwrap_or_else(|| vec![1.0; n]);
        if case_weights.len() != n || case_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("case weights must be non-negative with one per row".into()));
        }
        let unit_ids = (1..=n).map(|i| i.to_string()).collect();
        Ok(Self { design, outcomes, case_weights, unit_ids })
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::InvalidArgument("one id per row required".into()));
        }
        self.unit_ids = ids;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.design.n_rows()
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn x(&self) -> &DMatrix<f64> {
        self.design.matrix()
    }

    pub fn outcomes(&self) -> &[(String, Vec<f64>)] {
        &self.outcomes
    }

    pub fn outcome(&self, name: &str) -> Result<&[f64]> {
        self.outcomes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, y)| y.as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn case_weights(&self) -> &[f64] {
        &self.case_weights
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn select_rows(&self, rows: &[usize]) -> NonProbSample {
        NonProbSample {
            design: self.design.select_rows(rows),
            outcomes: self.outcomes.iter().map(|(n, y)| (n.clone(), rows.iter().map(|&i| y[i]).collect())).collect(),
            case_weights: rows.iter().map(|&i| self.case_weights[i]).collect(),
            unit_ids: rows.iter().map(|&i| self.unit_ids[i].clone()).collect(),
        }
    }

    /// Same rows and outcomes over a different design (e.g. selected columns).
    pub fn with_design(&self, design: Design) -> Result<NonProbSample> {
        if design.n_rows() != self.n() {
            return Err(Error::ColumnMismatch("row count differs".into()));
        }
        Ok(NonProbSample {
            design,
            outcomes: self.outcomes.clone(),
            case_weights: self.case_weights.clone(),
            unit_ids: self.unit_ids.clone(),
        })
    }

    /// Same rows with outcomes replaced.
    pub fn with_outcomes(&self, outcomes: Vec<(String, Vec<f64>)>) -> Result<NonProbSample> {
        NonProbSample::new(self.design.clone(), outcomes, Some(self.case_weights.clone()))
            .map(|s| NonProbSample { unit_ids: self.unit_ids.clone(), ..s })
    }
}

/// The reference probability sample: covariates, design weights and strata.
#[derive(Debug, Clone)]
pub struct ProbSample {
    design: Design,
    weights: Vec<f64>,
    strata: Vec<String>,
    unit_ids: Vec<String>,
}

impl ProbSample {
    pub fn new(design: Design, weights: Vec<f64>, strata: Option<Vec<String>>) -> Result<Self> {
        let n = design.n_rows();
        if n == 0 {
            return Err(Error::Degenerate("probability sample is empty".into()));
        }
        if weights.len() != n || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("design weights must be positive and finite, one per row".into()));
        }
        let strata = strata.unwrap_or_else(|| vec!["1".to_string(); n]);
        if strata.len() != n {
            return Err(Error::InvalidArgument("one stratum label per row".into()));
        }
        let unit_ids = (1..=n).map(|i| i.to_string()).collect();
        Ok(Self { design, weights, strata, unit_ids })
    }

    pub fn n(&self) -> usize {
        self.design.n_rows()
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn x(&self) -> &DMatrix<f64> {
        self.design.matrix()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn strata(&self) -> &[String] {
        &self.strata
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    /// Estimated population size: sum of design weights.
    pub fn n_hat(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted covariate totals over the design columns.
    pub fn totals(&self) -> DVector<f64> {
        self.x().tr_mul(&DVector::from_column_slice(&self.weights))
    }

    /// Subsample with replacement-style replicate weights.
    pub fn reweighted(&self, rows: &[usize], weights: Vec<f64>) -> Result<ProbSample> {
        let mut s = ProbSample::new(
            self.design.select_rows(rows),
            weights,
            Some(rows.iter().map(|&i| self.strata[i].clone()).collect()),
        )?;
        s.unit_ids = rows.iter().map(|&i| self.unit_ids[i].clone()).collect();
        Ok(s)
    }

    pub fn with_design(&self, design: Design) -> Result<ProbSample> {
        if design.n_rows() != self.n() {
            return Err(Error::ColumnMismatch("row count differs".into()));
        }
        Ok(ProbSample {
            design,
            weights: self.weights.clone(),
            strata: self.strata.clone(),
            unit_ids: self.unit_ids.clone(),
        })
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<ProbSample> {
        let mut s = ProbSample::new(self.design.clone(), weights, Some(self.strata.clone()))?;
        s.unit_ids = self.unit_ids.clone();
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PopSize {
    Known(f64),
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    Totals,
    Means,
}

/// Known population totals of design columns and, optionally, the
/// population size.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationBenchmark {
    totals: Vec<(String, f64)>,
    pop_size: PopSize,
}

impl PopulationBenchmark {
    pub fn from_totals(totals: Vec<(String, f64)>, pop_size: Option<f64>) -> Result<Self> {
        let pop_size = match pop_size {
            Some(n) if n > 0.0 && n.is_finite() => PopSize::Known(n),
            Some(n) => return Err(Error::Benchmark(format!("population size must be positive, got {n}"))),
            None => PopSize::Estimated,
        };
        let names: BTreeSet<&String> = totals.iter().map(|t| &t.0).collect();
        if names.len() != totals.len() {
            return Err(Error::Benchmark("duplicate names".into()));
        }
        Ok(Self { totals, pop_size })
    }

    /// Means are converted to totals by multiplying with the population size.
    pub fn from_means(means: Vec<(String, f64)>, pop_size: Option<f64>) -> Result<Self> {
        let n = pop_size.ok_or_else(|| Error::Benchmark("population means require a population size".into()))?;
        Self::from_totals(means.into_iter().map(|(k, v)| (k, v * n)).collect(), Some(n))
    }

    pub fn totals(&self) -> &[(String, f64)] {
        &self.totals
    }

    pub fn pop_size_spec(&self) -> PopSize {
        self.pop_size
    }

    /// The population size: known value, else the intercept total if present.
    pub fn pop_size(&self) -> Option<f64> {
        match self.pop_size {
            PopSize::Known(n) => Some(n),
            PopSize::Estimated => self.totals.iter().find(|(k, _)| k == INTERCEPT).map(|(_, v)| *v),
        }
    }

    /// Totals ordered as `columns`. The intercept total defaults to N when
    /// N is known.
    pub fn totals_for(&self, columns: &[String]) -> Result<DVector<f64>> {
        let mut missing = Vec::new();
        let mut out = DVector::zeros(columns.len());
        for (j, c) in columns.iter().enumerate() {
            match self.totals.iter().find(|(k, _)| k == c) {
                Some((_, v)) => out[j] = *v,
                None if c == INTERCEPT && matches!(self.pop_size, PopSize::Known(_)) => {
                    out[j] = self.pop_size().unwrap();
                }
                None => missing.push(c.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Benchmark(format!("no total for design columns {missing:?}")));
        }
        Ok(out)
    }

    /// Checks that names match the design columns exactly.
    pub fn validate(&self, columns: &[String]) -> Result<()> {
        self.totals_for(columns)?;
        let extra: Vec<&String> = self.totals.iter().map(|(k, _)| k).filter(|k| !columns.contains(k)).collect();
        if !extra.is_empty() {
            return Err(Error::Benchmark(format!("benchmark names not in the design: {extra:?}")));
        }
        Ok(())
    }
}

/// Reads a `name,value` benchmark file. A header row is optional.
pub fn load_benchmark<P: AsRef<Path>>(
    path: P,
    kind: BenchmarkKind,
    pop_size: Option<f64>,
) -> Result<PopulationBenchmark> {
    let file = File::open(path.as_ref())?;
    read_benchmark(file, kind, pop_size)
}

pub fn read_benchmark<R: Read>(reader: R, kind: BenchmarkKind, pop_size: Option<f64>) -> Result<PopulationBenchmark> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Benchmark(format!("line {} must have two fields `name,value`", i + 1)));
        }
        match parse_number(&rec[1]) {
            Some(v) => entries.push((rec[0].to_string(), v)),
            None if i == 0 => continue,
            None => return Err(Error::Parse { row: i + 1, column: "value".into(), value: rec[1].to_string() }),
        }
    }
    match kind {
        BenchmarkKind::Totals => PopulationBenchmark::from_totals(entries, pop_size),
        BenchmarkKind::Means => PopulationBenchmark::from_means(entries, pop_size),
    }
}

/// Auxiliary information paired with the non-probability sample.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Survey(&'a ProbSample),
    Population(&'a PopulationBenchmark),
}

impl Reference<'_> {
    /// Reference totals over the given design columns.
    pub fn totals(&self, columns: &[String]) -> Result<DVector<f64>> {
        match self {
            Reference::Survey(p) => {
                if p.design().columns() != columns {
                    let d = p.design().select_columns(columns)?;
                    Ok(d.matrix().tr_mul(&DVector::from_column_slice(p.weights())))
                } else {
                    Ok(p.totals())
                }
            }
            Reference::Population(b) => b.totals_for(columns),
        }
    }

    /// Known N, or the estimate implied by the reference.
    pub fn pop_size(&self) -> Option<f64> {
        match self {
            Reference::Survey(p) => Some(p.n_hat()),
            Reference::Population(b) => b.pop_size(),
        }
    }

    pub fn source_label(&self) -> &'static str {
        match self {
            Reference::Survey(_) => "survey",
            Reference::Population(_) => "population",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleRole {
    NonProb,
    Prob,
}

#[derive(Debug, Clone)]
pub enum Sample {
    NonProb(NonProbSample),
    Prob(ProbSample),
}

/// Loads one sample from CSV. For the non-probability role the formula's
/// responses become outcomes; for the probability role a weight column is
/// mandatory.
pub fn load_sample_csv<P: AsRef<Path>>(
    path: P,
    formula: &Formula,
    role: SampleRole,
    weight_col: Option<&str>,
    strata_cols: &[String],
) -> Result<Sample> {
    let table = DataTable::from_csv_path(path)?;
    sample_from_table(&table, formula, role, weight_col, strata_cols, None)
}

/// Builds a sample from an in-memory table. When `spec` is given it is used
/// for the expansion (levels shared with another source), otherwise levels
/// come from this table alone.
pub fn sample_from_table(
    table: &DataTable,
    formula: &Formula,
    role: SampleRole,
    weight_col: Option<&str>,
    strata_cols: &[String],
    spec: Option<&DesignSpec>,
) -> Result<Sample> {
    let mut referenced: Vec<String> = formula.predictor_names();
    if role == SampleRole::NonProb {
        referenced.extend(formula.responses.iter().cloned());
    }
    if let Some(w) = weight_col {
        referenced.push(w.to_string());
    }
    referenced.extend(strata_cols.iter().cloned());
    for c in &referenced {
        table.column_index(c)?;
    }
    let (table, removed) = table.drop_missing(&referenced)?;
    if removed > 0 {
        log::info!("removed {removed} rows with missing values");
    }
    if table.n_rows() == 0 {
        return Err(Error::Degenerate("no rows left after removing missing values".into()));
    }
    let spec = match spec {
        Some(s) => s.clone(),
        None => DesignSpec::infer(formula, &[&table])?,
    };
    let design = Design::build(&spec, &table)?;
    match role {
        SampleRole::NonProb => {
            let outcomes = formula
                .responses
                .iter()
                .map(|r| Ok((r.clone(), table.numeric_column(r)?)))
                .collect::<Result<Vec<_>>>()?;
            let weights = weight_col.map(|w| table.numeric_column(w)).transpose()?;
            Ok(Sample::NonProb(NonProbSample::new(design, outcomes, weights)?))
        }
        SampleRole::Prob => {
            let w = weight_col
                .ok_or_else(|| Error::InvalidArgument("a probability sample requires a design weight column".into()))?;
            let weights = table.numeric_column(w)?;
            let strata = strata_labels(&table, strata_cols)?;
            Ok(Sample::Prob(ProbSample::new(design, weights, strata)?))
        }
    }
}

/// Combined stratum label (`a|b|c`) from one or more columns.
pub fn strata_labels(table: &DataTable, strata_cols: &[String]) -> Result<Option<Vec<String>>> {
    if strata_cols.is_empty() {
        return Ok(None);
    }
    let cols: Vec<Vec<&str>> = strata_cols.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    Ok(Some((0..table.n_rows()).map(|i| cols.iter().map(|c| c[i]).collect::<Vec<_>>().join("|")).collect()))
}

/// Re-expands both samples over the union of categorical levels so their
/// design columns coincide. Idempotent.
pub fn align_designs(np: &NonProbSample, p: &ProbSample) -> Result<(NonProbSample, ProbSample)> {
    if np.design().columns() == p.design().columns() {
        return Ok((np.clone(), p.clone()));
    }
    let (sa, sb) = match (np.design().spec(), p.design().spec()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::ColumnMismatch(format!(
                "cannot reconcile columns {:?} and {:?}",
                np.design().columns(),
                p.design().columns()
            )))
        }
    };
    let merged = sa.merge(sb)?;
    let np_design = np.design().realign(&merged)?;
    let p_design = p.design().realign(&merged)?;
    for (label, d) in [("non-probability", &np_design), ("probability", &p_design)] {
        for (j, c) in d.columns().iter().enumerate() {
            if c != INTERCEPT && d.matrix().column(j).iter().all(|v| *v == 0.0) {
                log::warn!("column `{c}` is all zero in the {label} sample");
            }
        }
    }
    Ok((np.with_design(np_design)?, p.with_design(p_design)?))
}
