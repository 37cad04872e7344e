//! Formula parsing, CSV ingestion and design-matrix construction.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("formula is missing `~`")]
    MissingTilde,
    #[error("formula has no response before `~`")]
    MissingResponse,
    #[error("formula needs exactly one cluster() term, found {0}")]
    ClusterCount(usize),
    #[error("formula has no covariate terms")]
    NoCovariates,
    #[error("formula term `{0}` appears more than once")]
    DuplicateTerm(String),
    #[error("malformed formula term `{0}`")]
    BadTerm(String),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("column `{0}` must be numeric")]
    NonNumeric(String),
    #[error("column `{column}` row {row}: empty field")]
    EmptyField { column: String, row: usize },
    #[error("response `{column}` row {row}: time {value} must be strictly positive")]
    NonPositiveTime { column: String, row: usize, value: f64 },
    #[error("categorical column `{0}` has a single level and yields no design column")]
    ConstantCategorical(String),
    #[error("numeric column `{0}` has zero variance and cannot be standardized")]
    ConstantNumeric(String),
    #[error("column `{column}`: level `{level}` was not seen when the model was fitted")]
    UnknownLevel { column: String, level: String },
    #[error("status column `{column}` row {row}: expected 0/1, got `{value}`")]
    BadStatus { column: String, row: usize, value: String },
    #[error("status has {got} entries but there are {expected} units")]
    StatusLength { expected: usize, got: usize },
    #[error("table has no rows")]
    Empty,
    #[error("table has duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// `<response> ~ <term> (+ <term>)*` with exactly one `cluster(<name>)` term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaSpec {
    pub response: String,
    pub covariates: Vec<String>,
    pub cluster: String,
}

fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

pub fn parse_formula(text: &str) -> Result<FormulaSpec, DataError> {
    let (lhs, rhs) = text.split_once('~').ok_or(DataError::MissingTilde)?;
    let response = lhs.trim();
    if response.is_empty() {
        return Err(DataError::MissingResponse);
    }
    if !is_name(response) {
        return Err(DataError::BadTerm(response.to_string()));
    }
    let mut covariates = Vec::new();
    let mut clusters = Vec::new();
    for raw in rhs.split('+') {
        let term = raw.trim();
        if let Some(inner) = term
            .strip_prefix("cluster")
            .map(str::trim_start)
            .and_then(|s| s.strip_prefix('('))
            .and_then(|s| s.strip_suffix(')'))
        {
            let name = inner.trim();
            if !is_name(name) {
                return Err(DataError::BadTerm(term.to_string()));
            }
            clusters.push(name.to_string());
        } else if is_name(term) {
            covariates.push(term.to_string());
        } else {
            return Err(DataError::BadTerm(term.to_string()));
        }
    }
    if clusters.len() != 1 {
        return Err(DataError::ClusterCount(clusters.len()));
    }
    if covariates.is_empty() {
        return Err(DataError::NoCovariates);
    }
    let cluster = clusters.pop().unwrap();
    let mut seen = BTreeSet::new();
    for name in covariates.iter().chain([&cluster, &response.to_string()]) {
        if !seen.insert(name.clone()) {
            return Err(DataError::DuplicateTerm(name.clone()));
        }
    }
    Ok(FormulaSpec {
        response: response.to_string(),
        covariates,
        cluster,
    })
}

impl std::fmt::Display for FormulaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ~ ", self.response)?;
        for c in &self.covariates {
            write!(f, "{c} + ")?;
        }
        write!(f, "cluster({})", self.cluster)
    }
}

/// Column-oriented string table read from CSV.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<String>>,
    index: HashMap<String, usize>,
}

impl Table {
    pub fn new(headers: Vec<String>, columns: Vec<Vec<String>>) -> Result<Self, DataError> {
        assert_eq!(headers.len(), columns.len());
        let mut index = HashMap::new();
        for (i, h) in headers.iter().enumerate() {
            if index.insert(h.clone(), i).is_some() {
                return Err(DataError::DuplicateColumn(h.clone()));
            }
        }
        Ok(Self {
            headers,
            columns,
            index,
        })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record?;
            for (col, field) in columns.iter_mut().zip(record.iter()) {
                col.push(field.to_string());
            }
        }
        let table = Self::new(headers, columns)?;
        if table.n_rows() == 0 {
            return Err(DataError::Empty);
        }
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[String], DataError> {
        let i = self
            .index
            .get(name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
        let col = &self.columns[*i];
        if let Some(row) = col.iter().position(|v| v.trim().is_empty()) {
            return Err(DataError::EmptyField {
                column: name.to_string(),
                row,
            });
        }
        Ok(col)
    }

    /// `Some(values)` when every field parses as a real number.
    pub fn numeric(&self, name: &str) -> Result<Option<Vec<f64>>, DataError> {
        let col = self.column(name)?;
        Ok(col
            .iter()
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect())
    }
}

/// How one source covariate maps onto design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoding {
    Numeric {
        column: String,
        /// `(mean, sd)` when the column was standardized.
        standardization: Option<(f64, f64)>,
    },
    Categorical {
        column: String,
        reference: String,
        /// Non-reference levels, one design column each.
        levels: Vec<String>,
    },
}

impl ColumnEncoding {
    pub fn design_names(&self) -> Vec<String> {
        match self {
            ColumnEncoding::Numeric { column, .. } => vec![column.clone()],
            ColumnEncoding::Categorical { column, levels, .. } => {
                levels.iter().map(|l| format!("{column}{l}")).collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Row-major `n x R`.
    design: Vec<f64>,
    n_regressors: usize,
    cluster_of: Vec<usize>,
    time: Vec<f64>,
    event: Vec<bool>,
    group_names: Vec<String>,
    covariate_names: Vec<String>,
    encoding: Vec<ColumnEncoding>,
}

impl Dataset {
    /// Assemble from already-encoded parts. Groups are the distinct values of
    /// `cluster_of`, which must cover `0..group_names.len()`.
    pub fn from_parts(
        design: Vec<f64>,
        covariate_names: Vec<String>,
        cluster_of: Vec<usize>,
        group_names: Vec<String>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Self {
        let n = time.len();
        let r = covariate_names.len();
        assert!(n >= 1 && r >= 1 && !group_names.is_empty());
        assert_eq!(design.len(), n * r);
        assert_eq!(cluster_of.len(), n);
        assert_eq!(event.len(), n);
        let mut seen = vec![false; group_names.len()];
        for &g in &cluster_of {
            seen[g] = true;
        }
        assert!(seen.iter().all(|&s| s), "every group needs at least one unit");
        let encoding = covariate_names
            .iter()
            .map(|c| ColumnEncoding::Numeric {
                column: c.clone(),
                standardization: None,
            })
            .collect();
        Self {
            design,
            n_regressors: r,
            cluster_of,
            time,
            event,
            group_names,
            covariate_names,
            encoding,
        }
    }

    pub fn n_units(&self) -> usize {
        self.time.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.n_regressors
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.n_regressors..(i + 1) * self.n_regressors]
    }

    pub fn design(&self) -> &[f64] {
        &self.design
    }

    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn encoding(&self) -> &[ColumnEncoding] {
        &self.encoding
    }

    /// Unit indices of each group, ascending.
    pub fn group_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_groups()];
        for (i, &g) in self.cluster_of.iter().enumerate() {
            members[g].push(i);
        }
        members
    }

    pub fn with_event(mut self, event: Vec<bool>) -> Self {
        assert_eq!(event.len(), self.n_units());
        self.event = event;
        self
    }
}

/// Encoded covariates and cluster membership, without response information.
#[derive(Debug, Clone)]
pub struct Design {
    pub design: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub cluster_of: Vec<usize>,
    pub group_names: Vec<String>,
    pub encoding: Vec<ColumnEncoding>,
}

fn sample_mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let var = if values.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn derive_encoding(
    table: &Table,
    spec: &FormulaSpec,
    standardize: bool,
) -> Result<Vec<ColumnEncoding>, DataError> {
    spec.covariates
        .iter()
        .map(|name| match table.numeric(name)? {
            Some(values) => {
                let standardization = if standardize {
                    let (mean, sd) = sample_mean_sd(&values);
                    if !(sd > 0.0) {
                        return Err(DataError::ConstantNumeric(name.clone()));
                    }
                    Some((mean, sd))
                } else {
                    None
                };
                Ok(ColumnEncoding::Numeric {
                    column: name.clone(),
                    standardization,
                })
            }
            None => {
                let levels: BTreeSet<String> = table
                    .column(name)?
                    .iter()
                    .map(|v| v.trim().to_string())
                    .collect();
                let mut levels = levels.into_iter();
                let reference = levels.next().expect("non-empty column");
                let rest: Vec<String> = levels.collect();
                if rest.is_empty() {
                    return Err(DataError::ConstantCategorical(name.clone()));
                }
                Ok(ColumnEncoding::Categorical {
                    column: name.clone(),
                    reference,
                    levels: rest,
                })
            }
        })
        .collect()
}

/// Encode covariates with a fixed encoding; groups are indexed by `known_groups`
/// when given, otherwise by first appearance.
pub fn build_design(
    table: &Table,
    spec: &FormulaSpec,
    encoding: &[ColumnEncoding],
    known_groups: Option<&[String]>,
) -> Result<Design, DataError> {
    let n = table.n_rows();
    let covariate_names: Vec<String> = encoding.iter().flat_map(|e| e.design_names()).collect();
    let r = covariate_names.len();
    let mut design = vec![0.0; n * r];
    let mut offset = 0;
    for enc in encoding {
        match enc {
            ColumnEncoding::Numeric {
                column,
                standardization,
            } => {
                let values = table
                    .numeric(column)?
                    .ok_or_else(|| DataError::NonNumeric(column.clone()))?;
                for (i, v) in values.into_iter().enumerate() {
                    design[i * r + offset] = match standardization {
                        Some((mean, sd)) => (v - mean) / sd,
                        None => v,
                    };
                }
                offset += 1;
            }
            ColumnEncoding::Categorical {
                column,
                reference,
                levels,
            } => {
                for (i, raw) in table.column(column)?.iter().enumerate() {
                    let v = raw.trim();
                    if v == reference {
                        continue;
                    }
                    let slot = levels.iter().position(|l| l == v).ok_or_else(|| {
                        DataError::UnknownLevel {
                            column: column.clone(),
                            level: v.to_string(),
                        }
                    })?;
                    design[i * r + offset + slot] = 1.0;
                }
                offset += levels.len();
            }
        }
    }

    let labels = table.column(&spec.cluster)?;
    let mut group_names: Vec<String> = known_groups.map(<[String]>::to_vec).unwrap_or_default();
    let mut lookup: HashMap<String, usize> = group_names
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), i))
        .collect();
    let mut cluster_of = Vec::with_capacity(n);
    for raw in labels {
        let label = raw.trim();
        let g = match lookup.get(label) {
            Some(&g) => g,
            None if known_groups.is_some() => {
                return Err(DataError::UnknownLevel {
                    column: spec.cluster.clone(),
                    level: label.to_string(),
                })
            }
            None => {
                group_names.push(label.to_string());
                lookup.insert(label.to_string(), group_names.len() - 1);
                group_names.len() - 1
            }
        };
        cluster_of.push(g);
    }
    Ok(Design {
        design,
        covariate_names,
        cluster_of,
        group_names,
        encoding: encoding.to_vec(),
    })
}

fn read_times(table: &Table, spec: &FormulaSpec) -> Result<Vec<f64>, DataError> {
    let time = table
        .numeric(&spec.response)?
        .ok_or_else(|| DataError::NonNumeric(spec.response.clone()))?;
    if let Some((row, &value)) = time.iter().enumerate().find(|(_, &t)| !(t > 0.0)) {
        return Err(DataError::NonPositiveTime {
            column: spec.response.clone(),
            row,
            value,
        });
    }
    Ok(time)
}

/// Parse a 0/1 (or true/false) status column.
pub fn read_status(table: &Table, column: &str) -> Result<Vec<bool>, DataError> {
    table
        .column(column)?
        .iter()
        .enumerate()
        .map(|(row, v)| match v.trim() {
            "1" | "1.0" | "true" | "TRUE" | "True" => Ok(true),
            "0" | "0.0" | "false" | "FALSE" | "False" => Ok(false),
            other => Err(DataError::BadStatus {
                column: column.to_string(),
                row,
                value: other.to_string(),
            }),
        })
        .collect()
}

/// Explicit status wins; otherwise an event is any time inside the follow-up.
pub fn resolve_censoring(
    time: &[f64],
    grid_end: f64,
    status: Option<&[bool]>,
) -> Result<Vec<bool>, DataError> {
    match status {
        Some(s) if s.len() != time.len() => Err(DataError::StatusLength {
            expected: time.len(),
            got: s.len(),
        }),
        Some(s) => Ok(s.to_vec()),
        None => Ok(time.iter().map(|&t| t <= grid_end).collect()),
    }
}

/// Build a dataset from a table. Event flags start as "all observed" and are
/// replaced through [`Dataset::with_event`] once the censoring rule is known.
pub fn build_dataset(table: &Table, spec: &FormulaSpec, standardize: bool) -> Result<Dataset, DataError> {
    let encoding = derive_encoding(table, spec, standardize)?;
    build_dataset_with_encoding(table, spec, &encoding)
}

pub fn build_dataset_with_encoding(
    table: &Table,
    spec: &FormulaSpec,
    encoding: &[ColumnEncoding],
) -> Result<Dataset, DataError> {
    let time = read_times(table, spec)?;
    let d = build_design(table, spec, encoding, None)?;
    let n = time.len();
    Ok(Dataset {
        design: d.design,
        n_regressors: d.covariate_names.len(),
        cluster_of: d.cluster_of,
        time,
        event: vec![true; n],
        group_names: d.group_names,
        covariate_names: d.covariate_names,
        encoding: d.encoding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(csv_text: &str) -> Table {
        Table::from_reader(csv_text.as_bytes()).unwrap()
    }

    #[test]
    fn parses_two_covariate_formula() {
        let f = parse_formula("time_to_event ~ Gender + CFUP + cluster(group)").unwrap();
        assert_eq!(f.response, "time_to_event");
        assert_eq!(f.covariates, vec!["Gender", "CFUP"]);
        assert_eq!(f.cluster, "group");
        assert_eq!(f.to_string(), "time_to_event ~ Gender + CFUP + cluster(group)");
    }

    #[test]
    fn parses_minimal_and_rejects_bad() {
        let f = parse_formula("t ~ x + cluster(g)").unwrap();
        assert_eq!((f.response.as_str(), f.covariates.as_slice(), f.cluster.as_str()), ("t", &["x".to_string()][..], "g"));
        assert!(matches!(parse_formula("t ~ x + y"), Err(DataError::ClusterCount(0))));
        assert!(matches!(parse_formula("t x + cluster(g)"), Err(DataError::MissingTilde)));
        assert!(matches!(
            parse_formula("t ~ x + cluster(g) + cluster(h)"),
            Err(DataError::ClusterCount(2))
        ));
        assert!(matches!(parse_formula("t ~ cluster(g)"), Err(DataError::NoCovariates)));
        assert!(matches!(parse_formula("t ~ x + x + cluster(g)"), Err(DataError::DuplicateTerm(_))));
        assert!(matches!(parse_formula("t ~ x + cluster(x)"), Err(DataError::DuplicateTerm(_))));
        assert!(matches!(parse_formula("t ~ x + + cluster(g)"), Err(DataError::BadTerm(_))));
        assert!(matches!(parse_formula(" ~ x + cluster(g)"), Err(DataError::MissingResponse)));
    }

    #[test]
    fn dummy_encodes_with_lexicographic_reference() {
        let t = table("time,Gender,group\n1.5,Male,a\n2.0,Female,b\n3.0,Male,a\n");
        let f = parse_formula("time ~ Gender + cluster(group)").unwrap();
        let d = build_dataset(&t, &f, true).unwrap();
        assert_eq!(d.covariate_names(), &["GenderMale"]);
        assert_eq!(d.design(), &[1.0, 0.0, 1.0]);
        assert_eq!(d.group_names(), &["a", "b"]);
        assert_eq!(d.cluster_of(), &[0, 1, 0]);
    }

    #[test]
    fn three_level_column() {
        let t = table("t,c,g\n1,B,x\n2,A,x\n3,C,y\n");
        let f = parse_formula("t ~ c + cluster(g)").unwrap();
        let d = build_dataset(&t, &f, false).unwrap();
        assert_eq!(d.covariate_names(), &["cB", "cC"]);
        assert_eq!(d.row(0), &[1.0, 0.0]);
        assert_eq!(d.row(1), &[0.0, 0.0]);
        assert_eq!(d.row(2), &[0.0, 1.0]);
    }

    #[test]
    fn standardizes_numeric() {
        let t = table("t,x,g\n1,1,a\n2,2,a\n3,3,a\n");
        let f = parse_formula("t ~ x + cluster(g)").unwrap();
        let d = build_dataset(&t, &f, true).unwrap();
        let v = d.design();
        let mean: f64 = v.iter().sum::<f64>() / 3.0;
        let var: f64 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn build_errors() {
        let f = parse_formula("t ~ x + cluster(g)").unwrap();
        let missing = table("t,g\n1,a\n");
        assert!(matches!(build_dataset(&missing, &f, false), Err(DataError::MissingColumn(_))));
        let nonnum = table("t,x,g\nsoon,1,a\n");
        assert!(matches!(build_dataset(&nonnum, &f, false), Err(DataError::NonNumeric(_))));
        let constant = table("t,x,g\n1,k,a\n2,k,a\n");
        assert!(matches!(build_dataset(&constant, &f, false), Err(DataError::ConstantCategorical(_))));
        let neg = table("t,x,g\n-1,1,a\n");
        assert!(matches!(build_dataset(&neg, &f, false), Err(DataError::NonPositiveTime { .. })));
        let empty = table("t,x,g\n1,,a\n");
        assert!(matches!(build_dataset(&empty, &f, false), Err(DataError::EmptyField { .. })));
    }

    #[test]
    fn censoring_rules() {
        assert_eq!(resolve_censoring(&[6.1], 6.0, None).unwrap(), vec![false]);
        assert_eq!(resolve_censoring(&[2.5], 6.0, None).unwrap(), vec![true]);
        assert_eq!(resolve_censoring(&[1.0, 9.0], 6.0, Some(&[true, false])).unwrap(), vec![true, false]);
        // explicit status ignores the domain end entirely
        assert_eq!(resolve_censoring(&[9.0], 6.0, Some(&[true])).unwrap(), vec![true]);
        assert!(matches!(
            resolve_censoring(&[1.0, 2.0], 6.0, Some(&[true])),
            Err(DataError::StatusLength { .. })
        ));
    }

    #[test]
    fn known_groups_reject_new_labels() {
        let t = table("t,x,g\n1,1,a\n2,2,z\n");
        let f = parse_formula("t ~ x + cluster(g)").unwrap();
        let enc = vec![ColumnEncoding::Numeric {
            column: "x".into(),
            standardization: None,
        }];
        let known = vec!["a".to_string()];
        assert!(matches!(
            build_design(&t, &f, &enc, Some(&known)),
            Err(DataError::UnknownLevel { .. })
        ));
    }

    proptest! {
        #[test]
        fn dummy_rows_sum_at_most_one(levels in prop::collection::vec(0usize..4, 2..30)) {
            prop_assume!(levels.iter().collect::<BTreeSet<_>>().len() >= 2);
            let mut text = String::from("t,c,g\n");
            for (i, l) in levels.iter().enumerate() {
                text.push_str(&format!("{},L{},g{}\n", i + 1, l, i % 3));
            }
            let t = table(&text);
            let f = parse_formula("t ~ c + cluster(g)").unwrap();
            let d = build_dataset(&t, &f, false).unwrap();
            for i in 0..d.n_units() {
                let s: f64 = d.row(i).iter().sum();
                prop_assert!(s <= 1.0);
                prop_assert!(d.row(i).iter().all(|&v| v == 0.0 || v == 1.0));
            }
            // group map is a bijection onto 0..N
            let distinct: BTreeSet<usize> = d.cluster_of().iter().copied().collect();
            prop_assert_eq!(distinct.len(), d.n_groups());
            prop_assert_eq!(*distinct.iter().max().unwrap(), d.n_groups() - 1);
        }
    }
}
