//! Tabular data model: attribute domains, encoded records, CSV ingestion and
//! train/test splitting.
//!
//! Categorical cells are encoded to label indices at load time. Numerical cells
//! stay raw reals until preprocessing bins them; any marginal computation over a
//! raw column is rejected.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PreprocessArtifacts;
use crate::rng;

/// Label emitted when decoding a merged rare-category code.
pub const RARE_LABEL: &str = "__rare__";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeKind {
    Categorical {
        labels: Vec<String>,
    },
    /// Public bounds plus the declared number of distinct values.
    Numerical {
        bounds: [f64; 2],
        size: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl AttributeSpec {
    pub fn categorical<S: Into<String>>(name: &str, labels: impl IntoIterator<Item = S>) -> Self {
        AttributeSpec {
            name: name.to_string(),
            kind: AttributeKind::Categorical {
                labels: labels.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn numerical(name: &str, lower: f64, upper: f64, size: usize) -> Self {
        AttributeSpec {
            name: name.to_string(),
            kind: AttributeKind::Numerical {
                bounds: [lower, upper],
                size,
            },
        }
    }

    /// Number of distinct codes (labels, or declared distinct values).
    pub fn size(&self) -> usize {
        match &self.kind {
            AttributeKind::Categorical { labels } => labels.len(),
            AttributeKind::Numerical { size, .. } => *size,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, AttributeKind::Categorical { .. })
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            AttributeKind::Numerical { bounds, .. } => Some((bounds[0], bounds[1])),
            AttributeKind::Categorical { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            AttributeKind::Categorical { labels } => {
                if labels.is_empty() {
                    return Err(Error::InvalidDomain(format!("`{}` has no labels", self.name)));
                }
                let mut seen = std::collections::HashSet::new();
                for l in labels {
                    if !seen.insert(l.as_str()) {
                        return Err(Error::InvalidDomain(format!(
                            "`{}` has duplicate label `{l}`",
                            self.name
                        )));
                    }
                }
            }
            AttributeKind::Numerical { bounds, size } => {
                if !(bounds[0].is_finite() && bounds[1].is_finite() && bounds[0] < bounds[1]) {
                    return Err(Error::InvalidDomain(format!(
                        "`{}` bounds {:?} must satisfy lower < upper",
                        self.name, bounds
                    )));
                }
                if *size == 0 {
                    return Err(Error::InvalidDomain(format!("`{}` has size 0", self.name)));
                }
            }
        }
        Ok(())
    }
}

/// Ordered attribute list with unique names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainDoc", into = "DomainDoc")]
pub struct Domain {
    attributes: Vec<AttributeSpec>,
}

#[derive(Serialize, Deserialize)]
struct DomainDoc {
    attributes: Vec<AttributeSpec>,
}

impl TryFrom<DomainDoc> for Domain {
    type Error = Error;
    fn try_from(doc: DomainDoc) -> Result<Self> {
        Domain::new(doc.attributes)
    }
}

impl From<Domain> for DomainDoc {
    fn from(d: Domain) -> Self {
        DomainDoc {
            attributes: d.attributes,
        }
    }
}

impl Domain {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self> {
        let mut names = std::collections::HashSet::new();
        for a in &attributes {
            a.validate()?;
            if !names.insert(a.name.as_str()) {
                return Err(Error::InvalidDomain(format!("duplicate attribute `{}`", a.name)));
            }
        }
        Ok(Domain { attributes })
    }

    /// Parse a JSON domain document.
    pub fn from_json(reader: impl Read) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn attribute(&self, j: usize) -> &AttributeSpec {
        &self.attributes[j]
    }

    pub fn d(&self) -> usize {
        self.attributes.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.attributes.iter().map(AttributeSpec::size).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }
}

/// A single attribute column, either integer codes or raw reals awaiting binning.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Codes(Vec<u32>),
    Raw(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Codes(c) => c.len(),
            Column::Raw(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Records stored column-wise over a [`Domain`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    domain: Domain,
    columns: Vec<Column>,
    n: usize,
}

impl Dataset {
    /// Build from columns, checking lengths and code ranges.
    pub fn new(domain: Domain, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != domain.d() {
            return Err(Error::DomainMismatch(format!(
                "{} columns for {} attributes",
                columns.len(),
                domain.d()
            )));
        }
        let n = columns.first().map_or(0, Column::len);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DomainMismatch(format!(
                    "column {j} has {} rows, expected {n}",
                    col.len()
                )));
            }
            let attr = domain.attribute(j);
            match col {
                Column::Codes(codes) => {
                    let size = attr.size();
                    if let Some(row) = codes.iter().position(|&c| c as usize >= size) {
                        return Err(Error::DomainMismatch(format!(
                            "code {} at row {row}, col {j} outside [0, {size})",
                            codes[row]
                        )));
                    }
                }
                Column::Raw(_) if attr.is_categorical() => {
                    return Err(Error::DomainMismatch(format!(
                        "categorical `{}` cannot hold raw values",
                        attr.name
                    )));
                }
                Column::Raw(_) => {}
            }
        }
        Ok(Dataset { domain, columns, n })
    }

    /// Convenience constructor for fully encoded data.
    pub fn from_codes(domain: Domain, columns: Vec<Vec<u32>>) -> Result<Self> {
        Dataset::new(domain, columns.into_iter().map(Column::Codes).collect())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.domain.d()
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }

    /// Codes of attribute `j`; fails if the column is still raw.
    pub fn codes(&self, j: usize) -> Result<&[u32]> {
        match &self.columns[j] {
            Column::Codes(c) => Ok(c),
            Column::Raw(_) => Err(Error::Unencoded(self.domain.attribute(j).name.clone())),
        }
    }

    pub fn is_encoded(&self) -> bool {
        self.columns.iter().all(|c| matches!(c, Column::Codes(_)))
    }

    /// All columns as code slices; fails on the first raw column.
    pub fn code_columns(&self) -> Result<Vec<&[u32]>> {
        (0..self.d()).map(|j| self.codes(j)).collect()
    }

    /// New dataset holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|col| match col {
                Column::Codes(c) => Column::Codes(rows.iter().map(|&i| c[i]).collect()),
                Column::Raw(r) => Column::Raw(rows.iter().map(|&i| r[i]).collect()),
            })
            .collect();
        Dataset {
            domain: self.domain.clone(),
            columns,
            n: rows.len(),
        }
    }
}

/// Parse a CSV stream against `domain`.
///
/// Rows are numbered from 1 (the header is row 0); columns follow the CSV
/// header order in error messages.
pub fn load_dataset(csv_source: impl Read, domain: &Domain) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_source);
    let header = reader.headers()?.clone();

    // csv column -> domain attribute
    let mut mapping = Vec::with_capacity(header.len());
    let mut seen = vec![false; domain.d()];
    for (col, name) in header.iter().enumerate() {
        let j = domain.index_of(name).ok_or_else(|| Error::UnknownColumn {
            name: name.to_string(),
            col,
        })?;
        if seen[j] {
            return Err(Error::InvalidDomain(format!("column `{name}` repeated")));
        }
        seen[j] = true;
        mapping.push(j);
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::MissingColumn(domain.attribute(j).name.clone()));
    }

    let label_maps: Vec<Option<HashMap<&str, u32>>> = domain
        .attributes()
        .iter()
        .map(|a| match &a.kind {
            AttributeKind::Categorical { labels } => Some(
                labels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i as u32))
                    .collect(),
            ),
            AttributeKind::Numerical { .. } => None,
        })
        .collect();

    let mut columns: Vec<Column> = domain
        .attributes()
        .iter()
        .map(|a| {
            if a.is_categorical() {
                Column::Codes(Vec::new())
            } else {
                Column::Raw(Vec::new())
            }
        })
        .collect();

    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        if record.len() != mapping.len() {
            return Err(Error::UnparseableCell {
                row,
                col: record.len().min(mapping.len()),
                msg: format!("expected {} fields, found {}", mapping.len(), record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let j = mapping[col];
            match (&mut columns[j], &label_maps[j]) {
                (Column::Codes(codes), Some(map)) => {
                    let code = map.get(cell).ok_or_else(|| Error::OutOfDomainLabel {
                        label: cell.to_string(),
                        row,
                        col,
                    })?;
                    codes.push(*code);
                }
                (Column::Raw(values), None) => {
                    let value: f64 = cell.trim().parse().map_err(|e| Error::UnparseableCell {
                        row,
                        col,
                        msg: format!("`{cell}`: {e}"),
                    })?;
                    if value.is_nan() {
                        return Err(Error::UnparseableCell {
                            row,
                            col,
                            msg: "NaN".into(),
                        });
                    }
                    let (lo, hi) = domain.attribute(j).bounds().expect("numerical");
                    if value < lo || value > hi {
                        return Err(Error::OutOfBounds { value, row, col });
                    }
                    values.push(value);
                }
                _ => unreachable!("column kind follows attribute kind"),
            }
        }
    }
    Dataset::new(domain.clone(), columns)
}

/// Random disjoint partition into `(train, test)`; both keep original row order.
pub fn split_train_test(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let n = dataset.n();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n < 2 || n_test == 0 || n_test >= n {
        return Err(Error::DegenerateSplit(format!(
            "n = {n}, fraction {test_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut test_rows = order[..n_test].to_vec();
    let mut train_rows = order[n_test..].to_vec();
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok((dataset.select_rows(&train_rows), dataset.select_rows(&test_rows)))
}

/// Decode an encoded dataset back to string rows.
///
/// Merged rare codes decode to [`RARE_LABEL`]; bin codes decode to the bin
/// midpoint.
pub fn decode_dataset(dataset: &Dataset, artifacts: &PreprocessArtifacts) -> Result<Vec<Vec<String>>> {
    artifacts.check_encoded_domain(dataset.domain())?;
    let cols = dataset.code_columns()?;
    let decoders: Vec<Vec<String>> = (0..dataset.d())
        .map(|j| artifacts.transform(j).decode_table(artifacts.original_domain.attribute(j)))
        .collect();
    Ok((0..dataset.n())
        .map(|i| {
            cols.iter()
                .zip(&decoders)
                .map(|(col, table)| table[col[i] as usize].clone())
                .collect()
        })
        .collect())
}

/// Render a dataset over its own (original) domain as string rows: labels
/// for categorical codes, raw values for numerical attributes.
pub fn dataset_rows(dataset: &Dataset) -> Result<Vec<Vec<String>>> {
    let mut rows = vec![Vec::with_capacity(dataset.d()); dataset.n()];
    for (col, attr) in dataset.columns().iter().zip(dataset.domain().attributes()) {
        match (col, &attr.kind) {
            (Column::Codes(codes), AttributeKind::Categorical { labels }) => {
                for (row, &c) in rows.iter_mut().zip(codes) {
                    row.push(labels[c as usize].clone());
                }
            }
            (Column::Raw(values), AttributeKind::Numerical { .. }) => {
                for (row, v) in rows.iter_mut().zip(values) {
                    row.push(v.to_string());
                }
            }
            _ => return Err(Error::param(format!("`{}` is already encoded; decode it with its artifacts", attr.name))),
        }
    }
    Ok(rows)
}

/// Write a dataset over its original domain as CSV with a header.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let header: Vec<String> = dataset.domain().attributes().iter().map(|a| a.name.clone()).collect();
    write_csv(writer, &header, &dataset_rows(dataset)?)
}

/// Write rows with a header line.
pub fn write_csv<W: Write>(writer: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab_domain() -> Domain {
        Domain::new(vec![AttributeSpec::categorical("x", ["a", "b"])]).unwrap()
    }

    #[test]
    fn loads_categorical_codes_in_label_order() {
        let ds = load_dataset("x\na\nb\na\n".as_bytes(), &ab_domain()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.codes(0).unwrap(), &[0, 1, 0]);
    }

    #[test]
    fn out_of_domain_label_reports_coordinates() {
        let err = load_dataset("x\nc\n".as_bytes(), &ab_domain()).unwrap_err();
        match err {
            Error::OutOfDomainLabel { row, col, .. } => assert_eq!((row, col), (1, 0)),
            e => panic!("unexpected {e}"),
        }
        assert!(err_string("x\nc\n").contains("out-of-domain label"));
        assert!(err_string("x\nc\n").contains("row 1, col 0"));
    }

    fn err_string(csv: &str) -> String {
        load_dataset(csv.as_bytes(), &ab_domain()).unwrap_err().to_string()
    }

    #[test]
    fn numerical_out_of_bounds_and_unparseable() {
        let dom = Domain::new(vec![AttributeSpec::numerical("v", 0.0, 100.0, 101)]).unwrap();
        let err = load_dataset("v\n3\n105.0\n".as_bytes(), &dom).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { row: 2, col: 0, .. }), "{err}");
        let err = load_dataset("v\nabc\n".as_bytes(), &dom).unwrap_err();
        assert!(matches!(err, Error::UnparseableCell { row: 1, .. }));
        let ds = load_dataset("v\n3\n100\n".as_bytes(), &dom).unwrap();
        assert_eq!(ds.column(0), &Column::Raw(vec![3.0, 100.0]));
        assert!(matches!(ds.codes(0), Err(Error::Unencoded(_))));
    }

    #[test]
    fn unknown_and_missing_columns() {
        let dom = Domain::new(vec![
            AttributeSpec::categorical("x", ["a"]),
            AttributeSpec::categorical("y", ["a"]),
        ])
        .unwrap();
        assert!(matches!(
            load_dataset("x,z\na,a\n".as_bytes(), &dom),
            Err(Error::UnknownColumn { col: 1, .. })
        ));
        assert!(matches!(load_dataset("x\na\n".as_bytes(), &dom), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn header_order_may_differ_from_domain() {
        let dom = Domain::new(vec![
            AttributeSpec::categorical("x", ["a", "b"]),
            AttributeSpec::categorical("y", ["p", "q"]),
        ])
        .unwrap();
        let ds = load_dataset("y,x\nq,a\np,b\n".as_bytes(), &dom).unwrap();
        assert_eq!(ds.codes(0).unwrap(), &[0, 1]);
        assert_eq!(ds.codes(1).unwrap(), &[1, 0]);
    }

    #[test]
    fn labels_match_exactly() {
        // whitespace is significant
        assert!(load_dataset("x\n a\n".as_bytes(), &ab_domain()).is_err());
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(vec![AttributeSpec::categorical::<&str>("x", [])]).is_err());
        assert!(Domain::new(vec![AttributeSpec::categorical("x", ["a", "a"])]).is_err());
        assert!(Domain::new(vec![AttributeSpec::numerical("v", 1.0, 1.0, 3)]).is_err());
        assert!(Domain::new(vec![
            AttributeSpec::categorical("x", ["a"]),
            AttributeSpec::categorical("x", ["b"]),
        ])
        .is_err());
    }

    #[test]
    fn domain_json_round_trip() {
        let json = r#"{"attributes":[
            {"name":"color","kind":"categorical","labels":["red","green"]},
            {"name":"age","kind":"numerical","bounds":[0,100],"size":101}]}"#;
        let dom = Domain::from_json(json.as_bytes()).unwrap();
        assert_eq!(dom.sizes(), vec![2, 101]);
        let again = Domain::from_json(dom.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(dom, again);
        let bad = r#"{"attributes":[{"name":"x","kind":"categorical","labels":[]}]}"#;
        assert!(Domain::from_json(bad.as_bytes()).is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        let ds = crate::datagen::mixed_ten(50, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        assert_eq!(load_dataset(buf.as_slice(), ds.domain()).unwrap(), ds);
    }

    fn ten_rows() -> Dataset {
        let dom = Domain::new(vec![AttributeSpec::categorical(
            "x",
            (0..10).map(|i| i.to_string()),
        )])
        .unwrap();
        Dataset::from_codes(dom, vec![(0..10).collect()]).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = ten_rows();
        let (train, test) = split_train_test(&ds, 0.2, 7).unwrap();
        assert_eq!((train.n(), test.n()), (8, 2));
        let (train2, test2) = split_train_test(&ds, 0.2, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let mut all: Vec<u32> = train.codes(0).unwrap().to_vec();
        all.extend_from_slice(test.codes(0).unwrap());
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<u32>>());
    }

    #[test]
    fn degenerate_split_is_rejected() {
        let ds = ten_rows().select_rows(&[0]);
        assert!(matches!(split_train_test(&ds, 0.5, 1), Err(Error::DegenerateSplit(_))));
        assert!(split_train_test(&ten_rows(), 0.01, 1).is_err());
        assert!(split_train_test(&ten_rows(), 1.0, 1).is_err());
    }

    #[test]
    fn code_range_is_checked() {
        let dom = ab_domain();
        assert!(Dataset::from_codes(dom, vec![vec![0, 2]]).is_err());
    }
}
