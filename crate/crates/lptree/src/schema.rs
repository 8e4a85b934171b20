//! Attribute schemas, alternatives over them, and multisets of observed choices.
//!
//! A schema fixes the attribute names, the per-attribute value lists, and — through
//! the declared order of both — the canonical enumeration order of the combinatorial
//! domain. Everything downstream (trees, ranks, learners) indexes into a schema
//! instead of carrying strings around.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters that would collide with the separators used by the CLI alternative
/// syntax (`A=v,B=w`) and the split-edge keys of the tree file format (`v1|v2`).
const FORBIDDEN_NAME_CHARS: &[char] = &[',', '|', '=', '"', '\n', '\r'];

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema has no attributes")]
    NoAttributes,
    #[error("attribute `{0}` declared more than once")]
    DuplicateAttribute(String),
    #[error("attribute `{attr}` lists value `{value}` more than once")]
    DuplicateValue { attr: String, value: String },
    #[error("attribute `{attr}` needs at least two values")]
    TooFewValues { attr: String },
    #[error("name `{name}` is empty or contains a reserved character (one of , | = \" or a line break)")]
    BadName { name: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{attr}` has no value `{value}`")]
    UnknownValue { attr: String, value: String },
    #[error("expected {expected} attribute values, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("value index {index} out of range for attribute `{attr}`")]
    ValueOutOfRange { attr: String, index: u32 },
    #[error("attribute `{0}` assigned more than once")]
    DuplicateAssignment(String),
    #[error("no value assigned to attribute `{0}`")]
    MissingAssignment(String),
    #[error("malformed assignment `{0}`, expected `attr=value`")]
    MalformedAssignment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid schema JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AttrDef {
    name: String,
    values: Vec<String>,
    value_index: HashMap<String, u32>,
}

/// An ordered list of named attributes with finite, ordered value domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    attrs: Vec<AttrDef>,
    attr_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SchemaDoc {
    attributes: Vec<AttrDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttrDoc {
    name: String,
    values: Vec<String>,
}

fn check_name(name: &str) -> Result<(), SchemaError> {
    if name.is_empty() || name.contains(FORBIDDEN_NAME_CHARS) {
        return Err(SchemaError::BadName { name: name.to_owned() });
    }
    Ok(())
}

impl Schema {
    pub fn new(attrs: Vec<(String, Vec<String>)>) -> Result<Self, SchemaError> {
        if attrs.is_empty() {
            return Err(SchemaError::NoAttributes);
        }
        let mut defs = Vec::with_capacity(attrs.len());
        let mut attr_index = HashMap::new();
        for (i, (name, values)) in attrs.into_iter().enumerate() {
            check_name(&name)?;
            if attr_index.insert(name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateAttribute(name));
            }
            if values.len() < 2 {
                return Err(SchemaError::TooFewValues { attr: name });
            }
            let mut value_index = HashMap::new();
            for (j, v) in values.iter().enumerate() {
                check_name(v)?;
                if value_index.insert(v.clone(), j as u32).is_some() {
                    return Err(SchemaError::DuplicateValue { attr: name, value: v.clone() });
                }
            }
            defs.push(AttrDef { name, values, value_index });
        }
        Ok(Schema { attrs: defs, attr_index })
    }

    /// Number of attributes.
    pub fn attr_count(&self) -> usize {
        self.attrs.len()
    }

    pub fn name(&self, attr: usize) -> &str {
        &self.attrs[attr].name
    }

    pub fn values(&self, attr: usize) -> &[String] {
        &self.attrs[attr].values
    }

    pub fn domain_size(&self, attr: usize) -> usize {
        self.attrs[attr].values.len()
    }

    pub fn max_domain_size(&self) -> usize {
        self.attrs.iter().map(|a| a.values.len()).max().unwrap_or(0)
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attr_index.get(name).copied()
    }

    pub fn value_index(&self, attr: usize, value: &str) -> Option<u32> {
        self.attrs[attr].value_index.get(value).copied()
    }

    /// Total number of complete alternatives, `prod_i |dom(X_i)|`.
    pub fn domain_count(&self) -> BigUint {
        self.domain_size_of((0..self.attr_count()).collect::<Vec<_>>().as_slice())
    }

    /// Number of joint instantiations of the given attributes.
    pub fn domain_size_of(&self, vars: &[usize]) -> BigUint {
        let mut n = BigUint::one();
        for &v in vars {
            n *= BigUint::from(self.domain_size(v));
        }
        n
    }

    /// All alternatives in canonical order: the first attribute varies slowest,
    /// each attribute runs through its values in declared order.
    pub fn alternatives(&self) -> Alternatives<'_> {
        Alternatives { schema: self, next: Some(vec![0; self.attr_count()]) }
    }

    /// Builds a validated alternative from raw value indices.
    pub fn alternative(&self, values: Vec<u32>) -> Result<Alternative, SchemaError> {
        if values.len() != self.attr_count() {
            return Err(SchemaError::WrongArity { expected: self.attr_count(), got: values.len() });
        }
        for (i, &v) in values.iter().enumerate() {
            if v as usize >= self.domain_size(i) {
                return Err(SchemaError::ValueOutOfRange { attr: self.name(i).to_owned(), index: v });
            }
        }
        Ok(Alternative(values))
    }

    /// Parses the CLI syntax `attr=value,attr=value,...`; every attribute must
    /// be assigned exactly once.
    pub fn parse_alternative(&self, text: &str) -> Result<Alternative, SchemaError> {
        let mut values: Vec<Option<u32>> = vec![None; self.attr_count()];
        for piece in text.split(',') {
            let (name, value) = piece
                .split_once('=')
                .ok_or_else(|| SchemaError::MalformedAssignment(piece.to_owned()))?;
            let attr = self
                .attr_index(name)
                .ok_or_else(|| SchemaError::UnknownAttribute(name.to_owned()))?;
            let idx = self.value_index(attr, value).ok_or_else(|| SchemaError::UnknownValue {
                attr: name.to_owned(),
                value: value.to_owned(),
            })?;
            if values[attr].replace(idx).is_some() {
                return Err(SchemaError::DuplicateAssignment(name.to_owned()));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| SchemaError::MissingAssignment(self.name(i).to_owned())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Alternative(values))
    }

    /// Renders an alternative in the same `attr=value,...` syntax.
    pub fn format_alternative(&self, alt: &Alternative) -> String {
        alt.0
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{}={}", self.name(i), self.values(i)[v as usize]))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_json_reader(mut reader: impl Read) -> Result<Self, SchemaError> {
        let mut buf = Vec::new();
        reader.read_to_end(&mut buf)?;
        Self::from_json_slice(&buf)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, SchemaError> {
        let doc: SchemaDoc = serde_json::from_slice(bytes)?;
        Schema::from_doc(doc)
    }

    pub fn to_json_vec(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.to_doc()).expect("schema serialization cannot fail");
        out.push(b'\n');
        out
    }

    pub(crate) fn from_doc(doc: SchemaDoc) -> Result<Self, SchemaError> {
        Schema::new(doc.attributes.into_iter().map(|a| (a.name, a.values)).collect())
    }

    pub(crate) fn to_doc(&self) -> SchemaDoc {
        SchemaDoc {
            attributes: self
                .attrs
                .iter()
                .map(|a| AttrDoc { name: a.name.clone(), values: a.values.clone() })
                .collect(),
        }
    }
}

/// A complete assignment of one value index per attribute.
///
/// Alternatives are plain index vectors; they only make sense next to the schema
/// they were built against. `Ord` is the canonical domain order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alternative(Vec<u32>);

impl Alternative {
    pub(crate) fn from_indices(values: Vec<u32>) -> Self {
        Alternative(values)
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn value(&self, attr: usize) -> u32 {
        self.0[attr]
    }

    /// Restriction to a subset of attributes, in the order given.
    pub fn project(&self, vars: &[usize]) -> Vec<u32> {
        vars.iter().map(|&v| self.0[v]).collect()
    }
}

/// Iterator over a schema's full domain in canonical order.
pub struct Alternatives<'a> {
    schema: &'a Schema,
    next: Option<Vec<u32>>,
}

impl Iterator for Alternatives<'_> {
    type Item = Alternative;

    fn next(&mut self) -> Option<Alternative> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut advanced = false;
        for i in (0..succ.len()).rev() {
            if (succ[i] as usize) + 1 < self.schema.domain_size(i) {
                succ[i] += 1;
                for s in succ.iter_mut().skip(i + 1) {
                    *s = 0;
                }
                advanced = true;
                break;
            }
        }
        if advanced {
            self.next = Some(succ);
        }
        Some(Alternative(current))
    }
}

/// An assignment of values to a subset of the attributes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialInstantiation {
    bound: BTreeMap<usize, u32>,
}

impl PartialInstantiation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, attr: usize, value: u32) {
        self.bound.insert(attr, value);
    }

    pub fn unbind(&mut self, attr: usize) {
        self.bound.remove(&attr);
    }

    pub fn get(&self, attr: usize) -> Option<u32> {
        self.bound.get(&attr).copied()
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.bound.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.bound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bound.is_empty()
    }

    /// Does the alternative agree with every bound attribute?
    pub fn matches(&self, alt: &Alternative) -> bool {
        self.bound.iter().all(|(&a, &v)| alt.value(a) == v)
    }
}

impl fmt::Display for PartialInstantiation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (a, v) in &self.bound {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{a}={v}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("sample is empty (no rows with a positive count)")]
    EmptySample,
    #[error("row {row}: {source}")]
    BadAlternative { row: u64, source: SchemaError },
    #[error("row {row}: invalid count `{text}`")]
    BadCount { row: u64, text: String },
    #[error("header mismatch: expected the schema attributes {expected:?} (optionally followed by `__count`), got {found:?}")]
    HeaderMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("no attributes given for a marginal")]
    EmptyVars,
    #[error("attribute index {0} out of range")]
    VarOutOfRange(usize),
    #[error("attribute index {0} repeated")]
    DuplicateVar(usize),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Column name for multiplicities in sample CSV files.
pub const COUNT_COLUMN: &str = "__count";

/// A multiset of alternatives: the observed choice data a tree is fitted to.
///
/// Rows are aggregated, zero-count rows dropped, and the remainder kept sorted
/// in canonical order, so two samples with the same multiset compare equal and
/// serialize identically. Counts are big integers: exact full-domain weightings
/// (used by the synthetic pipeline) overflow machine words already at moderate
/// attribute counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    schema: Arc<Schema>,
    rows: Vec<(Alternative, BigUint)>,
    total: BigUint,
}

impl Sample {
    pub fn from_counts(
        schema: Arc<Schema>,
        rows: impl IntoIterator<Item = (Alternative, BigUint)>,
    ) -> Result<Self, SampleError> {
        let mut agg: BTreeMap<Alternative, BigUint> = BTreeMap::new();
        for (row, (alt, count)) in rows.into_iter().enumerate() {
            // Re-validate: alternatives are cheap to check and may come from
            // a different schema instance than the one passed in.
            schema
                .alternative(alt.values().to_vec())
                .map_err(|source| SampleError::BadAlternative { row: row as u64 + 1, source })?;
            if count.is_zero() {
                continue;
            }
            *agg.entry(alt).or_default() += count;
        }
        let mut total = BigUint::zero();
        for c in agg.values() {
            total += c;
        }
        if total.is_zero() {
            return Err(SampleError::EmptySample);
        }
        Ok(Sample { schema, rows: agg.into_iter().collect(), total })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Distinct alternatives with their multiplicities, canonically ordered.
    pub fn rows(&self) -> &[(Alternative, BigUint)] {
        &self.rows
    }

    pub fn total(&self) -> &BigUint {
        &self.total
    }

    /// Joint value counts over `vars`; tuple keys follow the order of `vars`.
    /// Instantiations that never occur are absent from the map.
    pub fn marginal_counts(&self, vars: &[usize]) -> Result<BTreeMap<Vec<u32>, BigUint>, SampleError> {
        if vars.is_empty() {
            return Err(SampleError::EmptyVars);
        }
        let mut seen = vec![false; self.schema.attr_count()];
        for &v in vars {
            if v >= self.schema.attr_count() {
                return Err(SampleError::VarOutOfRange(v));
            }
            if seen[v] {
                return Err(SampleError::DuplicateVar(v));
            }
            seen[v] = true;
        }
        let mut out: BTreeMap<Vec<u32>, BigUint> = BTreeMap::new();
        for (alt, count) in &self.rows {
            *out.entry(alt.project(vars)).or_default() += count;
        }
        Ok(out)
    }

    /// Single-attribute counts for every attribute at once, indexed
    /// `[attr][value]`. One pass over the rows; the per-attribute marginals
    /// equal `marginal_counts(&[attr])` with absent values as zero.
    pub fn value_counts(&self) -> Vec<Vec<BigUint>> {
        let mut counts: Vec<Vec<BigUint>> = (0..self.schema.attr_count())
            .map(|a| vec![BigUint::zero(); self.schema.domain_size(a)])
            .collect();
        for (alt, count) in &self.rows {
            for (a, &v) in alt.values().iter().enumerate() {
                counts[a][v as usize] += count;
            }
        }
        counts
    }

    /// Reads the CSV format: a header with the schema's attribute names in
    /// schema order, optionally followed by a `__count` column; one alternative
    /// per row. Without a count column every row counts once.
    pub fn from_csv_reader(reader: impl Read, schema: &Arc<Schema>) -> Result<Self, SampleError> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = csv.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let n = schema.attr_count();
        let has_count = names.len() == n + 1 && names[n] == COUNT_COLUMN;
        let attrs_match =
            names.len() >= n && (0..n).all(|i| names[i] == schema.name(i)) && (has_count || names.len() == n);
        if !attrs_match {
            return Err(SampleError::HeaderMismatch {
                expected: (0..n).map(|i| schema.name(i).to_owned()).collect(),
                found: names.iter().map(|s| (*s).to_owned()).collect(),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in csv.records().enumerate() {
            let row = i as u64 + 1;
            let record = record?;
            let mut values = Vec::with_capacity(n);
            for a in 0..n {
                let field = record.get(a).unwrap_or("");
                let v = schema.value_index(a, field).ok_or_else(|| SampleError::BadAlternative {
                    row,
                    source: SchemaError::UnknownValue {
                        attr: schema.name(a).to_owned(),
                        value: field.to_owned(),
                    },
                })?;
                values.push(v);
            }
            let count = if has_count {
                let field = record.get(n).unwrap_or("");
                field
                    .parse::<BigUint>()
                    .map_err(|_| SampleError::BadCount { row, text: field.to_owned() })?
            } else {
                BigUint::one()
            };
            rows.push((Alternative(values), count));
        }
        Sample::from_counts(Arc::clone(schema), rows)
    }

    /// Writes the canonical CSV form: schema-order header plus `__count`,
    /// aggregated rows in canonical order.
    pub fn to_csv_vec(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = (0..self.schema.attr_count()).map(|i| self.schema.name(i)).collect();
        header.push(COUNT_COLUMN);
        w.write_record(&header).expect("write to Vec cannot fail");
        for (alt, count) in &self.rows {
            let mut record: Vec<String> = alt
                .values()
                .iter()
                .enumerate()
                .map(|(a, &v)| self.schema.values(a)[v as usize].clone())
                .collect();
            record.push(count.to_string());
            w.write_record(&record).expect("write to Vec cannot fail");
        }
        w.into_inner().expect("write to Vec cannot fail")
    }
}
