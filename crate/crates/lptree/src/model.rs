//! Lexicographic preference trees and the order queries they answer.
//!
//! A tree node carries a non-empty attribute set and a linear order over the
//! joint domain of those attributes. A node is a leaf, passes to a single child,
//! or splits with one child per instantiation of its attributes. Every attribute
//! occurs exactly once on every root-to-leaf branch, which makes the induced
//! relation a linear order over the whole domain: two distinct alternatives are
//! decided by the first node on their common branch whose attributes they
//! disagree on.

use std::fmt;
use std::io::Read;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Alternative, PartialInstantiation, Schema, SchemaDoc, SchemaError};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("node has an empty attribute set")]
    EmptyVars,
    #[error("attribute index {0} out of range")]
    VarOutOfRange(usize),
    #[error("attribute index {0} repeated within one node")]
    DuplicateVar(usize),
    #[error("node domain is too large to materialize")]
    NodeDomainTooLarge,
    #[error("preference table has {got} rows, the node domain has {expected}")]
    CptWrongSize { expected: usize, got: usize },
    #[error("preference table row {row} has the wrong number of values")]
    CptWrongArity { row: usize },
    #[error("preference table row {row} contains an out-of-range value")]
    CptBadValue { row: usize },
    #[error("preference table row {row} repeats an instantiation")]
    CptDuplicate { row: usize },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{attr}` has no value `{value}`")]
    UnknownValue { attr: String, value: String },
    #[error("malformed split edge label `{key}`")]
    MalformedSplitKey { key: String },
    #[error("split is missing the edge `{key}`")]
    MissingSplitKey { key: String },
    #[error("`children` must be null or carry exactly one of `single` / `split`")]
    BadChildren,
    #[error("tree file embeds a different schema than expected")]
    SchemaMismatch,
    #[error("invalid tree: {0}")]
    Invalid(Violations),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid tree JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Structural problems found when checking a tree against its schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// An attribute labels two nodes on the same branch.
    RepeatedAttribute { path: String, attr: String },
    /// A branch ends before covering every attribute.
    MissingAttributes { path: String, attrs: Vec<String> },
    /// A split node's child count differs from its domain size.
    SplitArityMismatch { path: String, expected: usize, got: usize },
    /// A node's table was built against a different schema.
    ForeignTable { path: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RepeatedAttribute { path, attr } => {
                write!(f, "attribute `{attr}` repeated on the branch at {path}")
            }
            Violation::MissingAttributes { path, attrs } => {
                write!(f, "branch ending at {path} never decides {}", attrs.join(", "))
            }
            Violation::SplitArityMismatch { path, expected, got } => {
                write!(f, "split at {path} has {got} children, expected {expected}")
            }
            Violation::ForeignTable { path } => {
                write!(f, "table at {path} does not match the schema")
            }
        }
    }
}

/// A non-empty list of violations, displayed as one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in &self.0 {
            if !first {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("cannot compare an alternative with itself")]
    EqualAlternatives,
}

/// Which of the two queried alternatives is preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preferred {
    First,
    Second,
}

impl fmt::Display for Preferred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preferred::First => write!(f, "first"),
            Preferred::Second => write!(f, "second"),
        }
    }
}

/// A linear order over the joint domain of one node's attributes.
///
/// `vars` keeps the declared attribute order; table rows are value tuples in
/// that order, best first. Positions are also indexed by the canonical flat
/// encoding of tuples (first attribute most significant) for O(1) lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceTable {
    vars: Vec<usize>,
    dims: Vec<u32>,
    order: Vec<Vec<u32>>,
    position: Vec<u32>,
}

impl PreferenceTable {
    pub fn new(schema: &Schema, vars: Vec<usize>, order: Vec<Vec<u32>>) -> Result<Self, TreeError> {
        if vars.is_empty() {
            return Err(TreeError::EmptyVars);
        }
        for (i, &v) in vars.iter().enumerate() {
            if v >= schema.attr_count() {
                return Err(TreeError::VarOutOfRange(v));
            }
            if vars[..i].contains(&v) {
                return Err(TreeError::DuplicateVar(v));
            }
        }
        let dims: Vec<u32> = vars.iter().map(|&v| schema.domain_size(v) as u32).collect();
        let dom = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .filter(|&d| d <= u32::MAX as usize)
            .ok_or(TreeError::NodeDomainTooLarge)?;
        if order.len() != dom {
            return Err(TreeError::CptWrongSize { expected: dom, got: order.len() });
        }
        let mut position = vec![u32::MAX; dom];
        for (row, tuple) in order.iter().enumerate() {
            if tuple.len() != vars.len() {
                return Err(TreeError::CptWrongArity { row });
            }
            let mut flat = 0usize;
            for (j, &value) in tuple.iter().enumerate() {
                if value >= dims[j] {
                    return Err(TreeError::CptBadValue { row });
                }
                flat = flat * dims[j] as usize + value as usize;
            }
            if position[flat] != u32::MAX {
                return Err(TreeError::CptDuplicate { row });
            }
            position[flat] = row as u32;
        }
        Ok(PreferenceTable { vars, dims, order, position })
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    /// Size of the node's joint domain.
    pub fn domain_size(&self) -> usize {
        self.position.len()
    }

    /// Rows best-first; row `i` holds the tuple at 0-based position `i`.
    pub fn order(&self) -> &[Vec<u32>] {
        &self.order
    }

    /// Canonical flat encoding of a tuple given in `vars` order.
    pub fn flat_of_tuple(&self, tuple: &[u32]) -> usize {
        debug_assert_eq!(tuple.len(), self.vars.len());
        tuple
            .iter()
            .zip(&self.dims)
            .fold(0usize, |acc, (&v, &d)| acc * d as usize + v as usize)
    }

    /// Tuple for a canonical flat encoding.
    pub fn unflatten(&self, mut flat: usize) -> Vec<u32> {
        let mut tuple = vec![0u32; self.dims.len()];
        for j in (0..self.dims.len()).rev() {
            tuple[j] = (flat % self.dims[j] as usize) as u32;
            flat /= self.dims[j] as usize;
        }
        tuple
    }

    pub fn flat_of_alt(&self, alt: &Alternative) -> usize {
        self.vars
            .iter()
            .zip(&self.dims)
            .fold(0usize, |acc, (&v, &d)| acc * d as usize + alt.value(v) as usize)
    }

    /// 0-based position of the alternative's restriction; 0 is most preferred.
    pub fn position_of_alt(&self, alt: &Alternative) -> usize {
        self.position[self.flat_of_alt(alt)] as usize
    }

    pub fn position_of_flat(&self, flat: usize) -> usize {
        self.position[flat] as usize
    }

    fn fits(&self, schema: &Schema) -> bool {
        self.vars.iter().zip(&self.dims).all(|(&v, &d)| {
            v < schema.attr_count() && schema.domain_size(v) == d as usize
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Children {
    Leaf,
    Single(Box<Node>),
    /// One child per instantiation of the node's attributes, indexed by the
    /// canonical flat encoding.
    Split(Vec<Node>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    table: PreferenceTable,
    children: Children,
}

impl Node {
    pub fn new(table: PreferenceTable, children: Children) -> Self {
        Node { table, children }
    }

    pub fn table(&self) -> &PreferenceTable {
        &self.table
    }

    pub fn children(&self) -> &Children {
        &self.children
    }
}

/// Borrowed traversal state handed to [`LPTree::for_each_node`] callbacks.
pub struct TraversalContext<'a> {
    /// Child indices from the root to this node.
    pub path: &'a [usize],
    /// Values fixed by split edges above this node.
    pub inst: &'a PartialInstantiation,
    /// Number of joint instantiations of the attributes strictly below this node.
    pub desc_domain: &'a BigUint,
    pub depth: usize,
}

fn path_string(path: &[usize]) -> String {
    let mut s = String::from("root");
    for p in path {
        s.push('/');
        s.push_str(&p.to_string());
    }
    s
}

/// Checks the branch discipline of a candidate tree: every attribute exactly
/// once per branch, split arity matching the node domain, tables built against
/// this schema. Returns every problem found.
pub fn validate(schema: &Schema, root: &Node) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = vec![false; schema.attr_count()];
    let mut path = Vec::new();
    walk_validate(schema, root, &mut seen, &mut path, &mut out);
    out
}

fn walk_validate(
    schema: &Schema,
    node: &Node,
    seen: &mut Vec<bool>,
    path: &mut Vec<usize>,
    out: &mut Vec<Violation>,
) {
    let table = &node.table;
    if !table.fits(schema) {
        out.push(Violation::ForeignTable { path: path_string(path) });
        return;
    }
    let mut marked = Vec::new();
    for &v in table.vars() {
        if seen[v] {
            out.push(Violation::RepeatedAttribute {
                path: path_string(path),
                attr: schema.name(v).to_owned(),
            });
        } else {
            seen[v] = true;
            marked.push(v);
        }
    }
    match &node.children {
        Children::Leaf => {
            if seen.iter().any(|s| !s) {
                let attrs = seen
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| !s)
                    .map(|(i, _)| schema.name(i).to_owned())
                    .collect();
                out.push(Violation::MissingAttributes { path: path_string(path), attrs });
            }
        }
        Children::Single(child) => {
            path.push(0);
            walk_validate(schema, child, seen, path, out);
            path.pop();
        }
        Children::Split(children) => {
            if children.len() != table.domain_size() {
                out.push(Violation::SplitArityMismatch {
                    path: path_string(path),
                    expected: table.domain_size(),
                    got: children.len(),
                });
            }
            for (j, child) in children.iter().enumerate() {
                path.push(j);
                walk_validate(schema, child, seen, path, out);
                path.pop();
            }
        }
    }
    for v in marked {
        seen[v] = false;
    }
}

/// A validated lexicographic preference tree over a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LPTree {
    schema: Arc<Schema>,
    root: Node,
}

impl LPTree {
    pub fn new(schema: Arc<Schema>, root: Node) -> Result<Self, TreeError> {
        let violations = validate(&schema, &root);
        if !violations.is_empty() {
            return Err(TreeError::Invalid(Violations(violations)));
        }
        Ok(LPTree { schema, root })
    }

    /// Builds a single-branch tree: each table becomes a node passing to the
    /// next through an unlabeled edge.
    pub fn linear(schema: Arc<Schema>, tables: Vec<PreferenceTable>) -> Result<Self, TreeError> {
        let mut node: Option<Node> = None;
        for table in tables.into_iter().rev() {
            let children = match node.take() {
                None => Children::Leaf,
                Some(child) => Children::Single(Box::new(child)),
            };
            node = Some(Node::new(table, children));
        }
        let root = node.ok_or(TreeError::EmptyVars)?;
        LPTree::new(schema, root)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.for_each_node(|_, _| n += 1);
        n
    }

    /// Decides two distinct alternatives at the first node of their common
    /// branch whose attributes tell them apart.
    pub fn compare(&self, a: &Alternative, b: &Alternative) -> Result<Preferred, QueryError> {
        if a == b {
            return Err(QueryError::EqualAlternatives);
        }
        let mut node = &self.root;
        loop {
            let table = &node.table;
            let pa = table.position_of_alt(a);
            let pb = table.position_of_alt(b);
            if pa != pb {
                return Ok(if pa < pb { Preferred::First } else { Preferred::Second });
            }
            node = match &node.children {
                Children::Leaf => unreachable!("distinct alternatives must differ on their branch"),
                Children::Single(child) => child,
                Children::Split(children) => &children[table.flat_of_alt(a)],
            };
        }
    }

    /// 1-based position of `o` in the induced linear order: one plus, for each
    /// node on `o`'s branch, the node's local position times the size of the
    /// domain below it.
    pub fn rank(&self, o: &Alternative) -> BigUint {
        assert_eq!(o.values().len(), self.schema.attr_count(), "alternative arity mismatch");
        let mut rank = BigUint::one();
        let mut remaining = self.schema.domain_count();
        let mut node = &self.root;
        loop {
            let table = &node.table;
            remaining /= BigUint::from(table.domain_size());
            let pos = table.position_of_alt(o);
            if pos > 0 {
                rank += BigUint::from(pos) * &remaining;
            }
            node = match &node.children {
                Children::Leaf => break,
                Children::Single(child) => child,
                Children::Split(children) => &children[table.flat_of_alt(o)],
            };
        }
        rank
    }

    /// The unique rank-1 alternative: follow the top table row at every node.
    pub fn optimal(&self) -> Alternative {
        let mut values = vec![0u32; self.schema.attr_count()];
        let mut node = &self.root;
        loop {
            let table = &node.table;
            let top = &table.order()[0];
            for (j, &v) in table.vars().iter().enumerate() {
                values[v] = top[j];
            }
            node = match &node.children {
                Children::Leaf => break,
                Children::Single(child) => child,
                Children::Split(children) => &children[table.flat_of_tuple(top)],
            };
        }
        Alternative::from_indices(values)
    }

    /// Visits every node with its split-edge instantiation and the size of the
    /// domain below it, in depth-first order.
    pub fn for_each_node<F: FnMut(&Node, &TraversalContext<'_>)>(&self, mut f: F) {
        let mut inst = PartialInstantiation::new();
        let mut path = Vec::new();
        let total = self.schema.domain_count();
        walk_nodes(&self.root, total, &mut inst, &mut path, &mut f);
    }

    pub fn to_json_vec(&self) -> Vec<u8> {
        let doc = TreeDoc { schema: self.schema.to_doc(), root: node_to_doc(&self.root, &self.schema) };
        let mut out = serde_json::to_vec_pretty(&doc).expect("tree serialization cannot fail");
        out.push(b'\n');
        out
    }

    /// Reads a self-contained tree file (embedded schema plus node structure).
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, TreeError> {
        let doc: TreeDoc = serde_json::from_slice(bytes)?;
        let schema = Arc::new(Schema::from_doc(doc.schema)?);
        let root = node_from_doc(doc.root, &schema)?;
        LPTree::new(schema, root)
    }

    /// Reads a tree file and checks that its embedded schema is exactly
    /// `schema`; the returned tree shares the given handle.
    pub fn from_json_slice_with_schema(bytes: &[u8], schema: &Arc<Schema>) -> Result<Self, TreeError> {
        let doc: TreeDoc = serde_json::from_slice(bytes)?;
        let embedded = Schema::from_doc(doc.schema)?;
        if embedded != **schema {
            return Err(TreeError::SchemaMismatch);
        }
        let root = node_from_doc(doc.root, schema)?;
        LPTree::new(Arc::clone(schema), root)
    }

    pub fn from_json_reader(mut reader: impl Read) -> Result<Self, TreeError> {
        let mut buf = Vec::new();
        reader.read_to_end(&mut buf)?;
        Self::from_json_slice(&buf)
    }
}

fn walk_nodes<F: FnMut(&Node, &TraversalContext<'_>)>(
    node: &Node,
    remaining: BigUint,
    inst: &mut PartialInstantiation,
    path: &mut Vec<usize>,
    f: &mut F,
) {
    let table = &node.table;
    let desc = &remaining / BigUint::from(table.domain_size());
    f(node, &TraversalContext { path, inst, desc_domain: &desc, depth: path.len() });
    match &node.children {
        Children::Leaf => {}
        Children::Single(child) => {
            path.push(0);
            walk_nodes(child, desc, inst, path, f);
            path.pop();
        }
        Children::Split(children) => {
            for (j, child) in children.iter().enumerate() {
                let tuple = table.unflatten(j);
                for (slot, &v) in table.vars().iter().enumerate() {
                    inst.bind(v, tuple[slot]);
                }
                path.push(j);
                walk_nodes(child, desc.clone(), inst, path, f);
                path.pop();
                for &v in table.vars() {
                    inst.unbind(v);
                }
            }
        }
    }
}

// ---- file format ----------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    schema: SchemaDoc,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    vars: Vec<String>,
    cpt: Vec<Vec<String>>,
    children: Option<ChildrenDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChildrenDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    single: Option<Box<NodeDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<std::collections::BTreeMap<String, NodeDoc>>,
}

fn split_key(schema: &Schema, table: &PreferenceTable, flat: usize) -> String {
    let tuple = table.unflatten(flat);
    table
        .vars()
        .iter()
        .zip(&tuple)
        .map(|(&v, &val)| schema.values(v)[val as usize].clone())
        .collect::<Vec<_>>()
        .join("|")
}

fn node_to_doc(node: &Node, schema: &Schema) -> NodeDoc {
    let table = &node.table;
    let vars: Vec<String> = table.vars().iter().map(|&v| schema.name(v).to_owned()).collect();
    let cpt = table
        .order()
        .iter()
        .map(|tuple| {
            table
                .vars()
                .iter()
                .zip(tuple)
                .map(|(&v, &val)| schema.values(v)[val as usize].clone())
                .collect()
        })
        .collect();
    let children = match &node.children {
        Children::Leaf => None,
        Children::Single(child) => Some(ChildrenDoc {
            single: Some(Box::new(node_to_doc(child, schema))),
            split: None,
        }),
        Children::Split(children) => {
            let map = children
                .iter()
                .enumerate()
                .map(|(j, child)| (split_key(schema, table, j), node_to_doc(child, schema)))
                .collect();
            Some(ChildrenDoc { single: None, split: Some(map) })
        }
    };
    NodeDoc { vars, cpt, children }
}

fn node_from_doc(doc: NodeDoc, schema: &Schema) -> Result<Node, TreeError> {
    let vars = doc
        .vars
        .iter()
        .map(|name| schema.attr_index(name).ok_or_else(|| TreeError::UnknownAttribute(name.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let tuple_of = |names: &[String]| -> Result<Vec<u32>, TreeError> {
        if names.len() != vars.len() {
            // Arity is re-checked in PreferenceTable::new; translate eagerly so
            // value lookup below has a var to pair with.
            return Ok(names.iter().map(|_| u32::MAX).collect());
        }
        vars.iter()
            .zip(names)
            .map(|(&v, name)| {
                schema.value_index(v, name).ok_or_else(|| TreeError::UnknownValue {
                    attr: schema.name(v).to_owned(),
                    value: name.clone(),
                })
            })
            .collect()
    };
    let mut order = Vec::with_capacity(doc.cpt.len());
    for row in &doc.cpt {
        if row.len() != vars.len() {
            return Err(TreeError::CptWrongArity { row: order.len() });
        }
        order.push(tuple_of(row)?);
    }
    let table = PreferenceTable::new(schema, vars, order)?;
    let children = match doc.children {
        None => Children::Leaf,
        Some(ChildrenDoc { single: Some(child), split: None }) => {
            Children::Single(Box::new(node_from_doc(*child, schema)?))
        }
        Some(ChildrenDoc { single: None, split: Some(map) }) => {
            let dom = table.domain_size();
            let mut slots: Vec<Option<Node>> = (0..dom).map(|_| None).collect();
            for (key, child_doc) in map {
                let names: Vec<&str> = key.split('|').collect();
                if names.len() != table.vars().len() {
                    return Err(TreeError::MalformedSplitKey { key });
                }
                let mut tuple = Vec::with_capacity(names.len());
                for (&v, name) in table.vars().iter().zip(&names) {
                    let val = schema
                        .value_index(v, name)
                        .ok_or_else(|| TreeError::MalformedSplitKey { key: key.clone() })?;
                    tuple.push(val);
                }
                let flat = table.flat_of_tuple(&tuple);
                slots[flat] = Some(node_from_doc(child_doc, schema)?);
            }
            let mut children = Vec::with_capacity(dom);
            for (flat, slot) in slots.into_iter().enumerate() {
                match slot {
                    Some(node) => children.push(node),
                    None => {
                        return Err(TreeError::MissingSplitKey { key: split_key(schema, &table, flat) })
                    }
                }
            }
            Children::Split(children)
        }
        Some(_) => return Err(TreeError::BadChildren),
    };
    Ok(Node::new(table, children))
}
