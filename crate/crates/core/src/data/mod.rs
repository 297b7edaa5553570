//! Text formats for graphs, node-id lists and embedding exports, plus the
//! synthetic generator and split sampling.
//!
//! A graph file has up to four sections, each opened by a header line
//! (fields are shown here separated by spaces):
//!
//! ```text
//! #nodes
//! 1  P
//! 10  A
//! #edges
//! 1  10  PA
//! #features
//! 1  0.5,-1,0.25
//! #labels
//! 1  0
//! ```
//!
//! Blank lines are ignored. Fields are tab-separated; feature values are
//! comma-separated decimals.

mod split;
mod synth;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::hetgraph::{GraphBuilder, GraphError, HetGraph, NodeId};
use crate::tensor::Tensor;

pub use split::{make_split, read_ids, write_ids};
pub use synth::{generate_synthetic, SynthSpec, EDGE_TYPES, INTERMEDIATE_TYPES, TARGET_TYPE};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
    #[error("split of {requested} nodes exceeds the {available} labeled target nodes")]
    SplitTooLarge { requested: usize, available: usize },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        message: message.into(),
    }
}

pub(crate) fn parse_id(field: &str, line: usize) -> Result<NodeId, DataError> {
    field
        .trim()
        .parse()
        .map(NodeId)
        .map_err(|_| parse_err(line, format!("invalid node id `{field}`")))
}

fn parse_values(field: &str, line: usize) -> Result<Vec<f64>, DataError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|v| {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("invalid number `{v}`")))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(parse_err(line, format!("non-finite value `{v}`")))
            }
        })
        .collect()
}

fn fields<'a>(text: &'a str, n: usize, line: usize, what: &str) -> Result<Vec<&'a str>, DataError> {
    let parts: Vec<&str> = text.split('\t').collect();
    if parts.len() != n {
        return Err(parse_err(
            line,
            format!(
                "{what} line needs {n} tab-separated fields, found {}",
                parts.len()
            ),
        ));
    }
    Ok(parts)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Nodes,
    Edges,
    Features,
    Labels,
}

/// Parses a graph from the text format.
pub fn parse_graph(text: &str) -> Result<HetGraph, DataError> {
    let mut b = GraphBuilder::new();
    let mut section = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() {
            continue;
        }
        if let Some(name) = l.strip_prefix('#') {
            section = Some(match name.trim() {
                "nodes" => Section::Nodes,
                "edges" => Section::Edges,
                "features" => Section::Features,
                "labels" => Section::Labels,
                other => return Err(parse_err(line, format!("unknown section `#{other}`"))),
            });
            continue;
        }
        match section {
            None => return Err(parse_err(line, "data before the first section header")),
            Some(Section::Nodes) => {
                let f = fields(l, 2, line, "node")?;
                let ty = f[1].trim();
                if ty.is_empty() {
                    return Err(parse_err(line, "empty node type"));
                }
                let t = b.node_type(ty);
                b.add_node(parse_id(f[0], line)?, t);
            }
            Some(Section::Edges) => {
                let f = fields(l, 3, line, "edge")?;
                let ty = f[2].trim();
                if ty.is_empty() {
                    return Err(parse_err(line, "empty edge type"));
                }
                let t = b.edge_type(ty);
                b.add_edge(parse_id(f[0], line)?, parse_id(f[1], line)?, t);
            }
            Some(Section::Features) => {
                let f = fields(l, 2, line, "feature")?;
                b.set_features(parse_id(f[0], line)?, parse_values(f[1], line)?);
            }
            Some(Section::Labels) => {
                let f = fields(l, 2, line, "label")?;
                let class = f[1]
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line, format!("invalid class id `{}`", f[1])))?;
                b.set_label(parse_id(f[0], line)?, class);
            }
        }
    }
    Ok(b.build()?)
}

pub fn load_graph(path: &Path) -> Result<HetGraph, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_graph(&text)
}

pub(crate) fn join_values(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").expect("write to string");
    }
    s
}

/// Canonical text form: nodes, edges, features and labels in graph order.
/// Values are printed in shortest round-trip form, so parsing the output
/// gives back the same graph.
pub fn format_graph(g: &HetGraph) -> String {
    let mut s = String::from("#nodes\n");
    for i in 0..g.num_nodes() {
        writeln!(s, "{}\t{}", g.node_id(i), g.node_type_name(g.node_type(i))).unwrap();
    }
    s.push_str("#edges\n");
    for e in g.edges() {
        writeln!(
            s,
            "{}\t{}\t{}",
            g.node_id(e.src),
            g.node_id(e.dst),
            g.edge_type_name(e.kind)
        )
        .unwrap();
    }
    s.push_str("#features\n");
    for i in 0..g.num_nodes() {
        if let Some(f) = g.features(i) {
            writeln!(s, "{}\t{}", g.node_id(i), join_values(f)).unwrap();
        }
    }
    s.push_str("#labels\n");
    for i in 0..g.num_nodes() {
        if let Some(c) = g.label(i) {
            writeln!(s, "{}\t{}", g.node_id(i), c).unwrap();
        }
    }
    s
}

pub fn write_graph(g: &HetGraph, path: &Path) -> Result<(), DataError> {
    fs::write(path, format_graph(g)).map_err(|e| DataError::io(path, e))
}

/// Fused embeddings keyed by node id, with the meta-path weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExport {
    pub beta: Vec<(String, f64)>,
    pub node_ids: Vec<NodeId>,
    pub vectors: Tensor,
}

/// `#beta<TAB>PAP:0.6<TAB>PSP:0.4` followed by `node_id<TAB>v0,v1,...`
/// lines.
pub fn format_embeddings(e: &EmbeddingExport) -> String {
    let mut s = String::from("#beta");
    for (name, b) in &e.beta {
        write!(s, "\t{name}:{b}").unwrap();
    }
    s.push('\n');
    for (i, id) in e.node_ids.iter().enumerate() {
        writeln!(s, "{id}\t{}", join_values(e.vectors.row(i))).unwrap();
    }
    s
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingExport, DataError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing #beta line"))?;
    let mut parts = head.split('\t');
    if parts.next() != Some("#beta") {
        return Err(parse_err(1, "first line must start with #beta"));
    }
    let beta = parts
        .map(|p| {
            let (name, v) = p
                .rsplit_once(':')
                .ok_or_else(|| parse_err(1, format!("bad beta entry `{p}`")))?;
            let v = v
                .parse()
                .map_err(|_| parse_err(1, format!("bad beta value `{v}`")))?;
            Ok((name.to_string(), v))
        })
        .collect::<Result<Vec<_>, DataError>>()?;

    let mut node_ids = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (k, l) in lines {
        let f = fields(l, 2, k + 1, "embedding")?;
        node_ids.push(parse_id(f[0], k + 1)?);
        let v = parse_values(f[1], k + 1)?;
        match dim {
            Some(d) if d != v.len() => {
                return Err(parse_err(
                    k + 1,
                    format!("expected {d} values, found {}", v.len()),
                ))
            }
            _ => dim = Some(v.len()),
        }
        data.extend(v);
    }
    let vectors =
        Tensor::from_vec(node_ids.len(), dim.unwrap_or(0), data).expect("row lengths checked");
    Ok(EmbeddingExport {
        beta,
        node_ids,
        vectors,
    })
}
