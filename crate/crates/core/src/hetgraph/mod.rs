//! Heterogeneous graphs with typed nodes and edges, and meta-path
//! neighborhoods computed by composing typed adjacency relations.
//!
//! A [`HetGraph`] is immutable once built. Meta-path neighborhoods are
//! computed on first request and cached on the graph.

mod sparse;

pub use sparse::BoolCsr;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeType(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeType(pub usize);

/// An edge between two node indices. Traversal ignores direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeType,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({src}, {dst}) references an unknown node")]
    DanglingEdge { src: NodeId, dst: NodeId },
    #[error("node {0} declared twice")]
    DuplicateNode(NodeId),
    #[error("{what} given for unknown node {node}")]
    UnknownNode { node: NodeId, what: &'static str },
    #[error("node {node} of type `{node_type}` has {found} features, expected {expected}")]
    DimensionMismatch {
        node: NodeId,
        node_type: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("invalid meta-path `{schema}`: {reason}")]
    InvalidSchema { schema: String, reason: String },
}

/// Mutable staging area for a [`HetGraph`]. Type names are interned on
/// first use.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    node_type_names: Vec<String>,
    edge_type_names: Vec<String>,
    nodes: Vec<(NodeId, NodeType)>,
    edges: Vec<(NodeId, NodeId, EdgeType)>,
    features: Vec<(NodeId, Vec<f64>)>,
    labels: Vec<(NodeId, usize)>,
}

fn intern(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|n| n == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_type(&mut self, name: &str) -> NodeType {
        NodeType(intern(&mut self.node_type_names, name))
    }

    pub fn edge_type(&mut self, name: &str) -> EdgeType {
        EdgeType(intern(&mut self.edge_type_names, name))
    }

    pub fn add_node(&mut self, id: NodeId, kind: NodeType) -> &mut Self {
        self.nodes.push((id, kind));
        self
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeType) -> &mut Self {
        self.edges.push((src, dst, kind));
        self
    }

    pub fn set_features(&mut self, id: NodeId, features: Vec<f64>) -> &mut Self {
        self.features.push((id, features));
        self
    }

    pub fn set_label(&mut self, id: NodeId, class: usize) -> &mut Self {
        self.labels.push((id, class));
        self
    }

    pub fn build(self) -> Result<HetGraph, GraphError> {
        let mut index = HashMap::with_capacity(self.nodes.len());
        let mut by_type = vec![Vec::new(); self.node_type_names.len()];
        let mut local_index = Vec::with_capacity(self.nodes.len());
        for (i, &(id, kind)) in self.nodes.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(GraphError::DuplicateNode(id));
            }
            local_index.push(by_type[kind.0].len());
            by_type[kind.0].push(i);
        }

        let mut edges = Vec::with_capacity(self.edges.len());
        for &(src, dst, kind) in &self.edges {
            match (index.get(&src), index.get(&dst)) {
                (Some(&s), Some(&d)) => edges.push(Edge {
                    src: s,
                    dst: d,
                    kind,
                }),
                _ => return Err(GraphError::DanglingEdge { src, dst }),
            }
        }

        let mut features = vec![None; self.nodes.len()];
        let mut type_dims: Vec<Option<usize>> = vec![None; self.node_type_names.len()];
        for (id, f) in self.features {
            let &i = index.get(&id).ok_or(GraphError::UnknownNode {
                node: id,
                what: "features",
            })?;
            let kind = self.nodes[i].1;
            match type_dims[kind.0] {
                Some(d) if d != f.len() => {
                    return Err(GraphError::DimensionMismatch {
                        node: id,
                        node_type: self.node_type_names[kind.0].clone(),
                        expected: d,
                        found: f.len(),
                    })
                }
                _ => type_dims[kind.0] = Some(f.len()),
            }
            features[i] = Some(f);
        }

        let mut labels = vec![None; self.nodes.len()];
        for (id, class) in self.labels {
            let &i = index.get(&id).ok_or(GraphError::UnknownNode {
                node: id,
                what: "label",
            })?;
            labels[i] = Some(class);
        }

        Ok(HetGraph {
            node_type_names: self.node_type_names,
            edge_type_names: self.edge_type_names,
            node_ids: self.nodes.iter().map(|n| n.0).collect(),
            node_types: self.nodes.iter().map(|n| n.1).collect(),
            index,
            edges,
            features,
            labels,
            type_dims,
            by_type,
            local_index,
            cache: Mutex::new(HashMap::new()),
        })
    }
}

/// Builds a graph from plain tuples, interning type names in order of
/// first appearance.
pub fn build_graph(
    nodes: &[(u64, &str)],
    edges: &[(u64, u64, &str)],
    features: &[(u64, Vec<f64>)],
    labels: &[(u64, usize)],
) -> Result<HetGraph, GraphError> {
    let mut b = GraphBuilder::new();
    for &(id, ty) in nodes {
        let t = b.node_type(ty);
        b.add_node(NodeId(id), t);
    }
    for &(s, d, ty) in edges {
        let t = b.edge_type(ty);
        b.add_edge(NodeId(s), NodeId(d), t);
    }
    for (id, f) in features {
        b.set_features(NodeId(*id), f.clone());
    }
    for &(id, c) in labels {
        b.set_label(NodeId(id), c);
    }
    b.build()
}

/// A typed path pattern such as Paper-Author-Paper. An edge slot of `None`
/// accepts any edge type between the adjacent node types.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MetaPathSchema {
    name: String,
    node_types: Vec<NodeType>,
    edge_types: Vec<Option<EdgeType>>,
}

impl MetaPathSchema {
    pub fn new(
        name: impl Into<String>,
        node_types: Vec<NodeType>,
        edge_types: Vec<Option<EdgeType>>,
    ) -> Result<Self, GraphError> {
        let name = name.into();
        let invalid = |reason: &str| GraphError::InvalidSchema {
            schema: name.clone(),
            reason: reason.to_string(),
        };
        if node_types.len() < 3 || node_types.len().is_multiple_of(2) {
            return Err(invalid("node-type sequence must have odd length >= 3"));
        }
        if node_types.first() != node_types.last() {
            return Err(invalid("first and last node types differ"));
        }
        if edge_types.len() != node_types.len() - 1 {
            return Err(invalid(
                "edge-type sequence must be one shorter than node types",
            ));
        }
        Ok(MetaPathSchema {
            name,
            node_types,
            edge_types,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[Option<EdgeType>] {
        &self.edge_types
    }

    /// The endpoint type shared by both ends of the path.
    pub fn target_type(&self) -> NodeType {
        self.node_types[0]
    }

    pub fn is_palindrome(&self) -> bool {
        self.node_types.iter().eq(self.node_types.iter().rev())
            && self.edge_types.iter().eq(self.edge_types.iter().rev())
    }
}

/// Meta-path neighbor sets over the target nodes of a schema. Neighbors
/// are indexed by target position (see [`targets`](Self::targets)), and
/// every node is its own neighbor.
#[derive(Debug, Clone)]
pub struct MetaPathNeighborhood {
    schema: MetaPathSchema,
    targets: Vec<usize>,
    adjacency: BoolCsr,
}

impl MetaPathNeighborhood {
    pub fn schema(&self) -> &MetaPathSchema {
        &self.schema
    }

    /// Graph node indices of the target nodes, in graph order.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Sorted target positions reachable from target position `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.adjacency.contains(i, j)
    }

    pub fn adjacency(&self) -> &BoolCsr {
        &self.adjacency
    }
}

#[derive(Debug)]
pub struct HetGraph {
    node_type_names: Vec<String>,
    edge_type_names: Vec<String>,
    node_ids: Vec<NodeId>,
    node_types: Vec<NodeType>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    features: Vec<Option<Vec<f64>>>,
    labels: Vec<Option<usize>>,
    type_dims: Vec<Option<usize>>,
    by_type: Vec<Vec<usize>>,
    local_index: Vec<usize>,
    cache: Mutex<HashMap<MetaPathSchema, Arc<MetaPathNeighborhood>>>,
}

impl HetGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_id(&self, idx: usize) -> NodeId {
        self.node_ids[idx]
    }

    pub fn node_type(&self, idx: usize) -> NodeType {
        self.node_types[idx]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self, idx: usize) -> Option<&[f64]> {
        self.features[idx].as_deref()
    }

    pub fn label(&self, idx: usize) -> Option<usize> {
        self.labels[idx]
    }

    /// Feature dimension shared by nodes of `kind`, if any carry features.
    pub fn feature_dim(&self, kind: NodeType) -> Option<usize> {
        self.type_dims.get(kind.0).copied().flatten()
    }

    pub fn node_type_names(&self) -> &[String] {
        &self.node_type_names
    }

    pub fn edge_type_names(&self) -> &[String] {
        &self.edge_type_names
    }

    pub fn node_type_name(&self, kind: NodeType) -> &str {
        &self.node_type_names[kind.0]
    }

    pub fn edge_type_name(&self, kind: EdgeType) -> &str {
        &self.edge_type_names[kind.0]
    }

    pub fn node_type_by_name(&self, name: &str) -> Option<NodeType> {
        self.node_type_names
            .iter()
            .position(|n| n == name)
            .map(NodeType)
    }

    pub fn edge_type_by_name(&self, name: &str) -> Option<EdgeType> {
        self.edge_type_names
            .iter()
            .position(|n| n == name)
            .map(EdgeType)
    }

    /// Node indices of `kind`, in graph order.
    pub fn nodes_of_type(&self, kind: NodeType) -> &[usize] {
        self.by_type.get(kind.0).map_or(&[], |v| v.as_slice())
    }

    /// Parses a dash-separated type string such as `P-A-P`. Edge slots are
    /// left as wildcards.
    pub fn schema(&self, spec: &str) -> Result<MetaPathSchema, GraphError> {
        let names: Vec<&str> = spec.split('-').map(str::trim).collect();
        let node_types = names
            .iter()
            .map(|n| {
                self.node_type_by_name(n)
                    .ok_or_else(|| GraphError::UnknownType(n.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let edge_types = vec![None; node_types.len().saturating_sub(1)];
        MetaPathSchema::new(names.concat(), node_types, edge_types)
    }

    /// Typed adjacency between consecutive schema types, as an
    /// `|from| x |to|` relation over type-local indices.
    fn relation(&self, from: NodeType, to: NodeType, via: Option<EdgeType>) -> BoolCsr {
        let mut pairs = Vec::new();
        for e in &self.edges {
            if via.is_some_and(|v| v != e.kind) {
                continue;
            }
            let (ts, td) = (self.node_types[e.src], self.node_types[e.dst]);
            if ts == from && td == to {
                pairs.push((self.local_index[e.src], self.local_index[e.dst]));
            }
            if td == from && ts == to {
                pairs.push((self.local_index[e.dst], self.local_index[e.src]));
            }
        }
        BoolCsr::from_pairs(
            self.nodes_of_type(from).len(),
            self.nodes_of_type(to).len(),
            pairs,
        )
    }

    fn check_schema_types(&self, schema: &MetaPathSchema) -> Result<(), GraphError> {
        for t in schema.node_types() {
            if t.0 >= self.node_type_names.len() {
                return Err(GraphError::UnknownType(format!("node type #{}", t.0)));
            }
        }
        for t in schema.edge_types().iter().flatten() {
            if t.0 >= self.edge_type_names.len() {
                return Err(GraphError::UnknownType(format!("edge type #{}", t.0)));
            }
        }
        Ok(())
    }

    /// `N_i = { j : a path i -> ... -> j matches the schema } ∪ {i}` for every
    /// target node, as a product of typed boolean adjacency matrices.
    pub fn metapath_neighbors(
        &self,
        schema: &MetaPathSchema,
    ) -> Result<Arc<MetaPathNeighborhood>, GraphError> {
        self.check_schema_types(schema)?;
        if let Some(hit) = self.cache.lock().expect("neighborhood cache").get(schema) {
            return Ok(Arc::clone(hit));
        }
        let types = schema.node_types();
        let mut reach = BoolCsr::identity(self.nodes_of_type(types[0]).len());
        for (step, via) in schema.edge_types().iter().enumerate() {
            let rel = self.relation(types[step], types[step + 1], *via);
            reach = reach.compose(&rel);
        }
        let hood = Arc::new(MetaPathNeighborhood {
            schema: schema.clone(),
            targets: self.nodes_of_type(schema.target_type()).to_vec(),
            adjacency: reach.with_diagonal(),
        });
        self.cache
            .lock()
            .expect("neighborhood cache")
            .insert(schema.clone(), Arc::clone(&hood));
        Ok(hood)
    }
}
