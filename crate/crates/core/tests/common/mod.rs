#![allow(dead_code)]

use std::collections::BTreeSet;

use ishne::attention::AttentionActivations;
use ishne::hetgraph::{GraphBuilder, HetGraph, MetaPathSchema, NodeId};
use ishne::model::{IshneModel, ModelConfig, ModelInput};
use ishne::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Meta-path neighbors by walking typed paths node by node, ignoring edge
/// direction. Returns target positions per target position, self included.
pub fn bfs_neighbors(g: &HetGraph, schema: &MetaPathSchema) -> Vec<BTreeSet<usize>> {
    let types = schema.node_types();
    let vias = schema.edge_types();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.num_nodes()];
    for e in g.edges() {
        adj[e.src].push((e.dst, e.kind.0));
        adj[e.dst].push((e.src, e.kind.0));
    }
    let targets = g.nodes_of_type(types[0]);
    let pos = |idx: usize| targets.iter().position(|&t| t == idx).unwrap();
    targets
        .iter()
        .map(|&start| {
            let mut frontier = BTreeSet::from([start]);
            for step in 0..vias.len() {
                let mut next = BTreeSet::new();
                for &u in &frontier {
                    for &(v, kind) in &adj[u] {
                        let kind_ok = vias[step].is_none_or(|t| t.0 == kind);
                        if kind_ok && g.node_type(v) == types[step + 1] {
                            next.insert(v);
                        }
                    }
                }
                frontier = next;
            }
            let mut out: BTreeSet<usize> = frontier.into_iter().map(pos).collect();
            out.insert(pos(start));
            out
        })
        .collect()
}

/// Random graph over node types P, A, S with edge types PA, PS, AS, PP.
/// Edge direction is random. Every P node gets `feature_dim` features and a
/// label below `classes`.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    feature_dim: usize,
    classes: usize,
) -> HetGraph {
    let mut b = GraphBuilder::new();
    let types = [b.node_type("P"), b.node_type("A"), b.node_type("S")];
    let pa = b.edge_type("PA");
    let ps = b.edge_type("PS");
    let as_ = b.edge_type("AS");
    let pp = b.edge_type("PP");
    let n = rng.random_range(3..=max_nodes.max(3));
    let mut by_type: [Vec<u64>; 3] = Default::default();
    for i in 0..n {
        // Guarantee at least one P node.
        let t = if i == 0 { 0 } else { rng.random_range(0..3) };
        let id = 1000 + i as u64 * 7;
        b.add_node(NodeId(id), types[t]);
        by_type[t].push(id);
    }
    let density = rng.random_range(0.02..0.3);
    let pairs = [(0, 1, pa), (0, 2, ps), (1, 2, as_), (0, 0, pp)];
    for &(s, d, kind) in &pairs {
        for &u in &by_type[s] {
            for &v in &by_type[d] {
                if (s != d || u < v) && rng.random::<f64>() < density {
                    if rng.random::<bool>() {
                        b.add_edge(NodeId(u), NodeId(v), kind);
                    } else {
                        b.add_edge(NodeId(v), NodeId(u), kind);
                    }
                }
            }
        }
    }
    for &id in &by_type[0] {
        let f = (0..feature_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        b.set_features(NodeId(id), f);
        b.set_label(NodeId(id), rng.random_range(0..classes));
    }
    b.build().unwrap()
}

pub fn model_config(
    in_dim: usize,
    hidden: usize,
    heads: usize,
    fusion_dim: usize,
    classes: usize,
) -> ModelConfig {
    ModelConfig {
        in_dim,
        hidden,
        heads,
        fusion_dim,
        classes,
        activations: AttentionActivations::default(),
    }
}

/// Two meta-paths over a random graph.
pub fn random_input(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    feature_dim: usize,
    classes: usize,
) -> (HetGraph, ModelInput) {
    let g = random_graph(rng, max_nodes, feature_dim, classes);
    let schemas = [g.schema("P-A-P").unwrap(), g.schema("P-S-P").unwrap()];
    let input = ModelInput::from_graph(&g, &schemas).unwrap();
    (g, input)
}

/// Overwrites every parameter with uniform values in `[-scale, scale]`.
pub fn randomize(model: &mut IshneModel, rng: &mut ChaCha8Rng, scale: f64) {
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

/// Mean cross-entropy over all labeled targets.
pub fn full_loss(model: &IshneModel, input: &ModelInput) -> f64 {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let vars = model.forward(&mut tape, &bound, input, None).unwrap();
    let (rows, labels) = labeled(input);
    let l = tape
        .cross_entropy(vars.logits, rows.into(), labels.into())
        .unwrap();
    tape.value(l).data()[0]
}

pub fn labeled(input: &ModelInput) -> (Vec<usize>, Vec<usize>) {
    input
        .labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .unzip()
}

/// Analytic gradients of [`full_loss`], in `named_params` order.
pub fn analytic_grads(model: &IshneModel, input: &ModelInput) -> Vec<Tensor> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let vars = model.forward(&mut tape, &bound, input, None).unwrap();
    let (rows, labels) = labeled(input);
    let l = tape
        .cross_entropy(vars.logits, rows.into(), labels.into())
        .unwrap();
    let g = tape.backward(l).unwrap();
    bound.vars().iter().map(|&v| g.wrt(&tape, v)).collect()
}

/// Worst relative error of central differences against the analytic
/// gradient, per parameter: `|a - n| / (max(|a|, |n|) + 1e-8)`.
pub fn gradient_check(model: &IshneModel, input: &ModelInput, step: f64) -> Vec<(String, f64)> {
    let analytic = analytic_grads(model, input);
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let mut worst = Vec::new();
    for (k, name) in names.into_iter().enumerate() {
        let mut m = model.clone();
        let len = analytic[k].data().len();
        let mut max_err: f64 = 0.0;
        for i in 0..len {
            let orig = m.params_mut()[k].data()[i];
            m.params_mut()[k].data_mut()[i] = orig + step;
            let up = full_loss(&m, input);
            m.params_mut()[k].data_mut()[i] = orig - step;
            let down = full_loss(&m, input);
            m.params_mut()[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[k].data()[i];
            let err = (a - numeric).abs() / (a.abs().max(numeric.abs()) + 1e-8);
            max_err = max_err.max(err);
        }
        worst.push((name, max_err));
    }
    worst
}

/// The graph with every `A` node and `PA` edge duplicated as a `B` node and
/// `PB` edge, so `P-B-P` matches `P-A-P` exactly.
pub fn duplicate_a_as_b(g: &HetGraph) -> HetGraph {
    let mut b = GraphBuilder::new();
    for name in g.node_type_names() {
        b.node_type(name);
    }
    for name in g.edge_type_names() {
        b.edge_type(name);
    }
    let bt = b.node_type("B");
    let pb = b.edge_type("PB");
    let a = g.node_type_by_name("A").unwrap();
    let offset = 1 + (0..g.num_nodes()).map(|i| g.node_id(i).0).max().unwrap();
    for i in 0..g.num_nodes() {
        let t = b.node_type(g.node_type_name(g.node_type(i)));
        b.add_node(g.node_id(i), t);
    }
    for &i in g.nodes_of_type(a) {
        b.add_node(NodeId(g.node_id(i).0 + offset), bt);
    }
    for e in g.edges() {
        let kind = b.edge_type(g.edge_type_name(e.kind));
        let (s, d) = (g.node_id(e.src), g.node_id(e.dst));
        b.add_edge(s, d, kind);
        let (ts, td) = (g.node_type(e.src), g.node_type(e.dst));
        if td == a && ts != a {
            b.add_edge(s, NodeId(d.0 + offset), pb);
        } else if ts == a && td != a {
            b.add_edge(NodeId(s.0 + offset), d, pb);
        }
    }
    for i in 0..g.num_nodes() {
        if let Some(f) = g.features(i) {
            b.set_features(g.node_id(i), f.to_vec());
        }
        if let Some(l) = g.label(i) {
            b.set_label(g.node_id(i), l);
        }
    }
    b.build().unwrap()
}
