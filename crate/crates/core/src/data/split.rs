use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{parse_id, DataError};
use crate::hetgraph::{HetGraph, NodeId, NodeType};
use crate::train::Split;

/// Seeded uniform sample without replacement over the labeled nodes of
/// `target`. The first `train_n` sampled ids train, the next `val_n`
/// validate, and the rest are test.
pub fn make_split(
    graph: &HetGraph,
    target: NodeType,
    train_n: usize,
    val_n: usize,
    seed: u64,
) -> Result<Split, DataError> {
    let mut labeled: Vec<NodeId> = graph
        .nodes_of_type(target)
        .iter()
        .filter(|&&i| graph.label(i).is_some())
        .map(|&i| graph.node_id(i))
        .collect();
    let requested = train_n + val_n;
    if requested > labeled.len() {
        return Err(DataError::SplitTooLarge {
            requested,
            available: labeled.len(),
        });
    }
    if requested == labeled.len() {
        log::warn!("split uses every labeled node; the test set is empty");
    }
    labeled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = labeled.split_off(requested);
    let val = labeled.split_off(train_n);
    Ok(Split {
        train: labeled,
        val,
        test,
    })
}

/// One node id per line.
pub fn write_ids(path: &Path, ids: &[NodeId]) -> Result<(), DataError> {
    let mut s = String::new();
    for id in ids {
        writeln!(s, "{id}").unwrap();
    }
    fs::write(path, s).map_err(|e| DataError::io(path, e))
}

pub fn read_ids(path: &Path) -> Result<Vec<NodeId>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| parse_id(l, k + 1))
        .collect()
}
