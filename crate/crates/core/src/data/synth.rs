use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::hetgraph::{GraphBuilder, HetGraph, NodeId};

/// Parameters of the planted-community generator.
///
/// Target nodes (`P`) link to two intermediate types (`A`, `S`) through edge
/// types `PA` and `PS`, giving the meta-paths `P-A-P` and `P-S-P`. Each
/// intermediate carries a class; a target links to it with probability
/// `p_in` when their classes agree and `p_out` otherwise. Target features
/// are the one-hot class indicator (padded with zeros to `feature_dim`)
/// plus Gaussian noise with standard deviation `1 / snr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub targets: usize,
    pub intermediates: [usize; 2],
    pub classes: usize,
    pub feature_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub snr: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            targets: 200,
            intermediates: [20, 20],
            classes: 2,
            feature_dim: 8,
            p_in: 0.3,
            p_out: 0.05,
            snr: 2.0,
            seed: 7,
        }
    }
}

pub const TARGET_TYPE: &str = "P";
pub const INTERMEDIATE_TYPES: [&str; 2] = ["A", "S"];
pub const EDGE_TYPES: [&str; 2] = ["PA", "PS"];

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InfeasibleSpec(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.targets < self.classes {
            return bad(format!(
                "{} targets cannot cover {} classes",
                self.targets, self.classes
            ));
        }
        for (name, &n) in INTERMEDIATE_TYPES.iter().zip(&self.intermediates) {
            if n < self.classes {
                return bad(format!(
                    "{n} intermediates of type {name}; need at least one per class ({})",
                    self.classes
                ));
            }
        }
        if self.feature_dim < self.classes {
            return bad(format!(
                "feature_dim {} is below the class count {}",
                self.feature_dim, self.classes
            ));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return bad(format!(
                "need 0 <= p_out < p_in <= 1, got p_out={} p_in={}",
                self.p_out, self.p_in
            ));
        }
        if self.snr.is_nan() || self.snr <= 0.0 {
            return bad(format!("snr must be positive, got {}", self.snr));
        }
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        1.0 / self.snr
    }
}

/// Draws a reproducible planted-community graph.
///
/// Node ids: targets are `0..targets`, then the `A` nodes, then the `S`
/// nodes. Target classes are a seeded shuffle of a balanced assignment;
/// intermediate `k` of either type has class `k % classes`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<HetGraph, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut classes: Vec<usize> = (0..spec.targets).map(|i| i % spec.classes).collect();
    classes.shuffle(&mut rng);

    let mut b = GraphBuilder::new();
    let p = b.node_type(TARGET_TYPE);
    let inter = INTERMEDIATE_TYPES.map(|n| b.node_type(n));
    let etypes = EDGE_TYPES.map(|n| b.edge_type(n));

    for i in 0..spec.targets {
        b.add_node(NodeId(i as u64), p);
    }
    let mut first_id = [0u64; 2];
    let mut next = spec.targets as u64;
    for (t, &n) in spec.intermediates.iter().enumerate() {
        first_id[t] = next;
        for _ in 0..n {
            b.add_node(NodeId(next), inter[t]);
            next += 1;
        }
    }

    for (i, &c) in classes.iter().enumerate() {
        for t in 0..2 {
            for k in 0..spec.intermediates[t] {
                let prob = if k % spec.classes == c {
                    spec.p_in
                } else {
                    spec.p_out
                };
                if rng.random::<f64>() < prob {
                    b.add_edge(NodeId(i as u64), NodeId(first_id[t] + k as u64), etypes[t]);
                }
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise_std()).expect("std validated");
    for (i, &c) in classes.iter().enumerate() {
        let f = (0..spec.feature_dim)
            .map(|d| {
                let mean = if d == c { 1.0 } else { 0.0 };
                if spec.snr.is_infinite() {
                    mean
                } else {
                    mean + noise.sample(&mut rng)
                }
            })
            .collect();
        b.set_features(NodeId(i as u64), f);
        b.set_label(NodeId(i as u64), c);
    }
    Ok(b.build()?)
}
