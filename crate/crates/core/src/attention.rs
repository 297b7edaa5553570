//! Node-level influence attention within one meta-path.
//!
//! For a target node `i` with meta-path neighbors `N_i`:
//!
//! ```text
//! h'_i  = M h_i                      projection
//! hp_i  = P h_i                      influence component
//! e_ij  = act_s(a · [h'_i ‖ (h'_j + hp_i)])
//! α_ij  = softmax_j(e_ij)            over j ∈ N_i
//! x_i   = act_a(Σ_j α_ij h'_j)
//! ```
//!
//! `K` heads share `M` and `P` and each has its own `a`; head outputs are
//! concatenated in head order. Note the influence term is the source node's
//! `hp_i`, added to every neighbor, and it enters only the scores, not the
//! aggregated vectors.
//!
//! All functions operate on a whole meta-path at once. Per-edge values are
//! laid out in the CSR order of the neighborhood adjacency.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::hetgraph::BoolCsr;
use crate::tensor::{Activation, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionActivations {
    /// Applied to raw attention scores before the softmax.
    pub score: Activation,
    /// Applied to the aggregated neighbor sum.
    pub aggregate: Activation,
}

impl Default for AttentionActivations {
    fn default() -> Self {
        AttentionActivations {
            score: Activation::LeakyRelu,
            aggregate: Activation::Elu,
        }
    }
}

/// Learnable parameters of one meta-path.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathAttentionParams {
    /// `F' x F` feature projection.
    pub transform: Tensor,
    /// `F' x F` influence projection.
    pub influence: Tensor,
    /// One `1 x 2F'` attention vector per head.
    pub heads: Vec<Tensor>,
}

impl MetaPathAttentionParams {
    pub fn zeros(in_dim: usize, hidden: usize, heads: usize) -> Self {
        MetaPathAttentionParams {
            transform: Tensor::zeros(hidden, in_dim),
            influence: Tensor::zeros(hidden, in_dim),
            heads: (0..heads).map(|_| Tensor::zeros(1, 2 * hidden)).collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.transform.rows()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundAttention {
        BoundAttention {
            transform: tape.leaf(self.transform.clone()),
            influence: tape.leaf(self.influence.clone()),
            heads: self.heads.iter().map(|h| tape.leaf(h.clone())).collect(),
        }
    }
}

/// Tape handles for [`MetaPathAttentionParams`].
#[derive(Debug, Clone)]
pub struct BoundAttention {
    pub transform: Var,
    pub influence: Var,
    pub heads: Vec<Var>,
}

/// Per-meta-path embedding rows, one per target node.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathEmbedding {
    pub metapath: String,
    /// `n x K·F'`.
    pub rows: Tensor,
}

/// Seeded dropout on attention coefficients.
#[derive(Debug)]
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    fn mask(&mut self, len: usize) -> Arc<[f64]> {
        let keep = 1.0 - self.rate;
        (0..len)
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// `h' = H Mᵀ`: row `i` is `M h_i`.
pub fn project(tape: &mut Tape, features: Var, transform: Var) -> Result<Var, ModelError> {
    let mt = tape.transpose(transform);
    Ok(tape.matmul(features, mt)?)
}

/// `hp = H Pᵀ`: row `i` is `P h_i`.
pub fn influence_component(
    tape: &mut Tape,
    features: Var,
    influence: Var,
) -> Result<Var, ModelError> {
    let pt = tape.transpose(influence);
    Ok(tape.matmul(features, pt)?)
}

fn check_nonempty(adjacency: &BoolCsr) -> Result<(), ModelError> {
    match adjacency.offsets().windows(2).position(|w| w[0] == w[1]) {
        Some(i) => Err(ModelError::EmptyNeighborhood(i)),
        None => Ok(()),
    }
}

/// Attention coefficients for every (node, neighbor) entry of `adjacency`,
/// as an `nnz x 1` column normalized within each row.
///
/// The score `a · [h'_i ‖ (h'_j + hp_i)]` is evaluated by splitting `a`
/// into halves: `(a_l · h'_i + a_r · h'_j) + a_r · hp_i`. With
/// `influence = None` the last term is dropped.
pub fn attention_coefficients(
    tape: &mut Tape,
    adjacency: &BoolCsr,
    projected: Var,
    influence: Option<Var>,
    head: Var,
    score_activation: Activation,
) -> Result<Var, ModelError> {
    check_nonempty(adjacency)?;
    let hidden = tape.shape(projected).cols;
    let head_shape = tape.shape(head);
    if head_shape.rows != 1 || head_shape.cols != 2 * hidden {
        return Err(ModelError::InputMismatch {
            expected: format!("attention vector 1x{}", 2 * hidden),
            found: head_shape.to_string(),
        });
    }
    let a_self = tape.slice_cols(head, 0, hidden)?;
    let a_neigh = tape.slice_cols(head, hidden, 2 * hidden)?;
    let a_self_t = tape.transpose(a_self);
    let a_neigh_t = tape.transpose(a_neigh);

    let self_score = tape.matmul(projected, a_self_t)?;
    let neigh_score = tape.matmul(projected, a_neigh_t)?;
    let per_src = tape.gather_rows(self_score, Arc::clone(adjacency.entry_rows()))?;
    let per_dst = tape.gather_rows(neigh_score, Arc::clone(adjacency.cols()))?;
    let mut raw = tape.add(per_src, per_dst)?;
    if let Some(hp) = influence {
        let infl_score = tape.matmul(hp, a_neigh_t)?;
        let per_src_infl = tape.gather_rows(infl_score, Arc::clone(adjacency.entry_rows()))?;
        raw = tape.add(raw, per_src_infl)?;
    }
    let scored = tape.activation(raw, score_activation);
    Ok(tape.segment_softmax(scored, Arc::clone(adjacency.offsets()))?)
}

/// `x_i = act(Σ_j α_ij h'_j)` for every row of `adjacency`.
pub fn aggregate(
    tape: &mut Tape,
    adjacency: &BoolCsr,
    coefficients: Var,
    projected: Var,
    activation: Activation,
) -> Result<Var, ModelError> {
    let summed = tape.spmm(
        coefficients,
        Arc::clone(adjacency.offsets()),
        Arc::clone(adjacency.cols()),
        projected,
    )?;
    Ok(tape.activation(summed, activation))
}

/// Tape outputs of [`multihead_embed`].
#[derive(Debug, Clone)]
pub struct HeadOutputs {
    /// `n x K·F'` concatenated embedding.
    pub embedding: Var,
    /// Per-head `nnz x 1` attention coefficients (before dropout).
    pub coefficients: Vec<Var>,
}

/// Runs all heads of one meta-path and concatenates their outputs.
pub fn multihead_embed(
    tape: &mut Tape,
    adjacency: &BoolCsr,
    features: Var,
    params: &BoundAttention,
    activations: AttentionActivations,
    mut dropout: Option<&mut Dropout>,
) -> Result<HeadOutputs, ModelError> {
    if params.heads.is_empty() {
        return Err(ModelError::InvalidConfig(
            "at least one attention head is required".into(),
        ));
    }
    let projected = project(tape, features, params.transform)?;
    let influence = influence_component(tape, features, params.influence)?;
    let mut outputs = Vec::with_capacity(params.heads.len());
    let mut coefficients = Vec::with_capacity(params.heads.len());
    for &head in &params.heads {
        let alpha = attention_coefficients(
            tape,
            adjacency,
            projected,
            Some(influence),
            head,
            activations.score,
        )?;
        coefficients.push(alpha);
        let used = match dropout.as_deref_mut() {
            Some(d) if d.rate > 0.0 => {
                let mask = d.mask(adjacency.nnz());
                tape.mask(alpha, mask)?
            }
            _ => alpha,
        };
        outputs.push(aggregate(
            tape,
            adjacency,
            used,
            projected,
            activations.aggregate,
        )?);
    }
    let embedding = tape.concat_cols(&outputs)?;
    Ok(HeadOutputs {
        embedding,
        coefficients,
    })
}
