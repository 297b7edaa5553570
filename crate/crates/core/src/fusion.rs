//! Semantic fusion of per-meta-path embeddings.
//!
//! Each node's `P` meta-path embeddings are projected to queries, keys and
//! values and attend to one another:
//!
//! ```text
//! A_i     = softmax_rows(Q_i K_iᵀ / √d)          P x P, per node
//! score_i = (A_i V_i) qᵀ                          one score per meta-path
//! w       = mean_i score_i
//! β       = softmax(w)
//! X       = Σ_φ β_φ X_φ
//! ```
//!
//! The average runs over every target node, labeled or not.

use crate::error::ModelError;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// `d x K·F'` each.
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    /// `1 x d` semantic attention vector.
    pub score: Tensor,
}

impl FusionParams {
    pub fn zeros(embed_dim: usize, fusion_dim: usize) -> Self {
        FusionParams {
            query: Tensor::zeros(fusion_dim, embed_dim),
            key: Tensor::zeros(fusion_dim, embed_dim),
            value: Tensor::zeros(fusion_dim, embed_dim),
            score: Tensor::zeros(1, fusion_dim),
        }
    }

    pub fn fusion_dim(&self) -> usize {
        self.query.rows()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundFusion {
        BoundFusion {
            query: tape.leaf(self.query.clone()),
            key: tape.leaf(self.key.clone()),
            value: tape.leaf(self.value.clone()),
            score: tape.leaf(self.score.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundFusion {
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub score: Var,
}

/// Final embedding and the meta-path weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedEmbedding {
    /// `n x K·F'`.
    pub x: Tensor,
    pub beta: Vec<f64>,
}

/// Row-wise `Q = X W_Qᵀ`, `K = X W_Kᵀ`, `V = X W_Vᵀ`.
pub fn qkv(
    tape: &mut Tape,
    embedding: Var,
    params: &BoundFusion,
) -> Result<(Var, Var, Var), ModelError> {
    let mut project = |w: Var| -> Result<Var, ModelError> {
        let wt = tape.transpose(w);
        Ok(tape.matmul(embedding, wt)?)
    };
    Ok((
        project(params.query)?,
        project(params.key)?,
        project(params.value)?,
    ))
}

/// One importance score per meta-path, as a `1 x P` row.
pub fn metapath_importance(
    tape: &mut Tape,
    embeddings: &[Var],
    params: &BoundFusion,
) -> Result<Var, ModelError> {
    if embeddings.is_empty() {
        return Err(ModelError::FewerThanOneMetaPath);
    }
    let first = tape.shape(embeddings[0]);
    for &e in embeddings {
        let s = tape.shape(e);
        if s != first {
            return Err(ModelError::InputMismatch {
                expected: first.to_string(),
                found: s.to_string(),
            });
        }
    }
    let d = tape.shape(params.query).rows;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();

    let mut queries = Vec::with_capacity(embeddings.len());
    let mut keys = Vec::with_capacity(embeddings.len());
    let mut values = Vec::with_capacity(embeddings.len());
    for &e in embeddings {
        let (q, k, v) = qkv(tape, e, params)?;
        queries.push(q);
        keys.push(k);
        values.push(v);
    }
    let score_t = tape.transpose(params.score);

    let mut importance = Vec::with_capacity(embeddings.len());
    for &q in &queries {
        // Row φ of each node's P x P attention matrix, as n x P.
        let logits = keys
            .iter()
            .map(|&k| {
                let dot = tape.row_dot(q, k)?;
                Ok(tape.scale(dot, inv_sqrt_d))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let logits = tape.concat_cols(&logits)?;
        let attn = tape.softmax_rows(logits)?;

        let mut mixed = None;
        for (psi, &v) in values.iter().enumerate() {
            let weight = tape.slice_cols(attn, psi, psi + 1)?;
            let term = tape.row_scale(weight, v)?;
            mixed = Some(match mixed {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        let mixed = mixed.expect("at least one meta-path");
        let per_node = tape.matmul(mixed, score_t)?;
        importance.push(tape.mean(per_node)?);
    }
    Ok(tape.concat_cols(&importance)?)
}

/// `β = softmax(w)` over a `1 x P` row.
pub fn metapath_weights(tape: &mut Tape, importance: Var) -> Result<Var, ModelError> {
    Ok(tape.softmax_rows(importance)?)
}

/// `X = Σ_φ β_φ X_φ`.
pub fn fuse(tape: &mut Tape, embeddings: &[Var], beta: Var) -> Result<Var, ModelError> {
    let weights = tape.shape(beta);
    if weights.rows != 1 || weights.cols != embeddings.len() {
        return Err(ModelError::InputMismatch {
            expected: format!("1x{} weights", embeddings.len()),
            found: weights.to_string(),
        });
    }
    let mut acc: Option<Var> = None;
    for (phi, &e) in embeddings.iter().enumerate() {
        let b = tape.slice_cols(beta, phi, phi + 1)?;
        let term = tape.scale_by(b, e)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    acc.ok_or(ModelError::FewerThanOneMetaPath)
}
