//! The full embedding model: per-meta-path influence attention, semantic
//! fusion, and a linear classifier on the fused embedding.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    multihead_embed, AttentionActivations, BoundAttention, Dropout, MetaPathAttentionParams,
    MetaPathEmbedding,
};
use crate::error::ModelError;
use crate::fusion::{self, BoundFusion, FusedEmbedding, FusionParams};
use crate::hetgraph::{HetGraph, MetaPathNeighborhood, MetaPathSchema, NodeId};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input feature dimension `F`.
    pub in_dim: usize,
    /// Per-head hidden dimension `F'`.
    pub hidden: usize,
    /// Attention heads `K`.
    pub heads: usize,
    /// Query/key/value dimension `d` of the fusion step.
    pub fusion_dim: usize,
    pub classes: usize,
    pub activations: AttentionActivations,
}

impl ModelConfig {
    pub fn embed_dim(&self) -> usize {
        self.hidden * self.heads
    }

    fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("in_dim", self.in_dim),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("fusion_dim", self.fusion_dim),
            ("classes", self.classes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Everything the model reads from a graph: target features and one
/// neighborhood per meta-path, all indexed by target position.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub features: Tensor,
    pub neighborhoods: Vec<Arc<MetaPathNeighborhood>>,
    pub node_ids: Vec<NodeId>,
    pub labels: Vec<Option<usize>>,
}

impl ModelInput {
    pub fn from_graph(graph: &HetGraph, schemas: &[MetaPathSchema]) -> Result<Self, ModelError> {
        let first = schemas.first().ok_or(ModelError::FewerThanOneMetaPath)?;
        let target = first.target_type();
        for s in schemas {
            if s.target_type() != target {
                return Err(ModelError::MixedTargetTypes(
                    graph.node_type_name(target).to_string(),
                    graph.node_type_name(s.target_type()).to_string(),
                ));
            }
            if schemas.iter().filter(|o| o.name() == s.name()).count() > 1 {
                return Err(ModelError::DuplicateMetaPath(s.name().to_string()));
            }
        }
        let neighborhoods = schemas
            .iter()
            .map(|s| graph.metapath_neighbors(s))
            .collect::<Result<Vec<_>, _>>()?;

        let targets = graph.nodes_of_type(target);
        let dim = graph.feature_dim(target).unwrap_or(0);
        let mut data = Vec::with_capacity(targets.len() * dim);
        for &idx in targets {
            let row = graph
                .features(idx)
                .ok_or(ModelError::MissingFeatures(graph.node_id(idx).0))?;
            data.extend_from_slice(row);
        }
        Ok(ModelInput {
            features: Tensor::from_vec(targets.len(), dim, data)?,
            neighborhoods,
            node_ids: targets.iter().map(|&i| graph.node_id(i)).collect(),
            labels: targets.iter().map(|&i| graph.label(i)).collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn metapath_names(&self) -> Vec<String> {
        self.neighborhoods
            .iter()
            .map(|h| h.schema().name().to_string())
            .collect()
    }

    /// `1 + max label`, or 0 when nothing is labeled.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Target positions of the given node ids, in the given order.
    pub fn positions(&self, ids: &[NodeId]) -> Result<Vec<usize>, ModelError> {
        let lookup: std::collections::HashMap<NodeId, usize> = self
            .node_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        ids.iter()
            .map(|id| {
                lookup
                    .get(id)
                    .copied()
                    .ok_or_else(|| ModelError::InputMismatch {
                        expected: "a target node".into(),
                        found: format!("node {id}"),
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IshneModel {
    pub config: ModelConfig,
    pub metapaths: Vec<String>,
    pub attention: Vec<MetaPathAttentionParams>,
    pub fusion: FusionParams,
    /// `classes x K·F'`.
    pub classifier: Tensor,
}

/// Uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`, taking
/// `fan_in = cols` and `fan_out = rows`.
fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-s..=s)).collect();
    Tensor::from_vec(rows, cols, data).expect("glorot shape")
}

impl IshneModel {
    /// All-zero parameters.
    pub fn zeros(config: ModelConfig, metapaths: Vec<String>) -> Result<Self, ModelError> {
        config.validate()?;
        if metapaths.is_empty() {
            return Err(ModelError::FewerThanOneMetaPath);
        }
        Ok(IshneModel {
            attention: metapaths
                .iter()
                .map(|_| MetaPathAttentionParams::zeros(config.in_dim, config.hidden, config.heads))
                .collect(),
            fusion: FusionParams::zeros(config.embed_dim(), config.fusion_dim),
            classifier: Tensor::zeros(config.classes, config.embed_dim()),
            metapaths,
            config,
        })
    }

    /// Seeded Glorot-uniform initialization.
    pub fn new(config: ModelConfig, metapaths: Vec<String>, seed: u64) -> Result<Self, ModelError> {
        let mut model = Self::zeros(config, metapaths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params_mut() {
            *p = glorot(&mut rng, p.rows(), p.cols());
        }
        Ok(model)
    }

    /// Parameters with their checkpoint names, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, a) in self.metapaths.iter().zip(&self.attention) {
            out.push((format!("M.{name}"), &a.transform));
            out.push((format!("P.{name}"), &a.influence));
            for (k, h) in a.heads.iter().enumerate() {
                out.push((format!("a.{name}.head{k}"), h));
            }
        }
        out.push(("W_Q".into(), &self.fusion.query));
        out.push(("W_K".into(), &self.fusion.key));
        out.push(("W_V".into(), &self.fusion.value));
        out.push(("q".into(), &self.fusion.score));
        out.push(("C".into(), &self.classifier));
        out
    }

    /// Mutable parameters in [`named_params`](Self::named_params) order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for a in &mut self.attention {
            out.push(&mut a.transform);
            out.push(&mut a.influence);
            out.extend(a.heads.iter_mut());
        }
        out.push(&mut self.fusion.query);
        out.push(&mut self.fusion.key);
        out.push(&mut self.fusion.value);
        out.push(&mut self.fusion.score);
        out.push(&mut self.classifier);
        out
    }

    /// Expected shape of every parameter, in [`named_params`](Self::named_params) order.
    pub fn expected_shapes(&self) -> Vec<(usize, usize)> {
        let c = &self.config;
        let mut out = Vec::new();
        for a in &self.attention {
            out.push((c.hidden, c.in_dim));
            out.push((c.hidden, c.in_dim));
            out.extend(std::iter::repeat_n((1, 2 * c.hidden), a.heads.len()));
        }
        out.extend(std::iter::repeat_n((c.fusion_dim, c.embed_dim()), 3));
        out.push((1, c.fusion_dim));
        out.push((c.classes, c.embed_dim()));
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        if self.metapaths.is_empty() {
            return Err(ModelError::FewerThanOneMetaPath);
        }
        if self.attention.len() != self.metapaths.len() {
            return Err(ModelError::InvalidConfig(format!(
                "{} meta-path names but {} parameter sets",
                self.metapaths.len(),
                self.attention.len()
            )));
        }
        for (i, name) in self.metapaths.iter().enumerate() {
            if self.metapaths[..i].contains(name) {
                return Err(ModelError::DuplicateMetaPath(name.clone()));
            }
        }
        for a in &self.attention {
            if a.heads.len() != self.config.heads {
                return Err(ModelError::InvalidConfig(format!(
                    "expected {} heads, found {}",
                    self.config.heads,
                    a.heads.len()
                )));
            }
        }
        for ((name, t), (r, c)) in self.named_params().into_iter().zip(self.expected_shapes()) {
            if t.rows() != r || t.cols() != c {
                return Err(ModelError::ParamShape {
                    name,
                    expected: format!("{r}x{c}"),
                    found: t.shape().to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.named_params()
            .iter()
            .map(|(_, t)| t.shape().len())
            .sum()
    }

    /// Checks that `input` fits this model.
    pub fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        let names = input.metapath_names();
        if names != self.metapaths {
            return Err(ModelError::InputMismatch {
                expected: format!("meta-paths {}", self.metapaths.join(",")),
                found: names.join(","),
            });
        }
        if input.features.cols() != self.config.in_dim {
            return Err(ModelError::InputMismatch {
                expected: format!("{} input features", self.config.in_dim),
                found: input.features.cols().to_string(),
            });
        }
        if let Some(bad) = input
            .labels
            .iter()
            .flatten()
            .find(|&&l| l >= self.config.classes)
        {
            return Err(ModelError::InputMismatch {
                expected: format!("labels below {}", self.config.classes),
                found: format!("label {bad}"),
            });
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            attention: self.attention.iter().map(|a| a.bind(tape)).collect(),
            fusion: self.fusion.bind(tape),
            classifier: tape.leaf(self.classifier.clone()),
        }
    }

    /// Records the forward pass on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        input: &ModelInput,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<ForwardVars, ModelError> {
        self.check_input(input)?;
        let features = tape.leaf(input.features.clone());
        let mut embeddings = Vec::with_capacity(self.metapaths.len());
        let mut coefficients = Vec::with_capacity(self.metapaths.len());
        for (hood, params) in input.neighborhoods.iter().zip(&bound.attention) {
            let out = multihead_embed(
                tape,
                hood.adjacency(),
                features,
                params,
                self.config.activations,
                dropout.as_deref_mut(),
            )?;
            embeddings.push(out.embedding);
            coefficients.push(out.coefficients);
        }
        let importance = fusion::metapath_importance(tape, &embeddings, &bound.fusion)?;
        let beta = fusion::metapath_weights(tape, importance)?;
        let fused = fusion::fuse(tape, &embeddings, beta)?;
        let ct = tape.transpose(bound.classifier);
        let logits = tape.matmul(fused, ct)?;
        Ok(ForwardVars {
            embeddings,
            coefficients,
            importance,
            beta,
            fused,
            logits,
        })
    }

    /// Forward pass without gradients, returning plain values.
    pub fn evaluate(&self, input: &ModelInput) -> Result<Evaluation, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let vars = self.forward(&mut tape, &bound, input, None)?;
        Ok(Evaluation {
            embeddings: self
                .metapaths
                .iter()
                .zip(&vars.embeddings)
                .map(|(name, &v)| MetaPathEmbedding {
                    metapath: name.clone(),
                    rows: tape.value(v).clone(),
                })
                .collect(),
            coefficients: vars
                .coefficients
                .iter()
                .map(|heads| {
                    heads
                        .iter()
                        .map(|&v| tape.value(v).data().to_vec())
                        .collect()
                })
                .collect(),
            importance: tape.value(vars.importance).data().to_vec(),
            fused: FusedEmbedding {
                x: tape.value(vars.fused).clone(),
                beta: tape.value(vars.beta).data().to_vec(),
            },
            logits: tape.value(vars.logits).clone(),
        })
    }
}

/// Tape handles for every parameter of an [`IshneModel`].
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub attention: Vec<BoundAttention>,
    pub fusion: BoundFusion,
    pub classifier: Var,
}

impl BoundModel {
    /// Handles in [`IshneModel::named_params`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for a in &self.attention {
            out.push(a.transform);
            out.push(a.influence);
            out.extend(&a.heads);
        }
        out.extend([
            self.fusion.query,
            self.fusion.key,
            self.fusion.value,
            self.fusion.score,
            self.classifier,
        ]);
        out
    }
}

#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub embeddings: Vec<Var>,
    pub coefficients: Vec<Vec<Var>>,
    pub importance: Var,
    pub beta: Var,
    pub fused: Var,
    pub logits: Var,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub embeddings: Vec<MetaPathEmbedding>,
    /// `[metapath][head]` coefficients in neighborhood CSR order.
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub importance: Vec<f64>,
    pub fused: FusedEmbedding,
    pub logits: Tensor,
}
