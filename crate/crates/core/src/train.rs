//! Semi-supervised training: softmax cross-entropy on labeled train nodes,
//! Adam with coupled weight decay, early stopping on validation loss.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{AttentionActivations, Dropout};
use crate::error::ModelError;
use crate::hetgraph::NodeId;
use crate::metrics;
use crate::model::{IshneModel, ModelConfig, ModelInput};
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("non-finite {what} loss ({value}) at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        what: &'static str,
        value: f64,
    },
    #[error("node {0} is in a split but has no label")]
    Unlabeled(NodeId),
    #[error("node {0} appears in more than one split")]
    OverlappingSplit(NodeId),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    pub heads: usize,
    pub fusion_dim: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub activations: AttentionActivations,
    /// Dropout on attention coefficients during training.
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 8,
            heads: 8,
            fusion_dim: 128,
            lr: 5e-3,
            weight_decay: 5e-4,
            epochs: 1000,
            patience: 100,
            seed: 0,
            activations: AttentionActivations::default(),
            dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        for (name, v) in [
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("fusion_dim", self.fusion_dim),
            ("epochs", self.epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.patience > self.epochs {
            return bad(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.epochs
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!(
                "learning rate {} must be finite and nonnegative",
                self.lr
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight decay {} must be finite and nonnegative",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn model_config(&self, in_dim: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            in_dim,
            hidden: self.hidden,
            heads: self.heads,
            fusion_dim: self.fusion_dim,
            classes,
            activations: self.activations,
        }
    }
}

/// Disjoint train/validation/test node ids over labeled target nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl Split {
    pub fn validate(&self, input: &ModelInput) -> Result<(), TrainError> {
        let mut seen = HashSet::new();
        for &id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id) {
                return Err(TrainError::OverlappingSplit(id));
            }
        }
        labeled_rows(input, &self.train)?;
        labeled_rows(input, &self.val)?;
        labeled_rows(input, &self.test)?;
        Ok(())
    }
}

/// Target positions and labels for `ids`.
pub fn labeled_rows(
    input: &ModelInput,
    ids: &[NodeId],
) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    let rows = input.positions(ids)?;
    let labels = rows
        .iter()
        .zip(ids)
        .map(|(&r, &id)| input.labels[r].ok_or(TrainError::Unlabeled(id)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((rows, labels))
}

/// Mean of `-ln softmax(logits[r])[y]` over `(r, y)` in `rows`, `labels`.
pub fn loss(logits: &Tensor, rows: &[usize], labels: &[usize]) -> Result<f64, TrainError> {
    if rows.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone());
    let l = tape
        .cross_entropy(z, rows.into(), labels.into())
        .map_err(ModelError::from)?;
    Ok(tape.value(l).data()[0])
}

/// Argmax class per listed target row; ties go to the lowest class.
pub fn predict(
    model: &IshneModel,
    input: &ModelInput,
    rows: &[usize],
) -> Result<Vec<usize>, TrainError> {
    let logits = model.evaluate(input)?.logits;
    let all = logits.argmax_rows();
    rows.iter()
        .map(|&r| {
            all.get(r).copied().ok_or_else(|| {
                TrainError::Model(ModelError::InputMismatch {
                    expected: format!("row below {}", all.len()),
                    found: r.to_string(),
                })
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_micro_f1: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.6}\t{:.6}\t{:.4}",
            self.epoch, self.train_loss, self.val_loss, self.val_micro_f1
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: IshneModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// One `epoch\ttrain_loss\tval_loss\tval_microF1` line per epoch.
    pub fn log(&self) -> String {
        self.history.iter().map(|r| format!("{r}\n")).collect()
    }
}

struct Adam {
    lr: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &IshneModel, lr: f64, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = model
            .named_params()
            .iter()
            .map(|(_, t)| t.data().len())
            .collect();
        Adam {
            lr,
            weight_decay,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &dg)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let g = dg + self.weight_decay * *w;
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g;
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains `model` in place of a fresh copy and returns the best-validation
/// parameters.
///
/// Each epoch records the losses of the parameters it starts from, then
/// takes one optimizer step. With an empty validation set the train loss
/// drives selection instead.
pub fn train(
    model: IshneModel,
    input: &ModelInput,
    split: &Split,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    model.validate()?;
    model.check_input(input)?;
    if split.train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    split.validate(input)?;
    let (train_rows, train_labels) = labeled_rows(input, &split.train)?;
    let (val_rows, val_labels) = labeled_rows(input, &split.val)?;
    if val_rows.is_empty() {
        log::warn!("validation set is empty; selecting on train loss");
    }
    let train_rows: Arc<[usize]> = train_rows.into();
    let train_labels: Arc<[usize]> = train_labels.into();

    let mut model = model;
    let mut adam = Adam::new(&model, config.lr, config.weight_decay);
    let mut dropout = (config.dropout > 0.0).then(|| Dropout {
        rate: config.dropout,
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d209),
    });
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        // Clean pass for monitoring; it doubles as the gradient pass when
        // dropout is off.
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let vars = model.forward(&mut tape, &bound, input, None)?;
        let train_var = tape
            .cross_entropy(vars.logits, train_rows.clone(), train_labels.clone())
            .map_err(ModelError::from)?;
        let logits = tape.value(vars.logits);
        let train_loss = tape.value(train_var).data()[0];
        let (val_loss, val_micro_f1) = if val_rows.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let pred: Vec<usize> = {
                let all = logits.argmax_rows();
                val_rows.iter().map(|&r| all[r]).collect()
            };
            (
                loss(logits, &val_rows, &val_labels)?,
                metrics::micro_f1(&pred, &val_labels).unwrap_or(0.0),
            )
        };
        if !train_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                what: "train",
                value: train_loss,
            });
        }
        if !val_rows.is_empty() && !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                what: "validation",
                value: val_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_micro_f1,
        };
        log::debug!("{record}");
        history.push(record);

        let monitored = if val_rows.is_empty() {
            train_loss
        } else {
            val_loss
        };
        if monitored < best_loss {
            best_loss = monitored;
            best = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                log::info!("early stop at epoch {epoch}; best epoch {best_epoch}");
                break;
            }
        }

        let grads = match dropout.as_mut() {
            None => {
                let g = tape.backward(train_var).map_err(ModelError::from)?;
                bound
                    .vars()
                    .iter()
                    .map(|&v| g.wrt(&tape, v))
                    .collect::<Vec<_>>()
            }
            Some(d) => {
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape);
                let vars = model.forward(&mut tape, &bound, input, Some(d))?;
                let l = tape
                    .cross_entropy(vars.logits, train_rows.clone(), train_labels.clone())
                    .map_err(ModelError::from)?;
                let g = tape.backward(l).map_err(ModelError::from)?;
                bound.vars().iter().map(|&v| g.wrt(&tape, v)).collect()
            }
        };
        adam.update(model.params_mut(), &grads);
    }

    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::build_graph;

    fn toy() -> ModelInput {
        let g = build_graph(
            &[
                (1, "P"),
                (2, "P"),
                (3, "P"),
                (4, "P"),
                (5, "P"),
                (6, "P"),
                (10, "A"),
                (11, "A"),
            ],
            &[
                (1, 10, "pa"),
                (2, 10, "pa"),
                (3, 10, "pa"),
                (4, 11, "pa"),
                (5, 11, "pa"),
                (6, 11, "pa"),
            ],
            &[
                (1, vec![1.0, 0.1]),
                (2, vec![0.9, -0.1]),
                (3, vec![0.7, 0.2]),
                (4, vec![0.0, 1.0]),
                (5, vec![0.2, 0.8]),
                (6, vec![-0.1, 1.1]),
            ],
            &[(1, 0), (2, 0), (3, 0), (4, 1), (5, 1), (6, 1)],
        )
        .unwrap();
        ModelInput::from_graph(&g, &[g.schema("P-A-P").unwrap()]).unwrap()
    }

    fn split() -> Split {
        Split {
            train: vec![NodeId(1), NodeId(4)],
            val: vec![NodeId(2), NodeId(5)],
            test: vec![NodeId(3), NodeId(6)],
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden: 2,
            heads: 2,
            fusion_dim: 4,
            epochs: 40,
            patience: 40,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn fresh(input: &ModelInput, cfg: &TrainConfig) -> IshneModel {
        IshneModel::new(cfg.model_config(2, 2), input.metapath_names(), cfg.seed).unwrap()
    }

    #[test]
    fn uniform_logits_loss() {
        let z = Tensor::zeros(4, 3);
        let l = loss(&z, &[0, 1, 3], &[0, 2, 1]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        assert_eq!(loss(&z, &[], &[]), Err(TrainError::EmptyTrainSet));
    }

    #[test]
    fn confident_logits_loss_vanishes() {
        let mut prev = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 700.0] {
            let z = Tensor::from_rows(&[[scale, 0.0], [0.0, scale]]).unwrap();
            let l = loss(&z, &[0, 1], &[0, 1]).unwrap();
            assert!(l <= prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-40);
    }

    /// Random logits against a closed-form reference evaluated with 50-digit
    /// arithmetic.
    #[test]
    fn loss_matches_reference() {
        let z = Tensor::from_rows(&[[0.5, -1.25, 2.0], [3.0, 0.0, -0.75]]).unwrap();
        let l = loss(&z, &[0, 1], &[1, 2]).unwrap();
        assert!((l - 3.6516822415191794).abs() < 1e-14, "{l}");
    }

    #[test]
    fn zero_model_loss_is_ln_classes() {
        let input = toy();
        let cfg = small_config();
        let m = IshneModel::zeros(cfg.model_config(2, 2), input.metapath_names()).unwrap();
        let z = m.evaluate(&input).unwrap().logits;
        let (rows, labels) = labeled_rows(&input, &split().train).unwrap();
        let l = loss(&z, &rows, &labels).unwrap();
        // Mean over train rows, so the sum is |train| ln 2.
        assert!((l * rows.len() as f64 - rows.len() as f64 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_predict_class_zero() {
        let input = toy();
        let cfg = small_config();
        let m = IshneModel::zeros(cfg.model_config(2, 2), input.metapath_names()).unwrap();
        assert_eq!(
            predict(&m, &input, &[0, 1, 2, 3, 4, 5]).unwrap(),
            vec![0; 6]
        );
    }

    #[test]
    fn zero_lr_freezes_params() {
        let input = toy();
        let cfg = TrainConfig {
            lr: 0.0,
            ..small_config()
        };
        let m = fresh(&input, &cfg);
        let out = train(m.clone(), &input, &split(), &cfg).unwrap();
        assert_eq!(out.model, m);
        let l0 = out.history[0];
        assert!(out
            .history
            .iter()
            .all(|r| r.train_loss.to_bits() == l0.train_loss.to_bits()));
    }

    #[test]
    fn training_fits_toy_and_is_deterministic() {
        let input = toy();
        let cfg = small_config();
        let a = train(fresh(&input, &cfg), &input, &split(), &cfg).unwrap();
        let b = train(fresh(&input, &cfg), &input, &split(), &cfg).unwrap();
        assert_eq!(a.log(), b.log());
        assert_eq!(a.model, b.model);
        assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
        let best = a
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.history[a.best_epoch - 1].val_loss, best);
        // Returned params reproduce the best recorded validation loss.
        let z = a.model.evaluate(&input).unwrap().logits;
        let (rows, labels) = labeled_rows(&input, &split().val).unwrap();
        assert_eq!(loss(&z, &rows, &labels).unwrap(), best);
    }

    #[test]
    fn early_stopping_halts() {
        let input = toy();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 50,
            patience: 5,
            ..small_config()
        };
        let out = train(fresh(&input, &cfg), &input, &split(), &cfg).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.history.len(), 6);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn dropout_training_runs() {
        let input = toy();
        let cfg = TrainConfig {
            dropout: 0.3,
            ..small_config()
        };
        let a = train(fresh(&input, &cfg), &input, &split(), &cfg).unwrap();
        let b = train(fresh(&input, &cfg), &input, &split(), &cfg).unwrap();
        assert_eq!(a.log(), b.log());
    }

    #[test]
    fn nan_param_aborts() {
        let input = toy();
        let cfg = small_config();
        let mut m = fresh(&input, &cfg);
        m.classifier.set(0, 0, f64::NAN);
        assert!(matches!(
            train(m, &input, &split(), &cfg),
            Err(TrainError::NonFiniteLoss { epoch: 1, .. })
        ));
    }

    #[test]
    fn split_and_config_errors() {
        let input = toy();
        let cfg = small_config();
        let m = fresh(&input, &cfg);
        let empty = Split {
            train: vec![],
            ..split()
        };
        assert_eq!(
            train(m.clone(), &input, &empty, &cfg).unwrap_err(),
            TrainError::EmptyTrainSet
        );
        let overlap = Split {
            val: vec![NodeId(1)],
            ..split()
        };
        assert_eq!(
            train(m.clone(), &input, &overlap, &cfg).unwrap_err(),
            TrainError::OverlappingSplit(NodeId(1))
        );
        let unknown = Split {
            test: vec![NodeId(10)],
            ..split()
        };
        assert!(train(m.clone(), &input, &unknown, &cfg).is_err());
        let bad = TrainConfig {
            patience: 41,
            ..cfg
        };
        assert!(matches!(
            train(m, &input, &split(), &bad),
            Err(TrainError::InvalidConfig(_))
        ));
        assert!(TrainConfig {
            dropout: 1.0,
            ..cfg
        }
        .validate()
        .is_err());
        assert!(TrainConfig { lr: -1.0, ..cfg }.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }
}
