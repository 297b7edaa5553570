mod common;

use ishne::attention::AttentionActivations;
use ishne::data::{self, make_split, SynthSpec};
use ishne::metrics;
use ishne::model::{IshneModel, ModelInput};
use ishne::tensor::{Activation, Tensor};
use ishne::train::{self, labeled_rows, Split, TrainConfig};
use proptest::prelude::*;

fn planted() -> (ModelInput, Split) {
    let g = data::generate_synthetic(&SynthSpec::default()).unwrap();
    let schemas = [g.schema("P-A-P").unwrap(), g.schema("P-S-P").unwrap()];
    let input = ModelInput::from_graph(&g, &schemas).unwrap();
    let p = g.node_type_by_name("P").unwrap();
    let split = make_split(&g, p, 60, 40, 7).unwrap();
    (input, split)
}

fn fit(input: &ModelInput, split: &Split, cfg: &TrainConfig) -> train::TrainOutcome {
    let model = IshneModel::new(
        cfg.model_config(input.features.cols(), input.num_classes()),
        input.metapath_names(),
        cfg.seed,
    )
    .unwrap();
    train::train(model, input, split, cfg).unwrap()
}

#[test]
fn planted_graph_is_learned_in_200_epochs() {
    let (input, split) = planted();
    let cfg = TrainConfig {
        epochs: 200,
        patience: 200,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = fit(&input, &split, &cfg);
    assert_eq!(out.history.len(), 200);
    let (rows, gold) = labeled_rows(&input, &split.train).unwrap();
    let pred = train::predict(&out.model, &input, &rows).unwrap();
    assert!(metrics::accuracy(&pred, &gold).unwrap() >= 0.95);

    let (rows, gold) = labeled_rows(&input, &split.test).unwrap();
    let pred = train::predict(&out.model, &input, &rows).unwrap();
    let acc = metrics::accuracy(&pred, &gold).unwrap();
    assert!(acc > metrics::majority_baseline(&gold).unwrap());
}

#[test]
fn loss_trends_down_over_early_windows() {
    let (input, split) = planted();
    let cfg = TrainConfig {
        epochs: 50,
        patience: 50,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = fit(&input, &split, &cfg);
    let window_means: Vec<f64> = out
        .history
        .chunks(10)
        .map(|w| w.iter().map(|r| r.train_loss).sum::<f64>() / w.len() as f64)
        .collect();
    assert!(
        window_means.windows(2).all(|w| w[1] <= w[0]),
        "{window_means:?}"
    );
    assert!(out
        .history
        .iter()
        .all(|r| r.train_loss.is_finite() && r.train_loss > 0.0));
}

#[test]
fn early_stopping_returns_best_validation_params() {
    let (input, split) = planted();
    let cfg = TrainConfig {
        epochs: 400,
        patience: 30,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = fit(&input, &split, &cfg);
    assert!(out.stopped_early);
    assert_eq!(out.history.len(), out.best_epoch + 30);
    let min = out
        .history
        .iter()
        .map(|r| r.val_loss)
        .fold(f64::INFINITY, f64::min);
    let (rows, labels) = labeled_rows(&input, &split.val).unwrap();
    let logits = out.model.evaluate(&input).unwrap().logits;
    assert_eq!(train::loss(&logits, &rows, &labels).unwrap(), min);
}

#[test]
fn log_lines_have_four_fields() {
    let (input, split) = planted();
    let cfg = TrainConfig {
        epochs: 3,
        patience: 3,
        ..TrainConfig::default()
    };
    let log = fit(&input, &split, &cfg).log();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3);
    for (k, l) in lines.iter().enumerate() {
        let f: Vec<&str> = l.split('\t').collect();
        assert_eq!(f.len(), 4);
        assert_eq!(f[0], (k + 1).to_string());
        assert!(f[1..].iter().all(|v| v.parse::<f64>().is_ok()));
    }
}

#[test]
fn full_model_gradients_with_tanh_scores() {
    let mut rng = common::rng(17);
    let g = common::random_graph(&mut rng, 14, 3, 3);
    let schemas = [g.schema("P-A-P").unwrap(), g.schema("P-S-P").unwrap()];
    let input = ModelInput::from_graph(&g, &schemas).unwrap();
    assert!(input.num_nodes() <= 8);
    let mut cfg = common::model_config(3, 2, 2, 3, 3);
    cfg.activations = AttentionActivations {
        score: Activation::Tanh,
        aggregate: Activation::Tanh,
    };
    let model = IshneModel::new(cfg, input.metapath_names(), 3).unwrap();
    for (name, err) in common::gradient_check(&model, &input, 1e-5) {
        assert!(err < 1e-4, "{name}: {err}");
    }
}

proptest! {
    /// Quarter-integer logits and integer shifts keep every sum exact.
    #[test]
    fn argmax_ignores_row_shift(
        rows in proptest::collection::vec(proptest::collection::vec(-20i32..20, 3), 1..10),
        shifts in proptest::collection::vec(-100i32..100, 10),
    ) {
        let z = Tensor::from_rows(
            &rows.iter().map(|r| r.iter().map(|&v| v as f64 / 4.0).collect::<Vec<_>>()).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut shifted = z.clone();
        for (r, &d) in shifts.iter().enumerate().take(shifted.rows()) {
            for v in shifted.row_mut(r) {
                *v += d as f64;
            }
        }
        prop_assert_eq!(z.argmax_rows(), shifted.argmax_rows());
    }
}
