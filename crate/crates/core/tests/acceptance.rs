//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line
//! each, and exits nonzero if any criterion fails.
//!
//! `cargo test -p ishne --test acceptance` runs all of them; extra
//! arguments select criteria by substring.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ishne::attention::{self, AttentionActivations};
use ishne::checkpoint::format_checkpoint;
use ishne::data::{self, make_split, SynthSpec};
use ishne::metrics;
use ishne::model::{IshneModel, ModelInput};
use ishne::tensor::{Tape, Tensor};
use ishne::train::{self, labeled_rows, TrainConfig};
use rand::Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn gradient_oracle() -> Outcome {
    let spec = SynthSpec {
        targets: 7,
        intermediates: [3, 2],
        classes: 2,
        feature_dim: 4,
        p_in: 0.8,
        p_out: 0.3,
        snr: 2.0,
        seed: 21,
    };
    let g = data::generate_synthetic(&spec).unwrap();
    let schemas = [g.schema("P-A-P").unwrap(), g.schema("P-S-P").unwrap()];
    let input = ModelInput::from_graph(&g, &schemas).unwrap();
    let cfg = common::model_config(4, 3, 2, 4, 2);
    let model = IshneModel::new(cfg, input.metapath_names(), 5).unwrap();
    let worst = common::gradient_check(&model, &input, 1e-5);
    let (name, err) =
        worst.iter().cloned().fold(
            (String::new(), 0.0),
            |acc, (n, e)| if e > acc.1 { (n, e) } else { acc },
        );
    check(
        worst.len() == model.named_params().len() && err < 1e-4,
        format!(
            "{} parameters over {} targets; worst rel err {err:.2e} ({name})",
            worst.len(),
            input.num_nodes()
        ),
    )
}

fn attention_normalization() -> Outcome {
    let mut rng = common::rng(100);
    let mut worst_alpha: f64 = 0.0;
    let mut worst_beta: f64 = 0.0;
    for _ in 0..100 {
        let (_, input) = common::random_input(&mut rng, 40, 5, 3);
        let heads = rng.random_range(1..=3);
        let cfg = common::model_config(5, 4, heads, 6, 3);
        let mut model = IshneModel::zeros(cfg, input.metapath_names()).unwrap();
        common::randomize(&mut model, &mut rng, 1.5);
        let ev = model.evaluate(&input).unwrap();
        for (hood, per_head) in input.neighborhoods.iter().zip(&ev.coefficients) {
            let offsets = hood.adjacency().offsets();
            for alpha in per_head {
                for i in 0..hood.len() {
                    let s: f64 = alpha[offsets[i]..offsets[i + 1]].iter().sum();
                    worst_alpha = worst_alpha.max((s - 1.0).abs());
                }
            }
        }
        worst_beta = worst_beta.max((ev.fused.beta.iter().sum::<f64>() - 1.0).abs());
    }
    check(
        worst_alpha <= 1e-12 && worst_beta <= 1e-12,
        format!("max |sum a - 1| = {worst_alpha:.1e}, max |sum beta - 1| = {worst_beta:.1e}"),
    )
}

fn influence_off_equivalence() -> Outcome {
    let mut rng = common::rng(200);
    let mut compared = 0usize;
    for _ in 0..20 {
        let (_, input) = common::random_input(&mut rng, 60, 4, 2);
        let cfg = common::model_config(4, 3, 2, 4, 2);
        let mut model = IshneModel::zeros(cfg, input.metapath_names()).unwrap();
        common::randomize(&mut model, &mut rng, 1.0);
        for a in &mut model.attention {
            a.influence = Tensor::zeros(3, 4);
        }
        let ev = model.evaluate(&input).unwrap();
        for (p, hood) in input.neighborhoods.iter().enumerate() {
            let mut tape = Tape::new();
            let h = tape.leaf(input.features.clone());
            let bound = model.attention[p].bind(&mut tape);
            let projected = attention::project(&mut tape, h, bound.transform).unwrap();
            for (k, &head) in bound.heads.iter().enumerate() {
                let reference = attention::attention_coefficients(
                    &mut tape,
                    hood.adjacency(),
                    projected,
                    None,
                    head,
                    AttentionActivations::default().score,
                )
                .unwrap();
                let want = tape.value(reference).data();
                let got = &ev.coefficients[p][k];
                if want.len() != got.len()
                    || want
                        .iter()
                        .zip(got)
                        .any(|(a, b)| a.to_bits() != b.to_bits())
                {
                    return Fail(format!("meta-path {p} head {k} differs"));
                }
                compared += want.len();
            }
        }
    }
    Pass(format!(
        "{compared} coefficients bit-identical over 20 instances"
    ))
}

fn asymmetry_witness() -> Outcome {
    let mut rng = common::rng(300);
    for attempt in 0..20 {
        let (_, input) = common::random_input(&mut rng, 40, 4, 2);
        let cfg = common::model_config(4, 3, 1, 4, 2);
        let mut model = IshneModel::zeros(cfg, input.metapath_names()).unwrap();
        common::randomize(&mut model, &mut rng, 1.0);
        let ev = model.evaluate(&input).unwrap();
        for (p, hood) in input.neighborhoods.iter().enumerate() {
            let adj = hood.adjacency();
            let alpha = &ev.coefficients[p][0];
            let at = |i: usize, j: usize| {
                let row = adj.row(i);
                row.binary_search(&j)
                    .ok()
                    .map(|k| alpha[adj.offsets()[i] + k])
            };
            for i in 0..hood.len() {
                for &j in adj.row(i) {
                    if let (Some(a), Some(b)) = (at(i, j), at(j, i)) {
                        if (a - b).abs() > 1e-3 {
                            return Pass(format!(
                                "instance {attempt}, meta-path {p}: a_ij={a:.4}, a_ji={b:.4}"
                            ));
                        }
                    }
                }
            }
        }
    }
    Fail("no pair with |a_ij - a_ji| > 1e-3 in 20 instances".into())
}

fn metapath_oracle() -> Outcome {
    let mut rng = common::rng(400);
    let specs = ["P-A-P", "P-S-P", "P-P-P", "A-P-A", "P-A-S-A-P", "S-A-P-A-S"];
    let mut checked = 0;
    for _ in 0..50 {
        let g = common::random_graph(&mut rng, 200, 2, 2);
        for spec in specs {
            let schema = g.schema(spec).unwrap();
            let hood = g.metapath_neighbors(&schema).unwrap();
            let oracle = common::bfs_neighbors(&g, &schema);
            for (i, want) in oracle.iter().enumerate() {
                let got: Vec<usize> = hood.neighbors(i).to_vec();
                if got != want.iter().copied().collect::<Vec<_>>() {
                    return Fail(format!("{spec}: target {i} differs"));
                }
            }
            checked += 1;
        }
    }
    Pass(format!(
        "{checked} neighborhoods on 50 graphs match typed enumeration"
    ))
}

struct LearnRun {
    model: IshneModel,
    input: ModelInput,
    split: train::Split,
    outcome: train::TrainOutcome,
}

fn learnability_setup(schemas: &[&str], config: TrainConfig) -> LearnRun {
    let spec = SynthSpec {
        targets: 200,
        classes: 2,
        p_in: 0.3,
        p_out: 0.05,
        snr: 2.0,
        seed: 7,
        ..SynthSpec::default()
    };
    let g = data::generate_synthetic(&spec).unwrap();
    let schemas: Vec<_> = schemas.iter().map(|s| g.schema(s).unwrap()).collect();
    let input = ModelInput::from_graph(&g, &schemas).unwrap();
    let p = g.node_type_by_name(data::TARGET_TYPE).unwrap();
    let split = make_split(&g, p, 60, 40, config.seed).unwrap();
    let model = IshneModel::new(
        config.model_config(input.features.cols(), input.num_classes()),
        input.metapath_names(),
        config.seed,
    )
    .unwrap();
    let outcome = train::train(model.clone(), &input, &split, &config).unwrap();
    LearnRun {
        model,
        input,
        split,
        outcome,
    }
}

fn learnability() -> Outcome {
    let run = learnability_setup(
        &["P-A-P", "P-S-P"],
        TrainConfig {
            seed: 7,
            ..TrainConfig::default()
        },
    );
    let (rows, gold) = labeled_rows(&run.input, &run.split.test).unwrap();
    let pred = train::predict(&run.outcome.model, &run.input, &rows).unwrap();
    let f1 = metrics::micro_f1(&pred, &gold).unwrap();
    let (_, train_gold) = labeled_rows(&run.input, &run.split.train).unwrap();
    let majority = most_frequent(&train_gold);
    let baseline_pred = vec![majority; gold.len()];
    let baseline = metrics::micro_f1(&baseline_pred, &gold).unwrap();
    check(
        run.split.test.len() == 100 && f1 >= 0.90 && f1 - baseline >= 0.30,
        format!(
            "test Micro-F1 {}% vs majority {}% after {} epochs (best {})",
            metrics::percent(f1),
            metrics::percent(baseline),
            run.outcome.history.len(),
            run.outcome.best_epoch
        ),
    )
}

fn most_frequent(labels: &[usize]) -> usize {
    let mut counts = vec![0usize; labels.iter().max().map_or(1, |m| m + 1)];
    for &l in labels {
        counts[l] += 1;
    }
    // Lowest class wins ties.
    (0..counts.len())
        .rev()
        .max_by_key(|&c| counts[c])
        .unwrap_or(0)
}

fn exchangeability() -> Outcome {
    let cfg = TrainConfig {
        seed: 7,
        epochs: 200,
        patience: 100,
        ..TrainConfig::default()
    };
    let single = learnability_setup(&["P-A-P"], cfg);
    let trained = &single.outcome.model;

    let spec = SynthSpec {
        seed: 7,
        ..SynthSpec::default()
    };
    let g = common::duplicate_a_as_b(&data::generate_synthetic(&spec).unwrap());
    let dual_input = ModelInput::from_graph(
        &g,
        &[g.schema("P-A-P").unwrap(), g.schema("P-B-P").unwrap()],
    )
    .unwrap();
    let mut dual = trained.clone();
    dual.metapaths.push("PBP".into());
    dual.attention.push(trained.attention[0].clone());

    let ev = dual.evaluate(&dual_input).unwrap();
    let beta_err = ev
        .fused
        .beta
        .iter()
        .map(|b| (b - 0.5).abs())
        .fold(0.0, f64::max);
    let (rows, _) = labeled_rows(&single.input, &single.split.test).unwrap();
    let p_single = train::predict(trained, &single.input, &rows).unwrap();
    let p_dual = train::predict(&dual, &dual_input, &rows).unwrap();
    check(
        ev.fused.beta.len() == 2 && beta_err <= 1e-6 && p_single == p_dual,
        format!(
            "beta = [{:.9}, {:.9}], {} of {} test predictions agree",
            ev.fused.beta[0],
            ev.fused.beta[1],
            p_single.iter().zip(&p_dual).filter(|(a, b)| a == b).count(),
            rows.len()
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = TrainConfig {
        seed: 13,
        epochs: 150,
        patience: 50,
        dropout: 0.2,
        ..TrainConfig::default()
    };
    let a = learnability_setup(&["P-A-P", "P-S-P"], cfg);
    let b = learnability_setup(&["P-A-P", "P-S-P"], cfg);
    let same_log = a.outcome.log() == b.outcome.log();
    let same_bits = a
        .outcome
        .history
        .iter()
        .zip(&b.outcome.history)
        .all(|(x, y)| {
            x.train_loss.to_bits() == y.train_loss.to_bits()
                && x.val_loss.to_bits() == y.val_loss.to_bits()
        });
    let same_ckpt = format_checkpoint(&a.outcome.model) == format_checkpoint(&b.outcome.model);
    let same_init = a.model == b.model;
    check(
        same_log && same_bits && same_ckpt && same_init,
        format!(
            "{} epoch lines, checkpoints {} bytes; log {same_log}, bits {same_bits}, checkpoint {same_ckpt}",
            a.outcome.history.len(),
            format_checkpoint(&a.outcome.model).len()
        ),
    )
}

fn real_data_plausibility() -> Outcome {
    let Ok(path) = std::env::var("ISHNE_ACM_GRAPH") else {
        return Skip("set ISHNE_ACM_GRAPH to a preprocessed ACM graph file".into());
    };
    let g = match data::load_graph(Path::new(&path)) {
        Ok(g) => g,
        Err(e) => return Fail(format!("{path}: {e}")),
    };
    let schemas = [g.schema("P-A-P").unwrap(), g.schema("P-S-P").unwrap()];
    let input = ModelInput::from_graph(&g, &schemas).unwrap();
    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let p = g.node_type_by_name("P").unwrap();
    let split = make_split(&g, p, 600, 300, cfg.seed).unwrap();
    let model = IshneModel::new(
        cfg.model_config(input.features.cols(), input.num_classes()),
        input.metapath_names(),
        cfg.seed,
    )
    .unwrap();
    let out = train::train(model, &input, &split, &cfg).unwrap();
    let (rows, gold) = labeled_rows(&input, &split.test).unwrap();
    let pred = train::predict(&out.model, &input, &rows).unwrap();
    let f1 = metrics::micro_f1(&pred, &gold).unwrap();
    check(
        (0.78..=0.88).contains(&f1),
        format!(
            "test Micro-F1 {}% on {} test papers",
            metrics::percent(f1),
            rows.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "gradient-oracle",
            gradient_oracle,
            Some(Duration::from_secs(60)),
        ),
        (
            "attention-normalization",
            attention_normalization,
            Some(Duration::from_secs(10)),
        ),
        ("influence-off-equivalence", influence_off_equivalence, None),
        ("asymmetry-witness", asymmetry_witness, None),
        ("metapath-oracle", metapath_oracle, None),
        ("learnability", learnability, Some(Duration::from_secs(300))),
        ("exchangeability", exchangeability, None),
        ("determinism", determinism, None),
        ("real-data-plausibility", real_data_plausibility, None),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Pass(d), Some(b)) if elapsed > b => {
                Fail(format!("{d}; over the {}s budget", b.as_secs()))
            }
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name} ({:.1}s): {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
