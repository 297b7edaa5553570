use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ishne::checkpoint::{self, CheckpointError};
use ishne::data::{self, EmbeddingExport, SynthSpec};
use ishne::hetgraph::{HetGraph, NodeId};
use ishne::metrics::{self, ConfusionCounts};
use ishne::model::{IshneModel, ModelInput};
use ishne::train::{self, labeled_rows, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{EmbedArgs, EvalArgs, GensynthArgs, HyperArgs, ModelSource, SplitName, TrainArgs};

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const EPOCH_LOG: &str = "epochs.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub nodes: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

/// Everything needed to rerun a `train` invocation, plus its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub graph: PathBuf,
    pub metapaths: Vec<String>,
    pub train: usize,
    pub val: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub out: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub metrics: BTreeMap<String, SplitMetrics>,
}

fn output_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| output_err(path, e))
}

fn load_graph(path: &Path) -> Result<HetGraph, CliError> {
    data::load_graph(path).map_err(|source| CliError::Graph {
        path: path.to_path_buf(),
        source,
    })
}

fn model_input(graph: &HetGraph, specs: &[String]) -> Result<ModelInput, CliError> {
    let schemas = specs
        .iter()
        .map(|s| graph.schema(s.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(ishne::ModelError::from)?;
    Ok(ModelInput::from_graph(graph, &schemas)?)
}

/// Config file (if any), then flags on top.
fn resolve_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    let HyperArgs {
        hidden,
        heads,
        fusion_dim,
        lr,
        weight_decay,
        epochs,
        patience,
        dropout,
        activation_attn,
        activation_agg,
    } = args.hyper.clone();
    cfg.hidden = hidden.unwrap_or(cfg.hidden);
    cfg.heads = heads.unwrap_or(cfg.heads);
    cfg.fusion_dim = fusion_dim.unwrap_or(cfg.fusion_dim);
    cfg.lr = lr.unwrap_or(cfg.lr);
    cfg.weight_decay = weight_decay.unwrap_or(cfg.weight_decay);
    cfg.epochs = epochs.unwrap_or(cfg.epochs);
    cfg.patience = patience.unwrap_or(cfg.patience);
    cfg.dropout = dropout.unwrap_or(cfg.dropout);
    cfg.activations.score = activation_attn.unwrap_or(cfg.activations.score);
    cfg.activations.aggregate = activation_agg.unwrap_or(cfg.activations.aggregate);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    // Surface bad settings before the graph is read.
    cfg.validate()?;
    Ok(cfg)
}

fn score(
    model: &IshneModel,
    input: &ModelInput,
    ids: &[NodeId],
) -> Result<Option<SplitMetrics>, CliError> {
    if ids.is_empty() {
        return Ok(None);
    }
    let (rows, gold) = labeled_rows(input, ids)?;
    let pred = train::predict(model, input, &rows)?;
    let c = ConfusionCounts::from_labels(&pred, &gold).expect("non-empty, equal lengths");
    Ok(Some(SplitMetrics {
        nodes: ids.len(),
        micro_f1: c.micro_f1(),
        macro_f1: c.macro_f1(),
    }))
}

fn report(label: &str, m: Option<&SplitMetrics>) {
    match m {
        Some(m) => println!(
            "{label}\tMicro-F1 {}\tMacro-F1 {}\t({} nodes)",
            metrics::percent(m.micro_f1),
            metrics::percent(m.macro_f1),
            m.nodes
        ),
        None => println!("{label}\tempty"),
    }
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let graph = load_graph(&args.graph)?;
    let input = model_input(&graph, &args.metapaths)?;
    let target = graph
        .schema(args.metapaths[0].trim())
        .map_err(ishne::ModelError::from)?
        .target_type();
    let split = data::make_split(&graph, target, args.train, args.val, cfg.seed)?;
    let classes = input.num_classes();
    if classes == 0 {
        return Err(CliError::Config("graph has no labeled target nodes".into()));
    }
    let model = IshneModel::new(
        cfg.model_config(input.features.cols(), classes),
        input.metapath_names(),
        cfg.seed,
    )?;
    log::info!(
        "training {} parameters on {} targets ({} train, {} val, {} test)",
        model.num_params(),
        input.num_nodes(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let outcome = train::train(model, &input, &split, &cfg)?;

    fs::create_dir_all(&args.out).map_err(|e| output_err(&args.out, e))?;
    checkpoint::save_checkpoint(&outcome.model, &args.out.join(CHECKPOINT))?;
    let log = format!(
        "epoch\ttrain_loss\tval_loss\tval_microF1\n{}",
        outcome.log()
    );
    write_file(&args.out.join(EPOCH_LOG), log)?;
    for (name, ids) in [
        (SplitName::Train, &split.train),
        (SplitName::Val, &split.val),
        (SplitName::Test, &split.test),
    ] {
        data::write_ids(&args.out.join(name.file_name()), ids)?;
    }

    let mut results = BTreeMap::new();
    for (name, ids) in [(SplitName::Val, &split.val), (SplitName::Test, &split.test)] {
        let m = score(&outcome.model, &input, ids)?;
        report(name.label(), m.as_ref());
        if let Some(m) = m {
            results.insert(name.label().to_string(), m);
        }
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        graph: args.graph.clone(),
        metapaths: args
            .metapaths
            .iter()
            .map(|s| s.trim().to_string())
            .collect(),
        train: args.train,
        val: args.val,
        seed: cfg.seed,
        config: cfg,
        out: args.out.clone(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        metrics: results,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&args.out.join(MANIFEST), json + "\n")?;
    Ok(())
}

fn read_manifest(run: &Path) -> Result<RunManifest, CliError> {
    let path = run.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| data::DataError::Io {
        path: path.clone(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

struct Loaded {
    input: ModelInput,
    model: IshneModel,
}

fn load_model(src: &ModelSource) -> Result<Loaded, CliError> {
    let need = |what: &str| CliError::Config(format!("pass --{what} or --run"));
    let metapaths = match (&src.metapaths, &src.run) {
        (Some(m), _) => m.clone(),
        (None, Some(run)) => read_manifest(run)?.metapaths,
        (None, None) => return Err(need("metapaths")),
    };
    let ckpt = match (&src.checkpoint, &src.run) {
        (Some(c), _) => c.clone(),
        (None, Some(run)) => run.join(CHECKPOINT),
        (None, None) => return Err(need("checkpoint")),
    };
    let model = checkpoint::load_checkpoint(&ckpt)?;
    let c = model.config;
    for (flag, want, have) in [
        ("hidden", src.hidden, c.hidden),
        ("heads", src.heads, c.heads),
        ("fusion-dim", src.fusion_dim, c.fusion_dim),
    ] {
        if let Some(w) = want.filter(|&w| w != have) {
            return Err(CheckpointError::Mismatch(format!(
                "--{flag} {w} but the checkpoint has {have}"
            ))
            .into());
        }
    }
    let graph = load_graph(&src.graph)?;
    let input = model_input(&graph, &metapaths)?;
    checkpoint::ensure_compatible(&model, &input)?;
    Ok(Loaded { input, model })
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let Loaded { input, model } = load_model(&args.source)?;
    let (label, path) = match (&args.ids, &args.source.run) {
        (Some(p), _) => ("ids", p.clone()),
        (None, Some(run)) => (args.split.label(), run.join(args.split.file_name())),
        (None, None) => return Err(CliError::Config("pass --ids or --run".into())),
    };
    let ids = data::read_ids(&path)?;
    report(label, score(&model, &input, &ids)?.as_ref());
    Ok(())
}

pub fn embed(args: &EmbedArgs) -> Result<(), CliError> {
    let Loaded { input, model } = load_model(&args.source)?;
    let ev = model.evaluate(&input)?;
    let export = EmbeddingExport {
        beta: model
            .metapaths
            .iter()
            .cloned()
            .zip(ev.fused.beta.iter().copied())
            .collect(),
        node_ids: input.node_ids.clone(),
        vectors: ev.fused.x,
    };
    write_file(&args.out, data::format_embeddings(&export))?;
    let beta: Vec<String> = export
        .beta
        .iter()
        .map(|(n, b)| format!("{n}={b:.6}"))
        .collect();
    println!("beta\t{}", beta.join("\t"));
    println!(
        "wrote {} embeddings of size {} to {}",
        export.node_ids.len(),
        export.vectors.cols(),
        args.out.display()
    );
    Ok(())
}

pub fn gensynth(args: &GensynthArgs) -> Result<(), CliError> {
    if args.intermediates.len() != 2 {
        return Err(CliError::Config(format!(
            "--intermediates takes two counts, got {}",
            args.intermediates.len()
        )));
    }
    let spec = SynthSpec {
        targets: args.targets,
        intermediates: [args.intermediates[0], args.intermediates[1]],
        classes: args.classes,
        feature_dim: args.feature_dim,
        p_in: args.p_in,
        p_out: args.p_out,
        snr: args.snr,
        seed: args.seed,
    };
    let g = data::generate_synthetic(&spec)?;
    data::write_graph(&g, &args.out)?;
    let counts: Vec<String> = g
        .node_type_names()
        .iter()
        .map(|name| {
            let t = g.node_type_by_name(name).expect("own type");
            format!("{} {name}", g.nodes_of_type(t).len())
        })
        .collect();
    println!(
        "wrote {}: {} nodes ({}), {} edges, {} classes",
        args.out.display(),
        g.num_nodes(),
        counts.join(", "),
        g.num_edges(),
        spec.classes
    );
    Ok(())
}
