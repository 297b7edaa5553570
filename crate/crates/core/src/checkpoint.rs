//! Versioned text checkpoints.
//!
//! Layout, one record per line with tab-separated fields (shown here with
//! spaces):
//!
//! ```text
//! ishne-checkpoint  1
//! in_dim  1870
//! hidden  8
//! heads  8
//! fusion_dim  128
//! classes  3
//! activation-attn  leaky-relu
//! activation-agg  elu
//! metapaths  PAP,PSP
//! param  M.PAP  8  1870
//! <row 0: comma-separated values>
//! ...
//! param  P.PAP  8  1870
//! ...
//! ```
//!
//! Parameters follow [`IshneModel::named_params`] order: for each meta-path
//! `M.<name>`, `P.<name>`, `a.<name>.head<k>`, then `W_Q`, `W_K`, `W_V`,
//! `q`, `C`. Values use shortest round-trip decimal form, so a save/load
//! cycle is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::attention::AttentionActivations;
use crate::data::{join_values, DataError};
use crate::error::ModelError;
use crate::model::{IshneModel, ModelConfig, ModelInput};
use crate::tensor::{Activation, Tensor};

pub const MAGIC: &str = "ishne-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] DataError),
    #[error("checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported checkpoint version {0}")]
    Version(String),
    #[error("checkpoint does not match: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn perr(line: usize, message: impl Into<String>) -> CheckpointError {
    CheckpointError::Parse {
        line,
        message: message.into(),
    }
}

pub fn format_checkpoint(model: &IshneModel) -> String {
    let c = &model.config;
    let mut s = format!("{MAGIC}\t{VERSION}\n");
    writeln!(s, "in_dim\t{}", c.in_dim).unwrap();
    writeln!(s, "hidden\t{}", c.hidden).unwrap();
    writeln!(s, "heads\t{}", c.heads).unwrap();
    writeln!(s, "fusion_dim\t{}", c.fusion_dim).unwrap();
    writeln!(s, "classes\t{}", c.classes).unwrap();
    writeln!(s, "activation-attn\t{}", c.activations.score).unwrap();
    writeln!(s, "activation-agg\t{}", c.activations.aggregate).unwrap();
    writeln!(s, "metapaths\t{}", model.metapaths.join(",")).unwrap();
    for (name, t) in model.named_params() {
        writeln!(s, "param\t{name}\t{}\t{}", t.rows(), t.cols()).unwrap();
        for r in 0..t.rows() {
            writeln!(s, "{}", join_values(t.row(r))).unwrap();
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        let (k, l) = self.inner.next()?;
        self.line = k + 1;
        Some(l)
    }

    fn record(&mut self, key: &str) -> Result<Vec<&'a str>, CheckpointError> {
        let l = self
            .next()
            .ok_or_else(|| perr(self.line + 1, format!("missing `{key}` record")))?;
        let parts: Vec<&str> = l.split('\t').collect();
        if parts[0] != key {
            return Err(perr(
                self.line,
                format!("expected `{key}`, found `{}`", parts[0]),
            ));
        }
        Ok(parts[1..].to_vec())
    }

    fn value<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CheckpointError> {
        let parts = self.record(key)?;
        match parts.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| perr(self.line, format!("invalid value `{v}` for `{key}`"))),
            _ => Err(perr(self.line, format!("`{key}` takes one value"))),
        }
    }
}

pub fn parse_checkpoint(text: &str) -> Result<IshneModel, CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let version: String = lines.value(MAGIC)?;
    if version != VERSION.to_string() {
        return Err(CheckpointError::Version(version));
    }
    let in_dim = lines.value("in_dim")?;
    let hidden = lines.value("hidden")?;
    let heads = lines.value("heads")?;
    let fusion_dim = lines.value("fusion_dim")?;
    let classes = lines.value("classes")?;
    let score: Activation = lines.value("activation-attn")?;
    let aggregate: Activation = lines.value("activation-agg")?;
    let names: String = lines.value("metapaths")?;
    let config = ModelConfig {
        in_dim,
        hidden,
        heads,
        fusion_dim,
        classes,
        activations: AttentionActivations { score, aggregate },
    };
    let metapaths = names.split(',').map(str::to_string).collect();
    let mut model = IshneModel::zeros(config, metapaths)?;

    let expected: Vec<(String, (usize, usize))> = model
        .named_params()
        .into_iter()
        .map(|(n, _)| n)
        .zip(model.expected_shapes())
        .collect();
    let mut values = Vec::with_capacity(expected.len());
    for (name, (rows, cols)) in &expected {
        let header = lines.record("param")?;
        let line = lines.line;
        let [found, r, c] = header.as_slice() else {
            return Err(perr(line, "param record needs name, rows, cols"));
        };
        if found != name {
            return Err(perr(
                line,
                format!("expected parameter `{name}`, found `{found}`"),
            ));
        }
        let dims = (r.parse::<usize>(), c.parse::<usize>());
        if dims != (Ok(*rows), Ok(*cols)) {
            return Err(CheckpointError::Mismatch(format!(
                "`{name}` is {r}x{c}, config implies {rows}x{cols}"
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..*rows {
            let l = lines
                .next()
                .ok_or_else(|| perr(line, format!("truncated parameter `{name}`")))?;
            let row = l
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| perr(lines.line, "invalid number"))?;
            if row.len() != *cols {
                return Err(perr(
                    lines.line,
                    format!("expected {cols} values, found {}", row.len()),
                ));
            }
            data.extend(row);
        }
        values.push(Tensor::from_vec(*rows, *cols, data).expect("shape checked"));
    }
    if let Some(extra) = lines.next().filter(|l| !l.trim().is_empty()) {
        return Err(perr(
            lines.line,
            format!("unexpected trailing record `{extra}`"),
        ));
    }
    for (p, v) in model.params_mut().into_iter().zip(values) {
        *p = v;
    }
    model.validate()?;
    Ok(model)
}

pub fn save_checkpoint(model: &IshneModel, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, format_checkpoint(model)).map_err(|e| DataError::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<IshneModel, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_checkpoint(&text)
}

/// Confirms a loaded model fits `input`.
pub fn ensure_compatible(model: &IshneModel, input: &ModelInput) -> Result<(), CheckpointError> {
    model
        .check_input(input)
        .map_err(|e| CheckpointError::Mismatch(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> IshneModel {
        let cfg = ModelConfig {
            in_dim: 3,
            hidden: 2,
            heads: 2,
            fusion_dim: 4,
            classes: 3,
            activations: AttentionActivations {
                score: Activation::Tanh,
                aggregate: Activation::Elu,
            },
        };
        IshneModel::new(cfg, vec!["PAP".into(), "PSP".into()], 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let text = format_checkpoint(&m);
        let back = parse_checkpoint(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(format_checkpoint(&back), text);
        assert!(text.starts_with("ishne-checkpoint\t1\nin_dim\t3\n"));
        assert!(text.contains("\nparam\ta.PSP.head1\t1\t4\n"));
    }

    #[test]
    fn rejects_bad_files() {
        let text = format_checkpoint(&model());
        assert!(matches!(
            parse_checkpoint(&text.replacen("\t1\n", "\t2\n", 1)),
            Err(CheckpointError::Version(_))
        ));
        assert!(matches!(
            parse_checkpoint(&text.replace("param\tW_K\t4\t4", "param\tW_K\t4\t5")),
            Err(CheckpointError::Mismatch(_))
        ));
        assert!(matches!(
            parse_checkpoint(&text.replace("param\tq\t", "param\tQ\t")),
            Err(CheckpointError::Parse { .. })
        ));
        let cut: String = text.lines().take(30).map(|l| format!("{l}\n")).collect();
        assert!(parse_checkpoint(&cut).is_err());
        assert!(parse_checkpoint(&format!("{text}junk\n")).is_err());
        assert!(parse_checkpoint("").is_err());
        // Changing the hidden size invalidates every stored shape.
        assert!(matches!(
            parse_checkpoint(&text.replace("hidden\t2", "hidden\t3")),
            Err(CheckpointError::Mismatch(_))
        ));
    }
}
