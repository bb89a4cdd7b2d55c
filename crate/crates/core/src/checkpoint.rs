//! Versioned plain-text checkpoints holding an [`LstmModel`] and the
//! [`ScalerParams`] it was trained with.
//!
//! ```text
//! qpl-checkpoint
//! format_version 1
//! scalar f64
//! num_layers 2
//! units 16
//! input_dim 1
//! output_dim 1
//! window 1
//! scaler <x_min> <x_max> <a> <b>
//! block layer0.input_weights 64
//! <64 values>
//! ...
//! end
//! ```
//!
//! Blocks appear per layer as `input_weights`, `recurrent_weights`, `bias`,
//! then `head.weight`, `head.bias`. Gate rows are stacked `i, f, g, o` and
//! matrices are row-major. Values use shortest round-trip exponent notation,
//! so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::lstm::{LstmConfig, LstmModel, LstmWeights};
use crate::pipeline::ScalerParams;
use crate::scalar::Scalar;

pub const MAGIC: &str = "qpl-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (missing `{MAGIC}` header)")]
    NotACheckpoint,
    #[error("unsupported checkpoint version {found} (expected {FORMAT_VERSION})")]
    Version { found: String },
    #[error("checkpoint holds {found} values, expected {expected}")]
    ScalarType {
        found: String,
        expected: &'static str,
    },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("malformed checkpoint line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
}

pub fn to_text<T: Scalar>(model: &LstmModel<T>, scaler: &ScalerParams<T>) -> String {
    let c = &model.config;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "format_version {FORMAT_VERSION}");
    let _ = writeln!(s, "scalar {}", T::NAME);
    let _ = writeln!(s, "num_layers {}", c.num_layers);
    let _ = writeln!(s, "units {}", c.units);
    let _ = writeln!(s, "input_dim {}", c.input_dim);
    let _ = writeln!(s, "output_dim {}", c.output_dim);
    let _ = writeln!(s, "window {}", c.window);
    let _ = writeln!(
        s,
        "scaler {:e} {:e} {:e} {:e}",
        scaler.x_min, scaler.x_max, scaler.a, scaler.b
    );
    for (name, values) in model.weights.blocks() {
        let _ = writeln!(s, "block {name} {}", values.len());
        let line: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    let _ = writeln!(s, "end");
    s
}

pub fn save_checkpoint<T: Scalar>(
    model: &LstmModel<T>,
    scaler: &ScalerParams<T>,
    path: &Path,
) -> Result<(), CheckpointError> {
    fs::write(path, to_text(model, scaler))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(LstmModel<T>, ScalerParams<T>), CheckpointError> {
    from_text(&fs::read_to_string(path)?)
}

/// Loads and insists on a specific architecture.
pub fn load_checkpoint_for<T: Scalar>(
    path: &Path,
    expected: &LstmConfig,
) -> Result<(LstmModel<T>, ScalerParams<T>), CheckpointError> {
    let (model, scaler) = load_checkpoint(path)?;
    if model.config != *expected {
        return Err(CheckpointError::Shape(format!(
            "file holds {:?}, requested {:?}",
            model.config, expected
        )));
    }
    Ok((model, scaler))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), CheckpointError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .ok_or_else(|| CheckpointError::Truncated(format!("file ends before {what}")))
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str), CheckpointError> {
        let (n, line) = self.next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v)),
            _ => Err(CheckpointError::Malformed {
                line: n,
                reason: format!("expected `{key} ...`, found `{line}`"),
            }),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize, CheckpointError> {
        let (n, v) = self.field(key)?;
        v.parse().map_err(|_| CheckpointError::Malformed {
            line: n,
            reason: format!("`{key}` is not a count: `{v}`"),
        })
    }
}

fn parse_values<T: Scalar>(line_no: usize, text: &str) -> Result<Vec<T>, CheckpointError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| CheckpointError::Malformed {
                line: line_no,
                reason: format!("bad number `{tok}`"),
            })
        })
        .collect()
}

pub fn from_text<T: Scalar>(
    text: &str,
) -> Result<(LstmModel<T>, ScalerParams<T>), CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    match lines.inner.next() {
        Some((_, l)) if l.trim_end() == MAGIC => {}
        _ => return Err(CheckpointError::NotACheckpoint),
    }
    let (_, version) = lines.field("format_version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(CheckpointError::Version {
            found: version.to_string(),
        });
    }
    let (_, scalar) = lines.field("scalar")?;
    if scalar != T::NAME {
        return Err(CheckpointError::ScalarType {
            found: scalar.to_string(),
            expected: T::NAME,
        });
    }
    let config = LstmConfig {
        num_layers: lines.count("num_layers")?,
        units: lines.count("units")?,
        input_dim: lines.count("input_dim")?,
        output_dim: lines.count("output_dim")?,
        window: lines.count("window")?,
    };
    config
        .validate()
        .map_err(|e| CheckpointError::Shape(e.to_string()))?;
    let (n, scaler_text) = lines.field("scaler")?;
    let sv = parse_values::<T>(n, scaler_text)?;
    if sv.len() != 4 {
        return Err(CheckpointError::Malformed {
            line: n,
            reason: format!("scaler needs 4 values, found {}", sv.len()),
        });
    }
    let scaler =
        ScalerParams::new(sv[0], sv[1], sv[2], sv[3]).map_err(|e| CheckpointError::Malformed {
            line: n,
            reason: e.to_string(),
        })?;

    let mut weights = LstmWeights::<T>::zeros(&config);
    let names: Vec<(String, usize)> = weights
        .blocks()
        .iter()
        .map(|(name, b)| (name.clone(), b.len()))
        .collect();
    for ((name, len), dst) in names.into_iter().zip(weights.blocks_mut()) {
        let (n, header) = lines.field("block")?;
        let (found_name, found_len) =
            header
                .split_once(' ')
                .ok_or_else(|| CheckpointError::Malformed {
                    line: n,
                    reason: format!("block header `{header}` lacks a length"),
                })?;
        if found_name != name {
            return Err(CheckpointError::Malformed {
                line: n,
                reason: format!("expected block `{name}`, found `{found_name}`"),
            });
        }
        let declared: usize = found_len.parse().map_err(|_| CheckpointError::Malformed {
            line: n,
            reason: format!("block length `{found_len}` is not a count"),
        })?;
        if declared != len {
            return Err(CheckpointError::Shape(format!(
                "block `{name}` declares {declared} values but the configuration needs {len}"
            )));
        }
        let (vn, body) = lines.next(&format!("values of block `{name}`"))?;
        let values = parse_values::<T>(vn, body)?;
        if values.len() != len {
            return Err(CheckpointError::Truncated(format!(
                "block `{name}` has {} of {len} values",
                values.len()
            )));
        }
        dst.copy_from_slice(&values);
    }
    let (n, last) = lines.next("`end` marker")?;
    if last != "end" {
        return Err(CheckpointError::Malformed {
            line: n,
            reason: format!("expected `end`, found `{last}`"),
        });
    }
    let model =
        LstmModel::new(config, weights).map_err(|e| CheckpointError::Shape(e.to_string()))?;
    Ok((model, scaler))
}
