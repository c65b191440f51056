//! JSON weight files.
//!
//! Layout: `version` (1), `arch`, `activation` ("relu"), `layers` as
//! `{w: [out][in], b: [out]}`, `input_norm.d_max` and `meta`. Every float is
//! written with 17 significant digits so a save/load roundtrip is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

pub const WEIGHT_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Reach,
    Keep,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Reach => "reach",
            ModelKind::Keep => "keep",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reach" => Ok(ModelKind::Reach),
            "keep" => Ok(ModelKind::Keep),
            _ => Err(Error::InvalidArgument(format!(
                "model kind must be reach or keep, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightMeta {
    pub model_kind: ModelKind,
    pub seed: u64,
    pub episodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub network: Network,
    pub d_max: f64,
    pub meta: WeightMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputNorm {
    d_max: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    version: u32,
    arch: Vec<usize>,
    activation: String,
    layers: Vec<RawLayer>,
    input_norm: RawInputNorm,
    meta: WeightMeta,
}

/// 17 significant digits in JSON-compatible scientific notation.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_array(out: &mut String, values: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format_f64(v));
    }
    out.push(']');
}

impl WeightFile {
    pub fn to_json(&self) -> String {
        let net = &self.network;
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"version\": {WEIGHT_FILE_VERSION},");
        let arch: Vec<String> = net.arch().iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "  \"arch\": [{}],", arch.join(", "));
        out.push_str("  \"activation\": \"relu\",\n");
        out.push_str("  \"layers\": [\n");
        for l in 0..net.num_layers() {
            let s = net.spans[l];
            out.push_str("    {\n      \"w\": [\n");
            for j in 0..s.n_out {
                out.push_str("        ");
                write_array(&mut out, (0..s.n_in).map(|i| net.weight(l, j, i)));
                out.push_str(if j + 1 < s.n_out { ",\n" } else { "\n" });
            }
            out.push_str("      ],\n      \"b\": ");
            write_array(&mut out, (0..s.n_out).map(|j| net.bias(l, j)));
            out.push_str(if l + 1 < net.num_layers() { "\n    },\n" } else { "\n    }\n" });
        }
        out.push_str("  ],\n");
        let _ = writeln!(out, "  \"input_norm\": {{\"d_max\": {}}},", format_f64(self.d_max));
        let _ = writeln!(
            out,
            "  \"meta\": {{\"model_kind\": \"{}\", \"seed\": {}, \"episodes\": {}}}",
            self.meta.model_kind.as_str(),
            self.meta.seed,
            self.meta.episodes
        );
        out.push_str("}\n");
        out
    }

    /// Parses and validates a weight file against the expected architecture.
    pub fn from_json(text: &str, expected_arch: &[usize]) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(text).map_err(|e| {
            Error::parse(format!("weight file line {} column {}", e.line(), e.column()), e)
        })?;
        if raw.version != WEIGHT_FILE_VERSION {
            return Err(Error::Version(format!(
                "weight file version {} (supported: {WEIGHT_FILE_VERSION})",
                raw.version
            )));
        }
        if raw.arch != expected_arch {
            return Err(Error::Version(format!(
                "weight file architecture {:?}, expected {:?}",
                raw.arch, expected_arch
            )));
        }
        if raw.activation != "relu" {
            return Err(Error::parse("activation", format!("unsupported `{}`", raw.activation)));
        }
        if !(raw.input_norm.d_max > 0.0) {
            return Err(Error::parse("input_norm.d_max", "must be positive"));
        }
        let mut net = Network::zeros(&raw.arch)?;
        if raw.layers.len() != net.num_layers() {
            return Err(Error::parse(
                "layers",
                format!("{} layers for architecture {:?}", raw.layers.len(), raw.arch),
            ));
        }
        for (l, layer) in raw.layers.iter().enumerate() {
            let s = net.spans[l];
            if layer.w.len() != s.n_out {
                return Err(Error::parse(
                    format!("layers[{l}].w"),
                    format!("{} rows, expected {}", layer.w.len(), s.n_out),
                ));
            }
            if layer.b.len() != s.n_out {
                return Err(Error::parse(
                    format!("layers[{l}].b"),
                    format!("{} entries, expected {}", layer.b.len(), s.n_out),
                ));
            }
            for (j, row) in layer.w.iter().enumerate() {
                if row.len() != s.n_in {
                    return Err(Error::parse(
                        format!("layers[{l}].w[{j}]"),
                        format!("{} entries, expected {}", row.len(), s.n_in),
                    ));
                }
                for (i, &v) in row.iter().enumerate() {
                    net.set_weight(l, j, i, v);
                }
            }
            for (j, &v) in layer.b.iter().enumerate() {
                net.set_bias(l, j, v);
            }
        }
        Ok(WeightFile {
            network: net,
            d_max: raw.input_norm.d_max,
            meta: raw.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_arch: &[usize]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WeightFile::from_json(&text, expected_arch).map_err(|e| match e {
            Error::Parse { context, message } => Error::Parse {
                context: format!("{}: {context}", path.display()),
                message,
            },
            other => other,
        })
    }
}

pub fn save_weights(net: &Network, d_max: f64, meta: WeightMeta, path: &Path) -> Result<()> {
    WeightFile {
        network: net.clone(),
        d_max,
        meta,
    }
    .save(path)
}

pub fn load_weights(path: &Path, expected_arch: &[usize]) -> Result<WeightFile> {
    WeightFile::load(path, expected_arch)
}
