//! Text checkpoints.
//!
//! A checkpoint is one JSON document: a header describing the architecture
//! and a `params` map from parameter name to `{shape, values}`, values
//! row-major with 17 significant digits so every double survives the round
//! trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use super::{Model, ModelConfig, Variant, INPUT_WIDTH};
use crate::data::io::fmt_f64;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::recurrent::GATE_CONVENTION;

pub const CHECKPOINT_VERSION: u64 = 1;

fn render(model: &Model) -> String {
    let c = model.config();
    let mut s = String::new();
    let header = serde_json::json!({
        "format_version": CHECKPOINT_VERSION,
        "variant": c.variant.as_str(),
        "input": INPUT_WIDTH,
        "hidden": c.hidden,
        "latent": c.latent,
        "length": c.length,
        "gate_convention": GATE_CONVENTION,
    });
    s.push_str("{\n");
    for (k, v) in header.as_object().expect("object") {
        let _ = writeln!(s, "  \"{k}\": {v},");
    }
    s.push_str("  \"params\": {\n");
    let n = model.params().len();
    for (i, (name, t)) in model.params().iter().enumerate() {
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let values: Vec<String> = t.data().iter().map(|&v| fmt_f64(v)).collect();
        let _ = write!(
            s,
            "    {}: {{\"shape\": [{}], \"values\": [{}]}}",
            Value::String(name.to_owned()),
            shape.join(", "),
            values.join(", ")
        );
        s.push_str(if i + 1 < n { ",\n" } else { "\n" });
    }
    s.push_str("  }\n}\n");
    s
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render(model)).map_err(|e| Error::io(path, e))
}

fn field<'a>(doc: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    doc.get(name)
        .ok_or_else(|| Error::checkpoint(name, "missing"))
}

fn uint(doc: &Map<String, Value>, name: &str) -> Result<u64> {
    field(doc, name)?
        .as_u64()
        .ok_or_else(|| Error::checkpoint(name, "expected a non-negative integer"))
}

fn dim(doc: &Map<String, Value>, name: &str) -> Result<usize> {
    let v = uint(doc, name)?;
    if v == 0 {
        return Err(Error::checkpoint(name, "must be at least 1"));
    }
    usize::try_from(v).map_err(|_| Error::checkpoint(name, "too large"))
}

fn tensor(name: &str, v: &Value) -> Result<Tensor> {
    let field = format!("params.{name}");
    let obj = v
        .as_object()
        .ok_or_else(|| Error::checkpoint(&field, "expected an object"))?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::checkpoint(format!("{field}.shape"), "missing or not an array"))?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::checkpoint(format!("{field}.shape"), "entries must be integers"))?;
    let values = obj
        .get("values")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::checkpoint(format!("{field}.values"), "missing or not an array"))?
        .iter()
        .map(Value::as_f64)
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::checkpoint(format!("{field}.values"), "entries must be numbers"))?;
    Tensor::new(shape, values).map_err(|e| Error::checkpoint(field, e.to_string()))
}

/// Reads a checkpoint, validating its header and every parameter shape.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Error::checkpoint("<document>", format!("not a complete checkpoint ({e})")))?;
    let doc = doc
        .as_object()
        .ok_or_else(|| Error::checkpoint("<document>", "expected a JSON object"))?;

    let version = uint(doc, "format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::checkpoint(
            "format_version",
            format!("version {version} is not supported (expected {CHECKPOINT_VERSION})"),
        ));
    }
    let variant: Variant = field(doc, "variant")?
        .as_str()
        .ok_or_else(|| Error::checkpoint("variant", "expected a string"))?
        .parse()
        .map_err(|e: Error| Error::checkpoint("variant", e.to_string()))?;
    let input = dim(doc, "input")?;
    if input != INPUT_WIDTH {
        return Err(Error::checkpoint(
            "input",
            format!("input width {input} is not supported (expected {INPUT_WIDTH})"),
        ));
    }
    let gate = field(doc, "gate_convention")?.as_str().unwrap_or_default();
    if gate != GATE_CONVENTION {
        return Err(Error::checkpoint(
            "gate_convention",
            format!("`{gate}` does not match this build's `{GATE_CONVENTION}`"),
        ));
    }
    let config = ModelConfig {
        variant,
        hidden: dim(doc, "hidden")?,
        latent: dim(doc, "latent")?,
        length: dim(doc, "length")?,
    };

    let raw = field(doc, "params")?
        .as_object()
        .ok_or_else(|| Error::checkpoint("params", "expected an object"))?;
    let skeleton = config.init_params(&mut ChaCha8Rng::seed_from_u64(0))?;
    let mut params = ParamStore::new();
    for (name, expected) in skeleton.iter() {
        let v = raw
            .get(name)
            .ok_or_else(|| Error::checkpoint(format!("params.{name}"), "missing"))?;
        let t = tensor(name, v)?;
        if t.shape() != expected.shape() {
            return Err(Error::checkpoint(
                format!("params.{name}.shape"),
                format!(
                    "{:?} does not match the header ({:?})",
                    t.shape(),
                    expected.shape()
                ),
            ));
        }
        params
            .insert(name, t)
            .map_err(|e| Error::checkpoint(format!("params.{name}"), e.to_string()))?;
    }
    if let Some(extra) = raw.keys().find(|k| !skeleton.contains(k)) {
        return Err(Error::checkpoint(
            format!("params.{extra}"),
            format!("unexpected parameter for a {variant} model"),
        ));
    }
    Model::from_params(config, params)
}

/// Like [`load_checkpoint`], but fails unless the file holds `variant`.
pub fn load_checkpoint_as(path: impl AsRef<Path>, variant: Variant) -> Result<Model> {
    let model = load_checkpoint(path)?;
    if model.variant() != variant {
        return Err(Error::checkpoint(
            "variant",
            format!(
                "architecture mismatch: checkpoint holds a {} model, expected {variant}",
                model.variant()
            ),
        ));
    }
    Ok(model)
}
