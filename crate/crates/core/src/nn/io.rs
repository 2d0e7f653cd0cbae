//! JSON model documents:
//! `{format_version: 1, input_shape, input_norm, layers: [{kind, hyperparams, trainable, params}]}`
//! with parameters as nested arrays matching their tensor shape.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::layer::{Layer, LayerKind};
use super::model::LayeredModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_FORMAT_VERSION: u64 = 1;

fn nest(shape: &[usize], values: &[f64]) -> Value {
    match shape {
        [] => json!(values[0]),
        [_] => Value::Array(values.iter().map(|&v| json!(v)).collect()),
        [d, rest @ ..] => {
            let stride = values.len() / d;
            Value::Array(values.chunks_exact(stride).map(|chunk| nest(rest, chunk)).collect())
        }
    }
}

fn unnest(value: &Value, shape: &[usize], out: &mut Vec<f64>, what: &str) -> Result<()> {
    match shape.split_first() {
        None => out.push(
            value
                .as_f64()
                .ok_or_else(|| Error::Format(format!("{what}: expected a number")))?,
        ),
        Some((&d, rest)) => {
            let arr = value
                .as_array()
                .ok_or_else(|| Error::Format(format!("{what}: expected an array")))?;
            if arr.len() != d {
                return Err(Error::Format(format!(
                    "{what}: expected {d} entries, found {}",
                    arr.len()
                )));
            }
            for v in arr {
                unnest(v, rest, out, what)?;
            }
        }
    }
    Ok(())
}

pub fn model_to_json(model: &LayeredModel) -> Value {
    let layers: Vec<Value> = model
        .layers()
        .iter()
        .map(|layer| {
            let mut hyper = serde_json::to_value(layer.kind).expect("layer kind serializes");
            let kind = hyper
                .as_object_mut()
                .and_then(|o| o.remove("kind"))
                .unwrap_or(Value::Null);
            json!({
                "kind": kind,
                "hyperparams": hyper,
                "trainable": layer.trainable,
                "params": layer.params.iter().map(|p| nest(p.shape(), p.values())).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "format_version": MODEL_FORMAT_VERSION,
        "input_shape": model.input_shape(),
        "input_norm": model.input_norm(),
        "layers": layers,
    })
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::Format(format!("{ctx}: missing field `{key}`")))
}

pub fn model_from_json(doc: &Value) -> Result<LayeredModel> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Format("model document must be an object".into()))?;
    let version = field(obj, "format_version", "model")?
        .as_u64()
        .ok_or_else(|| Error::Format("format_version must be an integer".into()))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let input_shape: [usize; 3] = serde_json::from_value(field(obj, "input_shape", "model")?.clone())
        .map_err(|e| Error::Format(format!("input_shape: {e}")))?;
    let layer_docs = field(obj, "layers", "model")?
        .as_array()
        .ok_or_else(|| Error::Format("layers must be an array".into()))?;
    let mut layers = Vec::with_capacity(layer_docs.len());
    for (i, ld) in layer_docs.iter().enumerate() {
        let ctx = format!("layer {i}");
        let lo = ld
            .as_object()
            .ok_or_else(|| Error::Format(format!("{ctx}: expected an object")))?;
        let mut hyper = match field(lo, "hyperparams", &ctx)? {
            Value::Object(m) => m.clone(),
            Value::Null => Map::new(),
            _ => return Err(Error::Format(format!("{ctx}: hyperparams must be an object"))),
        };
        hyper.insert("kind".into(), field(lo, "kind", &ctx)?.clone());
        let kind: LayerKind =
            serde_json::from_value(Value::Object(hyper)).map_err(|e| Error::Format(format!("{ctx}: {e}")))?;
        let trainable = field(lo, "trainable", &ctx)?
            .as_bool()
            .ok_or_else(|| Error::Format(format!("{ctx}: trainable must be a boolean")))?;
        let param_docs = field(lo, "params", &ctx)?
            .as_array()
            .ok_or_else(|| Error::Format(format!("{ctx}: params must be an array")))?;
        let shapes = kind.param_shapes();
        if shapes.len() != param_docs.len() {
            return Err(Error::Format(format!(
                "{ctx}: {} expects {} parameter tensors, found {}",
                kind.name(),
                shapes.len(),
                param_docs.len()
            )));
        }
        let mut params = Vec::with_capacity(shapes.len());
        for (pi, (shape, pd)) in shapes.into_iter().zip(param_docs).enumerate() {
            let mut values = Vec::with_capacity(shape.iter().product());
            unnest(pd, &shape, &mut values, &format!("{ctx} param {pi}"))?;
            params.push(Tensor::new(shape, values)?);
        }
        layers.push(Layer::with_params(kind, params, trainable)?);
    }
    let mut model = LayeredModel::new(input_shape, layers)?;
    if let Some(norm) = obj.get("input_norm") {
        let norm = serde_json::from_value(norm.clone()).map_err(|e| Error::Format(format!("input_norm: {e}")))?;
        model.set_input_norm(norm)?;
    }
    Ok(model)
}

pub fn save_model(model: &LayeredModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&model_to_json(model))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LayeredModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    model_from_json(&doc)
}
