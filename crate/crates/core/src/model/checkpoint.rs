//! Self-describing JSON checkpoint.
//!
//! ```text
//! {
//!   "format": "entcap-lstm-checkpoint", "version": 1,
//!   "conventions": { "gate_order": "i,f,g,o", "flatten": "row-major", ... },
//!   "encoder": { "n_qubits", "max_steps", "placement", "scale" },
//!   "model": { "input_dim", "hidden_dim", "fc_dim", "seq_len", "pooling" },
//!   "training": { ... free-form metadata ... },
//!   "tensors": [ { "name", "shape": [..], "data": [..] }, ... ]
//! }
//! ```
//!
//! Weights are written as shortest round-trip decimals and parsed with
//! correct rounding, so a load returns bit-identical values.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{LstmRegressor, ModelConfig, Params, TENSOR_NAMES};
use crate::encoding::Encoder;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "entcap-lstm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Conventions {
    gate_order: String,
    flatten: String,
    basis_order: String,
}

impl Conventions {
    fn current() -> Self {
        Conventions {
            gate_order: "i,f,g,o".into(),
            flatten: "row-major".into(),
            basis_order: "qubit 0 most significant".into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    conventions: Conventions,
    encoder: Encoder,
    model: ModelConfig,
    #[serde(default)]
    training: serde_json::Value,
    tensors: Vec<Tensor>,
}

/// A trained model together with the encoding it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: Encoder,
    pub model: LstmRegressor,
    pub training: serde_json::Value,
}

impl Checkpoint {
    pub fn new(encoder: Encoder, model: LstmRegressor) -> Result<Self> {
        let cfg = model.config();
        if encoder.input_dim() != cfg.input_dim || encoder.max_steps != cfg.seq_len {
            return Err(Error::Shape(format!(
                "encoder produces {}×{} features, model expects {}×{}",
                encoder.max_steps,
                encoder.input_dim(),
                cfg.seq_len,
                cfg.input_dim
            )));
        }
        Ok(Checkpoint {
            encoder,
            model,
            training: serde_json::Value::Null,
        })
    }
}

pub fn save_checkpoint<W: Write>(mut out: W, checkpoint: &Checkpoint) -> Result<()> {
    let params = checkpoint.model.params();
    let tensors = TENSOR_NAMES
        .iter()
        .zip(params.shapes())
        .zip(params.tensors())
        .map(|((name, shape), data)| {
            if let Some(v) = data.iter().find(|v| !v.is_finite()) {
                return Err(Error::Format(format!("tensor {name} holds non-finite value {v}")));
            }
            Ok(Tensor {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = Document {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        conventions: Conventions::current(),
        encoder: checkpoint.encoder,
        model: *checkpoint.model.config(),
        training: checkpoint.training.clone(),
        tensors,
    };
    serde_json::to_writer(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn load_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let value: serde_json::Value = serde_json::from_reader(input)?;
    match (value.get("format"), value.get("version")) {
        (Some(f), Some(v)) if f == CHECKPOINT_FORMAT && v == CHECKPOINT_VERSION => {}
        (Some(f), Some(v)) => {
            return Err(Error::Format(format!("checkpoint {f} version {v} is not supported")))
        }
        _ => return Err(Error::Format("not a model checkpoint".into())),
    }
    let doc: Document = serde_json::from_value(value)?;
    if doc.conventions != Conventions::current() {
        return Err(Error::Format(format!("unsupported conventions {:?}", doc.conventions)));
    }
    let mut params = Params::zeros(&doc.model);
    let shapes = params.shapes();
    if doc.tensors.len() != TENSOR_NAMES.len() {
        return Err(Error::Format(format!("expected {} tensors, found {}", TENSOR_NAMES.len(), doc.tensors.len())));
    }
    for (((tensor, name), shape), dst) in doc
        .tensors
        .iter()
        .zip(TENSOR_NAMES)
        .zip(shapes)
        .zip(params.tensors_mut())
    {
        if tensor.name != name || tensor.shape != shape || tensor.data.len() != dst.len() {
            return Err(Error::Format(format!(
                "tensor {} {:?} does not match expected {name} {shape:?}",
                tensor.name, tensor.shape
            )));
        }
        dst.copy_from_slice(&tensor.data);
    }
    let model = LstmRegressor::from_params(doc.model, params)?;
    let mut checkpoint = Checkpoint::new(doc.encoder, model)?;
    checkpoint.training = doc.training;
    Ok(checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, Pooling};
    use crate::rng::stream;
    use ndarray::Array3;
    use rand::Rng;

    fn sample() -> Checkpoint {
        let encoder = Encoder {
            max_steps: 5,
            ..Encoder::new(2)
        };
        let model = init_model(ModelConfig::new(4, 3, 2, 5), &mut stream(4)).unwrap();
        Checkpoint::new(encoder, model).unwrap()
    }

    fn to_bytes(c: &Checkpoint) -> Vec<u8> {
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, c).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = sample();
        c.training = serde_json::json!({"best_epoch": 3});
        let back = load_checkpoint(to_bytes(&c).as_slice()).unwrap();
        for (a, b) in c.model.params().tensors().iter().zip(back.model.params().tensors()) {
            let a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        assert_eq!(back.encoder, c.encoder);
        assert_eq!(back.training, c.training);

        let mut rng = stream(1);
        let x = Array3::from_shape_fn((3, 5, 4), |_| rng.random_range(-1.0..1.0));
        let ya = c.model.predict(x.view()).unwrap();
        let yb = back.model.predict(x.view()).unwrap();
        assert_eq!(ya.mapv(f64::to_bits), yb.mapv(f64::to_bits));
    }

    #[test]
    fn awkward_values_round_trip() {
        let mut c = sample();
        let vals = [0.1 + 0.2, 1e-300, -5e-324, 1.0 / 3.0, f64::MAX, -0.0];
        for (v, slot) in vals.iter().zip(c.model.params_mut().w_ih.iter_mut()) {
            *slot = *v;
        }
        let back = load_checkpoint(to_bytes(&c).as_slice()).unwrap();
        for (v, got) in vals.iter().zip(back.model.params().w_ih.iter()) {
            assert_eq!(v.to_bits(), got.to_bits());
        }
    }

    #[test]
    fn rejects_unknown_versions_and_bad_tensors() {
        let c = sample();
        let text = String::from_utf8(to_bytes(&c)).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":2");
        assert!(matches!(load_checkpoint(bumped.as_bytes()), Err(Error::Format(_))));
        let other = text.replace(CHECKPOINT_FORMAT, "something-else");
        assert!(matches!(load_checkpoint(other.as_bytes()), Err(Error::Format(_))));
        let renamed = text.replace("\"fc.w\"", "\"fc.weight\"");
        assert!(load_checkpoint(renamed.as_bytes()).is_err());
        let order = text.replace("i,f,g,o", "i,g,f,o");
        assert!(load_checkpoint(order.as_bytes()).is_err());
        assert!(load_checkpoint(&b"{}"[..]).is_err());
    }

    #[test]
    fn non_finite_weights_are_not_saved() {
        let mut c = sample();
        c.model.params_mut().b[0] = f64::NAN;
        assert!(save_checkpoint(Vec::new(), &c).is_err());
    }

    #[test]
    fn encoder_must_match_model() {
        let model = init_model(ModelConfig::new(4, 3, 2, 5), &mut stream(4)).unwrap();
        assert!(Checkpoint::new(Encoder::new(2), model.clone()).is_err());
        assert!(Checkpoint::new(Encoder { max_steps: 5, ..Encoder::new(3) }, model).is_err());
        let mean = init_model(
            ModelConfig {
                pooling: Pooling::Mean,
                ..ModelConfig::new(4, 3, 2, 5)
            },
            &mut stream(4),
        )
        .unwrap();
        let c = Checkpoint::new(Encoder { max_steps: 5, ..Encoder::new(2) }, mean).unwrap();
        assert_eq!(load_checkpoint(to_bytes(&c).as_slice()).unwrap().model, c.model);
    }
}
