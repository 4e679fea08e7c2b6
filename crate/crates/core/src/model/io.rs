//! JSON document format for [`ModelParams`].

use serde::{Deserialize, Serialize};

use super::{Activation, Dims, ModelParams, VectorFieldParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const FORMAT: &str = "ncde-model-params/1";
/// Tag naming how the last layer's output is reshaped to `p × d`.
pub const FLATTENING: &str = "row-major-p-by-d";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Layer {
    weight: Matrix,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    dims: Dims,
    activation: Activation,
    flattening: String,
    phi: Vec<f64>,
    layers: Vec<Layer>,
    init_weight: Matrix,
    init_bias: Vec<f64>,
}

impl Serialize for ModelParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let doc = Document {
            format: FORMAT.into(),
            dims: self.dims(),
            activation: self.activation,
            flattening: FLATTENING.into(),
            phi: self.phi.clone(),
            layers: self
                .vf
                .weights
                .iter()
                .zip(&self.vf.biases)
                .map(|(w, b)| Layer {
                    weight: w.clone(),
                    bias: b.clone(),
                })
                .collect(),
            init_weight: self.init_weight.clone(),
            init_bias: self.init_bias.clone(),
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let doc = Document::deserialize(de)?;
        from_document(doc).map_err(serde::de::Error::custom)
    }
}

fn from_document(doc: Document) -> Result<ModelParams> {
    if doc.format != FORMAT {
        return Err(Error::validation(format!(
            "unsupported model format {:?}, expected {FORMAT:?}",
            doc.format
        )));
    }
    if doc.flattening != FLATTENING {
        return Err(Error::validation(format!(
            "unsupported flattening {:?}",
            doc.flattening
        )));
    }
    let (weights, biases) = doc.layers.into_iter().map(|l| (l.weight, l.bias)).unzip();
    let params = ModelParams {
        phi: doc.phi,
        vf: VectorFieldParams {
            weights,
            biases,
            d: doc.dims.d,
        },
        init_weight: doc.init_weight,
        init_bias: doc.init_bias,
        activation: doc.activation,
    };
    params.validate()?;
    if params.dims() != doc.dims {
        return Err(Error::validation(format!(
            "declared dims {:?} do not match arrays {:?}",
            doc.dims,
            params.dims()
        )));
    }
    Ok(params)
}

impl ModelParams {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn json_roundtrip_is_exact() {
        let mut rng = stream_rng(8, 0);
        let m = ModelParams::gaussian(Dims::new(2, 3, 4).unwrap(), Activation::Tanh, &mut rng);
        let text = m.to_json().unwrap();
        assert!(text.contains(FLATTENING));
        assert_eq!(ModelParams::from_json(&text).unwrap(), m);
    }

    #[test]
    fn rejects_inconsistent_dims() {
        let m = ModelParams::zeros(Dims::new(1, 2, 2).unwrap(), Activation::Identity);
        let text = m.to_json().unwrap().replace("\"d\": 2", "\"d\": 3");
        assert!(ModelParams::from_json(&text).is_err());
    }
}
