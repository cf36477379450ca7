//! Self-describing JSON document carrying scoring-model parameters.
//!
//! Every `f32` is written as its exact `f64` value, so a load after a save
//! reproduces each parameter bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::model::{
    Activation, Architecture, GraphConv, LayerNorm, Linear, Normalization, Pooling, ScoringModel,
};

pub const WEIGHTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDoc {
    pub input_dim: usize,
    pub d_emb: usize,
    pub node_layers: usize,
    pub sg_layers: usize,
    pub sg_hidden: usize,
    pub decoder_layers: usize,
    pub decoder_hidden: usize,
    pub activation: String,
    pub node_pooling: Vec<String>,
    pub sg_pooling: Vec<String>,
    pub knn: usize,
    pub layer_norm: bool,
    pub residual: bool,
    pub dropout: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationDoc {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDoc {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsDoc {
    pub schema_version: u32,
    pub architecture: ArchitectureDoc,
    pub normalization: NormalizationDoc,
    pub tensors: Vec<TensorDoc>,
}

impl From<&Architecture> for ArchitectureDoc {
    fn from(a: &Architecture) -> Self {
        Self {
            input_dim: a.input_dim,
            d_emb: a.d_emb,
            node_layers: a.node_layers,
            sg_layers: a.sg_layers,
            sg_hidden: a.sg_hidden,
            decoder_layers: a.decoder_layers,
            decoder_hidden: a.decoder_hidden,
            activation: a.activation.name().into(),
            node_pooling: a.node_pooling.iter().map(|p| p.name().into()).collect(),
            sg_pooling: a.sg_pooling.iter().map(|p| p.name().into()).collect(),
            knn: a.knn,
            layer_norm: a.layer_norm,
            residual: a.residual,
            dropout: a.dropout,
        }
    }
}

impl ArchitectureDoc {
    pub fn resolve(&self) -> Result<Architecture> {
        let pools = |names: &[String]| names.iter().map(|n| Pooling::from_name(n)).collect::<Result<Vec<_>>>();
        let arch = Architecture {
            input_dim: self.input_dim,
            d_emb: self.d_emb,
            node_layers: self.node_layers,
            sg_layers: self.sg_layers,
            sg_hidden: self.sg_hidden,
            decoder_layers: self.decoder_layers,
            decoder_hidden: self.decoder_hidden,
            activation: Activation::from_name(&self.activation)?,
            node_pooling: pools(&self.node_pooling)?,
            sg_pooling: pools(&self.sg_pooling)?,
            knn: self.knn,
            layer_norm: self.layer_norm,
            residual: self.residual,
            dropout: self.dropout,
        };
        arch.validate()?;
        Ok(arch)
    }
}

pub fn to_doc(model: &ScoringModel) -> WeightsDoc {
    WeightsDoc {
        schema_version: WEIGHTS_SCHEMA_VERSION,
        architecture: (&model.arch).into(),
        normalization: NormalizationDoc {
            mean: model.normalization.mean.clone(),
            std: model.normalization.std.clone(),
        },
        tensors: model
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| TensorDoc {
                name,
                shape,
                data: data.iter().map(|&v| v as f64).collect(),
            })
            .collect(),
    }
}

pub fn save_weights(model: &ScoringModel) -> String {
    serde_json::to_string(&to_doc(model)).expect("weights document serializes")
}

pub fn load_weights(text: &str) -> Result<ScoringModel> {
    let doc: WeightsDoc =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("weights document: {e}")))?;
    from_doc(&doc)
}

pub fn from_doc(doc: &WeightsDoc) -> Result<ScoringModel> {
    if doc.schema_version != WEIGHTS_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema_version {} (expected {WEIGHTS_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    let arch = doc.architecture.resolve()?;
    let norm = &doc.normalization;
    if norm.mean.len() != arch.input_dim || norm.std.len() != arch.input_dim {
        return Err(Error::Shape {
            name: "normalization".into(),
            declared: vec![arch.input_dim],
            expected: vec![arch.input_dim],
            found: norm.mean.len().min(norm.std.len()),
        });
    }
    if norm.std.iter().any(|&s| !(s.is_finite() && s != 0.0)) {
        return Err(Error::Format("normalization std must be finite and nonzero".into()));
    }

    let mut model = skeleton(arch);
    model.normalization = Normalization {
        mean: norm.mean.clone(),
        std: norm.std.clone(),
    };
    let expected: Vec<(String, Vec<usize>)> =
        model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    if doc.tensors.len() != expected.len() {
        return Err(Error::Format(format!(
            "expected {} tensors, found {}",
            expected.len(),
            doc.tensors.len()
        )));
    }
    for ((name, shape), (t, slot)) in expected
        .iter()
        .zip(doc.tensors.iter().zip(model.tensors_mut()))
    {
        if &t.name != name {
            return Err(Error::Format(format!("expected tensor `{name}`, found `{}`", t.name)));
        }
        let declared: usize = t.shape.iter().product();
        if &t.shape != shape || declared != t.data.len() {
            return Err(Error::Shape {
                name: name.clone(),
                declared: t.shape.clone(),
                expected: shape.clone(),
                found: t.data.len(),
            });
        }
        *slot = t.data.iter().map(|&v| v as f32).collect();
    }
    model.check_finite()?;
    Ok(model)
}

fn skeleton(arch: Architecture) -> ScoringModel {
    let d = arch.d_emb;
    let mut sg = Vec::new();
    let mut sg_norms = Vec::new();
    let mut in_dim = d;
    for _ in 0..arch.sg_layers {
        sg.push(Linear::zeros(in_dim, arch.sg_hidden));
        sg_norms.push(LayerNorm::new(arch.sg_hidden));
        in_dim = arch.sg_hidden;
    }
    let mut decoder = Vec::new();
    let mut decoder_norms = Vec::new();
    let mut in_dim = arch.decoder_in_dim();
    for l in 0..arch.decoder_layers {
        let last = l + 1 == arch.decoder_layers;
        let out = if last { 1 } else { arch.decoder_hidden };
        decoder.push(Linear::zeros(in_dim, out));
        if !last {
            decoder_norms.push(LayerNorm::new(out));
        }
        in_dim = out;
    }
    ScoringModel {
        normalization: Normalization::identity(arch.input_dim),
        input: Linear::zeros(arch.input_dim, d),
        convs: (0..arch.node_layers)
            .map(|_| GraphConv {
                root: Linear::zeros(d, d),
                rel: Linear::zeros(d, d),
                norm: LayerNorm::new(d),
            })
            .collect(),
        sg,
        sg_norms,
        decoder,
        decoder_norms,
        arch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScoringModel {
        let arch = Architecture {
            d_emb: 8,
            sg_hidden: 8,
            decoder_hidden: 16,
            ..Architecture::default()
        };
        ScoringModel::random(arch, 42).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut m = small();
        m.normalization.mean = vec![0.1, 0.2, 0.3];
        m.normalization.std = vec![0.7, 1.0 / 3.0, 2.5];
        let back = load_weights(&save_weights(&m)).unwrap();
        for ((_, _, a), (_, _, b)) in m.tensors().into_iter().zip(back.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, m);
    }

    #[test]
    fn default_architecture_round_trips() {
        let m = ScoringModel::random(Architecture::default(), 1).unwrap();
        assert_eq!(load_weights(&save_weights(&m)).unwrap(), m);
    }

    #[test]
    fn truncated_array_is_shape_error() {
        let mut doc = to_doc(&small());
        doc.tensors[3].data.pop();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(load_weights(&text), Err(Error::Shape { .. })));
    }

    #[test]
    fn unknown_names_are_format_errors() {
        let mut doc = to_doc(&small());
        doc.architecture.node_pooling[1] = "median".into();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(load_weights(&text), Err(Error::Format(_))));

        let mut doc = to_doc(&small());
        doc.architecture.activation = "gelu".into();
        assert!(matches!(from_doc(&doc), Err(Error::Format(_))));

        let mut doc = to_doc(&small());
        doc.schema_version = 99;
        assert!(matches!(from_doc(&doc), Err(Error::Format(_))));
        assert!(load_weights("{").is_err());
    }
}
