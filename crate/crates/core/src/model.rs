//! Recurrent GNN models and their on-disk format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::layer::{AcLayer, Classifier, ClassifierDoc, Init, InitDoc, LayerDoc, Registry};
use crate::rational::{RVector, Rational};

/// An RGNN `(In, L, Out)` of dimension `d` over labels of dimension `input_dim`.
#[derive(Clone, Debug)]
pub struct Rgnn {
    input_dim: usize,
    init: Init,
    layer: AcLayer,
    readout: Classifier,
}

impl Rgnn {
    pub fn new(input_dim: usize, init: Init, layer: AcLayer, readout: Classifier) -> Result<Self> {
        let d = layer.in_dim();
        if layer.out_dim() != d {
            return Err(Error::InvalidModel(format!(
                "recurrent layer maps dimension {d} to {}",
                layer.out_dim()
            )));
        }
        if let Init::Simple(f) = &init {
            dims(input_dim, f.input_dim(), "initialisation input")?;
            dims(d, f.output_dim(), "initialisation output")?;
        }
        if let Classifier::Simple(c) = &readout {
            dims(d, c.function().input_dim(), "readout input")?;
        }
        Ok(Rgnn {
            input_dim,
            init,
            layer,
            readout,
        })
    }

    pub fn dim(&self) -> usize {
        self.layer.in_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn init(&self) -> &Init {
        &self.init
    }

    pub fn layer(&self) -> &AcLayer {
        &self.layer
    }

    pub fn readout(&self) -> &Classifier {
        &self.readout
    }

    pub fn initial_features(&self, label: &RVector) -> Result<RVector> {
        dims(self.input_dim, label.dim(), "label")?;
        let x = self.init.apply(label)?;
        dims(self.dim(), x.dim(), "initial feature")?;
        Ok(x)
    }

    /// Simple layer, simple readout and simple initialisation.
    pub fn is_simple(&self) -> bool {
        self.layer.is_simple() && self.readout.is_simple() && self.init.is_simple()
    }
}

fn dims(expected: usize, found: usize, what: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!(
            "{what} has dimension {found}, expected {expected}"
        )))
    }
}

/// A halting RGNN `(R, Hlt)`.
#[derive(Clone, Debug)]
pub struct HaltingRgnn {
    base: Rgnn,
    halt: Classifier,
}

impl HaltingRgnn {
    pub fn new(base: Rgnn, halt: Classifier) -> Result<Self> {
        if let Classifier::Simple(c) = &halt {
            dims(base.dim(), c.function().input_dim(), "halting classifier input")?;
        }
        Ok(HaltingRgnn { base, halt })
    }

    pub fn base(&self) -> &Rgnn {
        &self.base
    }

    pub fn halt(&self) -> &Classifier {
        &self.halt
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn is_simple(&self) -> bool {
        self.base.is_simple() && self.halt.is_simple()
    }
}

#[derive(Clone, Debug)]
pub enum Model {
    Rgnn(Rgnn),
    Halting(HaltingRgnn),
}

impl Model {
    pub fn base(&self) -> &Rgnn {
        match self {
            Model::Rgnn(r) => r,
            Model::Halting(h) => h.base(),
        }
    }

    pub fn is_simple(&self) -> bool {
        match self {
            Model::Rgnn(r) => r.is_simple(),
            Model::Halting(h) => h.is_simple(),
        }
    }

    pub fn as_halting(&self) -> Option<&HaltingRgnn> {
        match self {
            Model::Halting(h) => Some(h),
            Model::Rgnn(_) => None,
        }
    }
}

impl From<Rgnn> for Model {
    fn from(r: Rgnn) -> Self {
        Model::Rgnn(r)
    }
}

impl From<HaltingRgnn> for Model {
    fn from(h: HaltingRgnn) -> Self {
        Model::Halting(h)
    }
}

/// Where a derived model came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// `c2h` or `h2c`.
    pub transform: String,
    /// `general` or `simple`.
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<Rational>,
    pub source_sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rgnn,
    Halting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub input_dim: usize,
    pub dim: usize,
    pub init: InitDoc,
    pub layer: LayerDoc,
    pub readout: ClassifierDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halt: Option<ClassifierDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// A model plus the metadata carried in its file.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub model: Model,
    pub name: Option<String>,
    pub description: Option<String>,
    pub provenance: Option<Provenance>,
}

impl ModelFile {
    pub fn new(model: impl Into<Model>) -> Self {
        ModelFile {
            model: model.into(),
            name: None,
            description: None,
            provenance: None,
        }
    }

    pub fn named(mut self, name: &str, description: &str) -> Self {
        self.name = Some(name.to_string());
        self.description = Some(description.to_string());
        self
    }

    pub fn to_doc(&self) -> ModelDoc {
        let base = self.model.base();
        ModelDoc {
            kind: match self.model {
                Model::Rgnn(_) => ModelKind::Rgnn,
                Model::Halting(_) => ModelKind::Halting,
            },
            name: self.name.clone(),
            description: self.description.clone(),
            input_dim: base.input_dim(),
            dim: base.dim(),
            init: base.init().to_doc(),
            layer: base.layer().to_doc(),
            readout: base.readout().to_doc(),
            halt: self.model.as_halting().map(|h| h.halt().to_doc()),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_doc(doc: &ModelDoc, reg: &Registry) -> Result<Self> {
        let layer = AcLayer::from_doc(&doc.layer, reg)?;
        if layer.in_dim() != doc.dim {
            return Err(Error::InvalidModel(format!(
                "declared dim {} but layer has {}",
                doc.dim,
                layer.in_dim()
            )));
        }
        let base = Rgnn::new(
            doc.input_dim,
            Init::from_doc(&doc.init, reg)?,
            layer,
            Classifier::from_doc(&doc.readout, reg)?,
        )?;
        let model = match (doc.kind, &doc.halt) {
            (ModelKind::Rgnn, None) => Model::Rgnn(base),
            (ModelKind::Halting, Some(h)) => {
                Model::Halting(HaltingRgnn::new(base, Classifier::from_doc(h, reg)?)?)
            }
            (ModelKind::Rgnn, Some(_)) => {
                return Err(Error::InvalidModel("plain RGNN has a halting classifier".into()))
            }
            (ModelKind::Halting, None) => {
                return Err(Error::InvalidModel("halting RGNN lacks a halting classifier".into()))
            }
        };
        Ok(ModelFile {
            model,
            name: doc.name.clone(),
            description: doc.description.clone(),
            provenance: doc.provenance.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("model serialisation")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model serialisation")
    }

    pub fn from_json(s: &str, reg: &Registry) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        ModelFile::from_doc(&doc, reg)
    }

    pub fn load(path: &Path, reg: &Registry) -> Result<Self> {
        ModelFile::from_json(&std::fs::read_to_string(path)?, reg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_pretty() + "\n")?;
        Ok(())
    }
}

/// SHA-256 of the canonical JSON of a model (metadata excluded).
pub fn model_hash(model: &Model) -> String {
    let doc = ModelFile::new(model.clone()).to_doc();
    hex::encode(Sha256::digest(serde_json::to_vec(&doc).expect("model serialisation")))
}

/// Structural check on a serialised model: only affine maps, ReLU markers and
/// summation may appear. Returns the offending JSON path on failure.
pub fn validate_simple_json(doc: &Value) -> std::result::Result<(), String> {
    let obj = doc.as_object().ok_or("model is not a JSON object")?;
    let layer = obj.get("layer").ok_or("missing layer")?;
    if layer.get("aggregation") != Some(&Value::String("sum".into())) {
        return Err("layer.aggregation is not \"sum\"".into());
    }
    let comb = layer.get("combination").ok_or("missing layer.combination")?;
    check_network_holder(comb, "layer.combination")?;
    check_network_holder(obj.get("init").ok_or("missing init")?, "init")?;
    check_network_holder(obj.get("readout").ok_or("missing readout")?, "readout")?;
    if let Some(h) = obj.get("halt") {
        check_network_holder(h, "halt")?;
    }
    Ok(())
}

fn check_network_holder(v: &Value, path: &str) -> std::result::Result<(), String> {
    let obj = v.as_object().ok_or_else(|| format!("{path} is not an object"))?;
    if obj.len() != 1 || !obj.contains_key("network") {
        return Err(format!("{path} is not a plain network"));
    }
    let layers = obj["network"]
        .get("layers")
        .and_then(Value::as_array)
        .ok_or_else(|| format!("{path}.network.layers missing"))?;
    for (i, layer) in layers.iter().enumerate() {
        let ok = match layer {
            Value::String(s) => s == "relu",
            Value::Object(o) => o.len() == 1 && o.contains_key("affine"),
            _ => false,
        };
        if !ok {
            return Err(format!("{path}.network.layers[{i}] is neither affine nor relu"));
        }
    }
    Ok(())
}

/// Serialises `model` and runs [`validate_simple_json`] on the result.
pub fn validate_simple(model: &Model) -> std::result::Result<(), String> {
    let v = serde_json::to_value(ModelFile::new(model.clone()).to_doc()).map_err(|e| e.to_string())?;
    validate_simple_json(&v)
}
