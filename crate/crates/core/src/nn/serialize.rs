//! JSON model container.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so
//! save/load reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ortho::OrthoConfig;

use super::{Activation, DenseMatrix, Model, ModelKind};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: ModelKind,
    activation: Activation,
    readout: bool,
    gin_zeta: f64,
    gcorn: bool,
    ortho: OrthoConfig,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub fn model_to_json(model: &Model) -> Result<String> {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        kind: model.kind,
        activation: model.activation,
        readout: model.readout,
        gin_zeta: model.gin_zeta,
        gcorn: model.gcorn,
        ortho: model.ortho,
        layers: model
            .layers
            .iter()
            .map(|w| LayerFile {
                rows: w.rows(),
                cols: w.cols(),
                data: w.as_slice().to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Unsupported(format!(
            "model format version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let layers = file
        .layers
        .into_iter()
        .map(|l| DenseMatrix::from_vec(l.rows, l.cols, l.data))
        .collect::<Result<Vec<_>>>()?;
    let model = Model {
        kind: file.kind,
        layers,
        activation: file.activation,
        readout: file.readout,
        gcorn: file.gcorn,
        ortho: file.ortho,
        gin_zeta: file.gin_zeta,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
