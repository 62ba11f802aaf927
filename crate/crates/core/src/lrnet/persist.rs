//! JSON model files: metadata plus row-major nested arrays of f64.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{LrnetModel, LrnetParams, LstmLayerParams, NormalizationSpec, INPUT_SIZE, OUTPUT_SIZE};

pub const SCHEMA_VERSION: u32 = 1;
const FORMAT: &str = "uavbeam-lrnet";
const GATE_ORDER: &str = "input,forget,candidate,output";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    schema_version: u32,
    window_l: usize,
    input_size: usize,
    hidden1: usize,
    hidden2: usize,
    output_size: usize,
    normalization: NormalizationSpec,
    gate_order: String,
    seed: u64,
    params: ParamsFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    w_input: Vec<Vec<f64>>,
    w_hidden: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    layer1: LayerFile,
    layer2: LayerFile,
    fc_weight: Vec<Vec<f64>>,
    fc_bias: Vec<f64>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn matrix(name: &str, data: Vec<Vec<f64>>, shape: (usize, usize)) -> Result<Array2<f64>> {
    if data.len() != shape.0 || data.iter().any(|r| r.len() != shape.1) {
        return Err(Error::Schema(format!(
            "{name}: expected {}x{}, found {} rows",
            shape.0,
            shape.1,
            data.len()
        )));
    }
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec(shape, flat).expect("shape checked"))
}

fn vector(name: &str, data: Vec<f64>, len: usize) -> Result<Array1<f64>> {
    if data.len() != len {
        return Err(Error::Schema(format!(
            "{name}: expected {len} values, found {}",
            data.len()
        )));
    }
    Ok(Array1::from(data))
}

fn layer(name: &str, f: LayerFile, input: usize, hidden: usize) -> Result<LstmLayerParams> {
    Ok(LstmLayerParams {
        w_input: matrix(&format!("{name}.w_input"), f.w_input, (4 * hidden, input))?,
        w_hidden: matrix(&format!("{name}.w_hidden"), f.w_hidden, (4 * hidden, hidden))?,
        bias: vector(&format!("{name}.bias"), f.bias, 4 * hidden)?,
    })
}

pub fn model_to_json(model: &LrnetModel) -> String {
    let (hidden1, hidden2) = model.hidden_sizes();
    let p = &model.params;
    let layer_file = |l: &LstmLayerParams| LayerFile {
        w_input: rows(&l.w_input),
        w_hidden: rows(&l.w_hidden),
        bias: l.bias.to_vec(),
    };
    let file = ModelFile {
        format: FORMAT.into(),
        schema_version: SCHEMA_VERSION,
        window_l: model.window_l,
        input_size: INPUT_SIZE,
        hidden1,
        hidden2,
        output_size: OUTPUT_SIZE,
        normalization: model.norm_spec,
        gate_order: GATE_ORDER.into(),
        seed: model.seed,
        params: ParamsFile {
            layer1: layer_file(&p.layer1),
            layer2: layer_file(&p.layer2),
            fc_weight: rows(&p.fc_weight),
            fc_bias: p.fc_bias.to_vec(),
        },
    };
    serde_json::to_string(&file).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<LrnetModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != FORMAT {
        return Err(Error::Schema(format!("unexpected format tag {:?}", file.format)));
    }
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported schema version {}",
            file.schema_version
        )));
    }
    if file.input_size != INPUT_SIZE || file.output_size != OUTPUT_SIZE {
        return Err(Error::Schema("input and output sizes must both be 2".into()));
    }
    if file.gate_order != GATE_ORDER {
        return Err(Error::Schema(format!("unsupported gate order {:?}", file.gate_order)));
    }
    if file.window_l == 0 || file.hidden1 == 0 || file.hidden2 == 0 {
        return Err(Error::Schema("window length and hidden sizes must be positive".into()));
    }
    let (h1, h2) = (file.hidden1, file.hidden2);
    let p = file.params;
    let params = LrnetParams {
        layer1: layer("layer1", p.layer1, INPUT_SIZE, h1)?,
        layer2: layer("layer2", p.layer2, h1, h2)?,
        fc_weight: matrix("fc_weight", p.fc_weight, (OUTPUT_SIZE, h2))?,
        fc_bias: vector("fc_bias", p.fc_bias, OUTPUT_SIZE)?,
    };
    let model = LrnetModel {
        params,
        window_l: file.window_l,
        norm_spec: file.normalization,
        seed: file.seed,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &LrnetModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !model.params.is_finite() {
        return Err(Error::Numerical("refusing to save non-finite parameters".into()));
    }
    fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LrnetModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrnet::{predict_location, HIDDEN1, HIDDEN2};
    use crate::numerics::RandomSource;
    use crate::scenario::{Location, TrajectoryWindow};

    #[test]
    fn round_trip_is_bit_exact() {
        let model = LrnetModel::reference(20, 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        for (a, b) in model.params.tensors().iter().zip(loaded.params.tensors()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }

        let mut rng = RandomSource::new(6);
        for k in 0..100 {
            let cols = (0..20)
                .map(|_| Location::new(rng.uniform(-50.0, 50.0).unwrap(), rng.uniform(0.0, 80.0).unwrap()))
                .collect();
            let w = TrajectoryWindow::new(cols, k);
            let a = predict_location(&model, &w).unwrap();
            let b = predict_location(&loaded, &w).unwrap();
            assert_eq!((a.x.to_bits(), a.y.to_bits()), (b.x.to_bits(), b.y.to_bits()));
        }
    }

    #[test]
    fn reference_shapes_load() {
        let json = model_to_json(&LrnetModel::reference(20, 1));
        let loaded = model_from_json(&json).unwrap();
        assert_eq!(loaded.hidden_sizes(), (HIDDEN1, HIDDEN2));
        assert_eq!(loaded.window_l, 20);
        assert_eq!(loaded.params.layer2.w_hidden.dim(), (400, 100));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["hidden1"], 50);
        assert_eq!(v["hidden2"], 100);
        assert_eq!(v["normalization"], "anchored-displacement");
        assert_eq!(v["seed"], 1);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let json = model_to_json(&LrnetModel::new(4, 3, 5, 1));
        let err = model_from_json(&json[..json.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn size_mismatch_is_schema_error() {
        let json = model_to_json(&LrnetModel::new(4, 3, 5, 1));
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["hidden2"] = serde_json::json!(6);
        let err = model_from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_model("/nonexistent/model.json"), Err(Error::Io { .. })));
    }
}
