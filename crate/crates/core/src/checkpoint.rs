//! Checkpoint files: a flat little-endian `f64` array (`<stem>.params.bin`)
//! next to a JSON shape descriptor (`<stem>.shape.json`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelShape, MtlModel};
use crate::numcore::ParamVector;
use crate::scheduler::{SchedulerNet, SchedulerShape};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor<S> {
    format: String,
    param_count: usize,
    shape: S,
}

const MODEL_FORMAT: &str = "mtl-model/v1";
const SCHEDULER_FORMAT: &str = "scheduler-net/v1";

pub fn params_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.params.bin"))
}

pub fn shape_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.shape.json"))
}

pub fn write_params(path: &Path, params: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = params.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_params(path: &Path) -> Result<ParamVector> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{} bytes is not a whole number of f64 values", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect::<Vec<_>>()
        .into())
}

fn write_descriptor<S: Serialize>(path: &Path, format: &str, param_count: usize, shape: &S) -> Result<()> {
    let d = Descriptor {
        format: format.to_string(),
        param_count,
        shape,
    };
    let text = serde_json::to_string_pretty(&d).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_descriptor<S: DeserializeOwned>(path: &Path, format: &str) -> Result<Descriptor<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: Descriptor<S> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if d.format != format {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected format `{format}`, found `{}`", d.format),
        });
    }
    Ok(d)
}

pub fn save_model(model: &MtlModel, dir: &Path, stem: &str) -> Result<()> {
    write_params(&params_path(dir, stem), model.params())?;
    write_descriptor(&shape_path(dir, stem), MODEL_FORMAT, model.num_params(), model.shape())
}

pub fn load_model(dir: &Path, stem: &str) -> Result<MtlModel> {
    let d: Descriptor<ModelShape> = read_descriptor(&shape_path(dir, stem), MODEL_FORMAT)?;
    let mut model = MtlModel::new(d.shape)?;
    let params = read_params(&params_path(dir, stem))?;
    if params.len() != d.param_count {
        return Err(Error::dim(format!(
            "descriptor declares {} parameters, file holds {}",
            d.param_count,
            params.len()
        )));
    }
    model.set_params(params)?;
    Ok(model)
}

pub fn save_scheduler(net: &SchedulerNet, dir: &Path, stem: &str) -> Result<()> {
    write_params(&params_path(dir, stem), net.params())?;
    write_descriptor(
        &shape_path(dir, stem),
        SCHEDULER_FORMAT,
        net.params().len(),
        net.shape(),
    )
}

pub fn load_scheduler(dir: &Path, stem: &str) -> Result<SchedulerNet> {
    let d: Descriptor<SchedulerShape> = read_descriptor(&shape_path(dir, stem), SCHEDULER_FORMAT)?;
    let mut net = SchedulerNet::zeros(d.shape)?;
    let params = read_params(&params_path(dir, stem))?;
    if params.len() != d.param_count {
        return Err(Error::dim(format!(
            "descriptor declares {} parameters, file holds {}",
            d.param_count,
            params.len()
        )));
    }
    net.set_params(params)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, TaskKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let shape = ModelShape {
            input_dim: 4,
            hidden: vec![3, 2],
            heads: vec![
                TaskKind::Regression { outputs: 1 },
                TaskKind::Classification { classes: 3 },
            ],
            activation: Activation::Tanh,
        };
        let model = MtlModel::new_random(shape, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        save_model(&model, dir.path(), "model").unwrap();
        let back = load_model(dir.path(), "model").unwrap();
        assert_eq!(back, model);
        let bytes = fs::read(params_path(dir.path(), "model")).unwrap();
        assert_eq!(bytes.len(), 8 * model.num_params());
    }

    #[test]
    fn scheduler_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = SchedulerNet::new_random(SchedulerShape::for_tasks(3, 5), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        save_scheduler(&net, dir.path(), "scheduler").unwrap();
        assert_eq!(load_scheduler(dir.path(), "scheduler").unwrap(), net);
        // Wrong descriptor family.
        assert!(load_model(dir.path(), "scheduler").is_err());
    }

    #[test]
    fn truncated_params_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.params.bin");
        fs::write(&p, [0u8; 12]).unwrap();
        assert!(matches!(read_params(&p), Err(Error::Parse { .. })));
    }
}
