//! Training checkpoints: the run configuration plus every piece of
//! [`TrainState`], stored in a [`Container`].

use std::path::Path;
use std::sync::Arc;

use jeap_tensor::{DType, Scalar, Tensor};

use super::config::{parse_config, serialize_config, RunConfig};
use super::container::{Container, Payload};
use crate::error::{CoreError, Result};
use crate::model::AgentModel;
use crate::objectives::DinoState;
use crate::params::{ParamSet, ParamSpec};
use crate::train::{AdamState, TrainState};

const GROUPS: [&str; 4] = ["predictor", "observer", "adam_first", "adam_second"];

fn format_err(msg: impl Into<String>) -> CoreError {
    CoreError::Format(msg.into())
}

fn to_payload<T: Scalar>(values: &[T]) -> Payload {
    match T::DTYPE {
        DType::F32 => Payload::F32(values.iter().map(|v| v.as_f64() as f32).collect()),
        DType::F64 => Payload::F64(values.iter().map(|v| v.as_f64()).collect()),
    }
}

fn from_payload<T: Scalar>(name: &str, payload: &Payload) -> Result<Vec<T>> {
    match (payload, T::DTYPE) {
        (Payload::F32(v), DType::F32) => Ok(v.iter().map(|&x| T::lit(x as f64)).collect()),
        (Payload::F64(v), DType::F64) => Ok(v.iter().map(|&x| T::lit(x)).collect()),
        _ => Err(format_err(format!("record `{name}` does not hold {:?} values", T::DTYPE))),
    }
}

fn u64_record(c: &Container, name: &str) -> Result<u64> {
    let bytes = c.bytes(name)?;
    let arr: [u8; 8] = bytes.try_into().map_err(|_| format_err(format!("record `{name}` is not a u64")))?;
    Ok(u64::from_le_bytes(arr))
}

fn push_set<T: Scalar>(c: &mut Container, group: &str, set: &ParamSet<T>) -> Result<()> {
    for (spec, t) in set.specs().iter().zip(set.tensors()) {
        let dims = t.shape().iter().map(|&d| d as u64).collect();
        c.push(format!("{group}/{}", spec.name), dims, to_payload(t.data()))?;
    }
    Ok(())
}

fn read_set<T: Scalar>(c: &Container, group: &str, specs: &Arc<[ParamSpec]>) -> Result<ParamSet<T>> {
    let tensors = specs
        .iter()
        .map(|spec| {
            let name = format!("{group}/{}", spec.name);
            let record = c.require(&name)?;
            let dims: Vec<usize> = record.dims.iter().map(|&d| d as usize).collect();
            if dims != spec.shape {
                return Err(format_err(format!("`{name}`: stored shape {dims:?}, model expects {:?}", spec.shape)));
            }
            Ok(Tensor::new(dims, from_payload(&name, &record.payload)?)?)
        })
        .collect::<Result<Vec<_>>>()?;
    ParamSet::from_tensors(specs.clone(), tensors)
}

pub fn encode_checkpoint<T: Scalar>(config: &RunConfig, state: &TrainState<T>) -> Result<Container> {
    let mut c = Container::new();
    c.push_bytes("config", serialize_config(config).into_bytes())?;
    c.push_bytes("step", state.step.to_le_bytes().to_vec())?;
    c.push_bytes("adam_updates", state.adam.updates.to_le_bytes().to_vec())?;
    c.push("dino_center", vec![state.dino.center.len() as u64], Payload::F64(state.dino.center.clone()))?;
    let sets = [&state.predictor, &state.observer, &state.adam.first, &state.adam.second];
    for (group, set) in GROUPS.iter().zip(sets) {
        push_set(&mut c, group, set)?;
    }
    Ok(c)
}

pub fn decode_checkpoint<T: Scalar>(c: &Container) -> Result<(RunConfig, TrainState<T>)> {
    let text = std::str::from_utf8(c.bytes("config")?).map_err(|_| format_err("config record is not UTF-8"))?;
    let config = parse_config(text)?;
    let model = AgentModel::new(config.train.model.clone())?;
    let specs = model.specs();
    let center = match &c.require("dino_center")?.payload {
        Payload::F64(v) if v.len() == config.train.model.prototypes => v.clone(),
        _ => return Err(format_err("dino_center must hold one f64 per prototype")),
    };
    let mut sets = GROUPS
        .iter()
        .map(|g| read_set::<T>(c, g, &specs))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || sets.next().expect("four parameter groups");
    let (predictor, observer, first, second) = (next(), next(), next(), next());
    let state = TrainState {
        step: u64_record(c, "step")?,
        predictor,
        observer,
        adam: AdamState {
            first,
            second,
            updates: u64_record(c, "adam_updates")?,
        },
        dino: DinoState {
            center,
            config: config.train.dino.clone(),
        },
    };
    Ok((config, state))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, config: &RunConfig, state: &TrainState<T>) -> Result<()> {
    encode_checkpoint(config, state)?.save(path)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(RunConfig, TrainState<T>)> {
    decode_checkpoint(&Container::load(path)?)
}
