//! Finite-difference check of the full training objective on a tiny model.

use jeap_tensor::gradcheck::relative_error;
use jeap_tensor::{Graph, Tensor};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::model::AgentModel;
use crate::objectives::DinoState;
use crate::rng::{stream_rng, Stream};
use crate::train::{loss_graph, teacher_targets, Batch, TrainConfig};
use crate::world::clips::training_clips;

/// Tensors up to this size are probed at every coordinate.
const FULL_PROBE: usize = 64;

#[derive(Clone, Debug)]
pub struct LossCheck {
    /// Relative error over every probed coordinate of every parameter.
    pub rel_err: f64,
    /// Largest per-tensor relative error and its parameter name.
    pub worst: (String, f64),
    pub probed: usize,
    pub params: usize,
}

/// Smallest configuration exercising every loss term: one layer of width 16,
/// eight prototypes, two steps per clip, one local crop.
pub fn tiny_config(seed: u64) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    cfg.model = crate::model::ModelConfig::tiny();
    cfg.world.view.image_size = cfg.model.image_size;
    cfg.world.clip_frames = 2 * cfg.world.pose_frames;
    cfg.optim.batch_size = 2;
    cfg.crops.n_local = 1;
    cfg.validate()?;
    Ok(cfg)
}

/// Compares the tape gradient of the weighted objective with central
/// differences at step `eps` in 64-bit arithmetic. Small tensors are probed
/// everywhere, larger ones at `probes` random coordinates each.
pub fn full_loss_check(seed: u64, eps: f64, probes: usize) -> Result<LossCheck> {
    let cfg = tiny_config(seed)?;
    let model = AgentModel::new(cfg.model.clone())?;
    let mut rng = stream_rng(seed, Stream::Oracle, 0);
    let predictor = model.init_params::<f64, _>(&mut rng);
    // A distinct observer and a non-trivial centre make the targets informative.
    let observer = model.init_params::<f64, _>(&mut rng);
    let mut dino = DinoState::new(cfg.model.prototypes, cfg.dino.clone())?;
    dino.center.iter_mut().for_each(|c| *c = rng.gen_range(-0.1..0.1));

    let clips = training_clips(&cfg.world, seed, 0, cfg.optim.batch_size)?;
    let batch = Batch::from_clips(&cfg, clips, &mut rng, seed)?;
    let teacher = teacher_targets(&model, &observer, &batch, cfg.crops.n_global)?;

    let mut g = Graph::new();
    let vars = predictor.bind(&mut g, true)?;
    let losses = loss_graph(&model, &mut g, &vars, &batch, &teacher, &dino, &cfg)?;
    g.backward(losses.total)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(predictor.tensors())
        .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        .collect();
    drop(g);

    let loss_at = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut h = Graph::new();
        let vs = tensors.iter().map(|t| h.constant(t.clone())).collect::<jeap_tensor::Result<Vec<_>>>()?;
        let l = loss_graph(&model, &mut h, &vs, &batch, &teacher, &dino, &cfg)?;
        Ok(h.value(l.total).item()?)
    };

    let mut probe = predictor.tensors().to_vec();
    let (mut all_a, mut all_n) = (Vec::new(), Vec::new());
    let mut worst = (String::new(), 0.0);
    for (slot, spec) in predictor.specs().iter().enumerate() {
        let n = spec.numel();
        let coords: Vec<usize> = if n <= FULL_PROBE { (0..n).collect() } else { sample(&mut rng, n, probes.min(n)).into_vec() };
        let (mut a, mut num) = (Vec::with_capacity(coords.len()), Vec::with_capacity(coords.len()));
        for &i in &coords {
            let orig = probe[slot].data()[i];
            probe[slot].data_mut()[i] = orig + eps;
            let plus = loss_at(&probe)?;
            probe[slot].data_mut()[i] = orig - eps;
            let minus = loss_at(&probe)?;
            probe[slot].data_mut()[i] = orig;
            a.push(analytic[slot].data()[i]);
            num.push((plus - minus) / (2.0 * eps));
        }
        let err = relative_error(&Tensor::new([a.len()], a.clone())?, &Tensor::new([num.len()], num.clone())?);
        if err > worst.1 {
            worst = (spec.name.clone(), err);
        }
        all_a.extend(a);
        all_n.extend(num);
    }
    let probed = all_a.len();
    let rel_err = relative_error(&Tensor::new([probed], all_a)?, &Tensor::new([probed], all_n)?);
    Ok(LossCheck {
        rel_err,
        worst,
        probed,
        params: predictor.numel(),
    })
}
