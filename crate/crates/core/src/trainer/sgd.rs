//! Mini-batch SGD with heavy-ball momentum and L2 weight decay.

use crate::diffcore::Gradients;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamKind};

/// Applies one momentum step in place:
/// `v ← momentum·v + grad + weight_decay·param`, `param ← param − lr·v`.
pub fn sgd_step(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let nv = momentum * *v + g + weight_decay * *p;
        let np = *p - lr * nv;
        if !np.is_finite() || !nv.is_finite() {
            return Err(Error::NonFinite { op: "sgd_step".into() });
        }
        *v = nv;
        *p = np;
    }
    Ok(())
}

/// Momentum state for every parameter of a [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Vec<f64>>,
    lr_scale: Vec<f64>,
    decays: Vec<bool>,
}

/// Rate multiplier for newly added layers when φ starts from a checkpoint.
pub const NEW_LAYER_LR_SCALE: f64 = 10.0;

impl Sgd {
    /// Centers never receive weight decay. With `pretrained_embedding`, the
    /// classifier and centers step at [`NEW_LAYER_LR_SCALE`] times the base rate.
    pub fn new(params: &ModelParams, momentum: f64, weight_decay: f64, pretrained_embedding: bool) -> Self {
        let ps = params.params();
        Self {
            momentum,
            weight_decay,
            velocity: ps.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            lr_scale: ps
                .iter()
                .map(|p| match p.kind {
                    ParamKind::Embedding => 1.0,
                    _ if pretrained_embedding => NEW_LAYER_LR_SCALE,
                    _ => 1.0,
                })
                .collect(),
            decays: ps.iter().map(|p| p.kind != ParamKind::Centers).collect(),
        }
    }

    pub fn lr_scale(&self, index: usize) -> f64 {
        self.lr_scale[index]
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
        for (i, p) in params.params_mut().iter_mut().enumerate() {
            let g = grads
                .get(&p.name)
                .ok_or_else(|| Error::MissingInput(format!("gradient for {}", p.name)))?;
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    op: format!("gradient of {}", p.name),
                });
            }
            let wd = if self.decays[i] { self.weight_decay } else { 0.0 };
            sgd_step(
                p.value.data_mut(),
                g.data(),
                &mut self.velocity[i],
                lr * self.lr_scale[i],
                self.momentum,
                wd,
            )?;
        }
        Ok(())
    }

    /// Zeroes the momentum of the cluster centers.
    pub fn reset_centers(&mut self, params: &ModelParams) {
        for (i, p) in params.params().iter().enumerate() {
            if p.kind == ParamKind::Centers {
                self.velocity[i].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}
