use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ParamId, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Clamp every gradient element to `[-clip, clip]`.
    #[default]
    Elementwise,
    /// Rescale the whole gradient so its L2 norm is at most `clip`.
    GlobalNorm,
}

/// Plain SGD with gradient clipping.
///
/// Only parameters for which `trainable` returns true are touched. A
/// non-finite gradient aborts the step before any parameter changes.
pub fn sgd_step(
    params: &mut ParamSet,
    grads: &ParamGrads,
    lr: f64,
    clip: f64,
    mode: ClipMode,
    trainable: impl Fn(ParamId) -> bool,
) -> Result<()> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::invalid(format!("learning rate {lr} must be >= 0")));
    }
    if !(clip > 0.0) {
        return Err(Error::invalid(format!("clip {clip} must be > 0")));
    }
    let ids: Vec<ParamId> = params.ids().filter(|&id| trainable(id)).collect();
    if ids.iter().any(|&id| grads.get(id).iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFinite("gradient; step skipped".into()));
    }
    let norm_scale = match mode {
        ClipMode::Elementwise => 1.0,
        ClipMode::GlobalNorm => {
            let norm = ids
                .iter()
                .flat_map(|&id| grads.get(id))
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > clip {
                clip / norm
            } else {
                1.0
            }
        }
    };
    for id in ids {
        let g = grads.get(id);
        let p = &mut params.get_mut(id).data;
        for (w, &gi) in p.iter_mut().zip(g) {
            let step = match mode {
                ClipMode::Elementwise => gi.clamp(-clip, clip),
                ClipMode::GlobalNorm => gi * norm_scale,
            };
            *w -= lr * step;
        }
    }
    Ok(())
}
