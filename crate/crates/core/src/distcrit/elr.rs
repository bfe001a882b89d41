use crate::error::{Result, XqcError};

/// Gradient and parameter norm of one projected layer at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerUpdate {
    pub layer: String,
    pub grad_norm: f64,
    pub param_norm: f64,
}

/// What the trainer records for one critic step of the window.
#[derive(Clone, Debug, PartialEq)]
pub struct ElrStep {
    pub lr: f64,
    pub layers: Vec<LayerUpdate>,
    /// Largest per-sample `‖Δf‖ / ‖Δθ‖` over a fixed probe batch for this step.
    pub lipschitz_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElrReport {
    pub steps: usize,
    /// `max η‖∇_layer ℓ‖ / ‖θ_layer‖` over steps and layers.
    pub max_effective_update: f64,
    pub argmax_layer: String,
    /// Empirical Lipschitz estimate `L̂_f`.
    pub lipschitz_estimate: f64,
    /// `η_max · √2 · L̂_f / C` with `C = 1`.
    pub bound: f64,
    pub holds: bool,
    /// Largest `|‖θ_layer‖ − 1|` seen in the window.
    pub max_norm_deviation: f64,
}

/// Summarize a window of steps against the bounded-update inequality. The
/// Lipschitz constant is only estimated, so the verdict is informational.
pub fn certify_elr_bound(window: &[ElrStep], projection_enabled: bool, categorical: bool) -> Result<ElrReport> {
    if !projection_enabled {
        return Err(XqcError::Refused(
            "effective-update bound needs weight projection (constant parameter norm)".into(),
        ));
    }
    if !categorical {
        return Err(XqcError::Refused(
            "effective-update bound needs the cross-entropy critic".into(),
        ));
    }
    let mut max_eff = 0.0f64;
    let mut arg = String::new();
    let mut lip = 0.0f64;
    let mut lr_max = 0.0f64;
    let mut dev = 0.0f64;
    for st in window {
        lr_max = lr_max.max(st.lr);
        if st.lipschitz_ratio.is_finite() {
            lip = lip.max(st.lipschitz_ratio);
        }
        for l in &st.layers {
            dev = dev.max((l.param_norm - 1.0).abs());
            let eff = if st.lr == 0.0 {
                0.0
            } else {
                st.lr * l.grad_norm / l.param_norm
            };
            if eff > max_eff || arg.is_empty() {
                max_eff = eff;
                arg = l.layer.clone();
            }
        }
    }
    let bound = lr_max * std::f64::consts::SQRT_2 * lip;
    Ok(ElrReport {
        steps: window.len(),
        max_effective_update: max_eff,
        argmax_layer: arg,
        lipschitz_estimate: lip,
        bound,
        holds: max_eff <= bound,
        max_norm_deviation: dev,
    })
}
