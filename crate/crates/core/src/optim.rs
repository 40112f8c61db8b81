//! SGD, AdamW and the sharpness-aware (SAM) two-pass wrapper.
//!
//! Each optimizer step is charged against a pass budget: a base optimizer
//! step costs one forward-backward pass, a SAM step costs two (one at the
//! current weights to find the ascent direction, one at the perturbed
//! weights to get the update gradient).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backward, Batch, Gradient, ModelSpec, ParamVector};

/// Something that yields a loss and gradient at a parameter point.
pub trait Objective {
    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, Gradient)>;
}

/// Network loss on one fixed batch.
pub struct BatchObjective<'a> {
    pub spec: &'a ModelSpec,
    pub batch: &'a Batch,
}

impl Objective for BatchObjective<'_> {
    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, Gradient)> {
        backward(params, self.spec, self.batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { lr: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid AdamW config {self:?}")))
        }
    }
}

/// An optimizer that consumes one gradient per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseOptimizer {
    Sgd(SgdConfig),
    #[serde(rename = "adamw")]
    AdamW(AdamWConfig),
}

impl BaseOptimizer {
    pub fn name(&self) -> &'static str {
        match self {
            BaseOptimizer::Sgd(_) => "sgd",
            BaseOptimizer::AdamW(_) => "adamw",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BaseOptimizer::Sgd(c) if !(c.lr > 0.0) => {
                Err(Error::Config(format!("SGD learning rate must be positive, got {}", c.lr)))
            }
            BaseOptimizer::Sgd(_) => Ok(()),
            BaseOptimizer::AdamW(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamConfig {
    /// Radius of the adversarial weight perturbation.
    pub rho: f64,
    pub base: BaseOptimizer,
    /// Gradients with norm at or below this skip the perturbation.
    pub grad_norm_floor: f64,
}

impl SamConfig {
    pub fn new(rho: f64, base: BaseOptimizer) -> Self {
        Self {
            rho,
            base,
            grad_norm_floor: 1e-12,
        }
    }
}

impl Default for SamConfig {
    fn default() -> Self {
        Self::new(2.0, BaseOptimizer::AdamW(AdamWConfig::default()))
    }
}

/// Either a base optimizer or SAM wrapping one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerConfig {
    Base(BaseOptimizer),
    Sam(SamConfig),
}

impl OptimizerConfig {
    /// Forward-backward passes consumed by one step.
    pub fn passes_per_step(&self) -> u64 {
        match self {
            OptimizerConfig::Base(_) => 1,
            OptimizerConfig::Sam(_) => 2,
        }
    }

    pub fn is_sam(&self) -> bool {
        matches!(self, OptimizerConfig::Sam(_))
    }

    /// Short label such as `adamw` or `sam-adamw`.
    pub fn label(&self) -> String {
        match self {
            OptimizerConfig::Base(b) => b.name().to_string(),
            OptimizerConfig::Sam(s) => format!("sam-{}", s.base.name()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Base(b) => b.validate(),
            OptimizerConfig::Sam(s) => {
                if !(s.rho >= 0.0) || !s.rho.is_finite() {
                    return Err(Error::Config(format!("rho must be finite and >= 0, got {}", s.rho)));
                }
                if !(s.grad_norm_floor > 0.0) {
                    return Err(Error::Config(format!(
                        "grad_norm_floor must be positive, got {}",
                        s.grad_norm_floor
                    )));
                }
                s.base.validate()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step_count: u64,
    /// Empty until the first AdamW step.
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub passes_used: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// `params - lr * grad`.
pub fn sgd_step(params: &ParamVector, grad: &Gradient, lr: f64) -> Result<ParamVector> {
    if params.len() != grad.len() {
        return Err(Error::dim("gradient length", params.len(), grad.len()));
    }
    Ok(ParamVector::new(
        params.iter().zip(grad.iter()).map(|(p, g)| p - lr * g).collect(),
    ))
}

/// One decoupled-weight-decay Adam update in place.
///
/// Decay is applied multiplicatively, `p *= 1 - lr * weight_decay`, before the
/// moment-based step.
pub fn adamw_step(params: &mut ParamVector, grad: &Gradient, state: &mut OptimizerState, cfg: &AdamWConfig) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::dim("gradient length", params.len(), grad.len()));
    }
    if state.first_moment.is_empty() {
        state.first_moment = vec![0.0; params.len()];
        state.second_moment = vec![0.0; params.len()];
    } else if state.first_moment.len() != params.len() {
        return Err(Error::dim("optimizer moment length", params.len(), state.first_moment.len()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grad.iter())
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p = *p * decay - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

fn apply_base(base: &BaseOptimizer, params: &mut ParamVector, grad: &Gradient, state: &mut OptimizerState) -> Result<()> {
    match base {
        BaseOptimizer::Sgd(c) => {
            *params = sgd_step(params, grad, c.lr)?;
            state.step_count += 1;
            Ok(())
        }
        BaseOptimizer::AdamW(c) => adamw_step(params, grad, state, c),
    }
}

/// `rho * grad / ||grad||`, or `None` when the norm is at or below `floor`
/// (and always when `rho == 0`).
pub fn sam_perturbation(grad: &Gradient, rho: f64, floor: f64) -> Option<Vec<f64>> {
    let norm = grad.norm();
    if rho == 0.0 || norm <= floor {
        return None;
    }
    let scale = rho / norm;
    Some(grad.iter().map(|g| g * scale).collect())
}

/// Same as [`sam_perturbation`] but always returns a vector, zero when skipped.
pub fn sam_epsilon(grad: &Gradient, rho: f64, floor: f64) -> Vec<f64> {
    sam_perturbation(grad, rho, floor).unwrap_or_else(|| vec![0.0; grad.len()])
}

/// The two SAM gradient evaluations. Returns the loss at the current weights
/// and the gradient at the perturbed weights.
pub fn sam_gradient<O: Objective + ?Sized>(params: &ParamVector, objective: &O, cfg: &SamConfig) -> Result<(f64, Gradient)> {
    let (loss, first) = objective.loss_and_grad(params)?;
    let perturbed = match sam_perturbation(&first, cfg.rho, cfg.grad_norm_floor) {
        Some(eps) => params.offset(&eps, 1.0),
        None => params.clone(),
    };
    let (_, second) = objective.loss_and_grad(&perturbed)?;
    Ok((loss, second))
}

/// One SAM step: ascend to `w + eps` on the given objective, take the gradient
/// there, and apply the base update to the original `w`.
pub fn sam_step<O: Objective + ?Sized>(params: &mut ParamVector, objective: &O, cfg: &SamConfig, state: &mut OptimizerState) -> Result<f64> {
    let (loss, grad) = sam_gradient(params, objective, cfg)?;
    apply_base(&cfg.base, params, &grad, state)?;
    state.passes_used += 2;
    Ok(loss)
}

/// One step of any configured optimizer. Returns the loss at the
/// pre-step weights.
pub fn optimizer_step<O: Objective + ?Sized>(params: &mut ParamVector, objective: &O, cfg: &OptimizerConfig, state: &mut OptimizerState) -> Result<f64> {
    match cfg {
        OptimizerConfig::Base(base) => {
            let (loss, grad) = objective.loss_and_grad(params)?;
            apply_base(base, params, &grad, state)?;
            state.passes_used += 1;
            Ok(loss)
        }
        OptimizerConfig::Sam(sam) => sam_step(params, objective, sam, state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    /// f(w) = 0.5 * scale * ||w||^2, counting gradient evaluations.
    struct Quadratic {
        scale: f64,
        calls: Cell<usize>,
    }

    impl Quadratic {
        fn new(scale: f64) -> Self {
            Self { scale, calls: Cell::new(0) }
        }
    }

    impl Objective for Quadratic {
        fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, Gradient)> {
            self.calls.set(self.calls.get() + 1);
            let loss = 0.5 * self.scale * params.iter().map(|w| w * w).sum::<f64>();
            Ok((loss, Gradient::new(params.iter().map(|w| self.scale * w).collect())))
        }
    }

    #[test]
    fn sgd_by_hand() {
        let p = ParamVector::new(vec![1.0, 1.0]);
        let g = Gradient::new(vec![2.0, -4.0]);
        assert_eq!(&sgd_step(&p, &g, 0.5).unwrap()[..], &[0.0, 3.0]);
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
    }

    #[test]
    fn sgd_is_linear_in_gradient() {
        let p = ParamVector::new(vec![0.5, -2.0, 3.0]);
        let g1 = Gradient::new(vec![1.0, 0.25, -2.0]);
        let g2 = Gradient::new(vec![-0.5, 4.0, 1.0]);
        let sum = Gradient::new(g1.iter().zip(g2.iter()).map(|(a, b)| a + b).collect());
        let lr = 0.125;
        let combined = sgd_step(&p, &sum, lr).unwrap();
        for i in 0..3 {
            let expected = p[i] - lr * g1[i] - lr * g2[i];
            assert!((combined[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adamw_zero_grad_without_decay_is_identity() {
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut p = ParamVector::new(vec![1.5, -0.25]);
        let before = p.clone();
        let mut state = OptimizerState::new();
        adamw_step(&mut p, &Gradient::zeros(2), &mut state, &cfg).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn adamw_pure_decay_factor() {
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() };
        let mut p = ParamVector::new(vec![2.0, -3.0, 0.7]);
        let before = p.clone();
        let mut state = OptimizerState::new();
        adamw_step(&mut p, &Gradient::zeros(3), &mut state, &cfg).unwrap();
        let factor = 1.0 - cfg.lr * cfg.weight_decay;
        for (a, b) in p.iter().zip(before.iter()) {
            assert_eq!(*a, b * factor);
        }
    }

    #[test]
    fn adamw_first_step_moves_by_lr_against_sign() {
        let cfg = AdamWConfig { lr: 1e-3, weight_decay: 0.0, ..Default::default() };
        let g = vec![0.3, -2.0, 50.0];
        let mut p = ParamVector::zeros(3);
        let mut state = OptimizerState::new();
        adamw_step(&mut p, &Gradient::new(g.clone()), &mut state, &cfg).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            let expected = -cfg.lr * gi.signum() / (1.0 + cfg.eps / gi.abs());
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
        }
    }

    #[test]
    fn perturbation_has_radius_rho() {
        let eps = sam_epsilon(&Gradient::new(vec![3.0, 4.0]), 2.0, 1e-12);
        assert!((eps[0] - 1.2).abs() < 1e-15);
        assert!((eps[1] - 1.6).abs() < 1e-15);
        assert!(sam_perturbation(&Gradient::new(vec![3.0, 4.0]), 0.0, 1e-12).is_none());
        assert_eq!(sam_epsilon(&Gradient::zeros(4), 2.0, 1e-12), vec![0.0; 4]);
    }

    #[test]
    fn sam_quadratic_closed_form() {
        let q = Quadratic::new(1.0);
        let cfg = SamConfig::new(2.0, BaseOptimizer::Sgd(SgdConfig { lr: 0.1 }));
        let (_, g) = sam_gradient(&ParamVector::new(vec![3.0, 4.0]), &q, &cfg).unwrap();
        assert!((g[0] - 4.2).abs() < 1e-12);
        assert!((g[1] - 5.6).abs() < 1e-12);
        assert_eq!(q.calls.get(), 2);
    }

    #[test]
    fn pass_accounting() {
        let q = Quadratic::new(1.0);
        let sam = OptimizerConfig::Sam(SamConfig::new(0.5, BaseOptimizer::AdamW(AdamWConfig::default())));
        let adam = OptimizerConfig::Base(BaseOptimizer::AdamW(AdamWConfig::default()));
        for (cfg, per) in [(sam, 2), (adam, 1)] {
            let mut p = ParamVector::new(vec![1.0, -1.0]);
            let mut s = OptimizerState::new();
            q.calls.set(0);
            for _ in 0..7 {
                optimizer_step(&mut p, &q, &cfg, &mut s).unwrap();
            }
            assert_eq!(s.passes_used, 7 * per);
            assert_eq!(q.calls.get() as u64, 7 * per);
            assert_eq!(s.step_count, 7);
        }
    }

    #[test]
    fn sam_sgd_decreases_quadratic() {
        let q = Quadratic::new(1.0);
        let cfg = SamConfig::new(0.1, BaseOptimizer::Sgd(SgdConfig { lr: 0.01 }));
        let mut p = ParamVector::new(vec![6.0, 8.0]);
        let mut state = OptimizerState::new();
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let loss = sam_step(&mut p, &q, &cfg, &mut state).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn invalid_configs() {
        let bad_rho = OptimizerConfig::Sam(SamConfig::new(-1.0, BaseOptimizer::Sgd(SgdConfig::default())));
        assert!(bad_rho.validate().is_err());
        let bad_lr = OptimizerConfig::Base(BaseOptimizer::Sgd(SgdConfig { lr: 0.0 }));
        assert!(bad_lr.validate().is_err());
        let bad_beta = OptimizerConfig::Base(BaseOptimizer::AdamW(AdamWConfig { beta1: 1.0, ..Default::default() }));
        assert!(bad_beta.validate().is_err());
    }
}
