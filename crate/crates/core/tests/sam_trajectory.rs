use flatlab_core::continual::{make_task, train_stage, Task, TaskSpec};
use flatlab_core::nn::init_model;
use flatlab_core::optim::{optimizer_step, BatchObjective, OptimizerState, Objective};
use flatlab_core::{
    Activation, AdamWConfig, BaseOptimizer, LossKind, ModelSpec, OptimizerConfig, ParamVector, SamConfig, SgdConfig,
};

fn bits(p: &ParamVector) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

fn setup() -> (ModelSpec, ParamVector, Task) {
    let spec = ModelSpec::new(vec![16, 12, 4], Activation::Tanh, LossKind::SoftmaxCrossEntropy).with_seed(21);
    let task = make_task(&TaskSpec { seed: 21, n_train: 512, n_test: 64, ..Default::default() }).unwrap();
    let params = init_model(&spec).unwrap();
    (spec, params, task)
}

#[test]
fn zero_radius_sam_is_plain_sgd_step_for_step() {
    let (spec, init, task) = setup();
    let sgd = SgdConfig { lr: 0.05 };
    let plain = OptimizerConfig::Base(BaseOptimizer::Sgd(sgd));
    let sam = OptimizerConfig::Sam(SamConfig::new(0.0, BaseOptimizer::Sgd(sgd)));
    let objective = BatchObjective { spec: &spec, batch: &task.train };
    let (mut p, mut q) = (init.clone(), init.clone());
    let (mut sp, mut sq) = (OptimizerState::new(), OptimizerState::new());
    for step in 0..100 {
        let lp = optimizer_step(&mut p, &objective, &plain, &mut sp).unwrap();
        let lq = optimizer_step(&mut q, &objective, &sam, &mut sq).unwrap();
        assert_eq!(lp.to_bits(), lq.to_bits(), "loss at step {step}");
        assert_eq!(bits(&p), bits(&q), "params at step {step}");
    }
    assert_eq!((sp.passes_used, sq.passes_used), (100, 200));
    assert_ne!(bits(&p), bits(&init));
}

#[test]
fn zero_radius_sam_matches_sgd_through_minibatch_training() {
    let (spec, init, task) = setup();
    let sgd = SgdConfig { lr: 0.05 };
    let plain = OptimizerConfig::Base(BaseOptimizer::Sgd(sgd));
    let sam = OptimizerConfig::Sam(SamConfig::new(0.0, BaseOptimizer::Sgd(sgd)));
    // Equal step counts need SAM to get twice the passes.
    let a = train_stage(&init, &spec, &task.train, &plain, 100, 64, 3).unwrap();
    let b = train_stage(&init, &spec, &task.train, &sam, 200, 64, 3).unwrap();
    assert_eq!((a.steps, b.steps), (100, 100));
    assert_eq!((a.passes_used, b.passes_used), (100, 200));
    assert_eq!(bits(&a.params), bits(&b.params));
}

#[test]
fn sam_update_uses_the_gradient_at_the_perturbed_point() {
    let (spec, init, task) = setup();
    let objective = BatchObjective { spec: &spec, batch: &task.train };
    let rho = 0.3;
    let lr = 0.1;
    let (_, g) = objective.loss_and_grad(&init).unwrap();
    let scale = rho / g.norm();
    let perturbed = init.offset(&g, scale);
    let (_, g_adv) = objective.loss_and_grad(&perturbed).unwrap();
    let expected: Vec<f64> = init.iter().zip(g_adv.iter()).map(|(w, d)| w - lr * d).collect();

    let cfg = OptimizerConfig::Sam(SamConfig::new(rho, BaseOptimizer::Sgd(SgdConfig { lr })));
    let mut p = init.clone();
    optimizer_step(&mut p, &objective, &cfg, &mut OptimizerState::new()).unwrap();
    for (a, b) in p.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn sam_adamw_learns_the_task() {
    let (spec, init, task) = setup();
    let cfg = OptimizerConfig::Sam(SamConfig::new(0.5, BaseOptimizer::AdamW(AdamWConfig::default())));
    let out = train_stage(&init, &spec, &task.train, &cfg, 600, 64, 1).unwrap();
    let first = out.trace.losses[..10].iter().sum::<f64>();
    let last = out.trace.losses[out.trace.losses.len() - 10..].iter().sum::<f64>();
    assert!(last < 0.5 * first, "{first} -> {last}");
}
