use flatlab_core::continual::{
    evaluate, forgetting_delta, run_followup, run_sequence, train_base, SequencePlan, TaskFamily, TaskSpec,
};
use flatlab_core::{AdamWConfig, BaseOptimizer, OptimizerConfig, SamConfig};

fn small_plan(seed: u64) -> SequencePlan {
    let task = TaskSpec { n_train: 512, n_test: 256, ..Default::default() };
    let mut plan = SequencePlan {
        plan_id: "t".into(),
        base_task: task.clone(),
        followup_task: task.with_gap(1.0),
        base_pass_budget: 400,
        pass_budget: 151,
        ..Default::default()
    };
    plan.probe.grid.n_per_axis = 7;
    plan.with_seed(seed)
}

fn sam() -> OptimizerConfig {
    OptimizerConfig::Sam(SamConfig::new(2.0, BaseOptimizer::AdamW(AdamWConfig::default())))
}

#[test]
fn report_accounting() {
    let plan = SequencePlan { optimizer: sam(), ..small_plan(3) };
    let r = run_sequence(&plan).unwrap();
    assert!(r.complete);
    assert_eq!(r.method, "sam-adamw");
    assert_eq!(r.passes_used(), 2 * (151 / 2));
    assert_eq!(r.stage("followup").unwrap().steps, 75);
    assert!(r.passes_used() <= r.pass_budget);
    let before = r.stage("base").unwrap().prior_accuracy;
    let after = r.final_stage().unwrap().prior_accuracy;
    assert_eq!(r.forgetting_delta, forgetting_delta(before, after));
    assert!(r.stages.iter().all(|s| s.flatness.is_some()));
}

#[test]
fn runs_are_reproducible() {
    let plan = SequencePlan { rehearsal_ratio: 0.25, ..small_plan(5) };
    assert_eq!(run_sequence(&plan).unwrap(), run_sequence(&plan).unwrap());
}

#[test]
fn base_reuse_matches_a_full_run() {
    let plan = SequencePlan { wiseft_lambda: Some(0.5), optimizer: sam(), ..small_plan(6) };
    let base = train_base(&small_plan(6)).unwrap();
    assert_eq!(run_followup(&plan, &base).unwrap().report, run_sequence(&plan).unwrap());
}

#[test]
fn merge_endpoints_are_exact() {
    let plan = small_plan(2);
    let base = train_base(&plan).unwrap();
    let keep_base = run_followup(&SequencePlan { wiseft_lambda: Some(1.0), ..plan.clone() }, &base).unwrap();
    assert_eq!(keep_base.final_params, base.params);
    assert_eq!(keep_base.report.final_stage().unwrap().prior_accuracy, base.report.prior_accuracy);
    assert_eq!(keep_base.report.forgetting_delta, 0.0);

    let keep_new = run_followup(&SequencePlan { wiseft_lambda: Some(0.0), ..plan.clone() }, &base).unwrap();
    let plain = run_followup(&plan, &base).unwrap();
    assert_eq!(keep_new.final_params, plain.final_params);
    let merged = keep_new.report.stage("merged").unwrap();
    assert_eq!(merged.prior_accuracy, plain.report.stage("followup").unwrap().prior_accuracy);
}

#[test]
fn zero_gap_followup_barely_forgets() {
    for family in [TaskFamily::Rotation, TaskFamily::Permutation] {
        let mut plan = small_plan(1);
        plan.base_task.family = family;
        plan.followup_task = plan.base_task.clone();
        let r = run_sequence(&plan).unwrap();
        assert!(r.forgetting_delta.abs() < 2.0, "{family:?}: {}", r.forgetting_delta);
    }
}

#[test]
fn evaluation_leaves_params_alone() {
    let plan = small_plan(4);
    let base = train_base(&plan).unwrap();
    let before = base.params.clone();
    let first = evaluate(&base.params, &base.spec, &base.base_task).unwrap();
    let second = evaluate(&base.params, &base.spec, &base.base_task).unwrap();
    assert_eq!(first, second);
    assert_eq!(base.params, before);
    assert_eq!(100.0 * first.0, base.report.prior_accuracy);
}

#[test]
fn invalid_plans_are_rejected() {
    let plan = small_plan(0);
    assert!(run_sequence(&SequencePlan { pass_budget: 0, ..plan.clone() }).is_err());
    assert!(run_sequence(&SequencePlan { rehearsal_ratio: 1.5, ..plan.clone() }).is_err());
    assert!(run_sequence(&SequencePlan { wiseft_lambda: Some(-0.1), ..plan.clone() }).is_err());
    let mut mismatched = plan;
    mismatched.followup_task.n_classes = 3;
    assert!(run_sequence(&mismatched).is_err());
}
