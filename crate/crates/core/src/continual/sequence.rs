use serde::{Deserialize, Serialize};

use super::analysis::forgetting_delta;
use super::methods::{rehearsal_mix, wise_ft_merge};
use super::task::{make_task, Task, TaskSpec};
use super::train::{evaluate, train_stage, Trace, DEFAULT_BATCH_SIZE};
use super::derive_seed;
use crate::error::{Error, Result};
use crate::flatness::{flatness_report, FlatnessReport};
use crate::landscape::{evaluate_surface, sample_directions, DirectionKind, GridSpec, LossSurface};
use crate::nn::{init_model, Activation, Batch, LossKind, Matrix, ModelSpec, ParamVector};
use crate::optim::{AdamWConfig, BaseOptimizer, OptimizerConfig};

/// Hidden layers and nonlinearity; input and output widths come from the tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub loss_kind: LossKind,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            activation: Activation::Relu,
            loss_kind: LossKind::SoftmaxCrossEntropy,
        }
    }
}

impl ModelShape {
    pub fn spec_for(&self, task: &TaskSpec, init_seed: u64) -> ModelSpec {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(task.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(task.n_classes);
        ModelSpec {
            layer_widths: widths,
            activation: self.activation,
            loss_kind: self.loss_kind,
            init_seed,
        }
    }
}

/// Held-out data a probe evaluates the loss on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeData {
    /// The base task's test split.
    #[default]
    Prior,
    /// The follow-up task's test split.
    New,
    /// Both test splits, base first.
    Joint,
}

impl ProbeData {
    pub fn id(self) -> &'static str {
        match self {
            ProbeData::Prior => "base_task/test",
            ProbeData::New => "followup_task/test",
            ProbeData::Joint => "base_task/test+followup_task/test",
        }
    }
}

/// Where and how checkpoints are probed. Both probes of a run use the same
/// direction seed so their surfaces share a slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub grid: GridSpec,
    pub direction_seed: u64,
    pub kind: DirectionKind,
    pub data: ProbeData,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            // Small enough that the slice stays inside the trained basin.
            grid: GridSpec::symmetric(0.1, 41),
            direction_seed: 7,
            kind: DirectionKind::Gaussian,
            data: ProbeData::Prior,
        }
    }
}

/// A two-task continual run: train on the base task, continue on the follow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub plan_id: String,
    /// Drives model init, shuffling and rehearsal sampling.
    pub seed: u64,
    pub model: ModelShape,
    pub base_task: TaskSpec,
    pub followup_task: TaskSpec,
    pub base_optimizer: OptimizerConfig,
    pub base_pass_budget: u64,
    pub optimizer: OptimizerConfig,
    /// Forward-backward passes allotted to the follow-up stage.
    pub pass_budget: u64,
    pub batch_size: usize,
    /// Fraction of the follow-up training set replaced by base-task samples.
    pub rehearsal_ratio: f64,
    /// Interpolation weight of the pre-follow-up checkpoint; `None` disables merging.
    pub wiseft_lambda: Option<f64>,
    pub probe: ProbeSpec,
    /// Also probe the base checkpoint's surface.
    pub eval_after_each_stage: bool,
}

impl Default for SequencePlan {
    fn default() -> Self {
        Self {
            plan_id: "plan".into(),
            seed: 0,
            model: ModelShape::default(),
            base_task: TaskSpec::default(),
            followup_task: TaskSpec { gap: 1.0, ..TaskSpec::default() },
            base_optimizer: OptimizerConfig::Base(BaseOptimizer::AdamW(AdamWConfig::default())),
            base_pass_budget: 2000,
            optimizer: OptimizerConfig::Base(BaseOptimizer::AdamW(AdamWConfig::default())),
            pass_budget: 400,
            batch_size: DEFAULT_BATCH_SIZE,
            rehearsal_ratio: 0.0,
            wiseft_lambda: None,
            probe: ProbeSpec::default(),
            eval_after_each_stage: true,
        }
    }
}

impl SequencePlan {
    /// Copy with `seed` applied to the run and to both tasks.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut plan = self.clone();
        plan.seed = seed;
        plan.base_task.seed = seed;
        plan.followup_task.seed = seed;
        plan
    }

    /// e.g. `adamw`, `sam-adamw`, `rehearsal+sam-adamw`, `wiseft+adamw`.
    pub fn method(&self) -> String {
        let mut parts = Vec::new();
        if self.rehearsal_ratio > 0.0 {
            parts.push("rehearsal".to_string());
        }
        if self.wiseft_lambda.is_some() {
            parts.push("wiseft".to_string());
        }
        parts.push(self.optimizer.label());
        parts.join("+")
    }

    pub fn validate(&self) -> Result<()> {
        self.base_task.validate()?;
        self.followup_task.validate()?;
        if self.base_task.input_dim != self.followup_task.input_dim
            || self.base_task.n_classes != self.followup_task.n_classes
        {
            return Err(Error::Config("base and follow-up tasks must share input_dim and n_classes".into()));
        }
        self.model.spec_for(&self.base_task, 0).validate()?;
        self.base_optimizer.validate()?;
        self.optimizer.validate()?;
        if self.pass_budget == 0 || self.base_pass_budget == 0 {
            return Err(Error::Config("pass budgets must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rehearsal_ratio) {
            return Err(Error::Config(format!("rehearsal_ratio must be in [0, 1], got {}", self.rehearsal_ratio)));
        }
        if let Some(l) = self.wiseft_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("wiseft_lambda must be in [0, 1], got {l}")));
            }
        }
        self.probe.grid.validate()
    }

    fn model_spec(&self) -> ModelSpec {
        self.model.spec_for(&self.base_task, derive_seed(self.seed, 1))
    }
}

/// Metrics of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub checkpoint_id: String,
    /// Base-task held-out accuracy, percent.
    pub prior_accuracy: f64,
    pub prior_loss: f64,
    /// Follow-up-task held-out accuracy, percent.
    pub new_accuracy: f64,
    pub new_loss: f64,
    pub passes_used: u64,
    pub steps: u64,
    pub flatness: Option<FlatnessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub plan_id: String,
    pub seed: u64,
    pub gap: f64,
    pub method: String,
    pub pass_budget: u64,
    /// Percentage points, final minus base prior-task accuracy.
    pub forgetting_delta: f64,
    pub complete: bool,
    pub warnings: Vec<String>,
    pub stages: Vec<StageReport>,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// The checkpoint forgetting is measured at (merged if merging ran).
    pub fn final_stage(&self) -> Option<&StageReport> {
        self.stages.iter().rev().find(|s| s.stage != "base")
    }

    /// Passes consumed by the follow-up stage.
    pub fn passes_used(&self) -> u64 {
        self.stage("followup").map_or(0, |s| s.passes_used)
    }
}

/// `run_sequence` failed after producing part of a report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("sequence `{}` seed {} failed: {error}", partial.plan_id, partial.seed)]
pub struct SequenceFailure {
    pub partial: RunReport,
    pub error: Error,
}

/// The trained base checkpoint and its evaluation, reusable across plans that
/// share everything up to the follow-up stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseStage {
    pub spec: ModelSpec,
    pub base_task: Task,
    pub followup_task: Task,
    pub params: ParamVector,
    pub trace: Trace,
    pub report: StageReport,
}

/// Probe batch for `data`.
pub fn probe_batch(data: ProbeData, prior: &Task, new: &Task) -> Result<Batch> {
    Ok(match data {
        ProbeData::Prior => prior.test.clone(),
        ProbeData::New => new.test.clone(),
        ProbeData::Joint => {
            let cols = (prior.test.inputs.cols(), prior.test.targets.cols());
            let rows = prior.test.len() + new.test.len();
            let inputs = [prior.test.inputs.as_slice(), new.test.inputs.as_slice()].concat();
            let targets = [prior.test.targets.as_slice(), new.test.targets.as_slice()].concat();
            Batch::new(Matrix::from_vec(rows, cols.0, inputs)?, Matrix::from_vec(rows, cols.1, targets)?)?
        }
    })
}

fn probe(plan: &SequencePlan, spec: &ModelSpec, params: &ParamVector, tasks: (&Task, &Task)) -> Result<(LossSurface, FlatnessReport)> {
    let dirs = sample_directions(spec, params, plan.probe.direction_seed, plan.probe.kind)?;
    let batch = probe_batch(plan.probe.data, tasks.0, tasks.1)?;
    let surface = evaluate_surface(params, spec, &batch, plan.probe.data.id(), &dirs, &plan.probe.grid)?;
    let report = flatness_report(&surface)?;
    Ok((surface, report))
}

fn stage_report(
    plan: &SequencePlan,
    name: &str,
    spec: &ModelSpec,
    params: &ParamVector,
    tasks: (&Task, &Task),
    passes: (u64, u64),
    with_probe: bool,
) -> Result<StageReport> {
    let (prior_acc, prior_loss) = evaluate(params, spec, tasks.0)?;
    let (new_acc, new_loss) = evaluate(params, spec, tasks.1)?;
    let flatness = if with_probe {
        Some(probe(plan, spec, params, tasks)?.1)
    } else {
        None
    };
    Ok(StageReport {
        stage: name.to_string(),
        checkpoint_id: format!("{}-s{}-{}", plan.plan_id, plan.seed, name),
        prior_accuracy: 100.0 * prior_acc,
        prior_loss,
        new_accuracy: 100.0 * new_acc,
        new_loss,
        passes_used: passes.0,
        steps: passes.1,
        flatness,
    })
}

/// Stage one: initialise, train on the base task, evaluate and probe.
pub fn train_base(plan: &SequencePlan) -> Result<BaseStage> {
    plan.validate()?;
    let spec = plan.model_spec();
    let base_task = make_task(&plan.base_task)?;
    let followup_task = make_task(&plan.followup_task)?;
    let init = init_model(&spec)?;
    let out = train_stage(
        &init,
        &spec,
        &base_task.train,
        &plan.base_optimizer,
        plan.base_pass_budget,
        plan.batch_size,
        derive_seed(plan.seed, 2),
    )?;
    let report = stage_report(
        plan,
        "base",
        &spec,
        &out.params,
        (&base_task, &followup_task),
        (out.passes_used, out.steps),
        plan.eval_after_each_stage,
    )?;
    Ok(BaseStage {
        spec,
        base_task,
        followup_task,
        params: out.params,
        trace: out.trace,
        report,
    })
}

/// Checkpoints produced after the base stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub report: RunReport,
    /// Raw result of follow-up training.
    pub followup_params: ParamVector,
    pub followup_trace: Trace,
    /// Checkpoint forgetting is measured at; the merge when merging ran.
    pub final_params: ParamVector,
}

fn empty_report(plan: &SequencePlan) -> RunReport {
    RunReport {
        plan_id: plan.plan_id.clone(),
        seed: plan.seed,
        gap: plan.followup_task.gap,
        method: plan.method(),
        pass_budget: plan.pass_budget,
        forgetting_delta: f64::NAN,
        complete: false,
        warnings: Vec::new(),
        stages: Vec::new(),
    }
}

/// Everything after the base stage. `base` must come from [`train_base`] on a
/// plan with the same model, tasks, base training and seed.
pub fn run_followup(plan: &SequencePlan, base: &BaseStage) -> Result<SequenceOutcome, SequenceFailure> {
    let mut report = empty_report(plan);
    report.warnings = base.trace.warnings.clone();
    report.stages.push(base.report.clone());
    match followup_stages(plan, base, &mut report) {
        Ok((followup_params, followup_trace, final_params)) => Ok(SequenceOutcome {
            report,
            followup_params,
            followup_trace,
            final_params,
        }),
        Err(error) => Err(SequenceFailure { partial: report, error }),
    }
}

fn followup_stages(plan: &SequencePlan, base: &BaseStage, report: &mut RunReport) -> Result<(ParamVector, Trace, ParamVector)> {
    plan.validate()?;
    let spec = &base.spec;
    let tasks = (&base.base_task, &base.followup_task);
    let data = if plan.rehearsal_ratio > 0.0 {
        rehearsal_mix(&base.base_task.train, &base.followup_task.train, plan.rehearsal_ratio, derive_seed(plan.seed, 4))?
    } else {
        base.followup_task.train.clone()
    };
    let out = train_stage(
        &base.params,
        spec,
        &data,
        &plan.optimizer,
        plan.pass_budget,
        plan.batch_size,
        derive_seed(plan.seed, 3),
    )?;
    report.warnings.extend(out.trace.warnings.iter().cloned());
    let merging = plan.wiseft_lambda.is_some();
    let followup = stage_report(plan, "followup", spec, &out.params, tasks, (out.passes_used, out.steps), !merging)?;
    report.stages.push(followup);
    let final_params = match plan.wiseft_lambda {
        Some(lambda) => {
            let merged = wise_ft_merge(&base.params, &out.params, lambda)?;
            report.stages.push(stage_report(plan, "merged", spec, &merged, tasks, (0, 0), true)?);
            merged
        }
        None => out.params.clone(),
    };
    let final_acc = report.final_stage().expect("follow-up stage pushed").prior_accuracy;
    report.forgetting_delta = forgetting_delta(base.report.prior_accuracy, final_acc);
    report.complete = true;
    Ok((out.params, out.trace, final_params))
}

/// Base stage, follow-up stage, optional merge, then the report.
pub fn run_sequence(plan: &SequencePlan) -> Result<RunReport, SequenceFailure> {
    let base = train_base(plan).map_err(|error| SequenceFailure {
        partial: empty_report(plan),
        error,
    })?;
    run_followup(plan, &base).map(|o| o.report)
}
