//! Experiment configuration files.
//!
//! A config is TOML. Missing keys take the built-in defaults, unknown keys are
//! rejected, and a named preset fills its keys wherever the file leaves them
//! out. The resolved form written next to outputs parses back to the same
//! value.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use flatlab_core::continual::{
    ModelShape, ProbeData, ProbeSpec, SequencePlan, TaskFamily, TaskSpec, DEFAULT_BATCH_SIZE, DEFAULT_REHEARSAL_RATIO,
    DEFAULT_WISEFT_LAMBDA,
};
use flatlab_core::{
    Activation, AdamWConfig, BaseOptimizer, DirectionKind, GridSpec, LossKind, OptimizerConfig, SamConfig, SgdConfig,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Environment variable naming the directory relative `output_dir`s live under.
pub const OUTPUT_ROOT_ENV: &str = "FLATLAB_OUTPUT_ROOT";

pub const PRESETS: &[&str] = &["paper-defaults"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub plan_id: String,
    pub output_dir: String,
    pub seeds: Vec<u64>,
    /// Seeds run concurrently by `sequence`.
    pub workers: usize,
    pub batch_size: usize,
    pub eval_after_each_stage: bool,
    pub model: ModelSection,
    pub base_task: TaskSection,
    pub followup_task: TaskSection,
    pub base_training: StageSection,
    pub training: StageSection,
    pub methods: MethodsSection,
    pub probe: ProbeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
}

/// A task without its seed; seeds come from the config's seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub family: TaskFamily,
    pub gap: f64,
    pub input_dim: usize,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adamw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub optimizer: OptimizerKind,
    /// Wrap the optimizer in SAM.
    pub sam: bool,
    pub rho: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub pass_budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsSection {
    pub rehearsal: bool,
    pub rehearsal_ratio: f64,
    pub wiseft: bool,
    pub wiseft_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_per_axis: usize,
    pub direction_seed: u64,
    pub directions: DirectionKind,
    pub data: ProbeData,
    pub contour_levels: usize,
}

impl TaskSection {
    fn from_spec(spec: &TaskSpec) -> Self {
        Self {
            family: spec.family,
            gap: spec.gap,
            input_dim: spec.input_dim,
            n_classes: spec.n_classes,
            n_train: spec.n_train,
            n_test: spec.n_test,
            noise_sigma: spec.noise_sigma,
        }
    }

    pub fn spec(&self, seed: u64) -> TaskSpec {
        TaskSpec {
            family: self.family,
            gap: self.gap,
            input_dim: self.input_dim,
            n_classes: self.n_classes,
            n_train: self.n_train,
            n_test: self.n_test,
            seed,
            noise_sigma: self.noise_sigma,
        }
    }
}

impl StageSection {
    fn toy(pass_budget: u64) -> Self {
        let adam = AdamWConfig::default();
        Self {
            optimizer: OptimizerKind::Adamw,
            sam: false,
            rho: SamConfig::default().rho,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            pass_budget,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let base = match self.optimizer {
            OptimizerKind::Sgd => BaseOptimizer::Sgd(SgdConfig { lr: self.lr }),
            OptimizerKind::Adamw => BaseOptimizer::AdamW(AdamWConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
            }),
        };
        if self.sam {
            OptimizerConfig::Sam(SamConfig::new(self.rho, base))
        } else {
            OptimizerConfig::Base(base)
        }
    }
}

impl ProbeSection {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            beta_min: self.beta_min,
            beta_max: self.beta_max,
            n_per_axis: self.n_per_axis,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let plan = SequencePlan::default();
        let probe = ProbeSpec::default();
        Self {
            preset: None,
            plan_id: "experiment".into(),
            output_dir: "runs".into(),
            seeds: vec![0],
            workers: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            eval_after_each_stage: true,
            model: ModelSection {
                hidden: plan.model.hidden.clone(),
                activation: plan.model.activation,
                loss: plan.model.loss_kind,
            },
            base_task: TaskSection::from_spec(&plan.base_task),
            followup_task: TaskSection::from_spec(&plan.followup_task),
            base_training: StageSection::toy(plan.base_pass_budget),
            training: StageSection::toy(plan.pass_budget),
            methods: MethodsSection {
                rehearsal: false,
                rehearsal_ratio: DEFAULT_REHEARSAL_RATIO,
                wiseft: false,
                wiseft_lambda: DEFAULT_WISEFT_LAMBDA,
            },
            probe: ProbeSection {
                alpha_min: probe.grid.alpha_min,
                alpha_max: probe.grid.alpha_max,
                beta_min: probe.grid.beta_min,
                beta_max: probe.grid.beta_max,
                n_per_axis: probe.grid.n_per_axis,
                direction_seed: probe.direction_seed,
                directions: probe.kind,
                data: probe.data,
                contour_levels: 10,
            },
        }
    }
}

/// Keys a preset fills when the file leaves them out.
fn preset_values(name: &str) -> Option<Vec<(&'static [&'static str], Value)>> {
    match name {
        "paper-defaults" => Some(vec![
            (&["training", "rho"][..], Value::Float(2.0)),
            (&["training", "lr"][..], Value::Float(5e-6)),
            (&["batch_size"][..], Value::Integer(128)),
        ]),
        _ => None,
    }
}

fn insert_absent(table: &mut Table, path: &[&str], value: Value) {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut at = table;
    for key in parents {
        let entry = at.entry(key.to_string()).or_insert_with(|| Value::Table(Table::new()));
        match entry {
            Value::Table(t) => at = t,
            // A scalar where a section belongs; deserialization reports it.
            _ => return,
        }
    }
    at.entry(last.to_string()).or_insert(value);
}

fn fill_absent(target: &mut Table, defaults: &Table) {
    for (key, default) in defaults {
        match (target.get_mut(key), default) {
            (None, _) => {
                target.insert(key.clone(), default.clone());
            }
            (Some(Value::Table(t)), Value::Table(d)) => fill_absent(t, d),
            _ => {}
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut table: Table = toml::from_str(text).map_err(|e| e.to_string())?;
        if let Some(preset) = table.get("preset") {
            let name = preset.as_str().ok_or("preset must be a string")?.to_string();
            let values = preset_values(&name)
                .ok_or_else(|| format!("unknown preset `{name}`, known presets: {}", PRESETS.join(", ")))?;
            for (path, value) in values {
                insert_absent(&mut table, path, value);
            }
        }
        let defaults = Table::try_from(ExperimentConfig::default()).map_err(|e| e.to_string())?;
        fill_absent(&mut table, &defaults);
        let config: ExperimentConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| e.to_string())?;
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Fully resolved TOML; every key is present.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> flatlab_core::Result<()> {
        use flatlab_core::Error;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.probe.contour_levels < 2 {
            return Err(Error::Config("probe.contour_levels must be >= 2".into()));
        }
        if self.plan_id.is_empty() || self.plan_id.contains([',', '\n', '/', '\\']) {
            return Err(Error::Config(format!("plan_id `{}` must be non-empty without , / \\ or newlines", self.plan_id)));
        }
        self.plan().validate()
    }

    /// The sequence plan for seed 0; see [`SequencePlan::with_seed`].
    pub fn plan(&self) -> SequencePlan {
        SequencePlan {
            plan_id: self.plan_id.clone(),
            seed: 0,
            model: ModelShape {
                hidden: self.model.hidden.clone(),
                activation: self.model.activation,
                loss_kind: self.model.loss,
            },
            base_task: self.base_task.spec(0),
            followup_task: self.followup_task.spec(0),
            base_optimizer: self.base_training.optimizer(),
            base_pass_budget: self.base_training.pass_budget,
            optimizer: self.training.optimizer(),
            pass_budget: self.training.pass_budget,
            batch_size: self.batch_size,
            rehearsal_ratio: if self.methods.rehearsal { self.methods.rehearsal_ratio } else { 0.0 },
            wiseft_lambda: self.methods.wiseft.then_some(self.methods.wiseft_lambda),
            probe: ProbeSpec {
                grid: self.probe.grid(),
                direction_seed: self.probe.direction_seed,
                kind: self.probe.directions,
                data: self.probe.data,
            },
            eval_after_each_stage: self.eval_after_each_stage,
        }
    }

    /// `output_dir`, placed under `root` when it is relative.
    pub fn output_path(&self, root: Option<&Path>) -> PathBuf {
        let dir = Path::new(&self.output_dir);
        match root {
            Some(r) if dir.is_relative() => r.join(dir),
            _ => dir.to_path_buf(),
        }
    }
}
