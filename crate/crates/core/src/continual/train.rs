use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, forward, loss, Batch, ModelSpec, ParamVector};
use crate::optim::{optimizer_step, BatchObjective, OptimizerConfig, OptimizerState};

pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Per-step training losses plus anything worth flagging.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub losses: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Trace {
    /// `step,loss` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (k, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, crate::landscape::fmt_f64(*l)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub params: ParamVector,
    pub trace: Trace,
    pub passes_used: u64,
    pub steps: u64,
}

/// Minibatch training until the next step would overrun `pass_budget`.
///
/// Minibatches are drawn from a fresh seeded shuffle every epoch; the last
/// minibatch of an epoch may be short.
pub fn train_stage(
    params: &ParamVector,
    spec: &ModelSpec,
    data: &Batch,
    optimizer: &OptimizerConfig,
    pass_budget: u64,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<StageOutcome> {
    optimizer.validate()?;
    if pass_budget == 0 {
        return Err(Error::Config("pass budget must be at least 1".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let per_step = optimizer.passes_per_step();
    let total_steps = pass_budget / per_step;
    let mut trace = Trace::default();
    let mut params = params.clone();
    let mut state = OptimizerState::new();
    if total_steps == 0 {
        trace.warnings.push(format!(
            "pass budget {pass_budget} is below the {per_step}-pass cost of one step; no steps taken"
        ));
        return Ok(StageOutcome {
            params,
            trace,
            passes_used: 0,
            steps: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut steps = 0u64;
    'epochs: loop {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            if steps == total_steps {
                break 'epochs;
            }
            let mini = data.select(chunk);
            let objective = BatchObjective { spec, batch: &mini };
            let l = optimizer_step(&mut params, &objective, optimizer, &mut state)
                .map_err(|e| Error::Numeric(format!("training diverged at step {}: {e}", steps + 1)))?;
            if !params.is_finite() {
                return Err(Error::Numeric(format!("non-finite parameters after step {}", steps + 1)));
            }
            trace.losses.push(l);
            steps += 1;
        }
    }
    Ok(StageOutcome {
        params,
        trace,
        passes_used: state.passes_used,
        steps,
    })
}

/// Accuracy in `[0, 1]` and mean loss on a labelled batch.
///
/// Predictions are argmaxes with ties broken toward the lowest class index.
pub fn evaluate_batch(params: &ParamVector, spec: &ModelSpec, batch: &Batch) -> Result<(f64, f64)> {
    let pred = forward(params, spec, batch)?;
    let mean_loss = loss(&pred, &batch.targets, spec.loss_kind)?;
    let correct = (0..batch.len())
        .filter(|&s| argmax(pred.row(s)) == argmax(batch.targets.row(s)))
        .count();
    Ok((correct as f64 / batch.len() as f64, mean_loss))
}

/// [`evaluate_batch`] on a task's held-out split.
pub fn evaluate(params: &ParamVector, spec: &ModelSpec, task: &super::Task) -> Result<(f64, f64)> {
    evaluate_batch(params, spec, &task.test)
}
