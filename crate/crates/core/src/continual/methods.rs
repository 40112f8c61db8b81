//! Forgetting mitigations compared against (and combined with) SAM:
//! weight-space interpolation and rehearsal of old-task samples.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix, ParamVector};

/// Merge weight used when only "merge on" is requested.
pub const DEFAULT_WISEFT_LAMBDA: f64 = 0.5;
/// Rehearsal fraction used when only "rehearse" is requested.
pub const DEFAULT_REHEARSAL_RATIO: f64 = 0.25;

/// `lambda * theta_a + (1 - lambda) * theta_b`. The endpoints return the
/// corresponding input unchanged.
pub fn wise_ft_merge(theta_a: &ParamVector, theta_b: &ParamVector, lambda: f64) -> Result<ParamVector> {
    if theta_a.len() != theta_b.len() {
        return Err(Error::dim("merge operand length", theta_a.len(), theta_b.len()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("merge lambda must be in [0, 1], got {lambda}")));
    }
    if lambda == 1.0 {
        return Ok(theta_a.clone());
    }
    if lambda == 0.0 {
        return Ok(theta_b.clone());
    }
    Ok(ParamVector::new(
        theta_a
            .iter()
            .zip(theta_b.iter())
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect(),
    ))
}

/// Training set with as many samples as `new`, `ceil(ratio * n)` of them drawn
/// without replacement from `old` and the rest from `new`, then shuffled.
pub fn rehearsal_mix(old: &Batch, new: &Batch, ratio: f64, seed: u64) -> Result<Batch> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("rehearsal ratio must be in [0, 1], got {ratio}")));
    }
    if old.inputs.cols() != new.inputs.cols() || old.targets.cols() != new.targets.cols() {
        return Err(Error::dim("rehearsal task width", new.inputs.cols(), old.inputs.cols()));
    }
    let n = new.len();
    let n_old = (ratio * n as f64).ceil() as usize;
    if n_old > old.len() {
        return Err(Error::Config(format!(
            "rehearsal needs {n_old} old samples but the old task has {}",
            old.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let old_idx = index::sample(&mut rng, old.len(), n_old).into_vec();
    let new_idx = index::sample(&mut rng, n, n - n_old).into_vec();

    // (from_old, row) in final order
    let mut picks: Vec<(bool, usize)> = old_idx
        .into_iter()
        .map(|i| (true, i))
        .chain(new_idx.into_iter().map(|i| (false, i)))
        .collect();
    picks.shuffle(&mut rng);

    let mut inputs = Vec::with_capacity(n * new.inputs.cols());
    let mut targets = Vec::with_capacity(n * new.targets.cols());
    for (from_old, i) in picks {
        let src = if from_old { old } else { new };
        inputs.extend_from_slice(src.inputs.row(i));
        targets.extend_from_slice(src.targets.row(i));
    }
    Batch::new(
        Matrix::from_vec(n, new.inputs.cols(), inputs)?,
        Matrix::from_vec(n, new.targets.cols(), targets)?,
    )
}
