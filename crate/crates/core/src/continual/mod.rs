//! Two-stage continual-learning runs on synthetic task families, with
//! forgetting measurement, mitigation baselines and the
//! sharpness-vs-forgetting correlation.

mod analysis;
mod methods;
mod sequence;
mod summary;
mod task;
mod train;

pub use analysis::{average_ranks, correlate, forgetting_delta, forgetting_magnitude, pearson, spearman};
pub use methods::{rehearsal_mix, wise_ft_merge, DEFAULT_REHEARSAL_RATIO, DEFAULT_WISEFT_LAMBDA};
pub use sequence::{
    probe_batch, run_followup, run_sequence, train_base, BaseStage, ModelShape, ProbeData, ProbeSpec, RunReport, SequenceFailure,
    SequenceOutcome, SequencePlan, StageReport,
};
pub use summary::{SummaryRow, SUMMARY_CSV_HEADER};
pub use task::{make_task, Task, TaskFamily, TaskSpec, CLASS_RADIUS};
pub use train::{evaluate, evaluate_batch, train_stage, StageOutcome, Trace, DEFAULT_BATCH_SIZE};

/// Splitmix64 of `seed` mixed with a stream tag; gives independent RNG
/// streams from one user seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
