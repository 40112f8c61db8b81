use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};

/// Distance of the class means from the origin.
pub const CLASS_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    /// Class means rotated by `gap * pi / 2` inside their plane.
    Rotation,
    /// `ceil(gap * input_dim)` input coordinates cyclically permuted.
    Permutation,
}

/// Synthetic classification task whose distance from the `gap = 0` task of the
/// same seed is controlled by `gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub gap: f64,
    pub input_dim: usize,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            family: TaskFamily::Permutation,
            gap: 0.0,
            input_dim: 16,
            n_classes: 4,
            n_train: 2048,
            n_test: 512,
            seed: 0,
            noise_sigma: 0.3,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gap) {
            return Err(Error::Config(format!("task gap must be in [0, 1], got {}", self.gap)));
        }
        if self.input_dim < 2 {
            return Err(Error::Config(format!("input_dim must be >= 2, got {}", self.input_dim)));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!("n_classes must be >= 2, got {}", self.n_classes)));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    pub fn with_gap(&self, gap: f64) -> Self {
        Self { gap, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub spec: TaskSpec,
    pub train: Batch,
    pub test: Batch,
    /// Class means after the gap transform, one row per class.
    pub class_means: Matrix,
    /// Coordinate map applied to inputs: output coordinate `c` reads input
    /// coordinate `coordinate_map[c]`. Identity except for the permutation family.
    pub coordinate_map: Vec<usize>,
}

impl Task {
    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }
}

/// Orthonormal pair spanning the plane that holds the class means.
fn class_plane(rng: &mut ChaCha8Rng, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| StandardNormal.sample(rng)).collect() };
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    let mut u = gaussian(rng);
    normalize(&mut u);
    loop {
        let mut v = gaussian(rng);
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&u).for_each(|(x, ui)| *x -= dot * ui);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            normalize(&mut v);
            return (u, v);
        }
    }
}

fn draw_split(
    seed: u64,
    n: usize,
    means: &Matrix,
    sigma: f64,
    coordinate_map: &[usize],
) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, dim) = (means.rows(), means.cols());
    let mut inputs = Matrix::zeros(n, dim);
    let mut targets = Matrix::zeros(n, k);
    let mut raw = vec![0.0; dim];
    for s in 0..n {
        let label = s % k;
        for (x, m) in raw.iter_mut().zip(means.row(label)) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = m + sigma * z;
        }
        for (out, &src) in inputs.row_mut(s).iter_mut().zip(coordinate_map) {
            *out = raw[src];
        }
        targets.row_mut(s)[label] = 1.0;
    }
    Batch {
        inputs,
        targets,
    }
}

/// Builds the train and test splits.
///
/// Geometry (class plane, phase, permutation) and the two splits come from
/// independent streams derived from `spec.seed`, so tasks that differ only in
/// `gap` share their noise draws, and `gap = 0` reproduces the base task bitwise.
pub fn make_task(spec: &TaskSpec) -> Result<Task> {
    spec.validate()?;
    let (dim, k) = (spec.input_dim, spec.n_classes);
    let mut geometry = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x7a5c));
    let (u, v) = class_plane(&mut geometry, dim);
    let phase = geometry.random_range(0.0..2.0 * PI);
    let rotation = match spec.family {
        TaskFamily::Rotation => spec.gap * PI / 2.0,
        TaskFamily::Permutation => 0.0,
    };

    let mut means = Matrix::zeros(k, dim);
    for c in 0..k {
        let theta = phase + 2.0 * PI * c as f64 / k as f64 + rotation;
        let (cos, sin) = (CLASS_RADIUS * theta.cos(), CLASS_RADIUS * theta.sin());
        for (m, (ui, vi)) in means.row_mut(c).iter_mut().zip(u.iter().zip(&v)) {
            *m = cos * ui + sin * vi;
        }
    }

    let mut coordinate_map: Vec<usize> = (0..dim).collect();
    if spec.family == TaskFamily::Permutation {
        let count = (spec.gap * dim as f64).ceil() as usize;
        let mut chosen: Vec<usize> = (0..dim).collect();
        chosen.shuffle(&mut geometry);
        chosen.truncate(count);
        chosen.sort_unstable();
        if count >= 2 {
            // Cyclic shift over the chosen coordinates: no chosen coordinate stays put.
            for (slot, &c) in chosen.iter().enumerate() {
                coordinate_map[c] = chosen[(slot + 1) % count];
            }
        }
    }

    let train = draw_split(derive_seed(spec.seed, 0x7a11), spec.n_train, &means, spec.noise_sigma, &coordinate_map);
    let test = draw_split(derive_seed(spec.seed, 0x7e57), spec.n_test, &means, spec.noise_sigma, &coordinate_map);

    // Report the means in the same coordinates the inputs use.
    let mut mapped = Matrix::zeros(k, dim);
    for c in 0..k {
        for (out, &src) in mapped.row_mut(c).iter_mut().zip(&coordinate_map) {
            *out = means.get(c, src);
        }
    }

    Ok(Task {
        spec: spec.clone(),
        train,
        test,
        class_means: mapped,
        coordinate_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_gap_matches_base_bitwise() {
        let base = make_task(&TaskSpec { family: TaskFamily::Rotation, seed: 17, ..Default::default() }).unwrap();
        for family in [TaskFamily::Rotation, TaskFamily::Permutation] {
            let again = make_task(&TaskSpec { seed: 17, family, gap: 0.0, ..Default::default() }).unwrap();
            assert_eq!(again.train, base.train);
            assert_eq!(again.test, base.test);
        }
    }

    #[test]
    fn full_rotation_is_orthogonal() {
        let spec = TaskSpec { family: TaskFamily::Rotation, seed: 4, ..Default::default() };
        let a = make_task(&spec).unwrap();
        let b = make_task(&spec.with_gap(1.0)).unwrap();
        for c in 0..spec.n_classes {
            let (ma, mb) = (a.class_means.row(c), b.class_means.row(c));
            assert!(dot(ma, mb).abs() < 1e-9);
            assert!((dot(ma, ma).sqrt() - CLASS_RADIUS).abs() < 1e-12);
            assert!((dot(mb, mb).sqrt() - CLASS_RADIUS).abs() < 1e-12);
        }
    }

    #[test]
    fn labels_are_balanced() {
        let spec = TaskSpec { n_train: 1030, n_test: 77, seed: 2, ..Default::default() };
        let t = make_task(&spec).unwrap();
        for batch in [&t.train, &t.test] {
            let mut counts = vec![0usize; spec.n_classes];
            for l in batch.labels() {
                counts[l] += 1;
            }
            let ideal = batch.len() as f64 / spec.n_classes as f64;
            assert!(counts.iter().all(|&c| (c as f64 - ideal).abs() <= 1.0), "{counts:?}");
        }
    }

    #[test]
    fn permutation_moves_requested_coordinates() {
        let spec = TaskSpec { family: TaskFamily::Permutation, seed: 9, ..Default::default() };
        for (gap, expected) in [(0.25, 4), (0.5, 8), (1.0, 16), (0.01, 0)] {
            // ceil(0.01 * 16) = 1 coordinate: a one-cycle is the identity.
            let t = make_task(&spec.with_gap(gap)).unwrap();
            let moved = t.coordinate_map.iter().enumerate().filter(|(i, &s)| *i != s).count();
            assert_eq!(moved, expected, "gap {gap}");
        }
    }

    #[test]
    fn train_and_test_differ() {
        let t = make_task(&TaskSpec { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(t.train.inputs.row(0), t.test.inputs.row(0));
    }

    #[test]
    fn invalid_specs() {
        assert!(make_task(&TaskSpec { gap: 1.5, ..Default::default() }).is_err());
        assert!(make_task(&TaskSpec { input_dim: 1, ..Default::default() }).is_err());
        assert!(make_task(&TaskSpec { n_classes: 1, ..Default::default() }).is_err());
        assert!(make_task(&TaskSpec { n_test: 0, ..Default::default() }).is_err());
    }
}
