//! Two-dimensional loss surfaces `f(a, b) = L(theta0 + a*d1 + b*d2)`.

mod contour;

pub use contour::{emit_contour, march, Polyline};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{evaluate_loss, Batch, ModelSpec, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    /// i.i.d. standard normal coordinates.
    #[default]
    Gaussian,
    /// Gaussian, then each layer's weight and bias slices rescaled to the
    /// norm of the corresponding slices of the base weights.
    GaussianFilterNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionPair {
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    pub kind: DirectionKind,
    pub seed: u64,
}

impl DirectionPair {
    /// Both directions multiplied by `c`.
    pub fn scaled(&self, c: f64) -> DirectionPair {
        DirectionPair {
            delta1: self.delta1.iter().map(|v| v * c).collect(),
            delta2: self.delta2.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Draws the two basis directions for a surface probe.
///
/// `theta0` is only read for [`DirectionKind::GaussianFilterNormalized`].
pub fn sample_directions(spec: &ModelSpec, theta0: &ParamVector, seed: u64, kind: DirectionKind) -> Result<DirectionPair> {
    spec.validate()?;
    let n = spec.param_count();
    if theta0.len() != n {
        return Err(Error::dim("parameter count", n, theta0.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut delta1 = draw();
    let mut delta2 = draw();
    if kind == DirectionKind::GaussianFilterNormalized {
        for layer in spec.layers() {
            for range in [layer.weights, layer.bias] {
                let target = norm(&theta0[range.clone()]);
                for delta in [&mut delta1, &mut delta2] {
                    let slice = &mut delta[range.clone()];
                    let current = norm(slice);
                    let scale = if current > 0.0 { target / current } else { 0.0 };
                    slice.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        if delta1.iter().all(|&v| v == 0.0) || delta2.iter().all(|&v| v == 0.0) {
            return Err(Error::Numeric(
                "filter-normalized direction is zero (all base weights are zero)".into(),
            ));
        }
    }
    Ok(DirectionPair {
        delta1,
        delta2,
        kind,
        seed,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Uniform grid over `[alpha_min, alpha_max] x [beta_min, beta_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_per_axis: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::symmetric(1.0, 41)
    }
}

impl GridSpec {
    /// `[-radius, radius]^2` with `n` points per axis.
    pub fn symmetric(radius: f64, n: usize) -> Self {
        Self {
            alpha_min: -radius,
            alpha_max: radius,
            beta_min: -radius,
            beta_max: radius,
            n_per_axis: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_axis < 3 {
            return Err(Error::GridTooSmall {
                n: self.n_per_axis,
                min: 3,
            });
        }
        let finite = [self.alpha_min, self.alpha_max, self.beta_min, self.beta_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.alpha_min < self.alpha_max) || !(self.beta_min < self.beta_max) {
            return Err(Error::Config(format!("invalid grid ranges {self:?}")));
        }
        Ok(())
    }

    pub fn h_alpha(&self) -> f64 {
        (self.alpha_max - self.alpha_min) / (self.n_per_axis - 1) as f64
    }

    pub fn h_beta(&self) -> f64 {
        (self.beta_max - self.beta_min) / (self.n_per_axis - 1) as f64
    }

    pub fn alpha(&self, i: usize) -> f64 {
        axis_value(self.alpha_min, self.alpha_max, i, self.n_per_axis)
    }

    pub fn beta(&self, j: usize) -> f64 {
        axis_value(self.beta_min, self.beta_max, j, self.n_per_axis)
    }

    pub fn scaled(&self, c: f64) -> GridSpec {
        GridSpec {
            alpha_min: self.alpha_min * c,
            alpha_max: self.alpha_max * c,
            beta_min: self.beta_min * c,
            beta_max: self.beta_max * c,
            n_per_axis: self.n_per_axis,
        }
    }
}

/// Grid coordinate with the symmetric midpoint pinned to exactly zero.
fn axis_value(min: f64, max: f64, i: usize, n: usize) -> f64 {
    if min == -max && 2 * i + 1 == n {
        return 0.0;
    }
    min + (max - min) * i as f64 / (n - 1) as f64
}

/// Loss values over a grid; `values[i * n + j] = f(alpha_i, beta_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSurface {
    values: Vec<f64>,
    pub grid: GridSpec,
    pub eval_batch_id: String,
}

impl LossSurface {
    pub fn from_values(grid: GridSpec, values: Vec<f64>, eval_batch_id: impl Into<String>) -> Result<Self> {
        let n = grid.n_per_axis;
        if values.len() != n * n {
            return Err(Error::dim("surface cell count", n * n, values.len()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite surface value at alpha={}, beta={}",
                grid.alpha(k / n),
                grid.beta(k % n)
            )));
        }
        Ok(Self {
            values,
            grid,
            eval_batch_id: eval_batch_id.into(),
        })
    }

    /// Samples `f(alpha, beta)` on the grid.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.n_per_axis;
        let values = (0..n * n)
            .map(|k| f(grid.alpha(k / n), grid.beta(k % n)))
            .collect();
        Self::from_values(grid, values, "analytic")
    }

    pub fn n(&self) -> usize {
        self.grid.n_per_axis
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_per_axis + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Same grid, values replaced by `f(value)`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<LossSurface> {
        Self::from_values(
            self.grid,
            self.values.iter().map(|&v| f(v)).collect(),
            self.eval_batch_id.clone(),
        )
    }

    /// `alpha,beta,loss` rows, alpha outer, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::from("alpha,beta,loss\n");
        for i in 0..n {
            for j in 0..n {
                out.push_str(&format!(
                    "{},{},{}\n",
                    fmt_f64(self.grid.alpha(i)),
                    fmt_f64(self.grid.beta(j)),
                    fmt_f64(self.get(i, j))
                ));
            }
        }
        out
    }

    /// Parses the CSV written by [`LossSurface::to_csv`], recovering the grid.
    pub fn from_csv(text: &str, eval_batch_id: impl Into<String>) -> Result<LossSurface> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "alpha,beta,loss" => {}
            other => {
                return Err(Error::Config(format!(
                    "surface CSV header must be `alpha,beta,loss`, got {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Config(format!("surface CSV row {} has {} fields", k + 1, fields.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("surface CSV row {}: {e}", k + 1)))
            };
            rows.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
        }
        let n = (rows.len() as f64).sqrt().round() as usize;
        if n * n != rows.len() || n < 2 {
            return Err(Error::Config(format!("surface CSV has {} rows, not a square grid", rows.len())));
        }
        let grid = GridSpec {
            alpha_min: rows[0].0,
            alpha_max: rows[(n - 1) * n].0,
            beta_min: rows[0].1,
            beta_max: rows[n - 1].1,
            n_per_axis: n,
        };
        if !(grid.alpha_min < grid.alpha_max) || !(grid.beta_min < grid.beta_max) {
            return Err(Error::Config("surface CSV rows are not in alpha-major order".into()));
        }
        LossSurface::from_values(grid, rows.into_iter().map(|r| r.2).collect(), eval_batch_id)
    }
}

/// 17-significant-digit scientific notation, used in every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell_loss(theta0: &ParamVector, spec: &ModelSpec, batch: &Batch, dirs: &DirectionPair, a: f64, b: f64) -> Result<f64> {
    if a == 0.0 && b == 0.0 {
        return evaluate_loss(theta0, spec, batch);
    }
    let point = ParamVector::new(
        theta0
            .iter()
            .zip(dirs.delta1.iter().zip(&dirs.delta2))
            .map(|(t, (d1, d2))| t + a * d1 + b * d2)
            .collect(),
    );
    evaluate_loss(&point, spec, batch)
}

fn check_inputs(theta0: &ParamVector, spec: &ModelSpec, dirs: &DirectionPair, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    spec.validate()?;
    let n = spec.param_count();
    for (what, len) in [
        ("theta0 length", theta0.len()),
        ("delta1 length", dirs.delta1.len()),
        ("delta2 length", dirs.delta2.len()),
    ] {
        if len != n {
            return Err(Error::dim(what, n, len));
        }
    }
    Ok(())
}

fn wrap_cell(grid: &GridSpec, k: usize, r: Result<f64>) -> Result<f64> {
    let n = grid.n_per_axis;
    match r {
        Err(Error::Numeric(msg)) => Err(Error::Numeric(format!(
            "{msg} at alpha={}, beta={}",
            grid.alpha(k / n),
            grid.beta(k % n)
        ))),
        other => other,
    }
}

/// Evaluates every grid cell in parallel; results are assembled by index.
pub fn evaluate_surface(
    theta0: &ParamVector,
    spec: &ModelSpec,
    eval_batch: &Batch,
    eval_batch_id: &str,
    dirs: &DirectionPair,
    grid: &GridSpec,
) -> Result<LossSurface> {
    check_inputs(theta0, spec, dirs, grid)?;
    let n = grid.n_per_axis;
    let values = (0..n * n)
        .into_par_iter()
        .map(|k| wrap_cell(grid, k, cell_loss(theta0, spec, eval_batch, dirs, grid.alpha(k / n), grid.beta(k % n))))
        .collect::<Result<Vec<_>>>()?;
    LossSurface::from_values(*grid, values, eval_batch_id)
}

/// Single-threaded twin of [`evaluate_surface`].
pub fn evaluate_surface_serial(
    theta0: &ParamVector,
    spec: &ModelSpec,
    eval_batch: &Batch,
    eval_batch_id: &str,
    dirs: &DirectionPair,
    grid: &GridSpec,
) -> Result<LossSurface> {
    check_inputs(theta0, spec, dirs, grid)?;
    let n = grid.n_per_axis;
    let values = (0..n * n)
        .map(|k| wrap_cell(grid, k, cell_loss(theta0, spec, eval_batch, dirs, grid.alpha(k / n), grid.beta(k % n))))
        .collect::<Result<Vec<_>>>()?;
    LossSurface::from_values(*grid, values, eval_batch_id)
}
