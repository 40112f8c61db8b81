//! Scalar sharpness measures of a sampled loss surface. Lower means flatter.
//!
//! - Surface curvature (SC): mean `|f_aa + f_bb|` over interior points, with
//!   central second differences in true curvature units.
//! - Average gradient (AG): mean over interior points of the Euclidean norm of
//!   the central-difference gradient.
//! - Mean absolute gradient (MAG): mean `|v - v'|` over every pair of
//!   axis-adjacent samples, `2 N (N - 1)` pairs in total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{fmt_f64, LossSurface};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub sc: f64,
    pub ag: f64,
    pub mag: f64,
    pub composite: f64,
    pub n_per_axis: usize,
    pub h_alpha: f64,
    pub h_beta: f64,
}

fn require(surface: &LossSurface, min: usize) -> Result<usize> {
    let n = surface.n();
    if n < min {
        return Err(Error::GridTooSmall { n, min });
    }
    Ok(n)
}

pub fn surface_curvature(surface: &LossSurface) -> Result<f64> {
    let n = require(surface, 3)?;
    let ha2 = surface.grid.h_alpha().powi(2);
    let hb2 = surface.grid.h_beta().powi(2);
    let mut sum = 0.0;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let c = surface.get(i, j);
            let faa = (surface.get(i + 1, j) - 2.0 * c + surface.get(i - 1, j)) / ha2;
            let fbb = (surface.get(i, j + 1) - 2.0 * c + surface.get(i, j - 1)) / hb2;
            sum += (faa + fbb).abs();
        }
    }
    Ok(sum / ((n - 2) * (n - 2)) as f64)
}

pub fn average_gradient(surface: &LossSurface) -> Result<f64> {
    let n = require(surface, 3)?;
    let two_ha = 2.0 * surface.grid.h_alpha();
    let two_hb = 2.0 * surface.grid.h_beta();
    let mut sum = 0.0;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let fa = (surface.get(i + 1, j) - surface.get(i - 1, j)) / two_ha;
            let fb = (surface.get(i, j + 1) - surface.get(i, j - 1)) / two_hb;
            sum += fa.hypot(fb);
        }
    }
    Ok(sum / ((n - 2) * (n - 2)) as f64)
}

pub fn mean_absolute_gradient(surface: &LossSurface) -> Result<f64> {
    let n = require(surface, 2)?;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n - 1 {
            sum += (surface.get(i, j + 1) - surface.get(i, j)).abs();
            sum += (surface.get(j + 1, i) - surface.get(j, i)).abs();
        }
    }
    Ok(sum / (2 * n * (n - 1)) as f64)
}

pub fn flatness_report(surface: &LossSurface) -> Result<FlatnessReport> {
    let sc = surface_curvature(surface)?;
    let ag = average_gradient(surface)?;
    let mag = mean_absolute_gradient(surface)?;
    Ok(FlatnessReport {
        sc,
        ag,
        mag,
        composite: (sc + ag + mag) / 3.0,
        n_per_axis: surface.n(),
        h_alpha: surface.grid.h_alpha(),
        h_beta: surface.grid.h_beta(),
    })
}

pub const FLATNESS_CSV_HEADER: &str = "checkpoint_id,sc,ag,mag,composite,n,h_alpha,h_beta";

impl FlatnessReport {
    /// One `checkpoint_id,sc,ag,mag,composite,n,h_alpha,h_beta` row, no newline.
    pub fn csv_row(&self, checkpoint_id: &str) -> String {
        format!(
            "{checkpoint_id},{},{},{},{},{},{},{}",
            fmt_f64(self.sc),
            fmt_f64(self.ag),
            fmt_f64(self.mag),
            fmt_f64(self.composite),
            self.n_per_axis,
            fmt_f64(self.h_alpha),
            fmt_f64(self.h_beta)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::GridSpec;
    use proptest::prelude::*;

    fn surf(f: impl Fn(f64, f64) -> f64) -> LossSurface {
        LossSurface::from_fn(GridSpec::default(), f).unwrap()
    }

    #[test]
    fn constant_surface_is_flat() {
        let r = flatness_report(&surf(|_, _| 7.25)).unwrap();
        assert_eq!((r.sc, r.ag, r.mag, r.composite), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn paraboloid_curvature() {
        assert!((surface_curvature(&surf(|a, b| a * a + b * b)).unwrap() - 4.0).abs() < 1e-9);
        let sc = surface_curvature(&surf(|a, b| 3.0 * a * a - 0.5 * b * b)).unwrap();
        assert!((sc - 5.0).abs() < 1e-9);
    }

    #[test]
    fn affine_surfaces() {
        let s = surf(|a, b| 3.0 * a + 4.0 * b);
        assert!(surface_curvature(&s).unwrap().abs() < 1e-12);
        assert!((average_gradient(&s).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mag_counts_both_pair_families() {
        let grid = GridSpec::symmetric(1.0, 21);
        assert!((grid.h_alpha() - 0.1).abs() < 1e-15);
        let s = LossSurface::from_fn(grid, |a, _| 3.0 * a).unwrap();
        assert!((mean_absolute_gradient(&s).unwrap() - 0.15).abs() < 1e-12);
        let neg = s.map_values(|v| -v).unwrap();
        assert_eq!(mean_absolute_gradient(&neg).unwrap(), mean_absolute_gradient(&s).unwrap());
    }

    #[test]
    fn grid_too_small() {
        let tiny = LossSurface::from_values(
            GridSpec { n_per_axis: 2, ..GridSpec::default() },
            vec![0.0; 4],
            "t",
        )
        .unwrap();
        assert!(matches!(surface_curvature(&tiny), Err(Error::GridTooSmall { n: 2, min: 3 })));
        assert!(matches!(average_gradient(&tiny), Err(Error::GridTooSmall { .. })));
        assert!(mean_absolute_gradient(&tiny).is_ok());
    }

    #[test]
    fn refinement_behaviour() {
        let coarse = GridSpec::symmetric(1.0, 21);
        let fine = GridSpec::symmetric(1.0, 41);
        let q = |a: f64, b: f64| 2.0 * a * a + b * b;
        let sc_c = surface_curvature(&LossSurface::from_fn(coarse, q).unwrap()).unwrap();
        let sc_f = surface_curvature(&LossSurface::from_fn(fine, q).unwrap()).unwrap();
        assert!((sc_c - sc_f).abs() < 1e-9);
        let lin = |a: f64, _b: f64| 3.0 * a;
        let mag_c = mean_absolute_gradient(&LossSurface::from_fn(coarse, lin).unwrap()).unwrap();
        let mag_f = mean_absolute_gradient(&LossSurface::from_fn(fine, lin).unwrap()).unwrap();
        assert!((mag_f - mag_c / 2.0).abs() < 1e-12);
    }

    #[test]
    fn sharper_bowls_score_higher() {
        let scores: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&a| flatness_report(&surf(|x, y| a * (x * x + y * y))).unwrap().composite)
            .collect();
        assert!(scores[0] < scores[1] && scores[1] < scores[2]);
    }

    #[test]
    fn csv_row_shape() {
        let r = flatness_report(&surf(|a, b| a * a + b)).unwrap();
        let row = r.csv_row("ckpt");
        assert_eq!(row.split(',').count(), FLATNESS_CSV_HEADER.split(',').count());
        assert!(row.starts_with("ckpt,"));
    }

    fn arb_surface() -> impl Strategy<Value = LossSurface> {
        (3usize..9).prop_flat_map(|n| {
            prop::collection::vec(-50.0f64..50.0, n * n).prop_map(move |v| {
                LossSurface::from_values(GridSpec::symmetric(1.0, n), v, "p").unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn shift_invariance(s in arb_surface(), c in -100.0f64..100.0) {
            let shifted = s.map_values(|v| v + c).unwrap();
            let (a, b) = (flatness_report(&s).unwrap(), flatness_report(&shifted).unwrap());
            // Adding c rounds each sample; differences change by at most a few ulps of |v|+|c|.
            let tol = 1e-12 * 150.0 / s.grid.h_alpha().powi(2);
            prop_assert!((a.sc - b.sc).abs() <= tol.max(1e-12));
            prop_assert!((a.ag - b.ag).abs() <= tol.max(1e-12));
            prop_assert!((a.mag - b.mag).abs() <= 1e-12 * 150.0);
        }

        #[test]
        fn degree_one_homogeneity(s in arb_surface(), c in 0.01f64..10.0) {
            let scaled = s.map_values(|v| v * c).unwrap();
            let (a, b) = (flatness_report(&s).unwrap(), flatness_report(&scaled).unwrap());
            for (x, y) in [(a.sc, b.sc), (a.ag, b.ag), (a.mag, b.mag)] {
                prop_assert!((x * c - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn composite_is_mean(s in arb_surface()) {
            let r = flatness_report(&s).unwrap();
            prop_assert_eq!(r.composite, (r.sc + r.ag + r.mag) / 3.0);
            prop_assert!(r.sc >= 0.0 && r.ag >= 0.0 && r.mag >= 0.0);
        }
    }
}
