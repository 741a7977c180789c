use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::melnikov::{
    default_grazing_tol, m1_closed_form, m1_quadrature, m2_closed_form, m2_quadrature, EpsDerivative,
    MelnikovCurve, MelnikovSample,
};
use crate::model::{PerturbedSystem, ZonePartition};

use super::map_ordered;

/// Moves `r` to `a_i + 10 * grazing_tol` when it lies within the grazing tolerance
/// of a breakpoint. Returns the (possibly moved) radius and whether it was moved.
pub fn nudge_off_breakpoints(partition: &ZonePartition, r: f64) -> (f64, bool) {
    for &a in partition.breakpoints() {
        let tol = default_grazing_tol(a);
        if (r - a).abs() < tol {
            return (a + 10.0 * tol, true);
        }
    }
    (r, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// `count` radii from `r_min` to `r_max` inclusive.
pub fn radius_grid(r_min: f64, r_max: f64, count: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if !(r_min.is_finite() && r_max.is_finite() && r_min > 0.0 && r_max > r_min) {
        return Err(Error::invalid(format!(
            "radius range must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    if count < 2 {
        return Err(Error::invalid(format!("radius grid needs at least 2 points, got {count}")));
    }
    let last = (count - 1) as f64;
    let mut grid = (0..count)
        .map(|k| {
            let s = k as f64 / last;
            match spacing {
                Spacing::Linear => r_min + (r_max - r_min) * s,
                Spacing::Log => r_min * (r_max / r_min).powf(s),
            }
        })
        .collect::<Vec<_>>();
    grid[count - 1] = r_max;
    Ok(grid)
}

fn validate_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::invalid("radius grid is empty"));
    }
    if r_grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("radius grid must be positive and finite"));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radius grid must be strictly increasing"));
    }
    Ok(())
}

fn sample(system: &PerturbedSystem, r_in: f64, tol: f64) -> MelnikovSample {
    let (r, grazing) = nudge_off_breakpoints(&system.partition, r_in);
    let mut errors = Vec::new();
    let mut take = |v: Result<f64>| {
        v.unwrap_or_else(|e| {
            errors.push(e.to_string());
            f64::NAN
        })
    };
    let m1_closed = take(m1_closed_form(&system.partition, &system.shape, r).map(|p| p.total));
    let m1_quad = take(m1_quadrature(system, r, tol));
    let m2_closed = take(m2_closed_form(r));
    let m2_quad = take(m2_quadrature(system, r, tol, EpsDerivative::Analytic));
    MelnikovSample {
        r,
        m1_closed,
        m1_quad,
        m2_closed,
        m2_quad,
        grazing,
        error: if errors.is_empty() { None } else { Some(errors.join("; ")) },
    }
}

/// First and second Melnikov functions, closed form and quadrature, on `r_grid`.
/// Failures are recorded on the affected sample and the sweep continues.
pub fn sweep_melnikov(system: &PerturbedSystem, r_grid: &[f64], tol: f64, jobs: usize) -> Result<MelnikovCurve> {
    validate_grid(r_grid)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let samples = map_ordered(r_grid, jobs, |&r| sample(system, r, tol));
    let m1_vanishes = samples
        .iter()
        .all(|s| s.m1_quad.abs() <= 2.0 * tol && s.m1_closed.abs() <= 2.0 * tol);
    let m2_vanishes = samples.iter().all(|s| s.m2_quad.abs() <= 2.0 * tol);
    let first_nonvanishing_order = if !m1_vanishes {
        Some(1)
    } else if !m2_vanishes {
        Some(2)
    } else {
        None
    };
    Ok(MelnikovCurve {
        samples,
        first_nonvanishing_order,
        quad_tol: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShapeFunction;
    use std::f64::consts::PI;

    #[test]
    fn linear_and_cubic_sweeps() {
        let lin = PerturbedSystem::example();
        let cub = PerturbedSystem::new(lin.partition.clone(), ShapeFunction::Cubic);
        for sys in [lin, cub] {
            let c = sweep_melnikov(&sys, &[0.5, 1.5, 2.5], 1e-10, 1).unwrap();
            assert_eq!(c.first_nonvanishing_order, Some(2));
            for (s, target) in c.samples.iter().zip([0.25 * PI, 2.25 * PI, 6.25 * PI]) {
                assert!(s.m1_closed.abs() <= 1e-10 && s.m1_quad.abs() <= 1e-10);
                assert!((s.m2_quad - target).abs() <= 1e-9);
                assert_eq!(s.m2_closed, target);
                assert!(s.error.is_none());
            }
        }
    }

    #[test]
    fn grazing_point_is_nudged_and_flagged() {
        let c = sweep_melnikov(&PerturbedSystem::example(), &[0.5, 1.0, 1.5], 1e-10, 1).unwrap();
        let s = &c.samples[1];
        assert!(s.grazing);
        assert_eq!(s.r, 1.0 + 10.0 * 1e-9);
        assert!(!c.samples[0].grazing && !c.samples[2].grazing);
    }

    #[test]
    fn parallel_sweep_is_order_deterministic() {
        let grid: Vec<f64> = (1..40).map(|k| 0.1 * k as f64).collect();
        let a = sweep_melnikov(&PerturbedSystem::example(), &grid, 1e-10, 1).unwrap();
        let b = sweep_melnikov(&PerturbedSystem::example(), &grid, 1e-10, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grids() {
        let g = radius_grid(0.25, 4.0, 76, Spacing::Linear).unwrap();
        assert_eq!(g.len(), 76);
        assert!((g[15] - 1.0).abs() < 1e-15 && g[75] == 4.0);
        let l = radius_grid(0.1, 10.0, 3, Spacing::Log).unwrap();
        assert!((l[1] - 1.0).abs() < 1e-15);
        assert!(radius_grid(1.0, 1.0, 5, Spacing::Linear).is_err());
        assert!(radius_grid(0.5, 1.0, 1, Spacing::Log).is_err());
    }

    #[test]
    fn bad_grids() {
        let sys = PerturbedSystem::example();
        assert!(sweep_melnikov(&sys, &[], 1e-10, 1).is_err());
        assert!(sweep_melnikov(&sys, &[1.0, 0.5], 1e-10, 1).is_err());
        assert!(sweep_melnikov(&sys, &[-1.0], 1e-10, 1).is_err());
    }
}
