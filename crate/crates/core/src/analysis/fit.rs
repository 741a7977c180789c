use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{displacement, DisplacementRecord, IntegrationSettings};
use crate::model::PerturbedSystem;

use super::map_ordered;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// Largest admissible epsilon.
    pub max_epsilon: f64,
    /// Allowed relative deviation of successive ratios from a common ratio.
    pub geometric_tol: f64,
    pub jobs: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_epsilon: 0.05,
            geometric_tol: 1e-6,
            jobs: 1,
        }
    }
}

/// Measured coefficients of `d(h, eps) ~ c1 eps + c2 eps^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionFit {
    pub r: f64,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub displacements: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c1_stderr: f64,
    pub c2_stderr: f64,
    /// 95% half-width for `c2` (Student t with `N - 2` degrees of freedom).
    pub c2_uncertainty: f64,
    /// Euclidean norm of `d - c1 eps - c2 eps^2`.
    pub residual_norm: f64,
    pub m1_target: f64,
    pub m2_target: f64,
}

impl ExpansionFit {
    pub fn c2_relative_error(&self) -> f64 {
        (self.c2 - self.m2_target).abs() / self.m2_target
    }
}

// two-sided 97.5% Student t quantiles for 1..=10 degrees of freedom
const T975: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];

fn t_quantile(dof: usize) -> f64 {
    match dof {
        0 => f64::INFINITY,
        1..=10 => T975[dof - 1],
        _ => 1.96 + 2.4 / dof as f64,
    }
}

/// Weighted least squares of `d` on `{eps, eps^2}` with residual scale `eps^3`, the
/// size of the truncated remainder. Equivalently, `d / eps^3` on `{eps^-2, eps^-1}`.
fn solve(eps: &[f64], d: &[f64]) -> (f64, f64, f64, f64) {
    let s = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut s_uu, mut s_uv, mut s_vv, mut s_uy, mut s_vy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&e, &di) in eps.iter().zip(d) {
        let v = s / e;
        let u = v * v;
        let y = di / (e * e * e);
        s_uu += u * u;
        s_uv += u * v;
        s_vv += v * v;
        s_uy += u * y;
        s_vy += v * y;
    }
    let det = s_uu * s_vv - s_uv * s_uv;
    let b1 = (s_vv * s_uy - s_uv * s_vy) / det;
    let b2 = (s_uu * s_vy - s_uv * s_uy) / det;
    let rss: f64 = eps
        .iter()
        .zip(d)
        .map(|(&e, &di)| {
            let v = s / e;
            (di / (e * e * e) - b1 * v * v - b2 * v).powi(2)
        })
        .sum();
    let sigma2 = rss / (eps.len() - 2).max(1) as f64;
    let c1_se = (sigma2 * s_vv / det).sqrt() * s * s;
    let c2_se = (sigma2 * s_uu / det).sqrt() * s;
    (b1 * s * s, b2 * s, c1_se, c2_se)
}

fn validate_grid(eps: &[f64], opts: &FitOptions) -> Result<Vec<f64>> {
    if eps.len() < 4 {
        return Err(Error::invalid(format!("expansion fit needs at least 4 epsilons, got {}", eps.len())));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::invalid("epsilons must be positive and finite"));
    }
    let mut sorted = eps.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("epsilons must be distinct"));
    }
    if sorted[0] > opts.max_epsilon {
        return Err(Error::invalid(format!(
            "largest epsilon {} exceeds the admissible {}",
            sorted[0], opts.max_epsilon
        )));
    }
    let ratio = sorted[1] / sorted[0];
    if sorted
        .windows(2)
        .any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > opts.geometric_tol)
    {
        return Err(Error::invalid("epsilon grid must be geometric"));
    }
    Ok(sorted)
}

/// Fits the measured displacement at radius `r` over a geometric epsilon grid.
pub fn fit_expansion(
    system: &PerturbedSystem,
    r: f64,
    eps_grid: &[f64],
    settings: &IntegrationSettings,
    opts: &FitOptions,
) -> Result<ExpansionFit> {
    let epsilons = validate_grid(eps_grid, opts)?;
    let records: Vec<Result<DisplacementRecord>> =
        map_ordered(&epsilons, opts.jobs, |&e| displacement(system, r, e, settings));
    let mut displacements = Vec::with_capacity(records.len());
    for (rec, e) in records.into_iter().zip(&epsilons) {
        match rec {
            Ok(rec) => displacements.push(rec.d),
            Err(err) => {
                return Err(match err {
                    Error::InvalidInput(m) => Error::InvalidInput(m),
                    other => Error::NumericalFailure {
                        message: format!("displacement at r = {r}, eps = {e} failed: {other}"),
                        estimate: f64::NAN,
                        achieved: f64::NAN,
                    },
                })
            }
        }
    }
    Ok(fit_from_measurements(r, epsilons, displacements))
}

pub(crate) fn fit_from_measurements(r: f64, epsilons: Vec<f64>, displacements: Vec<f64>) -> ExpansionFit {
    let (c1, c2, c1_stderr, c2_stderr) = solve(&epsilons, &displacements);
    let residual_norm = epsilons
        .iter()
        .zip(&displacements)
        .map(|(&e, &d)| (d - c1 * e - c2 * e * e).powi(2))
        .sum::<f64>()
        .sqrt();
    ExpansionFit {
        r,
        c1,
        c2,
        c1_stderr,
        c2_stderr,
        c2_uncertainty: t_quantile(epsilons.len() - 2) * c2_stderr,
        residual_norm,
        m1_target: 0.0,
        m2_target: PI * r * r,
        epsilons,
        displacements,
    }
}
