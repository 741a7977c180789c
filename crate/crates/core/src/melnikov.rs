//! First- and second-order Melnikov functions of the piecewise family, by the
//! telescoped closed forms and by zone-split quadrature.
//!
//! Along the circle `x = r sin t, y = r cos t` the orbit meets the line `x = a_i`
//! (for `a_i < r`) at `t_i = asin(a_i / r)` on the way out and at `pi - t_i` on the
//! way back, so every integrand below is smooth between consecutive crossing times.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{HarnessSystem, PerturbedSystem, ShapeFunction, ZonePartition};
use crate::quadrature::{integrate, integrate_pieces, QuadResult, QuadSettings};

/// Default absolute tolerance for Melnikov quadratures.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Grazing threshold `1e-9 * max(1, r)`.
pub fn default_grazing_tol(r: f64) -> f64 {
    1e-9 * r.abs().max(1.0)
}

/// A maximal time interval on which the orbit stays in one zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub zone: usize,
}

/// Crossing times of the circle of radius `r` with the discontinuity lines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingSchedule {
    pub r: f64,
    /// Segments covering `[0, 2 pi)` in order.
    pub segments: Vec<Segment>,
    /// `asin(a_i / r)` for `i = 1..m` followed by their reflections `pi - t_i`, ascending.
    pub crossing_times: Vec<f64>,
    /// Largest zone visited: `a_m < r <= a_{m+1}` after grazing resolution.
    pub m: usize,
    /// `|r - a_i| < tol` for some `i`.
    pub grazing: bool,
}

/// Builds the crossing schedule. A breakpoint within `tol` of `r` is treated as
/// touched but not crossed, and flags the schedule as grazing.
pub fn crossing_schedule(partition: &ZonePartition, r: f64, tol: f64) -> Result<CrossingSchedule> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::invalid(format!("orbit radius must be positive and finite, got {r}")));
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::invalid(format!("grazing tolerance must be nonnegative, got {tol}")));
    }
    let breaks = partition.breakpoints();
    let grazing = breaks.iter().any(|&a| (r - a).abs() < tol);
    let m = breaks
        .iter()
        .take_while(|&&a| a < r && (r - a).abs() >= tol)
        .count();

    let outward: Vec<f64> = breaks[..m].iter().map(|&a| (a / r).asin()).collect();
    let mut crossing_times = outward.clone();
    crossing_times.extend(outward.iter().rev().map(|&t| PI - t));

    let mut segments = Vec::with_capacity(2 * m + 1);
    let mut start = 0.0;
    for (i, &t) in outward.iter().enumerate() {
        segments.push(Segment { start, end: t, zone: i });
        start = t;
    }
    for (k, &t) in outward.iter().enumerate().rev() {
        let end = PI - t;
        segments.push(Segment { start, end, zone: k + 1 });
        start = end;
    }
    segments.push(Segment {
        start,
        end: 2.0 * PI,
        zone: 0,
    });

    Ok(CrossingSchedule {
        r,
        segments,
        crossing_times,
        m,
        grazing,
    })
}

/// The three pieces of the first Melnikov integral over `[0, pi/2]`,
/// `[pi/2, 3 pi/2]` and `[3 pi/2, 2 pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MelnikovPieces {
    pub first_quarter: f64,
    pub middle_half: f64,
    pub last_quarter: f64,
    pub total: f64,
}

/// Closed form of the first Melnikov function from the telescoped zone sums.
///
/// With `m` the number of breakpoints strictly below `r` and
/// `S = sum_{i=1..m} (alpha_i - alpha_{i-1}) h(a_i)`:
///
/// ```text
/// first_quarter = h(r) alpha_m - h(0) alpha_0 - S
/// middle_half   = -h(r) alpha_m + h(-r) alpha_0 + S
/// last_quarter  = h(0) alpha_0 - h(-r) alpha_0
/// ```
pub fn m1_closed_form(partition: &ZonePartition, shape: &ShapeFunction, r: f64) -> Result<MelnikovPieces> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::invalid(format!("orbit radius must be positive and finite, got {r}")));
    }
    let alpha = partition.slopes();
    let breaks = partition.breakpoints();
    let m = breaks.iter().take_while(|&&a| a < r).count();
    let jump_sum: f64 = (1..=m)
        .map(|i| (alpha[i] - alpha[i - 1]) * shape.h(breaks[i - 1]))
        .sum();
    let h_r = shape.h(r);
    let h_0 = shape.h(0.0);
    let h_neg = shape.h(-r);

    let first_quarter = h_r * alpha[m] - h_0 * alpha[0] - jump_sum;
    let middle_half = -h_r * alpha[m] + h_neg * alpha[0] + jump_sum;
    let last_quarter = h_0 * alpha[0] - h_neg * alpha[0];
    Ok(MelnikovPieces {
        first_quarter,
        middle_half,
        last_quarter,
        total: first_quarter + middle_half + last_quarter,
    })
}

/// `int_0^{2 pi} r cos t g(r sin t, ., 0) dt`, split at every crossing time.
pub fn m1_quadrature(system: &PerturbedSystem, r: f64, tol: f64) -> Result<f64> {
    m1_quadrature_detailed(system, r, tol).map(|q| q.value)
}

pub fn m1_quadrature_detailed(system: &PerturbedSystem, r: f64, tol: f64) -> Result<QuadResult> {
    let schedule = crossing_schedule(&system.partition, r, default_grazing_tol(r))?;
    integrate_over_schedule(&schedule, tol, |zone, t| {
        let (s, c) = t.sin_cos();
        r * c * system.g_in_zone(zone, r * s, r * c, 0.0)
    })
}

fn integrate_over_schedule<F: Fn(usize, f64) -> f64>(
    schedule: &CrossingSchedule,
    tol: f64,
    integrand: F,
) -> Result<QuadResult> {
    let per_segment = QuadSettings::with_tol(tol / schedule.segments.len() as f64);
    let mut total = QuadResult {
        value: 0.0,
        abs_error: 0.0,
        evaluations: 0,
    };
    for seg in &schedule.segments {
        let q = integrate(|t| integrand(seg.zone, t), seg.start, seg.end, per_segment).map_err(
            |e| match e {
                Error::NumericalFailure { message, estimate, achieved } => Error::NumericalFailure {
                    message,
                    estimate: total.value + estimate,
                    achieved: total.abs_error + achieved,
                },
                other => other,
            },
        )?;
        total.value += q.value;
        total.abs_error += q.abs_error;
        total.evaluations += q.evaluations;
    }
    Ok(total)
}

/// Cumulative integral `D(t) = int_0^t div f(tau_r(s)) ds`, tabulated at the knots
/// and extended inside each panel by one more quadrature.
struct CumulativeDivergence<'a, H: HarnessSystem + ?Sized> {
    harness: &'a H,
    r: f64,
    knots: Vec<f64>,
    at_knots: Vec<f64>,
    inner: QuadSettings,
}

impl<'a, H: HarnessSystem + ?Sized> CumulativeDivergence<'a, H> {
    fn new(harness: &'a H, r: f64, knots: Vec<f64>, tol: f64) -> Result<Self> {
        let inner = QuadSettings::with_tol(tol);
        let div = |t: f64| {
            let [x, y] = harness.orbit(r, t);
            harness.divergence(x, y)
        };
        let mut at_knots = vec![0.0];
        for w in knots.windows(2) {
            let q = integrate(div, w[0], w[1], inner)?;
            at_knots.push(at_knots.last().unwrap() + q.value);
        }
        Ok(Self {
            harness,
            r,
            knots,
            at_knots,
            inner,
        })
    }

    fn value(&self, panel: usize, t: f64) -> f64 {
        let start = self.knots[panel];
        let div = |s: f64| {
            let [x, y] = self.harness.orbit(self.r, s);
            self.harness.divergence(x, y)
        };
        match integrate(div, start, t, self.inner) {
            Ok(q) => self.at_knots[panel] + q.value,
            Err(_) => f64::NAN,
        }
    }
}

fn check_orbit_family<H: HarnessSystem + ?Sized>(harness: &H, r: f64) -> Result<f64> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::invalid(format!("orbit parameter must be positive and finite, got {r}")));
    }
    let period = harness.period(r);
    if !period.is_finite() || period <= 0.0 {
        return Err(Error::invalid(format!("orbit period must be positive, got {period}")));
    }
    let p0 = harness.orbit(r, 0.0);
    let p1 = harness.orbit(r, period);
    let scale = p0[0].abs().max(p0[1].abs()).max(1.0);
    if (p0[0] - p1[0]).hypot(p0[1] - p1[1]) > 1e-8 * scale {
        return Err(Error::invalid(format!(
            "orbit family is not closed at r = {r}: tau(0) = {p0:?}, tau(T) = {p1:?}"
        )));
    }
    // the parametrization must be a solution of the unperturbed field
    let dt = 1e-5 * period;
    for k in 0..8 {
        let t = period * (k as f64 + 0.5) / 8.0;
        let a = harness.orbit(r, t - dt);
        let b = harness.orbit(r, t + dt);
        let p = harness.orbit(r, t);
        let f = harness.unperturbed(p[0], p[1]);
        let tangent = [(b[0] - a[0]) / (2.0 * dt), (b[1] - a[1]) / (2.0 * dt)];
        let fscale = f[0].abs().max(f[1].abs()).max(1.0);
        if (tangent[0] - f[0]).hypot(tangent[1] - f[1]) > 1e-5 * fscale {
            return Err(Error::invalid(format!(
                "orbit parametrization is not a solution of the unperturbed field at r = {r}, t = {t}"
            )));
        }
    }
    Ok(period)
}

fn harness_knots<H: HarnessSystem + ?Sized>(harness: &H, r: f64, period: f64) -> Vec<f64> {
    const MIN_PANELS: usize = 16;
    let mut knots: Vec<f64> = (0..=MIN_PANELS)
        .map(|k| period * k as f64 / MIN_PANELS as f64)
        .collect();
    knots.extend(
        harness
            .discontinuity_times(r)
            .into_iter()
            .filter(|&t| t > 0.0 && t < period),
    );
    knots.sort_by(|a, b| a.total_cmp(b));
    knots.dedup();
    knots
}

/// General first Melnikov function
/// `int_0^T exp(-int_0^t div f) (f1 g2 - g1 f2)(tau_r(t)) dt` for a harness system.
pub fn m1_general<H: HarnessSystem + ?Sized>(harness: &H, r: f64, tol: f64) -> Result<f64> {
    let period = check_orbit_family(harness, r)?;
    let knots = harness_knots(harness, r, period);
    let panels = knots.len() - 1;
    let cumulative = CumulativeDivergence::new(harness, r, knots.clone(), tol * 1e-2)?;
    let mut total = 0.0;
    let mut err = 0.0;
    for p in 0..panels {
        // Kronrod nodes are interior, so a jump sitting on a knot is never sampled
        let integrand = |t: f64| {
            let [x, y] = harness.orbit(r, t);
            let f = harness.unperturbed(x, y);
            let g = harness.perturbation(x, y, 0.0);
            let weight = (-cumulative.value(p, t)).exp();
            weight * (f[0] * g[1] - g[0] * f[1])
        };
        let q = integrate(integrand, knots[p], knots[p + 1], QuadSettings::with_tol(tol / panels as f64))?;
        total += q.value;
        err += q.abs_error;
    }
    if !total.is_finite() {
        return Err(Error::NumericalFailure {
            message: "non-finite general Melnikov integral".into(),
            estimate: total,
            achieved: err,
        });
    }
    Ok(total)
}

/// `pi r^2`: the second Melnikov function of the family.
pub fn m2_closed_form(r: f64) -> Result<f64> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::invalid(format!("orbit radius must be positive and finite, got {r}")));
    }
    Ok(PI * r * r)
}

/// How `dg/deps` at `eps = 0` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum EpsDerivative {
    /// Exact value `y` for this family.
    #[default]
    Analytic,
    /// Central difference with step `1e-6 * max(1, |y|)`.
    FiniteDifference,
}

/// Points at which the zero-divergence precondition is sampled: a few per segment,
/// strictly inside it.
fn precondition_samples(schedule: &CrossingSchedule) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for seg in &schedule.segments {
        for frac in [0.25, 0.5, 0.75] {
            out.push((seg.zone, seg.start + frac * (seg.end - seg.start)));
        }
    }
    out
}

/// `oint dg/deps(x, y, 0) dx - df/deps(x, y, 0) dy` along the circle of radius `r`,
/// after checking the zero-divergence precondition on every visited strip.
pub fn m2_quadrature(system: &PerturbedSystem, r: f64, tol: f64, mode: EpsDerivative) -> Result<f64> {
    let schedule = crossing_schedule(&system.partition, r, default_grazing_tol(r))?;
    for (_, t) in precondition_samples(&schedule) {
        let (s, c) = t.sin_cos();
        let (x, y) = (r * s, r * c);
        if system.partition.breakpoint_at(x).is_some() {
            continue;
        }
        let div = system.divergence_at_eps0(x, y)?;
        if div != 0.0 {
            return Err(Error::Precondition {
                message: format!("divergence of the perturbation at eps = 0 is {div}, not 0"),
                x,
                y,
            });
        }
    }
    let q = integrate_over_schedule(&schedule, tol, |zone, t| {
        let (s, c) = t.sin_cos();
        let (x, y) = (r * s, r * c);
        let dg = match mode {
            EpsDerivative::Analytic => system.dg_deps_at_eps0(x, y),
            EpsDerivative::FiniteDifference => {
                let d = 1e-6 * y.abs().max(1.0);
                (system.g_in_zone(zone, x, y, d) - system.g_in_zone(zone, x, y, -d)) / (2.0 * d)
            }
        };
        // dx = r cos t dt; the f-part of the perturbation is zero
        dg * r * c
    })?;
    Ok(q.value)
}

/// Second-order integral for a harness system, with `d/deps` by central differences.
/// Fails with a precondition error when `dg1/dx + dg2/dy` does not vanish at `eps = 0`.
pub fn m2_general<H: HarnessSystem + ?Sized>(harness: &H, r: f64, tol: f64) -> Result<f64> {
    let period = check_orbit_family(harness, r)?;
    let knots = harness_knots(harness, r, period);
    for w in knots.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let [x, y] = harness.orbit(r, t);
        let div = harness.perturbation_divergence_at_eps0(x, y)?;
        if div.abs() > 1e-7 {
            return Err(Error::Precondition {
                message: format!("divergence of the perturbation at eps = 0 is {div}, not 0"),
                x,
                y,
            });
        }
    }
    let integrand = |t: f64| {
        let [x, y] = harness.orbit(r, t);
        let f = harness.unperturbed(x, y);
        let d = 1e-6;
        let gp = harness.perturbation(x, y, d);
        let gm = harness.perturbation(x, y, -d);
        let dg = [(gp[0] - gm[0]) / (2.0 * d), (gp[1] - gm[1]) / (2.0 * d)];
        dg[1] * f[0] - dg[0] * f[1]
    };
    Ok(integrate_pieces(integrand, &knots, QuadSettings::with_tol(tol))?.value)
}

/// One row of a Melnikov sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MelnikovSample {
    pub r: f64,
    pub m1_closed: f64,
    pub m1_quad: f64,
    pub m2_closed: f64,
    pub m2_quad: f64,
    pub grazing: bool,
    /// Failure message when any field could not be computed (those fields are NaN).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Sampled Melnikov functions over increasing radii.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MelnikovCurve {
    pub samples: Vec<MelnikovSample>,
    /// Order of the first Melnikov function that does not vanish on the samples.
    pub first_nonvanishing_order: Option<usize>,
    pub quad_tol: f64,
}

impl MelnikovCurve {
    pub const CSV_HEADER: [&'static str; 6] = ["r", "m1_closed", "m1_quad", "m2_closed", "m2_quad", "grazing"];

    pub fn max_abs_m1(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.m1_quad.abs().max(s.m1_closed.abs()))
            .fold(0.0, f64::max)
    }

    pub fn min_m2(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.m2_quad.min(s.m2_closed))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for s in &self.samples {
            w.write_record([
                crate::io::fmt17(s.r),
                crate::io::fmt17(s.m1_closed),
                crate::io::fmt17(s.m1_quad),
                crate::io::fmt17(s.m2_closed),
                crate::io::fmt17(s.m2_quad),
                s.grazing.to_string(),
            ])?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LienardHarness;

    fn example() -> PerturbedSystem {
        PerturbedSystem::example()
    }

    #[test]
    fn schedule_inside_first_zone() {
        let s = crossing_schedule(&example().partition, 0.5, 1e-9).unwrap();
        assert!(s.crossing_times.is_empty());
        assert_eq!(s.segments, vec![Segment { start: 0.0, end: 2.0 * PI, zone: 0 }]);
        assert!(!s.grazing);
        assert_eq!(s.m, 0);
    }

    #[test]
    fn schedule_crossing_one_line() {
        let p = example().partition;
        let s = crossing_schedule(&p, 1.5, 1e-9).unwrap();
        assert_eq!(s.crossing_times.len(), 2);
        assert!((s.crossing_times[0] - 0.729_727_656_226_966_3).abs() < 1e-12);
        assert!((s.crossing_times[1] - 2.411_864_997_362_826_6).abs() < 1e-12);
        let zones: Vec<usize> = s.segments.iter().map(|g| g.zone).collect();
        assert_eq!(zones, vec![0, 1, 0]);
        // dense sampling oracle
        for k in 0..20_000 {
            let t = 2.0 * PI * (k as f64 + 0.5) / 20_000.0;
            let seg = s.segments.iter().find(|g| t >= g.start && t < g.end).unwrap();
            assert_eq!(seg.zone, p.zone_index(1.5 * t.sin()).unwrap(), "t = {t}");
        }
    }

    #[test]
    fn schedule_grazing_and_errors() {
        let p = example().partition;
        let s = crossing_schedule(&p, 1.0, 1e-9).unwrap();
        assert!(s.grazing);
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].zone, 0);
        assert!(crossing_schedule(&p, 0.0, 1e-9).is_err());
        assert!(crossing_schedule(&p, -1.0, 1e-9).is_err());
        assert!(crossing_schedule(&p, f64::NAN, 1e-9).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let sys = example();
        let lin = m1_closed_form(&sys.partition, &ShapeFunction::Linear, 1.5).unwrap();
        assert!((lin.first_quarter - 1.75).abs() < 1e-15);
        assert!((lin.middle_half + 0.625).abs() < 1e-15);
        assert!((lin.last_quarter + 1.125).abs() < 1e-15);
        assert_eq!(lin.total, 0.0);
        let cub = m1_closed_form(&sys.partition, &ShapeFunction::Cubic, 1.5).unwrap();
        assert!((cub.first_quarter - 2.28125).abs() < 1e-15);
        assert!((cub.middle_half + 1.015625).abs() < 1e-15);
        assert!((cub.last_quarter + 1.265625).abs() < 1e-15);
        assert_eq!(cub.total, 0.0);
        assert!(m1_closed_form(&sys.partition, &ShapeFunction::Linear, 0.0).is_err());
    }

    #[test]
    fn closed_form_pieces_match_piecewise_quadrature() {
        // each piece separately by quadrature over its quarter/half
        let sys = example();
        for &r in &[0.5, 1.5, 2.5] {
            for shape in [ShapeFunction::Linear, ShapeFunction::Cubic] {
                let sys = PerturbedSystem::new(sys.partition.clone(), shape.clone());
                let sched = crossing_schedule(&sys.partition, r, 1e-9).unwrap();
                let mut knots = vec![0.0, PI / 2.0, 1.5 * PI, 2.0 * PI];
                knots.extend(sched.crossing_times.iter().copied());
                knots.sort_by(|a, b| a.total_cmp(b));
                let piece = |lo: f64, hi: f64| {
                    let mut sum = 0.0;
                    for w in knots.windows(2).filter(|w| w[0] >= lo && w[1] <= hi) {
                        let mid = 0.5 * (w[0] + w[1]);
                        let zone = sys.partition.zone_index(r * mid.sin()).unwrap();
                        sum += integrate(
                            |t: f64| r * t.cos() * sys.g_in_zone(zone, r * t.sin(), 0.0, 0.0),
                            w[0],
                            w[1],
                            QuadSettings::with_tol(1e-12),
                        )
                        .unwrap()
                        .value;
                    }
                    sum
                };
                let cf = m1_closed_form(&sys.partition, &shape, r).unwrap();
                assert!((piece(0.0, PI / 2.0) - cf.first_quarter).abs() < 1e-11);
                assert!((piece(PI / 2.0, 1.5 * PI) - cf.middle_half).abs() < 1e-11);
                assert!((piece(1.5 * PI, 2.0 * PI) - cf.last_quarter).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn m1_quadrature_examples() {
        let sys = example();
        assert!(m1_quadrature(&sys, 1.5, 1e-10).unwrap().abs() <= 1e-10);
        assert!(m1_quadrature(&sys, 0.5, 1e-10).unwrap().abs() <= 1e-12);
        let cubic = PerturbedSystem::new(sys.partition.clone(), ShapeFunction::Cubic);
        let q = m1_quadrature(&cubic, 2.5, 1e-10).unwrap();
        let cf = m1_closed_form(&cubic.partition, &cubic.shape, 2.5).unwrap();
        assert!((q - cf.total).abs() <= 1e-10);
    }

    #[test]
    fn scale_covariance_of_linear_pieces() {
        let a = ZonePartition::new(vec![0.7, 1.3, 2.2], vec![-1.0, 0.5, 2.0, 2.5]).unwrap();
        let a2 = ZonePartition::new(vec![1.4, 2.6, 4.4], vec![-1.0, 0.5, 2.0, 2.5]).unwrap();
        for &r in &[0.5, 1.0, 1.9, 3.0] {
            let p = m1_closed_form(&a, &ShapeFunction::Linear, r).unwrap();
            let q = m1_closed_form(&a2, &ShapeFunction::Linear, 2.0 * r).unwrap();
            assert!((q.first_quarter - 4.0 * p.first_quarter).abs() < 1e-12);
            assert!((q.middle_half - 4.0 * p.middle_half).abs() < 1e-12);
            assert!((q.last_quarter - 4.0 * p.last_quarter).abs() < 1e-12);
            assert!(q.total.abs() < 1e-12);
        }
    }

    #[test]
    fn m1_general_van_der_pol() {
        let vdp = LienardHarness::van_der_pol();
        let v1 = m1_general(&vdp, 1.0, 1e-10).unwrap();
        assert!((v1 - 0.75 * PI).abs() < 1e-9, "{v1}");
        let v2 = m1_general(&vdp, 2.0, 1e-10).unwrap();
        assert!(v2.abs() < 1e-9, "{v2}");
        // brute-force midpoint rule oracle at r = 1.3
        let r: f64 = 1.3;
        let n = 200_000;
        let h = 2.0 * PI / n as f64;
        let brute: f64 = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) * h;
                let (x, y) = (r * t.sin(), r * t.cos());
                y * (1.0 - x * x) * y * h
            })
            .sum();
        assert!((m1_general(&vdp, r, 1e-10).unwrap() - brute).abs() < 1e-8);
    }

    #[test]
    fn m1_general_matches_family_quadrature() {
        let sys = example();
        for &r in &[0.5, 1.5, 2.5, 3.7] {
            let g = m1_general(&sys, r, 1e-11).unwrap();
            let q = m1_quadrature(&sys, r, 1e-11).unwrap();
            assert!((g - q).abs() <= 1e-10, "r = {r}: {g} vs {q}");
        }
        let zero = LienardHarness { damping: vec![] };
        assert!(m1_general(&zero, 1.7, 1e-10).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn m1_general_rejects_bad_orbit_family() {
        struct Broken;
        impl HarnessSystem for Broken {
            fn unperturbed(&self, x: f64, y: f64) -> [f64; 2] {
                [y, -x]
            }
            fn perturbation(&self, _x: f64, _y: f64, _e: f64) -> [f64; 2] {
                [0.0, 1.0]
            }
            fn orbit(&self, r: f64, t: f64) -> [f64; 2] {
                [r * t.cos(), r * t.sin()] // wrong orientation
            }
            fn period(&self, _r: f64) -> f64 {
                2.0 * PI
            }
            fn label(&self) -> String {
                "broken".into()
            }
        }
        assert!(matches!(m1_general(&Broken, 1.0, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn cumulative_divergence_factor() {
        // Harness with nonzero divergence along the circle: we only check the
        // cumulative integral, whose exact value is int_0^t sin(s) ds = 1 - cos t.
        struct DivSin;
        impl HarnessSystem for DivSin {
            fn unperturbed(&self, x: f64, y: f64) -> [f64; 2] {
                [y, -x]
            }
            fn perturbation(&self, _x: f64, _y: f64, _e: f64) -> [f64; 2] {
                [0.0, 0.0]
            }
            fn orbit(&self, r: f64, t: f64) -> [f64; 2] {
                [r * t.sin(), r * t.cos()]
            }
            fn period(&self, _r: f64) -> f64 {
                2.0 * PI
            }
            fn divergence(&self, x: f64, _y: f64) -> f64 {
                x
            }
            fn label(&self) -> String {
                "div-sin".into()
            }
        }
        let knots = harness_knots(&DivSin, 1.0, 2.0 * PI);
        let cd = CumulativeDivergence::new(&DivSin, 1.0, knots.clone(), 1e-13).unwrap();
        for p in 0..knots.len() - 1 {
            let t = 0.5 * (knots[p] + knots[p + 1]);
            assert!((cd.value(p, t) - (1.0 - t.cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn m2_examples() {
        let sys = example();
        assert_eq!(m2_closed_form(1.0).unwrap(), PI);
        assert!((m2_closed_form(1.5).unwrap() - 7.068_583_470_577_035).abs() < 1e-14);
        assert!(m2_closed_form(1e-9).unwrap() > 0.0);
        assert!(m2_closed_form(0.0).is_err());
        let a = m2_quadrature(&sys, 1.0, 1e-10, EpsDerivative::Analytic).unwrap();
        assert!((a - PI).abs() <= 1e-10);
        let b = m2_quadrature(&sys, 2.0, 1e-10, EpsDerivative::Analytic).unwrap();
        assert!((b - 4.0 * PI).abs() <= 1e-10);
        let fd = m2_quadrature(&sys, 1.5, 1e-10, EpsDerivative::FiniteDifference).unwrap();
        let an = m2_quadrature(&sys, 1.5, 1e-10, EpsDerivative::Analytic).unwrap();
        assert!((fd - an).abs() <= 1e-8);
    }

    #[test]
    fn m2_general_checks_precondition() {
        let vdp = LienardHarness::van_der_pol();
        match m2_general(&vdp, 1.0, 1e-10) {
            Err(Error::Precondition { .. }) => {}
            other => panic!("expected precondition failure, got {other:?}"),
        }
        let sys = example();
        let v = m2_general(&sys, 1.5, 1e-10).unwrap();
        assert!((v - 2.25 * PI).abs() < 1e-7);
    }

    #[test]
    fn m2_over_r_squared_is_pi() {
        let sys = example();
        for &r in &[0.5, 1.0, 2.0, 5.0] {
            let v = m2_quadrature(&sys, r, 1e-10, EpsDerivative::Analytic).unwrap();
            assert!((v / (r * r) / PI - 1.0).abs() < 1e-8);
        }
    }
}
