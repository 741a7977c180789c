//! Event-driven integration of the discontinuous system, the Poincaré return map on
//! the section `{x = 0, y > 0}` and the displacement function `d = P - h`.
//!
//! Each step is taken with the field of a single zone. When the dense output shows
//! the step leaving the zone, the crossing time is located on the interpolant, the
//! step is redone to exactly that time, and integration restarts with the field of
//! the neighbouring zone. No step ever spans a discontinuity line.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{hamiltonian, HarnessSystem, PerturbedSystem};
use crate::ode::{dopri_step, step_factor, State, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum TimeDirection {
    #[default]
    Forward,
    Backward,
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrationSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Time tolerance for locating events on the dense output.
    pub event_time_tol: f64,
    /// Distance from a line below which a turning point counts as a tangency.
    pub grazing_tol: f64,
    /// Time allowed for one return to the section.
    pub max_return_time: f64,
    /// Integration stops with a divergence error beyond this multiple of the
    /// starting radius (at least 1).
    pub max_radius_factor: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Spacing of recorded samples; `None` records every accepted step.
    pub output_step: Option<f64>,
    pub direction: TimeDirection,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            event_time_tol: 1e-12,
            grazing_tol: 1e-9,
            max_return_time: 4.0 * PI,
            max_radius_factor: 10.0,
            initial_step: 1e-3,
            max_step: 0.25,
            max_steps: 2_000_000,
            output_step: None,
            direction: TimeDirection::Forward,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("event_time_tol", self.event_time_tol),
            ("max_return_time", self.max_return_time),
            ("max_radius_factor", self.max_radius_factor),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("integration setting {name} must be positive, got {v}")));
            }
        }
        if !(self.grazing_tol.is_finite() && self.grazing_tol >= 0.0) {
            return Err(Error::invalid("grazing_tol must be nonnegative"));
        }
        if let Some(dt) = self.output_step {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(format!("output step must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub zone: usize,
}

/// A crossing of, or tangency with, a line `x = a_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneEvent {
    pub t: f64,
    /// 1-based index `i` of the line `x = a_i`.
    pub breakpoint: usize,
    /// `+1` when `x` increases through the line in the direction of integration,
    /// `-1` when it decreases, `0` for a tangency that does not change the zone.
    pub direction: i8,
    /// Located `x`, before the state is placed exactly on the line.
    pub x: f64,
    pub y: f64,
    pub zone_before: usize,
    pub zone_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub events: Vec<ZoneEvent>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn final_sample(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// Crossing events only (tangencies excluded).
    pub fn crossings(&self) -> impl Iterator<Item = &ZoneEvent> {
        self.events.iter().filter(|e| e.direction != 0)
    }

    pub fn write_samples_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "zone"])?;
        for s in &self.samples {
            w.write_record([
                crate::io::fmt17(s.t),
                crate::io::fmt17(s.x),
                crate::io::fmt17(s.y),
                s.zone.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_events_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "breakpoint_index", "direction"])?;
        for e in &self.events {
            w.write_record([crate::io::fmt17(e.t), e.breakpoint.to_string(), e.direction.to_string()])?;
        }
        w.flush()
    }
}

/// First return to `{x = 0, y > 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionReturn {
    pub t: f64,
    pub y: f64,
    /// Full state at the return, `x` within round-off of zero.
    pub state: [f64; 2],
}

/// One evaluation of the displacement function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisplacementRecord {
    pub r: f64,
    pub h: f64,
    pub epsilon: f64,
    /// Return energy `y_return^2 / 2`.
    pub p: f64,
    /// `p - h`.
    pub d: f64,
}

impl DisplacementRecord {
    pub const CSV_HEADER: [&'static str; 5] = ["r", "h", "epsilon", "P", "d"];

    pub fn csv_row(&self) -> [String; 5] {
        use crate::io::fmt17;
        [fmt17(self.r), fmt17(self.h), fmt17(self.epsilon), fmt17(self.p), fmt17(self.d)]
    }
}

pub fn write_displacement_csv<W: std::io::Write>(records: &[DisplacementRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DisplacementRecord::CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()
}

/// A planar field that is smooth on each vertical strip between `breakpoints`.
trait SwitchedField {
    fn breakpoints(&self) -> &[f64];
    fn field(&self, zone: usize, s: State) -> State;

    fn zone_of(&self, x: f64) -> usize {
        self.breakpoints().partition_point(|&a| a < x)
    }
}

struct PiecewiseField<'a> {
    system: &'a PerturbedSystem,
    eps: f64,
}

impl SwitchedField for PiecewiseField<'_> {
    fn breakpoints(&self) -> &[f64] {
        self.system.partition.breakpoints()
    }

    fn field(&self, zone: usize, s: State) -> State {
        self.system.field_in_zone(zone, s, self.eps)
    }
}

struct HarnessField<'a, H: ?Sized> {
    harness: &'a H,
    eps: f64,
    unperturbed_only: bool,
}

impl<H: HarnessSystem + ?Sized> SwitchedField for HarnessField<'_, H> {
    fn breakpoints(&self) -> &[f64] {
        &[]
    }

    fn field(&self, _zone: usize, s: State) -> State {
        let f = self.harness.unperturbed(s[0], s[1]);
        if self.unperturbed_only {
            return f;
        }
        let g = self.harness.perturbation(s[0], s[1], self.eps);
        [f[0] + self.eps * g[0], f[1] + self.eps * g[1]]
    }
}

#[derive(Debug, Clone, Copy)]
enum Stop {
    AtTime(f64),
    SectionReturn,
}

#[derive(Debug, Clone, Copy)]
enum Found {
    Exit { theta: f64, line: f64, breakpoint: usize, up: bool },
    Section { theta: f64 },
}

impl Found {
    fn theta(&self) -> f64 {
        match *self {
            Found::Exit { theta, .. } | Found::Section { theta } => theta,
        }
    }
}

/// Bisection for the root of `g` on `[lo, hi]` given `g(lo) <= 0 < g(hi)` up to sign.
fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let glo = g(lo);
    let positive_at_lo = glo > 0.0;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == positive_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

struct Engine<'a, F: SwitchedField> {
    field: &'a F,
    settings: &'a IntegrationSettings,
    sign: f64,
    radius_bound: f64,
}

struct RunOutput {
    trajectory: Trajectory,
    section: Option<SectionReturn>,
}

impl<F: SwitchedField> Engine<'_, F> {
    fn eval(&self, zone: usize, s: State, stats: &mut StepStats) -> State {
        stats.evaluations += 1;
        let f = self.field.field(zone, s);
        [self.sign * f[0], self.sign * f[1]]
    }

    fn step(&self, zone: usize, s0: f64, y: State, f0: State, h: f64, stats: &mut StepStats) -> Step {
        let mut rhs = |st: State| self.eval(zone, st, stats);
        dopri_step(&mut rhs, s0, y, f0, h)
    }

    fn tangency_line(&self, x: f64) -> Option<usize> {
        self.field
            .breakpoints()
            .iter()
            .position(|&a| (x - a).abs() <= self.settings.grazing_tol)
            .map(|i| i + 1)
    }

    /// Scans an accepted step for the first zone exit or section crossing. Also
    /// reports a tangency when `x` turns around within `grazing_tol` of a line.
    fn scan(&self, step: &Step, zone: usize, stop: Stop) -> (Option<Found>, Option<(f64, usize)>) {
        let lower = if zone == 0 { f64::NEG_INFINITY } else { self.field.breakpoints()[zone - 1] };
        let upper = self.field.breakpoints().get(zone).copied().unwrap_or(f64::INFINITY);
        let tol = self.settings.event_time_tol / step.h.abs().max(f64::MIN_POSITIVE);
        let x_at = |th: f64| step.interpolate(th)[0];

        // x is monotone between turning points of the interpolant
        let vel = |th: f64| {
            let p = step.interpolate(th);
            self.field.field(zone, p)[0] * self.sign
        };
        let mut pieces = vec![0.0];
        let (va, vb) = (vel(0.0), vel(1.0));
        let mut turning = None;
        if va * vb < 0.0 {
            let te = bisect(vel, 0.0, 1.0, 1e-14);
            pieces.push(te);
            turning = Some(te);
        }
        pieces.push(1.0);

        let mut found = None;
        for w in pieces.windows(2) {
            let (ta, tb) = (w[0], w[1]);
            let (xa, xb) = (x_at(ta), x_at(tb));
            if xb > upper && xa <= upper {
                let theta = bisect(|th| x_at(th) - upper, ta, tb, tol);
                found = Some(Found::Exit { theta, line: upper, breakpoint: zone + 1, up: true });
            } else if xb < lower && xa >= lower {
                let theta = bisect(|th| x_at(th) - lower, ta, tb, tol);
                found = Some(Found::Exit { theta, line: lower, breakpoint: zone, up: false });
            }
            if let Stop::SectionReturn = stop {
                if xa < 0.0 && xb >= 0.0 {
                    let theta = bisect(x_at, ta, tb, tol);
                    let earlier = found.is_none_or(|f| theta < f.theta());
                    if earlier {
                        found = Some(Found::Section { theta });
                    }
                }
            }
            if found.is_some() {
                break;
            }
        }

        let grazing = match (found, turning) {
            (None, Some(te)) => self.tangency_line(x_at(te)).map(|i| (te, i)),
            (Some(f), Some(te)) if f.theta() > te => self.tangency_line(x_at(te)).map(|i| (te, i)),
            _ => None,
        };
        (found, grazing)
    }

    /// Redoes the step from `(s0, y)` so that it ends where `x = target`, refining the
    /// length by Newton iterations on the stepped state.
    #[allow(clippy::too_many_arguments)]
    fn land_on(
        &self,
        zone: usize,
        s0: f64,
        y: State,
        f0: State,
        h_guess: f64,
        target: f64,
        stats: &mut StepStats,
    ) -> Result<(f64, State)> {
        let mut h = h_guess;
        let mut st = self.step(zone, s0, y, f0, h, stats);
        for _ in 0..6 {
            let miss = st.y1[0] - target;
            if miss.abs() <= 4.0 * f64::EPSILON * target.abs().max(1.0) {
                break;
            }
            let vx = self.eval(zone, st.y1, stats)[0];
            if vx == 0.0 || !vx.is_finite() {
                break;
            }
            h -= miss / vx;
            st = self.step(zone, s0, y, f0, h, stats);
        }
        let miss = (st.y1[0] - target).abs();
        if miss > 1e-9 * target.abs().max(1.0) || !st.y1[1].is_finite() {
            return Err(Error::EventLocalization { t: s0 + h });
        }
        Ok((h, st.y1))
    }

    fn run(&self, t0: f64, start: State, stop: Stop) -> Result<RunOutput> {
        let settings = self.settings;
        let mut stats = StepStats::default();
        let mut samples = Vec::new();
        let mut events = Vec::new();
        let ext_t = |s: f64| t0 + self.sign * s;

        let mut zone = self.field.zone_of(start[0]);
        let mut y = start;
        let mut s = 0.0;
        let mut next_output = settings.output_step.map(|_| 0.0);
        let push = |samples: &mut Vec<TrajectorySample>, s: f64, st: State, zone: usize| {
            samples.push(TrajectorySample { t: ext_t(s), x: st[0], y: st[1], zone });
        };
        push(&mut samples, 0.0, y, zone);
        if let Some(next) = next_output.as_mut() {
            *next += settings.output_step.unwrap();
        }

        if start[1].abs() <= settings.grazing_tol {
            if let Some(i) = self.tangency_line(start[0]) {
                events.push(ZoneEvent {
                    t: t0,
                    breakpoint: i,
                    direction: 0,
                    x: start[0],
                    y: start[1],
                    zone_before: zone,
                    zone_after: zone,
                });
            }
        }

        let limit = match stop {
            Stop::AtTime(t_end) => t_end,
            Stop::SectionReturn => settings.max_return_time,
        };
        let mut f0 = self.eval(zone, y, &mut stats);
        let mut h = settings.initial_step.min(settings.max_step);

        loop {
            if stats.accepted + stats.rejected >= settings.max_steps {
                return Err(Error::NumericalFailure {
                    message: format!("step budget of {} exhausted", settings.max_steps),
                    estimate: ext_t(s),
                    achieved: h,
                });
            }
            let remaining = limit - s;
            if remaining <= 1e-14 * limit.max(1.0) {
                match stop {
                    Stop::AtTime(_) => {
                        if samples.last().is_none_or(|p| p.t != ext_t(s)) {
                            push(&mut samples, s, y, zone);
                        }
                        return Ok(RunOutput {
                            trajectory: Trajectory { samples, events, stats },
                            section: None,
                        });
                    }
                    Stop::SectionReturn => return Err(Error::NoReturn { max_time: settings.max_return_time }),
                }
            }
            let h_try = h.min(settings.max_step).min(remaining);
            let step = self.step(zone, s, y, f0, h_try, &mut stats);
            let err = step.error_norm(settings.rtol, settings.atol);
            if err.is_nan() || err > 1.0 {
                stats.rejected += 1;
                h = h_try * if err.is_finite() { step_factor(err, false) } else { 0.1 };
                if h < 1e-14 * s.max(1.0) {
                    return Err(Error::NumericalFailure {
                        message: "step size underflow".into(),
                        estimate: ext_t(s),
                        achieved: err,
                    });
                }
                continue;
            }
            stats.accepted += 1;

            let (found, grazing) = self.scan(&step, zone, stop);
            let step_end_theta = found.map_or(1.0, |f| f.theta());

            if let Some((te, i)) = grazing {
                let p = step.interpolate(te);
                events.push(ZoneEvent {
                    t: ext_t(s + te * h_try),
                    breakpoint: i,
                    direction: 0,
                    x: p[0],
                    y: p[1],
                    zone_before: zone,
                    zone_after: zone,
                });
            }

            if let (Some(dt), Some(next)) = (settings.output_step, next_output.as_mut()) {
                let s_stop = s + step_end_theta * h_try;
                while *next <= s_stop && *next < s + h_try {
                    let th = (*next - s) / h_try;
                    push(&mut samples, *next, step.interpolate(th), zone);
                    *next += dt;
                }
            }

            match found {
                Some(Found::Exit { theta, line, breakpoint, up }) => {
                    let (hh, mut landed) = self.land_on(zone, s, y, f0, theta * h_try, line, &mut stats)?;
                    let located = landed[0];
                    landed[0] = line;
                    let before = zone;
                    zone = if up { zone + 1 } else { zone - 1 };
                    s += hh;
                    y = landed;
                    events.push(ZoneEvent {
                        t: ext_t(s),
                        breakpoint,
                        direction: if up { 1 } else { -1 },
                        x: located,
                        y: y[1],
                        zone_before: before,
                        zone_after: zone,
                    });
                    if settings.output_step.is_none() {
                        push(&mut samples, s, y, zone);
                    }
                    f0 = self.eval(zone, y, &mut stats);
                }
                Some(Found::Section { theta }) => {
                    let (hh, landed) = self.land_on(zone, s, y, f0, theta * h_try, 0.0, &mut stats)?;
                    s += hh;
                    y = landed;
                    push(&mut samples, s, y, zone);
                    return Ok(RunOutput {
                        trajectory: Trajectory { samples, events, stats },
                        section: Some(SectionReturn { t: ext_t(s), y: y[1], state: y }),
                    });
                }
                None => {
                    s += h_try;
                    y = step.y1;
                    f0 = step.f1;
                    if settings.output_step.is_none() {
                        push(&mut samples, s, y, zone);
                    }
                    h = h_try * step_factor(err, true);
                }
            }

            let radius = y[0].hypot(y[1]);
            if !radius.is_finite() || radius > self.radius_bound {
                return Err(Error::Divergence { t: ext_t(s), bound: self.radius_bound });
            }
        }
    }
}

fn radius_bound(start: State, settings: &IntegrationSettings) -> f64 {
    settings.max_radius_factor * start[0].hypot(start[1]).max(1.0)
}

fn sign_of(direction: TimeDirection) -> f64 {
    match direction {
        TimeDirection::Forward => 1.0,
        TimeDirection::Backward => -1.0,
    }
}

/// Integrates from `(0, y0)` until the first return to `{x = 0, y > 0}`.
pub fn integrate_to_section(
    system: &PerturbedSystem,
    y0: f64,
    eps: f64,
    settings: &IntegrationSettings,
) -> Result<(SectionReturn, Trajectory)> {
    settings.validate()?;
    if !(y0.is_finite() && y0 > 0.0) {
        return Err(Error::invalid(format!("section coordinate must be positive, got {y0}")));
    }
    if !eps.is_finite() {
        return Err(Error::invalid(format!("epsilon must be finite, got {eps}")));
    }
    let field = PiecewiseField { system, eps };
    let forward = IntegrationSettings {
        direction: TimeDirection::Forward,
        ..*settings
    };
    let engine = Engine {
        field: &field,
        settings: &forward,
        sign: 1.0,
        radius_bound: settings.max_radius_factor * y0,
    };
    let out = engine.run(0.0, [0.0, y0], Stop::SectionReturn)?;
    Ok((out.section.expect("section stop returns a section point"), out.trajectory))
}

/// Displacement `d(h, eps) = P(h, eps) - h` on the orbit of radius `r`.
pub fn displacement(
    system: &PerturbedSystem,
    r: f64,
    eps: f64,
    settings: &IntegrationSettings,
) -> Result<DisplacementRecord> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("orbit radius must be positive, got {r}")));
    }
    let (ret, _) = integrate_to_section(system, r, eps, settings)?;
    let h = 0.5 * r * r;
    let p = 0.5 * ret.y * ret.y;
    Ok(DisplacementRecord {
        r,
        h,
        epsilon: eps,
        p,
        d: p - h,
    })
}

/// Event-respecting trajectory over `[0, t_max]` (or `[0, -t_max]` backwards).
pub fn simulate(
    system: &PerturbedSystem,
    start: [f64; 2],
    eps: f64,
    t_max: f64,
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    simulate_from(system, 0.0, start, eps, t_max, settings)
}

/// As [`simulate`], with the clock starting at `t0`.
pub fn simulate_from(
    system: &PerturbedSystem,
    t0: f64,
    start: [f64; 2],
    eps: f64,
    t_max: f64,
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::invalid(format!("t_max must be positive, got {t_max}")));
    }
    if !(start[0].is_finite() && start[1].is_finite() && eps.is_finite()) {
        return Err(Error::invalid("start state and epsilon must be finite"));
    }
    let field = PiecewiseField { system, eps };
    let engine = Engine {
        field: &field,
        settings,
        sign: sign_of(settings.direction),
        radius_bound: radius_bound(start, settings),
    };
    Ok(engine.run(t0, start, Stop::AtTime(t_max))?.trajectory)
}

/// Return map of a harness system on `{x = 0, y > 0}` from `tau_r(0)`, measured in
/// the section coordinate: `(y_return, y_return - y_start)`.
pub fn harness_section_displacement<H: HarnessSystem + ?Sized>(
    harness: &H,
    r: f64,
    eps: f64,
    settings: &IntegrationSettings,
) -> Result<(f64, f64)> {
    settings.validate()?;
    let start = harness.orbit(r, 0.0);
    if start[0].abs() > 1e-12 * start[1].abs().max(1.0) || start[1] <= 0.0 {
        return Err(Error::invalid(format!(
            "harness orbit must start on the section x = 0, y > 0; got {start:?}"
        )));
    }
    let field = HarnessField { harness, eps, unperturbed_only: false };
    let limits = IntegrationSettings {
        max_return_time: settings.max_return_time.max(2.0 * harness.period(r)),
        ..*settings
    };
    let engine = Engine {
        field: &field,
        settings: &limits,
        sign: 1.0,
        radius_bound: radius_bound(start, settings),
    };
    let out = engine.run(0.0, [0.0, start[1]], Stop::SectionReturn)?;
    let y = out.section.expect("section stop").y;
    Ok((y, y - start[1]))
}

/// Displacement of a harness system in energy units of the section coordinate:
/// `h = y_start^2 / 2`, `p = y_return^2 / 2`.
pub fn harness_displacement<H: HarnessSystem + ?Sized>(
    harness: &H,
    r: f64,
    eps: f64,
    settings: &IntegrationSettings,
) -> Result<DisplacementRecord> {
    let y0 = harness.orbit(r, 0.0)[1];
    let (y, _) = harness_section_displacement(harness, r, eps, settings)?;
    let (h, p) = (0.5 * y0 * y0, 0.5 * y * y);
    Ok(DisplacementRecord { r, h, epsilon: eps, p, d: p - h })
}

/// Distance between `tau_r(0)` and the point reached by integrating the unperturbed
/// field for one period `T_r`.
pub fn orbit_closure_error<H: HarnessSystem + ?Sized>(
    harness: &H,
    r: f64,
    settings: &IntegrationSettings,
) -> Result<f64> {
    settings.validate()?;
    let start = harness.orbit(r, 0.0);
    let period = harness.period(r);
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::invalid(format!("orbit period must be positive, got {period}")));
    }
    let field = HarnessField { harness, eps: 0.0, unperturbed_only: true };
    let engine = Engine {
        field: &field,
        settings,
        sign: 1.0,
        radius_bound: radius_bound(start, settings),
    };
    let traj = engine.run(0.0, start, Stop::AtTime(period))?.trajectory;
    let end = traj.final_sample().expect("nonempty");
    Ok((end.x - start[0]).hypot(end.y - start[1]))
}

/// `|H(end) - H(start)|` over one unperturbed revolution starting at `(0, r)`.
pub fn energy_drift(system: &PerturbedSystem, r: f64, settings: &IntegrationSettings) -> Result<f64> {
    let traj = simulate(system, [0.0, r], 0.0, 2.0 * PI, settings)?;
    let end = traj.final_sample().expect("nonempty");
    Ok((hamiltonian([end.x, end.y]) - 0.5 * r * r).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LienardHarness;

    fn example() -> PerturbedSystem {
        PerturbedSystem::example()
    }

    #[test]
    fn identity_return_at_zero_eps() {
        let (ret, traj) = integrate_to_section(&example(), 1.7, 0.0, &IntegrationSettings::default()).unwrap();
        assert!((ret.y - 1.7).abs() < 1e-9);
        assert!((ret.t - 2.0 * PI).abs() < 1e-8);
        assert!(traj.stats.accepted > 0);
    }

    #[test]
    fn event_log_matches_circle_geometry() {
        let (_, traj) = integrate_to_section(&example(), 1.5, 0.0, &IntegrationSettings::default()).unwrap();
        let crossings: Vec<_> = traj.crossings().collect();
        // x = 1 is crossed outwards and back once each; x = 2 is never reached
        assert_eq!(crossings.len(), 2);
        assert!(crossings.iter().all(|e| e.breakpoint == 1));
        assert_eq!(crossings[0].direction, 1);
        assert_eq!(crossings[1].direction, -1);
        let t1 = (2.0f64 / 3.0).asin();
        assert!((crossings[0].t - t1).abs() < 1e-9);
        assert!((crossings[1].t - (PI - t1)).abs() < 1e-9);
        // dense sampling oracle for the number of sign changes of x - a_i
        let mut changes = [0usize; 2];
        let n = 100_000;
        for k in 0..n {
            let (ta, tb) = (2.0 * PI * k as f64 / n as f64, 2.0 * PI * (k + 1) as f64 / n as f64);
            for (i, a) in [1.0, 2.0].iter().enumerate() {
                if (1.5 * ta.sin() - a).signum() != (1.5 * tb.sin() - a).signum() {
                    changes[i] += 1;
                }
            }
        }
        assert_eq!(changes, [2, 0]);
    }

    #[test]
    fn displacement_matches_second_order_prediction() {
        let rec = displacement(&example(), 1.5, 0.01, &IntegrationSettings::default()).unwrap();
        let predicted = 1e-4 * PI * 2.25;
        assert!((rec.d - predicted).abs() < 0.05 * predicted, "{rec:?}");
        assert_eq!(rec.d, rec.p - rec.h);
        let zero = displacement(&example(), 2.3, 0.0, &IntegrationSettings::default()).unwrap();
        assert!(zero.d.abs() < 1e-10);
    }

    #[test]
    fn grazing_start_is_logged_once() {
        let traj = simulate(&example(), [1.0, 0.0], 0.0, PI, &IntegrationSettings::default()).unwrap();
        let grazes: Vec<_> = traj.events.iter().filter(|e| e.direction == 0).collect();
        assert_eq!(grazes.len(), 1);
        assert_eq!(grazes[0].breakpoint, 1);
        assert_eq!(traj.crossings().count(), 0);
        let end = traj.final_sample().unwrap();
        assert!((end.x + 1.0).abs() < 1e-9 && end.y.abs() < 1e-9);
    }

    #[test]
    fn interior_tangency_is_logged() {
        // circle of radius a_1 started at the top touches x = 1 at t = pi/2
        let traj = simulate(&example(), [0.0, 1.0], 0.0, PI, &IntegrationSettings::default()).unwrap();
        let grazes: Vec<_> = traj.events.iter().filter(|e| e.direction == 0).collect();
        assert_eq!(grazes.len(), 1, "{:?}", traj.events);
        assert!((grazes[0].t - PI / 2.0).abs() < 1e-6);
        assert_eq!(traj.crossings().count(), 0);
    }

    #[test]
    fn double_crossing_inside_one_step_is_resolved() {
        // radius just above a_1: the excursion into zone 1 is shorter than a step
        let settings = IntegrationSettings { max_step: 1.0, ..IntegrationSettings::default() };
        let traj = simulate(&example(), [0.0, 1.0 + 1e-6], 0.0, PI, &settings).unwrap();
        let c: Vec<_> = traj.crossings().collect();
        assert_eq!(c.len(), 2, "{:?}", traj.events);
        assert_eq!((c[0].direction, c[1].direction), (1, -1));
        for e in c {
            assert!((e.x - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn output_step_sampling() {
        let settings = IntegrationSettings { output_step: Some(0.1), ..IntegrationSettings::default() };
        let traj = simulate(&example(), [0.0, 1.0], 0.0, 2.0 * PI, &settings).unwrap();
        for s in &traj.samples {
            assert!((s.x - s.t.sin()).abs() < 1e-8 && (s.y - s.t.cos()).abs() < 1e-8, "{s:?}");
        }
        assert!(traj.samples.len() >= 63);
        let end = traj.final_sample().unwrap();
        assert!((end.t - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn guards() {
        let s = IntegrationSettings::default();
        assert!(integrate_to_section(&example(), 0.0, 0.1, &s).is_err());
        assert!(simulate(&example(), [0.0, 1.0], 0.0, -1.0, &s).is_err());
        // a huge perturbation blows the orbit out before it returns
        let err = integrate_to_section(&example(), 1.0, 20.0, &s).unwrap_err();
        assert!(err.to_string().contains("no return"), "{err}");
        let tiny = IntegrationSettings { max_return_time: 1.0, ..s };
        assert!(matches!(
            integrate_to_section(&example(), 1.0, 0.0, &tiny),
            Err(Error::NoReturn { .. })
        ));
    }

    #[test]
    fn harness_return_and_closure() {
        let vdp = LienardHarness::van_der_pol();
        let s = IntegrationSettings::default();
        assert!(orbit_closure_error(&vdp, 1.3, &s).unwrap() < 1e-9);
        let (_, d_in) = harness_section_displacement(&vdp, 1.0, 0.01, &s).unwrap();
        let (_, d_out) = harness_section_displacement(&vdp, 3.0, 0.01, &s).unwrap();
        assert!(d_in > 0.0 && d_out < 0.0);
    }
}
