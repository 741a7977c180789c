use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{displacement, harness_displacement, DisplacementRecord, IntegrationSettings};
use crate::melnikov::{m1_general, DEFAULT_QUAD_TOL};
use crate::model::{HarnessSystem, PerturbedSystem};

use super::fit::{fit_expansion, ExpansionFit, FitOptions};
use super::roots::{find_roots, find_roots_in_samples, RootOptions, RootReport};
use super::sweep::{nudge_off_breakpoints, radius_grid, sweep_melnikov, Spacing};
use super::map_ordered;

/// Relative tolerance on `c2` against `pi r^2` for a fit to count as agreement.
pub const FIT_AGREEMENT_REL: f64 = 0.02;

#[derive(Clone, Copy)]
pub enum ReportTarget<'a> {
    Family(&'a PerturbedSystem),
    Harness(&'a dyn HarnessSystem),
}

impl ReportTarget<'_> {
    fn label(&self) -> String {
        match self {
            ReportTarget::Family(s) => format!(
                "piecewise family a = {:?}, alpha = {:?}, h = {}",
                s.partition.breakpoints(),
                s.partition.slopes(),
                s.shape.label()
            ),
            ReportTarget::Harness(h) => h.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSettings {
    /// Increasing radii spanning the scanned annulus.
    pub r_grid: Vec<f64>,
    /// Epsilons for the displacement scan. Empty means Melnikov evidence only.
    pub epsilons: Vec<f64>,
    pub fit_epsilons: Vec<f64>,
    pub fit_radii: Vec<f64>,
    pub quad_tol: f64,
    pub integration: IntegrationSettings,
    pub roots: RootOptions,
    pub jobs: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            r_grid: radius_grid(0.25, 4.0, 76, Spacing::Linear).expect("valid default grid"),
            epsilons: vec![0.005, 0.01, 0.02],
            fit_epsilons: vec![0.02, 0.01, 0.005, 0.0025],
            fit_radii: vec![1.5],
            quad_tol: DEFAULT_QUAD_TOL,
            integration: IntegrationSettings::default(),
            roots: RootOptions::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MelnikovEvidence {
    pub max_abs_m1: f64,
    pub m1_threshold: f64,
    pub m1_vanishes: bool,
    pub min_m2: f64,
    pub m2_floor: f64,
    pub first_nonvanishing_order: Option<usize>,
    pub grazing_samples: usize,
    pub m2_roots: RootReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementEvidence {
    pub epsilon: f64,
    pub samples: Vec<DisplacementRecord>,
    pub min_d: f64,
    pub all_positive: bool,
    pub roots: Option<RootReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitEvidence {
    pub fit: ExpansionFit,
    pub c2_relative_error: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureReport {
    pub system: String,
    pub r_min: f64,
    pub r_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub melnikov: Option<MelnikovEvidence>,
    /// Roots of the first Melnikov function (harness targets).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m1_roots: Option<RootReport>,
    pub displacement: Vec<DisplacementEvidence>,
    pub fits: Vec<FitEvidence>,
    pub failures: Vec<String>,
    pub caveats: Vec<String>,
    pub predicted_limit_cycles: usize,
    pub verdict: String,
}

fn validate(settings: &ReportSettings) -> Result<()> {
    let g = &settings.r_grid;
    if g.len() < 2 || g.iter().any(|r| !(r.is_finite() && *r > 0.0)) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("report radius grid must have at least 2 increasing positive points"));
    }
    if settings.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::invalid("report epsilons must be positive and finite"));
    }
    if !(settings.quad_tol.is_finite() && settings.quad_tol > 0.0) {
        return Err(Error::invalid("quadrature tolerance must be positive"));
    }
    settings.integration.validate()
}

fn family_melnikov(
    system: &PerturbedSystem,
    grid: &[f64],
    settings: &ReportSettings,
    failures: &mut Vec<String>,
) -> Option<MelnikovEvidence> {
    let curve = match sweep_melnikov(system, grid, settings.quad_tol, settings.jobs) {
        Ok(c) => c,
        Err(e) => {
            failures.push(format!("Melnikov sweep: {e}"));
            return None;
        }
    };
    for s in &curve.samples {
        if let Some(err) = &s.error {
            failures.push(format!("Melnikov sample r = {}: {err}", s.r));
        }
    }
    let ok: Vec<_> = curve.samples.iter().filter(|s| s.error.is_none()).collect();
    let xs: Vec<f64> = ok.iter().map(|s| s.r).collect();
    let ys: Vec<f64> = ok.iter().map(|s| s.m2_quad).collect();
    let m2_roots = match find_roots_in_samples(&xs, &ys, "M2 (quadrature)", &settings.roots) {
        Ok(r) => r,
        Err(e) => {
            failures.push(format!("M2 root search: {e}"));
            return None;
        }
    };
    let m1_threshold = 2.0 * settings.quad_tol;
    let max_abs_m1 = curve.max_abs_m1();
    let r_min = grid[0];
    Some(MelnikovEvidence {
        max_abs_m1,
        m1_threshold,
        m1_vanishes: max_abs_m1 <= m1_threshold,
        min_m2: curve.min_m2(),
        m2_floor: PI * r_min * r_min * (1.0 - 1e-8),
        first_nonvanishing_order: curve.first_nonvanishing_order,
        grazing_samples: curve.samples.iter().filter(|s| s.grazing).count(),
        m2_roots,
    })
}

fn displacement_scan<F>(eps: f64, grid: &[f64], settings: &ReportSettings, failures: &mut Vec<String>, measure: F) -> DisplacementEvidence
where
    F: Fn(f64) -> Result<DisplacementRecord> + Sync + Send,
{
    let results = map_ordered(grid, settings.jobs, |&r| measure(r));
    let mut samples = Vec::new();
    for (res, r) in results.into_iter().zip(grid) {
        match res {
            Ok(rec) => samples.push(rec),
            Err(e) => failures.push(format!("displacement r = {r}, eps = {eps}: {e}")),
        }
    }
    let min_d = samples.iter().map(|s| s.d).fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = samples.iter().map(|s| s.r).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.d).collect();
    let roots = match find_roots_in_samples(&xs, &ys, &format!("d(r, {eps})"), &settings.roots) {
        Ok(r) => Some(r),
        Err(e) => {
            failures.push(format!("displacement root search at eps = {eps}: {e}"));
            None
        }
    };
    DisplacementEvidence {
        epsilon: eps,
        all_positive: !samples.is_empty() && samples.iter().all(|s| s.d > 0.0),
        min_d,
        samples,
        roots,
    }
}

fn fmt_roots(roots: &RootReport) -> String {
    roots
        .simple_roots()
        .map(|r| format!("r={:.6}", r.location))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Collects Melnikov, displacement and fit evidence over the scanned annulus and
/// states a verdict. Sub-computation failures are recorded, not returned.
pub fn conjecture_report(target: ReportTarget<'_>, settings: &ReportSettings) -> Result<ConjectureReport> {
    validate(settings)?;
    let mut failures = Vec::new();
    let mut caveats = vec![format!(
        "conclusions cover only the scanned annulus r in [{}, {}]",
        settings.r_grid[0],
        settings.r_grid[settings.r_grid.len() - 1]
    )];
    let mut report = ConjectureReport {
        system: target.label(),
        r_min: settings.r_grid[0],
        r_max: settings.r_grid[settings.r_grid.len() - 1],
        melnikov: None,
        m1_roots: None,
        displacement: Vec::new(),
        fits: Vec::new(),
        failures: Vec::new(),
        caveats: Vec::new(),
        predicted_limit_cycles: 0,
        verdict: String::new(),
    };

    match target {
        ReportTarget::Family(system) => {
            caveats.push(
                "the second-order Melnikov formula was derived for continuous perturbations, while g jumps \
                 across the zone boundaries; measured displacement is the primary evidence and M2 only corroborates it"
                    .into(),
            );
            let grid: Vec<f64> = settings
                .r_grid
                .iter()
                .map(|&r| nudge_off_breakpoints(&system.partition, r).0)
                .collect();
            report.melnikov = family_melnikov(system, &grid, settings, &mut failures);
            for &eps in &settings.epsilons {
                let ev = displacement_scan(eps, &grid, settings, &mut failures, |r| {
                    displacement(system, r, eps, &settings.integration)
                });
                report.displacement.push(ev);
            }
            if !settings.epsilons.is_empty() {
                let opts = FitOptions {
                    jobs: settings.jobs,
                    ..FitOptions::default()
                };
                for &r in &settings.fit_radii {
                    match fit_expansion(system, r, &settings.fit_epsilons, &settings.integration, &opts) {
                        Ok(fit) => {
                            let rel = fit.c2_relative_error();
                            report.fits.push(FitEvidence {
                                c2_relative_error: rel,
                                agrees: rel <= FIT_AGREEMENT_REL,
                                fit,
                            });
                        }
                        Err(e) => failures.push(format!("expansion fit at r = {r}: {e}")),
                    }
                }
            }
            let d_roots: usize = report
                .displacement
                .iter()
                .filter_map(|d| d.roots.as_ref())
                .map(|r| r.predicted_limit_cycles)
                .sum();
            let nonpositive = report.displacement.iter().any(|d| !d.samples.is_empty() && !d.all_positive);
            let m2_roots = report.melnikov.as_ref().map_or(0, |m| m.m2_roots.predicted_limit_cycles);
            let m_ok = report
                .melnikov
                .as_ref()
                .is_some_and(|m| m.m1_vanishes && m.min_m2 > 0.0 && m.m2_roots.roots.is_empty());
            report.predicted_limit_cycles = if report.displacement.is_empty() { m2_roots } else { d_roots };
            report.verdict = if nonpositive || report.predicted_limit_cycles > 0 {
                let locs: Vec<String> = report
                    .displacement
                    .iter()
                    .filter_map(|d| d.roots.as_ref())
                    .chain(report.melnikov.as_ref().map(|m| &m.m2_roots))
                    .map(fmt_roots)
                    .filter(|s| !s.is_empty())
                    .collect();
                format!(
                    "limit cycle candidate detected ({}); evidence inconsistent with Conjecture",
                    if locs.is_empty() { "nonpositive displacement".into() } else { locs.join("; ") }
                )
            } else if !failures.is_empty() || !m_ok {
                format!("inconclusive: {} sub-computation(s) failed or Melnikov evidence incomplete", failures.len())
            } else {
                "no limit cycle detected; evidence consistent with Conjecture".into()
            };
        }
        ReportTarget::Harness(h) => {
            let tol = settings.quad_tol;
            match find_roots(|r| m1_general(h, r, tol), &settings.r_grid, "M1 (general)", &settings.roots) {
                Ok(roots) => report.m1_roots = Some(roots),
                Err(e) => failures.push(format!("M1 root search: {e}")),
            }
            for &eps in &settings.epsilons {
                let ev = displacement_scan(eps, &settings.r_grid, settings, &mut failures, |r| {
                    harness_displacement(h, r, eps, &settings.integration)
                });
                report.displacement.push(ev);
            }
            caveats.push("harness displacement is measured in the section coordinate".into());
            report.predicted_limit_cycles = report.m1_roots.as_ref().map_or(0, |r| r.predicted_limit_cycles);
            report.verdict = match &report.m1_roots {
                Some(roots) if roots.predicted_limit_cycles > 0 => {
                    format!("limit cycle predicted near {}", fmt_roots(roots))
                }
                Some(_) => "no limit cycle predicted from M1".into(),
                None => "inconclusive: M1 root search failed".into(),
            };
        }
    }
    report.failures = failures;
    report.caveats = caveats;
    Ok(report)
}

impl ConjectureReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "system: {}", self.system);
        let _ = writeln!(s, "annulus: r in [{}, {}]", self.r_min, self.r_max);
        if let Some(m) = &self.melnikov {
            let _ = writeln!(s, "\nMelnikov evidence");
            let _ = writeln!(
                s,
                "  max |M1|           {:.3e} (threshold {:.1e}) -> {}",
                m.max_abs_m1,
                m.m1_threshold,
                if m.m1_vanishes { "vanishes" } else { "does not vanish" }
            );
            let _ = writeln!(s, "  min M2             {:.9} (floor {:.9})", m.min_m2, m.m2_floor);
            let _ = writeln!(s, "  first nonvanishing {:?}", m.first_nonvanishing_order);
            let _ = writeln!(s, "  grazing samples    {}", m.grazing_samples);
            let _ = writeln!(s, "  M2 roots           {}", m.m2_roots.roots.len());
        }
        if let Some(r) = &self.m1_roots {
            let _ = writeln!(s, "\nM1 roots");
            for e in &r.roots {
                let _ = writeln!(
                    s,
                    "  r = {:.9}  bracket [{:.3e}, {:.3e}]  M1' = {:.6}  {}",
                    e.location,
                    e.bracket.0,
                    e.bracket.1,
                    e.derivative,
                    e.kind.label()
                );
            }
            for n in &r.notes {
                let _ = writeln!(s, "  note: {n}");
            }
        }
        if !self.displacement.is_empty() {
            let _ = writeln!(s, "\nDisplacement");
            for d in &self.displacement {
                let roots = d.roots.as_ref().map_or(0, |r| r.roots.len());
                let _ = writeln!(
                    s,
                    "  eps = {:<8} samples {:>4}  min d {:.6e}  all positive {}  sign changes {}",
                    d.epsilon,
                    d.samples.len(),
                    d.min_d,
                    d.all_positive,
                    roots
                );
            }
        }
        if !self.fits.is_empty() {
            let _ = writeln!(s, "\nExpansion fits d ~ c1 eps + c2 eps^2");
            for f in &self.fits {
                let _ = writeln!(
                    s,
                    "  r = {}  c1 = {:.3e}  c2 = {:.6} +/- {:.2e}  target {:.6}  rel err {:.2e}  {}",
                    f.fit.r,
                    f.fit.c1,
                    f.fit.c2,
                    f.fit.c2_uncertainty,
                    f.fit.m2_target,
                    f.c2_relative_error,
                    if f.agrees { "agrees" } else { "disagrees" }
                );
            }
        }
        if !self.failures.is_empty() {
            let _ = writeln!(s, "\nFailures");
            for f in &self.failures {
                let _ = writeln!(s, "  {f}");
            }
        }
        let _ = writeln!(s, "\nCaveats");
        for c in &self.caveats {
            let _ = writeln!(s, "  {c}");
        }
        let _ = writeln!(s, "\npredicted limit cycles: {}", self.predicted_limit_cycles);
        let _ = writeln!(s, "verdict: {}", self.verdict);
        s
    }
}
