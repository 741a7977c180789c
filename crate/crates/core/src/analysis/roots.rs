use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootOptions {
    /// Bracket width at which bisection stops.
    pub xtol: f64,
    /// Finite-difference step, relative to `max(|r|, 1)`.
    pub derivative_step: f64,
    /// A root is degenerate when `|f'|` is below this fraction of the sample scale
    /// `max|f| / (r_max - r_min)`.
    pub degenerate_rel: f64,
    /// Interior minima of `|f|` below this fraction of `max|f|` are suspected even roots.
    pub even_floor_rel: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-10,
            derivative_step: 1e-4,
            degenerate_rel: 1e-6,
            even_floor_rel: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    Simple,
    Degenerate,
    SuspectedEven,
}

impl RootKind {
    pub fn label(&self) -> &'static str {
        match self {
            RootKind::Simple => "simple",
            RootKind::Degenerate => "degenerate",
            RootKind::SuspectedEven => "suspected even root",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootEntry {
    pub location: f64,
    pub bracket: (f64, f64),
    pub value: f64,
    pub derivative: f64,
    pub kind: RootKind,
    /// 1 for simple roots; unknown otherwise.
    pub multiplicity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootReport {
    pub interval: (f64, f64),
    pub function: String,
    /// Roots confirmed by a sign change, simple or degenerate.
    pub roots: Vec<RootEntry>,
    pub suspected_even: Vec<RootEntry>,
    pub predicted_limit_cycles: usize,
    pub notes: Vec<String>,
}

impl RootReport {
    pub fn simple_roots(&self) -> impl Iterator<Item = &RootEntry> {
        self.roots.iter().filter(|r| r.kind == RootKind::Simple)
    }

    pub const CSV_HEADER: [&'static str; 6] = ["location", "bracket_lo", "bracket_hi", "value", "derivative", "kind"];

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        use crate::io::fmt17;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for e in self.roots.iter().chain(&self.suspected_even) {
            w.write_record([
                fmt17(e.location),
                fmt17(e.bracket.0),
                fmt17(e.bracket.1),
                fmt17(e.value),
                fmt17(e.derivative),
                e.kind.label().to_string(),
            ])?;
        }
        w.flush()
    }
}

fn check_samples(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::invalid("root search needs at least two samples on a nonempty interval"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("root search samples must be finite"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("root search grid must be strictly increasing"));
    }
    Ok(())
}

fn scale_of(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let fmax = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let width = xs[xs.len() - 1] - xs[0];
    (fmax, fmax / width)
}

// Interior local minima of |f| with no sign change nearby.
fn even_candidates(xs: &[f64], ys: &[f64], fmax: f64, opts: &RootOptions) -> Vec<RootEntry> {
    let mut out = Vec::new();
    for k in 1..xs.len().saturating_sub(1) {
        let (a, b, c) = (ys[k - 1], ys[k], ys[k + 1]);
        let same_sign = a * b > 0.0 && b * c > 0.0;
        if same_sign && b.abs() <= a.abs() && b.abs() <= c.abs() && b.abs() < opts.even_floor_rel * fmax {
            out.push(RootEntry {
                location: xs[k],
                bracket: (xs[k - 1], xs[k + 1]),
                value: b,
                derivative: (c - a) / (xs[k + 1] - xs[k - 1]),
                kind: RootKind::SuspectedEven,
                multiplicity: None,
            });
        }
    }
    out
}

// Index pairs (lo, hi) bracketing a sign change; a sample that is exactly zero
// gives a degenerate bracket (k, k).
fn brackets(ys: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < ys.len() {
        if ys[k] == 0.0 {
            out.push((k, k));
            k += 1;
            continue;
        }
        if k + 1 < ys.len() && ys[k + 1] != 0.0 && ys[k].signum() != ys[k + 1].signum() {
            out.push((k, k + 1));
        }
        k += 1;
    }
    out
}

fn classify(derivative: f64, slope_scale: f64, opts: &RootOptions) -> (RootKind, Option<u32>) {
    if derivative.abs() > opts.degenerate_rel * slope_scale {
        (RootKind::Simple, Some(1))
    } else {
        (RootKind::Degenerate, None)
    }
}

fn finish(
    interval: (f64, f64),
    label: &str,
    roots: Vec<RootEntry>,
    suspected_even: Vec<RootEntry>,
) -> RootReport {
    let predicted = roots.iter().filter(|r| r.kind == RootKind::Simple).count();
    let mut notes = Vec::new();
    if roots.is_empty() {
        notes.push("no sign change detected".to_string());
    }
    if roots.iter().any(|r| r.kind == RootKind::Degenerate) {
        notes.push("degenerate root: multiplicity not determined".to_string());
    }
    if !suspected_even.is_empty() {
        notes.push(format!("{} suspected even root(s), not counted", suspected_even.len()));
    }
    notes.push(format!(
        "search covers r in [{}, {}] only",
        interval.0, interval.1
    ));
    RootReport {
        interval,
        function: label.to_string(),
        roots,
        suspected_even,
        predicted_limit_cycles: predicted,
        notes,
    }
}

/// Samples `f` on `grid`, refines every sign change by bisection and classifies the
/// roots. Evaluation failures inside the refinement are returned as errors.
pub fn find_roots<F>(f: F, grid: &[f64], label: &str, opts: &RootOptions) -> Result<RootReport>
where
    F: Fn(f64) -> Result<f64>,
{
    if grid.len() < 2 {
        return Err(Error::invalid("root search needs at least two samples on a nonempty interval"));
    }
    let ys = grid.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    check_samples(grid, &ys)?;
    let (fmax, slope_scale) = scale_of(grid, &ys);
    let mut roots = Vec::new();
    for (lo, hi) in brackets(&ys) {
        let (mut a, mut b) = (grid[lo], grid[hi]);
        let mut fa = ys[lo];
        while b - a > opts.xtol {
            let m = 0.5 * (a + b);
            if !(m > a && m < b) {
                break;
            }
            let fm = f(m)?;
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let x = 0.5 * (a + b);
        let h = opts.derivative_step * x.abs().max(1.0);
        let derivative = (f(x + h)? - f(x - h)?) / (2.0 * h);
        let (kind, multiplicity) = classify(derivative, slope_scale, opts);
        roots.push(RootEntry {
            location: x,
            bracket: (a, b),
            value: f(x)?,
            derivative,
            kind,
            multiplicity,
        });
    }
    let even = even_candidates(grid, &ys, fmax, opts);
    Ok(finish((grid[0], grid[grid.len() - 1]), label, roots, even))
}

/// Root search on fixed samples. Roots are located by linear interpolation inside
/// each sign-change bracket; the derivative is the bracket's secant slope.
pub fn find_roots_in_samples(xs: &[f64], ys: &[f64], label: &str, opts: &RootOptions) -> Result<RootReport> {
    check_samples(xs, ys)?;
    let (fmax, slope_scale) = scale_of(xs, ys);
    let mut roots = Vec::new();
    for (lo, hi) in brackets(ys) {
        let (location, derivative) = if lo == hi {
            let (l, r) = (lo.saturating_sub(1), (hi + 1).min(xs.len() - 1));
            (xs[lo], (ys[r] - ys[l]) / (xs[r] - xs[l]))
        } else {
            let slope = (ys[hi] - ys[lo]) / (xs[hi] - xs[lo]);
            (xs[lo] - ys[lo] / slope, slope)
        };
        let (kind, multiplicity) = classify(derivative, slope_scale, opts);
        roots.push(RootEntry {
            location,
            bracket: (xs[lo], xs[hi]),
            value: 0.0,
            derivative,
            kind,
            multiplicity,
        });
    }
    let even = even_candidates(xs, ys, fmax, opts);
    Ok(finish((xs[0], xs[xs.len() - 1]), label, roots, even))
}
