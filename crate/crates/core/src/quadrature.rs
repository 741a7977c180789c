//! Globally adaptive Gauss-Kronrod (7, 15) quadrature.
//!
//! Integrands here are smooth on each piece between crossing times, so the caller
//! passes the jump locations and each piece is integrated separately.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadSettings {
    /// Target absolute error for the whole integral.
    pub abs_tol: f64,
    /// Maximum number of subintervals per piece.
    pub max_subdivisions: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_subdivisions: 500,
        }
    }
}

impl QuadSettings {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

/// Single 15-point Kronrod rule on `[a, b]` with the QUADPACK error estimate.
pub fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let (v, e, _) = kronrod(f, a, b);
    (v, e)
}

// (value, error estimate, integral of |f|)
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut result_gauss = fc * WG[3];
    let mut result_kronrod = fc * WGK[7];
    let mut result_abs = result_kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        result_kronrod += WGK[j] * (f1 + f2);
        result_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * result_kronrod;
    let mut result_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = result_kronrod * half;
    let result_abs = result_abs * half.abs();
    let result_asc = result_asc * half.abs();
    let mut err = ((result_kronrod - result_gauss) * half).abs();
    if result_asc != 0.0 && err != 0.0 {
        err = result_asc * (200.0 * err / result_asc).powf(1.5).min(1.0);
    }
    let roundoff = 50.0 * f64::EPSILON * result_abs;
    if result_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(roundoff);
    }
    (value, err, result_abs)
}

/// Adaptive integration of `f` over `[a, b]` to absolute tolerance `settings.abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, settings: QuadSettings) -> Result<QuadResult> {
    integrate_pieces(f, &[a, b], settings)
}

/// Integrates over consecutive pieces `[knots[k], knots[k+1]]`, never placing a node on
/// a knot. The tolerance is shared across pieces and is never taken below the
/// round-off level `100 * EPSILON * integral of |f|`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    knots: &[f64],
    settings: QuadSettings,
) -> Result<QuadResult> {
    if knots.len() < 2 {
        return Err(Error::invalid("quadrature needs at least two knots"));
    }
    if !(settings.abs_tol > 0.0) {
        return Err(Error::invalid(format!(
            "quadrature tolerance must be positive, got {}",
            settings.abs_tol
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("quadrature knots must be finite and nondecreasing"));
    }

    // Active subintervals: (a, b, value, error). The largest error is bisected first.
    let mut intervals: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut evaluations = 0;
    let mut abs_integral = 0.0;
    for w in knots.windows(2) {
        if w[1] > w[0] {
            let (v, e, m) = kronrod(&f, w[0], w[1]);
            evaluations += 15;
            abs_integral += m;
            intervals.push((w[0], w[1], v, e));
        }
    }
    let target = settings.abs_tol.max(100.0 * f64::EPSILON * abs_integral);
    let limit = settings.max_subdivisions * intervals.len().max(1);
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        let value: f64 = intervals.iter().map(|iv| iv.2).sum();
        if !value.is_finite() || !total_err.is_finite() {
            return Err(Error::NumericalFailure {
                message: "non-finite integrand".into(),
                estimate: value,
                achieved: total_err,
            });
        }
        if total_err <= target {
            return Ok(QuadResult {
                value,
                abs_error: total_err,
                evaluations,
            });
        }
        if intervals.len() >= limit {
            return Err(Error::NumericalFailure {
                message: format!("quadrature did not reach tolerance {:e}", settings.abs_tol),
                estimate: value,
                achieved: total_err,
            });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (a, b, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            return Err(Error::NumericalFailure {
                message: "quadrature subinterval underflow".into(),
                estimate: value,
                achieved: total_err,
            });
        }
        let (v1, e1) = gauss_kronrod_15(&f, a, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, b);
        evaluations += 30;
        intervals.push((a, mid, v1, e1));
        intervals.push((mid, b, v2, e2));
    }
}
