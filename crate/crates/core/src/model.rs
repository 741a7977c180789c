//! The perturbed piecewise-linear Duffing-type system.
//!
//! The unperturbed part is the linear centre `x' = y, y' = -x`; the perturbation acts
//! on the `y` equation only:
//!
//! ```text
//! x' = y
//! y' = -x + eps * g(x, y, eps),    g = alpha_i * h'(x) + eps * y   for x in (a_i, a_{i+1}]
//! ```
//!
//! with `a_0 = -inf`, `a_{n+1} = +inf` and `0 < a_1 < ... < a_n`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Breakpoints `a_1 < ... < a_n` and slopes `alpha_0 .. alpha_n` of the `n + 1` zones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonePartition {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    strict_mode: bool,
}

impl ZonePartition {
    /// Builds a partition with the monotone-slope hypothesis enforced.
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        Self::with_mode(breakpoints, slopes, true)
    }

    /// Builds a partition; `strict_mode = false` accepts slopes in any order.
    pub fn with_mode(breakpoints: Vec<f64>, slopes: Vec<f64>, strict_mode: bool) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::field("breakpoints", "at least one breakpoint is required"));
        }
        if breakpoints.iter().any(|a| !a.is_finite()) {
            return Err(Error::field("breakpoints", "all breakpoints must be finite"));
        }
        if breakpoints[0] <= 0.0 {
            return Err(Error::field(
                "breakpoints",
                format!("first breakpoint must be positive, got {}", breakpoints[0]),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::field("breakpoints", "must be strictly increasing"));
        }
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::field(
                "slopes",
                format!(
                    "expected {} slopes for {} breakpoints, got {}",
                    breakpoints.len() + 1,
                    breakpoints.len(),
                    slopes.len()
                ),
            ));
        }
        if slopes.iter().any(|s| !s.is_finite()) {
            return Err(Error::field("slopes", "all slopes must be finite"));
        }
        if strict_mode && slopes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::field(
                "slopes",
                "must be strictly increasing when strict_mode is enabled",
            ));
        }
        Ok(Self {
            breakpoints,
            slopes,
            strict_mode,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn strict_mode(&self) -> bool {
        self.strict_mode
    }

    /// Number of breakpoints `n`; there are `n + 1` zones.
    pub fn n(&self) -> usize {
        self.breakpoints.len()
    }

    /// Lower edge of zone `i` (`-inf` for zone 0).
    pub fn lower_edge(&self, zone: usize) -> f64 {
        if zone == 0 {
            f64::NEG_INFINITY
        } else {
            self.breakpoints[zone - 1]
        }
    }

    /// Upper edge of zone `i` (`+inf` for the last zone).
    pub fn upper_edge(&self, zone: usize) -> f64 {
        self.breakpoints
            .get(zone)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    /// Zone containing `x` under the right-closed convention `x in (a_i, a_{i+1}]`.
    pub fn zone_index(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("zone lookup at non-finite x = {x}")));
        }
        Ok(self.breakpoints.partition_point(|&a| a < x))
    }

    /// Index `i` (1-based, matching `a_i`) of the breakpoint equal to `x`, if any.
    pub fn breakpoint_at(&self, x: f64) -> Option<usize> {
        self.breakpoints.iter().position(|&a| a == x).map(|i| i + 1)
    }
}

/// The pair `(h, h')` entering `g = alpha_i * h'(x) + eps * y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeFunction {
    /// `h(x) = x^2 / 2`, so `g` is piecewise linear.
    Linear,
    /// `h(x) = x^4 / 4`.
    Cubic,
    /// `h'(x) = sum c_k x^k` with coefficients low-to-high; `h` is the antiderivative
    /// vanishing at 0.
    Polynomial { coefficients: Vec<f64> },
}

impl ShapeFunction {
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::field("coefficients", "polynomial shape needs at least one coefficient"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::field("coefficients", "coefficients must be finite"));
        }
        Ok(ShapeFunction::Polynomial { coefficients })
    }

    pub fn h(&self, x: f64) -> f64 {
        match self {
            ShapeFunction::Linear => 0.5 * x * x,
            ShapeFunction::Cubic => 0.25 * (x * x) * (x * x),
            ShapeFunction::Polynomial { coefficients } => {
                // antiderivative: sum c_k x^{k+1} / (k+1)
                let mut acc = 0.0;
                for (k, c) in coefficients.iter().enumerate().rev() {
                    acc = acc * x + c / (k as f64 + 1.0);
                }
                acc * x
            }
        }
    }

    pub fn h_prime(&self, x: f64) -> f64 {
        match self {
            ShapeFunction::Linear => x,
            ShapeFunction::Cubic => x * x * x,
            ShapeFunction::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ShapeFunction::Linear => "linear".into(),
            ShapeFunction::Cubic => "cubic".into(),
            ShapeFunction::Polynomial { coefficients } => {
                let cs: Vec<String> = coefficients.iter().map(|c| format!("{c}")).collect();
                format!("custom-polynomial[{}]", cs.join(","))
            }
        }
    }
}

/// The piecewise system: a zone partition together with a shape function.
///
/// `eps` is not stored; every flow or field operation takes it as an argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedSystem {
    pub partition: ZonePartition,
    pub shape: ShapeFunction,
}

impl PerturbedSystem {
    pub fn new(partition: ZonePartition, shape: ShapeFunction) -> Self {
        Self { partition, shape }
    }

    /// `a = (1, 2)`, `alpha = (1, 2, 3)` with the linear shape.
    pub fn example() -> Self {
        Self::new(
            ZonePartition::new(vec![1.0, 2.0], vec![1.0, 2.0, 3.0]).expect("valid example"),
            ShapeFunction::Linear,
        )
    }

    /// `g` with the zone fixed in advance. Used by the integrator and quadratures,
    /// which never evaluate across a boundary.
    #[inline]
    pub fn g_in_zone(&self, zone: usize, x: f64, y: f64, eps: f64) -> f64 {
        self.partition.slopes[zone] * self.shape.h_prime(x) + eps * y
    }

    pub fn eval_g(&self, x: f64, y: f64, eps: f64) -> Result<f64> {
        let zone = self.partition.zone_index(x)?;
        Ok(self.g_in_zone(zone, x, y, eps))
    }

    #[inline]
    pub fn field_in_zone(&self, zone: usize, state: [f64; 2], eps: f64) -> [f64; 2] {
        let [x, y] = state;
        [y, -x + eps * self.g_in_zone(zone, x, y, eps)]
    }

    pub fn vector_field(&self, state: [f64; 2], eps: f64) -> Result<[f64; 2]> {
        let [x, y] = state;
        if !y.is_finite() {
            return Err(Error::invalid(format!("non-finite state ({x}, {y})")));
        }
        let zone = self.partition.zone_index(x)?;
        Ok(self.field_in_zone(zone, state, eps))
    }

    /// `df/dx + dg/dy` of the perturbation at `eps = 0`.
    ///
    /// Here `f = 0` and `dg/dy = eps`, so the value is identically zero on every open
    /// strip. Points on a discontinuity line are rejected.
    pub fn divergence_at_eps0(&self, x: f64, y: f64) -> Result<f64> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid(format!("non-finite point ({x}, {y})")));
        }
        if let Some(index) = self.partition.breakpoint_at(x) {
            return Err(Error::BoundaryPoint { x, index });
        }
        Ok(0.0)
    }

    /// `dg/deps` at `eps = 0`, which equals `y` for this family.
    #[inline]
    pub fn dg_deps_at_eps0(&self, _x: f64, y: f64) -> f64 {
        y
    }
}

/// A member `x^2 + y^2 = r^2` of the unperturbed periodic family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    radius: f64,
}

impl PeriodicOrbit {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("orbit radius must be positive, got {radius}")));
        }
        Ok(Self { radius })
    }

    pub fn from_energy(h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(format!("energy must be positive, got {h}")));
        }
        Self::new((2.0 * h).sqrt())
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `H = r^2 / 2`.
    pub fn energy(&self) -> f64 {
        0.5 * self.radius * self.radius
    }

    pub fn period(&self) -> f64 {
        2.0 * PI
    }

    /// `(x, y) = (r sin t, r cos t)`; `t = 0` is the section point `(0, r)`.
    pub fn point(&self, t: f64) -> [f64; 2] {
        let (s, c) = t.sin_cos();
        [self.radius * s, self.radius * c]
    }
}

/// `H(x, y) = (x^2 + y^2) / 2`.
#[inline]
pub fn hamiltonian(state: [f64; 2]) -> f64 {
    0.5 * (state[0] * state[0] + state[1] * state[1])
}

/// A planar system `z' = f(z) + eps * g(z, eps)` with a known family of periodic
/// orbits of the unperturbed field, used to evaluate the general first Melnikov
/// integral with its divergence weight.
pub trait HarnessSystem: Send + Sync {
    /// Unperturbed field `(f1, f2)`.
    fn unperturbed(&self, x: f64, y: f64) -> [f64; 2];

    /// Perturbation `(g1, g2)`.
    fn perturbation(&self, x: f64, y: f64, eps: f64) -> [f64; 2];

    /// Point `tau_r(t)` on the periodic orbit of parameter `r`.
    fn orbit(&self, r: f64, t: f64) -> [f64; 2];

    /// Period `T_r`.
    fn period(&self, r: f64) -> f64;

    /// `div f`; central differences unless overridden.
    fn divergence(&self, x: f64, y: f64) -> f64 {
        let dx = 1e-6 * x.abs().max(1.0);
        let dy = 1e-6 * y.abs().max(1.0);
        let fx = (self.unperturbed(x + dx, y)[0] - self.unperturbed(x - dx, y)[0]) / (2.0 * dx);
        let fy = (self.unperturbed(x, y + dy)[1] - self.unperturbed(x, y - dy)[1]) / (2.0 * dy);
        fx + fy
    }

    /// `dg1/dx + dg2/dy` at `eps = 0`; central differences unless overridden.
    fn perturbation_divergence_at_eps0(&self, x: f64, y: f64) -> Result<f64> {
        let dx = 1e-6 * x.abs().max(1.0);
        let dy = 1e-6 * y.abs().max(1.0);
        let gx = (self.perturbation(x + dx, y, 0.0)[0] - self.perturbation(x - dx, y, 0.0)[0])
            / (2.0 * dx);
        let gy = (self.perturbation(x, y + dy, 0.0)[1] - self.perturbation(x, y - dy, 0.0)[1])
            / (2.0 * dy);
        Ok(gx + gy)
    }

    /// Times in `(0, T_r)` where the integrand may jump.
    fn discontinuity_times(&self, _r: f64) -> Vec<f64> {
        Vec::new()
    }

    fn label(&self) -> String;
}

/// Lienard-type harness: `f = (y, -x)`, `g = (0, p(x) * y)` with
/// `p(x) = sum damping[k] x^k`. Orbits are `(r sin t, r cos t)` with period `2 pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LienardHarness {
    pub damping: Vec<f64>,
}

impl LienardHarness {
    /// `g2 = (1 - x^2) y`.
    pub fn van_der_pol() -> Self {
        Self {
            damping: vec![1.0, 0.0, -1.0],
        }
    }

    fn p(&self, x: f64) -> f64 {
        self.damping.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

impl HarnessSystem for LienardHarness {
    fn unperturbed(&self, x: f64, y: f64) -> [f64; 2] {
        [y, -x]
    }

    fn perturbation(&self, x: f64, y: f64, _eps: f64) -> [f64; 2] {
        [0.0, self.p(x) * y]
    }

    fn orbit(&self, r: f64, t: f64) -> [f64; 2] {
        let (s, c) = t.sin_cos();
        [r * s, r * c]
    }

    fn period(&self, _r: f64) -> f64 {
        2.0 * PI
    }

    fn divergence(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn label(&self) -> String {
        if self.damping == [1.0, 0.0, -1.0] {
            "van-der-pol".into()
        } else {
            format!("lienard{:?}", self.damping)
        }
    }
}

/// The piecewise family seen through the general harness interface.
impl HarnessSystem for PerturbedSystem {
    fn unperturbed(&self, x: f64, y: f64) -> [f64; 2] {
        [y, -x]
    }

    fn perturbation(&self, x: f64, y: f64, eps: f64) -> [f64; 2] {
        [0.0, self.eval_g(x, y, eps).unwrap_or(f64::NAN)]
    }

    fn orbit(&self, r: f64, t: f64) -> [f64; 2] {
        let (s, c) = t.sin_cos();
        [r * s, r * c]
    }

    fn period(&self, _r: f64) -> f64 {
        2.0 * PI
    }

    fn divergence(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    fn perturbation_divergence_at_eps0(&self, x: f64, y: f64) -> Result<f64> {
        self.divergence_at_eps0(x, y)
    }

    fn discontinuity_times(&self, r: f64) -> Vec<f64> {
        match crate::melnikov::crossing_schedule(&self.partition, r, 0.0) {
            Ok(s) => s.crossing_times,
            Err(_) => Vec::new(),
        }
    }

    fn label(&self) -> String {
        format!(
            "piecewise(a={:?}, alpha={:?}, shape={})",
            self.partition.breakpoints(),
            self.partition.slopes(),
            self.shape.label()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear_scan(breaks: &[f64], x: f64) -> usize {
        // zone i iff a_i < x <= a_{i+1}
        let mut zone = 0;
        for (i, &a) in breaks.iter().enumerate() {
            if x > a {
                zone = i + 1;
            }
        }
        zone
    }

    #[test]
    fn zone_index_examples() {
        let p = ZonePartition::new(vec![1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.zone_index(0.5).unwrap(), 0);
        assert_eq!(p.zone_index(1.0).unwrap(), 0);
        assert_eq!(p.zone_index(1.5).unwrap(), 1);
        assert_eq!(p.zone_index(2.0).unwrap(), 1);
        assert_eq!(p.zone_index(2.5).unwrap(), 2);
        assert_eq!(p.zone_index(-7.0).unwrap(), 0);
        assert!(matches!(p.zone_index(f64::NAN), Err(Error::InvalidInput(_))));
        assert!(p.zone_index(f64::INFINITY).is_err());
    }

    #[test]
    fn partition_validation_names_fields() {
        let e = ZonePartition::new(vec![1.0, 2.0], vec![3.0, 2.0, 1.0]).unwrap_err();
        assert!(e.to_string().contains("slopes"));
        assert!(ZonePartition::with_mode(vec![1.0, 2.0], vec![3.0, 2.0, 1.0], false).is_ok());
        let e = ZonePartition::new(vec![2.0, 1.0], vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(e.to_string().contains("breakpoints"));
        let e = ZonePartition::new(vec![-1.0, 1.0], vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(e.to_string().contains("breakpoints"));
        let e = ZonePartition::new(vec![1.0], vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(e.to_string().contains("slopes"));
        assert!(ZonePartition::new(vec![], vec![1.0]).is_err());
        // n = 1 is accepted
        assert!(ZonePartition::new(vec![0.3], vec![-1.0, 1.0]).is_ok());
    }

    #[test]
    fn eval_g_examples() {
        let sys = PerturbedSystem::example();
        assert_eq!(sys.eval_g(1.5, 0.0, 0.0).unwrap(), 3.0);
        // zone 0 at eps = 0 is alpha_0 * x
        assert_eq!(sys.eval_g(-0.7, 3.0, 0.0).unwrap(), -0.7);
        assert_eq!(sys.eval_g(0.0, 5.0, 0.1).unwrap(), 1.0 * 0.0 + 0.5);
        // per-zone closure oracle
        for &(x, zone) in &[(0.2, 0usize), (1.2, 1), (2.9, 2)] {
            let slope = [1.0, 2.0, 3.0][zone];
            assert_eq!(sys.eval_g(x, 1.0, 0.0).unwrap(), slope * x);
        }
        assert!(sys.eval_g(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn vector_field_examples() {
        let sys = PerturbedSystem::example();
        assert_eq!(sys.vector_field([3.0, 4.0], 0.0).unwrap(), [4.0, -3.0]);
        let v = sys.vector_field([1.5, 0.0], 0.1).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - (-1.2)).abs() < 1e-15);
        let r = 2.3;
        let eps = 0.37;
        let v = sys.vector_field([0.0, r], eps).unwrap();
        assert_eq!(v, [r, 0.0 + eps * (1.0 * 0.0 + eps * r)]);
    }

    #[test]
    fn divergence_examples() {
        let sys = PerturbedSystem::example();
        assert_eq!(sys.divergence_at_eps0(0.3, 7.0).unwrap(), 0.0);
        assert_eq!(sys.divergence_at_eps0(1.5, -2.0).unwrap(), 0.0);
        assert!(matches!(
            sys.divergence_at_eps0(1.0, 0.0),
            Err(Error::BoundaryPoint { index: 1, .. })
        ));
        let vdp = LienardHarness::van_der_pol();
        let d = vdp.perturbation_divergence_at_eps0(0.0, 0.0).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shape_derivative_consistency() {
        let shapes = [
            ShapeFunction::Linear,
            ShapeFunction::Cubic,
            ShapeFunction::polynomial(vec![0.5, -1.0, 0.25, 2.0, 0.0, -0.1]).unwrap(),
        ];
        let delta = 1e-4;
        for shape in &shapes {
            for i in 0..=40 {
                let x = -3.0 + 0.15 * i as f64;
                let fd = (shape.h(x + delta) - shape.h(x - delta)) / (2.0 * delta);
                let scale = 1.0 + x.abs().powi(5);
                assert!(
                    (fd - shape.h_prime(x)).abs() <= 50.0 * scale * delta * delta,
                    "{} at {x}",
                    shape.label()
                );
            }
        }
        assert_eq!(ShapeFunction::Cubic.h(1.5), 1.265625);
        let poly_linear = ShapeFunction::polynomial(vec![0.0, 1.0]).unwrap();
        assert_eq!(poly_linear.h(3.0), ShapeFunction::Linear.h(3.0));
    }

    #[test]
    fn periodic_orbit_energy() {
        let o = PeriodicOrbit::new(1.5).unwrap();
        assert_eq!(o.energy(), 1.125);
        assert_eq!(o.point(0.0), [0.0, 1.5]);
        assert!(PeriodicOrbit::new(0.0).is_err());
        assert!((PeriodicOrbit::from_energy(1.125).unwrap().radius() - 1.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn zone_index_matches_linear_scan(
            gaps in proptest::collection::vec(0.01f64..2.0, 1..9),
            xs in proptest::collection::vec(-5.0f64..20.0, 1..64),
        ) {
            let mut acc = 0.0;
            let breaks: Vec<f64> = gaps.iter().map(|g| { acc += g; acc }).collect();
            let slopes: Vec<f64> = (0..=breaks.len()).map(|i| i as f64).collect();
            let p = ZonePartition::new(breaks.clone(), slopes).unwrap();
            let mut probes = xs.clone();
            probes.extend(breaks.iter().copied());
            probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut last = 0;
            for x in probes {
                let z = p.zone_index(x).unwrap();
                prop_assert_eq!(z, linear_scan(&breaks, x));
                prop_assert!(z >= last);
                last = z;
            }
        }
    }
}
