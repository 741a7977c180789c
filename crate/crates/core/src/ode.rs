//! Dormand-Prince 5(4) stepper for planar systems, with the fourth-order continuous
//! extension used for event location.

pub type State = [f64; 2];

// The fields are autonomous, so the node vector c is not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn axpy(y: State, terms: &[(f64, State)], h: f64) -> State {
    let mut out = y;
    for &(c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One attempted step: the fifth-order solution, an error estimate and the
/// coefficients of the continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    pub y0: State,
    pub y1: State,
    pub error: State,
    /// Derivative at the end point (first-same-as-last).
    pub f1: State,
    rcont: [State; 5],
}

impl Step {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Dense output at `t0 + theta * h`, `theta` in `[0, 1]`.
    pub fn interpolate(&self, theta: f64) -> State {
        let th1 = 1.0 - theta;
        let r = &self.rcont;
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = r[0][i] + theta * (r[1][i] + th1 * (r[2][i] + theta * (r[3][i] + th1 * r[4][i])));
        }
        out
    }

    /// Weighted RMS error norm as used by the step-size controller.
    pub fn error_norm(&self, rtol: f64, atol: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..2 {
            let sc = atol + rtol * self.y0[i].abs().max(self.y1[i].abs());
            acc += (self.error[i] / sc).powi(2);
        }
        (acc / 2.0).sqrt()
    }
}

/// Takes one Dormand-Prince step of size `h` from `(t0, y0)`, given `f0 = f(t0, y0)`.
pub fn dopri_step<F: FnMut(State) -> State>(f: &mut F, t0: f64, y0: State, f0: State, h: f64) -> Step {
    let k1 = f0;
    let k2 = f(axpy(y0, &[(A21, k1)], h));
    let k3 = f(axpy(y0, &[(A31, k1), (A32, k2)], h));
    let k4 = f(axpy(y0, &[(A41, k1), (A42, k2), (A43, k3)], h));
    let k5 = f(axpy(y0, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], h));
    let k6 = f(axpy(y0, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], h));
    let y1 = axpy(y0, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)], h);
    let k7 = f(y1);
    let mut error = [0.0; 2];
    let mut rcont = [[0.0; 2]; 5];
    for i in 0..2 {
        error[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let ydiff = y1[i] - y0[i];
        let bspl = h * k1[i] - ydiff;
        rcont[0][i] = y0[i];
        rcont[1][i] = ydiff;
        rcont[2][i] = bspl;
        rcont[3][i] = ydiff - h * k7[i] - bspl;
        rcont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Step {
        t0,
        h,
        y0,
        y1,
        error,
        f1: k7,
        rcont,
    }
}

/// Step-size factor from the error norm of the last attempt.
pub fn step_factor(err: f64, accepted: bool) -> f64 {
    const SAFETY: f64 = 0.9;
    if err == 0.0 {
        return 5.0;
    }
    let fac = SAFETY * err.powf(-0.2);
    if accepted {
        fac.clamp(0.2, 5.0)
    } else {
        fac.clamp(0.1, 0.9)
    }
}
