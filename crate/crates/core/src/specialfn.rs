//! Bessel functions of the first and second kind for the orders needed in
//! dimensions two and three: nu in {0, 1/2, 1, 3/2, 2, 5/2}.
//!
//! Half-integer orders use exact trigonometric closed forms.  Integer orders
//! use the ascending power series for x <= 12 and the Hankel asymptotic
//! expansion with forward recurrence beyond.  Accuracy is ~1e-13 relative
//! away from the series/asymptotic switch and ~1e-11 in a narrow band around
//! x = 12 where both branches bottom out in double precision.

use crate::error::{HqdError, Result};
use std::f64::consts::PI;

/// Euler-Mascheroni constant, used by the Y series.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Series/asymptotic switch point for integer orders.
const SERIES_SWITCH: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BesselKind {
    J,
    Y,
}

/// An order from the supported set {0, 1/2, 1, 3/2, 2, 5/2}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub const ZERO: BesselOrder = BesselOrder(0.0);
    pub const HALF: BesselOrder = BesselOrder(0.5);
    pub const ONE: BesselOrder = BesselOrder(1.0);
    pub const THREE_HALVES: BesselOrder = BesselOrder(1.5);
    pub const TWO: BesselOrder = BesselOrder(2.0);
    pub const FIVE_HALVES: BesselOrder = BesselOrder(2.5);

    pub fn new(nu: f64) -> Result<Self> {
        let doubled = 2.0 * nu;
        if nu >= 0.0 && nu <= 2.5 && doubled == doubled.round() {
            Ok(BesselOrder(nu))
        } else {
            Err(HqdError::UnsupportedOrder(nu))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_integer(self) -> bool {
        self.0 == self.0.round()
    }
}

/// J_nu(x) or Y_nu(x).
///
/// For kind J, x = 0 is accepted when nu is an integer (J_0(0) = 1, else 0);
/// kind Y requires x > 0.
pub fn bessel(kind: BesselKind, nu: BesselOrder, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(HqdError::Domain(format!("non-finite argument x = {x}")));
    }
    match kind {
        BesselKind::J => {
            if x == 0.0 && nu.is_integer() {
                return Ok(if nu.value() == 0.0 { 1.0 } else { 0.0 });
            }
            if x <= 0.0 {
                return Err(HqdError::Domain(format!("J_nu requires x > 0, got {x}")));
            }
            Ok(eval(BesselKind::J, nu.value(), x))
        }
        BesselKind::Y => {
            if x <= 0.0 {
                return Err(HqdError::Domain(format!("Y_nu requires x > 0, got {x}")));
            }
            Ok(eval(BesselKind::Y, nu.value(), x))
        }
    }
}

/// d/dx of J_nu or Y_nu via C'_nu = C_{nu-1} - (nu/x) C_nu.
pub fn bessel_derivative(kind: BesselKind, nu: BesselOrder, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(HqdError::Domain(format!(
            "derivative requires x > 0, got {x}"
        )));
    }
    let n = nu.value();
    Ok(eval(kind, n - 1.0, x) - (n / x) * eval(kind, n, x))
}

/// First positive zero j_{nu,1} of J_nu, by sign-change scan on [0.1, 10]
/// at step 0.05 followed by bisection.  All supported first zeros lie
/// below 10.
pub fn first_zero(nu: BesselOrder) -> f64 {
    let f = |x: f64| eval(BesselKind::J, nu.value(), x);
    let step = 0.05;
    let mut lo = 0.1;
    let mut flo = f(lo);
    let mut hi;
    loop {
        hi = lo + step;
        assert!(hi < 10.0 + step, "first zero not found below 10");
        let fhi = f(hi);
        if flo == 0.0 {
            return lo;
        }
        if flo * fhi <= 0.0 {
            break;
        }
        lo = hi;
        flo = fhi;
    }
    // Bisection down to machine width.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

/// Internal evaluator; accepts the supported orders plus the shifted orders
/// {-1, -1/2} needed by the derivative recurrence and 3 needed by tests.
pub(crate) fn eval(kind: BesselKind, nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if nu == nu.round() {
        let n = nu as i32;
        match kind {
            BesselKind::J => j_int(n, x),
            BesselKind::Y => y_int(n, x),
        }
    } else {
        half_integer(kind, nu, x)
    }
}

/// Closed trigonometric forms for half-integer orders.
fn half_integer(kind: BesselKind, nu: f64, x: f64) -> f64 {
    let amp = (2.0 / (PI * x)).sqrt();
    let (s, c) = x.sin_cos();
    match (kind, (2.0 * nu) as i32) {
        (BesselKind::J, -1) => amp * c,
        (BesselKind::J, 1) => amp * s,
        (BesselKind::J, 3) => amp * (s / x - c),
        (BesselKind::J, 5) => amp * ((3.0 / (x * x) - 1.0) * s - 3.0 * c / x),
        (BesselKind::Y, -1) => amp * s,
        (BesselKind::Y, 1) => -amp * c,
        (BesselKind::Y, 3) => -amp * (c / x + s),
        (BesselKind::Y, 5) => -amp * ((3.0 / (x * x) - 1.0) * c + 3.0 * s / x),
        _ => unreachable!("order {nu} not handled"),
    }
}

fn j_int(n: i32, x: f64) -> f64 {
    match n {
        -1 => -j_int(1, x),
        0 | 1 => {
            if x <= SERIES_SWITCH {
                j_series(n, x)
            } else {
                hankel(n, x).0
            }
        }
        2 | 3 => {
            if x <= SERIES_SWITCH {
                j_series(n, x)
            } else {
                // Forward recurrence, stable for n < x.
                let mut a = j_int(0, x);
                let mut b = j_int(1, x);
                for m in 1..n {
                    let next = (2 * m) as f64 / x * b - a;
                    a = b;
                    b = next;
                }
                b
            }
        }
        _ => unreachable!("integer order {n} not handled"),
    }
}

fn y_int(n: i32, x: f64) -> f64 {
    match n {
        -1 => -y_int(1, x),
        0 | 1 => {
            if x <= SERIES_SWITCH {
                y_series(n, x)
            } else {
                hankel(n, x).1
            }
        }
        2 | 3 => {
            // Forward recurrence is stable for Y at every x.
            let mut a = y_int(0, x);
            let mut b = y_int(1, x);
            for m in 1..n {
                let next = (2 * m) as f64 / x * b - a;
                a = b;
                b = next;
            }
            b
        }
        _ => unreachable!("integer order {n} not handled"),
    }
}

/// Ascending series for J_n, n in {0, 1, 2, 3}.
fn j_series(n: i32, x: f64) -> f64 {
    let t = 0.25 * x * x;
    // Leading factor (x/2)^n / n!.
    let mut lead = 1.0;
    for m in 1..=n {
        lead *= 0.5 * x / m as f64;
    }
    let mut term = lead;
    let mut sum = lead;
    let mut m = 1.0;
    loop {
        term *= -t / (m * (m + n as f64));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-290) || m > 80.0 {
            break;
        }
        m += 1.0;
    }
    sum
}

/// Ascending series for Y_0 and Y_1 (A&S 9.1.11 rearranged so the digamma
/// part folds into (ln(x/2) + gamma) J_n).
fn y_series(n: i32, x: f64) -> f64 {
    let lg = (0.5 * x).ln() + EULER_GAMMA;
    let t = 0.25 * x * x;
    match n {
        0 => {
            // (2/pi) [ (ln(x/2)+gamma) J0 + sum_{m>=1} (-1)^{m+1} H_m t^m/(m!)^2 ]
            let mut sum = 0.0;
            let mut term = 1.0; // t^m/(m!)^2 at m=0
            let mut h = 0.0;
            let mut sign = 1.0;
            for m in 1..=90 {
                let mf = m as f64;
                term *= t / (mf * mf);
                h += 1.0 / mf;
                let contrib = sign * h * term;
                sum += contrib;
                if contrib.abs() <= 1e-17 * sum.abs().max(1e-290) {
                    break;
                }
                sign = -sign;
            }
            (2.0 / PI) * (lg * j_series(0, x) + sum)
        }
        1 => {
            // (2/pi)(ln(x/2)+gamma) J1 - 2/(pi x)
            //   - (x/(2 pi)) sum_{m>=0} (H_m + H_{m+1}) (-t)^m/(m!(m+1)!)
            let mut sum = 1.0; // m = 0: (H_0 + H_1)/(0! 1!) = 1
            let mut term = 1.0; // (-t)^m/(m!(m+1)!)
            let mut h_m = 0.0;
            let mut h_m1 = 1.0;
            for m in 1..=90 {
                let mf = m as f64;
                term *= -t / (mf * (mf + 1.0));
                h_m += 1.0 / mf;
                h_m1 += 1.0 / (mf + 1.0);
                let contrib = (h_m + h_m1) * term;
                sum += contrib;
                if contrib.abs() <= 1e-17 * sum.abs().max(1e-290) {
                    break;
                }
            }
            (2.0 / PI) * (lg * j_series(1, x) - 1.0 / x) - x / (2.0 * PI) * sum
        }
        _ => unreachable!(),
    }
}

/// Hankel asymptotic expansion, returning (J_n, Y_n) for n in {0, 1}.
///
/// J = sqrt(2/(pi x)) (P cos chi - Q sin chi), chi = x - (n/2 + 1/4) pi,
/// with P, Q truncated at the smallest term.
fn hankel(n: i32, x: f64) -> (f64, f64) {
    let mu = 4.0 * (n * n) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..=30 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() >= prev {
            break; // divergent tail reached
        }
        prev = term.abs();
        // Pattern over k mod 4: Q += t1, P -= t2, Q -= t3, P += t4, ...
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    let (s, c) = chi.sin_cos();
    let amp = (2.0 / (PI * x)).sqrt();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}
