//! Closed-form radial objects: the fundamental solution of `-(Delta + k^2)`
//! vanishing on a sphere, the Helmholtz mean-value constant, the admissible
//! working radius, the ball-with-point-mass explicit solution, and the
//! Pompeiu radial profile.

use crate::error::{HqdError, Result};
use crate::specialfn::{bessel, first_zero, BesselKind, BesselOrder, EULER_GAMMA};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Threshold under which |J_nu(kR)| makes the fundamental solution useless.
const SINGULAR_GUARD: f64 = 1e-12;

/// Dimension and frequency of the operator `Delta + k^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzParams {
    pub n: u8,
    pub k: f64,
}

impl HelmholtzParams {
    pub fn new(n: u8, k: f64) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(HqdError::Precondition(format!(
                "dimension must be 2 or 3, got {n}"
            )));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(HqdError::Precondition(format!(
                "frequency must be positive, got {k}"
            )));
        }
        Ok(HelmholtzParams { n, k })
    }

    /// Order (n-2)/2 carried by the fundamental solution.
    pub fn order_fund(&self) -> BesselOrder {
        match self.n {
            2 => BesselOrder::ZERO,
            _ => BesselOrder::HALF,
        }
    }

    /// Order n/2 carried by the mean-value constant.
    pub fn order_mass(&self) -> BesselOrder {
        match self.n {
            2 => BesselOrder::ONE,
            _ => BesselOrder::THREE_HALVES,
        }
    }
}

/// A radial evaluator with its support metadata.  All profiles here are
/// closed-form, so no table is stored.
pub struct RadialProfile {
    pub k: f64,
    /// Radius beyond which a compactly supported profile vanishes.
    pub support_radius: f64,
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl RadialProfile {
    pub fn new(
        k: f64,
        support_radius: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        RadialProfile {
            k,
            support_radius,
            eval: Box::new(eval),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        (self.eval)(r)
    }
}

/// Working radius R(n,k) = j_{(n-2)/2,1} / (2k).  Inside the ball of this
/// radius k^2 stays below the first Dirichlet eigenvalue (which equals
/// 4 k^2 there), so maximum principles apply.
pub fn r_max(params: HelmholtzParams) -> f64 {
    0.5 * first_zero(params.order_fund()) / params.k
}

/// Precomputed fundamental solution for fixed (n, k, R): evaluating it per
/// radius costs two Bessel calls instead of four.
pub struct FundamentalSolution {
    pub params: HelmholtzParams,
    pub radius: f64,
    nu: BesselOrder,
    j_at_kr: f64,
    y_at_kr: f64,
    pref: f64,
}

impl FundamentalSolution {
    pub fn new(params: HelmholtzParams, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(HqdError::Precondition(format!(
                "fundamental solution needs R > 0, got {radius}"
            )));
        }
        let nu = params.order_fund();
        let j_at_kr = bessel(BesselKind::J, nu, params.k * radius)?;
        if j_at_kr.abs() < SINGULAR_GUARD {
            return Err(HqdError::SingularConfiguration {
                j_abs: j_at_kr.abs(),
            });
        }
        let y_at_kr = bessel(BesselKind::Y, nu, params.k * radius)?;
        let half = 0.5 * (params.n as f64 - 2.0);
        let pref = params.k.powf(half) / (4.0 * (2.0 * PI).powf(half) * j_at_kr);
        Ok(FundamentalSolution {
            params,
            radius,
            nu,
            j_at_kr,
            y_at_kr,
            pref,
        })
    }

    /// Phi(r); diverges as r -> 0+.
    pub fn value(&self, r: f64) -> f64 {
        let k = self.params.k;
        let jr = crate::specialfn::eval(BesselKind::J, self.nu.value(), k * r);
        let yr = crate::specialfn::eval(BesselKind::Y, self.nu.value(), k * r);
        let half = 0.5 * (self.params.n as f64 - 2.0);
        self.pref * r.powf(-half) * (self.y_at_kr * jr - self.j_at_kr * yr)
    }

    /// d Phi / dr.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        let k = self.params.k;
        let nu_up = self.nu.value() + 1.0; // n/2
        let jr = crate::specialfn::eval(BesselKind::J, nu_up, k * r);
        let yr = crate::specialfn::eval(BesselKind::Y, nu_up, k * r);
        let half = 0.5 * (self.params.n as f64 - 2.0);
        -self.pref * k * r.powf(-half) * (self.y_at_kr * jr - self.j_at_kr * yr)
    }

    /// For n = 2: the smooth remainder S(r) = Phi(r) + ln(r)/(2 pi) at r = 0.
    /// Used by the analytic singular-cell quadrature.
    pub fn log_remainder_at_zero(&self) -> f64 {
        debug_assert_eq!(self.params.n, 2);
        self.y_at_kr / (4.0 * self.j_at_kr)
            - ((0.5 * self.params.k).ln() + EULER_GAMMA) / (2.0 * PI)
    }
}

/// Value and radial derivative of the fundamental solution at one radius.
pub fn fundamental_solution(params: HelmholtzParams, radius: f64, r: f64) -> Result<(f64, f64)> {
    let fs = FundamentalSolution::new(params, radius)?;
    if !(r > 0.0) {
        return Err(HqdError::Domain(format!(
            "fundamental solution diverges at r = {r}; need r > 0"
        )));
    }
    Ok((fs.value(r), fs.radial_derivative(r)))
}

/// Mean-value constant c(n,k,R) = (2 pi R / k)^{n/2} J_{n/2}(kR).
/// Defined for every R > 0; it vanishes and changes sign past kR = j_{n/2,1}.
pub fn mvt_constant(params: HelmholtzParams, radius: f64) -> f64 {
    let x = params.k * radius;
    let j = crate::specialfn::eval(BesselKind::J, params.order_mass().value(), x);
    (2.0 * PI * radius / params.k).powf(0.5 * params.n as f64) * j
}

/// Constant density of the averaging kernel h_delta = chi_{B_delta} / c(n,k,delta).
/// Errors when the constant is non-positive (delta too large for k); values
/// within rounding distance of a J_{n/2} zero count as degenerate too.
pub fn mollifier_density(params: HelmholtzParams, delta: f64) -> Result<f64> {
    let c = mvt_constant(params, delta);
    let degenerate = 1e-14 * (2.0 * PI * delta / params.k).powf(0.5 * params.n as f64);
    if c <= degenerate {
        return Err(HqdError::NonPositiveMvtConstant { c, radius: delta });
    }
    Ok(1.0 / c)
}

/// The explicit solution u_{k,R} attached to a ball carrying a single point
/// mass: `(Delta + k^2) u = chi_{B_R} - weight * delta_0` with u and grad u
/// vanishing outside the closed ball.
pub struct BallDirac {
    /// Mass of the point source; equals the mean-value constant.
    pub weight: f64,
    pub c1: f64,
    pub c2: f64,
    pub profile: RadialProfile,
}

pub fn ball_dirac_example(params: HelmholtzParams, radius: f64) -> BallDirac {
    let k = params.k;
    let n = params.n as f64;
    let weight = mvt_constant(params, radius);
    let nu_mass = params.order_mass().value();
    let jm = crate::specialfn::eval(BesselKind::J, nu_mass, k * radius);
    let ym = crate::specialfn::eval(BesselKind::Y, nu_mass, k * radius);
    let c1 = PI * radius.powf(0.5 * n) * ym / (2.0 * k);
    let c2 = -PI * radius.powf(0.5 * n) * jm / (2.0 * k);
    let nu_low = nu_mass - 1.0; // n/2 - 1
    let profile = RadialProfile::new(k, radius, move |r: f64| {
        if r >= radius {
            return 0.0;
        }
        if r == 0.0 {
            return f64::INFINITY;
        }
        let pw = r.powf(1.0 - 0.5 * n);
        let j = crate::specialfn::eval(BesselKind::J, nu_low, k * r);
        let y = crate::specialfn::eval(BesselKind::Y, nu_low, k * r);
        1.0 / (k * k) + c1 * pw * j + c2 * pw * y
    });
    BallDirac {
        weight,
        c1,
        c2,
        profile,
    }
}

/// The radial solution of the Pompeiu free-boundary problem:
/// `(Delta + k^2) v = chi_{B_{R*}}` with v = 0 outside, built from the
/// normalized regular radial solution g (g(0) = 1) truncated at its first
/// local minimum.
pub struct Pompeiu {
    pub r_star: f64,
    pub offset: f64,
    pub profile: RadialProfile,
}

/// g(r) for the given dimension, normalized to g(0) = 1:
/// n = 2: J_0(kr); n = 3: sin(kr)/(kr).
pub fn pompeiu_g(params: HelmholtzParams, r: f64) -> f64 {
    let x = params.k * r;
    match params.n {
        2 => crate::specialfn::eval(BesselKind::J, 0.0, x.max(f64::MIN_POSITIVE)),
        _ => {
            if x.abs() < 1e-8 {
                1.0 - x * x / 6.0
            } else {
                x.sin() / x
            }
        }
    }
}

pub fn pompeiu_profile(params: HelmholtzParams) -> Pompeiu {
    let k = params.k;
    // The first local minimum of g sits at the first zero of J_{n/2}:
    // g'(r) is a negative multiple of r^{1-n/2} J_{n/2}(kr).
    let r_star = first_zero(params.order_mass()) / k;
    let g_star = pompeiu_g(params, r_star);
    let offset = -g_star;
    let scale = -1.0 / (k * k * g_star);
    let profile = RadialProfile::new(k, r_star, move |r: f64| {
        if r > r_star {
            0.0
        } else {
            scale * (pompeiu_g(params, r) + offset)
        }
    });
    Pompeiu {
        r_star,
        offset,
        profile,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p2() -> HelmholtzParams {
        HelmholtzParams::new(2, 1.0).unwrap()
    }
    fn p3() -> HelmholtzParams {
        HelmholtzParams::new(3, 1.0).unwrap()
    }

    #[test]
    fn r_max_values() {
        assert_relative_eq!(
            r_max(HelmholtzParams::new(3, 2.0).unwrap()),
            PI / 4.0,
            max_relative = 1e-13
        );
        assert_relative_eq!(r_max(p3()), PI / 2.0, max_relative = 1e-13);
        assert_relative_eq!(r_max(p2()), 1.202_412_778_847_886, max_relative = 1e-12);
    }

    #[test]
    fn fundamental_solution_spot_values() {
        // n=3, k=1, R=pi/2, r=pi/4: sin(k(R-r))/(4 pi r sin kR) = sqrt(2)/(2 pi^2).
        let (v, _) = fundamental_solution(p3(), PI / 2.0, PI / 4.0).unwrap();
        assert_relative_eq!(v, 2.0_f64.sqrt() / (2.0 * PI * PI), max_relative = 1e-12);
        // Vanishes exactly on the sphere.
        let (v, _) = fundamental_solution(p2(), 0.9, 0.9).unwrap();
        assert_eq!(v, 0.0);
        // Boundary radial derivative, n=2, k=1, R=1.  The cross-product
        // identity J_{nu+1} Y_nu - J_nu Y_{nu+1} = 2/(pi x) collapses the
        // bracket, leaving -1/(2 pi R J_0(kR)); negative since J_0 stays
        // positive below its first zero.
        let (_, d) = fundamental_solution(p2(), 1.0, 1.0).unwrap();
        assert_relative_eq!(
            d,
            -1.0 / (2.0 * PI * 0.765_197_686_557_966_6),
            max_relative = 1e-12
        );
        assert_relative_eq!(d, -0.207_991_929_259_235_6, max_relative = 1e-12);
    }

    #[test]
    fn fundamental_solution_derivative_consistency() {
        // Central differences agree with the closed-form radial derivative.
        let fs = FundamentalSolution::new(p2(), r_max(p2())).unwrap();
        for r in [0.2_f64, 0.5, 0.9, 1.1] {
            let dr = 1e-5;
            let fd = (fs.value(r + dr) - fs.value(r - dr)) / (2.0 * dr);
            assert_relative_eq!(fs.radial_derivative(r), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn fundamental_solution_closed_form_n3() {
        // |Phi - sin(k(R-r))/(4 pi r sin kR)| <= 1e-10 relative on (0, R).
        let fs = FundamentalSolution::new(p3(), PI / 2.0).unwrap();
        for i in 1..1000 {
            let r = PI / 2.0 * i as f64 / 1000.0;
            let closed = (PI / 2.0 - r).sin() / (4.0 * PI * r * (PI / 2.0_f64).sin());
            assert_relative_eq!(fs.value(r), closed, max_relative = 1e-10);
            assert!(fs.value(r) > 0.0, "positivity fails at r={r}");
        }
    }

    #[test]
    fn fundamental_solution_positive_and_monotone() {
        // Positive inside B_R for R < j_{0,1}/k, and increasing in R.
        let params = p2();
        let rr = r_max(params);
        let small = FundamentalSolution::new(params, 0.6 * rr).unwrap();
        let large = FundamentalSolution::new(params, 1.4 * rr).unwrap();
        for i in 1..200 {
            let r = 0.6 * rr * i as f64 / 200.0;
            let lo = small.value(r);
            let hi = large.value(r);
            assert!(lo >= 0.0);
            assert!(lo < hi, "monotonicity in R fails at r={r}");
        }
    }

    #[test]
    fn fundamental_solution_newtonian_limit() {
        // n=3: r Phi -> 1/(4 pi).
        let fs3 = FundamentalSolution::new(p3(), PI / 2.0).unwrap();
        let r = 1e-6 * PI / 2.0;
        assert_relative_eq!(r * fs3.value(r), 1.0 / (4.0 * PI), max_relative = 1e-3);
        // n=2 approaches -(ln r)/(2 pi) only logarithmically, so probe the
        // log slope: Phi(r) - Phi(e r) -> 1/(2 pi).
        let fs2 = FundamentalSolution::new(p2(), r_max(p2())).unwrap();
        let r = 1e-6 * r_max(p2());
        let slope = fs2.value(r) - fs2.value(r * std::f64::consts::E);
        assert_relative_eq!(slope * 2.0 * PI, 1.0, max_relative = 1e-3);
        // And the split constant matches the limit of Phi + ln(r)/(2 pi).
        assert_relative_eq!(
            fs2.value(r) + r.ln() / (2.0 * PI),
            fs2.log_remainder_at_zero(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn singular_configuration_guard() {
        // kR at the first zero of J_0 kills the n=2 kernel.
        let z = first_zero(BesselOrder::ZERO);
        assert!(matches!(
            FundamentalSolution::new(p2(), z),
            Err(HqdError::SingularConfiguration { .. })
        ));
    }

    #[test]
    fn lambda1_safety() {
        // k^2 < lambda_1(B_{r_max}) = (j/(r_max))^2 = 4 k^2.
        for params in [p2(), p3(), HelmholtzParams::new(2, 0.37).unwrap()] {
            let rr = r_max(params);
            let lambda1 = (first_zero(params.order_fund()) / rr).powi(2);
            assert!(params.k * params.k < lambda1);
            assert_relative_eq!(lambda1, 4.0 * params.k * params.k, max_relative = 1e-12);
        }
    }

    #[test]
    fn mvt_constant_values() {
        // n=3, k=1, R=pi/2: 4 pi, matching 4 pi (sin kR - kR cos kR)/k^3.
        assert_relative_eq!(mvt_constant(p3(), PI / 2.0), 4.0 * PI, max_relative = 1e-12);
        // Lebesgue limit: c / (pi R^2) -> 1 as k -> 0 (n=2).
        let p = HelmholtzParams::new(2, 1e-3).unwrap();
        assert_relative_eq!(mvt_constant(p, 1.0) / PI, 1.0, max_relative = 1e-6);
        // Vanishes at R = j_{1,1}/k.
        let z = first_zero(BesselOrder::ONE);
        assert!(mvt_constant(p2(), z).abs() <= 1e-12 * PI * z * z);
    }

    #[test]
    fn ball_dirac_consistency() {
        let bd = ball_dirac_example(p3(), PI / 2.0);
        // The point mass equals the mean-value constant.
        assert_relative_eq!(bd.weight, 4.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(bd.weight, mvt_constant(p3(), PI / 2.0), max_relative = 1e-14);
        assert_relative_eq!(bd.c2, -1.253_314_137_315_500_2, max_relative = 1e-12);
        // C^{1,1} matching at the support radius.
        let rr = PI / 2.0;
        assert_eq!(bd.profile.value(rr), 0.0);
        let eps = 1e-6;
        assert!(bd.profile.value(rr - eps).abs() < 1e-10);
        let d = (bd.profile.value(rr - eps) - bd.profile.value(rr - 2.0 * eps)) / eps;
        assert!(d.abs() < 1e-4, "derivative {d} does not vanish at R");
        // Same checks in two dimensions.
        let bd2 = ball_dirac_example(p2(), 0.8);
        assert_relative_eq!(bd2.weight, mvt_constant(p2(), 0.8), max_relative = 1e-14);
        assert_eq!(bd2.profile.value(0.8), 0.0);
        assert!(bd2.profile.value(0.8 - eps).abs() < 1e-10);
    }

    #[test]
    fn ball_dirac_pde_residual_interior() {
        // (Delta + k^2) u = 1 away from the origin, via radial finite
        // differences f'' + (n-1) f'/r + k^2 f.
        for (params, rr) in [(p2(), 0.8), (p3(), PI / 2.0)] {
            let bd = ball_dirac_example(params, rr);
            let dr = 1e-4;
            for i in 1..40 {
                let r = 0.15 * rr + (0.8 * rr - 0.15 * rr) * i as f64 / 40.0;
                let fm = bd.profile.value(r - dr);
                let f0 = bd.profile.value(r);
                let fp = bd.profile.value(r + dr);
                let lap = (fp - 2.0 * f0 + fm) / (dr * dr)
                    + (params.n as f64 - 1.0) * (fp - fm) / (2.0 * dr * r);
                let res = lap + f0 - 1.0;
                assert!(res.abs() < 1e-5, "residual {res} at r={r}");
            }
        }
    }

    #[test]
    fn pompeiu_values() {
        let pm3 = pompeiu_profile(p3());
        assert_relative_eq!(pm3.r_star, 4.493_409_457_909_064, max_relative = 1e-12);
        assert_relative_eq!(pm3.offset, 0.217_233_628_211_221_66, max_relative = 1e-10);
        let pm2 = pompeiu_profile(p2());
        assert_relative_eq!(pm2.r_star, 3.831_705_970_207_512, max_relative = 1e-12);
        // Zero value and slope at the free boundary.
        assert_eq!(pm2.profile.value(pm2.r_star), 0.0);
        let eps = 1e-6;
        assert!(pm2.profile.value(pm2.r_star - eps).abs() < 1e-9);
    }

    #[test]
    fn pompeiu_pde_residual() {
        // (Delta + k^2) profile = 1 inside the support, |residual| <= 1e-6.
        for params in [p2(), p3()] {
            let pm = pompeiu_profile(params);
            let dr = 1e-4;
            for i in 1..50 {
                let r = pm.r_star * (0.05 + 0.9 * i as f64 / 50.0);
                let fm = pm.profile.value(r - dr);
                let f0 = pm.profile.value(r);
                let fp = pm.profile.value(r + dr);
                let lap = (fp - 2.0 * f0 + fm) / (dr * dr)
                    + (params.n as f64 - 1.0) * (fp - fm) / (2.0 * dr * r);
                let res = lap + params.k * params.k * f0 - 1.0;
                assert!(res.abs() <= 1e-6, "residual {res} at r={r}, n={}", params.n);
            }
        }
    }

    #[test]
    fn mollifier_values() {
        assert_relative_eq!(
            mollifier_density(p3(), PI / 2.0).unwrap(),
            1.0 / (4.0 * PI),
            max_relative = 1e-12
        );
        // density * m(B_delta) -> 1 as delta -> 0 (n=2).
        let delta = 1e-3;
        let d = mollifier_density(p2(), delta).unwrap();
        assert_relative_eq!(d * PI * delta * delta, 1.0, max_relative = 1e-6);
        // Error where the constant vanishes.
        let z = first_zero(BesselOrder::ONE);
        assert!(matches!(
            mollifier_density(p2(), z),
            Err(HqdError::NonPositiveMvtConstant { .. })
        ));
    }
}
