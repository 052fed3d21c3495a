//! Cayley transform `psi(z) = (z + i) / (z - i)` and circle extensions built by
//! pulling a circle function back to the real line.
//!
//! `psi` maps the real line onto the unit circle minus `1` and the lower half
//! plane onto the open unit disk. A circle function `f` supported away from `1`
//! is carried by its pullback `h = f o psi`, a compactly supported function on
//! the line, and extended to the plane as `H o psi^-1` where `H` is the
//! almost-analytic extension of `h`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::almost_analytic::{AlmostAnalyticExtension, ExtensionConfig, ExtensionError};
use crate::function_model::{Expr, FunctionError, SmoothCompactFunction};
use crate::rng::named_rng;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Boundary samples per rectangle edge when estimating region constants.
pub const EDGE_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CayleyError {
    #[error("Cayley map evaluated at its pole {0}")]
    Pole(Complex64),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error("extension half-height C = {0} must be below 1")]
    HalfHeightTooLarge(f64),
    #[error("region [{a}, {b}] x [-{c}, {c}] needs a < b and 0 <= c < 1")]
    BadRegion { a: f64, b: f64, c: f64 },
    #[error("comparability check needs at least 1000 samples, got {0}")]
    TooFewSamples(usize),
}

pub fn psi(z: Complex64) -> Result<Complex64, CayleyError> {
    let den = z - I;
    if den == ZERO {
        return Err(CayleyError::Pole(z));
    }
    Ok((z + I) / den)
}

pub fn psi_inv(xi: Complex64) -> Result<Complex64, CayleyError> {
    let den = xi - ONE;
    if den == ZERO {
        return Err(CayleyError::Pole(xi));
    }
    Ok(I * (xi + ONE) / den)
}

/// Complex derivative of `psi^-1`: `-2i / (xi - 1)^2`.
pub fn psi_inv_prime(xi: Complex64) -> Result<Complex64, CayleyError> {
    let den = xi - ONE;
    if den == ZERO {
        return Err(CayleyError::Pole(xi));
    }
    Ok(Complex64::new(0.0, -2.0) / (den * den))
}

/// Distance from `xi` to the unit circle.
pub fn dist_to_circle(xi: Complex64) -> f64 {
    (xi.norm() - 1.0).abs()
}

/// Angle of `e^{i theta}` whose pullback coordinate is `t`, in `(0, 2 pi)`.
pub fn angle_of(t: f64) -> f64 {
    2.0 * 1.0f64.atan2(t)
}

/// Circle function carried by its Cayley pullback `h = f o psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleFunction {
    pullback: SmoothCompactFunction,
}

impl CircleFunction {
    pub fn from_pullback(pullback: SmoothCompactFunction) -> Self {
        CircleFunction { pullback }
    }

    /// `f(e^{i theta}) = expr(theta)` with `supp f` inside `[theta1, theta2]`.
    pub fn from_angle(
        expr: Expr,
        theta_support: (f64, f64),
        max_order: usize,
    ) -> Result<Self, CayleyError> {
        Ok(CircleFunction {
            pullback: SmoothCompactFunction::from_angle(expr, theta_support, max_order)?,
        })
    }

    pub fn pullback(&self) -> &SmoothCompactFunction {
        &self.pullback
    }

    /// `f(zeta) = h(psi^-1(zeta))`, with `f(1) = 0`.
    pub fn value(&self, zeta: Complex64) -> Result<f64, CayleyError> {
        if zeta == ONE {
            return Ok(0.0);
        }
        Ok(self.pullback.value(psi_inv(zeta)?.re)?)
    }

    /// Value at `e^{i theta}`.
    pub fn value_at_angle(&self, theta: f64) -> Result<f64, CayleyError> {
        let half = theta / 2.0;
        if half.sin() == 0.0 {
            return Ok(0.0);
        }
        Ok(self.pullback.value(half.cos() / half.sin())?)
    }
}

/// Image under `psi` of `[a, b] x [-c, c]` with constants for the comparability bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `d(1, Omega)`.
    pub c_omega: f64,
    /// `sup |xi|` over `Omega`.
    pub d_omega: f64,
    /// `inf |xi|` over `Omega`.
    pub r_min: f64,
    /// Angular extent of `Omega`, with angles taken in `(0, 2 pi)`.
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Region {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, CayleyError> {
        if !(a < b && (0.0..1.0).contains(&c) && a.is_finite() && b.is_finite()) {
            return Err(CayleyError::BadRegion { a, b, c });
        }
        let mut pts = Vec::with_capacity(4 * EDGE_SAMPLES + 6);
        for k in 0..EDGE_SAMPLES {
            let s = k as f64 / (EDGE_SAMPLES - 1) as f64;
            let x = a + s * (b - a);
            let y = -c + s * 2.0 * c;
            pts.push(Complex64::new(x, -c));
            pts.push(Complex64::new(x, c));
            pts.push(Complex64::new(a, y));
            pts.push(Complex64::new(b, y));
        }
        // |psi| is monotone in |x| along horizontal lines, so its extremes sit
        // at the abscissa closest to 0
        let x0 = 0.0f64.clamp(a, b);
        pts.push(Complex64::new(x0, c));
        pts.push(Complex64::new(x0, -c));
        let mut c_omega = f64::INFINITY;
        let mut d_omega = 0.0f64;
        let mut r_min = f64::INFINITY;
        let mut phi_min = f64::INFINITY;
        let mut phi_max = f64::NEG_INFINITY;
        for z in pts {
            let xi = psi(z)?;
            c_omega = c_omega.min((xi - ONE).norm());
            d_omega = d_omega.max(xi.norm());
            r_min = r_min.min(xi.norm());
            let mut phi = xi.arg();
            if phi <= 0.0 {
                phi += 2.0 * std::f64::consts::PI;
            }
            phi_min = phi_min.min(phi);
            phi_max = phi_max.max(phi);
        }
        Ok(Region {
            a,
            b,
            c,
            c_omega,
            d_omega,
            r_min,
            phi_min,
            phi_max,
        })
    }

    pub fn c1(&self) -> f64 {
        1.0 / (1.0 + self.d_omega)
    }

    pub fn c2(&self) -> f64 {
        (self.d_omega + 1.0) / (self.c_omega * self.c_omega)
    }
}

/// Extension of a circle function: `H o psi^-1` with `H` the extension of the pullback.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleExtension {
    base: AlmostAnalyticExtension,
    omega0: Region,
}

impl CircleExtension {
    pub fn build(f: &CircleFunction, cfg: ExtensionConfig) -> Result<Self, CayleyError> {
        let base = AlmostAnalyticExtension::build(f.pullback.clone(), cfg)?;
        Self::from_base(base)
    }

    pub fn from_base(base: AlmostAnalyticExtension) -> Result<Self, CayleyError> {
        let c = base.half_height();
        if c >= 1.0 {
            return Err(CayleyError::HalfHeightTooLarge(c));
        }
        let (a, b) = base.function().support();
        let omega0 = Region::new(a, b, c)?;
        Ok(CircleExtension { base, omega0 })
    }

    pub fn base(&self) -> &AlmostAnalyticExtension {
        &self.base
    }

    /// `Omega_0 = psi(supp h x [-C, C])`.
    pub fn support_region(&self) -> &Region {
        &self.omega0
    }

    /// Whether `xi` maps into the support rectangle of the base extension.
    pub fn in_support(&self, xi: Complex64) -> bool {
        match psi_inv(xi) {
            Ok(z) => self.base.in_support_rect(z),
            Err(_) => false,
        }
    }

    pub fn eval(&self, xi: Complex64) -> Result<Complex64, CayleyError> {
        if xi == ONE {
            return Ok(ZERO);
        }
        let z = psi_inv(xi)?;
        Ok(self.base.eval_extension(z)?)
    }

    /// `dbar(H o psi^-1)(xi) = (dbar H)(psi^-1 xi) * conj((psi^-1)'(xi))`.
    pub fn eval_dbar(&self, xi: Complex64) -> Result<Complex64, CayleyError> {
        let z = psi_inv(xi)?;
        if !self.base.in_support_rect(z) {
            return Ok(ZERO);
        }
        Ok(self.base.eval_dbar(z)? * psi_inv_prime(xi)?.conj())
    }
}

/// Observed range of `|Im psi^-1(xi)| / d(xi, S^1)` over a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub c1: f64,
    pub c2: f64,
    /// Largest relative deviation from `(|xi| + 1) / |xi - 1|^2`.
    pub identity_rel_err: f64,
    pub within_bounds: bool,
    pub samples: usize,
}

/// Samples `xi = psi(x + iy)` over the region's rectangle; `None` when `c = 0`
/// (every sample lies on the circle).
pub fn verify_imag_comparability(
    region: &Region,
    n_samples: usize,
    seed: u64,
) -> Result<Option<Comparability>, CayleyError> {
    if n_samples < 1000 {
        return Err(CayleyError::TooFewSamples(n_samples));
    }
    if region.c == 0.0 {
        return Ok(None);
    }
    let mut rng = named_rng(seed, "imag-comparability");
    let (c1, c2) = (region.c1(), region.c2());
    let mut out = Comparability {
        ratio_min: f64::INFINITY,
        ratio_max: 0.0,
        c1,
        c2,
        identity_rel_err: 0.0,
        within_bounds: true,
        samples: 0,
    };
    while out.samples < n_samples {
        let x = rng.random_range(region.a..=region.b);
        let y = rng.random_range(-region.c..=region.c);
        // |xi| - 1 loses all precision as y -> 0
        if y.abs() < 1e-6 * region.c.max(1e-300) {
            continue;
        }
        let xi = psi(Complex64::new(x, y))?;
        let ratio = psi_inv(xi)?.im.abs() / dist_to_circle(xi);
        let exact = (xi.norm() + 1.0) / (xi - ONE).norm_sqr();
        out.identity_rel_err = out.identity_rel_err.max((ratio - exact).abs() / exact);
        out.ratio_min = out.ratio_min.min(ratio);
        out.ratio_max = out.ratio_max.max(ratio);
        if ratio < c1 || ratio > c2 {
            out.within_bounds = false;
        }
        out.samples += 1;
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_model::DEFAULT_MAX_ORDER;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bump_circle() -> CircleExtension {
        let h = SmoothCompactFunction::parse("bump(x)", (-1.0, 1.0), DEFAULT_MAX_ORDER).unwrap();
        CircleExtension::build(&CircleFunction::from_pullback(h), ExtensionConfig::default()).unwrap()
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(c(0.0, 0.0)).unwrap(), c(-1.0, 0.0));
        let v = psi(c(1.0, 0.0)).unwrap();
        assert_relative_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.im, 1.0, epsilon = 1e-15);
        // direct evaluation: (-1 + i)/(-1 - i) = -i
        let w = psi(c(-1.0, 0.0)).unwrap();
        assert_relative_eq!(w.im, -1.0, epsilon = 1e-15);
        for x in [-3.0, 0.7, 42.0] {
            assert_relative_eq!(psi(c(x, 0.0)).unwrap().norm(), 1.0, epsilon = 1e-15);
        }
        assert!(matches!(psi(I), Err(CayleyError::Pole(_))));
    }

    #[test]
    fn psi_tends_to_one_at_infinity() {
        assert!((psi(c(1e9, 3e8)).unwrap() - ONE).norm() < 1e-8);
    }

    #[test]
    fn psi_inv_values() {
        assert_eq!(psi_inv(c(-1.0, 0.0)).unwrap(), ZERO);
        let v = psi_inv(Complex64::from_polar(1.0, PI / 2.0)).unwrap();
        assert_relative_eq!(v.re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(v.im, 0.0, epsilon = 1e-15);
        for th in [0.3, 1.9, 4.0, 6.0] {
            let v = psi_inv(Complex64::from_polar(1.0, th)).unwrap();
            assert_relative_eq!(v.re, 1.0 / (th / 2.0).tan(), max_relative = 1e-12);
            assert_relative_eq!(angle_of(v.re), th, epsilon = 1e-12);
        }
        assert_eq!(psi_inv(ZERO).unwrap(), c(0.0, -1.0));
        assert!(matches!(psi_inv(ONE), Err(CayleyError::Pole(_))));
    }

    #[test]
    fn psi_inv_prime_values() {
        let v = psi_inv_prime(c(-1.0, 0.0)).unwrap();
        assert_relative_eq!(v.im, -0.5, epsilon = 1e-15);
        assert_eq!(v.re, 0.0);
        assert_eq!(psi_inv_prime(ZERO).unwrap(), c(0.0, -2.0));
        let xi = c(2.0, 1.0);
        let h = 1e-6;
        let fd = (psi_inv(xi + h).unwrap() - psi_inv(xi - h).unwrap()) / (2.0 * h);
        let d = psi_inv_prime(xi).unwrap();
        assert!((fd - d).norm() <= 1e-7 * d.norm());
        assert!(psi_inv_prime(ONE).is_err());
    }

    proptest! {
        #[test]
        fn round_trips(re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let w = c(re, im);
            prop_assume!((w - ONE).norm() > 1e-3 && (w - I).norm() > 1e-3);
            let back = psi(psi_inv(w).unwrap()).unwrap();
            prop_assert!((back - w).norm() <= 1e-12 * w.norm().max(1.0));
            let back = psi_inv(psi(w).unwrap()).unwrap();
            prop_assert!((back - w).norm() <= 1e-12 * w.norm().max(1.0));
        }

        #[test]
        fn half_plane_mapping(x in -20.0f64..20.0, y in 1e-3f64..20.0) {
            prop_assert_eq!((psi(c(x, 0.0)).unwrap().norm() - 1.0).abs() <= 1e-12, true);
            prop_assert!(psi(c(x, -y)).unwrap().norm() < 1.0);
            prop_assume!((c(x, y) - I).norm() > 1e-9);
            prop_assert!(psi(c(x, y)).unwrap().norm() > 1.0);
        }
    }

    #[test]
    fn circle_extension_restricts_to_pullback() {
        let ce = bump_circle();
        let h = ce.base().function();
        for x0 in [-0.9, -0.3, 0.0, 0.55] {
            let xi = psi(c(x0, 0.0)).unwrap();
            let v = ce.eval(xi).unwrap();
            assert_relative_eq!(v.re, h.value(x0).unwrap(), max_relative = 1e-12);
            assert!(v.im.abs() < 1e-15);
        }
        assert_eq!(ce.eval(ONE).unwrap(), ZERO);
        // psi(3 + 0.1i) lies outside supp h x [-C, C]
        assert_eq!(ce.eval(psi(c(3.0, 0.1)).unwrap()).unwrap(), ZERO);
        assert_eq!(ce.eval_dbar(psi(c(3.0, 0.1)).unwrap()).unwrap(), ZERO);
        assert!(ce.eval_dbar(ONE).is_err());
    }

    #[test]
    fn circle_dbar_vanishes_on_circle() {
        let ce = bump_circle();
        for th in [1.7, 2.5, PI, 4.1] {
            let v = ce.eval_dbar(Complex64::from_polar(1.0, th)).unwrap();
            assert!(v.norm() < 1e-14, "{}", v);
        }
    }

    #[test]
    fn chain_rule_against_finite_differences() {
        let ce = bump_circle();
        let c0 = ce.base().half_height();
        let h = 1e-5;
        for x0 in [-0.6, -0.1, 0.35] {
            let xi = psi(c(x0, c0 / 4.0)).unwrap();
            let ev = |w: Complex64| ce.eval(w).unwrap();
            let dx = (ev(xi + h) - ev(xi - h)) / (2.0 * h);
            let ih = c(0.0, h);
            let dy = (ev(xi + ih) - ev(xi - ih)) / (2.0 * h);
            let fd = 0.5 * (dx + I * dy);
            let d = ce.eval_dbar(xi).unwrap();
            assert!((d - fd).norm() <= 1e-5 * d.norm(), "{} vs {}", d, fd);
        }
    }

    #[test]
    fn region_constants() {
        let r = Region::new(-1.0, 1.0, 0.5).unwrap();
        // |psi(0.5i)| = 1.5 / 0.5
        assert_relative_eq!(r.d_omega, 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.r_min, 1.0 / 3.0, max_relative = 1e-12);
        // farthest corner from i is (+-1, -0.5): |z - i|^2 = 1 + 2.25
        assert_relative_eq!(r.c_omega, 2.0 / 3.25f64.sqrt(), max_relative = 1e-12);
        assert!(r.phi_min > 0.0 && r.phi_max < 2.0 * PI);
        assert!(Region::new(1.0, 0.0, 0.5).is_err());
        assert!(Region::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn comparability_on_a_region() {
        let r = Region::new(-2.0, 1.5, 0.8).unwrap();
        let out = verify_imag_comparability(&r, 2000, 3).unwrap().unwrap();
        assert!(out.within_bounds);
        assert!(out.ratio_min >= out.c1 && out.ratio_max <= out.c2);
        assert!(out.identity_rel_err <= 1e-10);
        assert_eq!(out.samples, 2000);
    }

    #[test]
    fn comparability_on_imaginary_axis_image() {
        for y0 in [-0.7, -0.2, 0.3, 0.9] {
            let xi = psi(c(0.0, y0)).unwrap();
            let ratio = psi_inv(xi).unwrap().im.abs() / dist_to_circle(xi);
            let exact = (xi.norm() + 1.0) / (xi - ONE).norm_sqr();
            assert_relative_eq!(ratio, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_region_is_skipped() {
        let r = Region::new(-1.0, 1.0, 0.0).unwrap();
        assert_eq!(verify_imag_comparability(&r, 1000, 1).unwrap(), None);
        assert!(verify_imag_comparability(&r, 10, 1).is_err());
    }

    #[test]
    fn angle_form_values() {
        let g = Expr::shifted_bump(PI, 1.0);
        let f = CircleFunction::from_angle(g.clone(), (PI - 1.0, PI + 1.0), 12).unwrap();
        for th in [2.3, PI, 3.9] {
            assert_relative_eq!(
                f.value_at_angle(th).unwrap(),
                g.eval(th).unwrap(),
                max_relative = 1e-12,
                epsilon = 1e-300
            );
            let zeta = Complex64::from_polar(1.0, th);
            assert_relative_eq!(f.value(zeta).unwrap(), g.eval(th).unwrap(), max_relative = 1e-10);
        }
        assert_eq!(f.value(ONE).unwrap(), 0.0);
        assert_eq!(f.value_at_angle(0.0).unwrap(), 0.0);
    }
}
