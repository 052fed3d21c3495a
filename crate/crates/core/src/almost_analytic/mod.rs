//! Truncated almost-analytic extensions.
//!
//! For a smooth compactly supported `f` the extension is
//!
//! ```text
//! F(x + iy) = sum_{n=0}^{N} (iy)^n / n! * f^(n)(x) * chi(y / T[n])
//! ```
//!
//! with a nonincreasing schedule `T` satisfying `T[n] * M[2n] <= 2^-n`.
//! `F` agrees with `f` on the real axis, vanishes outside
//! `supp f x [-T[0], T[0]]`, and its d-bar derivative is `O(|Im z|^N)` near the axis.

mod cutoff;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cutoff::{build_cutoff, CutoffChi};

use crate::function_model::{
    estimate_sup_derivatives, DerivativeBounds, FunctionError, SmoothCompactFunction,
    DEFAULT_GRID_RESOLUTION,
};
use crate::rng::named_rng;

pub const DEFAULT_TRUNCATION: usize = 6;
pub const DEFAULT_T0: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtensionError {
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error("initial scale T0 = {0} must lie in (0, 1)")]
    BadT0(f64),
    #[error("truncation order must be at least 1")]
    ZeroTruncation,
    #[error("derivative bounds reach order {have}, schedule needs {need}")]
    InsufficientBounds { have: usize, need: usize },
    #[error("function max_order {have} is below the {need} required by truncation order {n}")]
    MaxOrderTooLow { have: usize, need: usize, n: usize },
    #[error("decay order l = {l} must satisfy 1 <= l <= N = {n}")]
    BadDecayOrder { l: usize, n: usize },
    #[error("decay fit needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
}

/// Truncation order, schedule and the derivative bounds it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionParams {
    pub n: usize,
    pub t: Vec<f64>,
    /// Half-height of the support rectangle, equal to `t[0]`.
    pub c: f64,
    pub bounds: DerivativeBounds,
}

impl ExtensionParams {
    /// Largest `n` for which `T[n] * M[2n] > 2^-n`, if any.
    pub fn schedule_violation(&self) -> Option<usize> {
        (0..=self.n).find(|&k| self.t[k] * self.bounds.m[2 * k] > (-(k as f64)).exp2())
    }
}

fn next_down(v: f64) -> f64 {
    if v > 0.0 {
        f64::from_bits(v.to_bits() - 1)
    } else {
        v
    }
}

pub fn compute_schedule(
    bounds: &DerivativeBounds,
    n: usize,
    t0: f64,
) -> Result<ExtensionParams, ExtensionError> {
    if n == 0 {
        return Err(ExtensionError::ZeroTruncation);
    }
    if !(t0 > 0.0 && t0 < 1.0) {
        return Err(ExtensionError::BadT0(t0));
    }
    if bounds.order() < 2 * n {
        return Err(ExtensionError::InsufficientBounds {
            have: bounds.order(),
            need: 2 * n,
        });
    }
    let m = &bounds.m;
    let mut t = Vec::with_capacity(n + 1);
    t.push(t0.min(1.0 / (1.0 + m[0])));
    for k in 1..=n {
        let cap = (-(k as f64)).exp2();
        let mut tk = t[k - 1].min(cap / m[2 * k].max(1.0));
        // rounding in the quotient may overshoot the cap by an ulp
        while tk * m[2 * k] > cap {
            tk = next_down(tk);
        }
        t.push(tk);
    }
    let c = t[0];
    Ok(ExtensionParams {
        n,
        t,
        c,
        bounds: bounds.clone(),
    })
}

/// Build-time knobs for [`AlmostAnalyticExtension::build`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionConfig {
    pub truncation: usize,
    pub t0: f64,
    pub grid_resolution: usize,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            truncation: DEFAULT_TRUNCATION,
            t0: DEFAULT_T0,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmostAnalyticExtension {
    f: SmoothCompactFunction,
    params: ExtensionParams,
    chi: CutoffChi,
}

impl AlmostAnalyticExtension {
    pub fn build(f: SmoothCompactFunction, cfg: ExtensionConfig) -> Result<Self, ExtensionError> {
        let n = cfg.truncation;
        if n == 0 {
            return Err(ExtensionError::ZeroTruncation);
        }
        let need = 2 * n;
        if f.max_order() < need {
            return Err(ExtensionError::MaxOrderTooLow {
                have: f.max_order(),
                need,
                n,
            });
        }
        let bounds = estimate_sup_derivatives(&f, need, cfg.grid_resolution)?;
        let params = compute_schedule(&bounds, n, cfg.t0)?;
        Self::from_params(f, params)
    }

    pub fn from_params(
        f: SmoothCompactFunction,
        params: ExtensionParams,
    ) -> Result<Self, ExtensionError> {
        if f.max_order() < params.n + 1 {
            return Err(ExtensionError::MaxOrderTooLow {
                have: f.max_order(),
                need: params.n + 1,
                n: params.n,
            });
        }
        Ok(AlmostAnalyticExtension {
            f,
            params,
            chi: build_cutoff(),
        })
    }

    pub fn function(&self) -> &SmoothCompactFunction {
        &self.f
    }

    pub fn params(&self) -> &ExtensionParams {
        &self.params
    }

    pub fn truncation(&self) -> usize {
        self.params.n
    }

    /// Half-height `C` of the support rectangle.
    pub fn half_height(&self) -> f64 {
        self.params.c
    }

    /// Whether `z` can lie in the support: `Re z` in `supp f` and `|Im z| <= C`.
    pub fn in_support_rect(&self, z: Complex64) -> bool {
        self.f.contains(z.re) && z.im.abs() <= self.params.c
    }

    /// Derivatives `f^(k)(x)` for `k <= N + 1`, the data both evaluators consume.
    pub fn column_jet(&self, x: f64) -> Result<Vec<f64>, FunctionError> {
        Ok(self.f.jet(x, self.params.n + 1)?.derivs)
    }

    pub fn eval_extension(&self, z: Complex64) -> Result<Complex64, FunctionError> {
        if !self.in_support_rect(z) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.extension_from_jet(&self.f.jet(z.re, self.params.n)?.derivs, z.im))
    }

    pub fn eval_dbar(&self, z: Complex64) -> Result<Complex64, FunctionError> {
        if !self.in_support_rect(z) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.dbar_from_jet(&self.column_jet(z.re)?, z.im))
    }

    /// Extension value at height `y` given `derivs[k] = f^(k)(x)`, `k <= N`.
    pub fn extension_from_jet(&self, derivs: &[f64], y: f64) -> Complex64 {
        let iy = Complex64::new(0.0, y);
        let mut power = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..=self.params.n {
            if n > 0 {
                power = power * iy / n as f64;
            }
            let w = self.chi.value(y / self.params.t[n]);
            if w == 0.0 {
                break;
            }
            acc += power * (derivs[n] * w);
        }
        acc
    }

    /// `(d_x + i d_y) / 2` of the truncated series at height `y`, `derivs` up to order `N + 1`.
    ///
    /// The x-derivative sum and the `chi`-part of the y-derivative sum are
    /// combined index by index, which leaves
    /// `sum_{n<N} (iy)^n/n! f^(n+1) (chi_n - chi_{n+1}) + (iy)^N/N! f^(N+1) chi_N`
    /// free of cancellation near the axis.
    pub fn dbar_from_jet(&self, derivs: &[f64], y: f64) -> Complex64 {
        let n_max = self.params.n;
        let t = &self.params.t;
        let iy = Complex64::new(0.0, y);
        let mut power = Complex64::new(1.0, 0.0);
        let mut smooth = Complex64::new(0.0, 0.0);
        let mut ramp = Complex64::new(0.0, 0.0);
        let mut chi_n = self.chi.value(y / t[0]);
        for n in 0..=n_max {
            if n > 0 {
                power = power * iy / n as f64;
            }
            let chi_next = if n < n_max { self.chi.value(y / t[n + 1]) } else { 0.0 };
            let weight = chi_n - chi_next;
            if weight != 0.0 {
                smooth += power * (derivs[n + 1] * weight);
            }
            let dchi = self.chi.derivative(y / t[n]);
            if dchi != 0.0 {
                ramp += power * (derivs[n] * dchi / t[n]);
            }
            chi_n = chi_next;
        }
        0.5 * (smooth + Complex64::new(0.0, 1.0) * ramp)
    }
}

/// Log-log fit of `sup_x |dbar F(x + iy)|` against `|y|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope; `+inf` when every sample vanished.
    pub slope: f64,
    /// `exp(intercept)` of the fit.
    pub constant: f64,
    /// Smallest `C` with `sup_x |dbar F| <= C |y|^l` over the samples.
    pub bound_constant: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl DecayFit {
    pub fn is_degenerate(&self) -> bool {
        self.slope == f64::INFINITY
    }
}

/// Height window used by [`verify_decay`]: `[1e-6, T[N]/4]`, or six decades
/// below `T[N]/4` when that is already under `1e-5`.
pub fn decay_window(ext: &AlmostAnalyticExtension) -> (f64, f64) {
    let hi = ext.params.t[ext.params.n] / 4.0;
    let lo = if hi > 1e-5 { 1e-6 } else { hi * 1e-6 };
    (lo, hi)
}

pub fn verify_decay(
    ext: &AlmostAnalyticExtension,
    l: usize,
    n_samples: usize,
    seed: u64,
) -> Result<DecayFit, ExtensionError> {
    if l == 0 || l > ext.params.n {
        return Err(ExtensionError::BadDecayOrder { l, n: ext.params.n });
    }
    if n_samples < 100 {
        return Err(ExtensionError::TooFewSamples(n_samples));
    }
    let (lo, hi) = decay_window(ext);
    let (a, b) = ext.f.support();
    let mut rng = named_rng(seed, "verify-decay");
    let n_heights = ((n_samples as f64).sqrt().round() as usize).clamp(10, 40);
    let n_x = n_samples.div_ceil(n_heights);
    let jets: Vec<Vec<f64>> = (0..n_x)
        .map(|_| ext.column_jet(rng.random_range(a..=b)))
        .collect::<Result<_, _>>()?;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut pts = Vec::with_capacity(n_heights);
    let mut bound_constant = 0.0f64;
    for _ in 0..n_heights {
        let mag = rng.random_range(llo..=lhi).exp();
        let y = if rng.random_bool(0.5) { mag } else { -mag };
        let sup = jets
            .iter()
            .map(|d| ext.dbar_from_jet(d, y).norm())
            .fold(0.0f64, f64::max);
        bound_constant = bound_constant.max(sup / mag.powi(l as i32));
        if sup > 0.0 {
            pts.push((mag.ln(), sup.ln()));
        }
    }
    if pts.len() < 2 {
        return Ok(DecayFit {
            slope: f64::INFINITY,
            constant: 0.0,
            bound_constant,
            y_min: lo,
            y_max: hi,
        });
    }
    let (slope, intercept) = least_squares(&pts);
    Ok(DecayFit {
        slope,
        constant: intercept.exp(),
        bound_constant,
        y_min: lo,
        y_max: hi,
    })
}

/// Ordinary least-squares line through `(x, y)` points: `(slope, intercept)`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_model::DEFAULT_MAX_ORDER;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bounds(m: Vec<f64>) -> DerivativeBounds {
        DerivativeBounds {
            m,
            grid_resolution: 64,
        }
    }

    fn ext(text: &str, support: (f64, f64), n: usize) -> AlmostAnalyticExtension {
        let f = SmoothCompactFunction::parse(text, support, DEFAULT_MAX_ORDER).unwrap();
        AlmostAnalyticExtension::build(
            f,
            ExtensionConfig {
                truncation: n,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn schedule_for_zero_function() {
        let p = compute_schedule(&bounds(vec![0.0; 9]), 4, 0.5).unwrap();
        assert_eq!(p.t, vec![0.5, 0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(p.c, 0.5);
    }

    #[test]
    fn schedule_recurrence_small_case() {
        let p = compute_schedule(&bounds(vec![8.0, 8.0, 8.0]), 1, 0.9).unwrap();
        assert_relative_eq!(p.t[0], 1.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(p.t[1], 1.0 / 16.0, max_relative = 1e-15);
    }

    #[test]
    fn schedule_argument_checks() {
        let b = bounds(vec![1.0; 5]);
        assert!(matches!(compute_schedule(&b, 2, 1.0), Err(ExtensionError::BadT0(_))));
        assert!(matches!(compute_schedule(&b, 0, 0.5), Err(ExtensionError::ZeroTruncation)));
        assert!(matches!(
            compute_schedule(&b, 3, 0.5),
            Err(ExtensionError::InsufficientBounds { have: 4, need: 6 })
        ));
    }

    proptest! {
        #[test]
        fn schedule_inequality_is_exact(raw in prop::collection::vec(0.0f64..1e9, 13), t0 in 0.01f64..0.99) {
            let mut m = raw;
            for i in 1..m.len() {
                m[i] = m[i].max(m[i - 1]);
            }
            let p = compute_schedule(&bounds(m.clone()), 6, t0).unwrap();
            for k in 0..=6 {
                prop_assert!(p.t[k] > 0.0);
                prop_assert!(p.t[k] * m[2 * k] <= (-(k as f64)).exp2());
                if k > 0 {
                    prop_assert!(p.t[k] <= p.t[k - 1]);
                }
            }
            prop_assert!(p.t[0] < 1.0);
            prop_assert!(p.schedule_violation().is_none());
        }
    }

    #[test]
    fn restriction_to_real_axis_is_exact() {
        let e = ext("bump(x)", (-1.0, 1.0), 6);
        for i in 0..=200 {
            let x = -1.2 + 2.4 * i as f64 / 200.0;
            let v = e.eval_extension(Complex64::new(x, 0.0)).unwrap();
            assert_eq!(v.re, e.function().value(x).unwrap());
            assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn vanishes_outside_support_rectangle() {
        let e = ext("sin(3*x)*bump(x)", (-1.0, 1.0), 6);
        let c = e.half_height();
        for z in [
            Complex64::new(0.2, c * 1.0001),
            Complex64::new(0.2, -c - 0.3),
            Complex64::new(1.01, 0.001),
            Complex64::new(-3.0, 0.0),
        ] {
            assert_eq!(e.eval_extension(z).unwrap(), Complex64::new(0.0, 0.0));
            assert_eq!(e.eval_dbar(z).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn zero_function_extends_to_zero() {
        let e = ext("0", (-1.0, 1.0), 4);
        for z in [Complex64::new(0.1, 0.2), Complex64::new(-0.5, -0.01)] {
            assert_eq!(e.eval_extension(z).unwrap(), Complex64::new(0.0, 0.0));
            assert_eq!(e.eval_dbar(z).unwrap(), Complex64::new(0.0, 0.0));
        }
        let fit = verify_decay(&e, 2, 200, 1).unwrap();
        assert!(fit.is_degenerate());
    }

    #[test]
    fn dbar_vanishes_on_real_axis() {
        let e = ext("bump((x-0.3)/0.5)", (-0.2, 0.8), 6);
        for i in 0..50 {
            let x = -0.2 + i as f64 / 49.0;
            assert_eq!(e.eval_dbar(Complex64::new(x, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    // Oracle: each term of the truncated series differentiated on its own and
    // summed as written, with no regrouping.
    fn dbar_termwise(e: &AlmostAnalyticExtension, z: Complex64) -> Complex64 {
        let d = e.column_jet(z.re).unwrap();
        let (y, t, chi) = (z.im, &e.params().t, build_cutoff());
        let i = Complex64::new(0.0, 1.0);
        let mut fact = 1.0;
        let mut s1 = Complex64::new(0.0, 0.0);
        let mut s2 = Complex64::new(0.0, 0.0);
        let mut s3 = Complex64::new(0.0, 0.0);
        for n in 0..=e.truncation() {
            if n > 0 {
                fact *= n as f64;
            }
            let iyn = (i * y).powi(n as i32);
            s1 += iyn / fact * d[n + 1] * chi.value(y / t[n]);
            if n >= 1 {
                s2 += i.powi(n as i32) * (n as f64) * y.powi(n as i32 - 1) / fact
                    * d[n]
                    * chi.value(y / t[n]);
            }
            s3 += iyn / (fact * t[n]) * d[n] * chi.derivative(y / t[n]);
        }
        0.5 * (s1 + i * s2 + i * s3)
    }

    // Oracle: centred differences of the extension in x and y.
    fn dbar_fd(e: &AlmostAnalyticExtension, z: Complex64, h: f64) -> Complex64 {
        let ev = |w: Complex64| e.eval_extension(w).unwrap();
        let dx = (ev(z + h) - ev(z - h)) / (2.0 * h);
        let ih = Complex64::new(0.0, h);
        let dy = (ev(z + ih) - ev(z - ih)) / (2.0 * h);
        0.5 * (dx + Complex64::new(0.0, 1.0) * dy)
    }

    #[test]
    fn regrouped_dbar_matches_termwise_sum() {
        let e = ext("sin(3*x)*bump(x)", (-1.0, 1.0), 6);
        for (x, y) in [(0.1, 0.3), (-0.4, 0.04), (0.6, -0.45), (0.05, 0.02), (0.3, 2e-5)] {
            let z = Complex64::new(x, y);
            let a = e.eval_dbar(z).unwrap();
            let b = dbar_termwise(&e, z);
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn dbar_matches_finite_differences() {
        for (text, support) in [
            ("bump(x)", (-1.0, 1.0)),
            ("sin(3*x)*bump(x)", (-1.0, 1.0)),
            ("bump((x-0.3)/0.5)", (-0.2, 0.8)),
        ] {
            let e = ext(text, support, 6);
            let t = &e.params().t;
            let (ylo, yhi) = (t[6] / 8.0, t[0] / 2.0);
            for (k, xr) in [0.2, 0.45, 0.7].iter().enumerate() {
                let x = support.0 + xr * (support.1 - support.0);
                // heights spread log-uniformly inside [T[N]/8, T[0]/2], kept
                // well above the difference step
                for y in [yhi * 0.9, 0.3 * yhi, 0.07 * yhi, 0.02 * yhi] {
                    let y = if k % 2 == 0 { y } else { -y };
                    assert!(y.abs() >= ylo);
                    let z = Complex64::new(x, y);
                    let a = e.eval_dbar(z).unwrap();
                    let b = dbar_fd(&e, z, 1e-5);
                    let scale = a.norm().max(b.norm()).max(1e-3);
                    assert!((a - b).norm() <= 1e-5 * scale, "{} at {}: {} vs {}", text, z, a, b);
                }
            }
        }
    }

    #[test]
    fn near_axis_dbar_is_the_top_term() {
        // below T[N]/2 every cutoff is 1, leaving (iy)^N/N! f^(N+1)(x) / 2
        let e = ext("bump(x)", (-1.0, 1.0), 4);
        let y = e.params().t[4] / 10.0;
        let x = 0.37;
        let d = e.column_jet(x).unwrap();
        let want = 0.5 * Complex64::new(0.0, y).powi(4) / 24.0 * d[5];
        let got = e.eval_dbar(Complex64::new(x, y)).unwrap();
        assert_relative_eq!(got.re, want.re, max_relative = 1e-12);
        assert_eq!(got.im, 0.0);
    }

    #[test]
    fn decay_slope_for_bump() {
        let e = ext("bump(x)", (-1.0, 1.0), 4);
        let fit = verify_decay(&e, 2, 400, 7).unwrap();
        assert!(fit.slope >= 1.8, "slope {}", fit.slope);
        let fit3 = verify_decay(&e, 3, 400, 7).unwrap();
        assert_eq!(fit.slope, fit3.slope);
        assert!(fit.y_max <= e.params().t[4] / 4.0);
    }

    #[test]
    fn decay_argument_checks() {
        let e = ext("bump(x)", (-1.0, 1.0), 4);
        assert!(matches!(verify_decay(&e, 0, 200, 1), Err(ExtensionError::BadDecayOrder { .. })));
        assert!(matches!(verify_decay(&e, 5, 200, 1), Err(ExtensionError::BadDecayOrder { .. })));
        assert!(matches!(verify_decay(&e, 2, 99, 1), Err(ExtensionError::TooFewSamples(99))));
    }

    #[test]
    fn build_requires_enough_derivatives() {
        let f = SmoothCompactFunction::parse("bump(x)", (-1.0, 1.0), 8).unwrap();
        assert!(matches!(
            AlmostAnalyticExtension::build(f, ExtensionConfig::default()),
            Err(ExtensionError::MaxOrderTooLow { need: 12, .. })
        ));
    }
}
