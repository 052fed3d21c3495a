//! Truncated Taylor-series arithmetic.
//!
//! A `Series` of length `p + 1` holds the normalized coefficients
//! `c_k = g^(k)(x0) / k!` of a function `g` around a base point.
//! All operations truncate at the input length.

/// Normalized Taylor coefficients.
pub type Series = Vec<f64>;

/// `|u| >= BUMP_EDGE` is treated as outside the bump support.
pub const BUMP_EDGE: f64 = 1.0 - 1e-8;

pub fn constant(v: f64, order: usize) -> Series {
    let mut s = vec![0.0; order + 1];
    s[0] = v;
    s
}

pub fn variable(x: f64, order: usize) -> Series {
    let mut s = constant(x, order);
    if order >= 1 {
        s[1] = 1.0;
    }
    s
}

pub fn neg(a: &[f64]) -> Series {
    a.iter().map(|v| -v).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Series {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Series {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], k: f64) -> Series {
    a.iter().map(|v| v * k).collect()
}

/// Cauchy product.
pub fn mul(a: &[f64], b: &[f64]) -> Series {
    let n = a.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut acc = 0.0;
        for j in 0..=k {
            acc += a[j] * b[k - j];
        }
        out[k] = acc;
    }
    out
}

/// Series quotient; `None` when the denominator vanishes at the base point.
pub fn div(a: &[f64], b: &[f64]) -> Option<Series> {
    if b[0] == 0.0 {
        return None;
    }
    let n = a.len();
    let mut q = vec![0.0; n];
    for k in 0..n {
        let mut acc = a[k];
        for j in 1..=k {
            acc -= b[j] * q[k - j];
        }
        q[k] = acc / b[0];
    }
    Some(q)
}

pub fn powi(a: &[f64], k: i32) -> Option<Series> {
    let mut result = constant(1.0, a.len() - 1);
    let mut base = a.to_vec();
    let mut e = k.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            result = mul(&result, &base);
        }
        e >>= 1;
        if e > 0 {
            base = mul(&base, &base);
        }
    }
    if k < 0 {
        div(&constant(1.0, a.len() - 1), &result)
    } else {
        Some(result)
    }
}

pub fn exp(a: &[f64]) -> Series {
    let n = a.len();
    let mut e = vec![0.0; n];
    e[0] = a[0].exp();
    for k in 1..n {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += j as f64 * a[j] * e[k - j];
        }
        e[k] = acc / k as f64;
    }
    e
}

pub fn sin_cos(a: &[f64]) -> (Series, Series) {
    let n = a.len();
    let mut s = vec![0.0; n];
    let mut c = vec![0.0; n];
    s[0] = a[0].sin();
    c[0] = a[0].cos();
    for k in 1..n {
        let mut acc_s = 0.0;
        let mut acc_c = 0.0;
        for j in 1..=k {
            let w = j as f64 * a[j];
            acc_s += w * c[k - j];
            acc_c -= w * s[k - j];
        }
        s[k] = acc_s / k as f64;
        c[k] = acc_c / k as f64;
    }
    (s, c)
}

/// `exp(1/(u^2 - 1))` composed with the inner series `u`; flat zero near and beyond `|u| = 1`.
pub fn bump(u: &[f64]) -> Series {
    if !(u[0].abs() < BUMP_EDGE) {
        return vec![0.0; u.len()];
    }
    let order = u.len() - 1;
    let denom = sub(&mul(u, u), &constant(1.0, order));
    let inner = div(&constant(1.0, order), &denom).expect("|u| < 1 keeps u^2 - 1 nonzero");
    exp(&inner)
}

/// Taylor coefficients of `g(d(s))` given those of `g` around `d(0)` and of `d`.
pub fn compose(outer: &[f64], inner: &[f64]) -> Series {
    let n = inner.len();
    let mut delta = inner.to_vec();
    delta[0] = 0.0;
    let mut acc = constant(outer[n - 1], n - 1);
    for k in (0..n - 1).rev() {
        acc = mul(&acc, &delta);
        acc[0] += outer[k];
    }
    acc
}

/// `theta(t) = 2 * atan2(1, t)`, the angle in `(0, 2*pi)` with `cot(theta / 2) = t`.
pub fn cayley_angle(t: f64, order: usize) -> Series {
    let mut out = vec![0.0; order + 1];
    out[0] = 2.0 * 1.0f64.atan2(t);
    if order == 0 {
        return out;
    }
    // theta' = -2 / (1 + t^2)
    let s = variable(t, order - 1);
    let one_plus = add(&constant(1.0, order - 1), &mul(&s, &s));
    let dtheta = div(&constant(-2.0, order - 1), &one_plus).expect("1 + t^2 > 0");
    for k in 1..=order {
        out[k] = dtheta[k - 1] / k as f64;
    }
    out
}

/// Normalized coefficients to derivative values.
pub fn to_derivatives(c: &[f64]) -> Vec<f64> {
    let mut fact = 1.0;
    c.iter()
        .enumerate()
        .map(|(k, v)| {
            if k > 0 {
                fact *= k as f64;
            }
            v * fact
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn geometric_series_by_division() {
        // 1/(1-s) = 1 + s + s^2 + ...
        let one = constant(1.0, 5);
        let q = div(&one, &sub(&one, &variable(0.0, 5))).unwrap();
        for c in q {
            assert_relative_eq!(c, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn compose_matches_direct_exp_of_sin() {
        let x0 = 0.4;
        let inner = sin_cos(&variable(x0, 6)).0;
        let outer = exp(&variable(inner[0], 6));
        let composed = compose(&outer, &inner);
        let direct = exp(&inner);
        for (a, b) in composed.iter().zip(&direct) {
            assert_relative_eq!(a, b, max_relative = 1e-13, epsilon = 1e-15);
        }
    }

    #[test]
    fn cayley_angle_inverts_cot_half() {
        for &t in &[-3.0, -0.2, 0.0, 1.0, 7.5] {
            let th = cayley_angle(t, 0)[0];
            assert!(th > 0.0 && th < 2.0 * std::f64::consts::PI);
            assert_relative_eq!(1.0 / (th / 2.0).tan(), t, epsilon = 1e-12);
        }
    }

    #[test]
    fn negative_power_of_zero_fails() {
        assert!(powi(&variable(0.0, 2), -1).is_none());
        assert_eq!(powi(&variable(0.0, 2), 0).unwrap(), vec![1.0, 0.0, 0.0]);
    }
}
