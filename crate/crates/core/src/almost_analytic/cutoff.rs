/// Smooth even cutoff: 1 on `[-1/2, 1/2]`, 0 outside `(-1, 1)`.
///
/// The transition on `1/2 < |t| < 1` is the mollifier ramp
/// `r(s) = B(s) / (B(s) + B(1 - s))`, `B(s) = exp(-1/s)`, with `s = 2|t| - 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CutoffChi;

fn b(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn b_prime(s: f64) -> f64 {
    if s > 0.0 {
        b(s) / (s * s)
    } else {
        0.0
    }
}

impl CutoffChi {
    pub fn value(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= 0.5 {
            return 1.0;
        }
        if a >= 1.0 {
            return 0.0;
        }
        let s = 2.0 * a - 1.0;
        let lo = b(s);
        let hi = b(1.0 - s);
        hi / (lo + hi)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= 0.5 || a >= 1.0 {
            return 0.0;
        }
        let s = 2.0 * a - 1.0;
        let lo = b(s);
        let hi = b(1.0 - s);
        let den = lo + hi;
        let ramp_prime = (b_prime(s) * hi + lo * b_prime(1.0 - s)) / (den * den);
        -2.0 * ramp_prime * t.signum()
    }
}

pub fn build_cutoff() -> CutoffChi {
    CutoffChi
}
