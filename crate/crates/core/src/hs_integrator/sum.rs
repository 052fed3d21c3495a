use num_complex::Complex64;

use crate::matrix_core::ComplexMatrix;

/// Neumaier step: adds `x` to `s`, collecting the rounding error in `c`.
fn neumaier(s: &mut f64, c: &mut f64, x: f64) {
    let t = *s + x;
    if s.abs() >= x.abs() {
        *c += (*s - t) + x;
    } else {
        *c += (x - t) + *s;
    }
    *s = t;
}

fn neumaier_c(s: &mut Complex64, c: &mut Complex64, x: Complex64) {
    neumaier(&mut s.re, &mut c.re, x.re);
    neumaier(&mut s.im, &mut c.im, x.im);
}

/// Entrywise compensated sum of matrix contributions plus a scalar bound sum.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    sum: Vec<Complex64>,
    comp: Vec<Complex64>,
    bound: f64,
    bound_comp: f64,
    active: usize,
}

impl Accumulator {
    pub fn new(n: usize) -> Self {
        Accumulator {
            sum: vec![Complex64::new(0.0, 0.0); n * n],
            comp: vec![Complex64::new(0.0, 0.0); n * n],
            bound: 0.0,
            bound_comp: 0.0,
            active: 0,
        }
    }

    /// `self += c * m`.
    pub fn add(&mut self, c: Complex64, m: &ComplexMatrix) {
        for ((s, k), v) in self.sum.iter_mut().zip(&mut self.comp).zip(m.entries()) {
            neumaier_c(s, k, c * v);
        }
        self.active += 1;
    }

    pub fn add_bound(&mut self, x: f64) {
        neumaier(&mut self.bound, &mut self.bound_comp, x);
    }

    fn merge(mut self, other: &Accumulator) -> Self {
        for (i, (s, c)) in other.sum.iter().zip(&other.comp).enumerate() {
            neumaier_c(&mut self.sum[i], &mut self.comp[i], *s);
            self.comp[i] += c;
        }
        neumaier(&mut self.bound, &mut self.bound_comp, other.bound);
        self.bound_comp += other.bound_comp;
        self.active += other.active;
        self
    }

    /// Pairwise merge in index order, independent of how the parts were produced.
    pub fn tree_reduce(mut parts: Vec<Accumulator>, n: usize) -> Accumulator {
        if parts.is_empty() {
            return Accumulator::new(n);
        }
        while parts.len() > 1 {
            let mut next = Vec::with_capacity(parts.len().div_ceil(2));
            let mut it = parts.into_iter();
            while let Some(a) = it.next() {
                next.push(match it.next() {
                    Some(b) => a.merge(&b),
                    None => a,
                });
            }
            parts = next;
        }
        parts.pop().expect("nonempty")
    }

    /// `(values, max compensation, bound, active cells)`.
    pub fn finish(self) -> (Vec<Complex64>, f64, f64, usize) {
        let comp = self.comp.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let values = self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect();
        (values, comp, self.bound + self.bound_comp, self.active)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_lost_bits() {
        let one = ComplexMatrix::identity(1);
        let mut acc = Accumulator::new(1);
        acc.add(Complex64::new(1.0, 0.0), &one);
        for _ in 0..10 {
            acc.add(Complex64::new(1e-17, 0.0), &one);
        }
        acc.add(Complex64::new(-1.0, 0.0), &one);
        let (v, comp, _, active) = acc.finish();
        assert!((v[0].re - 1e-16).abs() < 1e-30);
        assert!(comp > 0.0);
        assert_eq!(active, 12);
    }

    #[test]
    fn tree_reduce_is_order_fixed() {
        let one = ComplexMatrix::identity(1);
        let parts: Vec<Accumulator> = (0..7)
            .map(|k| {
                let mut a = Accumulator::new(1);
                a.add(Complex64::new(0.1 * k as f64, 1.0), &one);
                a.add_bound(k as f64);
                a
            })
            .collect();
        let a = Accumulator::tree_reduce(parts.clone(), 1).finish();
        let b = Accumulator::tree_reduce(parts, 1).finish();
        assert_eq!(a, b);
        assert!((a.0[0] - Complex64::new(2.1, 7.0)).norm() < 1e-15);
        assert_eq!(a.2, 21.0);
        assert_eq!(Accumulator::tree_reduce(vec![], 2).finish().3, 0);
    }
}
