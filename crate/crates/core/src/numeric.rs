//! Small numeric utilities shared across the crate: compensated summation
//! and values carrying explicit error bounds.

use serde::Serialize;

/// Kahan–Babuška compensated accumulator. Keeps the summation error at a few
/// ulps of the running sum instead of growing linearly with the term count.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    compensation: f64,
    /// Running sum of |term|, used for error bounds on the final value.
    abs_sum: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        self.abs_sum += x.abs();
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Bound on the floating-point error of `value()` relative to the exact
    /// sum of the terms as given (not counting errors in the terms themselves).
    pub fn error_bound(&self) -> f64 {
        // Compensated summation error is O(eps) * sum of |terms| with a small
        // constant; 4 eps is a comfortable envelope for the term counts used
        // in this crate.
        4.0 * f64::EPSILON * self.abs_sum
    }

    pub fn abs_sum(&self) -> f64 {
        self.abs_sum
    }

    /// True when no rounding has occurred so far: the running compensation is
    /// exactly zero, so `value()` is the exact sum of the terms.
    pub fn is_exact(&self) -> bool {
        self.compensation == 0.0
    }
}

/// A real value together with a certified absolute error bound: the true
/// quantity lies in `[value - err, value + err]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certified {
    pub value: f64,
    pub err: f64,
}

impl Certified {
    pub fn exact(value: f64) -> Self {
        Self { value, err: 0.0 }
    }

    pub fn new(value: f64, err: f64) -> Self {
        Self { value, err }
    }

    /// Largest value consistent with the bound (used when summing upper bounds).
    pub fn upper(&self) -> f64 {
        self.value + self.err
    }

    pub fn lower(&self) -> f64 {
        self.value - self.err
    }

    /// Certified product: the interval product of the two enclosures, padded
    /// by a couple of ulps for the multiplications performed here.
    pub fn mul(&self, other: &Certified) -> Certified {
        let value = self.value * other.value;
        let mut err =
            self.value.abs() * other.err + other.value.abs() * self.err + self.err * other.err;
        if !(self.err == 0.0 && other.err == 0.0 && product_is_exact(self.value, other.value))
        {
            err += 4.0 * f64::EPSILON * value.abs().max(err);
        }
        Certified::new(value, err)
    }

    /// Certified quotient. The divisor's enclosure must stay away from zero.
    pub fn div(&self, other: &Certified) -> Option<Certified> {
        let denom_low = other.value.abs() - other.err;
        if !(denom_low > 0.0) {
            return None;
        }
        let value = self.value / other.value;
        let mut err = (self.err + value.abs() * other.err) / denom_low;
        err += 4.0 * f64::EPSILON * value.abs().max(err);
        Some(Certified::new(value, err))
    }

    /// Multiply by an exact scalar.
    pub fn scale(&self, s: f64) -> Certified {
        let value = self.value * s;
        let mut err = self.err * s.abs();
        if !product_is_exact(self.value, s) {
            err += 2.0 * f64::EPSILON * value.abs();
        }
        Certified::new(value, err)
    }

    /// Sum with another certified value (errors add; padded when inexact).
    pub fn add(&self, other: &Certified) -> Certified {
        let value = self.value + other.value;
        let mut err = self.err + other.err;
        if !sum_is_exact(self.value, other.value) {
            err += 2.0 * f64::EPSILON * value.abs();
        }
        Certified::new(value, err)
    }
}

/// True when `a + b` rounds to the exact sum (two-sum residual is zero).
pub(crate) fn sum_is_exact(a: f64, b: f64) -> bool {
    let s = a + b;
    if !s.is_finite() {
        return false;
    }
    let bv = s - a;
    let av = s - bv;
    (a - av) + (b - bv) == 0.0
}

/// True when `a - b` is computed without rounding.
pub(crate) fn difference_is_exact(a: f64, b: f64) -> bool {
    sum_is_exact(a, -b)
}

/// Sum of certified values: values and error bounds are accumulated with
/// compensation, and summation rounding is only charged when it occurred.
pub(crate) fn certified_sum<I: IntoIterator<Item = Certified>>(items: I) -> Certified {
    let mut values = Kahan::new();
    let mut errs = Kahan::new();
    for c in items {
        values.add(c.value);
        errs.add(c.err);
    }
    let mut err = errs.value();
    if !values.is_exact() {
        err += values.error_bound();
    }
    if !errs.is_exact() {
        err += errs.error_bound();
    }
    Certified::new(values.value(), err)
}

/// True when `a * b` is computed without rounding (either factor a power of
/// two, a zero, or an exact 1), so the product needs no error padding.
pub(crate) fn product_is_exact(a: f64, b: f64) -> bool {
    fn pow2_or_trivial(x: f64) -> bool {
        if x == 0.0 || x == 1.0 || x == -1.0 {
            return true;
        }
        if !x.is_finite() {
            return false;
        }
        // Power of two: mantissa bits all zero (works for normals).
        let bits = x.abs().to_bits();
        let mantissa = bits & ((1u64 << 52) - 1);
        let exponent = bits >> 52;
        mantissa == 0 && exponent != 0
    }
    pow2_or_trivial(a) || pow2_or_trivial(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_matches_exact_dyadic_sum() {
        let mut k = Kahan::new();
        for i in 1..=52u32 {
            k.add(2f64.powi(-(i as i32)));
        }
        assert_eq!(k.value(), 1.0 - 2f64.powi(-52));
        assert!(k.error_bound() < 1e-15);
    }

    #[test]
    fn kahan_beats_naive_on_ill_conditioned_sum() {
        // 1 + 1e-16 added 10_000 times: naive summation loses the small terms.
        let mut k = Kahan::new();
        k.add(1.0);
        for _ in 0..10_000 {
            k.add(1e-16);
        }
        let exact = 1.0 + 1e-12;
        assert!((k.value() - exact).abs() <= 1e-27f64.max(k.error_bound()));
    }

    #[test]
    fn certified_bounds() {
        let c = Certified::new(2.0, 0.5);
        assert_eq!(c.upper(), 2.5);
        assert_eq!(c.lower(), 1.5);
        assert_eq!(Certified::exact(1.0).err, 0.0);
    }

    #[test]
    fn certified_arithmetic_encloses_truth() {
        let a = Certified::new(3.0, 0.1);
        let b = Certified::new(2.0, 0.2);
        let p = a.mul(&b);
        // Extremes of the interval product.
        assert!(p.lower() <= 2.9 * 1.8 && p.upper() >= 3.1 * 2.2);
        let q = a.div(&b).unwrap();
        assert!(q.lower() <= 2.9 / 2.2 && q.upper() >= 3.1 / 1.8);
        assert!(Certified::exact(1.0).div(&Certified::new(0.1, 0.2)).is_none());
        // Exact dyadic product stays exact.
        let e = Certified::exact(0.75).mul(&Certified::exact(0.5));
        assert_eq!(e, Certified::exact(0.375));
        let s = Certified::exact(3.0).scale(0.25);
        assert_eq!(s, Certified::exact(0.75));
    }
}
