//! Lazily-represented real sequences: a finite explicit prefix followed by a
//! closed family of tail descriptors, together with certified evaluation of
//! infinite products over the sequence terms and the summable product metric
//! `rho(x, y) = sum_i 2^-i |x_i - y_i| / (1 + |x_i - y_i|)`.
//!
//! The tail family is deliberately small and closed under the pointwise affine
//! combinations the rest of the crate needs (sums, differences, midpoints),
//! so that geometric operations on boxes never silently lose the analytic
//! information that drives product classification.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::numeric::{Certified, Kahan};

/// Hard cap on evaluation windows for certified infinite products.
pub const WINDOW_CAP: u64 = 1 << 20;

/// Cap on cycle lengths produced when combining two periodic tails.
const CYCLE_CAP: usize = 4096;

/// Evaluator for an opaque tail: maps a 1-based global index to the term.
pub type OpaqueEval = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// Certified bound `B(N) >= sum_{i > N} |log term_i|` for an opaque tail.
/// Supplying one asserts in particular that all terms beyond any `N` are
/// strictly positive.
pub type OpaqueLogTailBound = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// Description of all sequence terms beyond the explicit prefix.
///
/// Index conventions: `Constant`, `PowerDrift`, `GeometricDrift` and `Opaque`
/// are formulas in the global 1-based index `i`; `Periodic` starts its cycle
/// at the first index after the prefix.
#[derive(Clone)]
pub enum TailDescriptor {
    /// Every tail term equals the constant.
    Constant(f64),
    /// `term_i = base + a * i^(-p)` with `p > 1`. `base = 1` recovers the
    /// plain drift-to-one form `1 + a * i^(-p)`.
    PowerDrift { base: f64, a: f64, p: f64 },
    /// `term_i = base + a * q^i` with `|q| < 1`. `base = 1` recovers the
    /// plain drift-to-one form `1 + a * q^i`.
    GeometricDrift { base: f64, a: f64, q: f64 },
    /// Terms cycle through the given non-empty list, starting at the first
    /// tail index.
    Periodic(Vec<f64>),
    /// Arbitrary evaluator with an optional certified log-tail bound. Without
    /// the bound, infinite products over the tail are classified `Undefined`.
    Opaque {
        eval: OpaqueEval,
        log_tail_bound: Option<OpaqueLogTailBound>,
    },
}

impl TailDescriptor {
    pub fn power_drift(a: f64, p: f64) -> Self {
        TailDescriptor::PowerDrift { base: 1.0, a, p }
    }

    pub fn geometric_drift(a: f64, q: f64) -> Self {
        TailDescriptor::GeometricDrift { base: 1.0, a, q }
    }

    pub fn opaque(eval: OpaqueEval) -> Self {
        TailDescriptor::Opaque {
            eval,
            log_tail_bound: None,
        }
    }

    pub fn opaque_with_bound(eval: OpaqueEval, bound: OpaqueLogTailBound) -> Self {
        TailDescriptor::Opaque {
            eval,
            log_tail_bound: Some(bound),
        }
    }

    fn validate(&self) -> Result<(), SequenceError> {
        let bad = |reason: String| Err(SequenceError::InvalidDescriptor { reason });
        match self {
            TailDescriptor::Constant(c) => {
                if !c.is_finite() {
                    return bad(format!("constant tail value {c} is not finite"));
                }
            }
            TailDescriptor::PowerDrift { base, a, p } => {
                if !(base.is_finite() && a.is_finite()) {
                    return bad("power drift parameters must be finite".into());
                }
                if !(p.is_finite() && *p > 1.0) {
                    return bad(format!("power drift requires p > 1, got p = {p}"));
                }
            }
            TailDescriptor::GeometricDrift { base, a, q } => {
                if !(base.is_finite() && a.is_finite()) {
                    return bad("geometric drift parameters must be finite".into());
                }
                if !(q.is_finite() && q.abs() < 1.0) {
                    return bad(format!("geometric drift requires |q| < 1, got q = {q}"));
                }
            }
            TailDescriptor::Periodic(cycle) => {
                if cycle.is_empty() {
                    return bad("periodic tail requires a non-empty cycle".into());
                }
                if let Some(v) = cycle.iter().find(|v| !v.is_finite()) {
                    return bad(format!("periodic cycle entry {v} is not finite"));
                }
            }
            TailDescriptor::Opaque { .. } => {}
        }
        Ok(())
    }

    /// Limit of the tail terms, when the descriptor determines one.
    pub fn limit(&self) -> Option<f64> {
        match self {
            TailDescriptor::Constant(c) => Some(*c),
            TailDescriptor::PowerDrift { base, .. }
            | TailDescriptor::GeometricDrift { base, .. } => Some(*base),
            TailDescriptor::Periodic(cycle) => {
                let first = cycle[0];
                cycle.iter().all(|&v| v == first).then_some(first)
            }
            TailDescriptor::Opaque { .. } => None,
        }
    }

    /// Rewrites degenerate drifts (`a == 0`) and constant cycles as
    /// `Constant`, so that combination rules see canonical forms.
    fn normalized(self) -> Self {
        match self {
            TailDescriptor::PowerDrift { base, a: 0.0, .. } => TailDescriptor::Constant(base),
            TailDescriptor::GeometricDrift { base, a, q } if a == 0.0 || q == 0.0 => {
                TailDescriptor::Constant(base)
            }
            TailDescriptor::Periodic(cycle) if cycle.iter().all(|&v| v == cycle[0]) => {
                TailDescriptor::Constant(cycle[0])
            }
            other => other,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            TailDescriptor::Constant(_) => "Constant",
            TailDescriptor::PowerDrift { .. } => "PowerDrift",
            TailDescriptor::GeometricDrift { .. } => "GeometricDrift",
            TailDescriptor::Periodic(_) => "Periodic",
            TailDescriptor::Opaque { .. } => "Opaque",
        }
    }
}

impl fmt::Debug for TailDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailDescriptor::Constant(c) => write!(f, "Constant({c})"),
            TailDescriptor::PowerDrift { base, a, p } => {
                write!(f, "PowerDrift(base={base}, a={a}, p={p})")
            }
            TailDescriptor::GeometricDrift { base, a, q } => {
                write!(f, "GeometricDrift(base={base}, a={a}, q={q})")
            }
            TailDescriptor::Periodic(cycle) => write!(f, "Periodic({cycle:?})"),
            TailDescriptor::Opaque { log_tail_bound, .. } => write!(
                f,
                "Opaque(bound: {})",
                if log_tail_bound.is_some() { "yes" } else { "no" }
            ),
        }
    }
}

impl PartialEq for TailDescriptor {
    fn eq(&self, other: &Self) -> bool {
        use TailDescriptor::*;
        match (self, other) {
            (Constant(a), Constant(b)) => a == b,
            (
                PowerDrift { base, a, p },
                PowerDrift {
                    base: b2,
                    a: a2,
                    p: p2,
                },
            ) => base == b2 && a == a2 && p == p2,
            (
                GeometricDrift { base, a, q },
                GeometricDrift {
                    base: b2,
                    a: a2,
                    q: q2,
                },
            ) => base == b2 && a == a2 && q == q2,
            (Periodic(u), Periodic(v)) => u == v,
            (Opaque { eval: e1, .. }, Opaque { eval: e2, .. }) => Arc::ptr_eq(e1, e2),
            _ => false,
        }
    }
}

/// True when `x` is a (positive) power of two, i.e. multiplication by `x` is
/// exact in binary floating point barring overflow/underflow.
fn is_power_of_two(x: f64) -> bool {
    x > 0.0 && x.is_finite() && x.to_bits() & ((1u64 << 52) - 1) == 0 && x >= f64::MIN_POSITIVE
}

/// `|q|^i` with the sign of `q^i`, robust for arbitrarily large `i`.
fn signed_pow(q: f64, i: u64) -> f64 {
    let magnitude = if i <= i32::MAX as u64 {
        q.abs().powi(i as i32)
    } else {
        (i as f64 * q.abs().ln()).exp()
    };
    if q < 0.0 && i % 2 == 1 {
        -magnitude
    } else {
        magnitude
    }
}

/// A sequence of reals indexed from 1: an explicit finite prefix followed by
/// the terms described by the tail descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct TailedSequence {
    prefix: Vec<f64>,
    tail: TailDescriptor,
}

impl TailedSequence {
    pub fn new(prefix: Vec<f64>, tail: TailDescriptor) -> Result<Self, SequenceError> {
        tail.validate()?;
        if let Some(v) = prefix.iter().find(|v| !v.is_finite()) {
            return Err(SequenceError::InvalidPrefix {
                reason: format!("prefix entry {v} is not finite"),
            });
        }
        Ok(Self {
            prefix,
            tail: tail.normalized(),
        })
    }

    /// The all-`c` sequence.
    pub fn constant(c: f64) -> Self {
        Self::new(Vec::new(), TailDescriptor::Constant(c)).expect("constant sequence is valid")
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn tail(&self) -> &TailDescriptor {
        &self.tail
    }

    pub fn prefix_len(&self) -> u64 {
        self.prefix.len() as u64
    }

    /// Term at 1-based index `i`.
    ///
    /// # Panics
    /// Panics if `i == 0`; the sequence is indexed from 1.
    pub fn term(&self, i: u64) -> f64 {
        assert!(i >= 1, "sequence indices start at 1");
        let len = self.prefix_len();
        if i <= len {
            return self.prefix[(i - 1) as usize];
        }
        match &self.tail {
            TailDescriptor::Constant(c) => *c,
            TailDescriptor::PowerDrift { base, a, p } => base + a * (i as f64).powf(-p),
            TailDescriptor::GeometricDrift { base, a, q } => base + a * signed_pow(*q, i),
            TailDescriptor::Periodic(cycle) => {
                cycle[((i - len - 1) % cycle.len() as u64) as usize]
            }
            TailDescriptor::Opaque { eval, .. } => eval(i),
        }
    }

    /// Limit of the terms, when the descriptor determines one.
    pub fn limit(&self) -> Option<f64> {
        self.tail.limit()
    }

    /// Same sequence with the explicit prefix extended to at least `n`
    /// entries. Periodic tails are rotated so every term keeps its value.
    pub fn with_prefix_len(&self, n: u64) -> Self {
        let len = self.prefix_len();
        if n <= len {
            return self.clone();
        }
        assert!(
            n <= WINDOW_CAP,
            "refusing to materialize more than {WINDOW_CAP} prefix terms"
        );
        let mut prefix = self.prefix.clone();
        for i in len + 1..=n {
            prefix.push(self.term(i));
        }
        let tail = match &self.tail {
            TailDescriptor::Periodic(cycle) => {
                let shift = ((n - len) % cycle.len() as u64) as usize;
                let mut rotated = cycle[shift..].to_vec();
                rotated.extend_from_slice(&cycle[..shift]);
                TailDescriptor::Periodic(rotated)
            }
            other => other.clone(),
        };
        Self { prefix, tail }
    }

    /// Pointwise `cx * x + cy * y + offset`, staying inside the descriptor
    /// family. Fails with `RepresentationOverflow` when the two tails cannot
    /// be combined analytically (for example power drift against geometric
    /// drift); combinations involving an opaque tail produce an opaque tail
    /// without a certified bound.
    pub fn affine_combine(
        x: &Self,
        cx: f64,
        y: &Self,
        cy: f64,
        offset: f64,
    ) -> Result<Self, SequenceError> {
        let len = x.prefix_len().max(y.prefix_len());
        let x = x.with_prefix_len(len);
        let y = y.with_prefix_len(len);
        let prefix: Vec<f64> = x
            .prefix
            .iter()
            .zip(&y.prefix)
            .map(|(&a, &b)| cx * a + cy * b + offset)
            .collect();
        let tail = combine_tails(&x.tail, cx, &y.tail, cy, offset, len)?;
        Self::new(prefix, tail)
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Self) -> Result<Self, SequenceError> {
        Self::affine_combine(self, 1.0, other, 1.0, 0.0)
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, SequenceError> {
        Self::affine_combine(self, 1.0, other, -1.0, 0.0)
    }

    /// Pointwise midpoint `(self + other) / 2`.
    pub fn midpoint(&self, other: &Self) -> Result<Self, SequenceError> {
        Self::affine_combine(self, 0.5, other, 0.5, 0.0)
    }

    /// Pointwise maximum, staying inside the descriptor family. For two
    /// analytic tails the difference has an eventually constant sign; the
    /// finitely many indices before the sign stabilizes are materialized into
    /// the prefix.
    pub fn max(&self, other: &Self) -> Result<Self, SequenceError> {
        extremum(self, other, true)
    }

    /// Pointwise minimum; see [`TailedSequence::max`].
    pub fn min(&self, other: &Self) -> Result<Self, SequenceError> {
        extremum(self, other, false)
    }

    /// Certified `(inf, sup)` over all terms with index `> from`, or `None`
    /// for opaque tails. The bounds are decision-tight: the infimum is either
    /// attained at some index or is the tail limit, so `inf >= 0` holds if
    /// and only if no term beyond `from` is negative.
    pub fn range_beyond(&self, from: u64) -> Option<(f64, f64)> {
        let len = self.prefix_len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in from + 1..=len.max(from) {
            if i > len {
                break;
            }
            lo = lo.min(self.term(i));
            hi = hi.max(self.term(i));
        }
        let start = len.max(from);
        match &self.tail {
            TailDescriptor::Constant(c) => {
                lo = lo.min(*c);
                hi = hi.max(*c);
            }
            TailDescriptor::Periodic(cycle) => {
                for &v in cycle {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            TailDescriptor::PowerDrift { base, .. } | TailDescriptor::GeometricDrift { base, .. } => {
                // Monotone or alternating decay toward `base`: extremes occur
                // at the first two tail indices or at the limit.
                lo = lo.min(self.term(start + 1)).min(self.term(start + 2)).min(*base);
                hi = hi.max(self.term(start + 1)).max(self.term(start + 2)).max(*base);
            }
            TailDescriptor::Opaque { .. } => return None,
        }
        Some((lo, hi))
    }

    /// Indices (beyond none, i.e. the whole sequence) where the term is
    /// strictly negative. Lists at most `max_list` explicit indices.
    pub fn negative_indices(&self, max_list: usize) -> Violations {
        let len = self.prefix_len();
        let mut found: Vec<u64> = (1..=len).filter(|&i| self.term(i) < 0.0).collect();
        let overflowed_prefix = found.len() > max_list;
        found.truncate(max_list);
        match &self.tail {
            TailDescriptor::Constant(c) => {
                if *c < 0.0 {
                    return Violations::Infinite { from_hint: len + 1 };
                }
            }
            TailDescriptor::Periodic(cycle) => {
                if cycle.iter().any(|&v| v < 0.0) {
                    let pos = cycle.iter().position(|&v| v < 0.0).unwrap() as u64;
                    return Violations::Infinite { from_hint: len + 1 + pos };
                }
            }
            TailDescriptor::PowerDrift { base, a, p } => {
                match scan_drift_negatives(
                    *base,
                    a.abs(),
                    &DriftDecay::Power(*p),
                    |i| self.term(i),
                    len,
                    *a < 0.0 || (*base == 0.0),
                ) {
                    DriftNegatives::Infinite { from_hint } => {
                        return Violations::Infinite { from_hint }
                    }
                    DriftNegatives::Some(mut v) => found.append(&mut v),
                    DriftNegatives::NoneBeyond => {}
                    DriftNegatives::Unknown => return Violations::Unknown,
                }
            }
            TailDescriptor::GeometricDrift { base, a, q } => {
                let alternating = *q < 0.0 && *a != 0.0;
                match scan_drift_negatives(
                    *base,
                    a.abs(),
                    &DriftDecay::Geometric(q.abs()),
                    |i| self.term(i),
                    len,
                    *a < 0.0 || alternating || (*base == 0.0),
                ) {
                    DriftNegatives::Infinite { from_hint } => {
                        return Violations::Infinite { from_hint }
                    }
                    DriftNegatives::Some(mut v) => found.append(&mut v),
                    DriftNegatives::NoneBeyond => {}
                    DriftNegatives::Unknown => return Violations::Unknown,
                }
            }
            TailDescriptor::Opaque { .. } => return Violations::Unknown,
        }
        if overflowed_prefix || found.len() > max_list {
            found.truncate(max_list);
        }
        if found.is_empty() {
            Violations::None
        } else {
            found.sort_unstable();
            found.dedup();
            Violations::Finite(found)
        }
    }
}

/// Outcome of a strict-negativity analysis over a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Violations {
    /// No term is negative.
    None,
    /// Exactly the listed indices are negative (possibly truncated to the
    /// caller's cap, but always non-empty and finite).
    Finite(Vec<u64>),
    /// Infinitely many terms are negative; `from_hint` is one of them.
    Infinite { from_hint: u64 },
    /// Cannot decide (opaque tail or analysis overflow).
    Unknown,
}

enum DriftNegatives {
    NoneBeyond,
    Some(Vec<u64>),
    Infinite { from_hint: u64 },
    Unknown,
}

/// Negativity analysis for a drift tail `base + a * g(i)` evaluated through
/// `term` for global indices `> len`. `can_dip` states whether the drift can
/// push terms below the base.
fn scan_drift_negatives(
    base: f64,
    amp: f64,
    decay: &DriftDecay,
    term: impl Fn(u64) -> f64,
    len: u64,
    can_dip: bool,
) -> DriftNegatives {
    if base < 0.0 {
        // Terms tend to a negative limit: infinitely many negatives. Find one
        // concrete index for the hint.
        let mut i = len + 1;
        while term(i) >= 0.0 && i < len + WINDOW_CAP {
            i += 1;
        }
        return DriftNegatives::Infinite { from_hint: i };
    }
    if !can_dip {
        return DriftNegatives::NoneBeyond;
    }
    if base == 0.0 {
        // Terms share the sign of the drift; a strictly negative drift at any
        // parity makes infinitely many negatives.
        for i in len + 1..=len + 2 {
            if term(i) < 0.0 {
                return DriftNegatives::Infinite { from_hint: i };
            }
        }
        return DriftNegatives::NoneBeyond;
    }
    // base > 0: negatives are confined to indices with amp * g(i) >= base.
    let stable = drift_below_index(amp, decay, base);
    if stable == u64::MAX {
        return DriftNegatives::Unknown;
    }
    let mut v = Vec::new();
    for i in len + 1..=stable.max(len + 1) {
        if term(i) < 0.0 {
            v.push(i);
        }
    }
    if v.is_empty() {
        DriftNegatives::NoneBeyond
    } else {
        DriftNegatives::Some(v)
    }
}

fn combine_tails(
    tx: &TailDescriptor,
    cx: f64,
    ty: &TailDescriptor,
    cy: f64,
    offset: f64,
    prefix_len: u64,
) -> Result<TailDescriptor, SequenceError> {
    use TailDescriptor::*;
    let overflow = |tx: &TailDescriptor, ty: &TailDescriptor| {
        Err(SequenceError::RepresentationOverflow {
            reason: format!(
                "cannot combine {} tail with {} tail analytically",
                tx.kind_name(),
                ty.kind_name()
            ),
        })
    };
    Ok(match (tx, ty) {
        (Constant(a), Constant(b)) => Constant(cx * a + cy * b + offset),
        (PowerDrift { base, a, p }, Constant(c)) => PowerDrift {
            base: cx * base + cy * c + offset,
            a: cx * a,
            p: *p,
        },
        (Constant(c), PowerDrift { base, a, p }) => PowerDrift {
            base: cx * c + cy * base + offset,
            a: cy * a,
            p: *p,
        },
        (GeometricDrift { base, a, q }, Constant(c)) => GeometricDrift {
            base: cx * base + cy * c + offset,
            a: cx * a,
            q: *q,
        },
        (Constant(c), GeometricDrift { base, a, q }) => GeometricDrift {
            base: cx * c + cy * base + offset,
            a: cy * a,
            q: *q,
        },
        (
            PowerDrift { base, a, p },
            PowerDrift {
                base: b2,
                a: a2,
                p: p2,
            },
        ) => {
            if p == p2 {
                PowerDrift {
                    base: cx * base + cy * b2 + offset,
                    a: cx * a + cy * a2,
                    p: *p,
                }
            } else {
                return overflow(tx, ty);
            }
        }
        (
            GeometricDrift { base, a, q },
            GeometricDrift {
                base: b2,
                a: a2,
                q: q2,
            },
        ) => {
            if q == q2 {
                GeometricDrift {
                    base: cx * base + cy * b2 + offset,
                    a: cx * a + cy * a2,
                    q: *q,
                }
            } else {
                return overflow(tx, ty);
            }
        }
        (Periodic(u), Periodic(v)) => {
            let n = lcm(u.len(), v.len());
            if n > CYCLE_CAP {
                return Err(SequenceError::RepresentationOverflow {
                    reason: format!(
                        "combined cycle length {n} exceeds the cap of {CYCLE_CAP}"
                    ),
                });
            }
            Periodic(
                (0..n)
                    .map(|i| cx * u[i % u.len()] + cy * v[i % v.len()] + offset)
                    .collect(),
            )
        }
        (Periodic(u), Constant(c)) => Periodic(u.iter().map(|&v| cx * v + cy * c + offset).collect()),
        (Constant(c), Periodic(v)) => Periodic(v.iter().map(|&u| cx * c + cy * u + offset).collect()),
        (Opaque { .. }, _) | (_, Opaque { .. }) => {
            // Evaluate both sides at the global index; the non-opaque side is
            // reconstructed from its descriptor anchored at `prefix_len`.
            let left = descriptor_eval_closure(tx, prefix_len);
            let right = descriptor_eval_closure(ty, prefix_len);
            Opaque {
                eval: Arc::new(move |i| cx * left(i) + cy * right(i) + offset),
                log_tail_bound: None,
            }
        }
        _ => return overflow(tx, ty),
    }
    .normalized())
}

/// Evaluator for a descriptor anchored just beyond `prefix_len`, as a
/// standalone closure over the global index.
fn descriptor_eval_closure(
    tail: &TailDescriptor,
    prefix_len: u64,
) -> Box<dyn Fn(u64) -> f64 + Send + Sync> {
    match tail.clone() {
        TailDescriptor::Constant(c) => Box::new(move |_| c),
        TailDescriptor::PowerDrift { base, a, p } => {
            Box::new(move |i| base + a * (i as f64).powf(-p))
        }
        TailDescriptor::GeometricDrift { base, a, q } => {
            Box::new(move |i| base + a * signed_pow(q, i))
        }
        TailDescriptor::Periodic(cycle) => Box::new(move |i| {
            cycle[((i - prefix_len - 1) % cycle.len() as u64) as usize]
        }),
        TailDescriptor::Opaque { eval, .. } => Box::new(move |i| eval(i)),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Pointwise max/min via sign analysis of the difference.
fn extremum(x: &TailedSequence, y: &TailedSequence, want_max: bool) -> Result<TailedSequence, SequenceError> {
    let pick = move |a: f64, b: f64| if want_max { a.max(b) } else { a.min(b) };
    let len = x.prefix_len().max(y.prefix_len());
    let x0 = x.with_prefix_len(len);
    let y0 = y.with_prefix_len(len);
    use TailDescriptor::*;
    let (x1, y1) = match (&x0.tail, &y0.tail) {
        (Opaque { .. }, _) | (_, Opaque { .. }) => {
            let left = descriptor_eval_closure(&x0.tail, len);
            let right = descriptor_eval_closure(&y0.tail, len);
            let prefix = x0
                .prefix
                .iter()
                .zip(&y0.prefix)
                .map(|(&a, &b)| pick(a, b))
                .collect();
            let tail = Opaque {
                eval: Arc::new(move |i| pick(left(i), right(i))),
                log_tail_bound: None,
            };
            return TailedSequence::new(prefix, tail);
        }
        (Periodic(_), Periodic(_) | Constant(_)) | (Constant(_), Periodic(_)) => {
            // Tile to a common cycle via the affine combiner, then pick
            // pointwise on one full cycle.
            let diff = TailedSequence::affine_combine(&x0, 1.0, &y0, -1.0, 0.0)?;
            let cycle_len = match diff.tail() {
                Periodic(c) => c.len() as u64,
                Constant(_) => 1,
                _ => unreachable!("difference of periodic/constant tails is periodic or constant"),
            };
            let xs = x0.with_prefix_len(len + cycle_len);
            let ys = y0.with_prefix_len(len + cycle_len);
            let cycle: Vec<f64> = (len + 1..=len + cycle_len)
                .map(|i| pick(xs.term(i), ys.term(i)))
                .collect();
            let prefix = xs
                .prefix
                .iter()
                .take(len as usize)
                .zip(ys.prefix.iter().take(len as usize))
                .map(|(&a, &b)| pick(a, b))
                .collect();
            return TailedSequence::new(prefix, Periodic(cycle));
        }
        _ => (x0, y0),
    };
    // Both tails are analytic (constant or drift). The difference tail is a
    // single drift/constant; beyond its stabilization index one side wins.
    let diff = TailedSequence::affine_combine(&x1, 1.0, &y1, -1.0, 0.0)?;
    let stable_from = match diff.tail() {
        Constant(_) => len + 1,
        PowerDrift { base, a, p } => {
            if *base == 0.0 {
                len + 1 // sign is the sign of `a` everywhere in the tail
            } else {
                drift_below_index(a.abs(), &DriftDecay::Power(*p), base.abs()).max(len + 1)
            }
        }
        GeometricDrift { base, a, q } => {
            if *base == 0.0 {
                if *q > 0.0 || *a == 0.0 {
                    len + 1
                } else {
                    return Err(SequenceError::RepresentationOverflow {
                        reason: "difference alternates sign (negative ratio, zero limit)".into(),
                    });
                }
            } else {
                drift_below_index(a.abs(), &DriftDecay::Geometric(q.abs()), base.abs()).max(len + 1)
            }
        }
        _ => unreachable!("difference of analytic tails is analytic"),
    };
    if stable_from > WINDOW_CAP {
        return Err(SequenceError::RepresentationOverflow {
            reason: format!(
                "sign of the difference stabilizes only after index {stable_from}, beyond the materialization cap"
            ),
        });
    }
    let xs = x1.with_prefix_len(stable_from - 1);
    let ys = y1.with_prefix_len(stable_from - 1);
    let prefix: Vec<f64> = xs
        .prefix
        .iter()
        .zip(&ys.prefix)
        .map(|(&a, &b)| pick(a, b))
        .collect();
    // Decide the winning tail by the sign of the difference at/beyond the
    // stabilization index.
    let probe = diff.term(stable_from);
    let x_wins = if want_max { probe >= 0.0 } else { probe <= 0.0 };
    let tail = if x_wins { xs.tail.clone() } else { ys.tail.clone() };
    TailedSequence::new(prefix, tail)
}

pub(crate) enum DriftDecay {
    Power(f64),
    Geometric(f64),
}

impl DriftDecay {
    fn eval(&self, i: u64) -> f64 {
        match self {
            DriftDecay::Power(p) => (i as f64).powf(-p),
            DriftDecay::Geometric(absq) => {
                if *absq == 0.0 {
                    0.0
                } else {
                    signed_pow(*absq, i)
                }
            }
        }
    }
}

/// Smallest index `T` with `amp * g(i) < threshold` for all `i >= T`, where
/// `g` is a decreasing positive decay profile. Returns `u64::MAX` when no such
/// index exists below the materialization cap.
pub(crate) fn drift_below_index(amp: f64, decay: &DriftDecay, threshold: f64) -> u64 {
    if amp == 0.0 || amp < threshold {
        return 1;
    }
    if threshold <= 0.0 {
        return u64::MAX;
    }
    // Analytic candidate, then a short scan to make the answer exact under
    // floating-point evaluation of the same expressions used elsewhere.
    let candidate = match decay {
        DriftDecay::Power(p) => (amp / threshold).powf(1.0 / p),
        DriftDecay::Geometric(absq) => {
            if *absq == 0.0 {
                return 1;
            }
            (threshold / amp).ln() / absq.ln()
        }
    };
    let mut t = if candidate.is_finite() && candidate > 0.0 {
        (candidate as u64).saturating_add(1).saturating_sub(4).max(1)
    } else {
        1
    };
    // Walk forward to the first index satisfying the bound.
    while t <= WINDOW_CAP && !(amp * decay.eval(t).abs() < threshold) {
        t += 1;
    }
    if t > WINDOW_CAP {
        return u64::MAX;
    }
    // Walk backward while the previous index also satisfies it (decay is
    // monotone, so the satisfied set is upward closed).
    while t > 1 && amp * decay.eval(t - 1).abs() < threshold {
        t -= 1;
    }
    t
}

/// Classification of an infinite product of non-negative terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum ProductValue {
    /// The partial products converge to 0 (including the case of an exactly
    /// zero term).
    Zero,
    /// The product converges to a strictly positive finite value; the true
    /// value lies in `[value - err, value + err]` with `value - err > 0`.
    Finite { value: f64, err: f64 },
    /// The partial products diverge to +infinity.
    Infinite,
    /// The partial products neither converge nor diverge monotonically, or
    /// the tail provides no certification (opaque without a bound).
    Undefined,
}

impl ProductValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, ProductValue::Finite { .. })
    }

    /// The certified value when finite.
    pub fn finite_value(&self) -> Option<Certified> {
        match self {
            ProductValue::Finite { value, err } => Some(Certified::new(*value, *err)),
            _ => None,
        }
    }
}

/// Errors from sequence construction, combination and product evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceError {
    #[error("term at index {index} is negative ({value}); products require non-negative terms")]
    NegativeTerm { index: u64, value: f64 },
    #[error("evaluation window exceeded {cap} terms before the certified tail remainder fell below tol/2")]
    WindowExceeded { cap: u64 },
    #[error("representation overflow: {reason}")]
    RepresentationOverflow { reason: String },
    #[error("invalid tail descriptor: {reason}")]
    InvalidDescriptor { reason: String },
    #[error("invalid prefix: {reason}")]
    InvalidPrefix { reason: String },
    #[error("invalid tolerance {tol}; tolerances must be finite and positive")]
    InvalidTolerance { tol: f64 },
}

/// `prod_{i >= 1} term_i` with certified classification. See
/// [`infinite_product_beyond`] for the general form.
pub fn infinite_product(seq: &TailedSequence, tol: f64) -> Result<ProductValue, SequenceError> {
    infinite_product_beyond(seq, 0, tol)
}

/// Certified evaluation of `prod_{i > from} term_i`.
///
/// Classification:
/// * any term exactly `0` (and none negative) => `Zero`;
/// * terms with limit `> 1` or periodic cycle product `> 1` => `Infinite`;
/// * limit `< 1` or cycle product `< 1` => `Zero`;
/// * drift tails with limit exactly `1` (and bounded opaque tails) =>
///   `Finite` via `exp` of a compensated log-sum over an explicit window plus
///   a certified tail remainder, with the whole error folded into `err`;
/// * periodic cycle product exactly `1` with non-unit entries, or opaque
///   tails without a bound => `Undefined`.
///
/// A negative term anywhere that is inspected produces `NegativeTerm`.
pub fn infinite_product_beyond(
    seq: &TailedSequence,
    from: u64,
    tol: f64,
) -> Result<ProductValue, SequenceError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SequenceError::InvalidTolerance { tol });
    }
    let len = seq.prefix_len();
    let mut saw_zero = false;

    // Explicit prefix terms beyond `from`. Multiplications where one factor
    // is 1 or a power of two are exact in binary floating point and do not
    // contribute to the error bound.
    let mut prefix_product = 1.0f64;
    let mut prefix_mults: u64 = 0;
    for i in from + 1..=len.max(from) {
        if i > len {
            break;
        }
        let t = seq.term(i);
        if t < 0.0 {
            return Err(SequenceError::NegativeTerm { index: i, value: t });
        }
        if t == 0.0 {
            saw_zero = true;
        }
        if !(is_power_of_two(t) || is_power_of_two(prefix_product)) {
            prefix_mults += 1;
        }
        prefix_product *= t;
    }
    let tail_start = len.max(from); // descriptor terms are those with i > tail_start

    match &seq.tail {
        TailDescriptor::Constant(c) => {
            if *c < 0.0 {
                return Err(SequenceError::NegativeTerm {
                    index: tail_start + 1,
                    value: *c,
                });
            }
            if *c == 0.0 || saw_zero {
                return Ok(ProductValue::Zero);
            }
            if *c < 1.0 {
                return Ok(ProductValue::Zero);
            }
            if *c > 1.0 {
                return Ok(ProductValue::Infinite);
            }
            // c == 1: the product is the exact prefix part.
            Ok(finite_from_parts(prefix_product, prefix_mults, 0.0, &Kahan::new()))
        }
        TailDescriptor::Periodic(cycle) => {
            if let Some(&v) = cycle.iter().find(|&&v| v < 0.0) {
                // Index of the first negative entry in the first full cycle.
                let pos = cycle.iter().position(|&u| u == v).unwrap() as u64;
                return Err(SequenceError::NegativeTerm {
                    index: len + 1 + pos,
                    value: v,
                });
            }
            let cycle_product: f64 = cycle.iter().product();
            if cycle.contains(&0.0) || saw_zero {
                return Ok(ProductValue::Zero);
            }
            if cycle_product < 1.0 {
                return Ok(ProductValue::Zero);
            }
            if cycle_product > 1.0 {
                return Ok(ProductValue::Infinite);
            }
            if cycle.iter().all(|&v| v == 1.0) {
                return Ok(finite_from_parts(prefix_product, prefix_mults, 0.0, &Kahan::new()));
            }
            // Cycle product exactly 1 with non-unit entries: the partial
            // products oscillate forever.
            Ok(ProductValue::Undefined)
        }
        TailDescriptor::PowerDrift { base, a, p } => drift_product(
            seq,
            tail_start,
            saw_zero,
            prefix_product,
            prefix_mults,
            *base,
            a.abs(),
            DriftDecay::Power(*p),
            tol,
        ),
        TailDescriptor::GeometricDrift { base, a, q } => drift_product(
            seq,
            tail_start,
            saw_zero,
            prefix_product,
            prefix_mults,
            *base,
            a.abs(),
            DriftDecay::Geometric(q.abs()),
            tol,
        ),
        TailDescriptor::Opaque {
            eval,
            log_tail_bound,
        } => {
            if saw_zero {
                return Ok(ProductValue::Zero);
            }
            let Some(bound) = log_tail_bound else {
                return Ok(ProductValue::Undefined);
            };
            // Two passes: the first targets tol/2 on the log scale; if the
            // resulting value-scale error exceeds tol, tighten the target by
            // the product magnitude and re-evaluate.
            let mut target = tol / 2.0;
            for attempt in 0.. {
                // Find a window where the certified remainder drops below the
                // target, doubling from a small start.
                let mut n = (tail_start + 1).max(16);
                let mut remainder = bound(n);
                while remainder > target {
                    if n >= WINDOW_CAP {
                        return Err(SequenceError::WindowExceeded { cap: WINDOW_CAP });
                    }
                    n = (n * 2).min(WINDOW_CAP);
                    remainder = bound(n);
                }
                let mut logs = Kahan::new();
                for i in tail_start + 1..=n {
                    let t = eval(i);
                    if t < 0.0 {
                        return Err(SequenceError::NegativeTerm { index: i, value: t });
                    }
                    if t == 0.0 {
                        return Ok(ProductValue::Zero);
                    }
                    logs.add(t.ln());
                }
                let pv = finite_from_parts(prefix_product, prefix_mults, remainder, &logs);
                match pv {
                    ProductValue::Finite { value, err } if err > tol && attempt == 0 => {
                        target = (tol / 2.0) / value.max(1.0);
                    }
                    _ => return Ok(pv),
                }
            }
            unreachable!()
        }
    }
}

/// Finite-product assembly: exact prefix part times `exp` of the compensated
/// window log-sum, with the certified tail remainder and all floating-point
/// slack folded into `err`.
fn finite_from_parts(
    prefix_product: f64,
    prefix_mults: u64,
    tail_log_remainder: f64,
    window_logs: &Kahan,
) -> ProductValue {
    if prefix_product == 0.0 {
        return ProductValue::Zero;
    }
    let value = prefix_product * window_logs.value().exp();
    // Total log-scale uncertainty: tail remainder + summation slack + one ulp
    // per elementary operation (logs, exp, multiplications). A purely exact
    // path (no window terms, no remainder, no prefix multiplications) reports
    // a zero bound.
    let transcendental = if tail_log_remainder == 0.0 && window_logs.abs_sum() == 0.0 {
        0.0
    } else {
        4.0
    };
    let log_err = tail_log_remainder
        + window_logs.error_bound()
        + 2.0 * f64::EPSILON * window_logs.abs_sum()
        + (prefix_mults as f64 + transcendental) * f64::EPSILON;
    let err = if log_err == 0.0 {
        0.0
    } else {
        value * log_err.exp_m1() * (1.0 + 1e-9)
    };
    ProductValue::Finite { value, err }
}

/// Shared classification for drift tails (`base + a * g(i)type decay`).
#[allow(clippy::too_many_arguments)]
fn drift_product(
    seq: &TailedSequence,
    tail_start: u64,
    saw_zero_in_prefix: bool,
    prefix_product: f64,
    prefix_mults: u64,
    base: f64,
    amp: f64,
    decay: DriftDecay,
    tol: f64,
) -> Result<ProductValue, SequenceError> {
    // Indices where the drift term could reach 0 or below: |a| g(i) >= base.
    // Scan them individually for exact zeros / negatives.
    let mut saw_zero = saw_zero_in_prefix;
    if base <= 0.0 {
        // Limit <= 0: terms are eventually <= |a| g(i) + base; find the first
        // actual negative term (guaranteed to exist when base < 0; when
        // base == 0 terms share the sign of the drift coefficient).
        let mut i = tail_start + 1;
        loop {
            let t = seq.term(i);
            if t < 0.0 {
                return Err(SequenceError::NegativeTerm { index: i, value: t });
            }
            if t == 0.0 {
                return Ok(ProductValue::Zero);
            }
            // base == 0 with positive drift: all terms positive, g(i) -> 0,
            // so log terms -> -inf and the product converges to 0.
            if base == 0.0 {
                return Ok(ProductValue::Zero);
            }
            // base < 0: keep scanning; terms tend to base < 0, so a negative
            // term must appear.
            i += 1;
            if i > WINDOW_CAP {
                return Err(SequenceError::WindowExceeded { cap: WINDOW_CAP });
            }
        }
    }
    if base != 1.0 {
        // Strictly positive limit different from 1: sum of logs diverges.
        // Early terms can still be negative or zero; report those faithfully.
        let guard = drift_below_index(amp, &decay, base);
        if guard == u64::MAX {
            return Err(SequenceError::WindowExceeded { cap: WINDOW_CAP });
        }
        for i in tail_start + 1..tail_start.max(guard) + 1 {
            let t = seq.term(i);
            if t < 0.0 {
                return Err(SequenceError::NegativeTerm { index: i, value: t });
            }
            if t == 0.0 {
                saw_zero = true;
            }
        }
        if saw_zero {
            return Ok(ProductValue::Zero);
        }
        return Ok(if base > 1.0 {
            ProductValue::Infinite
        } else {
            ProductValue::Zero
        });
    }
    // base == 1: absolutely convergent log-series. Choose the smallest window
    // N with certified remainder below the target; tighten once if the
    // value-scale error bound misses tol.
    let start = tail_start;
    let mut target = tol / 2.0;
    for attempt in 0.. {
        let n = smallest_window(amp, &decay, start, target)?;
        let mut logs = Kahan::new();
        for i in start + 1..=n {
            let t = seq.term(i);
            if t < 0.0 {
                return Err(SequenceError::NegativeTerm { index: i, value: t });
            }
            if t == 0.0 {
                saw_zero = true;
            }
            if !saw_zero {
                logs.add(t.ln());
            }
        }
        if saw_zero {
            return Ok(ProductValue::Zero);
        }
        let remainder = tail_log_remainder(amp, &decay, n);
        let pv = finite_from_parts(prefix_product, prefix_mults, remainder, &logs);
        match pv {
            ProductValue::Finite { value, err } if err > tol && attempt == 0 => {
                target = (tol / 2.0) / value.max(1.0);
            }
            _ => return Ok(pv),
        }
    }
    unreachable!()
}

/// Certified bound on `sum_{i > n} |log term_i|` for a drift tail with limit 1.
fn tail_log_remainder(amp: f64, decay: &DriftDecay, n: u64) -> f64 {
    if amp == 0.0 {
        return 0.0;
    }
    // sum_{i > n} amp * g(i), by closed form / integral comparison.
    let drift_sum = match decay {
        DriftDecay::Power(p) => amp * (n as f64).powf(1.0 - p) / (p - 1.0),
        DriftDecay::Geometric(absq) => {
            if *absq == 0.0 {
                0.0
            } else {
                amp * signed_pow(*absq, n + 1) / (1.0 - absq)
            }
        }
    };
    // |log(1 + x)| <= |x| / (1 - s) for |x| <= s < 1, with s the largest
    // drift magnitude beyond the window.
    let s = amp * decay.eval(n + 1).abs();
    if s >= 0.5 {
        f64::INFINITY
    } else {
        drift_sum / (1.0 - s)
    }
}

/// Smallest window end `N >= start` whose certified remainder is `<= target`,
/// subject to the global cap.
fn smallest_window(
    amp: f64,
    decay: &DriftDecay,
    start: u64,
    target: f64,
) -> Result<u64, SequenceError> {
    if amp == 0.0 {
        return Ok(start);
    }
    let mut n = start;
    // Jump ahead analytically, then settle the boundary by scanning.
    while tail_log_remainder(amp, decay, n) > target {
        if n >= WINDOW_CAP {
            return Err(SequenceError::WindowExceeded { cap: WINDOW_CAP });
        }
        let next = match decay {
            // Remainder shrinks by roughly |q| per step: jump most of the
            // remaining distance at once (falling back to doubling while the
            // bound is still infinite).
            DriftDecay::Geometric(absq) => {
                let need = tail_log_remainder(amp, decay, n) / target;
                if need.is_finite() {
                    let steps = (need.ln() / (1.0 / absq).ln()).ceil().max(1.0);
                    n.saturating_add(steps.min(1e6) as u64)
                } else {
                    n.saturating_add(n.max(16))
                }
            }
            DriftDecay::Power(_) => n.saturating_add((n / 8).max(1)),
        };
        n = next.min(WINDOW_CAP);
    }
    // Settle to the smallest satisfying N (remainder is decreasing in N).
    while n > start && tail_log_remainder(amp, decay, n - 1) <= target {
        n -= 1;
    }
    Ok(n)
}

/// Certified evaluation of the product metric
/// `rho(x, y) = sum_{i >= 1} 2^-i * d_i / (1 + d_i)` with `d_i = |x_i - y_i|`.
///
/// The value is always in `[0, 1]`. When both tails are constants the tail of
/// the series has an exact closed form; otherwise the tail is bounded by
/// `2^-N` for the evaluation window `N` chosen from `tol`.
pub fn rho_distance(x: &TailedSequence, y: &TailedSequence, tol: f64) -> Result<Certified, SequenceError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SequenceError::InvalidTolerance { tol });
    }
    let len = x.prefix_len().max(y.prefix_len());
    let phi = |d: f64| d / (1.0 + d);
    let mut sum = Kahan::new();
    for i in 1..=len {
        sum.add(2f64.powi(-(i as i32)) * phi((x.term(i) - y.term(i)).abs()));
    }
    match (x.tail(), y.tail()) {
        (TailDescriptor::Constant(a), TailDescriptor::Constant(b)) => {
            // sum_{i > len} 2^-i = 2^-len exactly.
            sum.add(2f64.powi(-(len as i32)) * phi((a - b).abs()));
            Ok(Certified::new(sum.value(), sum.error_bound()))
        }
        _ => {
            // Generic window: terms are bounded by 2^-i, so the tail beyond N
            // is at most 2^-N.
            let mut n = len;
            while 2f64.powi(-(n as i32)) > tol / 2.0 && n < len + 64 {
                n += 1;
            }
            for i in len + 1..=n {
                sum.add(2f64.powi(-(i as i32)) * phi((x.term(i) - y.term(i)).abs()));
            }
            Ok(Certified::new(
                sum.value(),
                sum.error_bound() + 2f64.powi(-(n as i32)),
            ))
        }
    }
}
