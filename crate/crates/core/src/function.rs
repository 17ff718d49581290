//! Function classes on the infinite-dimensional unit cube with exact,
//! certified integration: finite-dimensional cylinder functions (polynomials
//! and step functions), linear functionals with summable weights, scaled
//! parallelepiped indicators, and opaque evaluators for sampling-only use.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::numeric::{certified_sum, difference_is_exact, Certified, Kahan};
use crate::parallelepiped::{Containment, GeometryError, MeasureValue, Parallelepiped};
use crate::sequences::{SequenceError, TailDescriptor, TailedSequence, WINDOW_CAP};

/// Evaluator of a cylinder body on its support coordinates.
pub type CellEval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Evaluator of a function taking the whole sequence (opaque class).
pub type SequenceEval = Arc<dyn Fn(&TailedSequence) -> f64 + Send + Sync>;

/// Cap on cylinder support size, to keep closed-form integration honest.
pub const MAX_CYLINDER_SUPPORT: usize = 64;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FunctionError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid function: {reason}")]
    InvalidFunction { reason: String },
    #[error("weights are not certifiably absolutely summable: {reason}")]
    WeightsNotSummable { reason: String },
    #[error("{operation} is not available for opaque functions")]
    OpaqueUnsupported { operation: String },
    #[error("membership of the point in the indicator's set is undecidable")]
    MembershipUndecidable,
    #[error("integration domain must have finite positive volume, found {found}")]
    NotFiniteVolume { found: String },
    #[error("cannot certify the tail contribution: {reason}")]
    UncertifiableTail { reason: String },
    #[error("requested tolerance unreachable within the materialization cap")]
    ToleranceUnreachable,
}

/// One term `coeff * prod_j x_j^{exponents[j]}` of a polynomial cylinder
/// body; exponents align with the cylinder's sorted support.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: Vec<u32>) -> Self {
        Self { coeff, exponents }
    }
}

/// One term `weight * 1[cell]` of a step-function cylinder body. Cells are
/// closed boxes over the support coordinates; overlapping cells add.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBox {
    pub weight: f64,
    pub cell: Vec<(f64, f64)>,
}

impl WeightedBox {
    pub fn new(weight: f64, cell: Vec<(f64, f64)>) -> Self {
        Self { weight, cell }
    }
}

/// Body of a finite-dimensional cylinder function, expressed over the
/// cylinder's support coordinates.
#[derive(Clone)]
pub enum CylinderBody {
    Polynomial(Vec<Monomial>),
    WeightedBoxes(Vec<WeightedBox>),
    Opaque(CellEval),
}

impl fmt::Debug for CylinderBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CylinderBody::Polynomial(ms) => f.debug_tuple("Polynomial").field(ms).finish(),
            CylinderBody::WeightedBoxes(bs) => f.debug_tuple("WeightedBoxes").field(bs).finish(),
            CylinderBody::Opaque(_) => f.write_str("Opaque(..)"),
        }
    }
}

impl PartialEq for CylinderBody {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (CylinderBody::Polynomial(a), CylinderBody::Polynomial(b)) => a == b,
            (CylinderBody::WeightedBoxes(a), CylinderBody::WeightedBoxes(b)) => a == b,
            (CylinderBody::Opaque(a), CylinderBody::Opaque(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl CylinderBody {
    /// Value at the given support coordinates plus a bound on the evaluation
    /// rounding error (zero for opaque bodies, whose output is trusted).
    fn eval_with_err(&self, coords: &[f64]) -> (f64, f64) {
        match self {
            CylinderBody::Polynomial(ms) => {
                let mut sum = Kahan::new();
                let mut round = 0.0f64;
                for m in ms {
                    let mut term = m.coeff;
                    let mut ops = 1u32;
                    for (&x, &e) in coords.iter().zip(&m.exponents) {
                        if e > 0 {
                            term *= x.powi(e as i32);
                            ops += e + 1;
                        }
                    }
                    round += f64::from(ops) * f64::EPSILON * term.abs();
                    sum.add(term);
                }
                (sum.value(), sum.error_bound() + 2.0 * round)
            }
            CylinderBody::WeightedBoxes(bs) => {
                let mut sum = Kahan::new();
                for b in bs {
                    let inside = coords
                        .iter()
                        .zip(&b.cell)
                        .all(|(&x, &(lo, hi))| lo <= x && x <= hi);
                    if inside {
                        sum.add(b.weight);
                    }
                }
                let err = if sum.is_exact() { 0.0 } else { sum.error_bound() };
                (sum.value(), err)
            }
            CylinderBody::Opaque(eval) => (eval(coords), 0.0),
        }
    }
}

/// A real-valued function on the unit cube `I^inf` (product of `[0,1]`
/// coordinates with the uniform product law), in one of four classes. The
/// first three are closed under tail integration and admit certified
/// closed-form means; the opaque class is evaluation-only.
#[derive(Clone)]
pub enum ProductFunction {
    /// Depends only on the (sorted, distinct, 1-based) `support` coordinates.
    Cylinder {
        support: Vec<u64>,
        body: CylinderBody,
    },
    /// `x -> offset + sum_i weights_i * x_i`, with certified `sum |w_i| < inf`.
    LinearTail {
        offset: f64,
        weights: TailedSequence,
    },
    /// `scale` times the indicator of a parallelepiped clipped to the unit
    /// cube (`None` when the clipped set is empty).
    Indicator {
        set: Option<Parallelepiped>,
        scale: f64,
    },
    /// Arbitrary evaluator; closed-form operations reject it.
    Opaque {
        label: String,
        eval: SequenceEval,
        sup_bound: Option<f64>,
    },
}

impl fmt::Debug for ProductFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProductFunction::Cylinder { support, body } => f
                .debug_struct("Cylinder")
                .field("support", support)
                .field("body", body)
                .finish(),
            ProductFunction::LinearTail { offset, weights } => f
                .debug_struct("LinearTail")
                .field("offset", offset)
                .field("weights", weights)
                .finish(),
            ProductFunction::Indicator { set, scale } => f
                .debug_struct("Indicator")
                .field("set", set)
                .field("scale", scale)
                .finish(),
            ProductFunction::Opaque { label, .. } => {
                f.debug_struct("Opaque").field("label", label).finish()
            }
        }
    }
}

impl PartialEq for ProductFunction {
    fn eq(&self, other: &Self) -> bool {
        use ProductFunction::*;
        match (self, other) {
            (
                Cylinder { support: s1, body: b1 },
                Cylinder { support: s2, body: b2 },
            ) => s1 == s2 && b1 == b2,
            (
                LinearTail { offset: o1, weights: w1 },
                LinearTail { offset: o2, weights: w2 },
            ) => o1 == o2 && w1 == w2,
            (
                Indicator { set: a1, scale: c1 },
                Indicator { set: a2, scale: c2 },
            ) => a1 == a2 && c1 == c2,
            (
                Opaque { eval: e1, .. },
                Opaque { eval: e2, .. },
            ) => Arc::ptr_eq(e1, e2),
            _ => false,
        }
    }
}

impl ProductFunction {
    /// Cylinder function over explicit support coordinates.
    pub fn cylinder(support: Vec<u64>, body: CylinderBody) -> Result<Self, FunctionError> {
        if support.len() > MAX_CYLINDER_SUPPORT {
            return Err(FunctionError::InvalidFunction {
                reason: format!("support larger than {MAX_CYLINDER_SUPPORT} coordinates"),
            });
        }
        if support.contains(&0) {
            return Err(FunctionError::InvalidFunction {
                reason: "support coordinates are 1-based".into(),
            });
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FunctionError::InvalidFunction {
                reason: "support must be sorted and duplicate-free".into(),
            });
        }
        let arity_ok = |n: usize| n == support.len();
        match &body {
            CylinderBody::Polynomial(ms) => {
                if ms.iter().any(|m| !arity_ok(m.exponents.len())) {
                    return Err(FunctionError::InvalidFunction {
                        reason: "monomial exponent arity differs from support size".into(),
                    });
                }
                if ms.iter().any(|m| !m.coeff.is_finite()) {
                    return Err(FunctionError::InvalidFunction {
                        reason: "non-finite coefficient".into(),
                    });
                }
            }
            CylinderBody::WeightedBoxes(bs) => {
                for b in bs {
                    if !arity_ok(b.cell.len()) {
                        return Err(FunctionError::InvalidFunction {
                            reason: "cell arity differs from support size".into(),
                        });
                    }
                    if !b.weight.is_finite() {
                        return Err(FunctionError::InvalidFunction {
                            reason: "non-finite weight".into(),
                        });
                    }
                    if b.cell
                        .iter()
                        .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
                    {
                        return Err(FunctionError::InvalidFunction {
                            reason: "cell intervals must be finite with lo <= hi".into(),
                        });
                    }
                }
            }
            CylinderBody::Opaque(_) => {}
        }
        Ok(ProductFunction::Cylinder { support, body })
    }

    /// The constant function.
    pub fn constant(c: f64) -> Self {
        ProductFunction::Cylinder {
            support: Vec::new(),
            body: CylinderBody::Polynomial(vec![Monomial::new(c, Vec::new())]),
        }
    }

    /// `x -> sum_i w_i x_i` with certified absolutely-summable weights.
    pub fn linear_tail(weights: TailedSequence) -> Result<Self, FunctionError> {
        Self::linear_tail_with_offset(0.0, weights)
    }

    pub fn linear_tail_with_offset(
        offset: f64,
        weights: TailedSequence,
    ) -> Result<Self, FunctionError> {
        if !offset.is_finite() {
            return Err(FunctionError::InvalidFunction {
                reason: "offset must be finite".into(),
            });
        }
        validate_weights(&weights)?;
        Ok(ProductFunction::LinearTail { offset, weights })
    }

    /// Indicator of `set` clipped to the unit cube.
    pub fn indicator(set: &Parallelepiped) -> Result<Self, FunctionError> {
        Self::scaled_indicator(set, 1.0)
    }

    pub fn scaled_indicator(set: &Parallelepiped, scale: f64) -> Result<Self, FunctionError> {
        if !scale.is_finite() {
            return Err(FunctionError::InvalidFunction {
                reason: "scale must be finite".into(),
            });
        }
        let clipped = set.intersect(&Parallelepiped::unit_cube())?;
        Ok(ProductFunction::Indicator { set: clipped, scale })
    }

    /// `(1/volume) * indicator`, normalized so the unit-cube integral is 1
    /// (up to the certified volume error, which is reported via means).
    pub fn normalized_indicator(set: &Parallelepiped, tol: f64) -> Result<Self, FunctionError> {
        let clipped = set.intersect(&Parallelepiped::unit_cube())?;
        let vol = match &clipped {
            Some(b) => b.volume(tol)?,
            None => MeasureValue::Zero,
        };
        match vol {
            MeasureValue::Finite { value, .. } if value > 0.0 => Ok(ProductFunction::Indicator {
                set: clipped,
                scale: 1.0 / value,
            }),
            other => Err(FunctionError::NotFiniteVolume {
                found: format!("{other:?}"),
            }),
        }
    }

    pub fn opaque(label: impl Into<String>, eval: SequenceEval) -> Self {
        ProductFunction::Opaque {
            label: label.into(),
            eval,
            sup_bound: None,
        }
    }

    pub fn opaque_bounded(label: impl Into<String>, eval: SequenceEval, sup: f64) -> Self {
        ProductFunction::Opaque {
            label: label.into(),
            eval,
            sup_bound: Some(sup),
        }
    }

    /// Certified value at a point given as a tailed sequence.
    pub fn evaluate(&self, x: &TailedSequence, tol: f64) -> Result<Certified, FunctionError> {
        match self {
            ProductFunction::Cylinder { support, body } => {
                let coords: Vec<f64> = support.iter().map(|&j| x.term(j)).collect();
                let (v, e) = body.eval_with_err(&coords);
                Ok(Certified::new(v, e))
            }
            ProductFunction::LinearTail { offset, weights } => {
                linear_eval(*offset, weights, x, tol)
            }
            ProductFunction::Indicator { set: None, .. } => Ok(Certified::exact(0.0)),
            ProductFunction::Indicator { set: Some(b), scale } => match b.contains_point(x) {
                Containment::Yes => Ok(Certified::exact(1.0).scale(*scale)),
                Containment::No => Ok(Certified::exact(0.0)),
                Containment::Unknown => Err(FunctionError::MembershipUndecidable),
            },
            ProductFunction::Opaque { eval, .. } => Ok(Certified::exact(eval(x))),
        }
    }

    /// Fast evaluation at a materialized point: coordinates `1..=prefix.len()`
    /// from `prefix`, all later coordinates equal to `tail_constant`. This is
    /// the sampling path (no certification; plain `f64`).
    pub fn evaluate_materialized(
        &self,
        prefix: &[f64],
        tail_constant: f64,
    ) -> Result<f64, FunctionError> {
        let plen = prefix.len() as u64;
        match self {
            ProductFunction::Cylinder { support, body } => {
                let coords: Vec<f64> = support
                    .iter()
                    .map(|&j| {
                        if j <= plen {
                            prefix[(j - 1) as usize]
                        } else {
                            tail_constant
                        }
                    })
                    .collect();
                Ok(body.eval_with_err(&coords).0)
            }
            ProductFunction::LinearTail { offset, weights } => {
                let mut sum = Kahan::new();
                for (i, &x) in prefix.iter().enumerate() {
                    sum.add(weights.term(i as u64 + 1) * x);
                }
                let rest = weight_tail_sum(weights, plen)?.value * tail_constant;
                Ok(offset + sum.value() + rest)
            }
            ProductFunction::Indicator { set: None, .. } => Ok(0.0),
            ProductFunction::Indicator { set: Some(b), scale } => {
                for (i, &x) in prefix.iter().enumerate() {
                    let i = i as u64 + 1;
                    if x < b.lower().term(i) || x > b.upper().term(i) {
                        return Ok(0.0);
                    }
                }
                let lo_range = b.lower().range_beyond(plen);
                let hi_range = b.upper().range_beyond(plen);
                match (lo_range, hi_range) {
                    (Some((_, lo_sup)), Some((hi_inf, _))) => {
                        if lo_sup <= tail_constant && tail_constant <= hi_inf {
                            Ok(*scale)
                        } else {
                            // Some tail coordinate excludes the constant; for
                            // drifting bounds the first violating index is
                            // real because the range bounds are decision-tight.
                            Ok(0.0)
                        }
                    }
                    _ => Err(FunctionError::MembershipUndecidable),
                }
            }
            ProductFunction::Opaque { eval, .. } => {
                let x = TailedSequence::new(
                    prefix.to_vec(),
                    TailDescriptor::Constant(tail_constant),
                )?;
                Ok(eval(&x))
            }
        }
    }

    /// Certified mean over the unit cube (the function's integral, since the
    /// cube carries the uniform product probability law).
    pub fn mean_unit_cube(&self, tol: f64) -> Result<Certified, FunctionError> {
        self.mean_over_box(&Parallelepiped::unit_cube(), tol)
    }

    /// Certified mean over an arbitrary finite-positive-volume parallelepiped
    /// under the normalized uniform law on that box.
    pub fn mean_over_box(
        &self,
        domain: &Parallelepiped,
        tol: f64,
    ) -> Result<Certified, FunctionError> {
        let vol = domain.volume(tol)?;
        let vol = match vol {
            MeasureValue::Finite { value, err } if value - err > 0.0 => {
                Certified::new(value, err)
            }
            other => {
                return Err(FunctionError::NotFiniteVolume {
                    found: format!("{other:?}"),
                })
            }
        };
        match self {
            ProductFunction::Cylinder { support, body } => match body {
                CylinderBody::Polynomial(ms) => {
                    let terms = ms.iter().map(|m| {
                        let mut acc = Certified::exact(m.coeff);
                        for (&j, &e) in support.iter().zip(&m.exponents) {
                            let a = domain.lower().term(j);
                            let b = domain.upper().term(j);
                            acc = acc.mul(&normalized_moment(e, a, b));
                        }
                        acc
                    });
                    Ok(certified_sum(terms))
                }
                CylinderBody::WeightedBoxes(bs) => {
                    let terms = bs.iter().map(|wb| {
                        let mut acc = Certified::exact(wb.weight);
                        for (&j, &(lo, hi)) in support.iter().zip(&wb.cell) {
                            let a = domain.lower().term(j);
                            let b = domain.upper().term(j);
                            acc = acc.mul(&overlap_fraction(a, b, lo, hi));
                        }
                        acc
                    });
                    Ok(certified_sum(terms))
                }
                CylinderBody::Opaque(_) => Err(FunctionError::OpaqueUnsupported {
                    operation: "closed-form mean".into(),
                }),
            },
            ProductFunction::LinearTail { offset, weights } => {
                let centre = domain.centre()?;
                linear_eval(*offset, weights, &centre, tol)
            }
            ProductFunction::Indicator { set: None, .. } => Ok(Certified::exact(0.0)),
            ProductFunction::Indicator { set: Some(s), scale } => {
                let inter = match s.intersect(domain)? {
                    None => return Ok(Certified::exact(0.0)),
                    Some(i) => i,
                };
                let numer = match inter.volume(tol)? {
                    MeasureValue::Zero => Certified::exact(0.0),
                    MeasureValue::Finite { value, err } => Certified::new(value, err),
                    other => {
                        return Err(FunctionError::UncertifiableTail {
                            reason: format!("intersection volume is {other:?}"),
                        })
                    }
                };
                let ratio = if vol.value == 1.0 && vol.err == 0.0 {
                    numer
                } else {
                    numer
                        .div(&vol)
                        .expect("volume certified positive above")
                };
                Ok(ratio.scale(*scale))
            }
            ProductFunction::Opaque { .. } => Err(FunctionError::OpaqueUnsupported {
                operation: "closed-form mean".into(),
            }),
        }
    }

    /// Upper bound on `sup |f|` over the unit cube, when the class provides
    /// one.
    pub fn sup_abs_bound(&self) -> Option<f64> {
        match self {
            ProductFunction::Cylinder { body, .. } => match body {
                CylinderBody::Polynomial(ms) => {
                    Some(ms.iter().map(|m| m.coeff.abs()).sum())
                }
                CylinderBody::WeightedBoxes(bs) => {
                    Some(bs.iter().map(|b| b.weight.abs()).sum())
                }
                CylinderBody::Opaque(_) => None,
            },
            ProductFunction::LinearTail { offset, weights } => Some(
                offset.abs()
                    + weight_abs_tail_sum(weights, 0)
                        .map(|s| s.upper())
                        .unwrap_or(f64::INFINITY),
            ),
            ProductFunction::Indicator { scale, .. } => Some(scale.abs()),
            ProductFunction::Opaque { sup_bound, .. } => *sup_bound,
        }
    }

    /// Certified bound on `sup |f(x) - f(y)|` over pairs in the unit cube
    /// agreeing on the first `d` coordinates, when the class provides one.
    /// This is the defining quantity of the slowly-oscillating class.
    pub fn oscillation_bound(&self, d: u64) -> Option<f64> {
        match self {
            ProductFunction::Cylinder { support, body } => {
                if support.iter().all(|&j| j <= d) {
                    return Some(0.0);
                }
                match body {
                    CylinderBody::Polynomial(ms) => {
                        let affected: f64 = ms
                            .iter()
                            .filter(|m| {
                                support
                                    .iter()
                                    .zip(&m.exponents)
                                    .any(|(&j, &e)| j > d && e > 0)
                            })
                            .map(|m| 2.0 * m.coeff.abs())
                            .sum();
                        Some(affected)
                    }
                    CylinderBody::WeightedBoxes(bs) => {
                        let affected: f64 = bs
                            .iter()
                            .filter(|b| {
                                support
                                    .iter()
                                    .zip(&b.cell)
                                    .any(|(&j, &(lo, hi))| j > d && (lo > 0.0 || hi < 1.0))
                            })
                            .map(|b| b.weight.abs())
                            .sum();
                        Some(affected)
                    }
                    CylinderBody::Opaque(_) => None,
                }
            }
            ProductFunction::LinearTail { weights, .. } => {
                weight_abs_tail_sum(weights, d).ok().map(|s| s.upper())
            }
            ProductFunction::Indicator { set: None, .. } => Some(0.0),
            ProductFunction::Indicator { set: Some(b), scale } => {
                // A d-cylinder indicator (free beyond d) has oscillation 0;
                // otherwise membership can flip, so the bound is |scale|.
                let free_lower = matches!(b.lower().range_beyond(d), Some((lo, hi)) if lo == 0.0 && hi == 0.0);
                let free_upper = matches!(b.upper().range_beyond(d), Some((lo, hi)) if lo == 1.0 && hi == 1.0);
                if free_lower && free_upper {
                    Some(0.0)
                } else {
                    Some(scale.abs())
                }
            }
            ProductFunction::Opaque { .. } => None,
        }
    }
}

/// Rejects weight sequences whose absolute sum cannot be certified finite:
/// the tail must decay to zero inside the descriptor algebra.
fn validate_weights(w: &TailedSequence) -> Result<(), FunctionError> {
    match w.tail() {
        TailDescriptor::Constant(c) => {
            if *c == 0.0 {
                Ok(())
            } else {
                Err(FunctionError::WeightsNotSummable {
                    reason: format!("constant tail {c} does not vanish"),
                })
            }
        }
        TailDescriptor::PowerDrift { base, .. } | TailDescriptor::GeometricDrift { base, .. } => {
            if *base == 0.0 {
                Ok(())
            } else {
                Err(FunctionError::WeightsNotSummable {
                    reason: format!("tail drifts to {base}, not 0"),
                })
            }
        }
        TailDescriptor::Periodic(cycle) => {
            if cycle.iter().all(|&v| v == 0.0) {
                Ok(())
            } else {
                Err(FunctionError::WeightsNotSummable {
                    reason: "periodic tail does not vanish".into(),
                })
            }
        }
        TailDescriptor::Opaque { .. } => Err(FunctionError::WeightsNotSummable {
            reason: "opaque tail admits no summability certificate".into(),
        }),
    }
}

/// Certified `sum_{i>d} w_i` for a valid weight sequence.
pub fn weight_tail_sum(w: &TailedSequence, d: u64) -> Result<Certified, FunctionError> {
    weight_sum_impl(w, d, false)
}

/// Certified `sum_{i>d} |w_i|`.
pub fn weight_abs_tail_sum(w: &TailedSequence, d: u64) -> Result<Certified, FunctionError> {
    weight_sum_impl(w, d, true)
}

fn weight_sum_impl(w: &TailedSequence, d: u64, absolute: bool) -> Result<Certified, FunctionError> {
    validate_weights(w)?;
    let plen = w.prefix_len();
    let mut head = Kahan::new();
    for i in d + 1..=plen.max(d) {
        if i > plen {
            break;
        }
        let t = w.term(i);
        head.add(if absolute { t.abs() } else { t });
    }
    let n0 = plen.max(d);
    let tail = match w.tail() {
        TailDescriptor::Constant(_) | TailDescriptor::Periodic(_) => Certified::exact(0.0),
        TailDescriptor::GeometricDrift { a, q, .. } => {
            let (a_eff, q_eff) = if absolute { (a.abs(), q.abs()) } else { (*a, *q) };
            geometric_tail_sum(a_eff, q_eff, n0)
        }
        TailDescriptor::PowerDrift { a, p, .. } => {
            let a_eff = if absolute { a.abs() } else { *a };
            power_tail_sum(a_eff, *p, n0)
        }
        TailDescriptor::Opaque { .. } => unreachable!("rejected by validate_weights"),
    };
    let head_err = if head.is_exact() { 0.0 } else { head.error_bound() };
    Ok(Certified::new(head.value(), head_err).add(&tail))
}

/// `sum_{i>n0} a q^i = a q^(n0+1) / (1 - q)`, exact when the powers and the
/// division stay in dyadic arithmetic.
fn geometric_tail_sum(a: f64, q: f64, n0: u64) -> Certified {
    if a == 0.0 {
        return Certified::exact(0.0);
    }
    let exponent = (n0 + 1).min(i32::MAX as u64) as i32;
    let pw = q.powi(exponent);
    if pw == 0.0 {
        // Underflow: the true sum is below the smallest subnormal times a
        // small constant; report zero with a covering error.
        return Certified::new(0.0, f64::MIN_POSITIVE * a.abs().max(1.0));
    }
    let value = a * pw / (1.0 - q);
    let exact = is_pow2(q.abs()) && is_pow2(1.0 - q);
    let err = if exact {
        0.0
    } else {
        4.0 * f64::EPSILON * value.abs() * (n0 as f64 + 4.0)
    };
    Certified::new(value, err)
}

/// `a * sum_{i>n0} i^(-p)` via explicit terms to a settle index plus an
/// Euler–Maclaurin tail with a certified remainder bound.
fn power_tail_sum(a: f64, p: f64, n0: u64) -> Certified {
    if a == 0.0 {
        return Certified::exact(0.0);
    }
    let settle = n0.max(512);
    let mut head = Kahan::new();
    for i in n0 + 1..=settle {
        head.add((i as f64).powf(-p));
    }
    let n = (settle + 1) as f64;
    // sum_{i>=N} i^(-p) = N^(1-p)/(p-1) + N^(-p)/2 + p N^(-p-1)/12 + R,
    // |R| <= p(p+1)(p+2) N^(-p-3)/720.
    let integral = n.powf(1.0 - p) / (p - 1.0);
    let half_term = 0.5 * n.powf(-p);
    let deriv_term = p * n.powf(-p - 1.0) / 12.0;
    let tail = integral + half_term + deriv_term;
    let remainder = p * (p + 1.0) * (p + 2.0) * n.powf(-p - 3.0) / 720.0;
    let sum = head.value() + tail;
    let err = head.error_bound() + remainder + 8.0 * f64::EPSILON * sum.abs();
    Certified::new(a * sum, a.abs() * err + 2.0 * f64::EPSILON * (a * sum).abs())
}

fn is_pow2(x: f64) -> bool {
    if !(x.is_finite() && x > 0.0) {
        return false;
    }
    let bits = x.to_bits();
    let mantissa = bits & ((1u64 << 52) - 1);
    let exponent = (bits >> 52) & 0x7ff;
    mantissa == 0 && exponent != 0
}

/// First `d` terms kept verbatim, all later weights zero.
pub fn truncate_weights(w: &TailedSequence, d: u64) -> Result<TailedSequence, FunctionError> {
    if d > WINDOW_CAP {
        return Err(FunctionError::InvalidFunction {
            reason: format!("truncation depth {d} exceeds the materialization cap"),
        });
    }
    let prefix: Vec<f64> = (1..=d).map(|i| w.term(i)).collect();
    Ok(TailedSequence::new(prefix, TailDescriptor::Constant(0.0))?)
}

/// Certified `offset + sum_i w_i x_i` for a point in the descriptor algebra:
/// an explicit window plus a tail bound `sum_{i>K}|w_i| * sup_{i>K}|x_i|`,
/// with the window grown until the bound meets the tolerance.
fn linear_eval(
    offset: f64,
    weights: &TailedSequence,
    x: &TailedSequence,
    tol: f64,
) -> Result<Certified, FunctionError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(FunctionError::InvalidFunction {
            reason: format!("tolerance must be positive, got {tol}"),
        });
    }
    // Constant point: the dot product is a closed-form multiple of the full
    // weight sum (exact for exactly-summable weights).
    if x.prefix_len() == 0 {
        if let TailDescriptor::Constant(c) = x.tail() {
            let dot = weight_tail_sum(weights, 0)?.scale(*c);
            return Ok(Certified::exact(offset).add(&dot));
        }
    }
    let mut window = 64u64.max(weights.prefix_len()).max(x.prefix_len());
    loop {
        let abs_rem = weight_abs_tail_sum(weights, window)?;
        let rem_bound = if abs_rem.upper() == 0.0 {
            0.0
        } else {
            match x.range_beyond(window) {
                Some((lo, hi)) => abs_rem.upper() * lo.abs().max(hi.abs()),
                None => {
                    return Err(FunctionError::UncertifiableTail {
                        reason: "point has an opaque tail and the weights do not vanish there"
                            .into(),
                    })
                }
            }
        };
        if rem_bound <= tol / 2.0 || window >= WINDOW_CAP {
            if rem_bound > tol / 2.0 {
                return Err(FunctionError::ToleranceUnreachable);
            }
            let mut sum = Kahan::new();
            for i in 1..=window {
                sum.add(weights.term(i) * x.term(i));
            }
            let value = offset + sum.value();
            let mut err = rem_bound + sum.error_bound() + f64::EPSILON * sum.abs_sum();
            if !crate::numeric::sum_is_exact(offset, sum.value()) {
                err += 2.0 * f64::EPSILON * value.abs();
            }
            return Ok(Certified::new(value, err));
        }
        window = (window * 2).min(WINDOW_CAP);
    }
}

/// Normalized moment `(1/(b-a)) * int_a^b x^e dx`, certified.
fn normalized_moment(e: u32, a: f64, b: f64) -> Certified {
    if e == 0 {
        return Certified::exact(1.0);
    }
    if a == 0.0 && b == 1.0 {
        let value = 1.0 / f64::from(e + 1);
        let err = if (e + 1).is_power_of_two() {
            0.0
        } else {
            2.0 * f64::EPSILON * value
        };
        return Certified::new(value, err);
    }
    let k = e + 1;
    let pa = a.powi(k as i32);
    let pb = b.powi(k as i32);
    let numer = Certified::new(
        pb - pa,
        2.0 * f64::EPSILON * f64::from(k + 1) * (pa.abs() + pb.abs()),
    );
    let denom = Certified::new(
        f64::from(k) * (b - a),
        2.0 * f64::EPSILON * f64::from(k) * (b - a).abs(),
    );
    numer
        .div(&denom)
        .unwrap_or_else(|| Certified::new(0.0, f64::INFINITY))
}

/// `len([a,b] inter [lo,hi]) / (b - a)`, certified; exact in dyadic cases.
fn overlap_fraction(a: f64, b: f64, lo: f64, hi: f64) -> Certified {
    let left = a.max(lo);
    let right = b.min(hi);
    if right <= left {
        return Certified::exact(0.0);
    }
    let overlap = right - left;
    let overlap = if difference_is_exact(right, left) {
        Certified::exact(overlap)
    } else {
        Certified::new(overlap, 2.0 * f64::EPSILON * overlap.abs())
    };
    let len = b - a;
    if len == 1.0 {
        return overlap;
    }
    let len = if difference_is_exact(b, a) {
        Certified::exact(len)
    } else {
        Certified::new(len, 2.0 * f64::EPSILON * len.abs())
    };
    overlap
        .div(&len)
        .unwrap_or_else(|| Certified::new(0.0, f64::INFINITY))
}

/// Unnormalized `int_a^b x^e dx`, used when integrating cylinder coordinates
/// out against the uniform law on `[0,1]` (where it equals `1/(e+1)`).
pub(crate) fn unit_interval_moment(e: u32) -> Certified {
    if e == 0 {
        return Certified::exact(1.0);
    }
    let value = 1.0 / f64::from(e + 1);
    let err = if (e + 1).is_power_of_two() {
        0.0
    } else {
        2.0 * f64::EPSILON * value
    };
    Certified::new(value, err)
}

/// Length of `[lo,hi] inter [0,1]` (the weight a step-function cell picks up
/// when its coordinate is integrated against uniform-on-[0,1]).
pub(crate) fn unit_clip_length(lo: f64, hi: f64) -> f64 {
    (hi.min(1.0) - lo.max(0.0)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::TailDescriptor;

    fn dyadic_weights() -> TailedSequence {
        // w_i = 2^(-i): geometric with base 0.
        TailedSequence::new(
            Vec::new(),
            TailDescriptor::GeometricDrift {
                base: 0.0,
                a: 1.0,
                q: 0.5,
            },
        )
        .unwrap()
    }

    fn x_squared_on_coord(j: u64) -> ProductFunction {
        ProductFunction::cylinder(
            vec![j],
            CylinderBody::Polynomial(vec![Monomial::new(1.0, vec![2])]),
        )
        .unwrap()
    }

    // ---- weight sums ----

    #[test]
    fn dyadic_weight_tail_sums_are_exact() {
        let w = dyadic_weights();
        for d in 0..=40u64 {
            let s = weight_tail_sum(&w, d).unwrap();
            assert_eq!(s.value, 2f64.powi(-(d as i32)), "d={d}");
            assert_eq!(s.err, 0.0, "d={d}");
            let sa = weight_abs_tail_sum(&w, d).unwrap();
            assert_eq!(sa.value, s.value);
        }
    }

    #[test]
    fn weight_sum_handles_prefix_and_sign() {
        // prefix [3, -1], then (-1)^i 2^(-i) scaled by 4.
        let w = TailedSequence::new(
            vec![3.0, -1.0],
            TailDescriptor::GeometricDrift {
                base: 0.0,
                a: 4.0,
                q: -0.5,
            },
        )
        .unwrap();
        let s = weight_tail_sum(&w, 0).unwrap();
        // Tail beyond index 2: sum_{i>=3} 4(-1/2)^i = 4 * (-1/8)/(3/2) = -1/3.
        let expected = 3.0 - 1.0 - 1.0 / 3.0;
        assert!((s.value - expected).abs() <= s.err + 1e-15);
        let sa = weight_abs_tail_sum(&w, 0).unwrap();
        let expected_abs = 3.0 + 1.0 + 4.0 * 0.125 / 0.5;
        assert!((sa.value - expected_abs).abs() <= sa.err + 1e-15);
    }

    #[test]
    fn power_weight_sum_matches_zeta_oracle() {
        // sum_{i>=1} i^(-2) = pi^2/6.
        let w = TailedSequence::new(
            Vec::new(),
            TailDescriptor::PowerDrift {
                base: 0.0,
                a: 1.0,
                p: 2.0,
            },
        )
        .unwrap();
        let s = weight_tail_sum(&w, 0).unwrap();
        let zeta2 = std::f64::consts::PI * std::f64::consts::PI / 6.0;
        assert!((s.value - zeta2).abs() <= s.err + 1e-14);
        assert!(s.err < 1e-12, "err={}", s.err);
        // Tail beyond 100 against a long partial-sum oracle.
        let s100 = weight_tail_sum(&w, 100).unwrap();
        let oracle: f64 = (101..=40_000_000u64).map(|i| (i as f64).powi(-2)).sum();
        assert!((s100.value - oracle).abs() <= s100.err + 3e-8);
    }

    #[test]
    fn weight_validation_rejects_non_vanishing_tails() {
        for bad in [
            TailedSequence::constant(1.0),
            TailedSequence::new(vec![], TailDescriptor::geometric_drift(1.0, 0.5)).unwrap(),
            TailedSequence::new(vec![], TailDescriptor::Periodic(vec![0.0, 0.1])).unwrap(),
        ] {
            assert!(matches!(
                ProductFunction::linear_tail(bad),
                Err(FunctionError::WeightsNotSummable { .. })
            ));
        }
    }

    #[test]
    fn truncated_weights_are_verbatim_then_zero() {
        let w = dyadic_weights();
        let t = truncate_weights(&w, 5).unwrap();
        for i in 1..=5 {
            assert_eq!(t.term(i), w.term(i));
        }
        for i in 6..=50 {
            assert_eq!(t.term(i), 0.0);
        }
        assert_eq!(weight_tail_sum(&t, 5).unwrap(), Certified::exact(0.0));
    }

    // ---- evaluation ----

    #[test]
    fn linear_tail_evaluation_closed_forms() {
        let f = ProductFunction::linear_tail(dyadic_weights()).unwrap();
        let all1 = f.evaluate(&TailedSequence::constant(1.0), 1e-12).unwrap();
        assert_eq!(all1.value, 1.0);
        assert_eq!(all1.err, 0.0);
        let all0 = f.evaluate(&TailedSequence::constant(0.0), 1e-12).unwrap();
        assert_eq!(all0, Certified::exact(0.0));
        // Windowed path: x = 1 + 2^-i drifts, exact dot = sum 2^-i (1 + 2^-i)
        // = 1 + sum 4^-i = 1 + 1/3.
        let x = TailedSequence::new(vec![], TailDescriptor::geometric_drift(1.0, 0.5)).unwrap();
        let v = f.evaluate(&x, 1e-12).unwrap();
        assert!((v.value - (1.0 + 1.0 / 3.0)).abs() <= v.err + 1e-13);
        assert!(v.err <= 1e-12);
    }

    #[test]
    fn polynomial_cylinder_evaluation() {
        // f(x) = 2 x_1^2 x_3 - 0.5.
        let f = ProductFunction::cylinder(
            vec![1, 3],
            CylinderBody::Polynomial(vec![
                Monomial::new(2.0, vec![2, 1]),
                Monomial::new(-0.5, vec![0, 0]),
            ]),
        )
        .unwrap();
        let x = TailedSequence::new(vec![0.5, 9.0, 0.25], TailDescriptor::Constant(0.0)).unwrap();
        let v = f.evaluate(&x, 1e-12).unwrap();
        assert!((v.value - (2.0 * 0.25 * 0.25 - 0.5)).abs() <= v.err + 1e-15);
    }

    #[test]
    fn weighted_box_evaluation_is_closed_and_additive() {
        let f = ProductFunction::cylinder(
            vec![2],
            CylinderBody::WeightedBoxes(vec![
                WeightedBox::new(1.0, vec![(0.0, 0.5)]),
                WeightedBox::new(0.25, vec![(0.5, 1.0)]),
                WeightedBox::new(2.0, vec![(0.4, 0.6)]),
            ]),
        )
        .unwrap();
        let at = |x2: f64| {
            let x = TailedSequence::new(vec![0.0, x2], TailDescriptor::Constant(0.5)).unwrap();
            f.evaluate(&x, 1e-12).unwrap().value
        };
        assert_eq!(at(0.1), 1.0);
        assert_eq!(at(0.5), 1.0 + 0.25 + 2.0); // closed endpoints overlap
        assert_eq!(at(0.7), 0.25);
    }

    #[test]
    fn indicator_evaluation_and_clipping() {
        // Box [0, 1 + 2^-i] clips to the unit cube exactly.
        let big = Parallelepiped::new(
            TailedSequence::constant(0.0),
            TailedSequence::new(vec![], TailDescriptor::geometric_drift(1.0, 0.5)).unwrap(),
        )
        .unwrap();
        let f = ProductFunction::indicator(&big).unwrap();
        let inside = f.evaluate(&TailedSequence::constant(0.5), 1e-12).unwrap();
        assert_eq!(inside, Certified::exact(1.0));
        let outside = f.evaluate(&TailedSequence::constant(1.5), 1e-12).unwrap();
        assert_eq!(outside, Certified::exact(0.0));
        // The clipped set's mean over the cube is exactly 1.
        assert_eq!(f.mean_unit_cube(1e-12).unwrap(), Certified::exact(1.0));
    }

    #[test]
    fn materialized_evaluation_matches_sequence_evaluation() {
        let funcs = vec![
            ProductFunction::linear_tail(dyadic_weights()).unwrap(),
            x_squared_on_coord(2),
            ProductFunction::indicator(
                &Parallelepiped::new(
                    TailedSequence::constant(0.0),
                    TailedSequence::new(vec![0.5, 0.5], TailDescriptor::Constant(1.0)).unwrap(),
                )
                .unwrap(),
            )
            .unwrap(),
        ];
        let prefix = [0.3, 0.7, 0.2, 0.9];
        let tail_c = 0.5;
        let x = TailedSequence::new(prefix.to_vec(), TailDescriptor::Constant(tail_c)).unwrap();
        for f in &funcs {
            let fast = f.evaluate_materialized(&prefix, tail_c).unwrap();
            let slow = f.evaluate(&x, 1e-12).unwrap();
            assert!(
                (fast - slow.value).abs() <= slow.err + 1e-12,
                "{f:?}: {fast} vs {}",
                slow.value
            );
        }
    }

    // ---- means ----

    #[test]
    fn mean_of_x_squared_is_one_third() {
        let m = x_squared_on_coord(1).mean_unit_cube(1e-12).unwrap();
        assert!((m.value - 1.0 / 3.0).abs() <= m.err + 1e-16);
        assert!(m.err < 1e-15);
    }

    #[test]
    fn mean_of_linear_tail_is_half_exactly() {
        let f = ProductFunction::linear_tail(dyadic_weights()).unwrap();
        let m = f.mean_unit_cube(1e-12).unwrap();
        assert_eq!(m.value, 0.5);
        assert_eq!(m.err, 0.0);
    }

    #[test]
    fn mean_of_half_slab_indicator_is_half_exactly() {
        let slab = Parallelepiped::new(
            TailedSequence::constant(0.0),
            TailedSequence::new(vec![0.5], TailDescriptor::Constant(1.0)).unwrap(),
        )
        .unwrap();
        let f = ProductFunction::indicator(&slab).unwrap();
        assert_eq!(f.mean_unit_cube(1e-12).unwrap(), Certified::exact(0.5));
    }

    #[test]
    fn mean_over_shifted_box() {
        // E[x_1^2] under uniform on [1, 2] = 7/3.
        let b = Parallelepiped::new(
            TailedSequence::new(vec![1.0], TailDescriptor::Constant(0.0)).unwrap(),
            TailedSequence::new(vec![2.0], TailDescriptor::Constant(1.0)).unwrap(),
        )
        .unwrap();
        let m = x_squared_on_coord(1).mean_over_box(&b, 1e-12).unwrap();
        assert!((m.value - 7.0 / 3.0).abs() <= m.err + 1e-13);
        // Linear tail mean over the same box: w.midpoint(1) = 1.5, rest 0.5.
        let f = ProductFunction::linear_tail(dyadic_weights()).unwrap();
        let m2 = f.mean_over_box(&b, 1e-12).unwrap();
        let expected = 0.5 * 1.5 + (0.5 - 0.25); // w_1 * 1.5 + sum_{i>1} w_i * 0.5
        assert!((m2.value - expected).abs() <= m2.err + 1e-13);
    }

    #[test]
    fn mean_requires_finite_positive_domain() {
        let zero_box = Parallelepiped::new(
            TailedSequence::constant(0.0),
            TailedSequence::constant(0.5),
        )
        .unwrap();
        assert!(matches!(
            ProductFunction::constant(1.0).mean_over_box(&zero_box, 1e-12),
            Err(FunctionError::NotFiniteVolume { .. })
        ));
    }

    #[test]
    fn normalized_indicator_integrates_to_one() {
        let slab = Parallelepiped::new(
            TailedSequence::constant(0.0),
            TailedSequence::new(vec![0.25, 0.5], TailDescriptor::Constant(1.0)).unwrap(),
        )
        .unwrap();
        let f = ProductFunction::normalized_indicator(&slab, 1e-12).unwrap();
        let m = f.mean_unit_cube(1e-12).unwrap();
        assert_eq!(m.value, 1.0);
    }

    #[test]
    fn opaque_rejected_from_closed_form_paths() {
        let f = ProductFunction::opaque("limsup", Arc::new(|_x: &TailedSequence| 0.0));
        assert!(matches!(
            f.mean_unit_cube(1e-12),
            Err(FunctionError::OpaqueUnsupported { .. })
        ));
    }

    // ---- oscillation bounds ----

    #[test]
    fn oscillation_bounds_per_class() {
        let cyl = x_squared_on_coord(3);
        assert_eq!(cyl.oscillation_bound(3), Some(0.0));
        assert_eq!(cyl.oscillation_bound(2), Some(2.0));
        let lin = ProductFunction::linear_tail(dyadic_weights()).unwrap();
        for d in 0..20 {
            assert_eq!(lin.oscillation_bound(d), Some(2f64.powi(-(d as i32))));
        }
        // Indicator free beyond its prefix is a cylinder.
        let slab = Parallelepiped::new(
            TailedSequence::constant(0.0),
            TailedSequence::new(vec![0.5], TailDescriptor::Constant(1.0)).unwrap(),
        )
        .unwrap();
        let ind = ProductFunction::indicator(&slab).unwrap();
        assert_eq!(ind.oscillation_bound(1), Some(0.0));
        assert_eq!(ind.oscillation_bound(0), Some(1.0));
        let op = ProductFunction::opaque("x", Arc::new(|_x: &TailedSequence| 0.0));
        assert_eq!(op.oscillation_bound(5), None);
    }

    #[test]
    fn constructor_validation() {
        assert!(matches!(
            ProductFunction::cylinder(
                vec![2, 1],
                CylinderBody::Polynomial(vec![Monomial::new(1.0, vec![0, 0])])
            ),
            Err(FunctionError::InvalidFunction { .. })
        ));
        assert!(matches!(
            ProductFunction::cylinder(
                vec![1],
                CylinderBody::Polynomial(vec![Monomial::new(1.0, vec![0, 1])])
            ),
            Err(FunctionError::InvalidFunction { .. })
        ));
        assert!(matches!(
            ProductFunction::cylinder(
                vec![1],
                CylinderBody::WeightedBoxes(vec![WeightedBox::new(1.0, vec![(0.5, 0.2)])])
            ),
            Err(FunctionError::InvalidFunction { .. })
        ));
    }
}
