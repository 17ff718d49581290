//! Infinite-dimensional axis-aligned parallelepipeds `prod_i [a_i, b_i]` with
//! lazily-described side sequences, their certified product volumes, and
//! cover-based upper bounds for outer-measure style estimates.

use serde::Serialize;
use thiserror::Error;

use crate::numeric::{Certified, Kahan};
use crate::sequences::{
    infinite_product_beyond, rho_distance, ProductValue, SequenceError, TailDescriptor,
    TailedSequence, Violations,
};

/// Volume of an infinite-dimensional set under the translation-invariant
/// product construction: same classification lattice as [`ProductValue`].
pub type MeasureValue = ProductValue;

/// Default tolerance used when an operation needs a volume internally.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Three-valued result of geometric comparisons that may be undecidable for
/// opaque tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Containment {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("side at index {index} has negative length")]
    NegativeLength { index: u64 },
    #[error("side lengths are negative from index {from_hint} onwards")]
    TailNegative { from_hint: u64 },
    #[error("side lengths cannot be certified non-negative (opaque tail)")]
    LengthsUnverifiable,
    #[error("operation requires a finite positive volume, found {found}")]
    NotFinitePositive { found: String },
    #[error("cover {cover}, element {element}: rho-diameter exceeds the cap")]
    CapViolated { cover: usize, element: usize },
    #[error("no supplied cover could be certified as containing the target")]
    NoValidCover,
    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
}

/// `prod_i [lower_i, upper_i]`, with `lower_i <= upper_i` certified at
/// construction. The side-length sequence `upper - lower` must stay within
/// the closed descriptor family. Boxes with opaque bounds are accepted, with
/// non-negativity left as the caller's obligation (volumes over such boxes
/// classify as `Undefined` anyway).
#[derive(Debug, Clone, PartialEq)]
pub struct Parallelepiped {
    lower: TailedSequence,
    upper: TailedSequence,
    lengths: TailedSequence,
}

impl Parallelepiped {
    pub fn new(lower: TailedSequence, upper: TailedSequence) -> Result<Self, GeometryError> {
        let lengths = upper.sub(&lower)?;
        match lengths.negative_indices(1) {
            Violations::None => {}
            Violations::Finite(idx) => {
                return Err(GeometryError::NegativeLength { index: idx[0] })
            }
            Violations::Infinite { from_hint } => {
                return Err(GeometryError::TailNegative { from_hint })
            }
            Violations::Unknown => {} // opaque: accepted, caller's obligation
        }
        Ok(Self {
            lower,
            upper,
            lengths,
        })
    }

    /// The unit cube `[0, 1]^inf`.
    pub fn unit_cube() -> Self {
        Self::new(TailedSequence::constant(0.0), TailedSequence::constant(1.0))
            .expect("unit cube is valid")
    }

    /// Axis-aligned cube of side `side` centred at `centre`.
    pub fn cube_at(centre: &TailedSequence, side: f64) -> Result<Self, GeometryError> {
        if !(side.is_finite() && side >= 0.0) {
            return Err(GeometryError::InvalidParameter {
                reason: format!("cube side must be non-negative, got {side}"),
            });
        }
        let half = TailedSequence::constant(side / 2.0);
        let lower = centre.sub(&half)?;
        let upper = centre.add(&half)?;
        Self::new(lower, upper)
    }

    pub fn lower(&self) -> &TailedSequence {
        &self.lower
    }

    pub fn upper(&self) -> &TailedSequence {
        &self.upper
    }

    /// Side lengths `b_i - a_i` as a sequence in the descriptor family.
    pub fn lengths(&self) -> &TailedSequence {
        &self.lengths
    }

    /// Centre `(a_i + b_i) / 2`.
    pub fn centre(&self) -> Result<TailedSequence, GeometryError> {
        Ok(self.lower.midpoint(&self.upper)?)
    }

    /// Certified product volume `prod_i (b_i - a_i)`.
    pub fn volume(&self, tol: f64) -> Result<MeasureValue, GeometryError> {
        Ok(crate::sequences::infinite_product(&self.lengths, tol)?)
    }

    /// `prod_{i <= d} (b_i - a_i)`, the finite-dimensional truncation.
    pub fn truncated_volume(&self, d: u64) -> f64 {
        let mut p = 1.0;
        for i in 1..=d {
            p *= self.lengths.term(i);
        }
        p
    }

    /// Volume of the coordinates beyond `d` only: `prod_{i > d} (b_i - a_i)`.
    pub fn volume_beyond(&self, d: u64, tol: f64) -> Result<MeasureValue, GeometryError> {
        Ok(infinite_product_beyond(&self.lengths, d, tol)?)
    }

    /// Translate by the sequence `x` (coordinatewise `[a_i + x_i, b_i + x_i]`).
    pub fn translate(&self, x: &TailedSequence) -> Result<Self, GeometryError> {
        // Each translated side has exactly its original length. Recomputing
        // `upper - lower` would round the cancellation `(b + x) - (a + x)`,
        // and a one-ulp residue on every side is enough to reclassify an
        // infinite product, so the validated lengths are carried over.
        Ok(Self {
            lower: self.lower.add(x)?,
            upper: self.upper.add(x)?,
            lengths: self.lengths.clone(),
        })
    }

    /// Coordinatewise intersection. Returns `Ok(None)` when some coordinate
    /// interval comes out empty (the boxes are disjoint).
    pub fn intersect(&self, other: &Self) -> Result<Option<Self>, GeometryError> {
        let lower = self.lower.max(&other.lower)?;
        let upper = self.upper.min(&other.upper)?;
        match Self::new(lower, upper) {
            Ok(p) => Ok(Some(p)),
            Err(GeometryError::NegativeLength { .. }) | Err(GeometryError::TailNegative { .. }) => {
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Smallest `N` such that every side with index `i >= N` has
    /// `|l_i - 1| < eps`. Requires a finite positive volume, which forces the
    /// side lengths to drift to 1.
    pub fn tail_deviation_index(&self, eps: f64) -> Result<u64, GeometryError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(GeometryError::InvalidParameter {
                reason: format!("eps must be positive, got {eps}"),
            });
        }
        match self.volume(DEFAULT_TOL)? {
            MeasureValue::Finite { .. } => {}
            other => {
                return Err(GeometryError::NotFinitePositive {
                    found: format!("{other:?}"),
                })
            }
        }
        let len = self.lengths.prefix_len();
        let last_prefix_violation = (1..=len)
            .rev()
            .find(|&i| (self.lengths.term(i) - 1.0).abs() >= eps);
        let tail_threshold = match self.lengths.tail() {
            // A finite positive volume forces constant/periodic tails to be
            // exactly 1 and drift tails to have base exactly 1.
            TailDescriptor::Constant(_) | TailDescriptor::Periodic(_) => 1,
            TailDescriptor::PowerDrift { a, p, .. } => crate::sequences::drift_below_index(
                a.abs(),
                &crate::sequences::DriftDecay::Power(*p),
                eps,
            ),
            TailDescriptor::GeometricDrift { a, q, .. } => crate::sequences::drift_below_index(
                a.abs(),
                &crate::sequences::DriftDecay::Geometric(q.abs()),
                eps,
            ),
            TailDescriptor::Opaque { .. } => {
                return Err(GeometryError::NotFinitePositive {
                    found: "opaque side lengths".into(),
                })
            }
        };
        if tail_threshold == u64::MAX {
            return Err(GeometryError::InvalidParameter {
                reason: "deviation index exceeds the materialization cap".into(),
            });
        }
        // The descriptor governs indices > len only.
        let from_tail = if tail_threshold > len { tail_threshold } else { 1 };
        Ok(from_tail
            .max(last_prefix_violation.map_or(1, |i| i + 1)))
    }

    /// `sup { rho(x, y) : x, y in the box } = sum_i 2^-i l_i / (1 + l_i)`,
    /// certified. Identical to the rho-distance between the corner sequences.
    pub fn rho_diameter(&self, tol: f64) -> Result<Certified, GeometryError> {
        Ok(rho_distance(&self.lower, &self.upper, tol)?)
    }

    /// Does this box contain `other`, coordinatewise? `Unknown` when a tail
    /// comparison is undecidable (opaque tails or mixed analytic kinds).
    pub fn contains_box(&self, other: &Self) -> Containment {
        let lower_ok = match other.lower.sub(&self.lower) {
            Ok(diff) => diff.negative_indices(1),
            Err(_) => Violations::Unknown,
        };
        let upper_ok = match self.upper.sub(&other.upper) {
            Ok(diff) => diff.negative_indices(1),
            Err(_) => Violations::Unknown,
        };
        match (&lower_ok, &upper_ok) {
            (Violations::None, Violations::None) => Containment::Yes,
            (Violations::Finite(_) | Violations::Infinite { .. }, _) => Containment::No,
            (_, Violations::Finite(_) | Violations::Infinite { .. }) => Containment::No,
            _ => Containment::Unknown,
        }
    }

    /// Is the point (sequence) `x` inside the box, coordinatewise?
    pub fn contains_point(&self, x: &TailedSequence) -> Containment {
        match Self::new(x.clone(), x.clone()) {
            Ok(degenerate) => self.contains_box(&degenerate),
            Err(_) => Containment::Unknown,
        }
    }
}

/// The standard two-slabs-per-coordinate cover of the boundary of the unit
/// cube: for `j = 1..=J`, a slab of thickness `2^-(j-1) * (eps/2)` around each
/// of the two faces `x_j = 0` and `x_j = 1` (each slab has thin side length
/// `2^-(j+1) * eps`). The 2J slab volumes sum to `eps * (1 - 2^-J)` exactly in
/// dyadic arithmetic.
pub fn boundary_cover(eps: f64, j_max: u32) -> Result<Vec<Parallelepiped>, GeometryError> {
    if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
        return Err(GeometryError::InvalidParameter {
            reason: format!("eps must lie in (0, 1], got {eps}"),
        });
    }
    if j_max == 0 {
        return Err(GeometryError::InvalidParameter {
            reason: "the cover needs at least one coordinate".into(),
        });
    }
    let mut slabs = Vec::with_capacity(2 * j_max as usize);
    for j in 1..=j_max {
        let half_thickness = eps * 2f64.powi(-(j as i32) - 2);
        for &(face_lo, face_hi) in &[(0.0f64, 0.0f64), (1.0f64, 1.0f64)] {
            let mut lo = vec![0.0; j as usize];
            let mut hi = vec![1.0; j as usize];
            lo[j as usize - 1] = face_lo - half_thickness;
            hi[j as usize - 1] = face_hi + half_thickness;
            let lower = TailedSequence::new(lo, TailDescriptor::Constant(0.0))?;
            let upper = TailedSequence::new(hi, TailDescriptor::Constant(1.0))?;
            slabs.push(Parallelepiped::new(lower, upper)?);
        }
    }
    Ok(slabs)
}

/// Outcome of certifying one candidate cover.
#[derive(Debug, Clone, Serialize)]
pub enum CoverOutcome {
    /// The cover contains every target element; `total` is the (pessimistic)
    /// sum of element volumes.
    Valid { total: f64 },
    Rejected { reason: String },
}

/// Result of a cover-based upper bound.
#[derive(Debug, Clone, Serialize)]
pub struct CoverEstimate {
    /// Minimum certified total over the valid covers.
    pub bound: f64,
    /// Index (into the supplied list) of the cover achieving the bound; ties
    /// resolve to the lowest index.
    pub cover_index: usize,
    /// The rho-diameter cap that was enforced, if any.
    pub cap: Option<f64>,
    /// Per-cover diagnostics in input order.
    pub per_cover: Vec<CoverOutcome>,
}

/// Upper bound on the measure of `targets` (a finite union of boxes) from
/// explicitly supplied countable-cover prefixes: the minimum over covers of
/// the summed element volumes, restricted to covers certified to contain
/// every target.
///
/// Containment certification uses two sufficient rules: (a) the target
/// element lies in a single cover element, or (b) the cover elements agree
/// with the target in all coordinates except one, where their intervals
/// jointly cover the target's interval. Covers whose containment cannot be
/// certified are rejected with a diagnostic rather than guessed at.
///
/// With `cap = Some(c)`, every cover element must have certified rho-diameter
/// at most `c` (the metric-outer-measure refinement); a violation is an error
/// naming the offending element.
pub fn cover_upper_bound(
    targets: &[Parallelepiped],
    covers: &[Vec<Parallelepiped>],
    cap: Option<f64>,
    tol: f64,
) -> Result<CoverEstimate, GeometryError> {
    if let Some(c) = cap {
        for (ci, cover) in covers.iter().enumerate() {
            for (ei, elem) in cover.iter().enumerate() {
                let diam = elem.rho_diameter(tol)?;
                if !(diam.upper() <= c) {
                    return Err(GeometryError::CapViolated {
                        cover: ci,
                        element: ei,
                    });
                }
            }
        }
    }
    let mut per_cover = Vec::with_capacity(covers.len());
    let mut best: Option<(f64, usize)> = None;
    for (ci, cover) in covers.iter().enumerate() {
        match certify_cover(targets, cover, tol) {
            Err(reason) => per_cover.push(CoverOutcome::Rejected { reason }),
            Ok(()) => {
                let mut sum = Kahan::new();
                let mut errs = Kahan::new();
                let mut rejected = None;
                for (ei, elem) in cover.iter().enumerate() {
                    match elem.volume(tol)? {
                        MeasureValue::Zero => {}
                        MeasureValue::Finite { value, err } => {
                            sum.add(value);
                            errs.add(err);
                        }
                        MeasureValue::Infinite => sum.add(f64::INFINITY),
                        MeasureValue::Undefined => {
                            rejected = Some(format!(
                                "element {ei} has undefined volume; cannot certify a total"
                            ));
                            break;
                        }
                    }
                }
                if let Some(reason) = rejected {
                    per_cover.push(CoverOutcome::Rejected { reason });
                    continue;
                }
                // When every contribution was exact the total is exact;
                // otherwise round the bound up by the summation slack.
                let mut total = sum.value() + errs.value();
                if !(sum.is_exact() && errs.value() == 0.0) {
                    total += sum.error_bound() + errs.error_bound();
                }
                per_cover.push(CoverOutcome::Valid { total });
                if best.is_none_or(|(b, _)| total < b) {
                    best = Some((total, ci));
                }
            }
        }
    }
    match best {
        Some((bound, cover_index)) => Ok(CoverEstimate {
            bound: bound.max(0.0),
            cover_index,
            cap,
            per_cover,
        }),
        None => Err(GeometryError::NoValidCover),
    }
}

/// Certifies that the union of `cover` contains every box in `targets`.
fn certify_cover(
    targets: &[Parallelepiped],
    cover: &[Parallelepiped],
    _tol: f64,
) -> Result<(), String> {
    'targets: for (ti, target) in targets.iter().enumerate() {
        // Rule (a): single-element containment.
        for elem in cover {
            if elem.contains_box(target) == Containment::Yes {
                continue 'targets;
            }
        }
        // Rule (b): elements that match the target in all coordinates but
        // one; their free intervals must cover the target's interval there.
        let mut split: Option<(u64, Vec<(f64, f64)>)> = None;
        for elem in cover {
            if let Some(k) = all_but_one_coordinate(elem, target) {
                let seg = (elem.lower().term(k), elem.upper().term(k));
                match &mut split {
                    None => split = Some((k, vec![seg])),
                    Some((k0, segs)) if *k0 == k => segs.push(seg),
                    _ => {
                        return Err(format!(
                            "target {ti}: cover elements split along different coordinates; containment undecided"
                        ))
                    }
                }
            }
        }
        if let Some((k, mut segs)) = split {
            let (a, b) = (target.lower().term(k), target.upper().term(k));
            segs.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut reach = a;
            for (lo, hi) in segs {
                if lo > reach {
                    break;
                }
                reach = reach.max(hi);
            }
            if reach >= b {
                continue 'targets;
            }
            return Err(format!(
                "target {ti}: intervals along coordinate {k} cover only up to {reach} < {b}"
            ));
        }
        return Err(format!(
            "target {ti}: no cover element contains it and no single-coordinate split applies"
        ));
    }
    Ok(())
}

/// If `elem` contains `target` in every coordinate except exactly one
/// explicit coordinate `k` (where anything may happen), returns `k`.
fn all_but_one_coordinate(elem: &Parallelepiped, target: &Parallelepiped) -> Option<u64> {
    let lower_diff = target.lower().sub(elem.lower()).ok()?;
    let upper_diff = elem.upper().sub(target.upper()).ok()?;
    let mut bad: Vec<u64> = Vec::new();
    for diff in [&lower_diff, &upper_diff] {
        match diff.negative_indices(3) {
            Violations::None => {}
            Violations::Finite(idx) => bad.extend(idx),
            _ => return None,
        }
    }
    bad.sort_unstable();
    bad.dedup();
    match bad.as_slice() {
        [k] => Some(*k),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::infinite_product;

    fn seq(prefix: Vec<f64>, tail: TailDescriptor) -> TailedSequence {
        TailedSequence::new(prefix, tail).expect("valid sequence")
    }

    fn unit_interval_box_with_upper(tail: TailDescriptor) -> Parallelepiped {
        Parallelepiped::new(TailedSequence::constant(0.0), seq(vec![], tail)).unwrap()
    }

    // ---- construction and volume ----

    #[test]
    fn unit_cube_volume_is_exactly_one() {
        let v = Parallelepiped::unit_cube().volume(1e-12).unwrap();
        assert_eq!(v, MeasureValue::Finite { value: 1.0, err: 0.0 });
    }

    #[test]
    fn half_side_cube_volume() {
        let p = Parallelepiped::new(
            seq(vec![0.0], TailDescriptor::Constant(0.0)),
            seq(vec![0.5], TailDescriptor::Constant(1.0)),
        )
        .unwrap();
        assert_eq!(
            p.volume(1e-12).unwrap(),
            MeasureValue::Finite { value: 0.5, err: 0.0 }
        );
    }

    #[test]
    fn shrinking_sides_give_zero_volume() {
        // l_i = 1/2 for all i.
        let p = Parallelepiped::new(TailedSequence::constant(0.0), TailedSequence::constant(0.5))
            .unwrap();
        assert_eq!(p.volume(1e-12).unwrap(), MeasureValue::Zero);
    }

    #[test]
    fn growing_sides_give_infinite_volume() {
        let p = Parallelepiped::new(TailedSequence::constant(0.0), TailedSequence::constant(2.0))
            .unwrap();
        assert_eq!(p.volume(1e-12).unwrap(), MeasureValue::Infinite);
    }

    #[test]
    fn oscillating_sides_give_undefined_volume() {
        let p = unit_interval_box_with_upper(TailDescriptor::Periodic(vec![0.5, 2.0]));
        assert_eq!(p.volume(1e-12).unwrap(), MeasureValue::Undefined);
    }

    #[test]
    fn degenerate_box_allowed_with_zero_volume() {
        let x = seq(vec![0.5], TailDescriptor::Constant(0.25));
        let p = Parallelepiped::new(x.clone(), x).unwrap();
        assert_eq!(p.volume(1e-12).unwrap(), MeasureValue::Zero);
    }

    #[test]
    fn inverted_bounds_rejected() {
        let e = Parallelepiped::new(TailedSequence::constant(1.0), TailedSequence::constant(0.0));
        assert!(matches!(e, Err(GeometryError::TailNegative { .. })));
        let e2 = Parallelepiped::new(
            seq(vec![0.0, 0.9], TailDescriptor::Constant(0.0)),
            seq(vec![1.0, 0.2], TailDescriptor::Constant(1.0)),
        );
        assert_eq!(e2.unwrap_err(), GeometryError::NegativeLength { index: 2 });
    }

    #[test]
    fn volume_matches_product_of_lengths() {
        let p = unit_interval_box_with_upper(TailDescriptor::geometric_drift(1.0, 0.5));
        let direct = infinite_product(p.lengths(), 1e-9).unwrap();
        assert_eq!(p.volume(1e-9).unwrap(), direct);
        let v = direct.finite_value().unwrap();
        assert!((v.value - 2.384231029).abs() < 1e-8);
    }

    // ---- truncation ----

    #[test]
    fn truncated_volume_partial_products() {
        let p = unit_interval_box_with_upper(TailDescriptor::geometric_drift(1.0, 0.5));
        assert_eq!(p.truncated_volume(0), 1.0);
        assert_eq!(p.truncated_volume(1), 1.5);
        assert_eq!(p.truncated_volume(2), 1.5 * 1.25);
        // Truncations converge towards the full volume from below here.
        let full = p.volume(1e-10).unwrap().finite_value().unwrap();
        assert!((p.truncated_volume(60) - full.value).abs() < 1e-9);
    }

    // ---- translation ----

    #[test]
    fn translation_preserves_volume_exactly_here() {
        let p = unit_interval_box_with_upper(TailDescriptor::geometric_drift(1.0, 0.5));
        let shifted = p.translate(&TailedSequence::constant(1.0)).unwrap();
        let v0 = p.volume(1e-9).unwrap().finite_value().unwrap();
        let v1 = shifted.volume(1e-9).unwrap().finite_value().unwrap();
        assert!((v0.value - v1.value).abs() <= v0.err + v1.err + 1e-15);
        // Classification invariance for the other classes.
        let z = Parallelepiped::new(TailedSequence::constant(0.0), TailedSequence::constant(0.5))
            .unwrap();
        assert_eq!(
            z.translate(&TailedSequence::constant(-3.0))
                .unwrap()
                .volume(1e-12)
                .unwrap(),
            MeasureValue::Zero
        );
    }

    #[test]
    fn translation_survives_bound_roundoff() {
        // The shifted bounds both round, and (b + x) - (a + x) lands one ulp
        // off 1; a recomputed length sequence would make the product diverge.
        let lower = TailedSequence::constant(0.38528894140963194);
        let unit_lengths = TailedSequence::constant(1.0);
        let p = Parallelepiped::new(lower.clone(), lower.add(&unit_lengths).unwrap()).unwrap();
        let x = seq(
            vec![],
            TailDescriptor::PowerDrift { base: 1.447715634476685, a: -0.72, p: 3.0 },
        );
        let moved = p.translate(&x).unwrap();
        assert_eq!(moved.lengths().term(7), 1.0);
        assert_eq!(
            moved.volume(1e-12).unwrap(),
            MeasureValue::Finite { value: 1.0, err: 0.0 }
        );
    }

    #[test]
    fn translation_outside_family_overflows() {
        let p = unit_interval_box_with_upper(TailDescriptor::geometric_drift(1.0, 0.5));
        let x = seq(vec![], TailDescriptor::power_drift(1.0, 2.0));
        assert!(matches!(
            p.translate(&x),
            Err(GeometryError::Sequence(SequenceError::RepresentationOverflow { .. }))
        ));
    }

    // ---- intersection ----

    #[test]
    fn intersect_unit_cubes_shifted_by_half() {
        // [-1/2, 1/2]^inf and [0, 1]^inf intersect in [0, 1/2]^inf.
        let c0 = Parallelepiped::new(TailedSequence::constant(-0.5), TailedSequence::constant(0.5))
            .unwrap();
        let c1 = Parallelepiped::unit_cube();
        let i = c0.intersect(&c1).unwrap().expect("boxes overlap");
        assert_eq!(i.lower().term(5), 0.0);
        assert_eq!(i.upper().term(5), 0.5);
        assert_eq!(i.volume(1e-12).unwrap(), MeasureValue::Zero);
    }

    #[test]
    fn intersect_disjoint_is_none() {
        let c0 = Parallelepiped::unit_cube();
        let c1 = Parallelepiped::new(TailedSequence::constant(2.0), TailedSequence::constant(3.0))
            .unwrap();
        assert_eq!(c0.intersect(&c1).unwrap(), None);
    }

    #[test]
    fn intersect_touching_at_a_face_is_degenerate_not_empty() {
        let c0 = Parallelepiped::new(TailedSequence::constant(0.0), TailedSequence::constant(0.5))
            .unwrap();
        let c1 = Parallelepiped::new(TailedSequence::constant(0.5), TailedSequence::constant(1.0))
            .unwrap();
        let i = c0.intersect(&c1).unwrap().expect("faces touch");
        assert_eq!(i.volume(1e-12).unwrap(), MeasureValue::Zero);
        assert_eq!(i.lower().term(1), 0.5);
        assert_eq!(i.upper().term(1), 0.5);
    }

    #[test]
    fn intersect_drift_against_cube() {
        // [0, 1 + 2^-i] with [1/4, 2]: lower = 1/4, upper = min(1 + 2^-i, 2).
        let p = unit_interval_box_with_upper(TailDescriptor::geometric_drift(1.0, 0.5));
        let q = Parallelepiped::new(TailedSequence::constant(0.25), TailedSequence::constant(2.0))
            .unwrap();
        let i = p.intersect(&q).unwrap().expect("overlap");
        for idx in 1..=30 {
            assert_eq!(i.lower().term(idx), 0.25);
            assert_eq!(
                i.upper().term(idx),
                (1.0 + 2f64.powi(-(idx as i32))).min(2.0)
            );
        }
    }

    // ---- deviation index ----

    #[test]
    fn deviation_index_unit_cube_is_one() {
        assert_eq!(
            Parallelepiped::unit_cube().tail_deviation_index(0.1).unwrap(),
            1
        );
    }

    #[test]
    fn deviation_index_geometric_drift() {
        // |l_i - 1| = 2^-i < 0.01 first holds for all i >= 7.
        let p = unit_interval_box_with_upper(TailDescriptor::geometric_drift(1.0, 0.5));
        assert_eq!(p.tail_deviation_index(0.01).unwrap(), 7);
    }

    #[test]
    fn deviation_index_respects_prefix_violations() {
        let p = Parallelepiped::new(
            seq(vec![0.0, 0.0, 0.0], TailDescriptor::Constant(0.0)),
            seq(vec![1.0, 5.0, 1.0], TailDescriptor::Constant(1.0)),
        )
        .unwrap();
        // Side 2 has length 5: the guarantee first holds from index 3.
        assert_eq!(p.tail_deviation_index(0.5).unwrap(), 3);
    }

    #[test]
    fn deviation_index_needs_finite_positive_volume() {
        let p = Parallelepiped::new(TailedSequence::constant(0.0), TailedSequence::constant(0.5))
            .unwrap();
        assert!(matches!(
            p.tail_deviation_index(0.1),
            Err(GeometryError::NotFinitePositive { .. })
        ));
    }

    /// Oracle for the side-lengths guarantee: check the analytic claim
    /// directly on a long window of indices.
    #[test]
    fn deviation_index_guarantee_holds_on_window() {
        let boxes = [
            unit_interval_box_with_upper(TailDescriptor::geometric_drift(0.9, 0.7)),
            unit_interval_box_with_upper(TailDescriptor::geometric_drift(-0.4, 0.25)),
            Parallelepiped::new(
                seq(vec![3.0, 0.2], TailDescriptor::Constant(0.0)),
                seq(vec![3.5, 0.9], TailDescriptor::geometric_drift(2.0, 0.5)),
            )
            .unwrap(),
        ];
        for (bi, b) in boxes.iter().enumerate() {
            for eps in [0.25, 0.01, 1e-6] {
                let n = b.tail_deviation_index(eps).unwrap();
                for i in n..n + 10_000 {
                    assert!(
                        (b.lengths().term(i) - 1.0).abs() < eps,
                        "box {bi}: index {i} violates eps={eps} despite N={n}"
                    );
                }
                if n > 1 {
                    // Minimality: index N-1 must violate (unless it is below
                    // the first index).
                    assert!(
                        (b.lengths().term(n - 1) - 1.0).abs() >= eps,
                        "box {bi}: N={n} not minimal for eps={eps}"
                    );
                }
            }
        }
    }

    // ---- rho diameter ----

    #[test]
    fn rho_diameter_unit_cube_is_half() {
        let d = Parallelepiped::unit_cube().rho_diameter(1e-12).unwrap();
        assert_eq!(d.value, 0.5);
    }

    #[test]
    fn rho_diameter_constant_three_sides() {
        let p = Parallelepiped::new(TailedSequence::constant(0.0), TailedSequence::constant(3.0))
            .unwrap();
        let d = p.rho_diameter(1e-12).unwrap();
        assert_eq!(d.value, 0.75); // 3 / (1 + 3)
    }

    #[test]
    fn rho_diameter_degenerate_box_is_zero() {
        let x = TailedSequence::constant(0.3);
        let p = Parallelepiped::new(x.clone(), x).unwrap();
        let d = p.rho_diameter(1e-12).unwrap();
        assert_eq!(d.value, 0.0);
    }

    // ---- containment ----

    #[test]
    fn containment_basic() {
        let cube = Parallelepiped::unit_cube();
        let small = Parallelepiped::new(
            TailedSequence::constant(0.25),
            TailedSequence::constant(0.75),
        )
        .unwrap();
        assert_eq!(cube.contains_box(&small), Containment::Yes);
        assert_eq!(small.contains_box(&cube), Containment::No);
        assert_eq!(cube.contains_point(&TailedSequence::constant(0.5)), Containment::Yes);
        assert_eq!(cube.contains_point(&TailedSequence::constant(1.5)), Containment::No);
    }

    // ---- boundary cover ----

    #[test]
    fn boundary_cover_volumes_sum_exactly() {
        for (eps, j) in [(1.0, 20u32), (0.5, 12), (0.25, 30)] {
            let slabs = boundary_cover(eps, j).unwrap();
            assert_eq!(slabs.len(), 2 * j as usize);
            let mut total = 0.0f64;
            for s in &slabs {
                match s.volume(1e-12).unwrap() {
                    MeasureValue::Finite { value, err } => {
                        assert_eq!(err, 0.0, "slab volumes are dyadic-exact");
                        total += value;
                    }
                    other => panic!("slab volume should be finite, got {other:?}"),
                }
            }
            let expected = eps * (1.0 - 2f64.powi(-(j as i32)));
            assert_eq!(total, expected, "eps={eps}, J={j}");
        }
    }

    #[test]
    fn boundary_cover_slabs_contain_face_points() {
        let slabs = boundary_cover(0.5, 6).unwrap();
        // A point on the face x_3 = 0.
        let face_point = seq(vec![0.3, 0.9, 0.0], TailDescriptor::Constant(0.5));
        let hit = slabs
            .iter()
            .any(|s| s.contains_point(&face_point) == Containment::Yes);
        assert!(hit, "face point must lie in one of the slabs");
    }

    // ---- cover upper bound ----

    #[test]
    fn cover_bound_unit_cube_self_cover() {
        let cube = Parallelepiped::unit_cube();
        let est = cover_upper_bound(
            std::slice::from_ref(&cube),
            &[vec![cube.clone()]],
            None,
            1e-12,
        )
        .unwrap();
        assert_eq!(est.bound, 1.0);
        assert_eq!(est.cover_index, 0);
    }

    #[test]
    fn cover_bound_picks_minimum_over_covers() {
        let cube = Parallelepiped::unit_cube();
        // Cover 0: the cube itself (total 1). Cover 1: two overlapping slabs
        // along coordinate 1 with totals 0.7 + 0.7 = 1.4.
        let slab = |a: f64, b: f64| {
            Parallelepiped::new(
                seq(vec![a], TailDescriptor::Constant(0.0)),
                seq(vec![b], TailDescriptor::Constant(1.0)),
            )
            .unwrap()
        };
        let est = cover_upper_bound(
            std::slice::from_ref(&cube),
            &[
                vec![cube.clone()],
                vec![slab(0.0, 0.7), slab(0.3, 1.0)],
            ],
            None,
            1e-12,
        )
        .unwrap();
        assert_eq!(est.bound, 1.0);
        assert_eq!(est.cover_index, 0);
        // The slab cover is certified (single-coordinate split), not rejected.
        assert!(matches!(est.per_cover[1], CoverOutcome::Valid { total } if (total - 1.4).abs() < 1e-12));
    }

    #[test]
    fn cover_bound_rejects_non_containing_cover() {
        let cube = Parallelepiped::unit_cube();
        let halfcube = Parallelepiped::new(
            TailedSequence::constant(0.0),
            seq(vec![0.5], TailDescriptor::Constant(1.0)),
        )
        .unwrap();
        let est = cover_upper_bound(
            std::slice::from_ref(&cube),
            &[vec![halfcube], vec![cube.clone()]],
            None,
            1e-12,
        )
        .unwrap();
        assert!(matches!(est.per_cover[0], CoverOutcome::Rejected { .. }));
        assert_eq!(est.bound, 1.0);
        assert_eq!(est.cover_index, 1);
        // All covers rejected => error.
        let bad = cover_upper_bound(
            std::slice::from_ref(&cube),
            &[vec![]],
            None,
            1e-12,
        );
        assert!(matches!(bad, Err(GeometryError::NoValidCover)));
    }

    #[test]
    fn cover_bound_boundary_slabs_report_exact_total() {
        let slabs = boundary_cover(0.5, 10).unwrap();
        let est = cover_upper_bound(&slabs, &[slabs.clone()], None, 1e-12).unwrap();
        assert_eq!(est.bound, 0.5 * (1.0 - 2f64.powi(-10)));
    }

    #[test]
    fn cover_bound_never_below_contained_target_volume() {
        // Soundness: a single target contained in each cover element keeps
        // the bound at or above its own volume.
        let target = Parallelepiped::new(
            TailedSequence::constant(0.25),
            TailedSequence::constant(0.75),
        )
        .unwrap(); // volume Zero
        let cube = Parallelepiped::unit_cube();
        let est = cover_upper_bound(
            std::slice::from_ref(&target),
            &[vec![cube]],
            None,
            1e-12,
        )
        .unwrap();
        assert!(est.bound >= 0.0);
    }

    #[test]
    fn cover_cap_violation_is_reported() {
        let cube = Parallelepiped::unit_cube(); // rho-diameter 1/2
        let err = cover_upper_bound(
            std::slice::from_ref(&cube),
            &[vec![cube.clone()]],
            Some(0.25),
            1e-12,
        );
        assert_eq!(
            err.unwrap_err(),
            GeometryError::CapViolated { cover: 0, element: 0 }
        );
        // A generous cap passes.
        let ok = cover_upper_bound(
            std::slice::from_ref(&cube),
            &[vec![cube.clone()]],
            Some(0.75),
            1e-12,
        );
        assert!(ok.is_ok());
    }
}
