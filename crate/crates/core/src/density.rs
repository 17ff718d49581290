//! Cores of parallelepipeds, density sequences along shrinking nested
//! families, the one-dimensional oscillating-average example, and the
//! quantitative certificate that densities along cube families vanish off the
//! cores.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::function::{weight_abs_tail_sum, CylinderBody, FunctionError, ProductFunction};
use crate::numeric::Kahan;
use crate::parallelepiped::{Containment, GeometryError, MeasureValue, Parallelepiped};
use crate::sequences::{SequenceError, TailedSequence, Violations, WINDOW_CAP};

/// Exact dyadic rationals for the one-dimensional worked example.
pub type Dyadic = Ratio<i128>;

/// Certified products below this threshold back a zero-density verdict.
pub const ZERO_CERTIFICATE_THRESHOLD: f64 = 1e-10;

/// Number of trailing stages that must agree for a `Converged` verdict.
pub const CONVERGENCE_WINDOW: usize = 8;

/// Depth used for core-membership checks made on the caller's behalf.
pub const DEFAULT_CORE_DEPTH: u64 = 4096;

const VIOLATION_LIST_CAP: usize = 4096;
const WITNESS_SCAN_CAP: u64 = 100_000;
const MAX_UNION_SIZE: usize = 16;
const TRUNCATED_FALLBACK_DEPTH: u64 = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error("base volume must be finite and positive, found {found}")]
    NotFiniteBase { found: String },
    #[error("precondition violated: {reason}")]
    PreconditionViolated { reason: String },
    #[error("core membership undecidable for cover element {index}")]
    CoreMembershipUnknown { index: usize },
    #[error("no continuity modulus is available for this function class")]
    NoModulus,
}

fn is_representation_overflow(e: &DensityError) -> bool {
    matches!(
        e,
        DensityError::Sequence(SequenceError::RepresentationOverflow { .. })
            | DensityError::Geometry(GeometryError::Sequence(
                SequenceError::RepresentationOverflow { .. }
            ))
    )
}

// ---------------------------------------------------------------------------
// Cores
// ---------------------------------------------------------------------------

/// The `delta`-core of a parallelepiped: points whose coordinates eventually
/// stay within the centrally rescaled sides `delta * l_i / 2` of the centre.
/// `delta = 1` gives back the parent parallelepiped.
#[derive(Debug, Clone)]
pub struct CoreSpec {
    base: Parallelepiped,
    delta: f64,
}

impl CoreSpec {
    pub fn new(base: Parallelepiped, delta: f64, tol: f64) -> Result<Self, DensityError> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(DensityError::PreconditionViolated {
                reason: format!("delta must lie in [0, 1], got {delta}"),
            });
        }
        match base.volume(tol)? {
            MeasureValue::Finite { .. } => Ok(Self { base, delta }),
            other => Err(DensityError::NotFiniteBase {
                found: format!("{other:?}"),
            }),
        }
    }

    pub fn base(&self) -> &Parallelepiped {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Outcome of the bounded-depth core membership test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InCore {
    Yes,
    No,
    Unknown(u64),
}

/// Volume of the core truncated to the first `d` coordinates, with the first
/// `big_d` sides left at full length: `prod_{i<=D} l_i * prod_{D<i<=d}
/// delta*l_i`.
pub fn core_truncated_volume(
    spec: &CoreSpec,
    big_d: u64,
    d: u64,
) -> Result<f64, DensityError> {
    if d <= big_d {
        return Err(DensityError::PreconditionViolated {
            reason: format!("need d > D, got d={d}, D={big_d}"),
        });
    }
    let lens = spec.base.lengths();
    let mut acc = 1.0f64;
    for i in 1..=big_d {
        acc *= lens.term(i);
    }
    for i in big_d + 1..=d {
        acc *= spec.delta * lens.term(i);
    }
    Ok(acc)
}

/// Decides membership of `x` in the core analytically: Yes when all
/// violations of `|x_i - c_i| <= delta*l_i/2` are certified to stop by
/// `depth`; No when infinitely many coordinates are certified to violate;
/// Unknown otherwise (opaque tails, incompatible descriptors, or violations
/// past `depth`).
pub fn in_core(x: &TailedSequence, spec: &CoreSpec, depth: u64) -> InCore {
    let unknown = InCore::Unknown(depth);
    let centre = match spec.base.centre() {
        Ok(c) => c,
        Err(_) => return unknown,
    };
    // h1 = (c + (delta/2) L) - x and h2 = x - (c - (delta/2) L): membership
    // beyond D means both are non-negative beyond D.
    let half = spec.delta / 2.0;
    let hi = match TailedSequence::affine_combine(&centre, 1.0, spec.base.lengths(), half, 0.0) {
        Ok(s) => s,
        Err(_) => return unknown,
    };
    let lo = match TailedSequence::affine_combine(&centre, 1.0, spec.base.lengths(), -half, 0.0) {
        Ok(s) => s,
        Err(_) => return unknown,
    };
    let h1 = match hi.sub(x) {
        Ok(s) => s,
        Err(_) => return unknown,
    };
    let h2 = match x.sub(&lo) {
        Ok(s) => s,
        Err(_) => return unknown,
    };
    let mut last_violation = 0u64;
    for h in [h1, h2] {
        match h.negative_indices(VIOLATION_LIST_CAP) {
            Violations::None => {}
            Violations::Finite(list) => {
                if list.len() >= VIOLATION_LIST_CAP {
                    return unknown; // possibly truncated
                }
                last_violation = last_violation.max(*list.last().expect("non-empty"));
            }
            Violations::Infinite { .. } => return InCore::No,
            Violations::Unknown => return unknown,
        }
    }
    if last_violation <= depth {
        InCore::Yes
    } else {
        unknown
    }
}

// ---------------------------------------------------------------------------
// Shrinking families
// ---------------------------------------------------------------------------

/// Nested family of parallelepipeds about the centre of a base: stage `m`
/// shrinks sides `1..=m` centrally by the factor `eta` and leaves the rest,
/// so stage volumes are `eta^m` times the base volume and shrink to zero.
#[derive(Debug, Clone)]
pub struct ShrinkFamily {
    base: Parallelepiped,
    centre: TailedSequence,
    eta: f64,
}

impl ShrinkFamily {
    pub fn new(base: Parallelepiped, eta: f64) -> Result<Self, DensityError> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(DensityError::PreconditionViolated {
                reason: format!("shrink factor must lie in (0, 1), got {eta}"),
            });
        }
        let centre = base.centre()?;
        Ok(Self { base, centre, eta })
    }

    pub fn base(&self) -> &Parallelepiped {
        &self.base
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// The stage-`m` parallelepiped (stage 0 is the base itself).
    pub fn stage(&self, m: u64) -> Result<Parallelepiped, DensityError> {
        if m > WINDOW_CAP {
            return Err(DensityError::PreconditionViolated {
                reason: format!("stage {m} exceeds the representable prefix cap"),
            });
        }
        let lower = self.base.lower().with_prefix_len(m);
        let upper = self.base.upper().with_prefix_len(m);
        let mut lp = lower.prefix().to_vec();
        let mut up = upper.prefix().to_vec();
        let lens = self.base.lengths();
        for i in 0..m as usize {
            let c = self.centre.term(i as u64 + 1);
            let half = 0.5 * self.eta * lens.term(i as u64 + 1);
            lp[i] = c - half;
            up[i] = c + half;
        }
        Ok(Parallelepiped::new(
            TailedSequence::new(lp, lower.tail().clone())?,
            TailedSequence::new(up, upper.tail().clone())?,
        )?)
    }

    /// `eta^m` times the base volume, in closed form.
    pub fn closed_form_stage_volume(&self, m: u64, tol: f64) -> Result<MeasureValue, DensityError> {
        let factor = self.eta.powi(m as i32);
        Ok(match self.base.volume(tol)? {
            MeasureValue::Finite { value, err } => MeasureValue::Finite {
                value: value * factor,
                err: err * factor + 2.0 * f64::EPSILON * value * factor,
            },
            other => other,
        })
    }
}

// ---------------------------------------------------------------------------
// Density sequences
// ---------------------------------------------------------------------------

/// What gets averaged along the family: a finite union of parallelepipeds
/// (the set's indicator) or a closed-form-integrable function.
#[derive(Debug, Clone, Copy)]
pub enum Integrand<'a> {
    SetUnion(&'a [Parallelepiped]),
    Function(&'a ProductFunction),
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRow {
    pub stage: u64,
    pub volume: f64,
    pub average: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DensityVerdict {
    Converged(f64),
    Oscillating { liminf: f64, limsup: f64 },
    ZeroCertificate { witness_coordinates: Vec<u64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub stages: Vec<StageRow>,
    pub verdict: DensityVerdict,
    /// False when any row fell back to a truncated, non-certified estimate.
    pub certified: bool,
    pub notes: Vec<String>,
}

/// Averages the integrand over the shrinking family and classifies the
/// behaviour of the sequence of averages.
pub fn density_sequence(
    integrand: Integrand<'_>,
    fam: &ShrinkFamily,
    stages: u64,
    tol: f64,
) -> Result<DensityReport, DensityError> {
    if stages == 0 {
        return Err(DensityError::PreconditionViolated {
            reason: "need at least one stage".into(),
        });
    }
    match fam.base.volume(tol)? {
        MeasureValue::Finite { .. } => {}
        other => {
            return Err(DensityError::NotFiniteBase {
                found: format!("{other:?}"),
            })
        }
    }
    if let Integrand::SetUnion(sets) = integrand {
        if sets.len() > MAX_UNION_SIZE {
            return Err(DensityError::PreconditionViolated {
                reason: format!(
                    "union of {} sets exceeds the inclusion-exclusion cap {MAX_UNION_SIZE}",
                    sets.len()
                ),
            });
        }
    }
    let mut rows = Vec::with_capacity(stages as usize);
    let mut certified = true;
    let mut notes = Vec::new();
    for m in 1..=stages {
        let stage_box = fam.stage(m)?;
        let stage_vol = match stage_box.volume(tol)? {
            MeasureValue::Finite { value, err } => (value, err),
            other => {
                return Err(DensityError::NotFiniteBase {
                    found: format!("stage {m} volume is {other:?}"),
                })
            }
        };
        let (average, err) = match integrand {
            Integrand::Function(f) => {
                let c = f.mean_over_box(&stage_box, tol)?;
                (c.value, c.err)
            }
            Integrand::SetUnion(sets) => match union_average(sets, &stage_box, stage_vol, tol) {
                Ok(pair) => pair,
                Err(e) if is_representation_overflow(&e) => {
                    certified = false;
                    notes.push(format!(
                        "stage {m}: descriptor algebra overflow; truncated estimate at depth {TRUNCATED_FALLBACK_DEPTH}"
                    ));
                    truncated_union_average(sets, &stage_box, TRUNCATED_FALLBACK_DEPTH)
                }
                Err(e) => return Err(e),
            },
        };
        rows.push(StageRow {
            stage: m,
            volume: stage_vol.0,
            average,
            err,
        });
    }
    let verdict = classify(&rows, integrand, fam, tol)?;
    Ok(DensityReport {
        stages: rows,
        verdict,
        certified,
        notes,
    })
}

/// Inclusion-exclusion average of a finite union's indicator over a stage.
fn union_average(
    sets: &[Parallelepiped],
    stage: &Parallelepiped,
    stage_vol: (f64, f64),
    tol: f64,
) -> Result<(f64, f64), DensityError> {
    let n = sets.len();
    let mut sum = Kahan::new();
    let mut errs = Kahan::new();
    for mask in 1u32..(1u32 << n) {
        let mut inter = Some(stage.clone());
        for (j, set) in sets.iter().enumerate() {
            if mask & (1 << j) == 0 {
                continue;
            }
            inter = match inter {
                Some(cur) => cur.intersect(set)?,
                None => None,
            };
        }
        let Some(inter) = inter else { continue };
        let (v, e) = match inter.volume(tol)? {
            MeasureValue::Zero => (0.0, 0.0),
            MeasureValue::Finite { value, err } => (value, err),
            other => {
                return Err(DensityError::NotFiniteBase {
                    found: format!("intersection volume is {other:?}"),
                })
            }
        };
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        sum.add(sign * v);
        errs.add(e);
    }
    let (vol, vol_err) = stage_vol;
    let average = sum.value() / vol;
    let err = (errs.value() + sum.error_bound() + average.abs() * vol_err)
        / (vol - vol_err).max(f64::MIN_POSITIVE);
    Ok((average, err))
}

/// Depth-truncated fallback when the descriptor algebra cannot represent an
/// intersection: ratios of truncated volumes, flagged non-certified.
fn truncated_union_average(sets: &[Parallelepiped], stage: &Parallelepiped, depth: u64) -> (f64, f64) {
    let n = sets.len();
    let mut sum = 0.0f64;
    for mask in 1u32..(1u32 << n) {
        let mut v = 1.0f64;
        for i in 1..=depth {
            let mut lo = stage.lower().term(i);
            let mut hi = stage.upper().term(i);
            for (j, set) in sets.iter().enumerate() {
                if mask & (1 << j) == 0 {
                    continue;
                }
                lo = lo.max(set.lower().term(i));
                hi = hi.min(set.upper().term(i));
            }
            v *= (hi - lo).max(0.0);
            if v == 0.0 {
                break;
            }
        }
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * v;
    }
    let stage_trunc = stage.truncated_volume(depth);
    (sum / stage_trunc, f64::NAN)
}

fn classify(
    rows: &[StageRow],
    integrand: Integrand<'_>,
    fam: &ShrinkFamily,
    tol: f64,
) -> Result<DensityVerdict, DensityError> {
    let last = rows.last().expect("at least one stage");
    if last.average.abs() + last.err < ZERO_CERTIFICATE_THRESHOLD {
        let witness_coordinates = match integrand {
            Integrand::SetUnion(sets) => {
                let final_stage = fam.stage(last.stage)?;
                zero_witnesses(sets, &final_stage).unwrap_or_default()
            }
            Integrand::Function(_) => Vec::new(),
        };
        return Ok(DensityVerdict::ZeroCertificate {
            witness_coordinates,
        });
    }
    let window = &rows[rows.len().saturating_sub(CONVERGENCE_WINDOW)..];
    let lo = window.iter().map(|r| r.average).fold(f64::INFINITY, f64::min);
    let hi = window
        .iter()
        .map(|r| r.average)
        .fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= tol {
        Ok(DensityVerdict::Converged(last.average))
    } else {
        Ok(DensityVerdict::Oscillating {
            liminf: lo,
            limsup: hi,
        })
    }
}

/// Finite evidence for a zero average: per-coordinate overlap ratios of the
/// stage with each set, scanned until the product of the sub-unit factors
/// drops below the certificate threshold (shared across the union).
fn zero_witnesses(sets: &[Parallelepiped], stage: &Parallelepiped) -> Option<Vec<u64>> {
    if sets.is_empty() {
        return Some(Vec::new());
    }
    let per_set = ZERO_CERTIFICATE_THRESHOLD / sets.len() as f64;
    let mut all = Vec::new();
    for set in sets {
        let mut product = 1.0f64;
        let mut coords = Vec::new();
        let mut reached = false;
        for i in 1..=WITNESS_SCAN_CAP {
            let s_lo = stage.lower().term(i);
            let s_hi = stage.upper().term(i);
            let width = s_hi - s_lo;
            if width <= 0.0 {
                // Degenerate stage side: ratio conventionally 1.
                continue;
            }
            let ov = (s_hi.min(set.upper().term(i)) - s_lo.max(set.lower().term(i))).max(0.0);
            let ratio = ov / width;
            if ratio < 1.0 {
                coords.push(i);
                product *= ratio;
            }
            if product < per_set {
                reached = true;
                break;
            }
        }
        if !reached {
            return None;
        }
        all.extend(coords);
    }
    all.sort_unstable();
    all.dedup();
    Some(all)
}

// ---------------------------------------------------------------------------
// One-dimensional oscillating example
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationRow {
    pub k: u32,
    /// Averaging interval `[-2^-k, 2^-k]`.
    pub radius: Dyadic,
    pub average: Dyadic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    /// Integral of the indicator over `[0, 1]`: exactly 2/3.
    pub integral_unit: Dyadic,
    /// Average over `[-1, 1]`: exactly 1/3.
    pub normalized_symmetric: Dyadic,
    pub rows: Vec<OscillationRow>,
    pub liminf: Dyadic,
    pub limsup: Dyadic,
}

impl OscillationReport {
    pub fn verdict(&self) -> DensityVerdict {
        if self.liminf == self.limsup {
            DensityVerdict::Converged(self.liminf.to_f64().expect("small rational"))
        } else {
            DensityVerdict::Oscillating {
                liminf: self.liminf.to_f64().expect("small rational"),
                limsup: self.limsup.to_f64().expect("small rational"),
            }
        }
    }
}

/// Averages of the indicator of `U_{n even} (2^-(n+1), 2^-n]` over the
/// symmetric intervals `[-2^-k, 2^-k]`, `k = 1..m_max`, in exact rational
/// arithmetic. The averages alternate between 1/3 (even `k`) and 1/6 (odd
/// `k`), so the symmetric density at 0 does not exist.
pub fn oscillating_density_1d(m_max: u32) -> Result<OscillationReport, DensityError> {
    if m_max == 0 {
        return Err(DensityError::PreconditionViolated {
            reason: "need m_max >= 1".into(),
        });
    }
    if m_max > 50 {
        return Err(DensityError::PreconditionViolated {
            reason: "m_max above 50 overflows the exact dyadic arithmetic".into(),
        });
    }
    // Mass of the union inside [0, 2^-k]: the surviving intervals are those
    // with even n >= k, a geometric series of ratio 1/4 summing to
    // (2/3)*2^-k for even k and (1/3)*2^-k for odd k.
    let mass = |k: u32| -> Dyadic {
        let scale = Dyadic::new(1, 1i128 << k);
        if k.is_multiple_of(2) {
            Dyadic::new(2, 3) * scale
        } else {
            Dyadic::new(1, 3) * scale
        }
    };
    let rows: Vec<OscillationRow> = (1..=m_max)
        .map(|k| {
            let radius = Dyadic::new(1, 1i128 << k);
            // Average over [-2^-k, 2^-k], length 2^(1-k).
            let average = mass(k) / (Dyadic::from_integer(2) * radius);
            OscillationRow { k, radius, average }
        })
        .collect();
    let liminf = rows.iter().map(|r| r.average).min().expect("non-empty");
    let limsup = rows.iter().map(|r| r.average).max().expect("non-empty");
    Ok(OscillationReport {
        integral_unit: mass(0),
        normalized_symmetric: mass(0) / Dyadic::from_integer(2),
        rows,
        liminf,
        limsup,
    })
}

// ---------------------------------------------------------------------------
// Overlap bound and the non-density certificate
// ---------------------------------------------------------------------------

/// Length of the intersection of a unit interval, centred at distance
/// `offset` from the centre of an interval of length `l`, in the regime `l in
/// [7/8, 9/8]`, `offset >= l/4` fixed by the eps = 1/8 construction. Always
/// at most 25/32.
pub fn overlap_bound(l: f64, offset: f64) -> Result<f64, DensityError> {
    if !(0.875..=1.125).contains(&l) {
        return Err(DensityError::PreconditionViolated {
            reason: format!("side length {l} outside [7/8, 9/8]"),
        });
    }
    if !(offset.is_finite() && offset >= l / 4.0) {
        return Err(DensityError::PreconditionViolated {
            reason: format!("offset {offset} below l/4 = {}", l / 4.0),
        });
    }
    let lo = (offset - 0.5).max(-l / 2.0);
    let hi = (offset + 0.5).min(l / 2.0);
    let len = (hi - lo).max(0.0);
    debug_assert!(len <= 25.0 / 32.0 + 1e-12);
    Ok(len)
}

/// For a point certified outside the 1/2-core of every element of a finite
/// support cover, certifies that the unit cube centred at the point meets
/// each element in a set of vanishing truncated volume, so averages of
/// functions supported in the cover are zero along any family inside that
/// cube. Rows are per cover element: `volume` is the truncated intersection
/// bound where the scan stopped.
pub fn non_density_check(
    support_cover: &[Parallelepiped],
    x: &TailedSequence,
    tol: f64,
) -> Result<DensityReport, DensityError> {
    let c1 = Parallelepiped::cube_at(x, 1.0)?;
    let mut rows = Vec::with_capacity(support_cover.len());
    let mut witnesses: Vec<u64> = Vec::new();
    let mut certified = true;
    let mut notes = Vec::new();
    for (j, pi) in support_cover.iter().enumerate() {
        let spec = CoreSpec::new(pi.clone(), 0.5, tol)?;
        match in_core(x, &spec, DEFAULT_CORE_DEPTH) {
            InCore::Yes => {
                return Err(DensityError::PreconditionViolated {
                    reason: format!("x lies in the 1/2-core of cover element {j}"),
                })
            }
            InCore::Unknown(_) => return Err(DensityError::CoreMembershipUnknown { index: j }),
            InCore::No => {}
        }
        let mut product = 1.0f64;
        let mut coords = Vec::new();
        let mut reached = false;
        for i in 1..=WITNESS_SCAN_CAP {
            let ov = (c1.upper().term(i).min(pi.upper().term(i))
                - c1.lower().term(i).max(pi.lower().term(i)))
            .max(0.0);
            // The cube's side has length 1, so the overlap is the ratio.
            if ov < 1.0 {
                coords.push(i);
                product *= ov;
            }
            if product < ZERO_CERTIFICATE_THRESHOLD {
                reached = true;
                break;
            }
        }
        if !reached {
            certified = false;
            notes.push(format!(
                "cover element {j}: truncated overlap stayed at {product} within the scan cap"
            ));
        }
        rows.push(StageRow {
            stage: j as u64,
            volume: product,
            average: 0.0,
            err: product,
        });
        witnesses.extend(coords);
    }
    witnesses.sort_unstable();
    witnesses.dedup();
    let verdict = if certified {
        DensityVerdict::ZeroCertificate {
            witness_coordinates: witnesses,
        }
    } else {
        let residual = rows.iter().map(|r| r.volume).fold(0.0, f64::max);
        DensityVerdict::Converged(residual)
    };
    Ok(DensityReport {
        stages: rows,
        verdict,
        certified,
        notes,
    })
}

// ---------------------------------------------------------------------------
// Lebesgue points at continuity points
// ---------------------------------------------------------------------------

/// A neighbourhood on which the function provably stays within `eps` of its
/// value at the point, so averages of `|f - f(x)|` over sub-parallelepipeds
/// of positive volume are below `eps`.
#[derive(Debug, Clone)]
pub struct LebesgueCertificate {
    pub neighbourhood: Parallelepiped,
    /// Bound on `sup |f(y) - f(x)|` over the neighbourhood.
    pub sup_deviation: f64,
    pub eps: f64,
    pub f_at_x: f64,
}

/// Builds the certificate from the function class's own modulus of
/// continuity: exact weight-sum bounds for linear tails, gradient bounds for
/// polynomial cylinders, local constancy margins for indicators and step
/// functions.
pub fn lebesgue_point_at_continuity(
    f: &ProductFunction,
    x: &TailedSequence,
    eps: f64,
) -> Result<LebesgueCertificate, DensityError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(DensityError::PreconditionViolated {
            reason: format!("eps must be positive, got {eps}"),
        });
    }
    let tol = eps.min(1e-9);
    let fx = f.evaluate(x, tol)?.value;
    let certificate = |side: f64, sup_deviation: f64| -> Result<LebesgueCertificate, DensityError> {
        Ok(LebesgueCertificate {
            neighbourhood: Parallelepiped::cube_at(x, side)?,
            sup_deviation,
            eps,
            f_at_x: fx,
        })
    };
    match f {
        ProductFunction::LinearTail { weights, .. } => {
            let w = weight_abs_tail_sum(weights, 0)?.upper();
            if w == 0.0 {
                return certificate(1.0, 0.0);
            }
            // |f(y) - f(x)| <= (side/2) * sum |w_i| on a cube of that side.
            let side = 1.9 * eps / w;
            certificate(side, 0.5 * side * w)
        }
        ProductFunction::Cylinder { support, body } => match body {
            CylinderBody::Polynomial(ms) => {
                // Gradient bound on the cube of side 1 about x.
                let bounds: Vec<f64> = support
                    .iter()
                    .map(|&j| x.term(j).abs() + 0.5)
                    .collect();
                let mut lipschitz = 0.0f64;
                for m in ms {
                    for (slot, &e) in m.exponents.iter().enumerate() {
                        if e == 0 {
                            continue;
                        }
                        let mut partial = m.coeff.abs() * e as f64;
                        for (s2, &e2) in m.exponents.iter().enumerate() {
                            let p = if s2 == slot { e2 - 1 } else { e2 };
                            partial *= bounds[s2].max(1.0).powi(p as i32);
                        }
                        lipschitz += partial;
                    }
                }
                if lipschitz == 0.0 {
                    return certificate(1.0, 0.0);
                }
                let side = (1.9 * eps / lipschitz).min(1.0);
                certificate(side, 0.5 * side * lipschitz)
            }
            CylinderBody::WeightedBoxes(bs) => {
                // Locally constant away from every cell boundary.
                let mut margin = f64::INFINITY;
                for b in bs {
                    for (slot, &j) in support.iter().enumerate() {
                        let xi = x.term(j);
                        let (lo, hi) = b.cell[slot];
                        for edge in [lo, hi] {
                            let dist = (xi - edge).abs();
                            if dist == 0.0 {
                                return Err(DensityError::NoModulus);
                            }
                            margin = margin.min(dist);
                        }
                    }
                }
                if !margin.is_finite() {
                    return certificate(1.0, 0.0);
                }
                certificate(margin, 0.0)
            }
            CylinderBody::Opaque(_) => Err(DensityError::NoModulus),
        },
        ProductFunction::Indicator { set: None, .. } => certificate(1.0, 0.0),
        ProductFunction::Indicator { set: Some(b), .. } => match b.contains_point(x) {
            Containment::Yes => {
                // Interior margin: inf over coordinates of the distance to
                // either face, certified from the difference descriptors.
                let m1 = x.sub(b.lower()).map_err(|_| DensityError::NoModulus)?;
                let m2 = b.upper().sub(x).map_err(|_| DensityError::NoModulus)?;
                let inf1 = m1.range_beyond(0).ok_or(DensityError::NoModulus)?.0;
                let inf2 = m2.range_beyond(0).ok_or(DensityError::NoModulus)?.0;
                let margin = inf1.min(inf2);
                if margin <= 0.0 {
                    return Err(DensityError::NoModulus);
                }
                certificate(margin, 0.0)
            }
            Containment::No => {
                // Exterior margin at some certified-outside coordinate.
                let mut gap = 0.0f64;
                for i in 1..=WITNESS_SCAN_CAP {
                    let g =
                        (b.lower().term(i) - x.term(i)).max(x.term(i) - b.upper().term(i));
                    if g > gap {
                        gap = g;
                    }
                    if gap > 0.0 && i > x.prefix_len().max(b.lower().prefix_len()) {
                        break;
                    }
                }
                if gap <= 0.0 {
                    return Err(DensityError::NoModulus);
                }
                certificate(gap, 0.0)
            }
            Containment::Unknown => Err(DensityError::NoModulus),
        },
        ProductFunction::Opaque { .. } => Err(DensityError::NoModulus),
    }
}
