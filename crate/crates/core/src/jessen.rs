//! Integration along the tail of the unit cube: closed-form tail integrals
//! `f_d`, convergence diagnostics as `d` grows, Monte Carlo cross-checks,
//! the slowly-oscillating class, sigma-finite support covers, and the
//! impossibility certificate for continuous densities.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::function::{
    truncate_weights, unit_clip_length, unit_interval_moment, weight_tail_sum, CylinderBody,
    FunctionError, Monomial, ProductFunction, WeightedBox,
};
use crate::numeric::{sum_is_exact, Certified, Kahan};
use crate::parallelepiped::{Containment, GeometryError, MeasureValue, Parallelepiped};
use crate::sequences::{
    infinite_product_beyond, SequenceError, TailDescriptor, TailedSequence,
};

/// Tolerance used internally where an operation needs a certified infinite
/// product or series and exposes no tolerance parameter.
pub const DEFAULT_TOL: f64 = 1e-12;

/// 99% two-sided normal quantile, used for Monte Carlo confidence intervals.
pub const Z_99: f64 = 2.5758293035489004;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JessenError {
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("tail integration is closed-form only; opaque functions go through Monte Carlo")]
    OpaqueUnsupported,
    #[error("cylinder coordinate {coordinate} lies beyond depth {depth} and its body cannot be integrated in closed form")]
    CylinderBeyondD { coordinate: u64, depth: u64 },
    #[error("the function value at the proposed point is {value}, not certified positive")]
    NotPositiveAt { value: f64 },
    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
}

/// The tail integral `f_d` of a function on the unit cube: all coordinates
/// beyond `d` integrated against uniform-on-[0,1]. Keeps the source function,
/// so deeper-to-shallower refinement re-derives canonically and composes
/// bit-for-bit.
#[derive(Debug, Clone)]
pub struct TailIntegral {
    source: ProductFunction,
    d: u64,
    f_d: ProductFunction,
    /// Sup-norm bound on the difference between `f_d`'s stored representation
    /// and the true tail integral (nonzero only when an infinite product or
    /// series in the derivation carried certified error).
    sup_err: f64,
}

impl TailIntegral {
    pub fn depth(&self) -> u64 {
        self.d
    }

    /// The materialized `f_d`, a function of the first `d` coordinates only.
    pub fn function(&self) -> &ProductFunction {
        &self.f_d
    }

    pub fn source(&self) -> &ProductFunction {
        &self.source
    }

    pub fn sup_err(&self) -> f64 {
        self.sup_err
    }

    pub fn is_exact(&self) -> bool {
        self.sup_err == 0.0
    }

    /// Integrate further down to `d1 <= d`. Derivation is canonical (from the
    /// stored source), so `refine(d1)` equals `tail_integrate(source, d1)`
    /// exactly; for the closed classes the same result is obtained by
    /// integrating the materialized `f_d` directly.
    pub fn refine(&self, d1: u64) -> Result<TailIntegral, JessenError> {
        if d1 > self.d {
            return Err(JessenError::InvalidParameter {
                reason: format!("refinement depth {d1} exceeds current depth {}", self.d),
            });
        }
        tail_integrate(&self.source, d1)
    }

    /// Certified value of `f_d` at a point (the representation's own
    /// evaluation error plus the derivation error bound).
    pub fn evaluate(&self, x: &TailedSequence, tol: f64) -> Result<Certified, JessenError> {
        let v = self.f_d.evaluate(x, tol)?;
        Ok(Certified::new(v.value, v.err + self.sup_err))
    }
}

/// Closed-form tail integration over coordinates `> d`. Exact on the three
/// closed classes (cylinders, linear tails, indicators); opaque functions are
/// rejected here and served by [`mc_tail_integrate`].
pub fn tail_integrate(f: &ProductFunction, d: u64) -> Result<TailIntegral, JessenError> {
    let (f_d, sup_err) = derive_tail_integral(f, d)?;
    Ok(TailIntegral {
        source: f.clone(),
        d,
        f_d,
        sup_err,
    })
}

fn derive_tail_integral(
    f: &ProductFunction,
    d: u64,
) -> Result<(ProductFunction, f64), JessenError> {
    match f {
        ProductFunction::Cylinder { support, body } => {
            if support.iter().all(|&j| j <= d) {
                return Ok((f.clone(), 0.0));
            }
            let keep: Vec<usize> = (0..support.len()).filter(|&k| support[k] <= d).collect();
            // Excess coordinates are integrated out by sequential scalar
            // multiplication in descending index order; this makes direct and
            // staged integration produce identical floating-point results.
            let excess: Vec<usize> = (0..support.len())
                .rev()
                .filter(|&k| support[k] > d)
                .collect();
            let new_support: Vec<u64> = keep.iter().map(|&k| support[k]).collect();
            match body {
                CylinderBody::Polynomial(ms) => {
                    let mut sup_err = 0.0;
                    let new_ms = ms
                        .iter()
                        .map(|m| {
                            let mut acc = Certified::exact(m.coeff);
                            for &k in &excess {
                                acc = acc.mul(&unit_interval_moment(m.exponents[k]));
                            }
                            sup_err += acc.err;
                            Monomial::new(
                                acc.value,
                                keep.iter().map(|&k| m.exponents[k]).collect(),
                            )
                        })
                        .collect();
                    Ok((
                        ProductFunction::Cylinder {
                            support: new_support,
                            body: CylinderBody::Polynomial(new_ms),
                        },
                        sup_err,
                    ))
                }
                CylinderBody::WeightedBoxes(bs) => {
                    let mut sup_err = 0.0;
                    let new_bs = bs
                        .iter()
                        .map(|b| {
                            let mut acc = Certified::exact(b.weight);
                            for &k in &excess {
                                let (lo, hi) = b.cell[k];
                                acc = acc.mul(&Certified::exact(unit_clip_length(lo, hi)));
                            }
                            sup_err += acc.err;
                            WeightedBox::new(
                                acc.value,
                                keep.iter().map(|&k| b.cell[k]).collect(),
                            )
                        })
                        .collect();
                    Ok((
                        ProductFunction::Cylinder {
                            support: new_support,
                            body: CylinderBody::WeightedBoxes(new_bs),
                        },
                        sup_err,
                    ))
                }
                CylinderBody::Opaque(_) => Err(JessenError::CylinderBeyondD {
                    coordinate: support[*excess.first().expect("nonempty")],
                    depth: d,
                }),
            }
        }
        ProductFunction::LinearTail { offset, weights } => {
            // f_d = offset + sum_{i<=d} w_i x_i + (1/2) sum_{i>d} w_i.
            let tail = weight_tail_sum(weights, d)?;
            let shift = tail.scale(0.5);
            let new_offset = offset + shift.value;
            let mut sup_err = shift.err;
            if !sum_is_exact(*offset, shift.value) {
                sup_err += 2.0 * f64::EPSILON * new_offset.abs();
            }
            Ok((
                ProductFunction::LinearTail {
                    offset: new_offset,
                    weights: truncate_weights(weights, d)?,
                },
                sup_err,
            ))
        }
        ProductFunction::Indicator { set: None, .. } => Ok((f.clone(), 0.0)),
        ProductFunction::Indicator { set: Some(b), scale } => {
            let lens = b.lengths();
            // Find the first index E >= d beyond which every side length is
            // exactly 1 (then the far factor is exactly 1); otherwise fall
            // back to a certified infinite product for the far factor.
            let far_start = exact_unit_tail_start(lens).map(|e| e.max(d));
            let (mut acc, far_from) = match far_start {
                Some(e) => (Certified::exact(1.0), e),
                None => {
                    let from = d.max(lens.prefix_len());
                    match infinite_product_beyond(lens, from, DEFAULT_TOL)? {
                        MeasureValue::Zero => {
                            return Ok((ProductFunction::constant(0.0), 0.0));
                        }
                        MeasureValue::Finite { value, err } => (Certified::new(value, err), from),
                        other => {
                            return Err(JessenError::Function(
                                FunctionError::UncertifiableTail {
                                    reason: format!("tail volume factor is {other:?}"),
                                },
                            ))
                        }
                    }
                }
            };
            // Explicit factors for indices (d, far_from], descending.
            for i in (d + 1..=far_from).rev() {
                acc = acc.mul(&Certified::exact(lens.term(i)));
            }
            let weight = acc.scale(*scale);
            if weight.value == 0.0 && weight.err == 0.0 {
                return Ok((ProductFunction::constant(0.0), 0.0));
            }
            let support: Vec<u64> = (1..=d).collect();
            let cell: Vec<(f64, f64)> = (1..=d)
                .map(|i| (b.lower().term(i), b.upper().term(i)))
                .collect();
            Ok((
                ProductFunction::Cylinder {
                    support,
                    body: CylinderBody::WeightedBoxes(vec![WeightedBox::new(
                        weight.value,
                        cell,
                    )]),
                },
                weight.err,
            ))
        }
        ProductFunction::Opaque { .. } => Err(JessenError::OpaqueUnsupported),
    }
}

/// If every side length with index `> E` is exactly 1 (and is described so,
/// not merely drifting there), returns the smallest such `E`.
fn exact_unit_tail_start(lens: &TailedSequence) -> Option<u64> {
    let all_one_beyond = match lens.tail() {
        TailDescriptor::Constant(c) => *c == 1.0,
        TailDescriptor::Periodic(cycle) => cycle.iter().all(|&v| v == 1.0),
        _ => false,
    };
    if !all_one_beyond {
        return None;
    }
    let mut e = lens.prefix_len();
    while e > 0 && lens.term(e) == 1.0 {
        e -= 1;
    }
    Some(e)
}

/// One row of a convergence series: the tail integral at depth `d` evaluated
/// at the point, against the function's own value there.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub d: u64,
    pub f_d_at_x: Certified,
    pub gap: f64,
    pub gap_err: f64,
}

/// Evaluates `f_d(x)` for each requested depth and reports the gap to
/// `f(x)`.
pub fn jessen_convergence(
    f: &ProductFunction,
    x: &TailedSequence,
    d_list: &[u64],
    tol: f64,
) -> Result<(Certified, Vec<ConvergenceRow>), JessenError> {
    let fx = f.evaluate(x, tol)?;
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let ti = tail_integrate(f, d)?;
        let v = ti.evaluate(x, tol)?;
        rows.push(ConvergenceRow {
            d,
            f_d_at_x: v,
            gap: (v.value - fx.value).abs(),
            gap_err: v.err + fx.err,
        });
    }
    Ok((fx, rows))
}

/// A seeded Monte Carlo estimate with a 99% normal-approximation interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub truncation_depth: u64,
}

impl McEstimate {
    pub fn ci_contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

const MC_CHUNK: u64 = 4096;

/// Monte Carlo oracle for the tail integral: coordinates `1..=d` fixed from
/// `x_prefix`, coordinates `d+1..=truncation_depth` sampled uniformly, all
/// deeper coordinates pinned at 1/2. Deterministic for a fixed seed
/// regardless of thread count (per-chunk counter-mode streams merged in
/// order).
pub fn mc_tail_integrate(
    f: &ProductFunction,
    x_prefix: &[f64],
    d: u64,
    n_samples: u64,
    seed: u64,
    truncation_depth: u64,
) -> Result<McEstimate, JessenError> {
    if n_samples == 0 {
        return Err(JessenError::InvalidParameter {
            reason: "need at least one sample".into(),
        });
    }
    if (x_prefix.len() as u64) < d {
        return Err(JessenError::InvalidParameter {
            reason: format!("prefix supplies {} coordinates, depth is {d}", x_prefix.len()),
        });
    }
    if truncation_depth < d {
        return Err(JessenError::InvalidParameter {
            reason: format!("truncation depth {truncation_depth} below d={d}"),
        });
    }
    let evaluator = sample_evaluator(f, truncation_depth)?;
    let base: Vec<f64> = x_prefix[..d as usize].to_vec();
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk + 1);
            let count = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let mut buf = vec![0.0f64; truncation_depth as usize];
            buf[..d as usize].copy_from_slice(&base);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                for slot in buf[d as usize..].iter_mut() {
                    *slot = rng.random::<f64>();
                }
                let v = evaluator(&buf);
                sum += v;
                sumsq += v * v;
            }
            (sum, sumsq)
        })
        .collect();
    let mut sum = Kahan::new();
    let mut sumsq = Kahan::new();
    for (s, s2) in partials {
        sum.add(s);
        sumsq.add(s2);
    }
    let n = n_samples as f64;
    let mean = sum.value() / n;
    let variance = ((sumsq.value() / n) - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    let std_error = (variance / n).sqrt();
    let half = Z_99 * std_error;
    Ok(McEstimate {
        mean,
        std_error,
        ci_low: mean - half,
        ci_high: mean + half,
        n_samples,
        seed,
        truncation_depth,
    })
}

/// A closure evaluating a function on one sampled coordinate buffer.
type SampleFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Builds the per-sample evaluator once, hoisting everything that does not
/// depend on the sampled coordinates.
fn sample_evaluator(
    f: &ProductFunction,
    truncation_depth: u64,
) -> Result<SampleFn, JessenError> {
    let t = truncation_depth;
    match f {
        ProductFunction::Cylinder { support, body } => {
            let support = support.clone();
            let body = body.clone();
            Ok(Box::new(move |buf: &[f64]| {
                let coords: Vec<f64> = support
                    .iter()
                    .map(|&j| {
                        if j <= buf.len() as u64 {
                            buf[(j - 1) as usize]
                        } else {
                            0.5
                        }
                    })
                    .collect();
                body_value(&body, &coords)
            }))
        }
        ProductFunction::LinearTail { offset, weights } => {
            let w: Vec<f64> = (1..=t).map(|i| weights.term(i)).collect();
            let rest = offset + 0.5 * weight_tail_sum(weights, t)?.value;
            Ok(Box::new(move |buf: &[f64]| {
                let mut acc = 0.0;
                for (wi, xi) in w.iter().zip(buf) {
                    acc += wi * xi;
                }
                acc + rest
            }))
        }
        ProductFunction::Indicator { set: None, .. } => Ok(Box::new(|_| 0.0)),
        ProductFunction::Indicator { set: Some(b), scale } => {
            let lo: Vec<f64> = (1..=t).map(|i| b.lower().term(i)).collect();
            let hi: Vec<f64> = (1..=t).map(|i| b.upper().term(i)).collect();
            let tail_ok = match (b.lower().range_beyond(t), b.upper().range_beyond(t)) {
                (Some((_, lo_sup)), Some((hi_inf, _))) => lo_sup <= 0.5 && 0.5 <= hi_inf,
                _ => return Err(JessenError::Function(FunctionError::MembershipUndecidable)),
            };
            let scale = *scale;
            Ok(Box::new(move |buf: &[f64]| {
                if !tail_ok {
                    return 0.0;
                }
                for ((&x, &l), &h) in buf.iter().zip(&lo).zip(&hi) {
                    if x < l || x > h {
                        return 0.0;
                    }
                }
                scale
            }))
        }
        ProductFunction::Opaque { eval, .. } => {
            let eval: Arc<dyn Fn(&TailedSequence) -> f64 + Send + Sync> = Arc::clone(eval);
            Ok(Box::new(move |buf: &[f64]| {
                let x = TailedSequence::new(buf.to_vec(), TailDescriptor::Constant(0.5))
                    .expect("uniform samples are finite");
                eval(&x)
            }))
        }
    }
}

fn body_value(body: &CylinderBody, coords: &[f64]) -> f64 {
    match body {
        CylinderBody::Polynomial(ms) => ms
            .iter()
            .map(|m| {
                let mut t = m.coeff;
                for (&x, &e) in coords.iter().zip(&m.exponents) {
                    if e > 0 {
                        t *= x.powi(e as i32);
                    }
                }
                t
            })
            .sum(),
        CylinderBody::WeightedBoxes(bs) => bs
            .iter()
            .filter(|b| {
                coords
                    .iter()
                    .zip(&b.cell)
                    .all(|(&x, &(lo, hi))| lo <= x && x <= hi)
            })
            .map(|b| b.weight)
            .sum(),
        CylinderBody::Opaque(eval) => eval(coords),
    }
}

/// Consistency of finite-depth and full integrals.
#[derive(Debug, Clone, Serialize)]
pub struct FubiniReport {
    pub d: u64,
    pub integral_truncated: Certified,
    pub integral_full: Certified,
    pub difference: f64,
}

/// `int_{I^d} f_d` against `int_{I^inf} f`, both in closed form.
pub fn fubini_check(f: &ProductFunction, d: u64, tol: f64) -> Result<FubiniReport, JessenError> {
    let ti = tail_integrate(f, d)?;
    let lhs = ti.function().mean_unit_cube(tol)?;
    let lhs = Certified::new(lhs.value, lhs.err + ti.sup_err());
    let rhs = f.mean_unit_cube(tol)?;
    Ok(FubiniReport {
        d,
        integral_truncated: lhs,
        integral_full: rhs,
        difference: (lhs.value - rhs.value).abs(),
    })
}

/// Result of probing the slowly-oscillating condition at depth `d`.
#[derive(Debug, Clone, Serialize)]
pub enum SoscVerdict {
    /// No sampled or constructed pair with a shared `d`-prefix exceeded
    /// `eps`.
    PassAt { d: u64 },
    /// A concrete pair with a shared `d`-prefix differs by more than `eps`.
    FailWitness {
        gap: f64,
        x_label: String,
        y_label: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SoscReport {
    pub d: u64,
    pub eps: f64,
    pub n_pairs: u64,
    /// Largest |f(x) - f(y)| observed over pairs with equal d-prefix; a lower
    /// bound on the true fibre oscillation.
    pub sampled_sup: f64,
    /// Closed-form upper bound on the fibre oscillation, when the function's
    /// class provides one.
    pub certified_bound: Option<f64>,
    pub verdict: SoscVerdict,
}

/// Samples pairs agreeing on the first `d` coordinates (plus deterministic
/// extreme pairs with all-0 and all-1 tails) and compares `f` across each
/// pair.
pub fn slowly_oscillating_test(
    f: &ProductFunction,
    eps: f64,
    d: u64,
    n_pairs: u64,
    seed: u64,
    truncation_depth: u64,
) -> Result<SoscReport, JessenError> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(JessenError::InvalidParameter {
            reason: format!("eps must be non-negative, got {eps}"),
        });
    }
    if truncation_depth < d {
        return Err(JessenError::InvalidParameter {
            reason: "truncation depth below d".into(),
        });
    }
    let mut best: Option<(f64, String, String)> = None;
    let mut consider = |gap: f64, xl: String, yl: String| {
        if best.as_ref().is_none_or(|(g, _, _)| gap > *g) {
            best = Some((gap, xl, yl));
        }
    };

    // Constructed extreme pairs: shared prefix at the cube centre, tails
    // all-0 versus all-1 (and each extreme against the centre tail).
    let prefix: Vec<f64> = vec![0.5; d as usize];
    let mk = |tail: f64| {
        TailedSequence::new(prefix.clone(), TailDescriptor::Constant(tail))
            .expect("valid point")
    };
    let extremes = [(mk(0.0), "tail all-0"), (mk(1.0), "tail all-1"), (mk(0.5), "tail all-1/2")];
    for i in 0..extremes.len() {
        for j in i + 1..extremes.len() {
            let (xi, li) = &extremes[i];
            let (xj, lj) = &extremes[j];
            let fx = f.evaluate(xi, DEFAULT_TOL)?;
            let fy = f.evaluate(xj, DEFAULT_TOL)?;
            let gap = (fx.value - fy.value).abs();
            consider(gap, (*li).to_string(), (*lj).to_string());
        }
    }

    // Random pairs with a shared random prefix.
    let evaluator = sample_evaluator(f, truncation_depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bufx = vec![0.0f64; truncation_depth as usize];
    let mut bufy = vec![0.0f64; truncation_depth as usize];
    for pair in 0..n_pairs {
        for i in 0..d as usize {
            let v = rng.random::<f64>();
            bufx[i] = v;
            bufy[i] = v;
        }
        for i in d as usize..truncation_depth as usize {
            bufx[i] = rng.random::<f64>();
            bufy[i] = rng.random::<f64>();
        }
        let gap = (evaluator(&bufx) - evaluator(&bufy)).abs();
        consider(gap, format!("sampled pair {pair} (x)"), format!("sampled pair {pair} (y)"));
    }

    let (sampled_sup, x_label, y_label) = best.unwrap_or((0.0, String::new(), String::new()));
    let verdict = if sampled_sup > eps {
        SoscVerdict::FailWitness {
            gap: sampled_sup,
            x_label,
            y_label,
        }
    } else {
        SoscVerdict::PassAt { d }
    };
    Ok(SoscReport {
        d,
        eps,
        n_pairs,
        sampled_sup,
        certified_bound: f.oscillation_bound(d),
        verdict,
    })
}

/// The bounded function `x -> limsup_i x_i`, readable from the descriptor.
/// It changes with the tail alone, so it oscillates maximally along every
/// prefix fibre — the standard witness outside the slowly-oscillating class.
pub fn limsup_function() -> ProductFunction {
    ProductFunction::opaque_bounded(
        "limsup of the coordinates",
        Arc::new(|x: &TailedSequence| match x.tail() {
            TailDescriptor::Constant(c) => *c,
            TailDescriptor::PowerDrift { base, .. }
            | TailDescriptor::GeometricDrift { base, .. } => *base,
            TailDescriptor::Periodic(cycle) => {
                cycle.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            TailDescriptor::Opaque { .. } => f64::NAN,
        }),
        1.0,
    )
}

/// Super-level-set bound (and cover, where representable) at one level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub n: u64,
    pub level: f64,
    /// Chebyshev bound on the super-level set's measure: `n * int f`.
    pub chebyshev_bound: f64,
    /// Exact measure of the represented super-level set, when available.
    pub exact_measure: Option<f64>,
    /// Whether an explicit finite box cover of the super-level set is
    /// attached (its boxes, as first-coordinates cells times a full tail).
    #[serde(skip)]
    pub cover: Option<Vec<Parallelepiped>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportCoverReport {
    pub total_integral: Certified,
    pub nonnegativity_certified: bool,
    pub rows: Vec<LevelRow>,
}

const MAX_ARRANGEMENT_CELLS: usize = 100_000;

/// For a non-negative `f` with unit integral, bounds the measure of each
/// super-level set `{f > 1/n}` by `n` (Chebyshev) and attaches an explicit
/// parallelepiped cover where the class makes the set representable
/// (indicators and step-function cylinders).
pub fn sigma_finite_support_cover(
    f: &ProductFunction,
    n_levels: u64,
    tol: f64,
) -> Result<SupportCoverReport, JessenError> {
    if n_levels == 0 {
        return Err(JessenError::InvalidParameter {
            reason: "need at least one level".into(),
        });
    }
    let total = f.mean_unit_cube(tol)?;
    if (total.value - 1.0).abs() > total.err + 1e-9 {
        return Err(JessenError::InvalidParameter {
            reason: format!("integral is {}, expected 1", total.value),
        });
    }
    let nonnegativity_certified = match f {
        ProductFunction::Indicator { scale, .. } => *scale >= 0.0,
        ProductFunction::Cylinder {
            body: CylinderBody::WeightedBoxes(bs),
            ..
        } => bs.iter().all(|b| b.weight >= 0.0),
        _ => false,
    };
    let mut rows = Vec::with_capacity(n_levels as usize);
    for n in 1..=n_levels {
        let level = 1.0 / n as f64;
        let chebyshev_bound = n as f64 * total.upper();
        let (exact_measure, cover, note) = super_level_cover(f, level, tol)?;
        rows.push(LevelRow {
            n,
            level,
            chebyshev_bound,
            exact_measure,
            cover,
            note,
        });
    }
    Ok(SupportCoverReport {
        total_integral: total,
        nonnegativity_certified,
        rows,
    })
}

#[allow(clippy::type_complexity)]
fn super_level_cover(
    f: &ProductFunction,
    level: f64,
    tol: f64,
) -> Result<(Option<f64>, Option<Vec<Parallelepiped>>, Option<String>), JessenError> {
    match f {
        ProductFunction::Indicator { set: None, .. } => Ok((Some(0.0), Some(Vec::new()), None)),
        ProductFunction::Indicator { set: Some(b), scale } => {
            if *scale > level {
                let measure = match b.volume(tol)? {
                    MeasureValue::Zero => 0.0,
                    MeasureValue::Finite { value, .. } => value,
                    other => {
                        return Err(JessenError::Function(FunctionError::UncertifiableTail {
                            reason: format!("support volume is {other:?}"),
                        }))
                    }
                };
                Ok((Some(measure), Some(vec![b.clone()]), None))
            } else {
                Ok((Some(0.0), Some(Vec::new()), None))
            }
        }
        ProductFunction::Cylinder { support, body } => match body {
            CylinderBody::WeightedBoxes(bs) => {
                step_super_level(support, bs, level).map(|(m, c)| (Some(m), Some(c), None))
            }
            _ => Ok((
                None,
                None,
                Some("super-level set not box-representable for this body".into()),
            )),
        },
        _ => Ok((
            None,
            None,
            Some("super-level set not box-representable for this class".into()),
        )),
    }
}

/// Exact super-level set of a step-function cylinder: an arrangement over the
/// cells' coordinate breakpoints, assembled into elementary boxes.
fn step_super_level(
    support: &[u64],
    boxes: &[WeightedBox],
    level: f64,
) -> Result<(f64, Vec<Parallelepiped>), JessenError> {
    let k = support.len();
    let mut breaks: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (slot, br) in breaks.iter_mut().enumerate() {
        br.push(0.0);
        br.push(1.0);
        for b in boxes {
            let (lo, hi) = b.cell[slot];
            if lo > 0.0 && lo < 1.0 {
                br.push(lo);
            }
            if hi > 0.0 && hi < 1.0 {
                br.push(hi);
            }
        }
        br.sort_by(f64::total_cmp);
        br.dedup();
    }
    let cells_total: usize = breaks.iter().map(|b| b.len() - 1).product();
    if cells_total > MAX_ARRANGEMENT_CELLS {
        return Err(JessenError::InvalidParameter {
            reason: format!("arrangement of {cells_total} cells exceeds the cap"),
        });
    }
    let mut measure = Kahan::new();
    let mut cover = Vec::new();
    let mut index = vec![0usize; k];
    loop {
        // Elementary cell and its midpoint.
        let mut widths = 1.0f64;
        let mut mid = Vec::with_capacity(k);
        let mut cell = Vec::with_capacity(k);
        for (slot, &i) in index.iter().enumerate() {
            let (a, b) = (breaks[slot][i], breaks[slot][i + 1]);
            widths *= b - a;
            mid.push(0.5 * (a + b));
            cell.push((a, b));
        }
        let value = body_value(&CylinderBody::WeightedBoxes(boxes.to_vec()), &mid);
        if value > level && widths > 0.0 {
            measure.add(widths);
            let max_coord = *support.last().unwrap_or(&0);
            let mut lo = vec![0.0; max_coord as usize];
            let mut hi = vec![1.0; max_coord as usize];
            for (slot, &j) in support.iter().enumerate() {
                lo[(j - 1) as usize] = cell[slot].0;
                hi[(j - 1) as usize] = cell[slot].1;
            }
            cover.push(Parallelepiped::new(
                TailedSequence::new(lo, TailDescriptor::Constant(0.0))?,
                TailedSequence::new(hi, TailDescriptor::Constant(1.0))?,
            )?);
        }
        // Advance the mixed-radix index.
        let mut slot = 0;
        loop {
            if slot == k {
                return Ok((measure.value(), cover));
            }
            index[slot] += 1;
            if index[slot] < breaks[slot].len() - 1 {
                break;
            }
            index[slot] = 0;
            slot += 1;
        }
    }
}

/// Evidence that one candidate unit cube misses a point of the target box.
#[derive(Debug, Clone, Serialize)]
pub struct EscapeRow {
    pub cube_index: usize,
    pub coordinate: u64,
    pub target_interval: (f64, f64),
    pub cube_interval: (f64, f64),
    pub point_coordinate: f64,
}

#[derive(Debug, Clone)]
pub struct EscapeReport {
    /// A single point of the target outside every supplied cube.
    pub point: TailedSequence,
    pub rows: Vec<EscapeRow>,
}

const ESCAPE_SCAN_CAP: u64 = 10_000;

/// For a target box with side lengths exceeding 1 in infinitely many
/// coordinates, exhibits one point of the target that escapes every cube in
/// any finite list of boxes with sides at most 1 — the reason no countable
/// union of finite covers by unit cubes can contain it.
pub fn unit_cube_escape_witness(
    target: &Parallelepiped,
    cubes: &[Parallelepiped],
) -> Result<EscapeReport, JessenError> {
    for (ci, c) in cubes.iter().enumerate() {
        let side_ok = match c.lengths().range_beyond(0) {
            Some((_, sup)) => sup <= 1.0,
            None => false,
        };
        if !side_ok {
            return Err(JessenError::InvalidParameter {
                reason: format!("cube {ci} has a side longer than 1 (or an opaque side)"),
            });
        }
    }
    // Pick one distinct wide coordinate per cube.
    let mut rows = Vec::with_capacity(cubes.len());
    let mut overrides: Vec<(u64, f64)> = Vec::new();
    let mut next = 1u64;
    for (ci, c) in cubes.iter().enumerate() {
        let coord = loop {
            if next > ESCAPE_SCAN_CAP {
                return Err(JessenError::InvalidParameter {
                    reason: format!(
                        "found only {ci} coordinates with target side exceeding 1 within the scan cap"
                    ),
                });
            }
            let i = next;
            next += 1;
            if target.lengths().term(i) > 1.0 {
                break i;
            }
        };
        let (ta, tb) = (target.lower().term(coord), target.upper().term(coord));
        let (ca, cb) = (c.lower().term(coord), c.upper().term(coord));
        // The target interval is longer than the cube's, so one of its
        // endpoints lies outside.
        let p = if tb > cb { tb } else { ta };
        debug_assert!(p > cb || p < ca);
        rows.push(EscapeRow {
            cube_index: ci,
            coordinate: coord,
            target_interval: (ta, tb),
            cube_interval: (ca, cb),
            point_coordinate: p,
        });
        overrides.push((coord, p));
    }
    let deepest = overrides.iter().map(|&(i, _)| i).max().unwrap_or(0);
    let centre = target.centre()?.with_prefix_len(deepest);
    let mut prefix = centre.prefix().to_vec();
    for &(i, p) in &overrides {
        prefix[(i - 1) as usize] = p;
    }
    let point = TailedSequence::new(prefix, centre.tail().clone())?;
    // Sanity: the point stays in the target and escapes every cube.
    if target.contains_point(&point) != Containment::Yes {
        return Err(JessenError::InvalidParameter {
            reason: "escape point left the target (degenerate target bounds)".into(),
        });
    }
    for (ci, c) in cubes.iter().enumerate() {
        if c.contains_point(&point) != Containment::No {
            return Err(JessenError::InvalidParameter {
                reason: format!("escape point not certified outside cube {ci}"),
            });
        }
    }
    Ok(EscapeReport { point, rows })
}

/// A claimed continuity neighbourhood: `|f(y) - f(x0)| < f(x0)/2` whenever
/// `y_i` lies in `(lower[i], upper[i])` for `i <= depth` (no constraint on
/// deeper coordinates).
#[derive(Debug, Clone)]
pub struct ContinuityModulus {
    pub depth: u64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub enum ContradictionCertificate {
    /// The modulus and the unit integral cannot both hold: the claimed
    /// neighbourhood is a finite-dimensional box times an unconstrained tail,
    /// whose translation-invariant measure is infinite, so the integral of
    /// `f` over it would be at least `(f(x0)/2) * infinity > 1`.
    InfiniteMass {
        f_at_x0: f64,
        base_volume: f64,
        statement: String,
    },
    /// The modulus itself is false: a concrete point in the claimed
    /// neighbourhood where `|f(y) - f(x0)| >= f(x0)/2`.
    ModulusRefuted {
        f_at_x0: f64,
        f_at_witness: f64,
        witness_coordinate: u64,
        statement: String,
    },
}

/// Certifies that no function with unit integral over the ambient product
/// space can satisfy the supplied continuity modulus at a point of positive
/// value: either the modulus is refuted pointwise, or it implies infinite
/// mass.
pub fn continuous_density_contradiction(
    f: &ProductFunction,
    x0: &TailedSequence,
    modulus: &ContinuityModulus,
    tol: f64,
) -> Result<ContradictionCertificate, JessenError> {
    if modulus.lower.len() as u64 != modulus.depth || modulus.upper.len() as u64 != modulus.depth
    {
        return Err(JessenError::InvalidParameter {
            reason: "modulus bound arity differs from its depth".into(),
        });
    }
    let fx0 = f.evaluate(x0, tol)?;
    if !(fx0.lower() > 0.0) {
        return Err(JessenError::NotPositiveAt { value: fx0.value });
    }
    let mut base_volume = 1.0f64;
    for i in 0..modulus.depth as usize {
        let (lo, hi) = (modulus.lower[i], modulus.upper[i]);
        if !(lo < hi) {
            return Err(JessenError::InvalidParameter {
                reason: format!("modulus interval {i} is empty"),
            });
        }
        let xi = x0.term(i as u64 + 1);
        if !(lo < xi && xi < hi) {
            return Err(JessenError::InvalidParameter {
                reason: format!("x0 is outside the claimed neighbourhood at coordinate {}", i + 1),
            });
        }
        base_volume *= hi - lo;
    }
    // Indicator-type functions are refuted directly: a point matching x0 on
    // the constrained coordinates but outside the support along one deep
    // coordinate has f = 0.
    if let ProductFunction::Indicator { set: Some(b), .. } = f {
        let j = modulus.depth.max(x0.prefix_len()).max(b.upper().prefix_len()) + 1;
        let outside = b.upper().term(j) + 1.0;
        let mut prefix = x0.with_prefix_len(j).prefix().to_vec();
        prefix[(j - 1) as usize] = outside;
        let witness = TailedSequence::new(prefix, x0.tail().clone())?;
        let fw = f.evaluate(&witness, tol)?;
        if (fw.value - fx0.value).abs() >= fx0.value / 2.0 {
            return Ok(ContradictionCertificate::ModulusRefuted {
                f_at_x0: fx0.value,
                f_at_witness: fw.value,
                witness_coordinate: j,
                statement: format!(
                    "the claimed neighbourhood leaves coordinate {j} unconstrained, but moving it to {outside} drops f from {} to {}; the modulus is the inconsistent ingredient",
                    fx0.value, fw.value
                ),
            });
        }
    }
    Ok(ContradictionCertificate::InfiniteMass {
        f_at_x0: fx0.value,
        base_volume,
        statement: format!(
            "integrating f over the claimed neighbourhood gives at least (f(x0)/2) * volume = {} * (base {base_volume} * unbounded tail) = infinity, contradicting a unit integral",
            fx0.value / 2.0
        ),
    })
}
