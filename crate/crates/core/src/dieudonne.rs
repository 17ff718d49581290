//! Mechanical block-construction campaign: stage-by-stage selection of minimal
//! block sizes whose closed-form product measures land in prescribed windows,
//! with every inequality of the induction re-checked into a machine-readable
//! ledger.
//!
//! The driving sequence is `a_j = c / ((j + s) · ln²(j + s))`. A stage consumes
//! successive terms; each row chooses the smallest integer `p` such that with
//! `t = ln(β/a)` and `side = 1 − t/p`:
//!
//! * `side > 1/2`,
//! * `side^p ≥ a/(2β)` (the upper bound `side^p ≤ a/β` holds automatically
//!   because `(1 − t/p)^p` increases to `e^(−t) = a/β`), and
//! * the two-term measure `side^p + t·side^(p−1)` lies in
//!   `[½·(a/β)·ln(1/a), 2·(a/β)·ln(1/a)]`.
//!
//! The row's stopping contribution is `δ = β·(side^p + t·side^(p−1))`, the
//! running remainder is `β_r = 1 − Σδ` (an exact telescoping identity), and a
//! stage ends at the first row where `Σδ` crosses the stopping level. Because
//! the per-row contributions decay like `c/(m·ln m)`, the stopping sum grows
//! only like `c·ln ln m`; for small `c` the stopping index is doubly
//! exponential in `1/c` and cannot be materialized. [`run_stage`] detects this
//! and reports a projection instead of looping forever.

use crate::numeric::Kahan;
use serde::Serialize;
use thiserror::Error;

/// Relative tolerance for ledger inequality checks. Bounds are rounded
/// pessimistically: a claimed `l ≤ r` passes only if it survives inflating
/// `l` by this relative amount.
pub const LEDGER_TOL: f64 = 1e-12;

/// Largest block size probed before [`choose_p`] gives up.
pub const P_SEARCH_CAP: u64 = 1 << 40;

/// Length of the index range used by [`verify_campaign`] when re-checking the
/// summability and term-cap conditions on the driving sequence.
pub const DEFAULT_SEQUENCE_CHECK_N: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum DieudonneError {
    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
    #[error("precondition violated: {reason}")]
    PreconditionViolated { reason: String },
    #[error("no feasible block size p within 2^40 for a = {a}, beta = {beta}")]
    NoFeasibleP { a: f64, beta: f64 },
    #[error(
        "stage {stage}: beta fell to {beta} (< 1/2) after row {row} before the stopping \
         rule crossed (running sum {delta_sum})"
    )]
    BetaBelowHalf {
        stage: u64,
        row: u64,
        beta: f64,
        delta_sum: f64,
    },
    #[error(
        "stage {stage}: carry lower bound mu(B) = {bound} is not certifiably above {required}"
    )]
    CarryUnverifiable {
        stage: u64,
        bound: f64,
        required: f64,
    },
    #[error("sequence conditions failed: {summary}")]
    SequenceConditionsFailed { summary: String },
    #[error(
        "stage {stage}: stopping sum reached only {delta_sum:.6} after {rows_examined} rows \
         (beta = {beta:.6}); projected stopping index near 10^{projected_log10_rows:.3e} rows \
         — not materializable"
    )]
    StoppingUnreachable {
        stage: u64,
        rows_examined: u64,
        delta_sum: f64,
        beta: f64,
        projected_log10_rows: f64,
    },
}

/// Parameters of a campaign: the constant `c` and index shift `s` of the
/// driving sequence plus the four threshold levels and a per-stage row budget.
///
/// Defaults: `s = 1`, sum cap `1/8`, term cap `1/4`, stopping level `1/2`,
/// stage target `7/16`, row budget `200_000`. The target is consistent with
/// the other thresholds: a stage that stops above `1/2` under a carry bound
/// above `7/8` certifies a union of measure `> 7/16`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DieudonneConfig {
    pub c: f64,
    pub s: u64,
    pub sum_cap: f64,
    pub term_cap: f64,
    pub phi_level: f64,
    pub target: f64,
    pub max_rows_per_stage: u64,
}

impl DieudonneConfig {
    pub fn new(c: f64) -> Result<Self, DieudonneError> {
        Self::with_shift(c, 1)
    }

    pub fn with_shift(c: f64, s: u64) -> Result<Self, DieudonneError> {
        let cfg = DieudonneConfig {
            c,
            s,
            sum_cap: 0.125,
            term_cap: 0.25,
            phi_level: 0.5,
            target: 7.0 / 16.0,
            max_rows_per_stage: 200_000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), DieudonneError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(DieudonneError::InvalidParameter {
                reason: format!("c must be a positive finite number, got {}", self.c),
            });
        }
        if self.s == 0 {
            return Err(DieudonneError::InvalidParameter {
                reason: "index shift s must be at least 1 so ln(n + s) never vanishes".into(),
            });
        }
        for (name, v) in [
            ("sum_cap", self.sum_cap),
            ("term_cap", self.term_cap),
            ("phi_level", self.phi_level),
            ("target", self.target),
        ] {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(DieudonneError::InvalidParameter {
                    reason: format!("{name} must lie in (0, 1), got {v}"),
                });
            }
        }
        if self.max_rows_per_stage == 0 {
            return Err(DieudonneError::InvalidParameter {
                reason: "max_rows_per_stage must be positive".into(),
            });
        }
        Ok(())
    }

    /// The j-th term of the driving sequence, `c / ((j + s) · ln²(j + s))`,
    /// positive and strictly decreasing for `j ≥ 1`.
    pub fn a(&self, j: u64) -> f64 {
        let x = (j + self.s) as f64;
        let l = x.ln();
        self.c / (x * l * l)
    }
}

/// Whether the divergence of `Σ a_j·ln(1/a_j)` has an analytic certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum DivergenceStatus {
    Certified { statement: String },
    Unknown,
}

/// Outcome of checking the three conditions on the driving sequence:
/// summability below the cap, the per-term cap, and divergence of the
/// weighted series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceConditionReport {
    pub n_checked: u64,
    pub partial_sum: f64,
    /// Integral-comparison bound on the tail beyond `n_checked`: `c / ln(N + s)`.
    pub tail_bound: f64,
    pub total_bound: f64,
    pub sum_cap: f64,
    pub sum_cap_pass: bool,
    pub max_term: f64,
    pub max_term_at: u64,
    pub term_cap: f64,
    pub term_cap_pass: bool,
    /// True when the checked maximum provably bounds every term (first term
    /// below `1/e` and the sequence decreasing), so the cap holds for all `n`.
    pub term_cap_global: bool,
    pub divergence: DivergenceStatus,
    pub notes: Vec<String>,
}

impl SequenceConditionReport {
    pub fn all_pass(&self) -> bool {
        self.sum_cap_pass
            && self.term_cap_pass
            && matches!(self.divergence, DivergenceStatus::Certified { .. })
    }
}

/// Checks the driving-sequence conditions over `n ≤ n_terms` plus analytic
/// tail arguments, and reports pass/fail per condition (never errors).
pub fn check_sequence_conditions(
    cfg: &DieudonneConfig,
    n_terms: u64,
) -> Result<SequenceConditionReport, DieudonneError> {
    if n_terms < 2 {
        return Err(DieudonneError::PreconditionViolated {
            reason: format!("need at least 2 terms to check, got {n_terms}"),
        });
    }
    let mut notes = Vec::new();

    let mut partial = Kahan::new();
    let mut max_term = f64::NEG_INFINITY;
    let mut max_term_at = 1;
    for j in 1..=n_terms {
        let a = cfg.a(j);
        partial.add(a);
        let term = if a < 1.0 { a * (1.0 / a).ln() } else { f64::NAN };
        if term.is_nan() {
            notes.push(format!(
                "a_{j} = {a} is not below 1; the weighted-term cap is not meaningful there"
            ));
        } else if term > max_term {
            max_term = term;
            max_term_at = j;
        }
    }
    let partial_sum = partial.value();
    // ∫_N^∞ c/((x+s)·ln²(x+s)) dx = c/ln(N+s).
    let tail_bound = cfg.c / ((n_terms + cfg.s) as f64).ln();
    let total_bound = partial_sum + tail_bound + partial.error_bound();
    let sum_cap_pass = total_bound < cfg.sum_cap;

    let a1 = cfg.a(1);
    let term_cap_global = a1 < (-1.0f64).exp();
    if !term_cap_global {
        notes.push(format!(
            "a_1 = {a1} is not below 1/e, so the checked maximum of a·ln(1/a) \
             only covers n <= {n_terms}"
        ));
    }
    let term_cap_pass = max_term.is_finite() && max_term < cfg.term_cap;

    // For n ≥ n0 with c ≤ ln²(n0 + s), each weighted term dominates
    // c/((n+s)·ln(n+s)), whose series diverges by the integral test.
    let mut n0 = 1u64;
    while ((n0 + cfg.s) as f64).ln().powi(2) < cfg.c {
        n0 += 1;
        if n0 > 1 << 40 {
            break;
        }
    }
    let comparison_holds_at = |j: u64| -> bool {
        let a = cfg.a(j);
        if !(a > 0.0 && a < 1.0) {
            return false;
        }
        let x = (j + cfg.s) as f64;
        a * (1.0 / a).ln() >= cfg.c / (x * x.ln()) - 1e-15
    };
    let divergence = if n0 <= 1 << 40
        && comparison_holds_at(n0)
        && comparison_holds_at(n0 + 1)
        && comparison_holds_at(n_terms.max(n0 + 2))
    {
        DivergenceStatus::Certified {
            statement: format!(
                "for n >= {n0}, a_n·ln(1/a_n) >= c/((n+s)·ln(n+s)) because c <= ln²(n+s) \
                 there; Σ 1/((n+s)·ln(n+s)) diverges by the integral test"
            ),
        }
    } else {
        DivergenceStatus::Unknown
    };

    Ok(SequenceConditionReport {
        n_checked: n_terms,
        partial_sum,
        tail_bound,
        total_bound,
        sum_cap: cfg.sum_cap,
        sum_cap_pass,
        max_term,
        max_term_at,
        term_cap: cfg.term_cap,
        term_cap_pass,
        term_cap_global,
        divergence,
        notes,
    })
}

fn pow_u(base: f64, p: u64) -> f64 {
    if p <= i32::MAX as u64 {
        base.powi(p as i32)
    } else {
        base.powf(p as f64)
    }
}

/// Evaluation of all block-size constraints at a candidate `p`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PProbe {
    pub side: f64,
    pub mu_c: f64,
    pub mu_d: f64,
    pub side_ok: bool,
    pub mu_c_lower_ok: bool,
    pub window_low_ok: bool,
    pub window_high_ok: bool,
}

impl PProbe {
    pub(crate) fn feasible(&self) -> bool {
        self.side_ok && self.mu_c_lower_ok && self.window_low_ok && self.window_high_ok
    }
}

pub(crate) fn probe_p(a: f64, beta: f64, p: u64) -> PProbe {
    let t = (beta / a).ln();
    let side = 1.0 - t / p as f64;
    if !(side > 0.0) {
        return PProbe {
            side,
            mu_c: 0.0,
            mu_d: 0.0,
            side_ok: false,
            mu_c_lower_ok: false,
            window_low_ok: false,
            window_high_ok: false,
        };
    }
    let mu_c = pow_u(side, p);
    let mu_d = mu_c + t * pow_u(side, p - 1);
    let l = (1.0 / a).ln();
    let scale = a / beta;
    PProbe {
        side,
        mu_c,
        mu_d,
        side_ok: side > 0.5,
        mu_c_lower_ok: mu_c >= scale / 2.0,
        window_low_ok: mu_d >= 0.5 * scale * l,
        window_high_ok: mu_d <= 2.0 * scale * l,
    }
}

/// Smallest block size `p` satisfying all three constraints for the pair
/// `(a, β)`, found by doubling plus binary search and certified minimal by a
/// downward re-check of up to 64 candidates.
pub fn choose_p(a: f64, beta: f64) -> Result<u64, DieudonneError> {
    if !(a.is_finite() && a > 0.0 && a < 1.0) {
        return Err(DieudonneError::PreconditionViolated {
            reason: format!("a must lie in (0, 1), got {a}"),
        });
    }
    if !(beta.is_finite() && beta >= 0.5) {
        return Err(DieudonneError::PreconditionViolated {
            reason: format!("beta must be at least 1/2, got {beta}"),
        });
    }
    let t = (beta / a).ln();
    if !(t > 0.0) {
        return Err(DieudonneError::PreconditionViolated {
            reason: format!("ln(beta/a) must be positive, got {t} (a = {a}, beta = {beta})"),
        });
    }
    // Any p with side ≤ 1/2 is infeasible, so the search can start just above 2t.
    let start = ((2.0 * t).floor() as u64).saturating_add(1).max(1);
    let mut lo = start - 1; // infeasible or the p = 0 sentinel
    let mut hi = start;
    while !probe_p(a, beta, hi).feasible() {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi > P_SEARCH_CAP {
            return Err(DieudonneError::NoFeasibleP { a, beta });
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe_p(a, beta, mid).feasible() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Downward certification: walk down while the next candidate is still
    // feasible (none should be after a correct binary search), at most 64 steps.
    let mut p = hi;
    for _ in 0..64 {
        if p > 1 && probe_p(a, beta, p - 1).feasible() {
            p -= 1;
        } else {
            break;
        }
    }
    Ok(p)
}

/// One row of a stage: the consumed sequence term, the chosen block size, and
/// every derived measure the ledger checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    /// 1-based row index within the stage.
    pub r: u64,
    /// Global index of the consumed sequence term (`k + r`).
    pub global_index: u64,
    pub a: f64,
    /// Remainder `β_{r−1}` before this row.
    pub beta_prev: f64,
    pub t: f64,
    pub p: u64,
    pub side: f64,
    /// `side^p`, in `[a/(2β), a/β]`.
    pub mu_c_bar: f64,
    /// Two-term block measure `side^p + t·side^(p−1)`.
    pub mu_d_bar: f64,
    /// Stopping contribution `β_{r−1}·mu_d_bar`, in `[½·a·ln(1/a), 2·a·ln(1/a)]`.
    pub delta: f64,
    /// Remainder after this row, `β_r = β_{r−1} − δ`.
    pub beta: f64,
    /// Upper bound on the row's selected-set measure, `β_{r−1}·mu_c_bar ≤ a`.
    pub mu_a_bound: f64,
}

/// Complete record of one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub n: u64,
    /// Number of coordinates consumed by earlier stages.
    pub q: u64,
    /// Number of sequence terms consumed by earlier stages.
    pub k: u64,
    pub rows: Vec<StageRow>,
    /// Stopping index: number of rows.
    pub h: u64,
    /// `Σ δ` over the stage, strictly above the stopping level.
    pub delta_sum: f64,
    /// Carried lower bound on the ambient remainder measure.
    pub mu_b_bar_lower: f64,
    /// Certified lower bound on the stage's union measure:
    /// `mu_b_bar_lower · delta_sum`.
    pub mu_d_lower: f64,
    /// `Σ` of the per-row selected-set bounds, for campaign accounting.
    pub mu_a_bound_sum: f64,
    /// `Σ p` over the stage: coordinates consumed, so the next stage starts at
    /// `q + p_sum`.
    pub p_sum: u64,
}

/// State threaded between stages. A fresh campaign starts with `k = 0`,
/// `q = 0` (the initial coordinate block is empty) and remainder bound `1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageCarry {
    pub k: u64,
    pub q: u64,
    pub mu_b_bar_lower: f64,
}

impl StageCarry {
    pub fn fresh() -> Self {
        StageCarry {
            k: 0,
            q: 0,
            mu_b_bar_lower: 1.0,
        }
    }
}

/// Runs one stage: consumes successive sequence terms, chooses minimal block
/// sizes, and stops at the first row whose running `Σ δ` crosses the stopping
/// level. Refuses to start unless the carried remainder bound strictly
/// exceeds `1 − sum_cap`; reports a projection instead of looping when the
/// stopping index exceeds the row budget.
pub fn run_stage(
    cfg: &DieudonneConfig,
    n: u64,
    carry: &StageCarry,
) -> Result<StageRecord, DieudonneError> {
    cfg.validate()?;
    let required = 1.0 - cfg.sum_cap;
    if !(carry.mu_b_bar_lower > required) {
        return Err(DieudonneError::CarryUnverifiable {
            stage: n,
            bound: carry.mu_b_bar_lower,
            required,
        });
    }

    let mut rows: Vec<StageRow> = Vec::new();
    let mut delta_sum = Kahan::new();
    let mut mu_a_sum = Kahan::new();
    let mut p_sum: u64 = 0;
    let mut beta_prev = 1.0f64;
    // Checkpoint for the double-exponential growth projection.
    let checkpoint_row = (cfg.max_rows_per_stage as f64).sqrt().ceil() as u64;
    let mut checkpoint_sum = f64::NAN;

    for r in 1..=cfg.max_rows_per_stage {
        let global_index = carry.k + r;
        let a = cfg.a(global_index);
        if !(a > 0.0 && a < 1.0) {
            return Err(DieudonneError::PreconditionViolated {
                reason: format!(
                    "stage {n} row {r}: sequence term a_{global_index} = {a} is not in (0, 1)"
                ),
            });
        }
        if a >= beta_prev {
            return Err(DieudonneError::PreconditionViolated {
                reason: format!(
                    "stage {n} row {r}: a_{global_index} = {a} is not below beta = {beta_prev}"
                ),
            });
        }
        let p = choose_p(a, beta_prev)?;
        let probe = probe_p(a, beta_prev, p);
        let t = (beta_prev / a).ln();
        let delta = beta_prev * probe.mu_d;
        if !delta.is_finite() || delta <= 0.0 {
            return Err(DieudonneError::InvalidParameter {
                reason: format!("stage {n} row {r}: degenerate stopping contribution {delta}"),
            });
        }
        let beta = beta_prev - delta;
        let mu_a_bound = beta_prev * probe.mu_c;
        delta_sum.add(delta);
        mu_a_sum.add(mu_a_bound);
        p_sum += p;
        rows.push(StageRow {
            r,
            global_index,
            a,
            beta_prev,
            t,
            p,
            side: probe.side,
            mu_c_bar: probe.mu_c,
            mu_d_bar: probe.mu_d,
            delta,
            beta,
            mu_a_bound,
        });

        if delta_sum.value() > cfg.phi_level {
            let ds = delta_sum.value();
            return Ok(StageRecord {
                n,
                q: carry.q,
                k: carry.k,
                h: r,
                delta_sum: ds,
                mu_b_bar_lower: carry.mu_b_bar_lower,
                mu_d_lower: carry.mu_b_bar_lower * ds,
                mu_a_bound_sum: mu_a_sum.value(),
                p_sum,
                rows,
            });
        }
        // Standing assumption for the next row. With the stopping level at or
        // below 1/2 this cannot trigger; it guards nonstandard levels.
        if beta < 0.5 {
            return Err(DieudonneError::BetaBelowHalf {
                stage: n,
                row: r,
                beta,
                delta_sum: delta_sum.value(),
            });
        }
        beta_prev = beta;
        if r == checkpoint_row {
            checkpoint_sum = delta_sum.value();
        }
    }

    let rows_examined = cfg.max_rows_per_stage;
    let ds = delta_sum.value();
    let beta = beta_prev;
    // Fit Σδ(M) ≈ A + B·ln ln M between the checkpoint and the final row, and
    // extrapolate the crossing index.
    let projected_log10_rows = if checkpoint_sum.is_finite() && rows_examined > checkpoint_row {
        let llm_end = (rows_examined as f64).ln().ln();
        let llm_ckp = (checkpoint_row as f64).ln().ln();
        let slope = (ds - checkpoint_sum) / (llm_end - llm_ckp);
        if slope > 0.0 {
            let llm_cross = llm_end + (cfg.phi_level - ds) / slope;
            if llm_cross > 700.0 {
                f64::INFINITY
            } else {
                llm_cross.exp() / std::f64::consts::LN_10
            }
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };
    Err(DieudonneError::StoppingUnreachable {
        stage: n,
        rows_examined,
        delta_sum: ds,
        beta,
        projected_log10_rows,
    })
}

/// One named inequality check in the campaign ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    /// Where the check applies: `"sequence"`, `"campaign"`, `"stage N"`, or
    /// `"stage N row R"`.
    pub scope: String,
    pub name: String,
    /// Human-readable rendering of the compared values.
    pub detail: String,
    pub pass: bool,
}

fn pess_le(l: f64, r: f64) -> bool {
    let scale = l.abs().max(r.abs()).max(1.0);
    l + LEDGER_TOL * scale <= r
}

fn pess_gt(l: f64, r: f64) -> bool {
    let scale = l.abs().max(r.abs()).max(1.0);
    l - LEDGER_TOL * scale > r
}

/// Builds the per-row and per-stage ledger entries for one stage record,
/// re-deriving every quantity through an independent arithmetic path.
pub fn build_stage_ledger(cfg: &DieudonneConfig, rec: &StageRecord) -> Vec<LedgerRow> {
    let mut ledger = Vec::new();
    let stage_scope = format!("stage {}", rec.n);
    for row in &rec.rows {
        let scope = format!("stage {} row {}", rec.n, row.r);
        let l_a = (1.0 / row.a).ln();
        let mut push = |name: &str, detail: String, pass: bool| {
            ledger.push(LedgerRow {
                scope: scope.clone(),
                name: name.to_string(),
                detail,
                pass,
            });
        };
        push(
            "(1) mu(A) bound <= a",
            format!("{} <= {}", row.mu_a_bound, row.a),
            pess_le(row.mu_a_bound, row.a),
        );
        push(
            "(2) delta lower window",
            format!("{} <= {}", 0.5 * row.a * l_a, row.delta),
            pess_le(0.5 * row.a * l_a, row.delta),
        );
        push(
            "(2) delta upper window",
            format!("{} <= {}", row.delta, 2.0 * row.a * l_a),
            pess_le(row.delta, 2.0 * row.a * l_a),
        );
        push(
            "(3) side > 1/2",
            format!("{} > 0.5", row.side),
            pess_gt(row.side, 0.5),
        );
        push(
            "mu(C) lower",
            format!("{} <= {}", row.a / (2.0 * row.beta_prev), row.mu_c_bar),
            pess_le(row.a / (2.0 * row.beta_prev), row.mu_c_bar),
        );
        push(
            "mu(C) upper",
            format!("{} <= {}", row.mu_c_bar, row.a / row.beta_prev),
            pess_le(row.mu_c_bar, row.a / row.beta_prev),
        );
        push(
            "beta standing assumption",
            format!("{} >= 0.5", row.beta_prev),
            !pess_gt(0.5, row.beta_prev),
        );
        let minimal = if row.p == 1 {
            true
        } else {
            !probe_p(row.a, row.beta_prev, row.p - 1).feasible()
        };
        push(
            "p minimality",
            format!("p = {} feasible, p - 1 infeasible", row.p),
            minimal && probe_p(row.a, row.beta_prev, row.p).feasible(),
        );
        // Independent recompute via powf instead of powi.
        let t2 = (row.beta_prev / row.a).ln();
        let side2 = 1.0 - t2 / row.p as f64;
        let mu_d2 = side2.powf(row.p as f64) + t2 * side2.powf((row.p - 1) as f64);
        let delta2 = row.beta_prev * mu_d2;
        let consistent = (mu_d2 - row.mu_d_bar).abs() <= 1e-12 * row.mu_d_bar.abs()
            && (delta2 - row.delta).abs() <= 1e-12 * row.delta.abs();
        push(
            "delta recompute consistency",
            format!("two-term recompute {} vs {}", mu_d2, row.mu_d_bar),
            consistent,
        );
    }

    let mut push_stage = |name: &str, detail: String, pass: bool| {
        ledger.push(LedgerRow {
            scope: stage_scope.clone(),
            name: name.to_string(),
            detail,
            pass,
        });
    };
    let last_delta = rec.rows.last().map(|r| r.delta).unwrap_or(0.0);
    push_stage(
        "stopping rule crossed",
        format!("{} > {}", rec.delta_sum, cfg.phi_level),
        pess_gt(rec.delta_sum, cfg.phi_level),
    );
    push_stage(
        "stopping rule minimal",
        format!("{} <= {}", rec.delta_sum - last_delta, cfg.phi_level),
        pess_le(rec.delta_sum - last_delta, cfg.phi_level),
    );
    push_stage(
        "mu(D) target",
        format!("{} > {}", rec.mu_d_lower, cfg.target),
        pess_gt(rec.mu_d_lower, cfg.target),
    );
    push_stage(
        "mu(B) carry bound",
        format!("{} > {}", rec.mu_b_bar_lower, 1.0 - cfg.sum_cap),
        pess_gt(rec.mu_b_bar_lower, 1.0 - cfg.sum_cap),
    );
    ledger
}

/// Full campaign output: the configuration echo, the sequence-condition
/// report, every stage record, and the machine-checked inequality ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub config: DieudonneConfig,
    pub sequence: SequenceConditionReport,
    pub stages: Vec<StageRecord>,
    pub ledger: Vec<LedgerRow>,
    pub total_mu_a_bound: f64,
    pub pass: bool,
}

impl CampaignReport {
    /// Plain-text table of the stage rows followed by a ledger summary.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "campaign: c = {}, s = {}, stages = {}\n",
            self.config.c,
            self.config.s,
            self.stages.len()
        ));
        out.push_str(&format!(
            "sequence: total sum bound {:.9} (cap {}), max weighted term {:.9} (cap {})\n",
            self.sequence.total_bound,
            self.sequence.sum_cap,
            self.sequence.max_term,
            self.sequence.term_cap
        ));
        out.push_str(
            "stage  row     p            a        mu(C)        delta         beta   mu(A) bound\n",
        );
        for stage in &self.stages {
            for row in &stage.rows {
                out.push_str(&format!(
                    "{:>5} {:>4} {:>5} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6} {:>12.6e}\n",
                    stage.n, row.r, row.p, row.a, row.mu_c_bar, row.delta, row.beta, row.mu_a_bound
                ));
            }
            out.push_str(&format!(
                "stage {}: h = {}, sum delta = {:.6}, mu(D) lower = {:.6}, mu(B) lower = {:.6}\n",
                stage.n, stage.h, stage.delta_sum, stage.mu_d_lower, stage.mu_b_bar_lower
            ));
        }
        let failed = self.ledger.iter().filter(|r| !r.pass).count();
        out.push_str(&format!(
            "ledger: {} checks, {} failed; total mu(A) bound = {:.9}; campaign pass = {}\n",
            self.ledger.len(),
            failed,
            self.total_mu_a_bound,
            self.pass
        ));
        out
    }
}

/// Runs `n_stages` consecutive stages from a fresh carry, threading
/// `k_{n+1} = k_n + h_n`, and emits the full inequality ledger including the
/// campaign-wide sum bound. Zero stages yields a vacuous pass.
pub fn verify_campaign(
    cfg: &DieudonneConfig,
    n_stages: u64,
) -> Result<CampaignReport, DieudonneError> {
    cfg.validate()?;
    let sequence = check_sequence_conditions(cfg, DEFAULT_SEQUENCE_CHECK_N)?;
    if !sequence.all_pass() {
        return Err(DieudonneError::SequenceConditionsFailed {
            summary: format!(
                "sum bound {:.9} vs cap {} (pass: {}); max weighted term {:.9} vs cap {} \
                 (pass: {}); divergence {:?}",
                sequence.total_bound,
                sequence.sum_cap,
                sequence.sum_cap_pass,
                sequence.max_term,
                sequence.term_cap,
                sequence.term_cap_pass,
                sequence.divergence
            ),
        });
    }

    let mut ledger = vec![
        LedgerRow {
            scope: "sequence".into(),
            name: "sum cap".into(),
            detail: format!("{} < {}", sequence.total_bound, sequence.sum_cap),
            pass: sequence.sum_cap_pass,
        },
        LedgerRow {
            scope: "sequence".into(),
            name: "term cap".into(),
            detail: format!("{} < {}", sequence.max_term, sequence.term_cap),
            pass: sequence.term_cap_pass,
        },
        LedgerRow {
            scope: "sequence".into(),
            name: "divergence certified".into(),
            detail: format!("{:?}", sequence.divergence),
            pass: matches!(sequence.divergence, DivergenceStatus::Certified { .. }),
        },
    ];

    let mut stages = Vec::new();
    let mut carry = StageCarry::fresh();
    let mut total_mu_a = Kahan::new();
    for n in 1..=n_stages {
        let record = run_stage(cfg, n, &carry)?;
        ledger.extend(build_stage_ledger(cfg, &record));
        total_mu_a.add(record.mu_a_bound_sum);
        carry = StageCarry {
            k: carry.k + record.h,
            q: carry.q + record.p_sum,
            mu_b_bar_lower: carry.mu_b_bar_lower - record.mu_a_bound_sum,
        };
        stages.push(record);
    }
    let total_mu_a_bound = total_mu_a.value();
    ledger.push(LedgerRow {
        scope: "campaign".into(),
        name: "total mu(A) < sum cap".into(),
        detail: format!("{} < {}", total_mu_a_bound, cfg.sum_cap),
        pass: total_mu_a_bound + total_mu_a.error_bound() < cfg.sum_cap,
    });
    let pass = ledger.iter().all(|row| row.pass);
    Ok(CampaignReport {
        config: cfg.clone(),
        sequence,
        stages,
        ledger,
        total_mu_a_bound,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(c: f64) -> DieudonneConfig {
        DieudonneConfig::new(c).unwrap()
    }

    #[test]
    fn config_rejects_bad_parameters() {
        assert!(matches!(
            DieudonneConfig::new(0.0),
            Err(DieudonneError::InvalidParameter { .. })
        ));
        assert!(matches!(
            DieudonneConfig::new(f64::NAN),
            Err(DieudonneError::InvalidParameter { .. })
        ));
        assert!(matches!(
            DieudonneConfig::with_shift(0.01, 0),
            Err(DieudonneError::InvalidParameter { .. })
        ));
        let mut bad = cfg(0.01);
        bad.phi_level = 1.5;
        assert!(matches!(
            run_stage(&bad, 1, &StageCarry::fresh()),
            Err(DieudonneError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn sequence_terms_are_positive_and_decreasing() {
        let cfg = cfg(0.01);
        let mut prev = f64::INFINITY;
        for j in 1..=10_000 {
            let a = cfg.a(j);
            assert!(a > 0.0 && a < prev, "a_{j} = {a} not decreasing");
            prev = a;
        }
    }

    #[test]
    fn sequence_conditions_pass_for_small_c() {
        let report = check_sequence_conditions(&cfg(0.01), 1_000_000).unwrap();
        assert!(report.sum_cap_pass);
        assert!(report.term_cap_pass);
        assert!(report.term_cap_global);
        assert!(matches!(
            report.divergence,
            DivergenceStatus::Certified { .. }
        ));
        assert!(report.all_pass());

        // Independent partial-sum oracle: plain forward summation.
        let mut plain = 0.0f64;
        for j in 1..=1_000_000u64 {
            let x = (j + 1) as f64;
            plain += 0.01 / (x * x.ln() * x.ln());
        }
        assert!((report.partial_sum - plain).abs() < 1e-12);
        // Tail bound is c / ln(N + s).
        let tail = 0.01 / (1_000_001f64).ln();
        assert!((report.tail_bound - tail).abs() < 1e-15);
        assert!(report.total_bound < 0.125);
        assert!(report.total_bound > 0.02 && report.total_bound < 0.03);
        // Largest weighted term sits at the first index.
        assert_eq!(report.max_term_at, 1);
        let a1 = 0.01 / (2.0 * 2f64.ln().powi(2));
        let expect = a1 * (1.0 / a1).ln();
        assert!((report.max_term - expect).abs() < 1e-15);
    }

    #[test]
    fn sequence_conditions_fail_for_large_c() {
        let report = check_sequence_conditions(&cfg(10.0), 1_000).unwrap();
        assert!(!report.sum_cap_pass);
        assert!(!report.all_pass());
        // a_1 > 1 there, so a term-cap note is recorded.
        assert!(report.notes.iter().any(|n| n.contains("not below 1")));
    }

    #[test]
    fn choose_p_matches_linear_scan_oracle() {
        let scan = |a: f64, beta: f64| -> u64 {
            (1..).find(|&p| probe_p(a, beta, p).feasible()).unwrap()
        };
        for &(a, beta) in &[
            (0.1, 1.0),
            (0.05, 1.0),
            (0.01, 0.9),
            (0.0027617, 0.95),
            (0.3, 0.8),
            (0.0104069, 1.0),
        ] {
            let p = choose_p(a, beta).unwrap();
            assert_eq!(p, scan(a, beta), "a = {a}, beta = {beta}");
            assert!(probe_p(a, beta, p).feasible());
            if p > 1 {
                assert!(!probe_p(a, beta, p - 1).feasible());
            }
        }
        // Frozen oracle: a = 0.1, beta = 1 has minimal p = 6
        // (p = 5 gives side^5 = 0.0457 < 0.05).
        assert_eq!(choose_p(0.1, 1.0).unwrap(), 6);
    }

    #[test]
    fn choose_p_upper_bound_is_automatic() {
        for &(a, beta) in &[(0.1, 1.0), (0.01, 0.8), (0.001, 0.55)] {
            let p = choose_p(a, beta).unwrap();
            let probe = probe_p(a, beta, p);
            assert!(probe.mu_c <= a / beta + 1e-15);
        }
    }

    #[test]
    fn choose_p_rejects_nonpositive_log_ratio() {
        assert!(matches!(
            choose_p(0.8, 0.5),
            Err(DieudonneError::PreconditionViolated { .. })
        ));
        assert!(matches!(
            choose_p(0.5, 0.5),
            Err(DieudonneError::PreconditionViolated { .. })
        ));
        assert!(matches!(
            choose_p(1.2, 1.0),
            Err(DieudonneError::PreconditionViolated { .. })
        ));
    }

    #[test]
    fn first_stage_with_large_c_stops_in_one_row() {
        // c = 0.3 violates the sum cap, but a fresh carry (remainder exactly 1)
        // is still valid, and the big first term drives the stopping sum across
        // 1/2 immediately: a_1 = 0.312, p = 3, delta = 0.665.
        let record = run_stage(&cfg(0.3), 1, &StageCarry::fresh()).unwrap();
        assert_eq!(record.h, 1);
        assert_eq!(record.rows.len(), 1);
        let row = &record.rows[0];
        assert_eq!(row.p, 3);
        assert!((row.a - 0.3 / (2.0 * 2f64.ln().powi(2))).abs() < 1e-15);
        assert!((row.delta - 0.66523).abs() < 5e-4);
        assert!(record.delta_sum > 0.5);
        assert!(record.mu_d_lower > 7.0 / 16.0);
        // The two-sided stopping-term window holds on the row.
        let l = (1.0 / row.a).ln();
        assert!(0.5 * row.a * l <= row.delta && row.delta <= 2.0 * row.a * l);
    }

    #[test]
    fn hypothetical_carry_stage_runs_six_rows() {
        // Threshold mechanics on a multi-row stage: start after one consumed
        // term with a hypothetical remainder bound of 0.9. Desk evaluation of
        // the recurrence gives h = 6 with block sizes 7, 9, 11, 13, 14, 15.
        let carry = StageCarry {
            k: 1,
            q: 3,
            mu_b_bar_lower: 0.9,
        };
        let record = run_stage(&cfg(0.3), 2, &carry).unwrap();
        assert_eq!(record.h, 6);
        let ps: Vec<u64> = record.rows.iter().map(|r| r.p).collect();
        assert_eq!(ps, vec![7, 9, 11, 13, 14, 15]);
        assert!((record.delta_sum - 0.523).abs() < 5e-3);
        assert!(record.delta_sum > 0.5);
        // Every remainder before the stopping row stays at or above 1/2.
        for row in &record.rows[..record.rows.len() - 1] {
            assert!(row.beta >= 0.5, "beta_{} = {}", row.r, row.beta);
        }
        assert!((record.mu_d_lower - 0.9 * record.delta_sum).abs() < 1e-15);
        assert!(record.mu_d_lower > 7.0 / 16.0);
        // Consumed terms are the successive sequence values after the carry.
        for (i, row) in record.rows.iter().enumerate() {
            assert_eq!(row.global_index, 2 + i as u64);
            assert!((row.a - cfg(0.3).a(2 + i as u64)).abs() < 1e-18);
        }
        assert_eq!(record.p_sum, 7 + 9 + 11 + 13 + 14 + 15);
    }

    #[test]
    fn stage_rows_satisfy_all_windows() {
        let carry = StageCarry {
            k: 1,
            q: 3,
            mu_b_bar_lower: 0.9,
        };
        let record = run_stage(&cfg(0.3), 2, &carry).unwrap();
        for row in &record.rows {
            let l = (1.0 / row.a).ln();
            assert!(0.5 * row.a * l <= row.delta && row.delta <= 2.0 * row.a * l);
            assert!(row.mu_c_bar >= row.a / (2.0 * row.beta_prev) - 1e-15);
            assert!(row.mu_c_bar <= row.a / row.beta_prev + 1e-15);
            assert!(row.mu_a_bound <= row.a + 1e-15);
            assert!(row.side > 0.5);
            // Two-term recompute agrees to 1e-12 relative.
            let t = (row.beta_prev / row.a).ln();
            let side = 1.0 - t / row.p as f64;
            let mu_d = side.powf(row.p as f64) + t * side.powf((row.p - 1) as f64);
            assert!((mu_d - row.mu_d_bar).abs() <= 1e-12 * row.mu_d_bar);
        }
    }

    #[test]
    fn stage_refuses_unverifiable_carry() {
        let carry = StageCarry {
            k: 0,
            q: 0,
            mu_b_bar_lower: 0.875,
        };
        assert!(matches!(
            run_stage(&cfg(0.01), 2, &carry),
            Err(DieudonneError::CarryUnverifiable { .. })
        ));
        let worse = StageCarry {
            k: 0,
            q: 0,
            mu_b_bar_lower: 0.7,
        };
        assert!(matches!(
            run_stage(&cfg(0.01), 2, &worse),
            Err(DieudonneError::CarryUnverifiable { .. })
        ));
    }

    #[test]
    fn small_c_stage_reports_unreachable_stopping() {
        // At c = 0.01 the stopping sum grows like c·ln ln m; after 5000 rows it
        // sits near 0.11, and the projected crossing index is astronomically
        // beyond any budget.
        let mut config = cfg(0.01);
        config.max_rows_per_stage = 5_000;
        match run_stage(&config, 1, &StageCarry::fresh()) {
            Err(DieudonneError::StoppingUnreachable {
                stage,
                rows_examined,
                delta_sum,
                beta,
                projected_log10_rows,
            }) => {
                assert_eq!(stage, 1);
                assert_eq!(rows_examined, 5_000);
                assert!(
                    delta_sum > 0.08 && delta_sum < 0.14,
                    "delta_sum = {delta_sum}"
                );
                assert!((beta - (1.0 - delta_sum)).abs() < 1e-9);
                assert!(
                    projected_log10_rows > 1e10,
                    "projection = {projected_log10_rows}"
                );
            }
            other => panic!("expected StoppingUnreachable, got {other:?}"),
        }
    }

    #[test]
    fn campaign_with_zero_stages_passes_vacuously() {
        let report = verify_campaign(&cfg(0.01), 0).unwrap();
        assert!(report.pass);
        assert!(report.stages.is_empty());
        assert_eq!(report.total_mu_a_bound, 0.0);
        // Ledger holds exactly the sequence rows plus the campaign total.
        assert_eq!(report.ledger.len(), 4);
        assert!(report.ledger.iter().all(|r| r.pass));
        assert!(!report.render_table().is_empty());
    }

    #[test]
    fn campaign_rejects_failing_sequence() {
        assert!(matches!(
            verify_campaign(&cfg(10.0), 1),
            Err(DieudonneError::SequenceConditionsFailed { .. })
        ));
    }

    #[test]
    fn campaign_at_small_c_is_honestly_unreachable() {
        let mut config = cfg(0.01);
        config.max_rows_per_stage = 2_000;
        match verify_campaign(&config, 3) {
            Err(DieudonneError::StoppingUnreachable { stage, .. }) => assert_eq!(stage, 1),
            other => panic!("expected StoppingUnreachable, got {other:?}"),
        }
    }

    #[test]
    fn stage_ledger_is_complete_and_passes() {
        let config = cfg(0.3);
        let carry = StageCarry {
            k: 1,
            q: 3,
            mu_b_bar_lower: 0.9,
        };
        let record = run_stage(&config, 2, &carry).unwrap();
        let ledger = build_stage_ledger(&config, &record);
        // Nine named checks per row plus four per stage.
        assert_eq!(ledger.len(), 9 * record.rows.len() + 4);
        for name in [
            "(1) mu(A) bound <= a",
            "(2) delta lower window",
            "(2) delta upper window",
            "(3) side > 1/2",
            "mu(C) lower",
            "mu(C) upper",
            "beta standing assumption",
            "p minimality",
            "delta recompute consistency",
        ] {
            let count = ledger.iter().filter(|r| r.name == name).count();
            assert_eq!(count, record.rows.len(), "check {name}");
        }
        for name in [
            "stopping rule crossed",
            "stopping rule minimal",
            "mu(D) target",
            "mu(B) carry bound",
        ] {
            assert_eq!(ledger.iter().filter(|r| r.name == name).count(), 1);
        }
        assert!(ledger.iter().all(|r| r.pass), "ledger rows must all pass");
    }

    #[test]
    fn stage_records_are_deterministic() {
        let config = cfg(0.3);
        let carry = StageCarry {
            k: 1,
            q: 3,
            mu_b_bar_lower: 0.9,
        };
        let a = run_stage(&config, 2, &carry).unwrap();
        let b = run_stage(&config, 2, &carry).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let r1 = verify_campaign(&cfg(0.01), 0).unwrap();
        let r2 = verify_campaign(&cfg(0.01), 0).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }
}
