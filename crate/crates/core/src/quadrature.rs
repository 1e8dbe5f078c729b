//! Adaptive quadrature over bounded intervals, half-lines and products of
//! them, with an explicit converged / diverging / inconclusive verdict.
//!
//! Half-line integrals of a nonnegative integrand are accumulated over the
//! doubling schedule `[a, a+1], [a+1, a+2], [a+2, a+4], ...`, each piece
//! integrated by adaptive Gauss–Kronrod (7/15). Once three consecutive
//! pieces contribute less than `tol/4`, the remaining tail `[b, ∞)` is
//! integrated on the compactified variable `x = b + t/(1-t)` and the
//! estimate is declared converged if that tail is below `tol/2`.
//!
//! Divergence policy: the partial integral exceeds `divergence_threshold`
//! while each of the last three pieces still adds more than `tol`; or, for
//! integrands that grow too slowly to ever reach the threshold in `f64`
//! range (e.g. `1/(1+x)`), the last `persistence_window` pieces each add more
//! than `tol` without decaying (the newest piece is at least
//! `persistence_ratio` times the oldest one in the window). Anything else
//! that fails to settle within `max_doublings` is inconclusive.

use crate::sum::CompensatedSum;
use crate::types::Interval;
use serde::Serialize;
use std::cell::Cell;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error("integrand is negative ({value}) at {at}")]
    NegativeIntegrand { at: f64, value: f64 },
    #[error("integrand could not be evaluated at {at}: {message}")]
    Eval { at: f64, message: String },
    #[error("level-set construction needs an integer-valued function, got {value} at {at}")]
    NotInteger { at: f64, value: f64 },
    #[error("level-set measure diverges (exceeds {threshold:e} on [0, {explored}])")]
    DivergingLevelSet { threshold: f64, explored: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Convergence {
    Converged,
    Diverging,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub error: f64,
    pub verdict: Convergence,
    pub evaluations: u64,
    /// Partial integrals over the doubling schedule (half-line domains only).
    #[serde(skip)]
    pub partials: Vec<f64>,
}

impl IntegralEstimate {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            error: 0.0,
            verdict: Convergence::Converged,
            evaluations: 0,
            partials: Vec::new(),
        }
    }

    pub fn is_converged(&self) -> bool {
        self.verdict == Convergence::Converged
    }

    pub fn is_diverging(&self) -> bool {
        self.verdict == Convergence::Diverging
    }

    /// Point value to feed into an enclosing integral: `∞` when diverging.
    pub fn as_value(&self) -> f64 {
        if self.is_diverging() {
            f64::INFINITY
        } else {
            self.value
        }
    }

    fn diverging(value: f64, error: f64, evaluations: u64, partials: Vec<f64>) -> Self {
        Self {
            value,
            error,
            verdict: Convergence::Diverging,
            evaluations,
            partials,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Absolute tolerance.
    pub tol: f64,
    pub divergence_threshold: f64,
    pub max_doublings: u32,
    pub persistence_window: usize,
    pub persistence_ratio: f64,
    /// Maximum number of subintervals per half-line piece.
    pub piece_budget: usize,
    /// Maximum number of subintervals for a bounded interval.
    pub interval_budget: usize,
}

impl QuadConfig {
    pub const DEFAULT_TOL_1D: f64 = 1e-6;
    pub const DEFAULT_TOL_2D: f64 = 1e-4;
    pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            tol: Self::DEFAULT_TOL_1D,
            divergence_threshold: Self::DEFAULT_DIVERGENCE_THRESHOLD,
            max_doublings: 128,
            persistence_window: 16,
            persistence_ratio: 0.97,
            piece_budget: 200,
            interval_budget: 2000,
        }
    }
}

/// Integration domain on the real half-line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `[a, b]`
    Interval(f64, f64),
    /// `[a, ∞)`
    From(f64),
}

impl Domain {
    pub const HALF_LINE: Domain = Domain::From(0.0);
    pub const UNIT: Domain = Domain::Interval(0.0, 1.0);
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn checked<F>(f: &mut F, x: f64) -> Result<f64, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let v = f(x)?;
    if v.is_nan() {
        return Err(QuadError::Eval {
            at: x,
            message: "NaN".into(),
        });
    }
    if v < 0.0 {
        return Err(QuadError::NegativeIntegrand { at: x, value: v });
    }
    Ok(v)
}

struct Rule {
    value: f64,
    error: f64,
    infinite: bool,
}

fn gauss_kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<Rule, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = checked(f, center)?;
    let mut kronrod = CompensatedSum::new();
    let mut gauss = CompensatedSum::new();
    kronrod.add(WGK[7] * fc);
    gauss.add(WG[3] * fc);
    let mut infinite = fc.is_infinite();
    let mut outer = [[0.0; 2]; 2];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        if j < 2 {
            outer[0][j] = f1;
            outer[1][j] = f2;
        }
        infinite |= f1.is_infinite() || f2.is_infinite();
        kronrod.add(WGK[j] * (f1 + f2));
        if j % 2 == 1 {
            gauss.add(WG[j / 2] * (f1 + f2));
        }
    }
    if infinite {
        return Ok(Rule {
            value: f64::INFINITY,
            error: f64::INFINITY,
            infinite: true,
        });
    }
    let k = kronrod.value() * half;
    let g = gauss.value() * half;
    // Both rules are blind to the thin layer between the outermost node and
    // the endpoints, where an indicator can jump unnoticed. Probe the
    // endpoints and charge a break in the trend of the nearest nodes.
    let gap = half * (1.0 - XGK[0]);
    let mut edge = 0.0;
    for (end, [fn0, fn1]) in [a, b].into_iter().zip(outer) {
        let Ok(fe) = f(end) else { continue };
        if !fe.is_finite() || fe < 0.0 {
            continue;
        }
        let step = (fe - fn0).abs();
        if step > 2.0 * (fn0 - fn1).abs() + 1e-14 * fn0.abs() {
            edge += step * gap;
        }
    }
    Ok(Rule {
        value: k,
        error: (k - g).abs() + edge,
        infinite: false,
    })
}

struct Piece {
    value: f64,
    error: f64,
    evaluations: u64,
    infinite: bool,
}

/// Globally adaptive Gauss–Kronrod on `[a, b]`, bisecting the interval with
/// the largest error estimate until the total is below `tol` or the budget
/// of subintervals is spent.
fn adaptive<F>(f: &mut F, a: f64, b: f64, tol: f64, budget: usize) -> Result<Piece, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let mut evaluations = 17u64;
    let first = gauss_kronrod(f, a, b)?;
    if first.infinite {
        return Ok(Piece {
            value: f64::INFINITY,
            error: f64::INFINITY,
            evaluations,
            infinite: true,
        });
    }
    // (lo, hi, value, error, splittable)
    let mut parts = vec![(a, b, first.value, first.error, true)];
    loop {
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if total_err <= tol || parts.len() >= budget {
            break;
        }
        let Some((idx, _)) = parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.4)
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
        else {
            break;
        };
        let (lo, hi, _, _, _) = parts[idx];
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) || (hi - lo) <= 1e-15 * hi.abs().max(1.0) {
            parts[idx].4 = false;
            continue;
        }
        let left = gauss_kronrod(f, lo, mid)?;
        let right = gauss_kronrod(f, mid, hi)?;
        evaluations += 34;
        if left.infinite || right.infinite {
            return Ok(Piece {
                value: f64::INFINITY,
                error: f64::INFINITY,
                evaluations,
                infinite: true,
            });
        }
        parts[idx] = (lo, mid, left.value, left.error, true);
        parts.push((mid, hi, right.value, right.error, true));
    }
    let value = parts.iter().map(|p| p.2).collect::<CompensatedSum>().value();
    let error = parts.iter().map(|p| p.3).collect::<CompensatedSum>().value();
    Ok(Piece {
        value,
        error,
        evaluations,
        infinite: false,
    })
}

fn piece_bounds(a: f64, m: u32) -> (f64, f64) {
    if m == 0 {
        (a, a + 1.0)
    } else {
        (a + 2f64.powi(m as i32 - 1), a + 2f64.powi(m as i32))
    }
}

/// Tracks the doubling schedule and applies the divergence rules.
struct Schedule {
    increments: Vec<f64>,
    partial: CompensatedSum,
    partials: Vec<f64>,
}

enum Step {
    Continue,
    Diverging,
    TrySettle,
}

impl Schedule {
    fn new() -> Self {
        Self {
            increments: Vec::new(),
            partial: CompensatedSum::new(),
            partials: Vec::new(),
        }
    }

    fn push(&mut self, inc: f64, cfg: &QuadConfig) -> Step {
        self.increments.push(inc);
        self.partial.add(inc);
        let partial = self.partial.value();
        self.partials.push(partial);
        let n = self.increments.len();
        let last3_big = n >= 3 && self.increments[n - 3..].iter().all(|&d| d > cfg.tol);
        if partial > cfg.divergence_threshold && last3_big {
            return Step::Diverging;
        }
        let w = cfg.persistence_window;
        if n >= 2 * w {
            let window = &self.increments[n - w..];
            let persistent = window.iter().all(|&d| d > cfg.tol) && window[w - 1] >= cfg.persistence_ratio * window[0];
            if persistent {
                return Step::Diverging;
            }
        }
        let small = n >= 4 && self.increments[n - 3..].iter().all(|&d| d <= cfg.tol / 4.0);
        if small {
            Step::TrySettle
        } else {
            Step::Continue
        }
    }

    fn partial(&self) -> f64 {
        self.partial.value()
    }
}

/// `∫_domain f` for a nonnegative `f`.
pub fn integrate<F>(domain: Domain, mut f: F, cfg: &QuadConfig) -> Result<IntegralEstimate, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    match domain {
        Domain::Interval(a, b) => {
            if b <= a {
                return Ok(IntegralEstimate::zero());
            }
            let p = adaptive(&mut f, a, b, cfg.tol, cfg.interval_budget)?;
            if p.infinite {
                return Ok(IntegralEstimate::diverging(f64::INFINITY, f64::INFINITY, p.evaluations, Vec::new()));
            }
            let verdict = if p.error <= cfg.tol {
                Convergence::Converged
            } else {
                Convergence::Inconclusive
            };
            Ok(IntegralEstimate {
                value: p.value,
                error: p.error,
                verdict,
                evaluations: p.evaluations,
                partials: Vec::new(),
            })
        }
        Domain::From(a) => integrate_from(a, f, cfg),
    }
}

fn integrate_from<F>(a: f64, mut f: F, cfg: &QuadConfig) -> Result<IntegralEstimate, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let piece_tol = cfg.tol / 32.0;
    let mut schedule = Schedule::new();
    let mut error = CompensatedSum::new();
    let mut evaluations = 0u64;
    for m in 0..cfg.max_doublings {
        let (lo, hi) = piece_bounds(a, m);
        let p = adaptive(&mut f, lo, hi, piece_tol, cfg.piece_budget)?;
        evaluations += p.evaluations;
        if p.infinite {
            let mut partials = schedule.partials;
            partials.push(f64::INFINITY);
            return Ok(IntegralEstimate::diverging(f64::INFINITY, f64::INFINITY, evaluations, partials));
        }
        error.add(p.error);
        match schedule.push(p.value, cfg) {
            Step::Continue => {}
            Step::Diverging => {
                let value = schedule.partial();
                return Ok(IntegralEstimate::diverging(value, error.value(), evaluations, schedule.partials));
            }
            Step::TrySettle => {
                let tail = compactified_tail(&mut f, hi, cfg)?;
                evaluations += tail.evaluations;
                if !tail.infinite && tail.value <= cfg.tol / 2.0 {
                    let value = schedule.partial() + tail.value;
                    let err = error.value() + tail.error;
                    let verdict = if err <= cfg.tol {
                        Convergence::Converged
                    } else {
                        Convergence::Inconclusive
                    };
                    return Ok(IntegralEstimate {
                        value,
                        error: err,
                        verdict,
                        evaluations,
                        partials: schedule.partials,
                    });
                }
            }
        }
    }
    Ok(IntegralEstimate {
        value: schedule.partial(),
        error: error.value(),
        verdict: Convergence::Inconclusive,
        evaluations,
        partials: schedule.partials,
    })
}

fn compactified_tail<F>(f: &mut F, b: f64, cfg: &QuadConfig) -> Result<Piece, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let mut g = |t: f64| -> Result<f64, QuadError> {
        let one_minus = 1.0 - t;
        let x = b + t / one_minus;
        if !x.is_finite() {
            return Ok(0.0);
        }
        let v = f(x)?;
        if v == 0.0 {
            return Ok(0.0);
        }
        Ok(v / (one_minus * one_minus))
    };
    adaptive(&mut g, 0.0, 1.0, cfg.tol / 4.0, cfg.piece_budget)
}

/// `∫_0^∞ φ(y) dy` with the domain split at `anchor`: `[anchor, ∞)` follows
/// the doubling schedule of [`integrate`], and `[0, anchor]` is covered by
/// pieces growing outward from `anchor`. Marginals `∫ φ(x, y) dy` whose
/// mass concentrates near the diagonal `y = x` stay resolved for large `x`.
pub fn integrate_anchored<F>(anchor: f64, mut f: F, cfg: &QuadConfig) -> Result<IntegralEstimate, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    if anchor.is_nan() || anchor <= 0.0 {
        return integrate(Domain::HALF_LINE, f, cfg);
    }
    let right = integrate(Domain::From(anchor), &mut f, cfg)?;
    if right.is_diverging() {
        return Ok(right);
    }
    let mut left = CompensatedSum::new();
    let mut error = right.error;
    let mut evaluations = right.evaluations;
    let mut g = |u: f64| f((anchor - u).max(0.0));
    let mut m = 0;
    loop {
        let (lo, hi) = piece_bounds(0.0, m);
        let hi = hi.min(anchor);
        let p = adaptive(&mut g, lo, hi, cfg.tol / 32.0, cfg.piece_budget)?;
        evaluations += p.evaluations;
        if p.infinite {
            return Ok(IntegralEstimate::diverging(f64::INFINITY, f64::INFINITY, evaluations, Vec::new()));
        }
        left.add(p.value);
        error += p.error;
        if hi >= anchor {
            break;
        }
        m += 1;
    }
    let verdict = match right.verdict {
        Convergence::Converged if error > cfg.tol => Convergence::Inconclusive,
        v => v,
    };
    Ok(IntegralEstimate {
        value: right.value + left.value(),
        error,
        verdict,
        evaluations,
        partials: right.partials,
    })
}

/// `∫_0^∞ φ(x) dx`.
pub fn integrate_halfline<F>(phi: F, tol: f64) -> Result<IntegralEstimate, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    integrate(Domain::HALF_LINE, phi, &QuadConfig::with_tol(tol))
}

/// `∫_outer ∫_inner φ(x, y) dy dx` by nested adaptivity. An inner integral
/// that diverges at some outer node makes the whole integral diverge; an
/// inconclusive inner integral makes a converged outer one inconclusive.
pub fn integrate_nested<F>(
    outer: Domain,
    inner: Domain,
    mut phi: F,
    cfg: &QuadConfig,
) -> Result<IntegralEstimate, QuadError>
where
    F: FnMut(f64, f64) -> Result<f64, QuadError>,
{
    let inner_cfg = QuadConfig {
        tol: cfg.tol / 10.0,
        ..*cfg
    };
    let inner_unsure = Cell::new(false);
    let inner_evals = Cell::new(0u64);
    let mut est = integrate(
        outer,
        |x| {
            let e = integrate(inner, |y| phi(x, y), &inner_cfg)?;
            inner_evals.set(inner_evals.get() + e.evaluations);
            if e.verdict == Convergence::Inconclusive {
                inner_unsure.set(true);
            }
            Ok(e.as_value())
        },
        cfg,
    )?;
    est.evaluations = inner_evals.get();
    if inner_unsure.get() && est.verdict == Convergence::Converged {
        est.verdict = Convergence::Inconclusive;
    }
    Ok(est)
}

/// `∫_0^∞ ∫_0^∞ φ(x, y) dy dx`.
pub fn integrate_plane<F>(phi: F, tol: f64) -> Result<IntegralEstimate, QuadError>
where
    F: FnMut(f64, f64) -> Result<f64, QuadError>,
{
    integrate_nested(Domain::HALF_LINE, Domain::HALF_LINE, phi, &QuadConfig::with_tol(tol))
}

/// The set `{x ∈ domain : φ(x) > c}` as resolved on the explored range.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperlevelSet {
    pub cutoff: f64,
    /// Disjoint, sorted intervals making up the set.
    pub intervals: Vec<Interval>,
    pub estimate: IntegralEstimate,
    /// Number of evaluations inside the set that returned `+∞`.
    pub infinite_points: usize,
    /// Right end of the explored range.
    pub explored: f64,
}

impl SuperlevelSet {
    pub fn contains(&self, x: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.hi <= x);
        i < self.intervals.len() && self.intervals[i].lo <= x
    }

    pub fn measure(&self) -> f64 {
        self.estimate.value
    }
}

const GRID_CELLS: usize = 32;
const BISECTION_DEPTH: u32 = 40;

struct SetBuilder {
    intervals: Vec<Interval>,
    unresolved: f64,
    infinite_points: usize,
    evaluations: u64,
}

impl SetBuilder {
    fn push(&mut self, lo: f64, hi: f64) {
        if hi <= lo {
            return;
        }
        match self.intervals.last_mut() {
            Some(last) if last.hi >= lo => last.hi = last.hi.max(hi),
            _ => self.intervals.push(Interval::new(lo, hi)),
        }
    }

    fn probe<F>(&mut self, f: &mut F, x: f64, c: f64) -> Result<bool, QuadError>
    where
        F: FnMut(f64) -> Result<f64, QuadError>,
    {
        self.evaluations += 1;
        let v = f(x)?;
        if v.is_nan() {
            return Err(QuadError::Eval {
                at: x,
                message: "NaN".into(),
            });
        }
        if v == f64::INFINITY {
            self.infinite_points += 1;
        }
        Ok(v > c)
    }

    #[allow(clippy::too_many_arguments)]
    fn split<F>(&mut self, f: &mut F, c: f64, lo: f64, hi: f64, above_lo: bool, above_hi: bool, depth: u32) -> Result<(), QuadError>
    where
        F: FnMut(f64) -> Result<f64, QuadError>,
    {
        if above_lo == above_hi {
            if above_lo {
                self.push(lo, hi);
            }
            return Ok(());
        }
        let mid = 0.5 * (lo + hi);
        if depth == 0 || !(mid > lo && mid < hi) {
            self.unresolved += hi - lo;
            if above_lo {
                self.push(lo, mid);
            } else {
                self.push(mid, hi);
            }
            return Ok(());
        }
        let above_mid = self.probe(f, mid, c)?;
        self.split(f, c, lo, mid, above_lo, above_mid, depth - 1)?;
        self.split(f, c, mid, hi, above_mid, above_hi, depth - 1)
    }

    /// Resolves `[lo, hi]` on a uniform grid, bisecting cells whose ends disagree.
    /// Returns the measure added.
    fn scan<F>(&mut self, f: &mut F, c: f64, lo: f64, hi: f64, cells: usize) -> Result<f64, QuadError>
    where
        F: FnMut(f64) -> Result<f64, QuadError>,
    {
        let before: f64 = self.total();
        let width = (hi - lo) / cells as f64;
        let mut left = lo;
        let mut above_left = self.probe(f, left, c)?;
        for i in 1..=cells {
            let right = if i == cells { hi } else { lo + width * i as f64 };
            let above_right = self.probe(f, right, c)?;
            self.split(f, c, left, right, above_left, above_right, BISECTION_DEPTH)?;
            left = right;
            above_left = above_right;
        }
        Ok(self.total() - before)
    }

    fn total(&self) -> f64 {
        self.intervals.iter().map(Interval::len).collect::<CompensatedSum>().value()
    }
}

/// `{x ∈ domain : φ(x) > c}` with its Lebesgue measure.
///
/// Each piece of the domain is scanned on a uniform grid; cells whose end
/// points fall on opposite sides of `c` are bisected to locate the crossing.
/// Half-line domains follow the doubling schedule and divergence policy of
/// [`integrate`], with the tail beyond the explored range probed on the
/// compactified variable.
pub fn superlevel_set<F>(mut f: F, c: f64, domain: Domain, cfg: &QuadConfig) -> Result<SuperlevelSet, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let mut b = SetBuilder {
        intervals: Vec::new(),
        unresolved: 0.0,
        infinite_points: 0,
        evaluations: 0,
    };
    match domain {
        Domain::Interval(lo, hi) => {
            if hi > lo {
                b.scan(&mut f, c, lo, hi, 4 * GRID_CELLS)?;
            }
            let value = b.total();
            Ok(SuperlevelSet {
                cutoff: c,
                estimate: IntegralEstimate {
                    value,
                    error: b.unresolved,
                    verdict: Convergence::Converged,
                    evaluations: b.evaluations,
                    partials: Vec::new(),
                },
                intervals: b.intervals,
                infinite_points: b.infinite_points,
                explored: hi,
            })
        }
        Domain::From(a) => {
            let mut schedule = Schedule::new();
            let mut verdict = Convergence::Inconclusive;
            let mut explored = a;
            for m in 0..cfg.max_doublings {
                let (lo, hi) = piece_bounds(a, m);
                let inc = b.scan(&mut f, c, lo, hi, GRID_CELLS)?;
                explored = hi;
                match schedule.push(inc, cfg) {
                    Step::Continue => {}
                    Step::Diverging => {
                        verdict = Convergence::Diverging;
                        break;
                    }
                    Step::TrySettle => {
                        let mut tail_hit = false;
                        for i in 1..=GRID_CELLS {
                            let t = i as f64 / (GRID_CELLS + 1) as f64;
                            let x = hi + hi.max(1.0) * t / (1.0 - t);
                            if b.probe(&mut f, x, c)? {
                                tail_hit = true;
                                break;
                            }
                        }
                        if !tail_hit {
                            verdict = if b.unresolved <= cfg.tol {
                                Convergence::Converged
                            } else {
                                Convergence::Inconclusive
                            };
                            break;
                        }
                    }
                }
            }
            let value = b.total();
            Ok(SuperlevelSet {
                cutoff: c,
                estimate: IntegralEstimate {
                    value,
                    error: b.unresolved,
                    verdict,
                    evaluations: b.evaluations,
                    partials: schedule.partials,
                },
                intervals: b.intervals,
                infinite_points: b.infinite_points,
                explored,
            })
        }
    }
}

/// `λ{x ≥ 0 : φ(x) > c}`.
pub fn measure_of_superlevel<F>(phi: F, c: f64, tol: f64) -> Result<IntegralEstimate, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    Ok(superlevel_set(phi, c, Domain::HALF_LINE, &QuadConfig::with_tol(tol))?.estimate)
}

/// Superlevel measures along escalating cutoffs; used to estimate `λ{φ = ∞}`
/// as the limit of `λ{φ > c}`. Callers should memoise `φ`, the cutoffs
/// share most evaluation points.
pub fn superlevel_cutoffs<F>(mut phi: F, cutoffs: &[f64], cfg: &QuadConfig) -> Result<Vec<SuperlevelSet>, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    cutoffs
        .iter()
        .map(|&c| superlevel_set(&mut phi, c, Domain::HALF_LINE, cfg))
        .collect()
}

/// The default escalating cutoffs `10, 10², …, 10⁶`.
pub fn default_cutoffs() -> Vec<f64> {
    (1..=6).map(|e| 10f64.powi(e)).collect()
}

fn as_level(x: f64, v: f64) -> Result<i64, QuadError> {
    let r = v.round();
    if !v.is_finite() || (v - r).abs() > 1e-9 || r < 0.0 {
        return Err(QuadError::NotInteger { at: x, value: v });
    }
    Ok(r as i64)
}

struct LevelBuilder {
    levels: BTreeMap<i64, CompensatedSum>,
}

impl LevelBuilder {
    fn add(&mut self, level: i64, width: f64) {
        if width > 0.0 {
            self.levels.entry(level).or_default().add(width);
        }
    }

    fn split<F>(&mut self, f: &mut F, lo: f64, hi: f64, l_lo: i64, l_hi: i64, depth: u32) -> Result<(), QuadError>
    where
        F: FnMut(f64) -> Result<f64, QuadError>,
    {
        if l_lo == l_hi {
            self.add(l_lo, hi - lo);
            return Ok(());
        }
        let mid = 0.5 * (lo + hi);
        if depth == 0 || !(mid > lo && mid < hi) {
            self.add(l_lo, mid - lo);
            self.add(l_hi, hi - mid);
            return Ok(());
        }
        let l_mid = as_level(mid, f(mid)?)?;
        self.split(f, lo, mid, l_lo, l_mid, depth - 1)?;
        self.split(f, mid, hi, l_mid, l_hi, depth - 1)
    }

    fn scan<F>(&mut self, f: &mut F, lo: f64, hi: f64, cells: usize) -> Result<(), QuadError>
    where
        F: FnMut(f64) -> Result<f64, QuadError>,
    {
        let width = (hi - lo) / cells as f64;
        let mut left = lo;
        let mut l_left = as_level(left, f(left)?)?;
        for i in 1..=cells {
            let right = if i == cells { hi } else { lo + width * i as f64 };
            let l_right = as_level(right, f(right)?)?;
            self.split(f, left, right, l_left, l_right, BISECTION_DEPTH)?;
            left = right;
            l_left = l_right;
        }
        Ok(())
    }

    fn positive_total(&self) -> f64 {
        self.levels.range(1..).map(|(_, s)| s.value()).sum()
    }

    fn finish(self) -> BTreeMap<i64, f64> {
        self.levels.into_iter().map(|(k, s)| (k, s.value())).collect()
    }
}

/// `k ↦ λ{x ∈ [a, b] : φ(x) = k}` for an integer-valued `φ`, assuming `φ`
/// is constant on grid cells whose end points agree.
pub fn level_set_measures<F>(mut f: F, a: f64, b: f64, cells: usize) -> Result<BTreeMap<i64, f64>, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let mut lb = LevelBuilder { levels: BTreeMap::new() };
    if b > a {
        lb.scan(&mut f, a, b, cells)?;
    }
    Ok(lb.finish())
}

/// `k ↦ λ{x ≥ 0 : φ(x) = k}` for `k ≥ 1`, over the doubling schedule.
///
/// The level `0` set has infinite measure and is omitted. Fails with
/// [`QuadError::DivergingLevelSet`] if the positive levels keep growing past
/// the divergence threshold.
pub fn level_set_measures_halfline<F>(mut f: F, cfg: &QuadConfig) -> Result<BTreeMap<i64, f64>, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let mut lb = LevelBuilder { levels: BTreeMap::new() };
    let mut schedule = Schedule::new();
    let mut explored = 0.0;
    for m in 0..cfg.max_doublings {
        let (lo, hi) = piece_bounds(0.0, m);
        let before = lb.positive_total();
        lb.scan(&mut f, lo, hi, GRID_CELLS)?;
        explored = hi;
        match schedule.push(lb.positive_total() - before, cfg) {
            Step::Continue => {}
            Step::Diverging => {
                return Err(QuadError::DivergingLevelSet {
                    threshold: cfg.divergence_threshold,
                    explored,
                })
            }
            Step::TrySettle => {
                let mut tail_hit = false;
                for i in 1..=GRID_CELLS {
                    let t = i as f64 / (GRID_CELLS + 1) as f64;
                    let x = hi + hi * t / (1.0 - t);
                    if as_level(x, f(x)?)? != 0 {
                        tail_hit = true;
                        break;
                    }
                }
                if !tail_hit {
                    let mut out = lb.finish();
                    out.remove(&0);
                    return Ok(out);
                }
            }
        }
    }
    Err(QuadError::DivergingLevelSet {
        threshold: cfg.divergence_threshold,
        explored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ok(f: impl Fn(f64) -> f64) -> impl FnMut(f64) -> Result<f64, QuadError> {
        move |x| Ok(f(x))
    }

    #[test]
    fn halfline_examples() {
        let e = integrate_halfline(ok(|x| (-x).exp()), 1e-6).unwrap();
        assert!(e.is_converged());
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-6);

        let e = integrate_halfline(ok(|x| 1.0 / (1.0 + x).powi(2)), 1e-6).unwrap();
        assert!(e.is_converged(), "{e:?}");
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-6);

        let e = integrate_halfline(ok(|x| 1.0 / (1.0 + x)), 1e-6).unwrap();
        assert!(e.is_diverging(), "{e:?}");
        // the partial integrals follow log(1 + 2^m)
        for (m, p) in e.partials.iter().enumerate() {
            assert_abs_diff_eq!(*p, (1.0 + 2f64.powi(m as i32)).ln(), epsilon = 1e-6);
        }
    }

    #[test]
    fn anchored_integration_resolves_diagonal_peaks() {
        let cfg = QuadConfig::with_tol(1e-6);
        for &x in &[0.0, 0.5, 7.0, 3e3, 5e5] {
            let e = integrate_anchored(x, ok(move |y: f64| (-(x - y).abs()).exp()), &cfg).unwrap();
            assert!(e.is_converged(), "{x}: {e:?}");
            assert_abs_diff_eq!(e.value, 2.0 - (-x).exp(), epsilon = 1e-6);
        }
        let e = integrate_anchored(3.0, ok(|_| 1.0), &cfg).unwrap();
        assert!(e.is_diverging());
    }

    #[test]
    fn threshold_rule_for_fast_growth() {
        let e = integrate_halfline(ok(|_| 1.0), 1e-6).unwrap();
        assert!(e.is_diverging());
        assert!(e.value > 1e6);
        let w = e.partials.len();
        assert!(w < 25, "{w}");
    }

    #[test]
    fn partials_are_monotone() {
        for f in [|x: f64| (-x).exp(), |x: f64| 1.0 / (1.0 + x), |x: f64| (x * 3.0).sin().abs()] {
            let e = integrate_halfline(ok(f), 1e-6).unwrap();
            assert!(e.partials.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn negative_integrand_is_rejected() {
        let err = integrate_halfline(ok(|x| x - 1.0), 1e-6).unwrap_err();
        assert!(matches!(err, QuadError::NegativeIntegrand { .. }));
    }

    #[test]
    fn indicator_on_interval() {
        let e = integrate(Domain::Interval(0.0, 1.0), ok(|z| if z <= 0.3 { 2.0 } else { 0.0 }), &QuadConfig::with_tol(1e-7)).unwrap();
        assert!(e.is_converged());
        assert_abs_diff_eq!(e.value, 0.6, epsilon = 1e-7);
    }

    #[test]
    fn plane_examples() {
        let e = integrate_plane(|x, y| Ok((-x - y).exp()), 1e-4).unwrap();
        assert!(e.is_converged());
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-4);

        let e = integrate_plane(|_, _| Ok(0.0), 1e-4).unwrap();
        assert!(e.is_converged());
        assert_eq!(e.value, 0.0);

        let g = |x: f64, y: f64| {
            if (0.0..=1.0).contains(&x) && (y.floor() as i64) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        };
        let e = integrate_plane(|x, y| Ok(g(x, y)), 1e-4).unwrap();
        assert!(e.is_diverging(), "{e:?}");
    }

    #[test]
    fn superlevel_examples() {
        let e = measure_of_superlevel(ok(|x| (-x).exp()), 1.0, 1e-6).unwrap();
        assert!(e.is_converged());
        assert_eq!(e.value, 0.0);

        let e = measure_of_superlevel(ok(|x| if x <= 3.0 { 2.0 } else { 0.0 }), 1.0, 1e-6).unwrap();
        assert!(e.is_converged());
        assert_abs_diff_eq!(e.value, 3.0, epsilon = 1e-6);

        // crossing strictly inside a grid cell
        let e = measure_of_superlevel(ok(|x| if x < 0.7 { 5.0 } else { 0.0 }), 1.0, 1e-6).unwrap();
        assert_abs_diff_eq!(e.value, 0.7, epsilon = 1e-9);

        let set = superlevel_set(ok(|x| 1.0 / (x + 0.1)), 2.0, Domain::HALF_LINE, &QuadConfig::default()).unwrap();
        assert!(set.contains(0.3) && !set.contains(0.5));
        assert_abs_diff_eq!(set.measure(), 0.4, epsilon = 1e-9);
    }

    #[test]
    fn superlevel_divergence() {
        let e = measure_of_superlevel(ok(|x| if (x.floor() as i64) % 2 == 0 { 2.0 } else { 0.0 }), 1.0, 1e-6).unwrap();
        assert!(e.is_diverging(), "{e:?}");
    }

    #[test]
    fn level_sets() {
        let m = level_set_measures(ok(|z| if z <= 0.3 { 2.0 } else { 0.0 }), 0.0, 1.0, 64).unwrap();
        assert_abs_diff_eq!(m[&2], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(m[&0], 0.7, epsilon = 1e-10);

        let m = level_set_measures_halfline(ok(|y| if y <= 2.0 { 1.0 } else { 0.0 }), &QuadConfig::default()).unwrap();
        assert_eq!(m.len(), 1);
        assert_abs_diff_eq!(m[&1], 2.0, epsilon = 1e-10);

        assert!(level_set_measures_halfline(ok(|_| 0.0), &QuadConfig::default()).unwrap().is_empty());

        assert!(matches!(
            level_set_measures(ok(|z| z), 0.0, 1.0, 8),
            Err(QuadError::NotInteger { .. })
        ));
        assert!(matches!(
            level_set_measures_halfline(ok(|y| if (y.floor() as i64) % 2 == 0 { 1.0 } else { 0.0 }), &QuadConfig::default()),
            Err(QuadError::DivergingLevelSet { .. })
        ));
    }
}
