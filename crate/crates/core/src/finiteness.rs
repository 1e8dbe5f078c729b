//! Local-finiteness certification.
//!
//! A Kallenberg representation is checked against six integrability
//! conditions on its marginals, a multigraphex against the integrability of
//! its star intensity and conditions (a)–(c) on `μ_W`. Both reduce to two
//! building blocks: the a.s. convergence of Poisson integrals `ηφ` and
//! `η²h`, decided from the Lebesgue integrals of `φ̂ = φ ∧ 1`.

use crate::dsl::Var;
use crate::model::{Function, KallenbergRep, Model, ModelError, Multigraphex};
use crate::poisson;
use crate::quadrature::{self, Convergence, Domain, IntegralEstimate, QuadConfig, QuadError, SuperlevelSet};
use crate::rng::{label, RngKey};
use crate::sum::CompensatedSum;
use crate::types::{ConditionRecord, ConditionStatus, CutoffMeasure, Verdict};
use serde::Serialize;
use std::cell::{Cell, RefCell};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FinitenessError {
    #[error("ψ is defined for nonnegative arguments, got {0}")]
    NegativeInput(f64),
}

/// `ψ(x) = 1 - e^{-x}`.
pub fn psi(x: f64) -> Result<f64, FinitenessError> {
    if x < 0.0 || x.is_nan() {
        return Err(FinitenessError::NegativeInput(x));
    }
    Ok(-(-x).exp_m1())
}

#[derive(Debug, Clone)]
pub struct CertifyConfig {
    pub tol_1d: f64,
    pub tol_2d: f64,
    /// Tolerance of the inner `z`-integral `f̂₃(x, y) = ∫_0^1 f̂(x, y, z) dz`.
    pub tol_z: f64,
    /// Escalating cutoffs for `λ{φ = ∞}`.
    pub cutoffs: Vec<f64>,
    /// Marginal values within `slack` of 1 count as `≤ 1`.
    pub slack: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            tol_1d: QuadConfig::DEFAULT_TOL_1D,
            tol_2d: QuadConfig::DEFAULT_TOL_2D,
            tol_z: 1e-7,
            cutoffs: quadrature::default_cutoffs(),
            slack: 1e-6,
        }
    }
}

impl CertifyConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol_1d: tol,
            tol_2d: tol.max(QuadConfig::DEFAULT_TOL_2D),
            ..Self::default()
        }
    }

    fn quad_1d(&self) -> QuadConfig {
        QuadConfig::with_tol(self.tol_1d)
    }

    fn quad_2d(&self) -> QuadConfig {
        QuadConfig::with_tol(self.tol_2d)
    }
}

fn model_err(e: ModelError) -> QuadError {
    QuadError::Eval {
        at: f64::NAN,
        message: e.to_string(),
    }
}

/// Point values of a marginal, cached by argument. Inner integrals that
/// diverge are stored as `+∞`.
struct Memo<'a> {
    f: Box<dyn Fn(f64) -> Result<IntegralEstimate, QuadError> + 'a>,
    cache: RefCell<HashMap<u64, f64>>,
    unsure: Cell<bool>,
}

impl<'a> Memo<'a> {
    fn new(f: impl Fn(f64) -> Result<IntegralEstimate, QuadError> + 'a) -> Self {
        Self {
            f: Box::new(f),
            cache: RefCell::new(HashMap::new()),
            unsure: Cell::new(false),
        }
    }

    fn get(&self, x: f64) -> Result<f64, QuadError> {
        if let Some(v) = self.cache.borrow().get(&x.to_bits()) {
            return Ok(*v);
        }
        let e = (self.f)(x)?;
        if e.verdict == Convergence::Inconclusive {
            self.unsure.set(true);
        }
        let v = e.as_value();
        self.cache.borrow_mut().insert(x.to_bits(), v);
        Ok(v)
    }
}

fn short(x: f64) -> String {
    if x.is_infinite() {
        "∞".to_string()
    } else if (x - x.round()).abs() < 1e-6 {
        format!("{}", x.round())
    } else {
        format!("{x:.4}")
    }
}

fn worst(a: ConditionStatus, b: ConditionStatus) -> ConditionStatus {
    use ConditionStatus::*;
    match (a, b) {
        (Violated, _) | (_, Violated) => Violated,
        (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
        (Skipped, _) | (_, Skipped) => Skipped,
        _ => Holds,
    }
}

fn status_of(e: &IntegralEstimate) -> ConditionStatus {
    match e.verdict {
        Convergence::Converged => ConditionStatus::Holds,
        Convergence::Diverging => ConditionStatus::Violated,
        Convergence::Inconclusive => ConditionStatus::Inconclusive,
    }
}

fn failed(mut rec: ConditionRecord, e: QuadError) -> ConditionRecord {
    rec.status = ConditionStatus::Inconclusive;
    rec.witness = Some(format!("could not be evaluated: {e}"));
    rec
}

/// Outcome of the `λ{φ = ∞} = 0` check.
struct InfinityCheck {
    status: ConditionStatus,
    measure: f64,
    error: f64,
    cutoffs: Vec<CutoffMeasure>,
    witness: Option<String>,
}

/// `λ{φ = ∞} = 0` decided from `λ{φ > c}` along the escalating cutoffs: it
/// holds when the measure at the largest cutoff is below `tol`; it is
/// violated when the measures stabilise above `tol` (or diverge) and points
/// with `φ = ∞` were certified along the way; otherwise inconclusive.
fn infinity_check(name: &str, phi: &Memo, cfg: &CertifyConfig) -> Result<InfinityCheck, QuadError> {
    let qcfg = cfg.quad_1d();
    let sets: Vec<SuperlevelSet> = cfg
        .cutoffs
        .iter()
        .map(|&c| quadrature::superlevel_set(|x| phi.get(x), c, Domain::HALF_LINE, &qcfg))
        .collect::<Result<_, _>>()?;
    let cutoffs: Vec<CutoffMeasure> = sets
        .iter()
        .map(|s| CutoffMeasure {
            cutoff: s.cutoff,
            measure: if s.estimate.is_diverging() { f64::INFINITY } else { s.measure() },
            error: s.estimate.error,
            converged: s.estimate.is_converged(),
        })
        .collect();
    let last = sets.last().expect("at least one cutoff");
    let infinite_points: usize = sets.iter().map(|s| s.infinite_points).sum();
    let measures: Vec<f64> = cutoffs.iter().map(|c| c.measure).collect();
    let mut out = InfinityCheck {
        status: ConditionStatus::Inconclusive,
        measure: measures.last().copied().unwrap_or(f64::NAN),
        error: last.estimate.error,
        cutoffs,
        witness: None,
    };
    if last.estimate.is_converged() && last.measure() <= cfg.tol_1d {
        out.status = ConditionStatus::Holds;
        return Ok(out);
    }
    if sets.iter().any(|s| s.estimate.is_diverging()) {
        if infinite_points > 0 {
            out.status = ConditionStatus::Violated;
            out.witness = Some(format!("λ{{{name}=∞}} = ∞ > 0"));
        } else {
            out.witness = Some(format!("λ{{{name} > c}} diverges but no point with {name}=∞ was certified"));
        }
        return Ok(out);
    }
    let max = measures.iter().cloned().fold(f64::MIN, f64::max);
    let min = measures.iter().cloned().fold(f64::MAX, f64::min);
    let stable = max - min <= 0.05 * max + cfg.tol_1d;
    if stable && last.measure() > cfg.tol_1d && last.infinite_points > 0 {
        out.status = ConditionStatus::Violated;
        out.witness = Some(format!("λ{{{name}=∞}} ≈ {} > 0", short(last.measure())));
    } else {
        out.witness = Some(format!(
            "λ{{{name} > {}}} ≈ {} does not vanish and is not certified infinite",
            short(last.cutoff),
            short(last.measure())
        ));
    }
    Ok(out)
}

/// The four clauses of the `η²h < ∞` criterion for `ĥ` with values in `[0, 1]`.
struct QuadraticEvidence {
    /// `λ{h₁ = ∞} = λ{h₂ = ∞} = 0`
    infinite: ConditionRecord,
    /// `λ{h₁ > 1}, λ{h₂ > 1} < ∞`
    superlevel: ConditionRecord,
    /// `∫∫ ĥ 1{h₁(x) ∨ h₂(y) ≤ 1} < ∞`
    plane: ConditionRecord,
    /// `∫ ĥ(x, x) dx < ∞`
    diagonal: ConditionRecord,
}

fn quadratic_evidence<H>(h: &H, names: (&str, &str), symmetric: bool, cfg: &CertifyConfig) -> QuadraticEvidence
where
    H: Fn(f64, f64) -> Result<f64, QuadError>,
{
    let q1 = cfg.quad_1d();
    let h1 = Memo::new(|x| quadrature::integrate_anchored(x, |y| h(x, y), &q1));
    let h2 = Memo::new(|y| quadrature::integrate_anchored(y, |x| h(x, y), &q1));
    let second = if symmetric { &h1 } else { &h2 };
    let marginals = if symmetric { vec![(names.0, &h1)] } else { vec![(names.0, &h1), (names.1, &h2)] };
    let pair = if symmetric {
        names.0.to_string()
    } else {
        format!("{}, {}", names.0, names.1)
    };

    let mut infinite = ConditionRecord::new("", &format!("λ{{{pair} = ∞}} = 0"));
    infinite.status = ConditionStatus::Holds;
    infinite.estimate = 0.0;
    infinite.error = 0.0;
    for (name, m) in &marginals {
        match infinity_check(name, m, cfg) {
            Ok(chk) => {
                if chk.status != ConditionStatus::Holds && infinite.witness.is_none() {
                    infinite.witness = chk.witness.clone();
                }
                if infinite.cutoffs.is_empty() || chk.status == ConditionStatus::Violated {
                    infinite.cutoffs = chk.cutoffs;
                }
                infinite.status = worst(infinite.status, chk.status);
                infinite.estimate = infinite.estimate.max(chk.measure);
                infinite.error = infinite.error.max(chk.error);
            }
            Err(e) => infinite = failed(infinite, e),
        }
    }

    let mut superlevel = ConditionRecord::new("", &format!("λ{{{pair} > 1}} < ∞"));
    superlevel.status = ConditionStatus::Holds;
    superlevel.estimate = 0.0;
    superlevel.error = 0.0;
    for (name, m) in &marginals {
        match quadrature::superlevel_set(|x| m.get(x), 1.0 + cfg.slack, Domain::HALF_LINE, &q1) {
            Ok(set) => {
                let st = status_of(&set.estimate);
                if st == ConditionStatus::Violated {
                    superlevel.witness = Some(format!("λ{{{name} > 1}} diverges"));
                }
                superlevel.status = worst(superlevel.status, st);
                superlevel.estimate += set.estimate.as_value();
                superlevel.error += set.estimate.error;
            }
            Err(e) => superlevel = failed(superlevel, e),
        }
    }

    let mut plane = ConditionRecord::new("", &format!("∫∫ ĥ 1{{{} ∨ {} ≤ 1}} < ∞", names.0, names.1));
    let limit = 1.0 + cfg.slack;
    let q2 = cfg.quad_2d();
    let inner_cfg = QuadConfig::with_tol(cfg.tol_2d / 10.0);
    let inner_unsure = Cell::new(false);
    let outer = quadrature::integrate(
        Domain::HALF_LINE,
        |x| {
            if h1.get(x)? > limit {
                return Ok(0.0);
            }
            let e = quadrature::integrate_anchored(
                x,
                |y| {
                    if second.get(y)? > limit {
                        Ok(0.0)
                    } else {
                        h(x, y)
                    }
                },
                &inner_cfg,
            )?;
            if e.verdict == Convergence::Inconclusive {
                inner_unsure.set(true);
            }
            Ok(e.as_value())
        },
        &q2,
    );
    plane = match outer {
        Ok(e) => {
            plane.estimate = e.as_value();
            plane.error = e.error;
            plane.status = status_of(&e);
            if plane.status == ConditionStatus::Holds && inner_unsure.get() {
                plane.status = ConditionStatus::Inconclusive;
                plane.witness = Some("inner integrals did not meet the tolerance".into());
            }
            if plane.status == ConditionStatus::Violated {
                plane.witness = Some("the restricted plane integral diverges".into());
            }
            plane
        }
        Err(e) => failed(plane, e),
    };

    let mut diagonal = ConditionRecord::new("", "∫ ĥ(x, x) dx < ∞");
    diagonal = match quadrature::integrate(Domain::HALF_LINE, |x| h(x, x), &q1) {
        Ok(e) => {
            diagonal.estimate = e.as_value();
            diagonal.error = e.error;
            diagonal.status = status_of(&e);
            if diagonal.status == ConditionStatus::Violated {
                diagonal.witness = Some("the diagonal integral diverges".into());
            }
            diagonal
        }
        Err(e) => failed(diagonal, e),
    };

    for (name, m) in &marginals {
        if m.unsure.get() && infinite.status == ConditionStatus::Holds && superlevel.status == ConditionStatus::Holds {
            superlevel.status = ConditionStatus::Inconclusive;
            superlevel.witness = Some(format!("some values of {name} did not meet the tolerance"));
        }
    }
    QuadraticEvidence {
        infinite,
        superlevel,
        plane,
        diagonal,
    }
}

fn relabel(mut rec: ConditionRecord, id: &str) -> ConditionRecord {
    rec.id = id.to_string();
    rec
}

/// Merges the `= ∞` and `> 1` clauses into one record.
fn merge(id: &str, description: &str, a: ConditionRecord, b: ConditionRecord) -> ConditionRecord {
    let mut rec = ConditionRecord::new(id, description);
    rec.status = worst(a.status, b.status);
    rec.estimate = b.estimate;
    rec.error = a.error.max(b.error);
    rec.witness = match (a.status, b.status) {
        (ConditionStatus::Holds, _) => b.witness,
        (_, ConditionStatus::Violated) if a.status != ConditionStatus::Violated => b.witness,
        _ => a.witness,
    };
    rec.cutoffs = a.cutoffs;
    rec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PoissonClass {
    FiniteAS,
    InfiniteAS,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearClassification {
    pub class: PoissonClass,
    /// `λφ̂`
    pub estimate: IntegralEstimate,
}

/// Whether `ηφ < ∞` a.s. for a unit-rate Poisson process `η` on `ℝ₊`,
/// decided by `λφ̂ < ∞`.
pub fn poisson_linear_classify<F>(mut phi: F, tol: f64) -> Result<LinearClassification, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let estimate = quadrature::integrate_halfline(|x| phi(x).map(|v| v.min(1.0)), tol)?;
    let class = match estimate.verdict {
        Convergence::Converged => PoissonClass::FiniteAS,
        Convergence::Diverging => PoissonClass::InfiniteAS,
        Convergence::Inconclusive => PoissonClass::Inconclusive,
    };
    Ok(LinearClassification { class, estimate })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticClassification {
    pub class: PoissonClass,
    /// Clauses `(i)`..`(iv)`.
    pub clauses: Vec<ConditionRecord>,
}

/// Whether `η²h = Σ_{i,j} h(x_i, x_j) < ∞` a.s., from the four clauses on
/// the marginals `h₁(x) = ∫ ĥ(x, y) dy`, `h₂(y) = ∫ ĥ(x, y) dx`.
pub fn poisson_quadratic_classify<H>(h: H, cfg: &CertifyConfig) -> QuadraticClassification
where
    H: Fn(f64, f64) -> Result<f64, QuadError>,
{
    let hat = |x: f64, y: f64| h(x, y).map(|v| v.min(1.0));
    let ev = quadratic_evidence(&hat, ("h₁", "h₂"), false, cfg);
    let clauses = vec![
        relabel(ev.infinite, "(i)"),
        relabel(ev.superlevel, "(ii)"),
        relabel(ev.plane, "(iii)"),
        relabel(ev.diagonal, "(iv)"),
    ];
    let class = if clauses.iter().any(|c| c.status == ConditionStatus::Violated) {
        PoissonClass::InfiniteAS
    } else if clauses.iter().all(|c| c.status == ConditionStatus::Holds) {
        PoissonClass::FiniteAS
    } else {
        PoissonClass::Inconclusive
    };
    QuadraticClassification { class, clauses }
}

fn same_function(a: &Function, b: &Function) -> bool {
    match (a, b) {
        (Function::Zero, Function::Zero) => true,
        (Function::Expr { expr: x, .. }, Function::Expr { expr: y, .. }) => x == y,
        (Function::Native(x), Function::Native(y)) => std::sync::Arc::ptr_eq(x, y),
        _ => false,
    }
}

/// The marginal functionals of a representation.
pub struct Marginals<'a> {
    rep: &'a KallenbergRep,
    cfg: CertifyConfig,
    /// `f` is an expression without `z`, so `f̂₃ = f̂(·, ·, 0)`.
    z_free: bool,
}

impl<'a> Marginals<'a> {
    pub fn new(rep: &'a KallenbergRep, cfg: &CertifyConfig) -> Self {
        let z_free = matches!(&rep.f, Function::Expr { expr, .. } if !expr.free_vars().contains(&Var::Z));
        Self {
            rep,
            cfg: cfg.clone(),
            z_free,
        }
    }

    /// `f̂₃(x, y) = ∫_0^1 f̂(x, y, z) dz`, in `[0, 1]`.
    pub fn f_hat3(&self, x: f64, y: f64) -> Result<f64, QuadError> {
        if self.rep.f.is_zero() {
            return Ok(0.0);
        }
        if self.z_free {
            return self.rep.f.value("f", &[x, y, 0.0]).map(|v| v.min(1.0)).map_err(model_err);
        }
        let e = quadrature::integrate(
            Domain::UNIT,
            |z| self.rep.f.value("f", &[x, y, z]).map(|v| v.min(1.0)).map_err(model_err),
            &QuadConfig::with_tol(self.cfg.tol_z),
        )?;
        Ok(e.value.clamp(0.0, 1.0))
    }

    /// `f₁(x) = ∫_0^∞ f̂₃(x, y) dy`.
    pub fn f1(&self, x: f64) -> Result<IntegralEstimate, QuadError> {
        quadrature::integrate_anchored(x, |y| self.f_hat3(x, y), &self.cfg.quad_1d())
    }

    /// `f₂(y) = ∫_0^∞ f̂₃(x, y) dx`.
    pub fn f2(&self, y: f64) -> Result<IntegralEstimate, QuadError> {
        quadrature::integrate_anchored(y, |x| self.f_hat3(x, y), &self.cfg.quad_1d())
    }

    fn star(&self, g: &Function, name: &str, x: f64) -> Result<IntegralEstimate, QuadError> {
        if g.is_zero() {
            return Ok(IntegralEstimate::zero());
        }
        quadrature::integrate_anchored(
            x,
            |y| g.value(name, &[x, y]).map(|v| v.min(1.0)).map_err(model_err),
            &self.cfg.quad_1d(),
        )
    }

    /// `g₁(x) = ∫_0^∞ ĝ(x, y) dy`.
    pub fn g1(&self, x: f64) -> Result<IntegralEstimate, QuadError> {
        self.star(&self.rep.g, "g", x)
    }

    /// `g₁'(x) = ∫_0^∞ ĝ'(x, y) dy`.
    pub fn g1_prime(&self, x: f64) -> Result<IntegralEstimate, QuadError> {
        self.star(&self.rep.g_prime, "g'", x)
    }
}

/// `μ_W(x) = ∫_0^∞ (1 - W(x, y, 0)) dy`.
pub fn mu_w(mg: &Multigraphex, x: f64, cfg: &CertifyConfig) -> Result<IntegralEstimate, QuadError> {
    quadrature::integrate_anchored(
        x,
        |y| mg.w.edge_probability(x, y).map_err(model_err),
        &cfg.quad_1d(),
    )
}

fn line_and_dust(rep: &KallenbergRep, cfg: &CertifyConfig) -> ConditionRecord {
    let mut rec = ConditionRecord::new("(i)", "λ(l̂ + l̂' + ĥ + ĥ') < ∞");
    rec.status = ConditionStatus::Holds;
    let mut total = CompensatedSum::new();
    let mut error = 0.0;
    for (name, f) in [("l", &rep.l), ("l'", &rep.l_prime), ("h", &rep.h), ("h'", &rep.h_prime)] {
        if f.is_zero() {
            continue;
        }
        match quadrature::integrate_halfline(|x| f.value(name, &[x]).map(|v| v.min(1.0)).map_err(model_err), cfg.tol_1d) {
            Ok(e) => {
                let st = status_of(&e);
                if st == ConditionStatus::Violated && rec.status != ConditionStatus::Violated {
                    rec.witness = Some(format!("λ({name}^) diverges"));
                } else if st == ConditionStatus::Inconclusive && rec.witness.is_none() {
                    rec.witness = Some(format!("λ({name}^) did not settle"));
                }
                rec.status = worst(rec.status, st);
                total.add(e.as_value());
                error += e.error;
            }
            Err(e) => return failed(rec, e),
        }
    }
    rec.estimate = total.value();
    rec.error = error;
    rec
}

fn star_conditions(rep: &KallenbergRep, m: &Marginals, cfg: &CertifyConfig) -> (ConditionRecord, ConditionRecord) {
    let g1 = Memo::new(|x| m.g1(x));
    let g1p = Memo::new(|x| m.g1_prime(x));
    let shared = same_function(&rep.g, &rep.g_prime);
    let parts: Vec<(&str, &Memo, bool)> = vec![
        ("g₁", &g1, rep.g.is_zero()),
        ("g₁'", if shared { &g1 } else { &g1p }, rep.g_prime.is_zero()),
    ];

    let mut ii = ConditionRecord::new("(ii)", "λ{g₁ = ∞} = λ{g₁' = ∞} = 0");
    ii.status = ConditionStatus::Holds;
    ii.estimate = 0.0;
    ii.error = 0.0;
    for (name, memo, zero) in &parts {
        if *zero {
            continue;
        }
        match infinity_check(name, memo, cfg) {
            Ok(chk) => {
                if chk.status != ConditionStatus::Holds && ii.status != ConditionStatus::Violated {
                    ii.witness = chk.witness.clone();
                }
                if ii.cutoffs.is_empty() || (chk.status == ConditionStatus::Violated && ii.status != ConditionStatus::Violated) {
                    ii.cutoffs = chk.cutoffs;
                }
                ii.status = worst(ii.status, chk.status);
                ii.estimate = ii.estimate.max(chk.measure);
                ii.error = ii.error.max(chk.error);
            }
            Err(e) => {
                ii = failed(ii, e);
                break;
            }
        }
    }

    let mut iii = ConditionRecord::new("(iii)", "λ(ĝ₁ + ĝ₁') < ∞");
    if ii.status == ConditionStatus::Violated {
        iii.status = ConditionStatus::Skipped;
        iii.witness = Some("not evaluated: (ii) is violated, so ĝ₁ is not finite a.e.".into());
        return (ii, iii);
    }
    iii.status = ConditionStatus::Holds;
    let mut total = 0.0;
    let mut error = 0.0;
    for (name, memo, zero) in &parts {
        if *zero {
            continue;
        }
        match quadrature::integrate_halfline(|x| memo.get(x).map(|v| v.min(1.0)), cfg.tol_1d) {
            Ok(e) => {
                let st = status_of(&e);
                if st == ConditionStatus::Violated {
                    iii.witness = Some(format!("λ({name}^) diverges"));
                }
                if memo.unsure.get() && st == ConditionStatus::Holds {
                    iii.status = worst(iii.status, ConditionStatus::Inconclusive);
                    iii.witness.get_or_insert_with(|| format!("some values of {name} did not meet the tolerance"));
                }
                iii.status = worst(iii.status, st);
                total += e.as_value();
                error += e.error;
            }
            Err(e) => return (ii, failed(iii, e)),
        }
    }
    iii.estimate = total;
    iii.error = error;
    (ii, iii)
}

/// Checks the six local-finiteness conditions of a representation.
pub fn certify_kallenberg(rep: &KallenbergRep, cfg: &CertifyConfig) -> Verdict {
    let mut evidence = vec![line_and_dust(rep, cfg)];
    let m = Marginals::new(rep, cfg);
    let (ii, iii) = star_conditions(rep, &m, cfg);
    evidence.push(ii);
    evidence.push(iii);
    if rep.f.is_zero() {
        for (id, d) in [
            ("(iv)", "λ{f_i = ∞} = 0 and λ{f_i > 1} < ∞, i = 1, 2"),
            ("(v)", "∫∫∫ f̂ 1{f₁(x) ∨ f₂(y) ≤ 1} < ∞"),
            ("(vi)", "∫∫ f̂(x, x, z) dz dx < ∞"),
        ] {
            let mut rec = ConditionRecord::new(id, d);
            rec.status = ConditionStatus::Holds;
            rec.estimate = 0.0;
            rec.error = 0.0;
            evidence.push(rec);
        }
    } else {
        let f3 = |x: f64, y: f64| m.f_hat3(x, y);
        let ev = quadratic_evidence(&f3, ("f₁", "f₂"), rep.f_symmetric, cfg);
        evidence.push(merge(
            "(iv)",
            "λ{f_i = ∞} = 0 and λ{f_i > 1} < ∞, i = 1, 2",
            ev.infinite,
            ev.superlevel,
        ));
        let mut v = relabel(ev.plane, "(v)");
        v.description = "∫∫∫ f̂ 1{f₁(x) ∨ f₂(y) ≤ 1} < ∞".into();
        evidence.push(v);
        let mut vi = relabel(ev.diagonal, "(vi)");
        vi.description = "∫∫ f̂(x, x, z) dz dx < ∞".into();
        evidence.push(vi);
    }
    Verdict::from_evidence(evidence)
}

/// Checks a multigraphex: integrability of `min{Σ_{k≥1} S(·, k), 1}`,
/// summability of `I`, and conditions (a)–(c) on `μ_W`.
pub fn certify_multigraphex(mg: &Multigraphex, cfg: &CertifyConfig) -> Verdict {
    let mut evidence = Vec::new();

    let mut s_rec = ConditionRecord::new("(S)", "min{Σ_{k≥1} S(·, k), 1} is integrable");
    if mg.s.is_zero() {
        s_rec.status = ConditionStatus::Holds;
        s_rec.estimate = mg.s_tail;
        s_rec.error = 0.0;
    } else {
        let intensity = Memo::new(|v| {
            let value = match mg.s.atom_intensity(v) {
                Ok(m) => m,
                Err(ModelError::Quadrature {
                    source: QuadError::DivergingLevelSet { .. },
                    ..
                }) => f64::INFINITY,
                Err(e) => return Err(model_err(e)),
            };
            Ok(IntegralEstimate {
                value,
                ..IntegralEstimate::zero()
            })
        });
        s_rec = match infinity_check("Σ_k S", &intensity, cfg) {
            Ok(chk) if chk.status != ConditionStatus::Holds => {
                s_rec.status = chk.status;
                s_rec.estimate = chk.measure;
                s_rec.error = chk.error;
                s_rec.witness = chk.witness;
                s_rec.cutoffs = chk.cutoffs;
                s_rec
            }
            Ok(_) => match quadrature::integrate_halfline(|v| intensity.get(v).map(|m| m.min(1.0)), cfg.tol_1d) {
                Ok(e) => {
                    s_rec.status = status_of(&e);
                    s_rec.estimate = e.as_value() + mg.s_tail;
                    s_rec.error = e.error;
                    if s_rec.status == ConditionStatus::Violated {
                        s_rec.witness = Some("∫ min{Σ_k S, 1} diverges".into());
                    }
                    s_rec
                }
                Err(e) => failed(s_rec, e),
            },
            Err(e) => failed(s_rec, e),
        };
    }
    evidence.push(s_rec);

    let mut i_rec = ConditionRecord::new("(I)", "Σ_k I(k) < ∞");
    i_rec.status = ConditionStatus::Holds;
    i_rec.estimate = mg.dust_intensity() + mg.i_tail;
    i_rec.error = mg.i_tail;
    evidence.push(i_rec);

    let descriptions = [
        ("(a)", "λ{μ_W = ∞} = 0 and λ{μ_W > 1} < ∞"),
        ("(b)", "∫∫ (1 - W(x,y,0)) 1{μ_W(x) ≤ 1} 1{μ_W(y) ≤ 1} < ∞"),
        ("(c)", "∫ (1 - W(x,x,0)) dx < ∞"),
    ];
    if mg.w.is_zero() {
        for (id, d) in descriptions {
            let mut rec = ConditionRecord::new(id, d);
            rec.status = ConditionStatus::Holds;
            rec.estimate = 0.0;
            rec.error = 0.0;
            evidence.push(rec);
        }
    } else {
        let p = |x: f64, y: f64| mg.w.edge_probability(x, y).map_err(model_err);
        let ev = quadratic_evidence(&p, ("μ_W", "μ_W"), true, cfg);
        evidence.push(merge(descriptions[0].0, descriptions[0].1, ev.infinite, ev.superlevel));
        let mut b = relabel(ev.plane, descriptions[1].0);
        b.description = descriptions[1].1.into();
        evidence.push(b);
        let mut c = relabel(ev.diagonal, descriptions[2].0);
        c.description = descriptions[2].1.into();
        evidence.push(c);
    }
    Verdict::from_evidence(evidence)
}

pub fn certify(model: &Model, cfg: &CertifyConfig) -> Verdict {
    match model {
        Model::Kallenberg(rep) => certify_kallenberg(rep, cfg),
        Model::Multigraphex(mg) => certify_multigraphex(mg, cfg),
    }
}

/// A finitely supported distribution on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Discrete {
    pub fn point(v: f64) -> Self {
        Self {
            values: vec![v],
            probs: vec![1.0],
        }
    }

    /// `v` with probability `p`, else 0.
    pub fn bernoulli(p: f64, v: f64) -> Self {
        Self {
            values: vec![0.0, v],
            probs: vec![1.0 - p, p],
        }
    }

    /// `E[1 ∧ Z]`.
    pub fn capped_mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v.min(1.0) * p).sum()
    }

    fn sample(&self, u: f64) -> f64 {
        match poisson::inverse_cdf(&self.probs, u) {
            Ok(Some(i)) => self.values[i],
            _ => self.values.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Summability {
    Converges,
    Diverges,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummabilityReport {
    pub predicted: Summability,
    /// `Σ_{j ∈ block m} E[1 ∧ Z_j]` over the blocks `[2^m, 2^{m+1})` (1-based indices).
    pub expected_blocks: Vec<f64>,
    /// `Σ_j E[1 ∧ Z_j]` over the whole prefix.
    pub expected_total: f64,
    /// Mean of `Σ_{j < 2^{m+1}} Z_j` over the samples, per block end.
    pub empirical_partial_means: Vec<f64>,
    /// Ratio of the last to the first nonzero empirical block increment.
    pub empirical_growth: f64,
}

/// Block-sum ratio at or above which a series counts as divergent.
pub const CONDENSED_RATIO: f64 = 0.9;

/// Predicts `Σ_j Z_j < ∞` from `Σ_j E[1 ∧ Z_j]` on the given prefix and
/// cross-checks against sampled partial sums.
///
/// The expected capped sums are grouped in doubling blocks, which condenses
/// the series; a ratio test on the block sums follows. The series is
/// predicted to diverge when the last block keeps at least
/// [`CONDENSED_RATIO`] of the mass of the one before it, and to converge
/// otherwise. So `Σ j^{-p}` is called divergent for `p ≤ 1.15`; for
/// borderline series such as `Σ 1/(j log j)` the answer depends on the
/// prefix length. Terms past the last complete block are ignored.
pub fn summability_oracle(terms: &[Discrete], n_samples: usize, key: &RngKey) -> SummabilityReport {
    let blocks = block_ranges(terms.len());
    let expected_blocks: Vec<f64> = blocks
        .iter()
        .map(|&(a, b)| terms[a..b].iter().map(Discrete::capped_mean).collect::<CompensatedSum>().value())
        .collect();
    let expected_total = expected_blocks.iter().sum();
    let predicted = match expected_blocks.as_slice() {
        [.., prev, last] if *last > 1e-12 && *last >= CONDENSED_RATIO * prev => Summability::Diverges,
        _ => Summability::Converges,
    };

    let mut partial_means = vec![0.0; blocks.len()];
    for r in 0..n_samples {
        let mut stream = key.child(label::REPLICATE, r as u64).stream();
        let mut acc = CompensatedSum::new();
        for (m, &(a, b)) in blocks.iter().enumerate() {
            for t in &terms[a..b] {
                acc.add(t.sample(stream.next_f64()));
            }
            partial_means[m] += acc.value();
        }
    }
    if n_samples > 0 {
        partial_means.iter_mut().for_each(|v| *v /= n_samples as f64);
    }
    let increments: Vec<f64> = partial_means
        .iter()
        .scan(0.0, |prev, &v| {
            let d = v - *prev;
            *prev = v;
            Some(d)
        })
        .collect();
    let first = increments.iter().copied().find(|&d| d > 0.0);
    let empirical_growth = match (first, increments.last()) {
        (Some(f), Some(&l)) => l / f,
        _ => 0.0,
    };
    SummabilityReport {
        predicted,
        expected_blocks,
        expected_total,
        empirical_partial_means: partial_means,
        empirical_growth,
    }
}

/// Index ranges of the complete doubling blocks `[2^m - 1, 2^{m+1} - 1)`
/// inside `0..n`. A trailing partial block would bias the block ratio, so
/// it is left out.
fn block_ranges(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut a = 0;
    let mut len = 1;
    while a + len <= n {
        out.push((a, a + len));
        a += len;
        len *= 2;
    }
    out
}
