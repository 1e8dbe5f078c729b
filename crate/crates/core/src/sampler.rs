//! Window samplers for Kallenberg representations and multigraphexes, and
//! estimates of the atoms lost to mark truncation.

use crate::model::{KallenbergRep, Model, ModelError, Multigraphex};
use crate::poisson::{self, PoissonError};
use crate::quadrature::{self, Convergence, Domain, IntegralEstimate, QuadConfig, QuadError};
use crate::rng::{label, RngKey};
use crate::types::{merge_atoms, AdjacencyMeasureWindow, Atom, LineMass, Orientation, PartMasses};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationConfig {
    /// Latent marks are simulated on `[0, mark_cap]`.
    pub mark_cap: f64,
    pub max_latent_points: u64,
    pub max_atoms: u64,
}

impl TruncationConfig {
    pub const DEFAULT_MAX_LATENT_POINTS: u64 = 200_000;
    pub const DEFAULT_MAX_ATOMS: u64 = 20_000_000;

    pub fn new(mark_cap: f64) -> Self {
        Self {
            mark_cap,
            max_latent_points: Self::DEFAULT_MAX_LATENT_POINTS,
            max_atoms: Self::DEFAULT_MAX_ATOMS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("invalid sampling parameters: {0}")]
    Invalid(String),
    #[error(
        "resource cap exceeded: {what} ({count} > {cap}); the model may not be locally finite, run the certifier"
    )]
    ResourceCap { what: String, count: u64, cap: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn poisson_err(what: &str, e: PoissonError) -> SampleError {
    match e {
        PoissonError::CapExceeded { count, cap } => SampleError::ResourceCap {
            what: what.to_string(),
            count,
            cap,
        },
        PoissonError::TooLarge(mean) => SampleError::ResourceCap {
            what: format!("{what} expected count"),
            count: mean.min(u64::MAX as f64) as u64,
            cap: poisson::MAX_MEAN_COUNT as u64,
        },
        other => SampleError::Invalid(other.to_string()),
    }
}

fn check_params(s: f64, tc: &TruncationConfig) -> Result<(), SampleError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(SampleError::Invalid(format!("window must be positive and finite, got {s}")));
    }
    if !(tc.mark_cap >= 0.0 && tc.mark_cap.is_finite()) {
        return Err(SampleError::Invalid(format!(
            "mark cap must be finite and nonnegative, got {}",
            tc.mark_cap
        )));
    }
    Ok(())
}

/// Atom counter shared by the worker threads of one sampling call.
struct AtomBudget {
    cap: u64,
    used: AtomicU64,
}

impl AtomBudget {
    fn new(cap: u64) -> Self {
        Self {
            cap,
            used: AtomicU64::new(0),
        }
    }

    fn exhausted(&self) -> bool {
        self.used.load(AtomicOrdering::Relaxed) > self.cap
    }

    fn add(&self, what: &str, count: usize) -> Result<(), SampleError> {
        let total = self.used.fetch_add(count as u64, AtomicOrdering::Relaxed) + count as u64;
        if total > self.cap {
            return Err(SampleError::ResourceCap {
                what: what.to_string(),
                count: total,
                cap: self.cap,
            });
        }
        Ok(())
    }

    fn guard(&self, what: &str) -> Result<(), SampleError> {
        if self.exhausted() {
            return Err(SampleError::ResourceCap {
                what: what.to_string(),
                count: self.used.load(AtomicOrdering::Relaxed),
                cap: self.cap,
            });
        }
        Ok(())
    }
}

fn sum_mult(atoms: &[Atom]) -> f64 {
    crate::sum::compensated_sum(atoms.iter().map(|a| a.mult))
}

/// Samples the restriction to `[0, s]^2` of the measure represented by `rep`.
///
/// Edge atoms run over all ordered pairs of latent vertices, loops included,
/// with `ζ` keyed by the unordered pair. Atoms carry the real weight given
/// by the function.
pub fn sample_kallenberg(
    rep: &KallenbergRep,
    s: f64,
    tc: &TruncationConfig,
    key: &RngKey,
) -> Result<AdjacencyMeasureWindow, SampleError> {
    check_params(s, tc)?;
    rep.validate()?;
    let budget = AtomBudget::new(tc.max_atoms);
    let t = tc.mark_cap;
    let vertices = poisson::sample_unit_pp_capped(&key.child(label::VERTICES, 0), s, t, tc.max_latent_points)
        .map_err(|e| poisson_err("latent vertices", e))?
        .points;
    let n = vertices.len();

    let edge_atoms: Vec<Atom> = if rep.f.is_zero() || n == 0 {
        Vec::new()
    } else {
        let rows: Vec<Vec<Atom>> = (0..n)
            .into_par_iter()
            .map(|i| {
                budget.guard("edge atoms")?;
                let (tau_i, th_i) = vertices[i];
                let mut row = Vec::new();
                for (j, &(tau_j, th_j)) in vertices.iter().enumerate() {
                    let z = key.pair_uniform(i as u64, j as u64);
                    let w = rep.f.value("f", &[th_i, th_j, z])?;
                    if w > 0.0 {
                        row.push(Atom::new(tau_i, tau_j, w));
                    }
                }
                budget.add("edge atoms", row.len())?;
                Ok(row)
            })
            .collect::<Result<_, SampleError>>()?;
        rows.into_iter().flatten().collect()
    };

    let has_star = !(rep.g.is_zero() && rep.g_prime.is_zero());
    let star_rows: Vec<(Vec<Atom>, Vec<Atom>)> = if has_star {
        (0..n)
            .into_par_iter()
            .map(|j| {
                budget.guard("star atoms")?;
                let (tau, th) = vertices[j];
                let pts = poisson::sample_unit_pp_capped(&key.child(label::STAR, j as u64), s, t, tc.max_latent_points)
                    .map_err(|e| poisson_err("star points of one vertex", e))?;
                let mut direct = Vec::new();
                let mut mirror = Vec::new();
                for &(sigma, chi) in &pts.points {
                    let a = rep.g.value("g", &[th, chi])?;
                    if a > 0.0 {
                        direct.push(Atom::new(tau, sigma, a));
                    }
                    let b = rep.g_prime.value("g'", &[th, chi])?;
                    if b > 0.0 {
                        mirror.push(Atom::new(sigma, tau, b));
                    }
                }
                budget.add("star atoms", direct.len() + mirror.len())?;
                Ok((direct, mirror))
            })
            .collect::<Result<_, SampleError>>()?
    } else {
        Vec::new()
    };
    let (star, star_mirror): (Vec<Atom>, Vec<Atom>) = {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y) in star_rows {
            a.extend(x);
            b.extend(y);
        }
        (a, b)
    };

    let mut line_masses = Vec::new();
    if !(rep.h.is_zero() && rep.h_prime.is_zero()) {
        for &(tau, th) in &vertices {
            let a = rep.h.value("h", &[th])?;
            if a > 0.0 {
                line_masses.push(LineMass {
                    coordinate: tau,
                    orientation: Orientation::Row,
                    mass: a * s,
                });
            }
            let b = rep.h_prime.value("h'", &[th])?;
            if b > 0.0 {
                line_masses.push(LineMass {
                    coordinate: tau,
                    orientation: Orientation::Column,
                    mass: b * s,
                });
            }
        }
    }

    let (mut dust, mut dust_mirror) = (Vec::new(), Vec::new());
    if !(rep.l.is_zero() && rep.l_prime.is_zero()) {
        let triples = poisson::sample_triple_pp_capped(&key.child(label::DUST, 0), s, t, tc.max_latent_points)
            .map_err(|e| poisson_err("dust points", e))?;
        for &(rho, rho_p, eta) in &triples {
            let a = rep.l.value("l", &[eta])?;
            if a > 0.0 {
                dust.push(Atom::new(rho, rho_p, a));
            }
            let b = rep.l_prime.value("l'", &[eta])?;
            if b > 0.0 {
                dust_mirror.push(Atom::new(rho_p, rho, b));
            }
        }
    }

    budget.add("dust atoms", dust.len() + dust_mirror.len())?;
    let (loops, edge): (Vec<Atom>, Vec<Atom>) = edge_atoms.into_iter().partition(|a| a.x == a.y);
    let parts = PartMasses {
        edge: sum_mult(&edge),
        loops: sum_mult(&loops),
        star: sum_mult(&star),
        star_mirror: sum_mult(&star_mirror),
        dust: sum_mult(&dust),
        dust_mirror: sum_mult(&dust_mirror),
        lines: line_masses.iter().map(|l| l.mass).sum(),
    };
    let mut atoms = edge;
    atoms.extend(loops);
    atoms.extend(star);
    atoms.extend(star_mirror);
    atoms.extend(dust);
    atoms.extend(dust_mirror);
    Ok(AdjacencyMeasureWindow {
        window: s,
        atoms: merge_atoms(atoms),
        diag_mass: rep.beta * s * std::f64::consts::SQRT_2,
        plane_mass: rep.gamma * s * s,
        line_masses,
        parts,
    })
}

/// Samples the adjacency measure generated by `mg` on `[0, s]^2`.
///
/// Every edge, star and dust atom is emitted together with its mirror image,
/// so the output is exactly symmetric.
pub fn sample_multigraphex(
    mg: &Multigraphex,
    s: f64,
    tc: &TruncationConfig,
    key: &RngKey,
) -> Result<AdjacencyMeasureWindow, SampleError> {
    check_params(s, tc)?;
    mg.validate()?;
    let budget = AtomBudget::new(tc.max_atoms);
    let t = tc.mark_cap;
    let need_vertices = !(mg.w.is_zero() && mg.s.is_zero());
    let vertices = if need_vertices {
        poisson::sample_unit_pp_capped(&key.child(label::VERTICES, 0), s, t, tc.max_latent_points)
            .map_err(|e| poisson_err("latent vertices", e))?
            .points
    } else {
        Vec::new()
    };
    let n = vertices.len();

    let (mut edge, mut loops) = (Vec::new(), Vec::new());
    if !mg.w.is_zero() {
        let rows: Vec<(Vec<Atom>, Option<Atom>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                budget.guard("edge atoms")?;
                let (th_i, v_i) = vertices[i];
                let mut row = Vec::new();
                for (j, &(th_j, v_j)) in vertices.iter().enumerate().skip(i + 1) {
                    let u = key.pair_uniform(i as u64, j as u64);
                    let zeta = mg.w.draw(v_i, v_j, u)?;
                    if zeta >= 1 {
                        row.push(Atom::new(th_i, th_j, zeta as f64));
                        row.push(Atom::new(th_j, th_i, zeta as f64));
                    }
                }
                let zeta = mg.w.draw(v_i, v_i, key.pair_uniform(i as u64, i as u64))?;
                let lp = (zeta >= 1).then(|| Atom::new(th_i, th_i, zeta as f64));
                budget.add("edge atoms", row.len() + lp.is_some() as usize)?;
                Ok((row, lp))
            })
            .collect::<Result<_, SampleError>>()?;
        for (row, lp) in rows {
            edge.extend(row);
            loops.extend(lp);
        }
    }

    let (mut star, mut star_mirror) = (Vec::new(), Vec::new());
    if !mg.s.is_zero() {
        let rows: Vec<Vec<(f64, f64, u64)>> = (0..n)
            .into_par_iter()
            .map(|j| {
                budget.guard("star atoms")?;
                let (th, v) = vertices[j];
                let weights = mg.s.weights(v)?;
                let total: f64 = weights.iter().sum();
                let pts = poisson::sample_unit_pp_capped(&key.child(label::STAR, j as u64), s, total, tc.max_latent_points)
                    .map_err(|e| poisson_err("star points of one vertex", e))?;
                let mut row = Vec::new();
                for &(sigma, chi) in &pts.points {
                    let r = poisson::inverse_cdf(&weights, chi).map_err(|e| SampleError::Invalid(e.to_string()))?;
                    if let Some(r) = r.filter(|&r| r >= 1) {
                        row.push((th, sigma, r as u64));
                    }
                }
                budget.add("star atoms", 2 * row.len())?;
                Ok(row)
            })
            .collect::<Result<_, SampleError>>()?;
        for (th, sigma, r) in rows.into_iter().flatten() {
            star.push(Atom::new(th, sigma, r as f64));
            star_mirror.push(Atom::new(sigma, th, r as f64));
        }
    }

    let (mut dust, mut dust_mirror) = (Vec::new(), Vec::new());
    let dust_total: f64 = mg.i.iter().sum();
    if mg.dust_intensity() > 0.0 {
        let triples = poisson::sample_triple_pp_capped(&key.child(label::DUST, 0), s, dust_total, tc.max_latent_points)
            .map_err(|e| poisson_err("dust points", e))?;
        for &(a, b, eta) in &triples {
            let r = poisson::inverse_cdf(&mg.i, eta).map_err(|e| SampleError::Invalid(e.to_string()))?;
            if let Some(r) = r.filter(|&r| r >= 1) {
                dust.push(Atom::new(a, b, r as f64));
                dust_mirror.push(Atom::new(b, a, r as f64));
            }
        }
    }

    budget.add("dust atoms", dust.len() + dust_mirror.len())?;
    let parts = PartMasses {
        edge: sum_mult(&edge),
        loops: sum_mult(&loops),
        star: sum_mult(&star),
        star_mirror: sum_mult(&star_mirror),
        dust: sum_mult(&dust),
        dust_mirror: sum_mult(&dust_mirror),
        lines: 0.0,
    };
    let mut atoms = edge;
    atoms.extend(loops);
    atoms.extend(star);
    atoms.extend(star_mirror);
    atoms.extend(dust);
    atoms.extend(dust_mirror);
    Ok(AdjacencyMeasureWindow {
        window: s,
        atoms: merge_atoms(atoms),
        diag_mass: 0.0,
        plane_mass: 0.0,
        line_masses: Vec::new(),
        parts,
    })
}

pub fn sample_model(model: &Model, s: f64, tc: &TruncationConfig, key: &RngKey) -> Result<AdjacencyMeasureWindow, SampleError> {
    match model {
        Model::Kallenberg(rep) => sample_kallenberg(rep, s, tc, key),
        Model::Multigraphex(mg) => sample_multigraphex(mg, s, tc, key),
    }
}

/// Expected number of atoms (for a Kallenberg representation: expected
/// unit-capped mass) in `[0, s]^2` missed because marks stop at `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationError {
    pub estimate: f64,
    pub error: f64,
    pub verdict: Convergence,
    pub parts: Vec<(String, f64)>,
}

struct Accumulator {
    estimate: f64,
    error: f64,
    verdict: Convergence,
    parts: Vec<(String, f64)>,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            estimate: 0.0,
            error: 0.0,
            verdict: Convergence::Converged,
            parts: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, scale: f64, e: IntegralEstimate) {
        self.add_value(name, scale * e.as_value(), scale * e.error, e.verdict);
    }

    fn add_value(&mut self, name: &str, value: f64, error: f64, verdict: Convergence) {
        if value == 0.0 && verdict == Convergence::Converged {
            return;
        }
        self.estimate += value;
        self.error += error;
        self.verdict = match (self.verdict, verdict) {
            (Convergence::Diverging, _) | (_, Convergence::Diverging) => Convergence::Diverging,
            (Convergence::Inconclusive, _) | (_, Convergence::Inconclusive) => Convergence::Inconclusive,
            _ => Convergence::Converged,
        };
        self.parts.push((name.to_string(), value));
    }

    fn finish(self) -> TruncationError {
        let estimate = if self.verdict == Convergence::Diverging {
            f64::INFINITY
        } else {
            self.estimate
        };
        TruncationError {
            estimate,
            error: self.error,
            verdict: self.verdict,
            parts: self.parts,
        }
    }
}

fn q<T>(f: impl Fn(T) -> Result<f64, ModelError>) -> impl Fn(T) -> Result<f64, QuadError> {
    move |x| {
        f(x).map_err(|e| QuadError::Eval {
            at: f64::NAN,
            message: e.to_string(),
        })
    }
}

fn quad_err(e: QuadError) -> ModelError {
    ModelError::Quadrature {
        slot: "truncation".into(),
        source: e,
    }
}

/// Truncation error of a multigraphex: graph part
/// `s² ∫∫_{max(x,y)>T} (1 - W(x,y,0))` plus loops `s ∫_T^∞ (1 - W(x,x,0))`,
/// star part `2 s² (∫_T^∞ Σ_{k≥1} S(v,k) dv + S tail)`, dust part
/// `2 s² · I tail`.
pub fn truncation_error_multigraphex(mg: &Multigraphex, s: f64, t: f64, cfg: &QuadConfig) -> Result<TruncationError, ModelError> {
    let mut acc = Accumulator::new();
    if !mg.w.is_zero() {
        let p = q(|(x, y): (f64, f64)| mg.w.edge_probability(x, y));
        let beyond_x = quadrature::integrate_nested(Domain::From(t), Domain::HALF_LINE, |x, y| p((x, y)), cfg).map_err(quad_err)?;
        let beyond_y = quadrature::integrate_nested(Domain::Interval(0.0, t), Domain::From(t), |x, y| p((x, y)), cfg).map_err(quad_err)?;
        acc.add("graph", s * s, beyond_x);
        acc.add("graph", s * s, beyond_y);
        let diag = quadrature::integrate(Domain::From(t), |x| p((x, x)), cfg).map_err(quad_err)?;
        acc.add("loops", s, diag);
    }
    if !mg.s.is_zero() {
        let star = quadrature::integrate(Domain::From(t), q(|v| mg.s.atom_intensity(v).map(|m| m.min(f64::MAX))), cfg)
            .map_err(quad_err)?;
        acc.add("star", 2.0 * s * s, star);
    }
    if mg.s_tail > 0.0 {
        acc.add_value("star tail", 2.0 * s * s * mg.s_tail, 0.0, Convergence::Converged);
    }
    if mg.i_tail > 0.0 {
        acc.add_value("dust tail", 2.0 * s * s * mg.i_tail, 0.0, Convergence::Converged);
    }
    Ok(acc.finish())
}

/// Truncation error of a Kallenberg representation, in unit-capped mass
/// (`φ̂ = φ ∧ 1`): edges `s² ∫∫_{max(x,y)>T} f̂₃` and loops
/// `s ∫_T^∞ f̂₃(x,x)`, stars `s² [∫_T^∞∫_0^∞ + ∫_0^T∫_T^∞] (ĝ + ĝ')`, lines
/// `s ∫_T^∞ (ĥ + ĥ')` and dust `s² ∫_T^∞ (l̂ + l̂')`.
pub fn truncation_error_kallenberg(rep: &KallenbergRep, s: f64, t: f64, cfg: &QuadConfig) -> Result<TruncationError, ModelError> {
    let mut acc = Accumulator::new();
    if !rep.f.is_zero() {
        let z_cfg = QuadConfig::with_tol(1e-7);
        let f3 = |x: f64, y: f64| -> Result<f64, QuadError> {
            let e = quadrature::integrate(Domain::UNIT, q(|z| rep.f.value("f", &[x, y, z]).map(|v| v.min(1.0))), &z_cfg)?;
            Ok(e.value)
        };
        let a = quadrature::integrate_nested(Domain::From(t), Domain::HALF_LINE, f3, cfg).map_err(quad_err)?;
        let b = quadrature::integrate_nested(Domain::Interval(0.0, t), Domain::From(t), f3, cfg).map_err(quad_err)?;
        acc.add("edge", s * s, a);
        acc.add("edge", s * s, b);
        let d = quadrature::integrate(Domain::From(t), |x| f3(x, x), cfg).map_err(quad_err)?;
        acc.add("loops", s, d);
    }
    for (name, g) in [("g", &rep.g), ("g'", &rep.g_prime)] {
        if g.is_zero() {
            continue;
        }
        let gh = |x: f64, y: f64| -> Result<f64, QuadError> { q(|(x, y): (f64, f64)| g.value(name, &[x, y]).map(|v| v.min(1.0)))((x, y)) };
        let a = quadrature::integrate_nested(Domain::From(t), Domain::HALF_LINE, gh, cfg).map_err(quad_err)?;
        acc.add("star", s * s, a);
        if acc.verdict == Convergence::Diverging {
            break;
        }
        let b = quadrature::integrate_nested(Domain::Interval(0.0, t), Domain::From(t), gh, cfg).map_err(quad_err)?;
        acc.add("star", s * s, b);
        if acc.verdict == Convergence::Diverging {
            break;
        }
    }
    for (name, h, scale) in [
        ("h", &rep.h, s),
        ("h'", &rep.h_prime, s),
        ("l", &rep.l, s * s),
        ("l'", &rep.l_prime, s * s),
    ] {
        if h.is_zero() {
            continue;
        }
        let e = quadrature::integrate(Domain::From(t), q(|x| h.value(name, &[x]).map(|v| v.min(1.0))), cfg).map_err(quad_err)?;
        acc.add(if name.starts_with('h') { "lines" } else { "dust" }, scale, e);
    }
    Ok(acc.finish())
}

pub fn truncation_error(model: &Model, s: f64, t: f64, cfg: &QuadConfig) -> Result<TruncationError, ModelError> {
    match model {
        Model::Kallenberg(rep) => truncation_error_kallenberg(rep, s, t, cfg),
        Model::Multigraphex(mg) => truncation_error_multigraphex(mg, s, t, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdgeKernel, Function, StarIntensity, XY, XYK, XYZ};
    use crate::types::window_mass;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_models_give_empty_windows() {
        let tc = TruncationConfig::new(10.0);
        for seed in 0..20 {
            let key = RngKey::new(seed);
            let w = sample_kallenberg(&KallenbergRep::zero(), 1.0, &tc, &key).unwrap();
            assert!(w.atoms.is_empty());
            assert_eq!(window_mass(&w), 0.0);
            let w = sample_multigraphex(&Multigraphex::zero(), 1.0, &tc, &key).unwrap();
            assert!(w.atoms.is_empty());
        }
    }

    #[test]
    fn continuous_parts() {
        let rep = KallenbergRep {
            beta: 1.0,
            gamma: 2.0,
            ..KallenbergRep::zero()
        };
        let w = sample_kallenberg(&rep, 1.0, &TruncationConfig::new(5.0), &RngKey::new(0)).unwrap();
        assert_abs_diff_eq!(w.diag_mass, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(w.plane_mass, 2.0);
        assert!(w.atoms.is_empty());
    }

    #[test]
    fn multigraphex_output_is_symmetric_and_deterministic() {
        let mut mg = Multigraphex::poisson_exp();
        mg.s = StarIntensity::Pmf {
            expr: Function::parse("S", "exp(-v)*ind(k,1,2)", &[crate::dsl::Var::V, crate::dsl::Var::K]).unwrap(),
            max_k: 2,
        };
        mg.i = vec![0.0, 0.3, 0.2];
        let tc = TruncationConfig::new(8.0);
        for seed in 0..30 {
            let key = RngKey::new(seed);
            let a = sample_multigraphex(&mg, 2.0, &tc, &key).unwrap();
            assert!(a.is_symmetric());
            assert!(a.atoms.iter().all(|at| at.mult.fract() == 0.0 && at.x <= 2.0 && at.y <= 2.0));
            let b = sample_multigraphex(&mg, 2.0, &tc, &key).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn resource_cap_is_reported() {
        let rep = KallenbergRep::counterexample();
        let tc = TruncationConfig {
            mark_cap: 1e4,
            max_latent_points: 1000,
            max_atoms: 1000,
        };
        assert!(matches!(
            sample_kallenberg(&rep, 1.0, &tc, &RngKey::new(0)),
            Err(SampleError::ResourceCap { .. })
        ));
        let tc = TruncationConfig {
            mark_cap: 200.0,
            max_latent_points: 1000,
            max_atoms: 10,
        };
        let hits = (0..10)
            .filter(|&seed| match sample_kallenberg(&rep, 1.0, &tc, &RngKey::new(seed)) {
                Err(SampleError::ResourceCap { .. }) => true,
                Ok(_) => false,
                Err(e) => panic!("{e}"),
            })
            .count();
        assert!(hits > 0);
    }

    #[test]
    fn loops_and_off_diagonal_edges_are_split() {
        let f = Function::parse("f", "ind(z,0,1)*exp(-x-y)", &XYZ).unwrap();
        let rep = KallenbergRep {
            f,
            ..KallenbergRep::zero()
        };
        let w = sample_kallenberg(&rep, 1.0, &TruncationConfig::new(5.0), &RngKey::new(4)).unwrap();
        let diag: f64 = w.atoms.iter().filter(|a| a.x == a.y).map(|a| a.mult).sum();
        assert_abs_diff_eq!(diag, w.parts.loops, epsilon = 1e-12);
        assert_abs_diff_eq!(w.atom_mass(), w.parts.edge + w.parts.loops, epsilon = 1e-9);
    }

    #[test]
    fn truncation_error_examples() {
        let cfg = QuadConfig::with_tol(1e-6);
        let compact = Multigraphex {
            w: EdgeKernel::Pmf {
                expr: Function::parse("W", "0.5*ind(x,0,1)*ind(y,0,1)*ind(k,1,1)", &XYK).unwrap(),
                max_k: 1,
            },
            ..Multigraphex::zero()
        };
        let e = truncation_error_multigraphex(&compact, 1.0, 1.0, &cfg).unwrap();
        assert_eq!(e.verdict, Convergence::Converged);
        assert_abs_diff_eq!(e.estimate, 0.0, epsilon = 1e-12);

        let e = truncation_error_multigraphex(&Multigraphex::poisson_exp(), 1.0, 10.0, &cfg).unwrap();
        assert_eq!(e.verdict, Convergence::Converged);
        assert!(e.estimate < 1e-4, "{e:?}");
        assert!(e.estimate <= 2.0 * (-10f64).exp() + (-20f64).exp());

        let e = truncation_error_kallenberg(&KallenbergRep::counterexample(), 1.0, 10.0, &QuadConfig::with_tol(1e-4)).unwrap();
        assert_eq!(e.verdict, Convergence::Diverging);
        assert!(e.estimate.is_infinite());

        let g = Function::parse("g", "ind(x,0,1)*ind(y,0,1)", &XY).unwrap();
        let rep = KallenbergRep {
            g: g.clone(),
            g_prime: g,
            ..KallenbergRep::zero()
        };
        let e = truncation_error_kallenberg(&rep, 1.0, 2.0, &QuadConfig::with_tol(1e-4)).unwrap();
        assert_eq!(e.verdict, Convergence::Converged);
        assert_abs_diff_eq!(e.estimate, 0.0, epsilon = 1e-9);
    }
}
