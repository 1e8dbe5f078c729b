//! Function handles, Kallenberg representations and multigraphexes.

use crate::dsl::{self, Env, EvalError, Expr, ParseError, Var};
use crate::quadrature::{self, QuadConfig, QuadError};
use crate::rng::{label, RngKey};
use std::fmt;
use std::sync::Arc;

pub type NativeFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{slot}: {source}")]
    Parse {
        slot: String,
        #[source]
        source: ParseError,
    },
    #[error("{slot}: variable '{var}' is not allowed here (allowed: {allowed})")]
    UnexpectedVariable { slot: String, var: Var, allowed: String },
    #[error("{slot}: evaluation failed at {at:?}: {source}")]
    Eval {
        slot: String,
        at: Vec<f64>,
        #[source]
        source: EvalError,
    },
    #[error("{slot}: negative value {value} at {at:?}")]
    Negative { slot: String, at: Vec<f64>, value: f64 },
    #[error("{slot}: probabilities for k >= 1 sum to {total} > 1 at {at:?}")]
    NegativeRemainder { slot: String, at: Vec<f64>, total: f64 },
    #[error("{slot}: W(x,y,{k}) != W(y,x,{k}) at x={x}, y={y}")]
    Asymmetric { slot: String, x: f64, y: f64, k: usize },
    #[error("{slot}: {source}")]
    Quadrature {
        slot: String,
        #[source]
        source: QuadError,
    },
    #[error("{0}")]
    Invalid(String),
}

/// A measurable function of a fixed number of real arguments.
#[derive(Clone)]
pub enum Function {
    Zero,
    /// DSL expression; argument `i` binds `vars[i]`.
    Expr { expr: Arc<Expr>, vars: Vec<Var> },
    Native(NativeFn),
}

impl Function {
    /// Parses `text` as a function of `vars`. The literal `0` and the word
    /// `zero` give [`Function::Zero`].
    pub fn parse(slot: &str, text: &str, vars: &[Var]) -> Result<Self, ModelError> {
        let trimmed = text.trim();
        if trimmed == "zero" {
            return Ok(Function::Zero);
        }
        let expr = dsl::parse(trimmed).map_err(|source| ModelError::Parse {
            slot: slot.to_string(),
            source,
        })?;
        Self::from_expr(slot, expr, vars)
    }

    pub fn from_expr(slot: &str, expr: Expr, vars: &[Var]) -> Result<Self, ModelError> {
        if let Some(var) = expr.free_vars().into_iter().find(|v| !vars.contains(v)) {
            return Err(ModelError::UnexpectedVariable {
                slot: slot.to_string(),
                var,
                allowed: vars.iter().map(|v| v.name()).collect::<Vec<_>>().join(","),
            });
        }
        if expr.is_zero_literal() {
            return Ok(Function::Zero);
        }
        Ok(Function::Expr {
            expr: Arc::new(expr),
            vars: vars.to_vec(),
        })
    }

    pub fn native(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Function::Native(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Function::Zero)
    }

    pub fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        match self {
            Function::Zero => Ok(0.0),
            Function::Expr { expr, vars } => dsl::eval(expr, &Env::from_pairs(vars, args)),
            Function::Native(f) => Ok(f(args)),
        }
    }

    /// Evaluates and checks the value is a finite nonnegative real.
    pub fn value(&self, slot: &str, args: &[f64]) -> Result<f64, ModelError> {
        let v = self.eval(args).map_err(|source| ModelError::Eval {
            slot: slot.to_string(),
            at: args.to_vec(),
            source,
        })?;
        if v < 0.0 || v.is_nan() {
            return Err(ModelError::Negative {
                slot: slot.to_string(),
                at: args.to_vec(),
                value: v,
            });
        }
        Ok(v)
    }

    pub fn describe(&self) -> String {
        match self {
            Function::Zero => "0".to_string(),
            Function::Expr { expr, .. } => dsl::pretty_print(expr),
            Function::Native(_) => "<native>".to_string(),
        }
    }
}

impl fmt::Debug for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Function({})", self.describe())
    }
}

pub const XYZ: [Var; 3] = [Var::X, Var::Y, Var::Z];
pub const XY: [Var; 2] = [Var::X, Var::Y];
pub const X: [Var; 1] = [Var::X];
pub const XYK: [Var; 3] = [Var::X, Var::Y, Var::K];
pub const VK: [Var; 2] = [Var::V, Var::K];

/// The tuple `(f, g, g', h, h', l, l', β, γ)` for one fixed value of the
/// directing parameter.
#[derive(Debug, Clone)]
pub struct KallenbergRep {
    /// Edge function of `(ϑ_i, ϑ_j, ζ)`.
    pub f: Function,
    /// Declares `f(x, y, z) = f(y, x, z)`; lets the certifier reuse one marginal.
    pub f_symmetric: bool,
    /// Star functions of `(ϑ_j, χ_jk)`.
    pub g: Function,
    pub g_prime: Function,
    /// Line functions of `ϑ_j`.
    pub h: Function,
    pub h_prime: Function,
    /// Dust functions of `η_k`.
    pub l: Function,
    pub l_prime: Function,
    pub beta: f64,
    pub gamma: f64,
}

impl KallenbergRep {
    pub fn zero() -> Self {
        Self {
            f: Function::Zero,
            f_symmetric: true,
            g: Function::Zero,
            g_prime: Function::Zero,
            h: Function::Zero,
            h_prime: Function::Zero,
            l: Function::Zero,
            l_prime: Function::Zero,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    /// Star function supported on `x ∈ [0,1]`, `y ∈ [0,1] ∪ [2,3] ∪ ...`.
    pub const COUNTEREXAMPLE_G: &'static str = "ind(x,0,1)*ind(mod(floor(y),2),0,0)";

    /// `g = g'` equal to [`Self::COUNTEREXAMPLE_G`], all else zero.
    pub fn counterexample() -> Self {
        let g = Function::parse("g", Self::COUNTEREXAMPLE_G, &XY).expect("built-in expression");
        Self {
            g: g.clone(),
            g_prime: g,
            ..Self::zero()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) || !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(ModelError::Invalid(format!(
                "beta and gamma must be finite and nonnegative, got {} and {}",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

fn poisson_pmf_tail(mean: f64) -> Vec<f64> {
    // W(k) for k >= 1 until the remaining mass is negligible.
    let mut out = Vec::new();
    if mean <= 0.0 {
        return out;
    }
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0usize;
    while 1.0 - cdf > 1e-16 && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        out.push(p);
        if p == 0.0 && k as f64 > mean {
            break;
        }
    }
    out
}

/// Edge-multiplicity kernel `W(x, y, ·)`.
#[derive(Debug, Clone)]
pub enum EdgeKernel {
    Zero,
    /// `W(x, y, k) = expr(x, y, k)` for `1 ≤ k ≤ max_k`.
    Pmf { expr: Function, max_k: usize },
    /// Poisson law with mean `mean(x, y)`.
    PoissonPmf { mean: Function },
    /// `W(x, y, k) = λ{z ∈ [0,1] : f(x, y, z) = k}` for an integer-valued `f`.
    LevelSet { f: Function },
}

/// Cells of the grid used to resolve level sets of `z ↦ f(x, y, z)`.
const Z_CELLS: usize = 64;

impl EdgeKernel {
    pub fn is_zero(&self) -> bool {
        match self {
            EdgeKernel::Zero => true,
            EdgeKernel::Pmf { expr, max_k } => expr.is_zero() || *max_k == 0,
            EdgeKernel::PoissonPmf { mean } => mean.is_zero(),
            EdgeKernel::LevelSet { f } => f.is_zero(),
        }
    }

    /// `(W(x,y,1), W(x,y,2), ...)`, with `W(x,y,0) = 1 - Σ` implied.
    pub fn positive_weights(&self, x: f64, y: f64) -> Result<Vec<f64>, ModelError> {
        let w = match self {
            EdgeKernel::Zero => Vec::new(),
            EdgeKernel::Pmf { expr, max_k } => (1..=*max_k)
                .map(|k| expr.value("W", &[x, y, k as f64]))
                .collect::<Result<_, _>>()?,
            EdgeKernel::PoissonPmf { mean } => poisson_pmf_tail(mean.value("W", &[x, y])?),
            EdgeKernel::LevelSet { f } => {
                let levels = quadrature::level_set_measures(
                    |z| {
                        f.value("f", &[x, y, z]).map_err(|e| QuadError::Eval {
                            at: z,
                            message: e.to_string(),
                        })
                    },
                    0.0,
                    1.0,
                    Z_CELLS,
                )
                .map_err(|source| ModelError::Quadrature {
                    slot: "W".into(),
                    source,
                })?;
                let max = levels.keys().next_back().copied().unwrap_or(0).max(0) as usize;
                let mut w = vec![0.0; max];
                for (k, m) in levels {
                    if k >= 1 {
                        w[k as usize - 1] = m;
                    }
                }
                w
            }
        };
        let total: f64 = w.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(ModelError::NegativeRemainder {
                slot: "W".into(),
                at: vec![x, y],
                total,
            });
        }
        Ok(w)
    }

    /// The full sequence `W(x, y, 0), W(x, y, 1), ...`.
    pub fn weights(&self, x: f64, y: f64) -> Result<Vec<f64>, ModelError> {
        let pos = self.positive_weights(x, y)?;
        let w0 = match self {
            EdgeKernel::PoissonPmf { mean } => (-mean.value("W", &[x, y])?).exp(),
            _ => (1.0 - pos.iter().sum::<f64>()).max(0.0),
        };
        let mut out = Vec::with_capacity(pos.len() + 1);
        out.push(w0);
        out.extend(pos);
        Ok(out)
    }

    /// `1 - W(x, y, 0)`: probability of at least one edge.
    pub fn edge_probability(&self, x: f64, y: f64) -> Result<f64, ModelError> {
        match self {
            EdgeKernel::Zero => Ok(0.0),
            EdgeKernel::PoissonPmf { mean } => Ok(-(-mean.value("W", &[x, y])?).exp_m1()),
            _ => Ok(self.positive_weights(x, y)?.iter().sum::<f64>().min(1.0)),
        }
    }

    /// `Σ_k k W(x, y, k)`.
    pub fn mean_multiplicity(&self, x: f64, y: f64) -> Result<f64, ModelError> {
        match self {
            EdgeKernel::Zero => Ok(0.0),
            EdgeKernel::PoissonPmf { mean } => mean.value("W", &[x, y]),
            _ => Ok(self
                .positive_weights(x, y)?
                .iter()
                .enumerate()
                .map(|(i, w)| (i + 1) as f64 * w)
                .sum()),
        }
    }

    /// Multiplicity `ζ` for the edge uniform `u`: the `r` with
    /// `cum(r-1) ≤ u < cum(r)`.
    pub fn draw(&self, x: f64, y: f64, u: f64) -> Result<u64, ModelError> {
        if self.is_zero() {
            return Ok(0);
        }
        let p = self.edge_probability(x, y)?;
        if u < 1.0 - p {
            return Ok(0);
        }
        let w = self.weights(x, y)?;
        let r = crate::poisson::inverse_cdf(&w, u).map_err(|e| ModelError::Invalid(e.to_string()))?;
        // Rounding can leave u at or past the total; the last positive slot takes it.
        Ok(match r {
            Some(r) => r as u64,
            None => w.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u64,
        })
    }
}

/// Star intensity `S(v, ·)`.
#[derive(Debug, Clone)]
pub enum StarIntensity {
    Zero,
    /// `S(v, k) = expr(v, k)` for `0 ≤ k ≤ max_k`.
    Pmf { expr: Function, max_k: usize },
    /// `S(v, k) = λ{y ≥ 0 : g(v, y) = k}` for `k ≥ 1`, `S(v, 0) = 0`.
    LevelSet { g: Function },
}

impl StarIntensity {
    pub fn is_zero(&self) -> bool {
        match self {
            StarIntensity::Zero => true,
            StarIntensity::Pmf { expr, .. } => expr.is_zero(),
            StarIntensity::LevelSet { g } => g.is_zero(),
        }
    }

    /// `S(v, 0), S(v, 1), ...`; slot 0 never produces an atom.
    pub fn weights(&self, v: f64) -> Result<Vec<f64>, ModelError> {
        match self {
            StarIntensity::Zero => Ok(Vec::new()),
            StarIntensity::Pmf { expr, max_k } => (0..=*max_k).map(|k| expr.value("S", &[v, k as f64])).collect(),
            StarIntensity::LevelSet { g } => {
                let levels = quadrature::level_set_measures_halfline(
                    |y| {
                        g.value("g", &[v, y]).map_err(|e| QuadError::Eval {
                            at: y,
                            message: e.to_string(),
                        })
                    },
                    &QuadConfig::default(),
                )
                .map_err(|source| ModelError::Quadrature {
                    slot: "S".into(),
                    source,
                })?;
                let max = levels.keys().next_back().copied().unwrap_or(0).max(0) as usize;
                let mut w = vec![0.0; max + 1];
                for (k, m) in levels {
                    if k >= 1 {
                        w[k as usize] = m;
                    }
                }
                Ok(w)
            }
        }
    }

    /// `Σ_{k≥1} S(v, k)`.
    pub fn atom_intensity(&self, v: f64) -> Result<f64, ModelError> {
        Ok(self.weights(v)?.iter().skip(1).sum())
    }

    /// `Σ_{k≥1} k S(v, k)`.
    pub fn mean_multiplicity(&self, v: f64) -> Result<f64, ModelError> {
        Ok(self.weights(v)?.iter().enumerate().map(|(k, s)| k as f64 * s).sum())
    }
}

/// The triple `(W, S, I)`.
#[derive(Debug, Clone)]
pub struct Multigraphex {
    pub w: EdgeKernel,
    pub s: StarIntensity,
    /// Declared bound on `∫ Σ_{k > max_k} S(v, k) dv`, the part of `S` not represented.
    pub s_tail: f64,
    /// `I(0), I(1), ...`; slot 0 never produces an atom.
    pub i: Vec<f64>,
    /// Declared bound on the unrepresented tail `Σ_{k ≥ len} I(k)`.
    pub i_tail: f64,
}

impl Multigraphex {
    pub fn zero() -> Self {
        Self {
            w: EdgeKernel::Zero,
            s: StarIntensity::Zero,
            s_tail: 0.0,
            i: Vec::new(),
            i_tail: 0.0,
        }
    }

    /// Poisson multiplicities with mean `e^{-x-y}`, no stars or dust.
    pub fn poisson_exp() -> Self {
        let mean = Function::parse("W", "exp(-x-y)", &XY).expect("built-in expression");
        Self {
            w: EdgeKernel::PoissonPmf { mean },
            ..Self::zero()
        }
    }

    /// Dust only, with `I(k)` given.
    pub fn dust(i: Vec<f64>) -> Self {
        Self { i, ..Self::zero() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let Some((k, v)) = self.i.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(ModelError::Invalid(format!("I({k}) = {v} must be finite and nonnegative")));
        }
        for (name, t) in [("S tail", self.s_tail), ("I tail", self.i_tail)] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ModelError::Invalid(format!("{name} bound {t} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// `Σ_{k≥1} I(k)`.
    pub fn dust_intensity(&self) -> f64 {
        self.i.iter().skip(1).sum()
    }

    /// Probes `W` at `n` random points of `[0, extent]^2` for symmetry and
    /// for `Σ_k W = 1` (the remainder `W(x,y,0)` must be nonnegative).
    pub fn check_kernel(&self, n: usize, extent: f64, key: &RngKey) -> Result<(), ModelError> {
        if self.w.is_zero() {
            return Ok(());
        }
        let mut stream = key.child(label::PROBE, 0).stream();
        for _ in 0..n {
            let x = stream.next_f64() * extent;
            let y = stream.next_f64() * extent;
            let a = self.w.weights(x, y)?;
            let b = self.w.weights(y, x)?;
            let len = a.len().max(b.len());
            for k in 0..len {
                let (wa, wb) = (a.get(k).copied().unwrap_or(0.0), b.get(k).copied().unwrap_or(0.0));
                if (wa - wb).abs() > 1e-9 {
                    return Err(ModelError::Asymmetric {
                        slot: "W".into(),
                        x,
                        y,
                        k,
                    });
                }
            }
            let total: f64 = a.iter().sum();
            if (total - 1.0).abs() > 1e-9 && !matches!(self.w, EdgeKernel::PoissonPmf { .. }) {
                return Err(ModelError::NegativeRemainder {
                    slot: "W".into(),
                    at: vec![x, y],
                    total,
                });
            }
        }
        Ok(())
    }
}

/// Either representation of a model.
#[derive(Debug, Clone)]
pub enum Model {
    Kallenberg(KallenbergRep),
    Multigraphex(Multigraphex),
}

impl Model {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Model::Kallenberg(rep) => rep.validate(),
            Model::Multigraphex(mg) => mg.validate(),
        }
    }
}

/// Converts integer-valued `f`, `g`, `l` into the multigraphex
/// `W(x,y,k) = λ{z ∈ [0,1] : f(x,y,z) = k}`, `S(x,k) = λ{y : g(x,y) = k}`,
/// `I(k) = λ{y : l(y) = k}`.
///
/// `W` and `S` are evaluated lazily; `I` is computed here, and `l` is probed
/// at a few points so that non-integer `f` and `g` are rejected up front.
pub fn kallenberg_to_multigraphex(f: &Function, g: &Function, l: &Function) -> Result<Multigraphex, ModelError> {
    let quad = |slot: &str| {
        let slot = slot.to_string();
        move |source| ModelError::Quadrature {
            slot: slot.clone(),
            source,
        }
    };
    let w = if f.is_zero() {
        EdgeKernel::Zero
    } else {
        let kernel = EdgeKernel::LevelSet { f: f.clone() };
        for &(x, y) in &[(0.0, 0.0), (0.5, 1.5), (2.0, 0.25)] {
            kernel.positive_weights(x, y)?;
        }
        kernel
    };
    let s = if g.is_zero() {
        StarIntensity::Zero
    } else {
        let star = StarIntensity::LevelSet { g: g.clone() };
        for &x in &[0.0, 0.5, 2.0] {
            star.weights(x)?;
        }
        star
    };
    let i = if l.is_zero() {
        Vec::new()
    } else {
        let levels = quadrature::level_set_measures_halfline(
            |y| {
                l.value("l", &[y]).map_err(|e| QuadError::Eval {
                    at: y,
                    message: e.to_string(),
                })
            },
            &QuadConfig::default(),
        )
        .map_err(quad("I"))?;
        let max = levels.keys().next_back().copied().unwrap_or(0).max(0) as usize;
        let mut i = vec![0.0; max + 1];
        for (k, m) in levels {
            if k >= 1 {
                i[k as usize] = m;
            }
        }
        i
    };
    Ok(Multigraphex {
        w,
        s,
        s_tail: 0.0,
        i,
        i_tail: 0.0,
    })
}
