//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits non-zero if any fails. Reference values come from
//! closed forms computed here, not from the library.

use exmeas::dsl::{self, BinOp, Env, Expr, Func, Var};
use exmeas::finiteness::{self, CertifyConfig, PoissonClass};
use exmeas::harness::{self, ModelSource, SkewedSource};
use exmeas::model::{EdgeKernel, Function, Model, Multigraphex, StarIntensity, VK, XY, XYK};
use exmeas::poisson;
use exmeas::quadrature::QuadError;
use exmeas::rng::{RngKey, Stream};
use exmeas::sampler::TruncationConfig;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

/// Name, check and time budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_exmeas")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn exmeas(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(exe());
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("EXMEAS_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

/// Mean of a sample and the standard error of that mean.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn counterexample_certification() -> Outcome {
    let out = exmeas(&["certify", configs().join("counterexample.toml").to_str().unwrap(), "--json"], None);
    ensure(out.status.code() == Some(4), || format!("exit code {:?}, expected 4", out.status.code()))?;
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let ii = v["evidence"]
        .as_array()
        .and_then(|e| e.iter().find(|r| r["id"] == "(ii)"))
        .ok_or("no record for (ii)")?;
    ensure(ii["status"] == "violated", || format!("(ii) is {}", ii["status"]))?;
    let cutoffs = ii["cutoffs"].as_array().ok_or("no cutoffs")?;
    let expected = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
    ensure(cutoffs.len() == expected.len(), || format!("{} cutoffs", cutoffs.len()))?;
    let mut least = f64::INFINITY;
    for (c, want) in cutoffs.iter().zip(expected) {
        let cut = c["cutoff"].as_f64().unwrap_or(f64::NAN);
        let m = c["measure"].as_f64().unwrap_or(f64::NAN);
        ensure((cut - want).abs() < 1e-9 * want, || format!("cutoff {cut}, expected {want}"))?;
        ensure(m >= 0.99, || format!("λ{{g₁ > {want}}} = {m} < 0.99"))?;
        least = least.min(m);
    }
    Ok(format!("exit 4, (ii) violated, min superlevel measure {least:.4}"))
}

fn counterexample_growth() -> Outcome {
    let t = harness::counterexample_demo(&[10.0, 20.0, 40.0, 80.0], 2000, &RngKey::new(2)).map_err(|e| e.to_string())?;
    // Star mass of one orientation: λ{x ≤ 1} · λ{y ≤ T : ⌊y⌋ even} = T/2 for even T.
    ensure((0.45..=0.55).contains(&t.slope), || format!("slope {:.4} outside [0.45, 0.55]", t.slope))?;
    Ok(format!("slope {:.4} ± {:.4}", t.slope, t.slope_stderr))
}

fn finite_model_flatness() -> Outcome {
    let caps = [1.0, 10.0, 20.0, 40.0, 80.0];
    let t = harness::growth_table(&harness::bounded_star_rep(), 1.0, &caps, 2000, &RngKey::new(3)).map_err(|e| e.to_string())?;
    for r in &t.rows {
        // ∫_0^T ind(x ≤ 1) dx · ∫_0^T ind(y ≤ 1) dy = 1 for T ≥ 1.
        ensure((r.mean_mass - 1.0).abs() <= 3.0 * r.stderr, || {
            format!("T = {}: mean {:.4} ± {:.4} not within 3 SE of 1", r.mark_cap, r.mean_mass, r.stderr)
        })?;
    }
    let out = exmeas(&["certify", configs().join("bounded_star.toml").to_str().unwrap()], None);
    ensure(out.status.code() == Some(0), || format!("certify exit {:?}, expected 0", out.status.code()))?;
    let worst = t.rows.iter().map(|r| ((r.mean_mass - 1.0) / r.stderr).abs()).fold(0.0, f64::max);
    Ok(format!("max |z| = {worst:.2} over T ∈ {caps:?}, certify exit 0"))
}

fn campbell_agreement() -> Outcome {
    let n = 10_000;
    let t_cap = 40.0;
    // (a) dust only, I(1) = 0.5, s = 1: both orientations give 2 · s² · 1 · 0.5.
    let start = Instant::now();
    let dust = ModelSource::new(Model::Multigraphex(Multigraphex::dust(vec![0.0, 0.5])), TruncationConfig::new(t_cap));
    let xs = harness::replicate(&dust, 1.0, n, &RngKey::new(4), |w| w.parts.dust + w.parts.dust_mirror).map_err(|e| e.to_string())?;
    let (m_a, se_a) = mean_se(&xs);
    ensure((m_a - 1.0).abs() <= 3.0 * se_a, || format!("dust mean {m_a:.4} ± {se_a:.4}, predicted 1"))?;
    let took_a = start.elapsed();
    // (b) Poisson multiplicities with mean e^{-x-y}: off-diagonal atoms in
    // [0,1]² with labels up to T carry ∫∫_{[0,T]²} e^{-x-y} = (1 - e^{-T})².
    let start = Instant::now();
    let pe = ModelSource::new(Model::Multigraphex(Multigraphex::poisson_exp()), TruncationConfig::new(t_cap));
    let xs = harness::replicate(&pe, 1.0, n, &RngKey::new(5), |w| w.parts.edge).map_err(|e| e.to_string())?;
    let (m_b, se_b) = mean_se(&xs);
    let oracle = (1.0 - (-t_cap).exp()).powi(2);
    ensure((m_b - oracle).abs() <= 3.0 * se_b, || format!("edge mean {m_b:.4} ± {se_b:.4}, predicted {oracle}"))?;
    let took_b = start.elapsed();
    ensure(took_a.max(took_b) < Duration::from_secs(120), || "over the 120 s budget".into())?;
    // The library's own predictions agree with the closed forms.
    let report = harness::campbell_check(&pe, 1.0, 2000, &RngKey::new(6)).map_err(|e| e.to_string())?;
    ensure(report.passed(), || format!("campbell_check failed: {:?}", report.notes))?;
    Ok(format!("dust {m_a:.4} ± {se_a:.4} vs 1, edges {m_b:.4} ± {se_b:.4} vs 1"))
}

/// A random symmetric multigraphex drawn from a small family.
fn random_multigraphex(stream: &mut Stream) -> Multigraphex {
    let a = 0.2 + 2.0 * stream.next_f64();
    let c = 0.2 + 3.0 * stream.next_f64();
    let w = match stream.next_u32() % 3 {
        0 => EdgeKernel::PoissonPmf {
            mean: Function::parse("W", &format!("{c}*exp(-{a}*(x+y))"), &XY).unwrap(),
        },
        1 => EdgeKernel::Pmf {
            expr: Function::parse(
                "W",
                &format!("(0.6*ind(k,1,1)+0.3*ind(k,2,2))*exp(-{a}*(x+y))*min(1,{c})/{c}"),
                &XYK,
            )
            .unwrap(),
            max_k: 2,
        },
        _ => EdgeKernel::Zero,
    };
    let s = if stream.next_u32().is_multiple_of(2) {
        StarIntensity::Pmf {
            expr: Function::parse("S", &format!("{c}*exp(-{a}*v)*ind(k,1,3)/max(k,1)"), &VK).unwrap(),
            max_k: 3,
        }
    } else {
        StarIntensity::Zero
    };
    let i = (0..1 + stream.next_u32() % 4).map(|k| if k == 0 { 0.0 } else { stream.next_f64() }).collect();
    Multigraphex {
        w,
        s,
        s_tail: 0.0,
        i,
        i_tail: 0.0,
    }
}

fn exact_symmetry() -> Outcome {
    let mut stream = RngKey::new(7).stream();
    let mut windows = 0;
    let mut atoms = 0;
    for cfg in 0..20 {
        let mg = random_multigraphex(&mut stream);
        let src = ModelSource::new(Model::Multigraphex(mg), TruncationConfig::new(20.0));
        let s = 0.5 + 2.5 * stream.next_f64();
        let res = harness::replicate(&src, s, 50, &RngKey::new(100 + cfg), |w| (harness::test_symmetry(w), w.atoms.len()))
            .map_err(|e| e.to_string())?;
        for (k, (ok, n)) in res.into_iter().enumerate() {
            ensure(ok, || format!("config {cfg}, replicate {k} is not symmetric"))?;
            windows += 1;
            atoms += n;
        }
    }
    ensure(windows == 1000, || format!("{windows} windows"))?;
    Ok(format!("{windows} windows, {atoms} atoms, all symmetric"))
}

fn exchangeability() -> Outcome {
    let src = || ModelSource::new(Model::Multigraphex(Multigraphex::poisson_exp()), TruncationConfig::new(40.0));
    let key = RngKey::new(8);
    let fair = harness::test_exchangeability(&src(), 1.0, 2000, 0.01, &key).map_err(|e| e.to_string())?;
    ensure(fair.passed(), || format!("exchangeable sampler rejected, p = {:.3e}", fair.p_value))?;
    let skewed = SkewedSource { inner: src(), a: 1.0 };
    let bad = harness::test_exchangeability(&skewed, 1.0, 2000, 0.01, &key).map_err(|e| e.to_string())?;
    ensure(!bad.passed(), || format!("skewed sampler accepted, p = {:.3e}", bad.p_value))?;
    Ok(format!("fair p = {:.3}, skewed p = {:.1e}", fair.p_value, bad.p_value))
}

fn block_independence() -> Outcome {
    let n = 5000;
    let bound = 3.0 / (n as f64).sqrt();
    let key = RngKey::new(9);
    let alpha = harness::three_sigma_alpha();
    let src = ModelSource::new(Model::Multigraphex(Multigraphex::poisson_exp()), TruncationConfig::new(40.0));
    let fixed = harness::test_block_independence(&src, 1.0, 2.0, n, alpha, &key).map_err(|e| e.to_string())?;
    ensure(fixed.value.abs() < bound, || format!("|ρ| = {:.4} ≥ {bound:.4}", fixed.value.abs()))?;
    let mix = harness::dust_mixture(TruncationConfig::new(40.0));
    let mixed = harness::test_block_independence(&mix, 1.0, 2.0, n, alpha, &key).map_err(|e| e.to_string())?;
    ensure(mixed.value.abs() > bound, || format!("mixture |ρ| = {:.4} ≤ {bound:.4}", mixed.value.abs()))?;
    Ok(format!("fixed ρ = {:.4}, mixture ρ = {:.4}, bound {bound:.4}", fixed.value, mixed.value))
}

/// Points of a unit-rate Poisson process on `[0, len]`, sorted.
fn poisson_points(len: f64, key: &RngKey) -> Vec<f64> {
    let mut pts: Vec<f64> = poisson::sample_unit_pp(key, 1.0, len).unwrap().points.into_iter().map(|p| p.1).collect();
    pts.sort_by(f64::total_cmp);
    pts
}

fn linear_sums(f: &dyn Fn(f64) -> f64, pts: &[f64], ends: &[f64]) -> Vec<f64> {
    ends.iter().map(|&l| pts.iter().take_while(|&&x| x <= l).map(|&x| f(x)).sum()).collect()
}

fn quadratic_sums(h: &dyn Fn(f64, f64) -> f64, pts: &[f64], ends: &[f64]) -> Vec<f64> {
    ends.iter()
        .map(|&l| {
            let p: Vec<f64> = pts.iter().copied().take_while(|&x| x <= l).collect();
            p.iter().map(|&x| p.iter().map(|&y| h(x, y)).sum::<f64>()).sum()
        })
        .collect()
}

fn stabilised(sums: &[f64]) -> bool {
    let n = sums.len();
    let last = sums[n - 1];
    (last - sums[n - 2]).abs() <= 1e-2 * last.abs().max(1.0) && last.is_finite()
}

fn classifier_battery() -> Outcome {
    type F1 = Box<dyn Fn(f64) -> f64>;
    type F2 = Box<dyn Fn(f64, f64) -> f64>;
    // (name, function, finite?, doubling exponent of the largest domain).
    let linear: Vec<(&str, F1, bool, i32)> = vec![
        ("exp(-x)", Box::new(|x: f64| (-x).exp()), true, 12),
        ("(1+x)^-2", Box::new(|x: f64| (1.0 + x).powi(-2)), true, 12),
        ("5·ind(x,0,3)", Box::new(|x: f64| if x <= 3.0 { 5.0 } else { 0.0 }), true, 12),
        ("1", Box::new(|_| 1.0), false, 12),
        ("(1+x)^-1/2", Box::new(|x: f64| (1.0 + x).powf(-0.5)), false, 19),
        ("ind(⌊x⌋ even)", Box::new(|x: f64| if (x.floor() as i64) % 2 == 0 { 1.0 } else { 0.0 }), false, 12),
    ];
    let quadratic: Vec<(&str, F2, bool, i32)> = vec![
        ("ind(x,0,1)·ind(y,0,1)", Box::new(|x: f64, y: f64| if x <= 1.0 && y <= 1.0 { 1.0 } else { 0.0 }), true, 10),
        ("exp(-x-y)", Box::new(|x: f64, y: f64| (-x - y).exp()), true, 10),
        ("1", Box::new(|_, _| 1.0), false, 10),
        ("exp(-|x-y|)", Box::new(|x: f64, y: f64| (-(x - y).abs()).exp()), false, 10),
    ];
    let cfg = CertifyConfig::default();
    let key = RngKey::new(10);
    let mut summary = Vec::new();
    for (i, (name, f, finite, top)) in linear.iter().enumerate() {
        let class = finiteness::poisson_linear_classify(|x| Ok::<_, QuadError>(f(x)), 1e-6).map_err(|e| e.to_string())?.class;
        let want = if *finite { PoissonClass::FiniteAS } else { PoissonClass::InfiniteAS };
        ensure(class == want, || format!("linear {name}: {class:?}, expected {want:?}"))?;
        let ends: Vec<f64> = (0..=*top).map(|m| 2f64.powi(m)).collect();
        let sums = linear_sums(f.as_ref(), &poisson_points(ends[ends.len() - 1], &key.child(1, i as u64)), &ends);
        let last = sums[sums.len() - 1];
        if *finite {
            ensure(stabilised(&sums), || format!("linear {name}: partial sums {sums:?} do not settle"))?;
        } else {
            ensure(last > 1e3, || format!("linear {name}: reached only {last:.1}"))?;
        }
        summary.push(format!("{name}→{last:.3}"));
    }
    for (i, (name, h, finite, top)) in quadratic.iter().enumerate() {
        let c = finiteness::poisson_quadratic_classify(|x, y| Ok(h(x, y)), &cfg);
        let want = if *finite { PoissonClass::FiniteAS } else { PoissonClass::InfiniteAS };
        ensure(c.class == want, || format!("quadratic {name}: {:?}, expected {want:?}", c.class))?;
        let ends: Vec<f64> = (0..=*top).map(|m| 2f64.powi(m)).collect();
        let sums = quadratic_sums(h.as_ref(), &poisson_points(ends[ends.len() - 1], &key.child(2, i as u64)), &ends);
        let last = sums[sums.len() - 1];
        if *finite {
            ensure(stabilised(&sums), || format!("quadratic {name}: partial sums {sums:?} do not settle"))?;
        } else {
            ensure(last > 1e3, || format!("quadratic {name}: reached only {last:.1}"))?;
        }
        summary.push(format!("{name}→{last:.3}"));
    }
    Ok(format!("10/10 classified; sums at the largest domain: {}", summary.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = configs().join("stars.toml");
    let mut outputs = Vec::new();
    for (run, threads) in [(0, "1"), (1, "1"), (2, "8"), (3, "8")] {
        let out = dir.path().join(format!("run{run}.tsv"));
        let res = exmeas(
            &["sample", config.to_str().unwrap(), "--window", "3", "--seed", "42", "--out", out.to_str().unwrap()],
            Some(threads),
        );
        ensure(res.status.success(), || format!("sample failed: {}", String::from_utf8_lossy(&res.stderr)))?;
        let tsv = std::fs::read(&out).map_err(|e| e.to_string())?;
        let json = std::fs::read(dir.path().join(format!("run{run}.tsv.summary.json"))).map_err(|e| e.to_string())?;
        outputs.push((tsv, json));
    }
    ensure(outputs.windows(2).all(|w| w[0] == w[1]), || "outputs differ".into())?;
    let lines = outputs[0].0.iter().filter(|&&b| b == b'\n').count();
    ensure(lines > 5, || format!("only {lines} lines written"))?;
    Ok(format!("4 runs (threads 1, 1, 8, 8) byte-identical, {} atoms", lines - 1))
}

/// Random expression trees from a fixed stream.
fn random_expr(stream: &mut Stream, depth: u32) -> Expr {
    let pick = |stream: &mut Stream, n: u32| stream.next_u32() % n;
    if depth == 0 || pick(stream, 4) == 0 {
        return match pick(stream, 3) {
            0 => Expr::var(Var::ALL[pick(stream, 5) as usize]),
            1 => Expr::num(f64::from(pick(stream, 100))),
            _ => Expr::num(stream.next_f64() * 10f64.powi(pick(stream, 40) as i32 - 20)),
        };
    }
    let d = depth - 1;
    match pick(stream, 5) {
        0 => Expr::neg(random_expr(stream, d)),
        1 | 2 => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][pick(stream, 5) as usize];
            Expr::binary(op, random_expr(stream, d), random_expr(stream, d))
        }
        3 => {
            let f = [Func::Exp, Func::Log, Func::Abs, Func::Floor][pick(stream, 4) as usize];
            Expr::call(f, vec![random_expr(stream, d)])
        }
        _ => match pick(stream, 4) {
            0 => Expr::call(Func::Mod, vec![random_expr(stream, d), random_expr(stream, d)]),
            1 => Expr::call(Func::Min, (0..2 + pick(stream, 2)).map(|_| random_expr(stream, d)).collect()),
            2 => Expr::call(Func::Ind, (0..3).map(|_| random_expr(stream, d)).collect()),
            _ => Expr::call(Func::Piecewise, (0..3).map(|_| random_expr(stream, d)).collect()),
        },
    }
}

fn dsl_round_trip() -> Outcome {
    let mut stream = RngKey::new(11).stream();
    let mut max_depth = 0;
    for i in 0..1000 {
        let e = random_expr(&mut stream, 6);
        max_depth = max_depth.max(e.depth());
        let text = dsl::pretty_print(&e);
        let back = dsl::parse(&text).map_err(|err| format!("tree {i}: {text}: {err}"))?;
        ensure(back == e, || format!("tree {i} changed: {text}"))?;
    }
    let g = dsl::parse("ind(x,0,1)*ind(mod(floor(y),2),0,0)").map_err(|e| e.to_string())?;
    for i in 0..10 {
        for j in 0..10 {
            let (x, y) = (i as f64 * 0.25, j as f64 * 0.75 + 0.1);
            let want = if x <= 1.0 && (y.floor() as i64) % 2 == 0 { 1.0 } else { 0.0 };
            let got = dsl::eval(&g, &Env::from_pairs(&[Var::X, Var::Y], &[x, y])).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("g({x}, {y}) = {got}, expected {want}"))?;
        }
    }
    Ok(format!("1000 trees (depth ≤ {max_depth}) intact; 100 probes of g correct"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("counter-example certification", counterexample_certification, 10),
        ("counter-example growth law", counterexample_growth, 60),
        ("finite-model flatness", finite_model_flatness, 60),
        ("Campbell agreement", campbell_agreement, 240),
        ("exact symmetry", exact_symmetry, 60),
        ("exchangeability", exchangeability, 120),
        ("block independence", block_independence, 120),
        ("classifier battery", classifier_battery, 60),
        ("determinism", determinism, 120),
        ("DSL round-trip", dsl_round_trip, 60),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let result = result.and_then(|m| {
            if took > Duration::from_secs(*budget) {
                Err(format!("{m}; took {took:.1?}, budget {budget} s"))
            } else {
                Ok(m)
            }
        });
        match result {
            Ok(m) => println!("criterion {:>2} {name}: PASS ({:.1} s) {m}", k + 1, took.as_secs_f64()),
            Err(m) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({:.1} s) {m}", k + 1, took.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
