use exmeas::finiteness::{psi, summability_oracle, CertifyConfig, Discrete, Marginals, Summability};
use exmeas::harness::test_symmetry;
use exmeas::model::{EdgeKernel, Function, KallenbergRep, Model, Multigraphex, StarIntensity, VK, X, XY, XYZ};
use exmeas::rng::RngKey;
use exmeas::sampler::{sample_model, TruncationConfig};
use exmeas::types::Interval;
use proptest::prelude::*;

#[test]
fn psi_sandwich_on_many_probes() {
    let mut stream = RngKey::new(1).stream();
    for _ in 0..100_000 {
        // Probes spread over many scales.
        let x = stream.next_f64() * 10f64.powf(stream.next_f64() * 16.0 - 8.0);
        let p = psi(x).unwrap();
        let cap = x.min(1.0);
        assert!(cap / 2.0 <= p && p <= cap, "ψ({x}) = {p}");
    }
    assert_eq!(psi(0.0).unwrap(), 0.0);
    assert!(psi(-1e-300).is_err());
}

fn lines_rep(a: f64) -> KallenbergRep {
    let p = |slot: &str, text: String, vars: &[exmeas::dsl::Var]| Function::parse(slot, &text, vars).unwrap();
    KallenbergRep {
        f: p("f", format!("0.8*exp(-{a}*(x+y))"), &XYZ),
        g: p("g", "ind(x,0,1)*exp(-y)".into(), &XY),
        g_prime: p("g'", "ind(x,0,2)*exp(-2*y)".into(), &XY),
        h: p("h", format!("0.5*exp(-{a}*x)"), &X),
        h_prime: p("h'", "ind(x,0,1)".into(), &X),
        l: p("l", "exp(-x)".into(), &X),
        l_prime: p("l'", "0.5*exp(-x)".into(), &X),
        beta: 0.3,
        gamma: 0.2,
        ..KallenbergRep::zero()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn symmetric_marginals_agree(a in 0.2f64..3.0, x in 0.0f64..5.0) {
        let rep = lines_rep(a);
        let m = Marginals::new(&rep, &CertifyConfig::default());
        let f1 = m.f1(x).unwrap().value;
        let f2 = m.f2(x).unwrap().value;
        // ∫_0^∞ 0.8 e^{-a(x+y)} dy
        let oracle = 0.8 * (-a * x).exp() / a;
        prop_assert!((f1 - f2).abs() <= 1e-7 * oracle.max(1e-3), "f1 {} f2 {}", f1, f2);
        prop_assert!((f1 - oracle).abs() <= 1e-6 * oracle.max(1e-3), "f1 {} oracle {}", f1, oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mass_is_additive_over_splits(seed in any::<u64>(), a in 0.5f64..2.0, cut in 0.0f64..1.0, lo in 0.0f64..1.0) {
        let s = 3.0;
        let w = sample_model(&Model::Kallenberg(lines_rep(a)), s, &TruncationConfig::new(20.0), &RngKey::new(seed)).unwrap();
        let (c, b0) = (cut * s, lo * s);
        let b = Interval::new(b0, s);
        let whole = w.mass_in(Interval::new(0.0, s), b);
        let parts = w.mass_in(Interval::new(0.0, c), b) + w.mass_in(Interval::new(c, s), b);
        prop_assert!((whole - parts).abs() <= 1e-9 * whole.max(1.0));
        let mirrored = w.mass_in(b, Interval::new(0.0, c)) + w.mass_in(b, Interval::new(c, s));
        prop_assert!((w.mass_in(b, Interval::new(0.0, s)) - mirrored).abs() <= 1e-9 * whole.max(1.0));
    }

    #[test]
    fn sampled_multigraphexes_are_symmetric(seed in any::<u64>(), c in 0.1f64..3.0, d in 0.0f64..1.0, s in 0.2f64..3.0) {
        let mg = Multigraphex {
            w: EdgeKernel::PoissonPmf { mean: Function::parse("W", &format!("{c}*exp(-x-y)"), &XY).unwrap() },
            s: StarIntensity::Pmf {
                expr: Function::parse("S", &format!("{c}*ind(k,1,2)*exp(-v)"), &VK).unwrap(),
                max_k: 2,
            },
            i: vec![0.0, d, d / 2.0],
            ..Multigraphex::zero()
        };
        let w = sample_model(&Model::Multigraphex(mg), s, &TruncationConfig::new(20.0), &RngKey::new(seed)).unwrap();
        prop_assert!(test_symmetry(&w));
        prop_assert!(w.is_symmetric());
    }

    #[test]
    fn power_series_summability(p in 0.2f64..3.0, scale in 1.0f64..10.0) {
        // Z_j is 0 or at least 1, so E[1 ∧ Z_j] = j^{-p}.
        let terms: Vec<Discrete> = (1..=(1 << 12)).map(|j| Discrete::bernoulli((j as f64).powf(-p), scale)).collect();
        let r = summability_oracle(&terms, 4, &RngKey::new(2));
        // The block sums of j^{-p} shrink by about 2^{1-p} per doubling.
        let ratio = 2f64.powf(1.0 - p);
        if ratio >= 0.95 {
            prop_assert_eq!(r.predicted, Summability::Diverges);
        } else if ratio <= 0.85 {
            prop_assert_eq!(r.predicted, Summability::Converges);
        }
    }
}

#[test]
fn summability_examples() {
    let key = RngKey::new(3);
    let geometric: Vec<Discrete> = (1..=64).map(|j| Discrete::point(2f64.powi(-j))).collect();
    let r = summability_oracle(&geometric, 100, &key);
    assert_eq!(r.predicted, Summability::Converges);
    // Σ_{j=1}^{63} 2^{-j} in complete blocks.
    assert!((r.expected_total - (1.0 - 2f64.powi(-63))).abs() < 1e-12);

    let harmonic: Vec<Discrete> = (1..=4096).map(|j| Discrete::bernoulli(1.0 / j as f64, 1.0)).collect();
    let r = summability_oracle(&harmonic, 400, &key);
    assert_eq!(r.predicted, Summability::Diverges);
    // Sampled partial sums follow the harmonic numbers.
    let n = r.empirical_partial_means.len();
    let h: f64 = (1..(1 << n)).map(|j| 1.0 / j as f64).sum();
    assert!((r.empirical_partial_means[n - 1] - h).abs() < 0.5, "{} vs {h}", r.empirical_partial_means[n - 1]);

    let zero = vec![Discrete::point(0.0); 100];
    assert_eq!(summability_oracle(&zero, 10, &key).predicted, Summability::Converges);
}
