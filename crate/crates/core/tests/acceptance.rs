use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;

use subspec_core::algebra::{
    basic_construction, expectation, index_via_ob, probabilistic_index, EmbeddedSubalgebra, IndexMethod,
    MultiMatrixAlgebra, ProbabilisticOptions,
};
use subspec_core::cells::{cell_tower_preview, verify_cell, MarkovCell};
use subspec_core::espec::{classify, coxeter_graph, enumerate, CanonicalGraph, EnumBounds, NormClass};
use subspec_core::exact::largest_root_bracket;
use subspec_core::folner::{
    certificate_check, interval_search, norm_bound_from_certificate, spectral_cut_search, CutOptions, CutTarget,
    SearchOutcome,
};
use subspec_core::io::parse_graph_json;
use subspec_core::scalar::ratio_to_f64;
use subspec_core::spectral::{gram_char_poly, norm_squared};
use subspec_core::tlj::{a_inf_diagnostic, jones_poly, locally_trivial_couplings, positivity_horizon, Horizon};
use subspec_core::tower::coupling_check_truncated;
use subspec_core::{LazyWeightedGraph, Scalar, VertexSet};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn data(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "data", name].iter().collect();
    std::fs::read_to_string(path).expect("data file")
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn coxeter_norms() -> Check {
    for n in 2..=20usize {
        let g = coxeter_graph('A', n).map_err(e)?.to_graph();
        let got = norm_squared(&g, 1e-12).map_err(e)?;
        let want = 4.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos().powi(2);
        ensure((got - want).abs() <= 1e-9, format!("A_{n}: {got} vs {want}"))?;
        if n <= 12 {
            let width = BigRational::new(BigInt::from(1), BigInt::from(1u64 << 40));
            let (lo, hi) = largest_root_bracket(&gram_char_poly(&g), &width);
            let (lo, hi) = (ratio_to_f64(&lo), ratio_to_f64(&hi));
            ensure(lo - 1e-12 <= want && want <= hi + 1e-12, format!("A_{n}: exact bracket [{lo}, {hi}] misses {want}"))?;
        }
    }
    Ok("A_2..A_20 match 4cos²(π/(n+1))".into())
}

fn e10_norm() -> Check {
    let g = parse_graph_json(&data("e10.json")).map_err(e)?.graph;
    let x = norm_squared(&g, 1e-12).map_err(e)?;
    ensure(format!("{x:.10}").starts_with("4.0265"), format!("‖E10‖² = {x}"))?;
    Ok(format!("‖E10‖² = {x:.6}"))
}

fn ade_classification() -> Check {
    let small = enumerate(&EnumBounds::new(9, 1)).map_err(e)?;
    let mut found: Vec<Vec<Vec<u64>>> =
        small.graphs.iter().filter(|g| g.class() == NormClass::Coxeter).map(|g| g.matrix.clone()).collect();
    let mut expected = Vec::new();
    for (kind, range) in [('A', 2..=9), ('D', 4..=9), ('E', 6..=8)] {
        for n in range {
            expected.push(coxeter_graph(kind, n).map_err(e)?.matrix);
        }
    }
    found.sort();
    expected.sort();
    ensure(found == expected, format!("{} graphs below 4, expected {}", found.len(), expected.len()))?;
    let big = enumerate(&EnumBounds::new(10, 1)).map_err(e)?;
    ensure(!big.truncated, "enumeration truncated")?;
    let atlas = classify(&big.graphs);
    let first = atlas.first_above_four().ok_or("no entry above 4")?;
    let e10 = CanonicalGraph::from_graph(&parse_graph_json(&data("e10.json")).map_err(e)?.graph).map_err(e)?;
    ensure(first.witness.matrix == e10.matrix, format!("first above 4 is {:?}", first.witness.matrix))?;
    ensure(!atlas.entries.iter().any(|x| x.norm_squared > 4.0 + 1e-9 && x.norm_squared < 4.02), "entry in (4, 4.02)")?;
    Ok(format!("{} graphs ≤ 9 vertices, 17 below 4; {} graphs ≤ 10 vertices, first above 4 is E10", small.graphs.len(), big.graphs.len()))
}

fn tlj_closed_form() -> Check {
    let quarter = BigRational::new(BigInt::from(1), BigInt::from(4));
    for n in 0..=30i64 {
        let got = jones_poly(n).map_err(e)?.eval_exact(&quarter);
        let want = BigRational::new(BigInt::from(n + 2), BigInt::from(2) << n as usize);
        ensure(got == want, format!("P_{n}(1/4) = {got}"))?;
    }
    let h3 = positivity_horizon(&Scalar::ratio(1, 3), 50).map_err(e)?;
    let h2 = positivity_horizon(&Scalar::ratio(1, 2), 50).map_err(e)?;
    ensure(h3 == Horizon::Finite(3), format!("horizon(1/3) = {h3:?}"))?;
    ensure(h2 == Horizon::Finite(1), format!("horizon(1/2) = {h2:?}"))?;
    Ok("P_n(1/4) = (n+2)/2^(n+1) for n ≤ 30; horizons 3 and 1".into())
}

fn folner_positive() -> Check {
    let g = LazyWeightedGraph::a_infinity(4).map_err(e)?;
    let f: VertexSet = (0..=12).map(|k| k.to_string()).collect();
    let r = certificate_check(&g, &f, 0.5).map_err(e)?;
    let ratio = r.certificate.ratio;
    ensure(r.pass && (0.499..=0.4995).contains(&ratio), format!("F = 0..12: pass {} ratio {ratio}", r.pass))?;
    let out = spectral_cut_search(CutTarget::Builtin(&g), 0.1, &CutOptions { max_size: 2000, ..Default::default() }).map_err(e)?;
    let c = out.certificate().ok_or_else(|| format!("spectral search: {out:?}"))?;
    let bound = norm_bound_from_certificate(&g, c).map_err(e)?;
    ensure(bound >= 3.97, format!("bound {bound}"))?;
    Ok(format!("ratio {ratio:.5}; spectral certificate |F| = {} ratio {:.4}; bound {bound:.4}", c.f.len(), c.ratio))
}

fn folner_negative() -> Check {
    let mut notes = Vec::new();
    for li in [Scalar::ratio(9, 2), Scalar::int(5)] {
        let g = LazyWeightedGraph::a_infinity(li.clone()).map_err(e)?;
        let a = interval_search(&g, 0.5, 10_000).map_err(e)?;
        let b = spectral_cut_search(CutTarget::Builtin(&g), 0.5, &CutOptions::default()).map_err(e)?;
        for (name, out) in [("interval", &a), ("spectral", &b)] {
            match out {
                SearchOutcome::Exhausted { best_ratio, .. } => notes.push(format!("λ⁻¹={} {name} best {best_ratio:.3}", li.to_f64())),
                SearchOutcome::Certificate(c) => return Err(format!("λ⁻¹={}: {name} found |F| = {}", li.to_f64(), c.f.len())),
            }
        }
    }
    Ok(notes.join("; "))
}

fn basic_constructions() -> Check {
    let a = MultiMatrixAlgebra::matrix(2).map_err(e)?;
    let m = EmbeddedSubalgebra::full(&a);
    let diag = EmbeddedSubalgebra::generated(&a, &[a.matrix_units()[0].clone()]).map_err(e)?;
    let mut dims = Vec::new();
    for (b, want) in [(EmbeddedSubalgebra::scalars(&a), 16), (diag, 8)] {
        let bc = basic_construction(&m, &b).map_err(e)?;
        let r = &bc.report;
        ensure(r.m1_dim == want, format!("dim ⟨M, e⟩ = {}, expected {want}", r.m1_dim))?;
        ensure(r.compression_residual <= 1e-10, format!("compression residual {}", r.compression_residual))?;
        ensure(r.pass && r.transpose_law, format!("{r:?}"))?;
        dims.push(r.m1_dim);
    }
    Ok(format!("dimensions {dims:?}, properties and transpose law hold"))
}

fn index_duality() -> Check {
    let a = MultiMatrixAlgebra::matrix(2).map_err(e)?;
    let m = EmbeddedSubalgebra::full(&a);
    let ex = expectation(&a, &EmbeddedSubalgebra::scalars(&a)).map_err(e)?;
    for seed in 0..5 {
        let x = index_via_ob(&m, &ex, seed).map_err(e)?;
        ensure((x - 4.0).abs() <= 1e-9, format!("seed {seed}: ind_ob = {x}"))?;
    }
    let opts = ProbabilisticOptions { samples: 2000, ..Default::default() };
    let r = probabilistic_index(&m, &ex, IndexMethod::BruteforceRank1, &opts).map_err(e)?;
    ensure(r.lambda_e_bracket.contains(0.5, 1e-9), format!("bracket {:?}", r.lambda_e_bracket))?;
    let inv = 1.0 / r.lambda_e;
    ensure(inv < r.ind_ob && r.ind_ob <= inv * inv + 1e-6, format!("1/λ = {inv}, ind_ob = {}", r.ind_ob))?;
    Ok(format!("ind_ob = 4 over 5 orders; λ(E) bracket [{:.4}, {:.4}]", r.lambda_e_bracket.lower, r.lambda_e_bracket.upper))
}

fn markov_cells() -> Check {
    let mut notes = Vec::new();
    for (file, want) in [("spin.json", 2.0), ("fourier3.json", 3.0)] {
        let cell = MarkovCell::from_json(&data(file)).map_err(e)?;
        let cert = verify_cell(&cell, 1e-9).map_err(e)?;
        ensure(cert.verified(), format!("{file}: {cert:?}"))?;
        ensure((cert.subfactor_index - want).abs() <= 1e-9, format!("{file}: index {}", cert.subfactor_index))?;
        let pv = cell_tower_preview(&cell, 4, 1e-9).map_err(e)?;
        ensure(pv.rows_match && pv.verticals_match && pv.composition_ok, format!("{file}: identities fail"))?;
        notes.push(format!("{file} index {:.9}", cert.subfactor_index));
    }
    Ok(notes.join("; "))
}

fn couplings() -> Check {
    let g = LazyWeightedGraph::a_infinity(4).map_err(e)?;
    let tr = g.truncate(30).map_err(e)?;
    let d_m: Vec<f64> = tr.graph.even_labels().iter().map(|l| 2.0 * l.parse::<f64>().unwrap() + 1.0).collect();
    let d_n = tr.graph.apply(&d_m);
    let r = coupling_check_truncated(&tr, &d_m, &d_n, 4.0, 1e-8).map_err(e)?;
    ensure(r.pass && r.residual_eigen < 1e-8, format!("A_∞: {r:?}"))?;

    let lambda = Scalar::ratio(21, 100);
    let lt = locally_trivial_couplings(&lambda, 0..=0).map_err(e)?;
    let ratio = lt.ratio.to_f64();
    let g = LazyWeightedGraph::a_two_sided(lambda.recip()).map_err(e)?;
    let tr = g.truncate(12).map_err(e)?;
    let d_m: Vec<f64> = tr.graph.even_labels().iter().map(|l| ratio.powi(l.parse::<i32>().unwrap())).collect();
    let d_n = tr.graph.apply(&d_m);
    let r2 = coupling_check_truncated(&tr, &d_m, &d_n, 1.0 / 0.21, 1e-8).map_err(e)?;
    ensure(r2.pass && r2.residual_eigen < 1e-8, format!("two-sided: {r2:?}"))?;

    let diag = a_inf_diagnostic(&Scalar::ratio(1, 5), 20).map_err(e)?;
    Ok(format!(
        "A_∞ residual {:.1e}; two-sided residual {:.1e}; half-line diagnostic residual {:.3e} (open question, not asserted)",
        r.residual_eigen, r2.residual_eigen, diag.formula.residual_eigen
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check, Duration); 10] = [
        ("Coxeter norms", coxeter_norms, Duration::from_secs(1)),
        ("E10 norm", e10_norm, Duration::from_secs(1)),
        ("ADE classification", ade_classification, Duration::from_secs(300)),
        ("TLJ closed form", tlj_closed_form, Duration::from_secs(1)),
        ("Folner positive case", folner_positive, Duration::from_secs(10)),
        ("Folner negative case", folner_negative, Duration::from_secs(30)),
        ("basic construction", basic_constructions, Duration::from_secs(1)),
        ("index duality", index_duality, Duration::from_secs(5)),
        ("Markov cells", markov_cells, Duration::from_secs(1)),
        ("coupling relations", couplings, Duration::from_secs(5)),
    ];
    let mut failed = Vec::new();
    // written past the test harness capture so the summary always shows
    let mut out = std::io::stdout();
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        // runtime budgets assume an optimized build
        let slow = !cfg!(debug_assertions) && took > *budget;
        match (&outcome, slow) {
            (Ok(note), false) => writeln!(out, "criterion {}: PASS {name} ({note}) [{took:.2?}]", k + 1).unwrap(),
            (Ok(note), true) => {
                writeln!(out, "criterion {}: FAIL {name} over budget {budget:?} ({note}) [{took:.2?}]", k + 1).unwrap();
                failed.push(k + 1);
            }
            (Err(msg), _) => {
                writeln!(out, "criterion {}: FAIL {name} ({msg}) [{took:.2?}]", k + 1).unwrap();
                failed.push(k + 1);
            }
        }
    }
    let unexpected: Vec<usize> = failed.iter().copied().filter(|k| !UNATTAINABLE.contains(k)).collect();
    assert!(unexpected.is_empty(), "failed criteria: {unexpected:?}");
}

/// Criteria whose reference value disagrees with the mathematics.
/// The reference ‖E10‖² = 4.0265 is not the square norm of E10, which is
/// 4.02641..., as the Lehmer oracle below confirms.
const UNATTAINABLE: &[usize] = &[2];

/// Largest root of Lehmer's polynomial by bisection on [1.1, 1.2].
fn lehmer_number() -> f64 {
    let p = |x: f64| [1.0, 1.0, 0.0, -1.0, -1.0, -1.0, -1.0, -1.0, 0.0, 1.0, 1.0].iter().fold(0.0, |acc, c| acc * x + c);
    let (mut lo, mut hi) = (1.1, 1.2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(lo) * p(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn e10_norm_matches_lehmer_oracle() {
    // the spectral radius of E10 is √μ + 1/√μ for Lehmer's number μ
    let mu = lehmer_number();
    let g = parse_graph_json(&data("e10.json")).unwrap().graph;
    let x = norm_squared(&g, 1e-12).unwrap();
    assert!((x - (mu + 2.0 + 1.0 / mu)).abs() < 1e-10, "{x}");
    assert!((x - 4.0264).abs() < 5e-5);
}
