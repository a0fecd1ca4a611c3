//! Square norms, Perron-Frobenius eigenpairs, Markov weights and the Jones
//! spectrum.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::graph::BipartiteGraph;
use crate::scalar::{ratio_to_f64, Scalar};
use crate::tower::MarkovWeightedGraph;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Largest matrix side for which the exact characteristic polynomial
/// cross-check runs.
pub const EXACT_SIDE: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerronResult {
    pub eigenvalue: f64,
    /// Normalized so the first entry is 1.
    pub vector: Vec<f64>,
    /// `‖A v − ρ v‖_∞ / ‖v‖_∞` for the returned pair.
    pub residual_inf: f64,
    pub iterations: usize,
}

fn components_of(a: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = a.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            for u in 0..n {
                if !seen[u] && (a[v][u] != 0.0 || a[u][v] != 0.0) {
                    seen[u] = true;
                    comp.push(u);
                }
            }
            k += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn validate_symmetric_nonnegative(a: &[Vec<f64>]) -> Result<()> {
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    for row in a {
        if row.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: row.len() });
        }
    }
    for i in 0..n {
        for j in 0..n {
            let x = a[i][j];
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidParameter(format!("entry ({i},{j}) = {x} is not a nonnegative number")));
            }
            if (x - a[j][i]).abs() > 1e-12 * x.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Dominant eigenpair of a symmetric, nonnegative, irreducible matrix by
/// power iteration from the all-ones vector.
pub fn perron(a: &[Vec<f64>], tol: f64) -> Result<PerronResult> {
    perron_from(a, tol, vec![1.0; a.len()])
}

/// Power iteration from a random strictly positive start vector.
pub fn perron_seeded(a: &[Vec<f64>], tol: f64, seed: u64) -> Result<PerronResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = (0..a.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
    perron_from(a, tol, start)
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn perron_from(a: &[Vec<f64>], tol: f64, start: Vec<f64>) -> Result<PerronResult> {
    validate_symmetric_nonnegative(a)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let comps = components_of(a);
    if comps.len() > 1 {
        return Err(Error::Reducible { components: comps });
    }
    let n = a.len();
    // a zero diagonal admits period two; shifting by the identity removes it
    let shift = if (0..n).any(|i| a[i][i] == 0.0) { 1.0 } else { 0.0 };
    let mut v = start;
    let scale = inf_norm(&v);
    v.iter_mut().for_each(|x| *x /= scale);
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let av = mat_vec(a, &v);
        let rho = dot(&v, &av) / dot(&v, &v);
        residual = v.iter().zip(&av).map(|(x, y)| (y - rho * x).abs()).fold(0.0, f64::max) / inf_norm(&v);
        // below `floor` the residual is rounding noise
        let floor = 64.0 * f64::EPSILON * rho * (n as f64).sqrt();
        if residual <= tol.max(floor) {
            let first = v[0];
            let vector: Vec<f64> = v.iter().map(|x| x / first).collect();
            let av = mat_vec(a, &vector);
            let residual_inf =
                vector.iter().zip(&av).map(|(x, y)| (y - rho * x).abs()).fold(0.0, f64::max) / inf_norm(&vector);
            return Ok(PerronResult { eigenvalue: rho, vector, residual_inf, iterations: it });
        }
        let mut w: Vec<f64> = av.iter().zip(&v).map(|(y, x)| y + shift * x).collect();
        let m = inf_norm(&w);
        w.iter_mut().for_each(|x| *x /= m);
        v = w;
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, residual })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram_f64(g: &[Vec<u128>]) -> Vec<Vec<f64>> {
    g.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect()
}

/// Norm data for one connected component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentNorm {
    pub even_labels: Vec<String>,
    pub norm_squared: f64,
    /// Exact rational bracket of the largest eigenvalue, when the exact
    /// cross-check ran.
    pub certified: Option<(f64, f64)>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm_squared: f64,
    pub reducible: bool,
    pub components: Vec<ComponentNorm>,
}

/// Largest eigenvalue of `ΛᵗΛ`.
pub fn norm_squared(g: &BipartiteGraph, tol: f64) -> Result<f64> {
    Ok(norm_report(g, tol)?.norm_squared)
}

/// `norm_squared` with per-component detail. Components of side at most
/// [`EXACT_SIDE`] are cross-checked against the exact characteristic
/// polynomial; disagreement beyond the tolerance is an error.
pub fn norm_report(g: &BipartiteGraph, tol: f64) -> Result<NormReport> {
    let comps = g.components();
    let reducible = comps.len() > 1;
    let mut out = Vec::with_capacity(comps.len());
    for c in &comps {
        let sub = g.subgraph(c);
        // both Gram matrices share their nonzero spectrum; use the smaller
        let gram = if sub.n_odd() < sub.n_even() { sub.odd_gram() } else { sub.even_gram() };
        let pr = perron(&gram_f64(&gram), tol)?;
        let rho = pr.eigenvalue;
        let certified = if gram.len() <= EXACT_SIDE {
            let p = exact::char_poly_u128(&gram);
            Some(certify_largest_root(&p, rho, tol, gram.len())?)
        } else {
            None
        };
        out.push(ComponentNorm {
            even_labels: sub.even_labels().to_vec(),
            norm_squared: rho,
            certified,
            iterations: pr.iterations,
        });
    }
    let norm_squared = out.iter().map(|c| c.norm_squared).fold(0.0, f64::max);
    Ok(NormReport { norm_squared, reducible, components: out })
}

/// Confirms exactly that the largest root of `p` lies within `δ` of `rho`,
/// where `δ` covers the residual-based eigenvalue error of the iteration.
fn certify_largest_root(p: &[BigInt], rho: f64, tol: f64, side: usize) -> Result<(f64, f64)> {
    let delta = (side as f64).sqrt() * tol * rho.max(1.0) + 1e-14 * rho.max(1.0);
    let lo = exact::rational_from_f64(rho - delta);
    let hi = exact::rational_from_f64(rho + delta);
    let above_lo = exact::roots_above(p, &lo);
    let above_hi = exact::roots_above(p, &hi);
    if above_hi != 0 || above_lo == 0 {
        let width = BigRational::new(1.into(), BigInt::from(1u64 << 50));
        let (l, h) = exact::largest_root_bracket(p, &width);
        return Err(Error::CrossCheck { iterative: rho, lo: ratio_to_f64(&l), hi: ratio_to_f64(&h) });
    }
    Ok((ratio_to_f64(&lo), ratio_to_f64(&hi)))
}

/// Exact characteristic polynomial of the smaller Gram matrix of a
/// connected graph.
pub fn gram_char_poly(g: &BipartiteGraph) -> exact::Poly {
    let gram = if g.n_odd() < g.n_even() { g.odd_gram() } else { g.even_gram() };
    exact::char_poly_u128(&gram)
}

/// Pointed Markov weighted graph of a connected graph: `λ⁻¹ = ‖Λ‖²` and `t`
/// the Perron vector of `ΛᵗΛ` with `t_basepoint = 1`.
///
/// When the floating solution rounds to small rationals that satisfy the
/// Markov relation exactly, the exact data is returned instead.
pub fn markov_weight(g: &BipartiteGraph, basepoint: &str) -> Result<MarkovWeightedGraph> {
    markov_weight_tol(g, basepoint, DEFAULT_TOL)
}

pub fn markov_weight_tol(g: &BipartiteGraph, basepoint: &str, tol: f64) -> Result<MarkovWeightedGraph> {
    if !g.is_connected() {
        return Err(Error::Disconnected { components: g.component_labels() });
    }
    let b = g.even_position(basepoint).ok_or_else(|| Error::UnknownVertex(basepoint.to_string()))?;
    let pr = perron(&gram_f64(&g.even_gram()), tol)?;
    let tb = pr.vector[b];
    let t: Vec<f64> = pr.vector.iter().map(|x| x / tb).collect();
    if let Some((li, te)) = try_exact(g, pr.eigenvalue, &t) {
        return Ok(MarkovWeightedGraph::from_parts(g.clone(), te, li, basepoint.to_string()));
    }
    Ok(MarkovWeightedGraph::from_parts(
        g.clone(),
        t.into_iter().map(Scalar::Float).collect(),
        Scalar::Float(pr.eigenvalue),
        basepoint.to_string(),
    ))
}

fn snap(x: f64) -> Option<BigRational> {
    for den in 1..=64i64 {
        let num = (x * den as f64).round();
        if (num / den as f64 - x).abs() <= 1e-9 * x.abs().max(1.0) && num.abs() < 1e15 {
            return Some(BigRational::new(BigInt::from(num as i64), BigInt::from(den)));
        }
    }
    None
}

fn try_exact(g: &BipartiteGraph, li: f64, t: &[f64]) -> Option<(Scalar, Vec<Scalar>)> {
    let li = snap(li)?;
    let t: Vec<BigRational> = t.iter().map(|&x| snap(x)).collect::<Option<_>>()?;
    let ts: Vec<Scalar> = t.iter().cloned().map(Scalar::Exact).collect();
    let report = verify_markov(g, &ts, &Scalar::Exact(li.clone()), 0.0).ok()?;
    report.exact_zero.then_some((Scalar::Exact(li), ts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    /// `‖ΛᵗΛt − λ⁻¹t‖_∞ / ‖t‖_∞`.
    pub residual: f64,
    pub pass: bool,
    /// The residual vanishes in exact arithmetic.
    pub exact_zero: bool,
}

/// Checks `ΛᵗΛ t = λ⁻¹ t`.
pub fn verify_markov(g: &BipartiteGraph, t: &[Scalar], lambda_inv: &Scalar, tol: f64) -> Result<MarkovReport> {
    if t.len() != g.n_even() {
        return Err(Error::DimensionMismatch { expected: g.n_even(), found: t.len() });
    }
    for (j, w) in t.iter().enumerate() {
        if !w.is_positive() {
            return Err(Error::NonPositiveWeight(g.even_labels()[j].clone()));
        }
    }
    if !lambda_inv.is_positive() {
        return Err(Error::InvalidParameter("lambda_inv must be positive".into()));
    }
    let gram = g.even_gram();
    let exact: Option<Vec<&BigRational>> = t.iter().map(Scalar::as_exact).collect();
    if let (Some(te), Some(li)) = (exact, lambda_inv.as_exact()) {
        let mut worst = BigRational::zero();
        let mut tmax = BigRational::zero();
        for (j, row) in gram.iter().enumerate() {
            let mut lhs = BigRational::zero();
            for (k, &s) in row.iter().enumerate() {
                if s != 0 {
                    lhs += te[k] * BigRational::from_integer(BigInt::from(s));
                }
            }
            let diff = (lhs - li * te[j]).abs();
            if diff > worst {
                worst = diff;
            }
            if *te[j] > tmax {
                tmax = te[j].clone();
            }
        }
        let rel = worst / tmax;
        let residual = ratio_to_f64(&rel);
        let exact_zero = rel.is_zero();
        return Ok(MarkovReport { residual, pass: exact_zero || residual <= tol, exact_zero });
    }
    let tf: Vec<f64> = t.iter().map(Scalar::to_f64).collect();
    let li = lambda_inv.to_f64();
    let mut worst = 0.0f64;
    for (j, row) in gram.iter().enumerate() {
        let lhs: f64 = row.iter().zip(&tf).map(|(&s, &w)| s as f64 * w).sum();
        worst = worst.max((lhs - li * tf[j]).abs());
    }
    let residual = worst / inf_norm(&tf);
    Ok(MarkovReport { residual, pass: residual <= tol, exact_zero: residual == 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "n")]
pub enum SpectrumVerdict {
    CoxeterValue(u64),
    Four,
    Continuum,
    NotInSpectrum,
}

impl SpectrumVerdict {
    pub fn witness_n(&self) -> Option<u64> {
        match self {
            SpectrumVerdict::CoxeterValue(n) => Some(*n),
            _ => None,
        }
    }

    pub fn in_spectrum(&self) -> bool {
        !matches!(self, SpectrumVerdict::NotInSpectrum)
    }
}

pub fn coxeter_value(n: u64) -> f64 {
    let c = (std::f64::consts::PI / n as f64).cos();
    4.0 * c * c
}

pub const DEFAULT_SPECTRUM_TOL: f64 = 1e-9;

/// Membership in `{4cos²(π/n) : n ≥ 3} ∪ [4, ∞)`.
pub fn jones_spectrum_member(alpha: f64, tol: f64) -> SpectrumVerdict {
    if (alpha - 4.0).abs() <= tol {
        return SpectrumVerdict::Four;
    }
    if alpha > 4.0 {
        return SpectrumVerdict::Continuum;
    }
    if !(alpha > 0.0) {
        return SpectrumVerdict::NotInSpectrum;
    }
    // 4cos²(π/n) = α  ⇔  n = π / acos(√α / 2)
    let x = std::f64::consts::PI / (alpha.sqrt() / 2.0).min(1.0).acos();
    let base = x.floor().max(3.0) as u64;
    let best = [base.saturating_sub(1).max(3), base, base + 1]
        .into_iter()
        .min_by(|&a, &b| {
            let da = (coxeter_value(a) - alpha).abs();
            let db = (coxeter_value(b) - alpha).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .expect("nonempty candidates");
    if (coxeter_value(best) - alpha).abs() <= tol {
        SpectrumVerdict::CoxeterValue(best)
    } else {
        SpectrumVerdict::NotInSpectrum
    }
}

/// Nonnegative integer matrix to float.
pub fn to_f64_matrix(a: &[Vec<BigInt>]) -> Vec<Vec<f64>> {
    a.iter().map(|r| r.iter().map(|x| x.to_f64().unwrap_or(f64::INFINITY)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(rows: &[&[u64]]) -> BipartiteGraph {
        BipartiteGraph::from_rows(rows).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert!((norm_squared(&g(&[&[1]]), DEFAULT_TOL).unwrap() - 1.0).abs() < 1e-10);
        assert!((norm_squared(&g(&[&[1, 1]]), DEFAULT_TOL).unwrap() - 2.0).abs() < 1e-10);
        let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((norm_squared(&g(&[&[1, 1], &[0, 1]]), DEFAULT_TOL).unwrap() - phi2).abs() < 1e-10);
    }

    #[test]
    fn reducible_graph_takes_max() {
        let r = norm_report(&g(&[&[1, 0], &[0, 2]]), DEFAULT_TOL).unwrap();
        assert!(r.reducible);
        assert!((r.norm_squared - 4.0).abs() < 1e-10);
    }

    #[test]
    fn perron_examples() {
        let r = perron(&[vec![2.0]], DEFAULT_TOL).unwrap();
        assert_eq!((r.eigenvalue, r.vector.clone()), (2.0, vec![1.0]));
        let r = perron(&[vec![1.0, 1.0], vec![1.0, 1.0]], DEFAULT_TOL).unwrap();
        assert!((r.eigenvalue - 2.0).abs() < 1e-12 && (r.vector[1] - 1.0).abs() < 1e-12);
        let r = perron(&[vec![1.0, 1.0], vec![1.0, 2.0]], DEFAULT_TOL).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((r.eigenvalue - phi * phi).abs() < 1e-10);
        assert!((r.vector[1] - phi).abs() < 1e-8);
    }

    #[test]
    fn perron_handles_zero_diagonal() {
        let r = perron(&[vec![0.0, 1.0], vec![1.0, 0.0]], DEFAULT_TOL).unwrap();
        assert!((r.eigenvalue - 1.0).abs() < 1e-10);
    }

    #[test]
    fn perron_rejects_reducible() {
        let err = perron(&[vec![1.0, 0.0], vec![0.0, 1.0]], DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::Reducible { ref components } if components.len() == 2));
    }

    #[test]
    fn markov_weight_examples() {
        let m = markov_weight(&g(&[&[1]]), "j0").unwrap();
        assert_eq!(m.lambda_inv(), &Scalar::int(1));
        let m = markov_weight(&g(&[&[1, 1]]), "j0").unwrap();
        assert_eq!(m.lambda_inv(), &Scalar::int(2));
        assert_eq!(m.weights(), &[Scalar::int(1), Scalar::int(1)]);
        let m = markov_weight(&g(&[&[1, 1], &[0, 1]]), "j0").unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(!m.lambda_inv().is_exact());
        assert!((m.weights()[1].to_f64() - phi).abs() < 1e-8);
        assert!(matches!(markov_weight(&g(&[&[1, 0], &[0, 1]]), "j0"), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn verify_markov_examples() {
        let one_one = g(&[&[1, 1]]);
        let r = verify_markov(&one_one, &[Scalar::int(1), Scalar::int(1)], &Scalar::int(2), 1e-10).unwrap();
        assert!(r.pass && r.exact_zero);
        let r = verify_markov(&one_one, &[Scalar::int(1), Scalar::int(2)], &Scalar::int(2), 1e-10).unwrap();
        assert!(!r.pass);
        let r = verify_markov(&g(&[&[1]]), &[Scalar::int(1)], &Scalar::int(1), 1e-10).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!(verify_markov(&one_one, &[Scalar::int(1), Scalar::int(0)], &Scalar::int(2), 1e-10).is_err());
    }

    #[test]
    fn spectrum_examples() {
        assert_eq!(jones_spectrum_member(3.0, DEFAULT_SPECTRUM_TOL), SpectrumVerdict::CoxeterValue(6));
        assert_eq!(jones_spectrum_member(4.2, DEFAULT_SPECTRUM_TOL), SpectrumVerdict::Continuum);
        assert_eq!(jones_spectrum_member(3.5, DEFAULT_SPECTRUM_TOL), SpectrumVerdict::NotInSpectrum);
        assert_eq!(jones_spectrum_member(4.0, DEFAULT_SPECTRUM_TOL), SpectrumVerdict::Four);
        assert_eq!(jones_spectrum_member(1.0, DEFAULT_SPECTRUM_TOL), SpectrumVerdict::CoxeterValue(3));
        assert_eq!(jones_spectrum_member(2.0, DEFAULT_SPECTRUM_TOL), SpectrumVerdict::CoxeterValue(4));
        assert_eq!(jones_spectrum_member(0.5, DEFAULT_SPECTRUM_TOL), SpectrumVerdict::NotInSpectrum);
        for n in 3..200 {
            assert_eq!(jones_spectrum_member(coxeter_value(n), 1e-12), SpectrumVerdict::CoxeterValue(n));
        }
    }

    fn small_graph() -> impl Strategy<Value = BipartiteGraph> {
        (1usize..4, 1usize..4)
            .prop_flat_map(|(r, c)| proptest::collection::vec(proptest::collection::vec(0u64..3, c), r))
            .prop_filter_map("isolated vertex", |rows| BipartiteGraph::from_rows(&rows).ok())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transpose_preserves_norm(gr in small_graph()) {
            let a = norm_squared(&gr, DEFAULT_TOL).unwrap();
            let b = norm_squared(&gr.transpose(), DEFAULT_TOL).unwrap();
            prop_assert!((a - b).abs() <= 2.0 * DEFAULT_TOL * a.max(1.0));
        }

        #[test]
        fn deleting_an_edge_never_increases_norm(gr in small_graph(), pick in 0usize..64) {
            let edges: Vec<(usize, usize)> = (0..gr.n_odd())
                .flat_map(|i| (0..gr.n_even()).map(move |j| (i, j)))
                .filter(|&(i, j)| gr.entry(i, j) > 0)
                .collect();
            let (i, j) = edges[pick % edges.len()];
            if let Some(h) = gr.decrement_edge(i, j) {
                let a = norm_squared(&gr, DEFAULT_TOL).unwrap();
                let b = norm_squared(&h, DEFAULT_TOL).unwrap();
                prop_assert!(b <= a + 2.0 * DEFAULT_TOL * a);
            }
        }

        #[test]
        fn markov_weight_passes_verification(gr in small_graph()) {
            prop_assume!(gr.is_connected());
            let base = gr.even_labels()[0].clone();
            let m = markov_weight(&gr, &base).unwrap();
            let r = verify_markov(&gr, m.weights(), m.lambda_inv(), 10.0 * DEFAULT_TOL).unwrap();
            prop_assert!(r.pass, "residual {}", r.residual);
        }

        #[test]
        fn seeds_agree(gr in small_graph(), s1 in any::<u64>(), s2 in any::<u64>()) {
            prop_assume!(gr.is_connected());
            let a = gram_f64(&gr.even_gram());
            let x = perron_seeded(&a, DEFAULT_TOL, s1).unwrap();
            let y = perron_seeded(&a, DEFAULT_TOL, s2).unwrap();
            prop_assert!((x.eigenvalue - y.eigenvalue).abs() <= 2.0 * DEFAULT_TOL * x.eigenvalue.max(1.0));
            prop_assert!(x.residual_inf <= 10.0 * DEFAULT_TOL);
        }
    }
}
