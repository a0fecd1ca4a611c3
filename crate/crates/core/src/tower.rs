//! Graph-level Jones towers: the basic construction step on Markov weighted
//! graphs, Bratteli towers with exact path counts and trace bookkeeping,
//! dimension growth, and coupling-vector relations.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, Truncation, WeightedEvenGraph};
use crate::scalar::{ratio_to_f64, Scalar};
use crate::spectral::{self, verify_markov};

/// Default relative tolerance for Markov validation.
pub const MARKOV_TOL: f64 = 1e-9;

/// A bipartite graph with positive weights on its even vertices satisfying
/// `ΛᵗΛ t = λ⁻¹ t`, together with a distinguished even basepoint.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovWeightedGraph {
    graph: BipartiteGraph,
    weights: Vec<Scalar>,
    lambda_inv: Scalar,
    basepoint: String,
    /// For finite pieces of infinite graphs: even vertices at which the
    /// Markov relation is meaningful.
    interior: Option<Vec<bool>>,
}

impl MarkovWeightedGraph {
    /// Validated constructor; the Markov relation must hold within `tol`.
    pub fn new(graph: BipartiteGraph, weights: Vec<Scalar>, lambda_inv: Scalar, basepoint: &str, tol: f64) -> Result<Self> {
        if graph.even_position(basepoint).is_none() {
            return Err(Error::UnknownVertex(basepoint.to_string()));
        }
        let report = verify_markov(&graph, &weights, &lambda_inv, tol)?;
        if !report.pass {
            return Err(Error::NotMarkov { residual: report.residual });
        }
        Ok(Self::from_parts(graph, weights, lambda_inv, basepoint.to_string()))
    }

    pub(crate) fn from_parts(graph: BipartiteGraph, weights: Vec<Scalar>, lambda_inv: Scalar, basepoint: String) -> Self {
        MarkovWeightedGraph { graph, weights, lambda_inv, basepoint, interior: None }
    }

    /// Wraps a truncation of a built-in infinite graph, validating the Markov
    /// relation on interior even vertices only.
    pub fn from_truncation(tr: &Truncation, basepoint: &str, tol: f64) -> Result<Self> {
        if tr.graph.even_position(basepoint).is_none() {
            return Err(Error::UnknownVertex(basepoint.to_string()));
        }
        let residual = tr.interior_markov_residual();
        if residual > tol {
            return Err(Error::NotMarkov { residual });
        }
        Ok(MarkovWeightedGraph {
            graph: tr.graph.clone(),
            weights: tr.weights.clone(),
            lambda_inv: tr.lambda_inv.clone(),
            basepoint: basepoint.to_string(),
            interior: Some(tr.even_interior.clone()),
        })
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }

    pub fn weights(&self) -> &[Scalar] {
        &self.weights
    }

    pub fn lambda_inv(&self) -> &Scalar {
        &self.lambda_inv
    }

    pub fn lambda(&self) -> Scalar {
        self.lambda_inv.recip()
    }

    pub fn basepoint(&self) -> &str {
        &self.basepoint
    }

    pub fn interior(&self) -> Option<&[bool]> {
        self.interior.as_deref()
    }

    pub fn weight_of(&self, label: &str) -> Option<&Scalar> {
        self.graph.even_position(label).map(|j| &self.weights[j])
    }

    /// `s = Λ t`, indexed by odd vertices.
    pub fn s(&self) -> Vec<Scalar> {
        self.graph.apply_scalar(&self.weights)
    }

    /// Rescaled so the basepoint weight is 1.
    pub fn normalized(&self) -> Self {
        let b = self.graph.even_position(&self.basepoint).expect("basepoint validated");
        let inv = self.weights[b].recip();
        let mut out = self.clone();
        out.weights = self.weights.iter().map(|w| w.mul(&inv)).collect();
        out
    }
}

impl WeightedEvenGraph for MarkovWeightedGraph {
    fn lambda_inv(&self) -> f64 {
        self.lambda_inv.to_f64()
    }

    fn basepoint(&self) -> String {
        self.basepoint.clone()
    }

    fn contains(&self, v: &str) -> bool {
        self.graph.even_position(v).is_some()
    }

    fn neighbors(&self, v: &str) -> Result<Vec<(String, u64)>> {
        WeightedEvenGraph::neighbors(&self.graph, v)
    }

    fn log_weight(&self, v: &str) -> Result<f64> {
        let w = self.weight_of(v).ok_or_else(|| Error::UnknownVertex(v.to_string()))?;
        match w {
            Scalar::Exact(r) => Ok(crate::scalar::ratio_ln(r)),
            Scalar::Float(x) => Ok(x.ln()),
        }
    }

    fn exact_weight(&self, v: &str) -> Option<BigRational> {
        self.weight_of(v).and_then(Scalar::as_exact).cloned()
    }

    fn all_vertices(&self) -> Option<Vec<String>> {
        Some(self.graph.even_labels().to_vec())
    }

    fn fingerprint(&self) -> String {
        crate::io::fingerprint_str(&crate::io::graph_to_json(&self.graph, Some(&self.weights), Some(&self.lambda_inv)))
    }
}

/// One step up the tower: the graph is transposed, the old odd vertices
/// become the even vertices, and the new weights are `λ Λ t`.
///
/// The weights are not renormalized, so the new basepoint (the first odd
/// neighbour of the old one) generally does not carry weight 1.
pub fn basic_construction_step(m: &MarkovWeightedGraph) -> MarkovWeightedGraph {
    let lambda = m.lambda();
    let weights: Vec<Scalar> = m.s().iter().map(|x| x.mul(&lambda)).collect();
    let b = m.graph.even_position(&m.basepoint).expect("basepoint validated");
    let i = (0..m.graph.n_odd()).find(|&i| m.graph.entry(i, b) != 0).expect("no isolated vertices");
    let graph = m.graph.transpose();
    let basepoint = graph.even_labels()[i].clone();
    MarkovWeightedGraph { graph, weights, lambda_inv: m.lambda_inv.clone(), basepoint, interior: None }
}

fn ser_bigints<S: Serializer>(v: &[BigInt], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

fn ser_bigint<S: Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Even,
    Odd,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TowerLevel {
    pub level: usize,
    pub side: Side,
    /// `"Lambda"` for inclusions entering odd levels, `"Lambda^t"` for even
    /// levels; absent at level 0.
    pub inclusion: Option<&'static str>,
    pub labels: Vec<String>,
    /// Number of paths from the basepoint.
    #[serde(serialize_with = "ser_bigints")]
    pub dims: Vec<BigInt>,
    /// Trace of a minimal projection in each summand.
    pub traces: Vec<Scalar>,
    /// `Σ dims²`.
    #[serde(serialize_with = "ser_bigint")]
    pub total_dim: BigInt,
}

impl TowerLevel {
    /// `Σ dims · traces`; equals 1 for a state.
    pub fn trace_of_identity(&self) -> Scalar {
        self.dims.iter().zip(&self.traces).fold(Scalar::zero(), |acc, (d, t)| acc.add(&t.mul_int(d)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BratteliTower {
    pub lambda_inv: Scalar,
    pub basepoint: String,
    pub levels: Vec<TowerLevel>,
}

impl BratteliTower {
    pub fn total_dims(&self) -> Vec<BigInt> {
        self.levels.iter().map(|l| l.total_dim.clone()).collect()
    }
}

/// Levels `0..=depth` of the pointed tower `A_0 ⊂ A_1 ⊂ …` over `m`.
///
/// Level `2k` lives on the even vertices with minimal-projection traces
/// `λ^k t_j`; level `2k+1` on the odd vertices with traces `λ^{k+1} s_i`.
/// Weights are normalized at the basepoint first.
pub fn build_tower(m: &MarkovWeightedGraph, depth: usize) -> Result<BratteliTower> {
    if depth < 1 {
        return Err(Error::InvalidParameter("tower depth must be at least 1".into()));
    }
    let m = m.normalized();
    let g = &m.graph;
    let lambda = m.lambda();
    let t = m.weights.clone();
    let s = m.s();
    let b = g.even_position(&m.basepoint).expect("basepoint validated");
    let mut dims: Vec<BigInt> = (0..g.n_even()).map(|j| if j == b { BigInt::one() } else { BigInt::zero() }).collect();
    let mut levels = Vec::with_capacity(depth + 1);
    let mut lambda_pow = Scalar::one();
    levels.push(make_level(0, Side::Even, None, g.even_labels(), dims.clone(), &t, &lambda_pow));
    for n in 1..=depth {
        if n % 2 == 1 {
            // odd level: paths step through Λ
            dims = (0..g.n_odd())
                .map(|i| (0..g.n_even()).map(|j| &dims[j] * BigInt::from(g.entry(i, j))).sum())
                .collect();
            lambda_pow = lambda_pow.mul(&lambda);
            levels.push(make_level(n, Side::Odd, Some("Lambda"), g.odd_labels(), dims.clone(), &s, &lambda_pow));
        } else {
            dims = (0..g.n_even())
                .map(|j| (0..g.n_odd()).map(|i| &dims[i] * BigInt::from(g.entry(i, j))).sum())
                .collect();
            levels.push(make_level(n, Side::Even, Some("Lambda^t"), g.even_labels(), dims.clone(), &t, &lambda_pow));
        }
    }
    Ok(BratteliTower { lambda_inv: m.lambda_inv.clone(), basepoint: m.basepoint.clone(), levels })
}

fn make_level(
    level: usize,
    side: Side,
    inclusion: Option<&'static str>,
    labels: &[String],
    dims: Vec<BigInt>,
    weights: &[Scalar],
    lambda_pow: &Scalar,
) -> TowerLevel {
    let total_dim = dims.iter().map(|d| d * d).sum();
    let traces = weights.iter().map(|w| w.mul(lambda_pow)).collect();
    TowerLevel { level, side, inclusion, labels: labels.to_vec(), dims, traces, total_dim }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    /// `(dim_n / dim_{n-2})^{1/2}` at the deepest level.
    pub estimate: f64,
    pub level: usize,
    /// `‖Λ‖²` of the level-0 graph.
    pub norm_squared: f64,
}

pub fn growth_rate(tw: &BratteliTower, graph: &BipartiteGraph) -> Result<GrowthReport> {
    if tw.levels.len() < 6 {
        return Err(Error::TooShallow { needed: 6, have: tw.levels.len() });
    }
    let n = tw.levels.len() - 1;
    let ratio = BigRational::new(tw.levels[n].total_dim.clone(), tw.levels[n - 2].total_dim.clone());
    Ok(GrowthReport {
        estimate: ratio_to_f64(&ratio).sqrt(),
        level: n,
        norm_squared: spectral::norm_squared(graph, spectral::DEFAULT_TOL)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingReport {
    #[serde(rename = "residual_dN")]
    pub residual_dn: f64,
    pub residual_eigen: f64,
    pub pass: bool,
    /// Odd vertices included in `residual_dN`.
    pub odd_mask: Vec<bool>,
    /// Even vertices included in `residual_eigen`.
    pub even_mask: Vec<bool>,
}

/// Checks `d_N = Λ d_M` and `ΛᵗΛ d_M = index · d_M` on a finite graph.
pub fn coupling_check(g: &BipartiteGraph, d_m: &[f64], d_n: &[f64], index: f64, tol: f64) -> Result<CouplingReport> {
    coupling_check_masked(g, d_m, d_n, index, tol, &vec![true; g.n_odd()], &vec![true; g.n_even()])
}

/// As [`coupling_check`] on a truncation of an infinite graph, with residuals
/// restricted to interior vertices.
pub fn coupling_check_truncated(tr: &Truncation, d_m: &[f64], d_n: &[f64], index: f64, tol: f64) -> Result<CouplingReport> {
    coupling_check_masked(&tr.graph, d_m, d_n, index, tol, &tr.odd_interior, &tr.even_interior)
}

fn coupling_check_masked(
    g: &BipartiteGraph,
    d_m: &[f64],
    d_n: &[f64],
    index: f64,
    tol: f64,
    odd_mask: &[bool],
    even_mask: &[bool],
) -> Result<CouplingReport> {
    if d_m.len() != g.n_even() {
        return Err(Error::DimensionMismatch { expected: g.n_even(), found: d_m.len() });
    }
    if d_n.len() != g.n_odd() {
        return Err(Error::DimensionMismatch { expected: g.n_odd(), found: d_n.len() });
    }
    if let Some(x) = d_m.iter().chain(d_n).find(|x| !(**x > 0.0)) {
        return Err(Error::InvalidParameter(format!("coupling vectors must be positive, found {x}")));
    }
    let masked_max = |v: &[f64], mask: &[bool]| {
        v.iter().zip(mask).filter(|(_, &m)| m).fold(0.0f64, |acc, (x, _)| acc.max(x.abs()))
    };
    let lam_d = g.apply(d_m);
    let diff_n: Vec<f64> = lam_d.iter().zip(d_n).map(|(a, b)| a - b).collect();
    let residual_dn = ratio_or_zero(masked_max(&diff_n, odd_mask), masked_max(d_n, odd_mask));
    let gram = g.apply_t(&lam_d);
    let diff_e: Vec<f64> = gram.iter().zip(d_m).map(|(a, b)| a - index * b).collect();
    let residual_eigen = ratio_or_zero(masked_max(&diff_e, even_mask), masked_max(d_m, even_mask));
    Ok(CouplingReport {
        residual_dn,
        residual_eigen,
        pass: residual_dn <= tol && residual_eigen <= tol,
        odd_mask: odd_mask.to_vec(),
        even_mask: even_mask.to_vec(),
    })
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardWeights {
    /// Perron vector on the even side, 1 at the basepoint.
    pub v: Vec<f64>,
    /// `u = Γᵗ v` on the odd side.
    pub u: Vec<f64>,
    pub lambda_inv: f64,
    /// `λ^{-1/2}`, the alternative normalization of `u` at the first odd
    /// vertex; reported next to `u` without choosing between them.
    pub index_sqrt: f64,
}

/// Standard weights `(v, u, λ⁻¹)` with `ΓΓᵗ v = λ⁻¹ v` and `u = Γᵗ v`. The
/// even side of `gamma` carries `v`.
pub fn standard_weights(gamma: &BipartiteGraph, basepoint: &str, tol: f64) -> Result<StandardWeights> {
    let m = spectral::markov_weight_tol(gamma, basepoint, tol)?;
    let v: Vec<f64> = m.weights().iter().map(Scalar::to_f64).collect();
    let u = gamma.apply(&v);
    let lambda_inv = m.lambda_inv().to_f64();
    Ok(StandardWeights { v, u, lambda_inv, index_sqrt: lambda_inv.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LazyWeightedGraph;
    use crate::spectral::markov_weight;

    fn g(rows: &[&[u64]]) -> BipartiteGraph {
        BipartiteGraph::from_rows(rows).unwrap()
    }

    fn mwg(rows: &[&[u64]], t: Vec<Scalar>, li: Scalar) -> MarkovWeightedGraph {
        MarkovWeightedGraph::new(g(rows), t, li, "j0", MARKOV_TOL).unwrap()
    }

    #[test]
    fn step_examples() {
        let m = mwg(&[&[2]], vec![Scalar::int(1)], Scalar::int(4));
        let up = basic_construction_step(&m);
        assert_eq!(up.graph().matrix_u64(), vec![vec![2]]);
        assert_eq!(up.weights(), &[Scalar::ratio(1, 2)]);

        let m = mwg(&[&[1]], vec![Scalar::int(1)], Scalar::int(1));
        let up = basic_construction_step(&m);
        assert_eq!(up.graph().matrix_u64(), vec![vec![1]]);
        assert_eq!(up.weights(), &[Scalar::int(1)]);

        let m = mwg(&[&[1, 1]], vec![Scalar::int(1), Scalar::int(1)], Scalar::int(2));
        let up = basic_construction_step(&m);
        assert_eq!(up.graph().matrix_u64(), vec![vec![1], vec![1]]);
        assert_eq!(up.weights(), &[Scalar::int(1)]);
        assert_eq!(up.basepoint(), "i0");
    }

    #[test]
    fn two_steps_return_the_original_up_to_scale() {
        let m = markov_weight(&g(&[&[1, 1, 0], &[0, 1, 1], &[0, 0, 1]]), "j0").unwrap();
        let twice = basic_construction_step(&basic_construction_step(&m));
        assert_eq!(twice.graph(), m.graph());
        let back = twice.normalized();
        for (a, b) in back.weights().iter().zip(m.weights()) {
            assert!((a.to_f64() - b.to_f64()).abs() < 1e-9);
        }
        let lam = m.lambda().to_f64();
        for (a, b) in twice.weights().iter().zip(m.weights()) {
            assert!((a.to_f64() - lam * b.to_f64()).abs() < 1e-9);
        }
    }

    fn totals(tw: &BratteliTower) -> Vec<u64> {
        tw.total_dims().iter().map(|d| u64::try_from(d.clone()).unwrap()).collect()
    }

    #[test]
    fn spin_tower_doubles() {
        let m = mwg(&[&[1, 1]], vec![Scalar::int(1), Scalar::int(1)], Scalar::int(2));
        let tw = build_tower(&m, 8).unwrap();
        assert_eq!(totals(&tw), vec![1, 1, 2, 4, 8, 16, 32, 64, 128]);
        for l in &tw.levels {
            assert_eq!(l.trace_of_identity(), Scalar::one());
        }
    }

    #[test]
    fn multiplicity_two_tower() {
        let m = mwg(&[&[2]], vec![Scalar::int(1)], Scalar::int(4));
        let tw = build_tower(&m, 4).unwrap();
        assert_eq!(totals(&tw), vec![1, 4, 16, 64, 256]);
        assert_eq!(tw.levels[2].traces, vec![Scalar::ratio(1, 4)]);
        assert_eq!(tw.levels[1].traces, vec![Scalar::ratio(1, 2)]);
    }

    #[test]
    fn half_line_tower_gives_catalan_numbers() {
        let lazy = LazyWeightedGraph::a_infinity(Scalar::int(4)).unwrap();
        let tr = lazy.truncate(12).unwrap();
        let m = MarkovWeightedGraph::from_truncation(&tr, "0", MARKOV_TOL).unwrap();
        let tw = build_tower(&m, 10).unwrap();
        // oracle: Catalan recursion C_{k+1} = sum C_i C_{k-i}
        let mut cat = vec![1u64];
        for k in 0..10 {
            cat.push((0..=k).map(|i| cat[i] * cat[k - i]).sum());
        }
        assert_eq!(totals(&tw), cat[..11].to_vec());
        for l in &tw.levels {
            assert_eq!(l.trace_of_identity(), Scalar::one());
        }
    }

    #[test]
    fn growth_examples() {
        let m = mwg(&[&[1, 1]], vec![Scalar::int(1), Scalar::int(1)], Scalar::int(2));
        let r = growth_rate(&build_tower(&m, 12).unwrap(), m.graph()).unwrap();
        assert!((r.estimate - 2.0).abs() < 1e-12 && (r.norm_squared - 2.0).abs() < 1e-9);
        let m = mwg(&[&[2]], vec![Scalar::int(1)], Scalar::int(4));
        let r = growth_rate(&build_tower(&m, 12).unwrap(), m.graph()).unwrap();
        assert!((r.estimate - 4.0).abs() < 1e-12);
        let m = mwg(&[&[1]], vec![Scalar::int(1)], Scalar::int(1));
        let r = growth_rate(&build_tower(&m, 6).unwrap(), m.graph()).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert!(matches!(growth_rate(&build_tower(&m, 4).unwrap(), m.graph()), Err(Error::TooShallow { .. })));
    }

    #[test]
    fn coupling_examples() {
        let r = coupling_check(&g(&[&[1]]), &[1.0], &[1.0], 1.0, 1e-12).unwrap();
        assert!(r.pass);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let r = coupling_check(&g(&[&[1, 1], &[0, 1]]), &[1.0, phi], &[1.0 + phi, phi], phi * phi, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(coupling_check(&g(&[&[1]]), &[1.0, 2.0], &[1.0], 1.0, 1e-12).is_err());
    }

    #[test]
    fn coupling_on_half_line_interior() {
        let tr = LazyWeightedGraph::a_infinity(Scalar::int(4)).unwrap().truncate(20).unwrap();
        let d_m: Vec<f64> = (0..tr.graph.n_even()).map(|k| (2 * k + 1) as f64).collect();
        let d_n: Vec<f64> = (0..tr.graph.n_odd()).map(|k| (4 * k + 4) as f64).collect();
        let r = coupling_check_truncated(&tr, &d_m, &d_n, 4.0, 1e-12).unwrap();
        assert_eq!(r.residual_dn, 0.0);
        assert_eq!(r.residual_eigen, 0.0);
        assert!(!r.even_mask[20] && r.even_mask[19]);
    }

    #[test]
    fn markov_output_is_a_coupling() {
        let gr = g(&[&[1, 1, 0, 0], &[0, 1, 1, 1]]);
        let m = markov_weight(&gr, "j0").unwrap();
        let d_m: Vec<f64> = m.weights().iter().map(Scalar::to_f64).collect();
        let d_n = gr.apply(&d_m);
        let r = coupling_check(&gr, &d_m, &d_n, m.lambda_inv().to_f64(), 1e-8).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn standard_weight_examples() {
        let w = standard_weights(&g(&[&[1]]), "j0", 1e-10).unwrap();
        assert_eq!((w.v.clone(), w.u.clone()), (vec![1.0], vec![1.0]));
        let gamma = BipartiteGraph::new(vec!["l1".into()], vec!["*".into(), "k1".into()], vec![vec![1, 1]]).unwrap();
        let w = standard_weights(&gamma, "*", 1e-10).unwrap();
        assert_eq!(w.v, vec![1.0, 1.0]);
        assert_eq!(w.u, vec![2.0]);
        assert_eq!(w.lambda_inv, 2.0);
        let w = standard_weights(&g(&[&[1, 1], &[0, 1]]), "j0", 1e-10).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((w.v[1] - phi).abs() < 1e-8 && (w.lambda_inv - phi * phi).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_markov() {
        let r = MarkovWeightedGraph::new(g(&[&[1, 1]]), vec![Scalar::int(1), Scalar::int(2)], Scalar::int(2), "j0", MARKOV_TOL);
        assert!(matches!(r, Err(Error::NotMarkov { .. })));
    }
}
