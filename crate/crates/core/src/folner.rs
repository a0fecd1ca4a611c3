//! Folner sets for Markov weighted graphs.
//!
//! A finite set `F` of even vertices is an `ε`-Folner set when
//! `‖t|∂F‖₂ < ε ‖t|F‖₂`. Such sets exist for every `ε` exactly when
//! `‖Λ‖² = λ⁻¹`. Weights can be astronomically large on infinite graphs, so
//! all floating sums run in the log domain.

use std::collections::{BTreeSet, HashMap};

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::rational_from_f64;
use crate::graph::{boundary, BipartiteGraph, LazyWeightedGraph, VertexSet, WeightedEvenGraph};
use crate::io::{fingerprint_str, graph_to_json};
use crate::scalar::{ratio_ln, Scalar};
use crate::tower::MarkovWeightedGraph;

/// First truncation radius of the spectral cut search.
pub const START_RADIUS: usize = 16;

/// Markov tolerance on `F` for norm bounds.
pub const MARKOV_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerCertificate {
    #[serde(rename = "F")]
    pub f: VertexSet,
    pub boundary: VertexSet,
    pub epsilon: f64,
    /// `‖t|∂F‖₂`; infinite when it overflows a float, see the log fields.
    pub boundary_norm: f64,
    pub bulk_norm: f64,
    pub log_boundary_norm: f64,
    pub log_bulk_norm: f64,
    pub ratio: f64,
    /// The inequality was decided in exact rational arithmetic.
    pub exact: bool,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub pass: bool,
    pub certificate: FolnerCertificate,
}

impl CheckReport {
    pub fn into_certificate(self) -> Option<FolnerCertificate> {
        self.pass.then_some(self.certificate)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn exact_square_sum<G: WeightedEvenGraph + ?Sized>(g: &G, set: &VertexSet) -> Option<BigRational> {
    let mut acc = BigRational::zero();
    for v in set.iter() {
        let w = g.exact_weight(v)?;
        acc += &w * &w;
    }
    Some(acc)
}

fn log_square_sum<G: WeightedEvenGraph + ?Sized>(g: &G, set: &VertexSet) -> Result<f64> {
    let logs = set.iter().map(|v| g.log_weight(v).map(|l| 2.0 * l)).collect::<Result<Vec<_>>>()?;
    Ok(log_sum(logs))
}

/// Finite weighted graph whose weights need not be Markov everywhere, such
/// as an explicit piece of an infinite graph read from a file.
#[derive(Clone, Debug)]
pub struct WeightedFiniteGraph {
    graph: BipartiteGraph,
    weights: Vec<Scalar>,
    lambda_inv: Scalar,
}

impl WeightedFiniteGraph {
    pub fn new(graph: BipartiteGraph, weights: Vec<Scalar>, lambda_inv: Scalar) -> Result<Self> {
        if weights.len() != graph.n_even() {
            return Err(Error::DimensionMismatch { expected: graph.n_even(), found: weights.len() });
        }
        if let Some(j) = weights.iter().position(|w| !w.is_positive()) {
            return Err(Error::NonPositiveWeight(graph.even_labels()[j].clone()));
        }
        Ok(WeightedFiniteGraph { graph, weights, lambda_inv })
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }

    fn weight_of(&self, v: &str) -> Result<&Scalar> {
        self.graph.even_position(v).map(|j| &self.weights[j]).ok_or_else(|| Error::UnknownVertex(v.to_string()))
    }
}

impl WeightedEvenGraph for WeightedFiniteGraph {
    fn lambda_inv(&self) -> f64 {
        self.lambda_inv.to_f64()
    }

    fn basepoint(&self) -> String {
        self.graph.even_labels()[0].clone()
    }

    fn contains(&self, v: &str) -> bool {
        self.graph.even_position(v).is_some()
    }

    fn neighbors(&self, v: &str) -> Result<Vec<(String, u64)>> {
        WeightedEvenGraph::neighbors(&self.graph, v)
    }

    fn log_weight(&self, v: &str) -> Result<f64> {
        Ok(match self.weight_of(v)? {
            Scalar::Exact(r) => ratio_ln(r),
            Scalar::Float(x) => x.ln(),
        })
    }

    fn exact_weight(&self, v: &str) -> Option<BigRational> {
        self.weight_of(v).ok().and_then(Scalar::as_exact).cloned()
    }

    fn all_vertices(&self) -> Option<Vec<String>> {
        Some(self.graph.even_labels().to_vec())
    }

    fn fingerprint(&self) -> String {
        fingerprint_str(&graph_to_json(&self.graph, Some(&self.weights), Some(&self.lambda_inv)))
    }
}

/// Evaluates `‖t|∂F‖₂ < ε ‖t|F‖₂`, exactly when every weight involved is
/// rational.
pub fn certificate_check<G: WeightedEvenGraph + ?Sized>(g: &G, f: &VertexSet, epsilon: f64) -> Result<CheckReport> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let bd = boundary(g, f)?;
    let exact = match (exact_square_sum(g, f), exact_square_sum(g, &bd)) {
        (Some(bulk), Some(bdy)) => Some((bulk, bdy)),
        _ => None,
    };
    let (pass, log_bulk2, log_bdy2, is_exact) = match exact {
        Some((bulk, bdy)) => {
            let e = rational_from_f64(epsilon);
            let pass = bdy < &e * &e * &bulk;
            let lb = if bdy.is_zero() { f64::NEG_INFINITY } else { ratio_ln(&bdy) };
            (pass, ratio_ln(&bulk), lb, true)
        }
        None => {
            let lf = log_square_sum(g, f)?;
            let lb = log_square_sum(g, &bd)?;
            let pass = lb < lf + 2.0 * epsilon.ln();
            (pass, lf, lb, false)
        }
    };
    let log_bulk_norm = 0.5 * log_bulk2;
    let log_boundary_norm = 0.5 * log_bdy2;
    let certificate = FolnerCertificate {
        f: f.clone(),
        boundary: bd,
        epsilon,
        boundary_norm: log_boundary_norm.exp(),
        bulk_norm: log_bulk_norm.exp(),
        log_boundary_norm,
        log_bulk_norm,
        ratio: (log_boundary_norm - log_bulk_norm).exp(),
        exact: is_exact,
        fingerprint: g.fingerprint(),
    };
    Ok(CheckReport { pass, certificate })
}

/// Re-runs the check on a stored certificate and confirms the stored
/// boundary and fingerprint.
pub fn revalidate<G: WeightedEvenGraph + ?Sized>(g: &G, cert: &FolnerCertificate) -> Result<bool> {
    let r = certificate_check(g, &cert.f, cert.epsilon)?;
    Ok(r.pass && r.certificate.boundary == cert.boundary && r.certificate.fingerprint == cert.fingerprint)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag")]
pub enum SearchOutcome {
    Certificate(FolnerCertificate),
    Exhausted {
        /// Size of the largest region examined.
        frontier_size: usize,
        best_ratio: f64,
        best_size: usize,
    },
}

impl SearchOutcome {
    pub fn certificate(&self) -> Option<&FolnerCertificate> {
        match self {
            SearchOutcome::Certificate(c) => Some(c),
            SearchOutcome::Exhausted { .. } => None,
        }
    }
}

/// Balls of growing radius around the basepoint, up to `max_size` vertices.
///
/// The ball of radius `r` has the sphere of radius `r + 1` as its boundary,
/// so the scan walks breadth-first layers and keeps running log sums.
pub fn interval_search(g: &LazyWeightedGraph, epsilon: f64, max_size: usize) -> Result<SearchOutcome> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut seen: BTreeSet<String> = BTreeSet::from([g.basepoint()]);
    let mut layer = vec![g.basepoint()];
    let mut members: Vec<String> = Vec::new();
    let mut log_bulk = f64::NEG_INFINITY;
    let mut best = (f64::INFINITY, 0usize);
    while !layer.is_empty() && members.len() + layer.len() <= max_size {
        for v in &layer {
            log_bulk = log_add(log_bulk, 2.0 * g.log_weight(v)?);
        }
        members.extend(layer.iter().cloned());
        let mut next = Vec::new();
        for v in &layer {
            for (u, s) in g.neighbors(v)? {
                if s != 0 && seen.insert(u.clone()) {
                    next.push(u);
                }
            }
        }
        let log_bd = log_sum(next.iter().map(|u| g.log_weight(u).map(|x| 2.0 * x)).collect::<Result<Vec<_>>>()?);
        let log_ratio = 0.5 * (log_bd - log_bulk);
        if log_ratio < epsilon.ln() + 1e-9 {
            let f: VertexSet = members.iter().cloned().collect();
            let report = certificate_check(g, &f, epsilon)?;
            if report.pass {
                return Ok(SearchOutcome::Certificate(report.certificate));
            }
        }
        if log_ratio.exp() < best.0 {
            best = (log_ratio.exp(), members.len());
        }
        layer = next;
    }
    Ok(SearchOutcome::Exhausted { frontier_size: members.len(), best_ratio: best.0, best_size: best.1 })
}

/// Graphs the spectral cut search accepts.
#[derive(Clone, Copy, Debug)]
pub enum CutTarget<'a> {
    Finite(&'a MarkovWeightedGraph),
    Builtin(&'a LazyWeightedGraph),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutOptions {
    /// Largest truncation, in even vertices.
    pub max_size: usize,
    pub markov_tol: f64,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions { max_size: 10_000, markov_tol: 1e-8 }
    }
}

/// `δ = (λ⁴ ε²)⁴`, the proof's choice of precision for the truncation. The
/// search itself scans every level set instead of relying on it.
pub fn proof_delta(lambda: f64, epsilon: f64) -> f64 {
    (lambda.powi(4) * epsilon * epsilon).powi(4)
}

/// Symmetric banded matrix: `band[k][j]` is the entry `(j, j + k)`.
struct Banded {
    band: Vec<Vec<f64>>,
}

impl Banded {
    fn from_rows(rows: &[Vec<(usize, f64)>]) -> Self {
        let n = rows.len();
        let width = rows
            .iter()
            .enumerate()
            .flat_map(|(j, r)| r.iter().map(move |&(k, _)| k.abs_diff(j)))
            .max()
            .unwrap_or(0);
        let mut band = vec![vec![0.0; n]; width + 1];
        for (j, r) in rows.iter().enumerate() {
            for &(k, x) in r {
                if k >= j {
                    band[k - j][j] = x;
                }
            }
        }
        Banded { band }
    }

    fn n(&self) -> usize {
        self.band[0].len()
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = vec![0.0; n];
        for (k, diag) in self.band.iter().enumerate() {
            for j in 0..n.saturating_sub(k) {
                let a = diag[j];
                if a == 0.0 {
                    continue;
                }
                y[j] += a * x[j + k];
                if k > 0 {
                    y[j + k] += a * x[j];
                }
            }
        }
        y
    }

    /// Solves `(σ I − A) y = x` by banded Cholesky; `None` when the shifted
    /// matrix is not numerically positive definite.
    fn shifted_solve(&self, sigma: f64, x: &[f64]) -> Option<Vec<f64>> {
        let n = self.n();
        let w = self.band.len() - 1;
        // lower factor L stored by band: l[k][j] = L(j + k, j)
        let mut l = vec![vec![0.0; n]; w + 1];
        for j in 0..n {
            let mut d = sigma - self.band[0][j];
            for k in 1..=w.min(j) {
                d -= l[k][j - k] * l[k][j - k];
            }
            if !(d > 0.0) {
                return None;
            }
            let d = d.sqrt();
            l[0][j] = d;
            for k in 1..=w {
                if j + k >= n {
                    break;
                }
                let mut s = -self.band[k][j];
                for m in 1..=(w - k).min(j) {
                    s -= l[k + m][j - m] * l[m][j - m];
                }
                l[k][j] = s / d;
            }
        }
        let mut y = x.to_vec();
        for j in 0..n {
            for k in 1..=w.min(j) {
                y[j] -= l[k][j - k] * y[j - k];
            }
            y[j] /= l[0][j];
        }
        for j in (0..n).rev() {
            for k in 1..=w {
                if j + k < n {
                    y[j] -= l[k][j] * y[j + k];
                }
            }
            y[j] /= l[0][j];
        }
        Some(y)
    }
}

/// Perron vector of an irreducible symmetric nonnegative banded matrix by
/// Noda's shifted inverse iteration, with the Collatz-Wielandt bracket as
/// the stopping rule.
fn noda_perron(a: &Banded, tol: f64) -> Vec<f64> {
    let n = a.n();
    let mut x = vec![1.0; n];
    let bracket = |x: &[f64]| {
        let ax = a.mul(x);
        let ratios = ax.iter().zip(x).map(|(y, v)| y / v);
        ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    };
    let (mut lo, mut hi) = bracket(&x);
    for _ in 0..200 {
        if hi - lo <= tol * hi {
            break;
        }
        let Some(y) = a.shifted_solve(hi * (1.0 + 1e-15), &x) else { break };
        let m = y.iter().cloned().fold(0.0, f64::max);
        if !(m > 0.0) || y.iter().any(|v| !(*v > 0.0)) {
            break;
        }
        x = y.into_iter().map(|v| v / m).collect();
        (lo, hi) = bracket(&x);
    }
    x
}

struct LevelScan {
    best_ratio: f64,
    best_set: Option<VertexSet>,
}

/// Scans the level sets `{b > c}` of `log_b` (indexed like `labels`),
/// computing each boundary in the full graph.
fn scan_level_sets<G: WeightedEvenGraph + ?Sized>(g: &G, labels: &[String], log_b: &[f64]) -> Result<LevelScan> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&i, &j| log_b[j].partial_cmp(&log_b[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut log_w: HashMap<String, f64> = HashMap::new();
    let mut lw = |v: &str| -> Result<f64> {
        if let Some(&x) = log_w.get(v) {
            return Ok(x);
        }
        let x = g.log_weight(v)?;
        log_w.insert(v.to_string(), x);
        Ok(x)
    };
    let mut in_f: BTreeSet<String> = BTreeSet::new();
    let mut bd: BTreeSet<String> = BTreeSet::new();
    let mut log_bulk = f64::NEG_INFINITY;
    let mut best = LevelScan { best_ratio: f64::INFINITY, best_set: None };
    let mut members: Vec<String> = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let level = log_b[order[k]];
        // vertices with equal b enter together
        while k < order.len() && (log_b[order[k]] - level).abs() <= 1e-12 * level.abs().max(1.0) {
            let v = &labels[order[k]];
            in_f.insert(v.clone());
            bd.remove(v);
            members.push(v.clone());
            log_bulk = log_add(log_bulk, 2.0 * lw(v)?);
            for (u, s) in g.neighbors(v)? {
                if s != 0 && !in_f.contains(&u) {
                    bd.insert(u);
                }
            }
            k += 1;
        }
        let log_bd = log_sum(bd.iter().map(|u| lw(u).map(|x| 2.0 * x)).collect::<Result<Vec<_>>>()?);
        let ratio = (0.5 * (log_bd - log_bulk)).exp();
        if ratio < best.best_ratio {
            best.best_ratio = ratio;
            best.best_set = Some(members.iter().cloned().collect());
        }
    }
    Ok(best)
}

/// Even vertices in breadth-first order from the basepoint, which keeps the
/// Gram matrix of path-like graphs narrowly banded. Stops after `limit`.
fn bfs_order<G: WeightedEvenGraph + ?Sized>(g: &G, radius: usize, limit: usize) -> Result<Vec<String>> {
    let base = g.basepoint();
    let mut seen: HashMap<String, usize> = HashMap::from([(base.clone(), 0)]);
    let mut order = vec![base];
    let mut head = 0;
    while head < order.len() && order.len() <= limit {
        let v = order[head].clone();
        let depth = seen[&v];
        head += 1;
        if depth == radius {
            continue;
        }
        for (u, _) in g.neighbors(&v)? {
            if !seen.contains_key(&u) {
                seen.insert(u.clone(), depth + 1);
                order.push(u);
            }
        }
    }
    Ok(order)
}

/// `ΛᵗΛ` compressed to `labels`, as sparse rows.
fn compressed_gram<G: WeightedEvenGraph + ?Sized>(g: &G, labels: &[String]) -> Result<Vec<Vec<(usize, f64)>>> {
    let pos: HashMap<&str, usize> = labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    labels
        .iter()
        .map(|v| {
            Ok(g.neighbors(v)?
                .into_iter()
                .filter_map(|(u, s)| pos.get(u.as_str()).map(|&k| (k, s as f64)))
                .collect())
        })
        .collect()
}

fn level_search<G: WeightedEvenGraph + ?Sized>(g: &G, labels: &[String], epsilon: f64) -> Result<SearchOutcome> {
    let b0 = noda_perron(&Banded::from_rows(&compressed_gram(g, labels)?), 1e-13);
    let log_b: Vec<f64> = labels.iter().zip(&b0).map(|(l, x)| Ok(x.ln() - g.log_weight(l)?)).collect::<Result<_>>()?;
    let scan = scan_level_sets(g, labels, &log_b)?;
    finish(g, scan, epsilon, labels.len())
}

/// The constructive search from the amenability proof: Perron vector `b₀`
/// of `ΛᵗΛ` compressed to a finite piece, `b = T⁻¹ b₀`, and the best level
/// set of `b`. Infinite graphs are cut to balls of radius doubling from
/// [`START_RADIUS`], up to `max_size` even vertices.
pub fn spectral_cut_search(target: CutTarget<'_>, epsilon: f64, opts: &CutOptions) -> Result<SearchOutcome> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    match target {
        CutTarget::Finite(m) => {
            let report = crate::spectral::verify_markov(m.graph(), m.weights(), m.lambda_inv(), opts.markov_tol)?;
            if !report.pass {
                return Err(Error::NotMarkov { residual: report.residual });
            }
            let labels = bfs_order(m, usize::MAX, usize::MAX)?;
            level_search(m, &labels, epsilon)
        }
        CutTarget::Builtin(lazy) => {
            let mut best = (f64::INFINITY, 0usize);
            let mut frontier = 0;
            let mut radius = START_RADIUS;
            loop {
                let mut labels = bfs_order(lazy, radius, opts.max_size)?;
                if labels.len() > opts.max_size {
                    if frontier == opts.max_size {
                        break;
                    }
                    labels.truncate(opts.max_size);
                }
                if labels.len() <= frontier {
                    break;
                }
                for v in &labels {
                    let residual = lazy.markov_residual_at(v)?;
                    if residual > opts.markov_tol {
                        return Err(Error::NotMarkov { residual });
                    }
                }
                frontier = labels.len();
                match level_search(lazy, &labels, epsilon)? {
                    SearchOutcome::Certificate(c) => return Ok(SearchOutcome::Certificate(c)),
                    SearchOutcome::Exhausted { best_ratio, best_size, .. } => {
                        if best_ratio < best.0 {
                            best = (best_ratio, best_size);
                        }
                    }
                }
                radius *= 2;
            }
            Ok(SearchOutcome::Exhausted { frontier_size: frontier, best_ratio: best.0, best_size: best.1 })
        }
    }
}

fn finish<G: WeightedEvenGraph + ?Sized>(g: &G, scan: LevelScan, epsilon: f64, frontier: usize) -> Result<SearchOutcome> {
    let best_size = scan.best_set.as_ref().map_or(0, VertexSet::len);
    if let Some(f) = scan.best_set {
        if scan.best_ratio < epsilon * (1.0 + 1e-9) {
            if let Some(cert) = certificate_check(g, &f, epsilon)?.into_certificate() {
                return Ok(SearchOutcome::Certificate(cert));
            }
        }
    }
    Ok(SearchOutcome::Exhausted { frontier_size: frontier, best_ratio: scan.best_ratio, best_size })
}

/// `λ⁻¹ ‖t|F‖₂ / ‖t|F'‖₂` with `F' = F ∪ ∂F`, a lower bound for `‖Λ‖²`.
/// The weights must be Markov on `F`.
pub fn norm_bound_from_certificate<G: WeightedEvenGraph + ?Sized>(g: &G, cert: &FolnerCertificate) -> Result<f64> {
    if !revalidate(g, cert)? {
        return Err(Error::InvalidParameter("certificate does not validate on this graph".into()));
    }
    for v in cert.f.iter() {
        let residual = g.markov_residual_at(v)?;
        if residual > MARKOV_TOL {
            return Err(Error::NotMarkov { residual });
        }
    }
    Ok(g.lambda_inv() / (1.0 + cert.ratio * cert.ratio).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interval(a: i64, b: i64) -> VertexSet {
        (a..=b).map(|k| k.to_string()).collect()
    }

    #[test]
    fn a_inf_at_four() {
        let g = LazyWeightedGraph::a_infinity(4).unwrap();
        let r = certificate_check(&g, &interval(0, 12), 0.5).unwrap();
        assert!(r.pass && r.certificate.exact);
        assert!((r.certificate.boundary_norm - 27.0).abs() < 1e-9);
        assert!((r.certificate.bulk_norm - 2925f64.sqrt()).abs() < 1e-9);
        let r = certificate_check(&g, &interval(0, 11), 0.5).unwrap();
        assert!(!r.pass);
        assert!((r.certificate.ratio - 25.0 / 2300f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn whole_finite_graph_is_folner() {
        let g = BipartiteGraph::from_rows(&[[1u64, 1], [0, 1]]).unwrap();
        let m = crate::spectral::markov_weight(&g, "j0").unwrap();
        let all: VertexSet = g.even_labels().iter().cloned().collect();
        let r = certificate_check(&m, &all, 1e-6).unwrap();
        assert!(r.pass);
        assert_eq!(r.certificate.ratio, 0.0);
        let out = spectral_cut_search(CutTarget::Finite(&m), 1e-3, &CutOptions::default()).unwrap();
        let c = out.certificate().unwrap();
        assert_eq!(c.f.len(), 2);
        let bound = norm_bound_from_certificate(&m, c).unwrap();
        assert_eq!(bound, m.lambda_inv().to_f64());
    }

    #[test]
    fn interval_searches() {
        let g = LazyWeightedGraph::a_infinity(4).unwrap();
        let c = interval_search(&g, 0.5, 1000).unwrap();
        assert_eq!(c.certificate().unwrap().f.len(), 13);
        let bound = norm_bound_from_certificate(&g, c.certificate().unwrap()).unwrap();
        assert!((bound - 4.0 * 2925f64.sqrt() / (2925.0f64 + 729.0).sqrt()).abs() < 1e-9);

        let g = LazyWeightedGraph::a_infinity(5).unwrap();
        match interval_search(&g, 1.0, 1000).unwrap() {
            SearchOutcome::Exhausted { best_ratio, frontier_size, .. } => {
                assert!(best_ratio > 1.0);
                assert_eq!(frontier_size, 1000);
            }
            other => panic!("unexpected {other:?}"),
        }

        let g = LazyWeightedGraph::a_two_sided(4).unwrap();
        let c = interval_search(&g, 0.7, 100).unwrap();
        let c = c.certificate().unwrap();
        assert_eq!(c.f.len(), 5);
        assert!((c.ratio - 2f64.sqrt() / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spectral_cut_on_builtins() {
        let g = LazyWeightedGraph::a_infinity(4).unwrap();
        let out = spectral_cut_search(CutTarget::Builtin(&g), 0.1, &CutOptions { max_size: 2000, ..Default::default() }).unwrap();
        let c = out.certificate().expect("certificate");
        assert!(c.ratio < 0.1 && c.f.len() <= 2000);
        assert!(revalidate(&g, c).unwrap());
        assert!(norm_bound_from_certificate(&g, c).unwrap() >= 4.0 / 1.01f64.sqrt());

        let g = LazyWeightedGraph::a_infinity(Scalar::ratio(9, 2)).unwrap();
        let out = spectral_cut_search(CutTarget::Builtin(&g), 0.1, &CutOptions::default()).unwrap();
        assert!(matches!(out, SearchOutcome::Exhausted { .. }), "{out:?}");
    }

    #[test]
    fn noda_matches_power_iteration() {
        let rows = vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 2.0), (2, 1.0)], vec![(1, 1.0), (2, 2.0)]];
        let x = noda_perron(&Banded::from_rows(&rows), 1e-14);
        let dense = vec![vec![1.0, 1.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 1.0, 2.0]];
        let p = crate::spectral::perron(&dense, 1e-13).unwrap();
        for (a, b) in x.iter().zip(&p.vector) {
            assert!((a / x[0] - b).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn finite_certificates_are_sound(rows in proptest::collection::vec(proptest::collection::vec(0u64..3, 1..5), 1..5), eps in 0.05f64..1.0) {
            let width = rows[0].len();
            let rows: Vec<Vec<u64>> = rows.into_iter().map(|mut r| { r.resize(width, 1); r }).collect();
            let Ok(g) = BipartiteGraph::from_rows(&rows) else { return Ok(()) };
            prop_assume!(g.is_connected());
            let m = crate::spectral::markov_weight(&g, "j0").unwrap();
            let out = spectral_cut_search(CutTarget::Finite(&m), eps, &CutOptions::default()).unwrap();
            let c = out.certificate().expect("finite graphs always admit F = J");
            prop_assert!(revalidate(&m, c).unwrap());
            let bound = norm_bound_from_certificate(&m, c).unwrap();
            prop_assert!(bound <= crate::spectral::norm_squared(&g, 1e-12).unwrap() + 1e-9);
        }

        #[test]
        fn bounds_never_exceed_the_norm(li in 4.0f64..4.3, eps in 0.3f64..1.0) {
            // ‖Λ‖² = 4 on A_∞ whatever the weights
            let g = LazyWeightedGraph::a_infinity(li).unwrap();
            if let Some(c) = interval_search(&g, eps, 300).unwrap().certificate() {
                prop_assert!(norm_bound_from_certificate(&g, c).unwrap() <= 4.0 + 1e-12);
            }
        }

        #[test]
        fn best_interval_ratio_is_monotone(li in 4.0f64..6.0) {
            let g = LazyWeightedGraph::a_infinity(li).unwrap();
            let mut best = f64::INFINITY;
            let mut prev = f64::INFINITY;
            for n in 0..60 {
                let r = certificate_check(&g, &interval(0, n), 1.0).unwrap().certificate.ratio;
                best = best.min(r);
                prop_assert!(best <= prev);
                prev = best;
                prop_assert!(r <= best * (1.0 + 1e-9) || li > 4.0);
            }
        }
    }
}
