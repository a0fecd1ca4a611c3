//! Bipartite inclusion graphs and lazily generated infinite weighted graphs.
//!
//! A [`BipartiteGraph`] stores the multiplicity matrix `b_ij` with rows
//! indexed by the odd vertices `I` and columns by the even vertices `J`.
//! Weight vectors always live on the even side. Everything that only needs
//! the even-vertex "connection strength" `sum_i b_ij b_ij'` goes through
//! [`WeightedEvenGraph`], which both finite Markov graphs and the built-in
//! infinite graphs implement.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest accepted edge multiplicity.
pub const MAX_MULTIPLICITY: u64 = (1u64 << 31) - 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BipartiteGraph {
    odd: Vec<String>,
    even: Vec<String>,
    mult: Vec<Vec<u32>>,
    odd_index: HashMap<String, usize>,
    even_index: HashMap<String, usize>,
}

impl Serialize for BipartiteGraph {
    /// Labels and the multiplicity matrix, rows indexed by odd vertices.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("BipartiteGraph", 3)?;
        st.serialize_field("odd", &self.odd)?;
        st.serialize_field("even", &self.even)?;
        st.serialize_field("matrix", &self.mult)?;
        st.end()
    }
}

/// Vertex indices of one connected component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub odd: Vec<usize>,
    pub even: Vec<usize>,
}

fn index_labels(labels: &[String], side: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(labels.len());
    for (k, l) in labels.iter().enumerate() {
        if map.insert(l.clone(), k).is_some() {
            return Err(Error::InvalidGraph(format!("duplicate {side} label `{l}`")));
        }
    }
    Ok(map)
}

impl BipartiteGraph {
    pub fn new(odd: Vec<String>, even: Vec<String>, mult: Vec<Vec<u64>>) -> Result<Self> {
        if odd.is_empty() || even.is_empty() {
            return Err(Error::InvalidGraph("both vertex sets must be nonempty".into()));
        }
        if mult.len() != odd.len() {
            return Err(Error::DimensionMismatch { expected: odd.len(), found: mult.len() });
        }
        let odd_index = index_labels(&odd, "odd")?;
        let even_index = index_labels(&even, "even")?;
        for l in odd.iter() {
            if even_index.contains_key(l) {
                return Err(Error::InvalidGraph(format!("label `{l}` used on both sides")));
            }
        }
        let mut rows = Vec::with_capacity(mult.len());
        for row in mult {
            if row.len() != even.len() {
                return Err(Error::DimensionMismatch { expected: even.len(), found: row.len() });
            }
            let mut r = Vec::with_capacity(row.len());
            for b in row {
                if b > MAX_MULTIPLICITY {
                    return Err(Error::MultiplicityOverflow(b));
                }
                r.push(b as u32);
            }
            rows.push(r);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.iter().all(|&b| b == 0) {
                return Err(Error::InvalidGraph(format!("odd vertex `{}` is isolated", odd[i])));
            }
        }
        for j in 0..even.len() {
            if rows.iter().all(|row| row[j] == 0) {
                return Err(Error::InvalidGraph(format!("even vertex `{}` is isolated", even[j])));
            }
        }
        Ok(BipartiteGraph { odd, even, mult: rows, odd_index, even_index })
    }

    /// Builds a graph from a multiplicity matrix, labelling odd vertices
    /// `i0, i1, ...` and even vertices `j0, j1, ...`.
    pub fn from_rows<R: AsRef<[u64]>>(rows: &[R]) -> Result<Self> {
        let n_even = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let odd = (0..rows.len()).map(|i| format!("i{i}")).collect();
        let even = (0..n_even).map(|j| format!("j{j}")).collect();
        Self::new(odd, even, rows.iter().map(|r| r.as_ref().to_vec()).collect())
    }

    pub fn odd_labels(&self) -> &[String] {
        &self.odd
    }

    pub fn even_labels(&self) -> &[String] {
        &self.even
    }

    pub fn n_odd(&self) -> usize {
        self.odd.len()
    }

    pub fn n_even(&self) -> usize {
        self.even.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> u32 {
        self.mult[i][j]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.mult
    }

    pub fn matrix_u64(&self) -> Vec<Vec<u64>> {
        self.mult.iter().map(|r| r.iter().map(|&b| b as u64).collect()).collect()
    }

    pub fn odd_position(&self, label: &str) -> Option<usize> {
        self.odd_index.get(label).copied()
    }

    pub fn even_position(&self, label: &str) -> Option<usize> {
        self.even_index.get(label).copied()
    }

    pub fn edge_count(&self) -> u64 {
        self.mult.iter().flatten().map(|&b| b as u64).sum()
    }

    pub fn max_entry(&self) -> u32 {
        self.mult.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn transpose(&self) -> BipartiteGraph {
        let mult = (0..self.n_even())
            .map(|j| (0..self.n_odd()).map(|i| self.mult[i][j]).collect())
            .collect();
        BipartiteGraph {
            odd: self.even.clone(),
            even: self.odd.clone(),
            mult,
            odd_index: self.even_index.clone(),
            even_index: self.odd_index.clone(),
        }
    }

    pub fn components(&self) -> Vec<Component> {
        let (ni, nj) = (self.n_odd(), self.n_even());
        let mut seen_odd = vec![false; ni];
        let mut seen_even = vec![false; nj];
        let mut out = Vec::new();
        for start in 0..nj {
            if seen_even[start] {
                continue;
            }
            let mut comp = Component { odd: Vec::new(), even: Vec::new() };
            let mut queue = VecDeque::new();
            seen_even[start] = true;
            queue.push_back((false, start));
            while let Some((is_odd, v)) = queue.pop_front() {
                if is_odd {
                    comp.odd.push(v);
                    for j in 0..nj {
                        if self.mult[v][j] != 0 && !seen_even[j] {
                            seen_even[j] = true;
                            queue.push_back((false, j));
                        }
                    }
                } else {
                    comp.even.push(v);
                    for i in 0..ni {
                        if self.mult[i][v] != 0 && !seen_odd[i] {
                            seen_odd[i] = true;
                            queue.push_back((true, i));
                        }
                    }
                }
            }
            comp.odd.sort_unstable();
            comp.even.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    pub fn component_labels(&self) -> Vec<Vec<String>> {
        self.components()
            .into_iter()
            .map(|c| {
                c.odd
                    .iter()
                    .map(|&i| self.odd[i].clone())
                    .chain(c.even.iter().map(|&j| self.even[j].clone()))
                    .collect()
            })
            .collect()
    }

    pub fn subgraph(&self, comp: &Component) -> BipartiteGraph {
        let odd = comp.odd.iter().map(|&i| self.odd[i].clone()).collect();
        let even = comp.even.iter().map(|&j| self.even[j].clone()).collect();
        let mult = comp
            .odd
            .iter()
            .map(|&i| comp.even.iter().map(|&j| self.mult[i][j] as u64).collect())
            .collect();
        BipartiteGraph::new(odd, even, mult).expect("component of a valid graph is valid")
    }

    /// `Λᵗ Λ`, indexed by even vertices.
    pub fn even_gram(&self) -> Vec<Vec<u128>> {
        let nj = self.n_even();
        let mut g = vec![vec![0u128; nj]; nj];
        for row in &self.mult {
            for a in 0..nj {
                if row[a] == 0 {
                    continue;
                }
                for b in 0..nj {
                    g[a][b] += row[a] as u128 * row[b] as u128;
                }
            }
        }
        g
    }

    /// `Λ Λᵗ`, indexed by odd vertices.
    pub fn odd_gram(&self) -> Vec<Vec<u128>> {
        self.transpose().even_gram()
    }

    /// `Λ x` for `x` on even vertices; the result lives on odd vertices.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mult
            .iter()
            .map(|row| row.iter().zip(x).map(|(&b, &v)| b as f64 * v).sum())
            .collect()
    }

    /// `Λᵗ y` for `y` on odd vertices.
    pub fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n_even())
            .map(|j| (0..self.n_odd()).map(|i| self.mult[i][j] as f64 * y[i]).sum())
            .collect()
    }

    pub fn apply_scalar(&self, x: &[Scalar]) -> Vec<Scalar> {
        self.mult
            .iter()
            .map(|row| {
                row.iter().zip(x).fold(Scalar::zero(), |acc, (&b, v)| {
                    acc.add(&v.mul_int(&BigInt::from(b)))
                })
            })
            .collect()
    }

    pub fn strength(&self, j: usize, k: usize) -> u64 {
        let s: u128 = self.mult.iter().map(|row| row[j] as u128 * row[k] as u128).sum();
        s.min(u64::MAX as u128) as u64
    }

    /// Even vertices at nonzero strength from `j`, including `j` itself.
    pub fn even_neighbors(&self, j: usize) -> Vec<(usize, u64)> {
        (0..self.n_even())
            .filter_map(|k| {
                let s = self.strength(j, k);
                (s != 0).then_some((k, s))
            })
            .collect()
    }

    /// Removes one unit of multiplicity from edge `(i, j)` and drops any
    /// vertex left isolated. `None` when no edge remains.
    pub fn decrement_edge(&self, i: usize, j: usize) -> Option<BipartiteGraph> {
        if self.mult[i][j] == 0 {
            return Some(self.clone());
        }
        let mut mult = self.matrix_u64();
        mult[i][j] -= 1;
        let keep_odd: Vec<usize> = (0..self.n_odd()).filter(|&a| mult[a].iter().any(|&b| b > 0)).collect();
        let keep_even: Vec<usize> = (0..self.n_even()).filter(|&b| mult.iter().any(|r| r[b] > 0)).collect();
        if keep_odd.is_empty() || keep_even.is_empty() {
            return None;
        }
        let odd = keep_odd.iter().map(|&a| self.odd[a].clone()).collect();
        let even = keep_even.iter().map(|&b| self.even[b].clone()).collect();
        let rows = keep_odd.iter().map(|&a| keep_even.iter().map(|&b| mult[a][b]).collect()).collect();
        BipartiteGraph::new(odd, even, rows).ok()
    }

    /// Matrix product `self · next`: paths through a composed pair of
    /// inclusions. Requires `self.n_even() == next.n_odd()`.
    pub fn compose(&self, next: &BipartiteGraph) -> Result<Vec<Vec<u64>>> {
        if self.n_even() != next.n_odd() {
            return Err(Error::DimensionMismatch { expected: self.n_even(), found: next.n_odd() });
        }
        Ok((0..self.n_odd())
            .map(|i| {
                (0..next.n_even())
                    .map(|k| (0..self.n_even()).map(|j| self.mult[i][j] as u64 * next.mult[j][k] as u64).sum())
                    .collect()
            })
            .collect())
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("graph \"{}\" {{\n", name.replace('"', "'"));
        for l in &self.odd {
            s.push_str(&format!("  \"{l}\" [shape=box];\n"));
        }
        for l in &self.even {
            s.push_str(&format!("  \"{l}\" [shape=circle];\n"));
        }
        for (i, row) in self.mult.iter().enumerate() {
            for (j, &b) in row.iter().enumerate() {
                for _ in 0..b.min(8) {
                    s.push_str(&format!("  \"{}\" -- \"{}\";\n", self.odd[i], self.even[j]));
                }
                if b > 8 {
                    s.push_str(&format!("  \"{}\" -- \"{}\" [label=\"x{}\"];\n", self.odd[i], self.even[j], b));
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

impl fmt::Display for BipartiteGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .mult
            .iter()
            .map(|r| r.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" "))
            .collect();
        write!(f, "[{}]", rows.join("; "))
    }
}

/// Finite set of even-vertex identifiers. Iteration order is insertion
/// order; equality is set equality.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexSet {
    members: Vec<String>,
    #[serde(skip)]
    lookup: HashSet<String>,
}

impl VertexSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: impl Into<String>) -> bool {
        let v = v.into();
        if self.lookup.insert(v.clone()) {
            self.members.push(v);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, v: &str) -> bool {
        if self.lookup.len() != self.members.len() {
            return self.members.iter().any(|m| m == v);
        }
        self.lookup.contains(v)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.members.iter()
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(mut self) -> Self {
        let members = std::mem::take(&mut self.members);
        VertexSet::from_iter(members)
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.iter().all(|v| !other.contains(v))
    }
}

impl PartialEq for VertexSet {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().all(|v| other.contains(v))
    }
}

impl<S: Into<String>> FromIterator<S> for VertexSet {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        let mut set = VertexSet::new();
        for v in iter {
            set.insert(v);
        }
        set
    }
}

/// Even-vertex view of a weighted bipartite graph, finite or infinite.
pub trait WeightedEvenGraph {
    fn lambda_inv(&self) -> f64;

    fn basepoint(&self) -> String;

    fn contains(&self, v: &str) -> bool;

    /// Even vertices at nonzero strength from `v` (including `v` itself when
    /// its self-strength is nonzero), with the strength.
    fn neighbors(&self, v: &str) -> Result<Vec<(String, u64)>>;

    /// Natural logarithm of the weight `t_v`.
    fn log_weight(&self, v: &str) -> Result<f64>;

    /// Exact weight when the weights are rational.
    fn exact_weight(&self, _v: &str) -> Option<BigRational> {
        None
    }

    /// All even vertices, when the graph is finite.
    fn all_vertices(&self) -> Option<Vec<String>>;

    /// Stable identifier of the graph used in certificates.
    fn fingerprint(&self) -> String;

    fn weight(&self, v: &str) -> Result<f64> {
        Ok(self.log_weight(v)?.exp())
    }

    /// Relative residual of the Markov relation at `v`.
    fn markov_residual_at(&self, v: &str) -> Result<f64> {
        let own = self.log_weight(v)?;
        let mut acc = 0.0;
        for (u, s) in self.neighbors(v)? {
            acc += s as f64 * (self.log_weight(&u)? - own).exp();
        }
        Ok((acc - self.lambda_inv()).abs() / self.lambda_inv())
    }

    /// Breadth-first ball around `center` in the even-vertex strength graph,
    /// truncated at `max_size` members.
    fn ball(&self, center: &str, radius: usize, max_size: usize) -> Result<VertexSet> {
        if !self.contains(center) {
            return Err(Error::UnknownVertex(center.to_string()));
        }
        let mut set = VertexSet::new();
        set.insert(center);
        let mut frontier = vec![center.to_string()];
        for _ in 0..radius {
            let mut next = Vec::new();
            for v in &frontier {
                for (u, _) in self.neighbors(v)? {
                    if set.len() >= max_size {
                        return Ok(set);
                    }
                    if set.insert(u.clone()) {
                        next.push(u);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(set)
    }
}

/// `∂F = ΛᵗΛ(F) ∖ F` on any even-vertex graph.
pub fn boundary<G: WeightedEvenGraph + ?Sized>(g: &G, f: &VertexSet) -> Result<VertexSet> {
    if f.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let mut out = VertexSet::new();
    for v in f.iter() {
        if !g.contains(v) {
            return Err(Error::UnknownVertex(v.clone()));
        }
        for (u, s) in g.neighbors(v)? {
            if s != 0 && !f.contains(&u) {
                out.insert(u);
            }
        }
    }
    Ok(out)
}

/// Boundary on a plain bipartite graph, with `F` given by even labels.
pub fn graph_boundary(g: &BipartiteGraph, f: &VertexSet) -> Result<VertexSet> {
    if f.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let mut out = VertexSet::new();
    for v in f.iter() {
        let j = g.even_position(v).ok_or_else(|| Error::UnknownVertex(v.clone()))?;
        for (k, _) in g.even_neighbors(j) {
            let label = &g.even_labels()[k];
            if !f.contains(label) {
                out.insert(label.clone());
            }
        }
    }
    Ok(out)
}

/// The built-in infinite bipartite graphs of square norm 4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// Half line; even vertices `0, 1, 2, ...`, basepoint `0` at the end.
    AInfinity,
    /// Two-sided line; even vertices are all integers, basepoint `0`.
    AInfinityTwoSided,
    /// Fork `a, b` joined through one odd vertex to a half line `1, 2, ...`.
    DInfinity,
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::AInfinity => "a_inf",
            Builtin::AInfinityTwoSided => "a_inf_inf",
            Builtin::DInfinity => "d_inf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a_inf" | "A_inf" | "a-inf" => Ok(Builtin::AInfinity),
            "a_inf_inf" | "A_-inf_inf" | "a-inf-inf" => Ok(Builtin::AInfinityTwoSided),
            "d_inf" | "D_inf" | "d-inf" => Ok(Builtin::DInfinity),
            other => Err(Error::InvalidParameter(format!("unknown built-in graph `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Site {
    Line(i64),
    Fork(u8),
}

/// Lazily generated infinite Markov weighted graph.
///
/// Weights solve the even-vertex three-term recurrence with the basepoint
/// weight equal to 1. They are positive exactly when `lambda_inv >= 4`.
pub struct LazyWeightedGraph {
    builtin: Builtin,
    lambda_inv: Scalar,
    tolerance: f64,
    log_cache: Mutex<Vec<f64>>,
    exact_cache: Mutex<Vec<BigRational>>,
    two_sided_ratio: f64,
    two_sided_exact: Option<BigRational>,
}

impl Clone for LazyWeightedGraph {
    fn clone(&self) -> Self {
        LazyWeightedGraph::new(self.builtin, self.lambda_inv.clone()).expect("already validated")
    }
}

impl fmt::Debug for LazyWeightedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LazyWeightedGraph")
            .field("builtin", &self.builtin)
            .field("lambda_inv", &self.lambda_inv)
            .finish()
    }
}

fn exact_sqrt(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    (&n * &n == *r.numer() && &d * &d == *r.denom()).then(|| BigRational::new(n, d))
}

impl LazyWeightedGraph {
    pub fn new(builtin: Builtin, lambda_inv: Scalar) -> Result<Self> {
        let li = lambda_inv.to_f64();
        if !(li >= 4.0) || !li.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{} carries positive Markov weights only for lambda_inv >= 4, got {li}",
                builtin.name()
            )));
        }
        let a = li - 2.0;
        let ratio = (a + (a * a - 4.0).max(0.0).sqrt()) / 2.0;
        let two_sided_exact = lambda_inv.as_exact().and_then(|l| {
            let a = l - BigRational::from_integer(2.into());
            let disc = &a * &a - BigRational::from_integer(4.into());
            exact_sqrt(&disc).map(|s| (a + s) / BigRational::from_integer(2.into()))
        });
        Ok(LazyWeightedGraph {
            builtin,
            lambda_inv,
            tolerance: 1e-9,
            log_cache: Mutex::new(Vec::new()),
            exact_cache: Mutex::new(Vec::new()),
            two_sided_ratio: ratio,
            two_sided_exact,
        })
    }

    pub fn a_infinity(lambda_inv: impl Into<Scalar>) -> Result<Self> {
        Self::new(Builtin::AInfinity, lambda_inv.into())
    }

    pub fn a_two_sided(lambda_inv: impl Into<Scalar>) -> Result<Self> {
        Self::new(Builtin::AInfinityTwoSided, lambda_inv.into())
    }

    pub fn d_infinity(lambda_inv: impl Into<Scalar>) -> Result<Self> {
        Self::new(Builtin::DInfinity, lambda_inv.into())
    }

    pub fn builtin(&self) -> Builtin {
        self.builtin
    }

    pub fn lambda_inv_scalar(&self) -> &Scalar {
        &self.lambda_inv
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    fn site(&self, v: &str) -> Option<Site> {
        match self.builtin {
            Builtin::AInfinity => v.parse::<i64>().ok().filter(|&k| k >= 0 && !v.starts_with('+')).map(Site::Line),
            Builtin::AInfinityTwoSided => v.parse::<i64>().ok().filter(|_| !v.starts_with('+')).map(Site::Line),
            Builtin::DInfinity => match v {
                "a" => Some(Site::Fork(0)),
                "b" => Some(Site::Fork(1)),
                _ => v.parse::<i64>().ok().filter(|&k| k >= 1 && !v.starts_with('+')).map(Site::Line),
            },
        }
    }

    fn label(site: Site) -> String {
        match site {
            Site::Line(k) => k.to_string(),
            Site::Fork(0) => "a".to_string(),
            Site::Fork(_) => "b".to_string(),
        }
    }

    fn site_neighbors(&self, site: Site) -> Vec<(Site, u64)> {
        use Site::*;
        match (self.builtin, site) {
            (Builtin::AInfinity, Line(0)) => vec![(Line(0), 1), (Line(1), 1)],
            (Builtin::AInfinity, Line(k)) | (Builtin::AInfinityTwoSided, Line(k)) => {
                vec![(Line(k - 1), 1), (Line(k), 2), (Line(k + 1), 1)]
            }
            (Builtin::DInfinity, Fork(x)) => vec![(Fork(x), 1), (Fork(1 - x), 1), (Line(1), 1)],
            (Builtin::DInfinity, Line(1)) => vec![(Fork(0), 1), (Fork(1), 1), (Line(1), 2), (Line(2), 1)],
            (Builtin::DInfinity, Line(k)) => vec![(Line(k - 1), 1), (Line(k), 2), (Line(k + 1), 1)],
            (_, Fork(_)) => unreachable!("fork sites only exist on D_inf"),
        }
    }

    /// `ln t_k` along the half line (A_inf) or tail (D_inf), memoized.
    fn tail_log_weight(&self, k: usize) -> f64 {
        let li = self.lambda_inv.to_f64();
        let mut cache = self.log_cache.lock().expect("weight cache poisoned");
        if cache.is_empty() {
            match self.builtin {
                // t_0 = 1, t_1 = λ⁻¹ - 1
                Builtin::AInfinity => {
                    cache.push(0.0);
                    cache.push((li - 1.0).ln());
                }
                // index 0 stands for t_a + t_b = 2; t_1 = λ⁻¹ - 2
                Builtin::DInfinity => {
                    cache.push(2f64.ln());
                    cache.push((li - 2.0).ln());
                }
                Builtin::AInfinityTwoSided => unreachable!(),
            }
        }
        while cache.len() <= k {
            let n = cache.len();
            // q_n = t_n / t_{n-1} = (λ⁻¹ - 2) - t_{n-2} / t_{n-1}
            let prev_ratio = (cache[n - 2] - cache[n - 1]).exp();
            let q = (li - 2.0) - prev_ratio;
            let last = cache[n - 1];
            cache.push(last + q.ln());
        }
        cache[k]
    }

    fn tail_exact_weight(&self, k: usize) -> Option<BigRational> {
        let li = self.lambda_inv.as_exact()?.clone();
        let mut cache = self.exact_cache.lock().expect("weight cache poisoned");
        let two = BigRational::from_integer(2.into());
        if cache.is_empty() {
            match self.builtin {
                Builtin::AInfinity => {
                    cache.push(BigRational::one());
                    cache.push(&li - BigRational::one());
                }
                Builtin::DInfinity => {
                    cache.push(two.clone());
                    cache.push(&li - &two);
                }
                Builtin::AInfinityTwoSided => unreachable!(),
            }
        }
        while cache.len() <= k {
            let n = cache.len();
            let next = (&li - &two) * &cache[n - 1] - &cache[n - 2];
            cache.push(next);
        }
        Some(cache[k].clone())
    }

    /// Explicit finite piece of the graph: the even ball of radius `radius`
    /// around the basepoint together with every odd vertex touching it.
    pub fn truncate(&self, radius: usize) -> Result<Truncation> {
        let r = radius as i64;
        // (odd label, even sites it joins, full even degree)
        let mut odds: Vec<(String, Vec<Site>, usize)> = Vec::new();
        let evens: Vec<Site> = match self.builtin {
            Builtin::AInfinity => {
                for k in 0..=r {
                    odds.push((format!("o{k}"), vec![Site::Line(k), Site::Line(k + 1)], 2));
                }
                (0..=r).map(Site::Line).collect()
            }
            Builtin::AInfinityTwoSided => {
                for k in (-r - 1)..=r {
                    odds.push((format!("o{k}"), vec![Site::Line(k), Site::Line(k + 1)], 2));
                }
                (-r..=r).map(Site::Line).collect()
            }
            Builtin::DInfinity => {
                odds.push(("c0".to_string(), vec![Site::Fork(0), Site::Fork(1), Site::Line(1)], 3));
                for k in 1..=r.max(1) {
                    odds.push((format!("c{}", 2 * k), vec![Site::Line(k), Site::Line(k + 1)], 2));
                }
                let mut e = vec![Site::Fork(0), Site::Fork(1)];
                e.extend((1..=r.max(1)).map(Site::Line));
                e
            }
        };
        let even_pos: HashMap<Site, usize> = evens.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let mut mult = Vec::new();
        let mut odd_labels = Vec::new();
        let mut odd_interior = Vec::new();
        for (label, sites, degree) in odds {
            let mut row = vec![0u64; evens.len()];
            let mut present = 0;
            for s in &sites {
                if let Some(&p) = even_pos.get(s) {
                    row[p] += 1;
                    present += 1;
                }
            }
            if present == 0 {
                continue;
            }
            odd_labels.push(label);
            odd_interior.push(present == degree);
            mult.push(row);
        }
        let even_labels: Vec<String> = evens.iter().map(|&s| Self::label(s)).collect();
        let graph = BipartiteGraph::new(odd_labels, even_labels.clone(), mult)?;
        let even_interior = (0..graph.n_even())
            .map(|j| (0..graph.n_odd()).all(|i| graph.entry(i, j) == 0 || odd_interior[i]))
            .collect();
        let weights = even_labels
            .iter()
            .map(|l| match self.exact_weight(l) {
                Some(r) => Ok(Scalar::Exact(r)),
                None => self.weight(l).map(Scalar::Float),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Truncation { graph, even_interior, odd_interior, weights, lambda_inv: self.lambda_inv.clone() })
    }
}

impl std::hash::Hash for Site {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Site::Line(k) => (0u8, *k).hash(state),
            Site::Fork(x) => (1u8, *x as i64).hash(state),
        }
    }
}

impl WeightedEvenGraph for LazyWeightedGraph {
    fn lambda_inv(&self) -> f64 {
        self.lambda_inv.to_f64()
    }

    fn basepoint(&self) -> String {
        match self.builtin {
            Builtin::DInfinity => "a".to_string(),
            _ => "0".to_string(),
        }
    }

    fn contains(&self, v: &str) -> bool {
        self.site(v).is_some()
    }

    fn neighbors(&self, v: &str) -> Result<Vec<(String, u64)>> {
        let site = self.site(v).ok_or_else(|| Error::UnknownVertex(v.to_string()))?;
        Ok(self.site_neighbors(site).into_iter().map(|(s, w)| (Self::label(s), w)).collect())
    }

    fn log_weight(&self, v: &str) -> Result<f64> {
        let site = self.site(v).ok_or_else(|| Error::UnknownVertex(v.to_string()))?;
        let lw = match (self.builtin, site) {
            (Builtin::AInfinityTwoSided, Site::Line(k)) => k as f64 * self.two_sided_ratio.ln(),
            (_, Site::Fork(_)) => 0.0,
            (_, Site::Line(k)) => self.tail_log_weight(k as usize),
        };
        if !lw.is_finite() {
            return Err(Error::NonPositiveWeight(v.to_string()));
        }
        Ok(lw)
    }

    fn exact_weight(&self, v: &str) -> Option<BigRational> {
        let site = self.site(v)?;
        match (self.builtin, site) {
            (Builtin::AInfinityTwoSided, Site::Line(k)) => {
                let r = self.two_sided_exact.as_ref()?;
                Some(num_traits::pow::Pow::pow(r, k as i32))
            }
            (_, Site::Fork(_)) => Some(BigRational::one()),
            (_, Site::Line(k)) => self.tail_exact_weight(k as usize),
        }
    }

    fn all_vertices(&self) -> Option<Vec<String>> {
        None
    }

    fn fingerprint(&self) -> String {
        crate::io::fingerprint_str(&format!("builtin:{}:lambda_inv={}", self.builtin.name(), self.lambda_inv))
    }
}

/// A finite piece of a built-in infinite graph.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub graph: BipartiteGraph,
    /// Even vertices whose complete odd neighbourhood is fully present.
    pub even_interior: Vec<bool>,
    /// Odd vertices whose complete even neighbourhood is present.
    pub odd_interior: Vec<bool>,
    pub weights: Vec<Scalar>,
    pub lambda_inv: Scalar,
}

impl Truncation {
    /// Largest relative Markov residual over interior even vertices.
    pub fn interior_markov_residual(&self) -> f64 {
        let t: Vec<f64> = self.weights.iter().map(Scalar::to_f64).collect();
        let li = self.lambda_inv.to_f64();
        let gram = self.graph.even_gram();
        let mut worst: f64 = 0.0;
        for (j, row) in gram.iter().enumerate() {
            if !self.even_interior[j] {
                continue;
            }
            let lhs: f64 = row.iter().zip(&t).map(|(&s, &w)| s as f64 * w).sum();
            worst = worst.max((lhs - li * t[j]).abs() / (li * t[j]));
        }
        worst
    }
}

/// Exact check that `x` is a nonnegative integer no larger than
/// [`MAX_MULTIPLICITY`].
pub fn checked_multiplicity(x: &BigInt) -> Result<u64> {
    if x.is_negative() {
        return Err(Error::InvalidGraph(format!("negative multiplicity {x}")));
    }
    let v: u64 = x.try_into().map_err(|_| Error::InvalidGraph(format!("multiplicity {x} too large")))?;
    if v > MAX_MULTIPLICITY {
        return Err(Error::MultiplicityOverflow(v));
    }
    Ok(v)
}

impl WeightedEvenGraph for BipartiteGraph {
    fn lambda_inv(&self) -> f64 {
        f64::NAN
    }

    fn basepoint(&self) -> String {
        self.even[0].clone()
    }

    fn contains(&self, v: &str) -> bool {
        self.even_index.contains_key(v)
    }

    fn neighbors(&self, v: &str) -> Result<Vec<(String, u64)>> {
        let j = self.even_position(v).ok_or_else(|| Error::UnknownVertex(v.to_string()))?;
        Ok(self.even_neighbors(j).into_iter().map(|(k, s)| (self.even[k].clone(), s)).collect())
    }

    fn log_weight(&self, _v: &str) -> Result<f64> {
        Ok(0.0)
    }

    fn all_vertices(&self) -> Option<Vec<String>> {
        Some(self.even.clone())
    }

    fn fingerprint(&self) -> String {
        crate::io::fingerprint_str(&crate::io::graph_to_json(self, None, None))
    }
}
