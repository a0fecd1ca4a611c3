//! Square norms of small bipartite graphs.
//!
//! Connected bipartite multigraphs are enumerated up to isomorphism by
//! extension: removing a leaf of a spanning tree leaves a connected graph,
//! so every graph on `k + 1` vertices is one vertex added to a graph on `k`.
//! Norms are computed in floating point and classified against `4` and
//! `2 + √5` exactly.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use itertools::Itertools;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{char_poly_u128, norm_region, NormRegion};
use crate::graph::BipartiteGraph;
use crate::io::fingerprint_str;

/// Norms closer than this are one atlas entry.
pub const DEDUP_TOL: f64 = 1e-9;

pub const DEFAULT_CAP: usize = 2_000_000;

/// Multiplicity matrix in row-major order with the smaller side as rows.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Key {
    rows: usize,
    cols: usize,
    entries: Vec<u8>,
}

impl Key {
    fn at(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.cols + j]
    }

    fn transpose(&self) -> Key {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.at(i, j));
            }
        }
        Key { rows: self.cols, cols: self.rows, entries }
    }

    fn edges(&self) -> u64 {
        self.entries.iter().map(|&x| x as u64).sum()
    }

    fn matrix(&self) -> Vec<Vec<u64>> {
        self.entries.chunks(self.cols).map(|r| r.iter().map(|&x| x as u64).collect()).collect()
    }

    fn is_connected(&self) -> bool {
        let n = self.rows + self.cols;
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            let nbrs: Vec<usize> = if v < self.rows {
                (0..self.cols).filter(|&j| self.at(v, j) > 0).map(|j| self.rows + j).collect()
            } else {
                (0..self.rows).filter(|&i| self.at(i, v - self.rows) > 0).collect()
            };
            for u in nbrs {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Minimum over the leaves of an individualization-refinement search
    /// with rows kept before columns. Leaves are found by invariant rules,
    /// so the minimum is a canonical form.
    fn canonical_oriented(&self) -> Key {
        let mut search = Search::new(self);
        let start = search.refine(search.initial());
        search.descend(start, &mut Vec::new());
        let (entries, _) = search.best.expect("at least one leaf");
        Key { rows: self.rows, cols: self.cols, entries }
    }

    fn canonical(&self) -> Key {
        match self.rows.cmp(&self.cols) {
            std::cmp::Ordering::Less => self.canonical_oriented(),
            std::cmp::Ordering::Greater => self.transpose().canonical_oriented(),
            std::cmp::Ordering::Equal => self.canonical_oriented().min(self.transpose().canonical_oriented()),
        }
    }

    fn gram(&self) -> Vec<Vec<u128>> {
        (0..self.rows)
            .map(|a| {
                (0..self.rows)
                    .map(|b| (0..self.cols).map(|j| self.at(a, j) as u128 * self.at(b, j) as u128).sum())
                    .collect()
            })
            .collect()
    }
}

/// Ordered partition of rows and columns: `cell[v]` is the rank of the
/// cell holding vertex `v`, rows first.
type Partition = Vec<usize>;

struct Search<'a> {
    key: &'a Key,
    n: usize,
    /// Adjacency lists with multiplicities over vertices `0..rows+cols`.
    adj: Vec<Vec<(usize, u8)>>,
    first: Option<(Vec<u8>, Vec<usize>)>,
    best: Option<(Vec<u8>, Vec<usize>)>,
    automorphisms: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(key: &'a Key) -> Self {
        let n = key.rows + key.cols;
        let mut adj = vec![Vec::new(); n];
        for i in 0..key.rows {
            for j in 0..key.cols {
                let m = key.at(i, j);
                if m > 0 {
                    adj[i].push((key.rows + j, m));
                    adj[key.rows + j].push((i, m));
                }
            }
        }
        Search { key, n, adj, first: None, best: None, automorphisms: Vec::new() }
    }

    fn initial(&self) -> Partition {
        (0..self.n).map(|v| usize::from(v >= self.key.rows)).collect()
    }

    fn cell_count(p: &Partition) -> usize {
        p.iter().max().map_or(0, |m| m + 1)
    }

    /// Splits cells by the multiset of (neighbour cell, multiplicity) until
    /// the partition is equitable.
    fn refine(&self, mut p: Partition) -> Partition {
        loop {
            let before = Self::cell_count(&p);
            let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..self.n)
                .map(|v| {
                    let mut sig: Vec<(usize, u8)> = self.adj[v].iter().map(|&(u, m)| (p[u], m)).collect();
                    sig.sort_unstable();
                    (p[v], sig)
                })
                .collect();
            let mut ranked: Vec<&(usize, Vec<(usize, u8)>)> = keys.iter().collect();
            ranked.sort();
            ranked.dedup();
            p = keys.iter().map(|k| ranked.binary_search(&k).expect("present")).collect();
            if Self::cell_count(&p) == before {
                return p;
            }
        }
    }

    fn leaf(&self, p: &Partition) -> (Vec<u8>, Vec<usize>) {
        let mut at = vec![0; self.n];
        for v in 0..self.n {
            at[p[v]] = v;
        }
        let (r, c) = (self.key.rows, self.key.cols);
        let mut entries = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                entries.push(self.key.at(at[i], at[r + j] - r));
            }
        }
        (entries, at)
    }

    fn record_automorphism(&mut self, from: &[usize], to: &[usize]) {
        let mut perm = vec![0; self.n];
        for (a, b) in from.iter().zip(to) {
            perm[*a] = *b;
        }
        if perm.iter().enumerate().any(|(v, &w)| v != w) {
            self.automorphisms.push(perm);
        }
    }

    /// Orbits of the automorphisms found so far that fix `fixed` pointwise.
    fn orbits(&self, fixed: &[usize]) -> Vec<usize> {
        let mut root: Vec<usize> = (0..self.n).collect();
        fn find(root: &mut [usize], mut v: usize) -> usize {
            while root[v] != v {
                root[v] = root[root[v]];
                v = root[v];
            }
            v
        }
        for g in self.automorphisms.iter().filter(|g| fixed.iter().all(|&v| g[v] == v)) {
            for v in 0..self.n {
                let (a, b) = (find(&mut root, v), find(&mut root, g[v]));
                if a != b {
                    root[a.max(b)] = a.min(b);
                }
            }
        }
        (0..self.n).map(|v| find(&mut root, v)).collect()
    }

    fn twins(&self, u: usize, v: usize) -> bool {
        let row = |x: usize| {
            let mut r = self.adj[x].clone();
            r.sort_unstable();
            r
        };
        row(u) == row(v)
    }

    fn descend(&mut self, p: Partition, fixed: &mut Vec<usize>) {
        if Self::cell_count(&p) == self.n {
            let leaf = self.leaf(&p);
            match &self.first {
                None => self.first = Some(leaf.clone()),
                Some(f) if f.0 == leaf.0 => {
                    let from = f.1.clone();
                    self.record_automorphism(&from, &leaf.1);
                }
                _ => {}
            }
            match &self.best {
                Some(b) if b.0 < leaf.0 => {}
                Some(b) if b.0 == leaf.0 => {
                    let from = b.1.clone();
                    self.record_automorphism(&from, &leaf.1);
                }
                _ => self.best = Some(leaf),
            }
            return;
        }
        let sizes = (0..self.n).fold(vec![0usize; self.n], |mut acc, v| {
            acc[p[v]] += 1;
            acc
        });
        let target = (0..self.n).find(|&k| sizes[k] > 1).expect("non-discrete partition");
        let cell: Vec<usize> = (0..self.n).filter(|&v| p[v] == target).collect();
        let mut tried: Vec<usize> = Vec::new();
        for &v in &cell {
            if tried.iter().any(|&u| self.twins(u, v)) {
                continue;
            }
            let orbit = self.orbits(fixed);
            if tried.iter().any(|&u| orbit[u] == orbit[v]) {
                continue;
            }
            tried.push(v);
            let split: Partition = (0..self.n).map(|u| if p[u] > target || (p[u] == target && u != v) { p[u] + 1 } else { p[u] }).collect();
            fixed.push(v);
            let next = self.refine(split);
            self.descend(next, fixed);
            fixed.pop();
        }
    }
}

/// Largest eigenvalue of `ΛΛᵗ` and a bound on its error.
fn norm_with_error(key: &Key) -> (f64, f64) {
    let g = key.gram();
    let n = g.len();
    let m = DMatrix::from_fn(n, n, |a, b| g[a][b] as f64);
    let eig = m.clone().symmetric_eigen();
    let (k, &lambda) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    let v = eig.eigenvectors.column(k);
    let residual = (&m * v - v * lambda).norm() / v.norm();
    (lambda, residual + 8.0 * f64::EPSILON * lambda.max(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NormClass {
    /// Below 4: a Coxeter value `4cos²(π/n)`.
    Coxeter,
    /// Exactly 4.
    Affine,
    /// In `(4, 2 + √5]`.
    Window,
    /// Above `2 + √5`.
    HalfLine,
}

impl From<NormRegion> for NormClass {
    fn from(r: NormRegion) -> Self {
        match r {
            NormRegion::BelowFour => NormClass::Coxeter,
            NormRegion::Four => NormClass::Affine,
            NormRegion::Window => NormClass::Window,
            NormRegion::Beyond => NormClass::HalfLine,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalGraph {
    /// Multiplicities with the smaller side as rows.
    pub matrix: Vec<Vec<u64>>,
    pub n_odd: usize,
    pub n_even: usize,
    pub norm_squared: f64,
    pub norm_error: f64,
}

impl CanonicalGraph {
    fn from_key(key: &Key) -> Self {
        let (norm_squared, norm_error) = norm_with_error(key);
        CanonicalGraph { matrix: key.matrix(), n_odd: key.rows, n_even: key.cols, norm_squared, norm_error }
    }

    fn key(&self) -> Key {
        Key { rows: self.n_odd, cols: self.n_even, entries: self.matrix.iter().flatten().map(|&x| x as u8).collect() }
    }

    /// Canonical form of a connected multiplicity matrix, entries below 256.
    pub fn from_matrix(rows: &[Vec<u64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidGraph("matrix must be nonempty and rectangular".into()));
        }
        let mut entries = Vec::with_capacity(r * c);
        for &x in rows.iter().flatten() {
            entries.push(u8::try_from(x).map_err(|_| Error::InvalidParameter(format!("multiplicity {x} too large")))?);
        }
        let key = Key { rows: r, cols: c, entries };
        if !key.is_connected() {
            return Err(Error::InvalidGraph("graph must be connected".into()));
        }
        Ok(Self::from_key(&key.canonical()))
    }

    pub fn from_graph(g: &BipartiteGraph) -> Result<Self> {
        Self::from_matrix(&g.matrix_u64())
    }

    pub fn to_graph(&self) -> BipartiteGraph {
        BipartiteGraph::from_rows(&self.matrix).expect("canonical graphs are valid")
    }

    pub fn vertices(&self) -> usize {
        self.n_odd + self.n_even
    }

    pub fn edges(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    /// Exact position of the norm relative to 4 and `2 + √5`.
    pub fn class(&self) -> NormClass {
        norm_region(&char_poly_u128(&self.key().gram())).into()
    }

    pub fn hash(&self) -> String {
        fingerprint_str(&format!("{}x{}:{:?}", self.n_odd, self.n_even, self.matrix))
    }

    /// Ordering used to pick witnesses: fewest vertices, then fewest edges.
    fn witness_order(&self) -> (usize, u64, Key) {
        (self.vertices(), self.edges(), self.key())
    }
}

/// Tree on `n` vertices given by an edge list, as a simple bipartite graph.
pub fn tree_graph(n: usize, edges: &[(usize, usize)]) -> Result<CanonicalGraph> {
    let mut side = vec![None; n];
    side[0] = Some(0u8);
    let mut changed = true;
    while changed {
        changed = false;
        for &(a, b) in edges {
            match (side[a], side[b]) {
                (Some(s), None) => {
                    side[b] = Some(1 - s);
                    changed = true;
                }
                (None, Some(s)) => {
                    side[a] = Some(1 - s);
                    changed = true;
                }
                (Some(x), Some(y)) if x == y => return Err(Error::InvalidGraph("odd cycle".into())),
                _ => {}
            }
        }
    }
    let side: Vec<u8> = side.into_iter().collect::<Option<_>>().ok_or_else(|| Error::InvalidGraph("disconnected".into()))?;
    let odd: Vec<usize> = (0..n).filter(|&v| side[v] == 0).collect();
    let even: Vec<usize> = (0..n).filter(|&v| side[v] == 1).collect();
    let mut m = vec![vec![0u64; even.len()]; odd.len()];
    for &(a, b) in edges {
        let (o, e) = if side[a] == 0 { (a, b) } else { (b, a) };
        let i = odd.iter().position(|&v| v == o).expect("odd vertex");
        let j = even.iter().position(|&v| v == e).expect("even vertex");
        m[i][j] += 1;
    }
    CanonicalGraph::from_matrix(&m)
}

/// Star with arms of the given lengths (in edges) joined at one vertex.
pub fn star_graph(arms: &[usize]) -> Result<CanonicalGraph> {
    let mut edges = Vec::new();
    let mut next = 1;
    for &len in arms {
        let mut prev = 0;
        for _ in 0..len {
            edges.push((prev, next));
            prev = next;
            next += 1;
        }
    }
    tree_graph(next, &edges)
}

/// `A_n`, `D_n` or `E_n` with `n` vertices.
pub fn coxeter_graph(kind: char, n: usize) -> Result<CanonicalGraph> {
    match (kind, n) {
        ('A', 2..) => star_graph(&[n - 1]),
        ('D', 4..) => star_graph(&[1, 1, n - 3]),
        ('E', 6..) => star_graph(&[1, 2, n - 4]),
        _ => Err(Error::InvalidParameter(format!("no Coxeter graph {kind}{n}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumBounds {
    pub max_vertices: usize,
    pub max_multiplicity: u8,
    /// Bound on the sum of multiplicities.
    pub max_edges: u64,
    /// Stop after this many graphs.
    pub cap: usize,
}

impl EnumBounds {
    pub fn new(max_vertices: usize, max_multiplicity: u8) -> Self {
        EnumBounds { max_vertices, max_multiplicity, max_edges: u64::MAX, cap: DEFAULT_CAP }
    }

    fn validate(&self) -> Result<()> {
        if self.max_vertices < 1 || self.max_multiplicity < 1 || self.max_edges < 1 || self.cap < 1 {
            return Err(Error::InvalidParameter("enumeration bounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Enumeration {
    pub graphs: Vec<CanonicalGraph>,
    /// The cap was hit; `graphs` is a prefix of the full list.
    pub truncated: bool,
}

fn extensions(key: &Key, bounds: &EnumBounds) -> Vec<Key> {
    let m = bounds.max_multiplicity;
    let budget = bounds.max_edges.saturating_sub(key.edges());
    let mut out = Vec::new();
    // a new row joins the columns, a new column joins the rows
    for new_row in [true, false] {
        let len = if new_row { key.cols } else { key.rows };
        let attachments = (0..len).map(|_| 0..=m).multi_cartesian_product();
        for att in attachments {
            let added: u64 = att.iter().map(|&x| x as u64).sum();
            if added == 0 || added > budget {
                continue;
            }
            let next = if new_row {
                let mut entries = key.entries.clone();
                entries.extend(&att);
                Key { rows: key.rows + 1, cols: key.cols, entries }
            } else {
                let mut entries = Vec::with_capacity(key.entries.len() + key.rows);
                for i in 0..key.rows {
                    entries.extend(&key.entries[i * key.cols..(i + 1) * key.cols]);
                    entries.push(att[i]);
                }
                Key { rows: key.rows, cols: key.cols + 1, entries }
            };
            out.push(next.canonical());
        }
    }
    out
}

/// Every connected bipartite multigraph within `bounds`, once per
/// isomorphism class, ordered by vertex count and then canonical matrix.
pub fn enumerate(bounds: &EnumBounds) -> Result<Enumeration> {
    bounds.validate()?;
    let mut keys: Vec<Key> = Vec::new();
    let mut truncated = false;
    if bounds.max_vertices >= 2 {
        let mut level: Vec<Key> = (1..=bounds.max_multiplicity)
            .filter(|&k| k as u64 <= bounds.max_edges)
            .map(|k| Key { rows: 1, cols: 1, entries: vec![k] })
            .collect();
        for size in 2..=bounds.max_vertices {
            if keys.len() + level.len() > bounds.cap {
                level.truncate(bounds.cap - keys.len());
                keys.extend(level);
                truncated = true;
                break;
            }
            keys.extend(level.iter().cloned());
            if size == bounds.max_vertices {
                break;
            }
            // partitions run in parallel, deduplication is a single merge
            let found: Vec<Vec<Key>> = level.par_iter().map(|k| extensions(k, bounds)).collect();
            let mut seen = HashSet::new();
            let mut next: Vec<Key> = found.into_iter().flatten().filter(|k| seen.insert(k.clone())).collect();
            next.sort();
            level = next;
        }
    }
    let graphs = keys.par_iter().map(CanonicalGraph::from_key).collect();
    Ok(Enumeration { graphs, truncated })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub norm_squared: f64,
    pub witness: CanonicalGraph,
    pub class: NormClass,
    /// Number of enumerated graphs sharing this norm.
    pub multiplicity: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Atlas {
    pub entries: Vec<AtlasEntry>,
}

/// Groups graphs by norm and keeps the smallest witness of each value.
pub fn classify(graphs: &[CanonicalGraph]) -> Atlas {
    let mut sorted: Vec<&CanonicalGraph> = graphs.iter().collect();
    sorted.sort_by(|a, b| a.norm_squared.total_cmp(&b.norm_squared));
    let mut entries: Vec<AtlasEntry> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for g in sorted {
        match entries.last_mut() {
            Some(e) if g.norm_squared - anchor <= DEDUP_TOL => {
                e.multiplicity += 1;
                if g.witness_order() < e.witness.witness_order() {
                    e.witness = g.clone();
                }
            }
            _ => {
                anchor = g.norm_squared;
                entries.push(AtlasEntry { norm_squared: g.norm_squared, witness: g.clone(), class: NormClass::Coxeter, multiplicity: 1 });
            }
        }
    }
    for e in &mut entries {
        e.norm_squared = e.witness.norm_squared;
        e.class = e.witness.class();
    }
    Atlas { entries }
}

impl Atlas {
    pub fn below(&self, x: f64) -> impl Iterator<Item = &AtlasEntry> {
        self.entries.iter().filter(move |e| e.norm_squared < x)
    }

    /// Smallest entry with a norm strictly above 4.
    pub fn first_above_four(&self) -> Option<&AtlasEntry> {
        self.entries.iter().find(|e| e.class > NormClass::Affine)
    }

    pub fn merge(&mut self, other: Atlas) {
        let graphs: Vec<CanonicalGraph> = self.entries.drain(..).chain(other.entries).map(|e| e.witness).collect();
        *self = classify(&graphs);
    }

    /// Appends entries whose witness hash is not yet in the file and
    /// returns how many were written.
    pub fn append_jsonl(&self, path: &Path) -> Result<usize> {
        let known: HashSet<String> = if path.exists() {
            read_lines(path)?.into_iter().map(|(k, _)| k).collect()
        } else {
            HashSet::new()
        };
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut written = 0;
        for e in &self.entries {
            let key = e.witness.hash();
            if known.contains(&key) {
                continue;
            }
            let line = serde_json::to_string(&AtlasLine { key, entry: e.clone() })
                .map_err(|err| Error::Parse(err.to_string()))?;
            writeln!(file, "{line}")?;
            written += 1;
        }
        Ok(written)
    }

    /// Reads an atlas file, merging lines that share a norm.
    pub fn load_jsonl(path: &Path) -> Result<Atlas> {
        let graphs: Vec<CanonicalGraph> = read_lines(path)?.into_iter().map(|(_, e)| e.witness).collect();
        Ok(classify(&graphs))
    }
}

#[derive(Serialize, Deserialize)]
struct AtlasLine {
    key: String,
    #[serde(flatten)]
    entry: AtlasEntry,
}

fn read_lines(path: &Path) -> Result<Vec<(String, AtlasEntry)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: AtlasLine = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        out.push((l.key, l.entry));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag")]
pub enum MembershipOutcome {
    Found { witness: CanonicalGraph, distance: f64 },
    /// Finite graph norms are dense in the set of all norms, so a miss
    /// within bounds says nothing about membership.
    NotFoundWithinBounds { nearest: Option<f64>, searched: usize, truncated: bool, caveat: String },
}

/// Smallest graph within `bounds` whose square norm is within `tol` of
/// `alpha`.
pub fn membership_query(alpha: f64, tol: f64, bounds: &EnumBounds) -> Result<MembershipOutcome> {
    if !(alpha > 0.0) || !(tol >= 0.0) {
        return Err(Error::InvalidParameter("alpha must be positive and tol nonnegative".into()));
    }
    let en = enumerate(bounds)?;
    let hit = en
        .graphs
        .iter()
        .filter(|g| (g.norm_squared - alpha).abs() <= tol + g.norm_error)
        .min_by_key(|g| g.witness_order());
    Ok(match hit {
        Some(g) => MembershipOutcome::Found { witness: g.clone(), distance: (g.norm_squared - alpha).abs() },
        None => MembershipOutcome::NotFoundWithinBounds {
            nearest: en.graphs.iter().map(|g| g.norm_squared).min_by(|a, b| (a - alpha).abs().total_cmp(&(b - alpha).abs())),
            searched: en.graphs.len(),
            truncated: en.truncated,
            caveat: "finite graph norms are dense in the norm set; absence within bounds is not a proof of non-membership".into(),
        },
    })
}
