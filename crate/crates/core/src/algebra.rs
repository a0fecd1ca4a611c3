//! Concrete multimatrix algebras, their unital *-subalgebras and the
//! trace-preserving conditional expectations between them.
//!
//! An element of `⊕ M_{n_i}(ℂ)` is a list of square blocks. The weighted trace
//! `tr(x) = Σ w_i Tr(x_i)` gives the inner product `⟨x, y⟩ = tr(y* x)`, and
//! every subalgebra is stored as an orthonormal basis for it, so conditional
//! expectations are orthogonal projections.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::scalar::Scalar;

pub type C64 = Complex64;

/// Residual bound for membership, closure and the algebraic identities.
pub const CLOSURE_TOL: f64 = 1e-10;
/// Relative singular value cut for numerical rank.
pub const RANK_TOL: f64 = 1e-9;
/// Singular values below this are zero whatever the scale.
const ABS_FLOOR: f64 = 1e-12;
const CENTRAL_SEED: u64 = 0x5eed_c0de;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A block-diagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    blocks: Vec<DMatrix<C64>>,
}

impl Element {
    pub fn from_blocks(blocks: Vec<DMatrix<C64>>) -> Self {
        Element { blocks }
    }

    /// Blocks given as rows of real entries.
    pub fn real(blocks: &[Vec<Vec<f64>>]) -> Self {
        let blocks = blocks
            .iter()
            .map(|b| {
                let n = b.len();
                DMatrix::from_fn(n, n, |r, k| c(b[r][k]))
            })
            .collect();
        Element { blocks }
    }

    pub fn blocks(&self) -> &[DMatrix<C64>] {
        &self.blocks
    }

    pub fn mul(&self, other: &Element) -> Element {
        Element { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect() }
    }

    pub fn adjoint(&self) -> Element {
        Element { blocks: self.blocks.iter().map(|a| a.adjoint()).collect() }
    }

    pub fn add(&self, other: &Element) -> Element {
        Element { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Element) -> Element {
        Element { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: C64) -> Element {
        Element { blocks: self.blocks.iter().map(|a| a * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.iter()).fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Operator norm: the largest singular value over all blocks.
    pub fn op_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.clone().singular_values().iter().cloned().fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Sum of the unweighted block traces.
    pub fn raw_trace(&self) -> C64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let h = (b + b.adjoint()) * c(0.5);
                h.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| (0..b.nrows()).flat_map(move |r| (0..b.ncols()).map(move |k| b[(r, k)])))
            .flat_map(|z| [z.re, z.im])
    }
}

impl Serialize for Element {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks: Vec<Vec<Vec<[f64; 2]>>> = self
            .blocks
            .iter()
            .map(|b| (0..b.nrows()).map(|r| (0..b.ncols()).map(|k| [b[(r, k)].re, b[(r, k)].im]).collect()).collect())
            .collect();
        let mut seq = s.serialize_seq(Some(blocks.len()))?;
        for b in &blocks {
            seq.serialize_element(b)?;
        }
        seq.end()
    }
}

/// `⊕_i M_{n_i}(ℂ)` with the trace state whose minimal projections in block
/// `i` have trace `w_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlgebraShape")]
pub struct MultiMatrixAlgebra {
    block_sizes: Vec<usize>,
    trace_weights: Vec<Scalar>,
    #[serde(skip)]
    w: Vec<f64>,
}

#[derive(Deserialize)]
struct AlgebraShape {
    block_sizes: Vec<usize>,
    trace_weights: Vec<Scalar>,
}

impl TryFrom<AlgebraShape> for MultiMatrixAlgebra {
    type Error = Error;
    fn try_from(s: AlgebraShape) -> Result<Self> {
        MultiMatrixAlgebra::new(s.block_sizes, s.trace_weights)
    }
}

impl MultiMatrixAlgebra {
    pub fn new(block_sizes: Vec<usize>, trace_weights: Vec<Scalar>) -> Result<Self> {
        if block_sizes.is_empty() {
            return Err(Error::InvalidScene("algebra has no blocks".into()));
        }
        if block_sizes.len() != trace_weights.len() {
            return Err(Error::DimensionMismatch { expected: block_sizes.len(), found: trace_weights.len() });
        }
        if let Some(k) = block_sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidScene(format!("block {k} has size zero")));
        }
        if let Some(k) = trace_weights.iter().position(|w| !w.is_positive()) {
            return Err(Error::InvalidScene(format!("trace weight {k} is not positive; the trace must be faithful")));
        }
        let exact: Option<Vec<&BigRational>> = trace_weights.iter().map(|w| w.as_exact()).collect();
        match exact {
            Some(ws) => {
                let total: BigRational = block_sizes
                    .iter()
                    .zip(ws)
                    .map(|(&n, w)| BigRational::from_integer(n.into()) * w)
                    .fold(BigRational::zero(), |a, b| a + b);
                if !total.is_one() {
                    return Err(Error::InvalidScene(format!("trace weights sum to {total}, not 1")));
                }
            }
            None => {
                let total: f64 = block_sizes.iter().zip(&trace_weights).map(|(&n, w)| n as f64 * w.to_f64()).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidScene(format!("trace weights sum to {total}, not 1")));
                }
            }
        }
        let w = trace_weights.iter().map(Scalar::to_f64).collect();
        Ok(MultiMatrixAlgebra { block_sizes, trace_weights, w })
    }

    /// `M_n(ℂ)` with its normalized trace.
    pub fn matrix(n: usize) -> Result<Self> {
        Self::new(vec![n], vec![Scalar::ratio(1, n as i64)])
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn trace_weights(&self) -> &[Scalar] {
        &self.trace_weights
    }

    pub fn dim(&self) -> usize {
        self.block_sizes.iter().map(|n| n * n).sum()
    }

    pub fn zero(&self) -> Element {
        Element { blocks: self.block_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect() }
    }

    pub fn identity(&self) -> Element {
        Element { blocks: self.block_sizes.iter().map(|&n| DMatrix::identity(n, n)).collect() }
    }

    pub fn check_element(&self, x: &Element) -> Result<()> {
        if x.blocks.len() != self.block_sizes.len() {
            return Err(Error::DimensionMismatch { expected: self.block_sizes.len(), found: x.blocks.len() });
        }
        for (b, &n) in x.blocks.iter().zip(&self.block_sizes) {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: b.nrows().max(b.ncols()) });
            }
            if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidScene("non-finite matrix entry".into()));
            }
        }
        Ok(())
    }

    pub fn trace(&self, x: &Element) -> C64 {
        x.blocks.iter().zip(&self.w).map(|(b, &w)| b.trace() * w).sum()
    }

    /// `tr(y* x)`.
    pub fn inner(&self, x: &Element, y: &Element) -> C64 {
        self.vectorize(y).dotc(&self.vectorize(x))
    }

    /// Coordinates in which the weighted trace inner product is the standard
    /// one: block entries row by row, scaled by `sqrt(w_i)`.
    pub fn vectorize(&self, x: &Element) -> DVector<C64> {
        let mut v = Vec::with_capacity(self.dim());
        for (b, &w) in x.blocks.iter().zip(&self.w) {
            let s = w.sqrt();
            for r in 0..b.nrows() {
                for k in 0..b.ncols() {
                    v.push(b[(r, k)] * s);
                }
            }
        }
        DVector::from_vec(v)
    }

    pub fn unvectorize(&self, v: &[C64]) -> Element {
        let mut pos = 0;
        let blocks = self
            .block_sizes
            .iter()
            .zip(&self.w)
            .map(|(&n, &w)| {
                let s = 1.0 / w.sqrt();
                let m = DMatrix::from_fn(n, n, |r, k| v[pos + r * n + k] * s);
                pos += n * n;
                m
            })
            .collect();
        Element { blocks }
    }

    pub fn matrix_units(&self) -> Vec<Element> {
        let mut out = Vec::with_capacity(self.dim());
        for (i, &n) in self.block_sizes.iter().enumerate() {
            for r in 0..n {
                for k in 0..n {
                    let mut x = self.zero();
                    x.blocks[i][(r, k)] = c(1.0);
                    out.push(x);
                }
            }
        }
        out
    }

    fn columns(&self, xs: &[Element]) -> DMatrix<C64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, xs.len());
        for (k, x) in xs.iter().enumerate() {
            m.set_column(k, &self.vectorize(x));
        }
        m
    }
}

/// Orthonormal basis of the column span.
fn range_basis(a: &DMatrix<C64>) -> DMatrix<C64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > (RANK_TOL * smax).max(ABS_FLOOR))
        .collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |r, k| u[(r, keep[k])])
}

/// Orthonormal basis of the kernel.
fn null_basis(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.ncols();
    let mut sq = a.clone();
    if sq.nrows() < n {
        sq = sq.resize_vertically(n, C64::zero());
    }
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= (RANK_TOL * smax).max(ABS_FLOOR))
        .collect();
    DMatrix::from_fn(n, null.len(), |r, k| vt[(null[k], r)].conj())
}

pub(crate) fn rank(a: &DMatrix<C64>) -> usize {
    range_basis(a).ncols()
}

fn frobenius(a: &DMatrix<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A unital *-subalgebra of a multimatrix algebra, stored as an orthonormal
/// basis.
#[derive(Clone, Debug)]
pub struct EmbeddedSubalgebra {
    ambient: MultiMatrixAlgebra,
    basis: Vec<Element>,
    /// `D × k` with orthonormal columns: the vectorized basis.
    coords: DMatrix<C64>,
}

impl EmbeddedSubalgebra {
    /// The ambient algebra itself.
    pub fn full(ambient: &MultiMatrixAlgebra) -> Self {
        let d = ambient.dim();
        Self::from_orthonormal(ambient, DMatrix::identity(d, d))
    }

    /// Scalar multiples of the identity.
    pub fn scalars(ambient: &MultiMatrixAlgebra) -> Self {
        let v = ambient.vectorize(&ambient.identity());
        Self::from_orthonormal(ambient, DMatrix::from_columns(&[v]))
    }

    fn from_orthonormal(ambient: &MultiMatrixAlgebra, coords: DMatrix<C64>) -> Self {
        let basis = (0..coords.ncols()).map(|k| ambient.unvectorize(coords.column(k).as_slice())).collect();
        EmbeddedSubalgebra { ambient: ambient.clone(), basis, coords }
    }

    /// The span of `elements`, which must already be a unital *-subalgebra.
    pub fn from_span(ambient: &MultiMatrixAlgebra, elements: &[Element]) -> Result<Self> {
        for x in elements {
            ambient.check_element(x)?;
        }
        let coords = range_basis(&ambient.columns(elements));
        let a = Self::from_orthonormal(ambient, coords);
        a.validate()?;
        Ok(a)
    }

    /// The unital *-subalgebra generated by `generators`.
    pub fn generated(ambient: &MultiMatrixAlgebra, generators: &[Element]) -> Result<Self> {
        for x in generators {
            ambient.check_element(x)?;
        }
        let mut span: Vec<Element> = vec![ambient.identity()];
        span.extend(generators.iter().cloned());
        span.extend(generators.iter().map(Element::adjoint));
        let mut coords = range_basis(&ambient.columns(&span));
        loop {
            let a = Self::from_orthonormal(ambient, coords.clone());
            let mut products = a.basis.clone();
            for x in &a.basis {
                for y in &a.basis {
                    products.push(x.mul(y));
                }
            }
            let next = range_basis(&ambient.columns(&products));
            if next.ncols() == coords.ncols() {
                a.validate()?;
                return Ok(a);
            }
            coords = next;
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::NotSubalgebra("empty span".into()));
        }
        let one = self.ambient.identity();
        let r = self.membership_residual(&one);
        if r > CLOSURE_TOL {
            return Err(Error::NotSubalgebra(format!("identity is not in the span (residual {r:e})")));
        }
        for (k, x) in self.basis.iter().enumerate() {
            let r = self.membership_residual(&x.adjoint());
            if r > CLOSURE_TOL {
                return Err(Error::NotSubalgebra(format!("span is not closed under adjoint (basis {k}, residual {r:e})")));
            }
            for (l, y) in self.basis.iter().enumerate() {
                let r = self.membership_residual(&x.mul(y));
                if r > CLOSURE_TOL {
                    return Err(Error::NotSubalgebra(format!(
                        "span is not closed under products (basis {k}*{l}, residual {r:e})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn ambient(&self) -> &MultiMatrixAlgebra {
        &self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Element] {
        &self.basis
    }

    pub fn coords(&self) -> &DMatrix<C64> {
        &self.coords
    }

    /// Matrix of the orthogonal projection onto the span, in vectorized
    /// coordinates.
    pub fn projector(&self) -> DMatrix<C64> {
        &self.coords * self.coords.adjoint()
    }

    pub fn project(&self, x: &Element) -> Element {
        let v = self.ambient.vectorize(x);
        let p = &self.coords * (self.coords.adjoint() * v);
        self.ambient.unvectorize(p.as_slice())
    }

    /// `‖x − P x‖₂ / max(1, ‖x‖₂)` in the trace norm.
    pub fn membership_residual(&self, x: &Element) -> f64 {
        let v = self.ambient.vectorize(x);
        let p = &self.coords * (self.coords.adjoint() * &v);
        (&v - p).norm() / v.norm().max(1.0)
    }

    pub fn contains(&self, x: &Element, tol: f64) -> bool {
        self.membership_residual(x) <= tol
    }

    pub fn is_subalgebra_of(&self, other: &EmbeddedSubalgebra, tol: f64) -> bool {
        self.ambient == other.ambient && self.basis.iter().all(|x| other.contains(x, tol))
    }

    fn require_within(&self, other: &EmbeddedSubalgebra, what: &str) -> Result<()> {
        if self.ambient != other.ambient {
            return Err(Error::InvalidScene(format!("{what}: subalgebras live in different ambient algebras")));
        }
        if !self.is_subalgebra_of(other, 1e-8) {
            return Err(Error::NotSubalgebra(format!("{what}: not contained in the larger algebra")));
        }
        Ok(())
    }

    /// A random self-adjoint element with coefficients drawn from `rng`.
    pub fn random_self_adjoint<R: Rng>(&self, rng: &mut R) -> Element {
        let mut x = self.ambient.zero();
        for b in &self.basis {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            x = x.add(&b.scale(z));
        }
        x.add(&x.adjoint()).scale(c(0.5))
    }

    pub fn center(&self) -> EmbeddedSubalgebra {
        let d = self.ambient.dim();
        let k = self.dim();
        let mut map = DMatrix::zeros(k * d, k);
        for (l, y) in self.basis.iter().enumerate() {
            for (j, x) in self.basis.iter().enumerate() {
                let comm = x.mul(y).sub(&y.mul(x));
                map.view_mut((l * d, j), (d, 1)).copy_from(&self.ambient.vectorize(&comm));
            }
        }
        let null = null_basis(&map);
        Self::from_orthonormal(&self.ambient, &self.coords * null)
    }

    /// Minimal central projections, sorted by their entries in descending
    /// lexicographic order.
    pub fn minimal_central_projections(&self) -> Result<Vec<Element>> {
        let z = self.center();
        let r = z.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(CENTRAL_SEED);
        for _ in 0..16 {
            let h = z.random_self_adjoint(&mut rng);
            let projections = spectral_projections(&h, 1e-6);
            if projections.len() == r && projections.iter().all(|p| z.contains(p, 1e-8)) {
                let mut projections = projections;
                projections.sort_by(|a, b| lex_desc(a, b));
                return Ok(projections);
            }
        }
        Err(Error::RankDeficiency("could not separate the minimal central projections".into()))
    }

    /// `dim(A p)` for a projection `p`.
    fn corner_dim(&self, p: &Element) -> usize {
        let xs: Vec<Element> = self.basis.iter().map(|b| b.mul(p)).collect();
        rank(&self.ambient.columns(&xs))
    }

    /// Simple summands with their matrix sizes.
    pub fn summands(&self) -> Result<Vec<Summand>> {
        self.minimal_central_projections()?
            .into_iter()
            .map(|p| {
                let d = self.corner_dim(&p);
                let m = (d as f64).sqrt().round() as usize;
                if m * m != d {
                    return Err(Error::RankDeficiency(format!("summand of dimension {d} is not a full matrix algebra")));
                }
                let rank = p.raw_trace().re.round() as usize;
                let trace = self.ambient.trace(&p).re;
                Ok(Summand { size: m, ambient_rank: rank, minimal_trace: trace / m as f64, projection: p })
            })
            .collect()
    }

    /// Trace of a minimal projection in each simple summand.
    pub fn summand_traces(&self) -> Result<Vec<f64>> {
        Ok(self.summands()?.iter().map(|s| s.minimal_trace).collect())
    }

    /// Coordinates of `x` in the orthonormal basis.
    fn coefficients(&self, x: &Element) -> DVector<C64> {
        self.coords.adjoint() * self.ambient.vectorize(x)
    }
}

/// Eigenprojections of a self-adjoint element, grouping eigenvalues within
/// `tol` (relative) across all blocks. Sorted by eigenvalue.
fn spectral_projections(h: &Element, tol: f64) -> Vec<Element> {
    let mut eig: Vec<(f64, usize, DVector<C64>)> = Vec::new();
    for (i, b) in h.blocks.iter().enumerate() {
        let hb = (b + b.adjoint()) * c(0.5);
        let se = hb.symmetric_eigen();
        for k in 0..se.eigenvalues.len() {
            eig.push((se.eigenvalues[k], i, se.eigenvectors.column(k).into_owned()));
        }
    }
    eig.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let scale = eig.iter().fold(1.0f64, |m, e| m.max(e.0.abs()));
    let mut out = Vec::new();
    let mut k = 0;
    while k < eig.len() {
        let start = eig[k].0;
        let mut p = Element { blocks: h.blocks.iter().map(|b| DMatrix::zeros(b.nrows(), b.ncols())).collect() };
        while k < eig.len() && eig[k].0 - start <= tol * scale {
            let (_, i, v) = &eig[k];
            p.blocks[*i] += v * v.adjoint();
            k += 1;
        }
        out.push(p);
    }
    out
}

fn lex_desc(a: &Element, b: &Element) -> Ordering {
    for (x, y) in a.flat().zip(b.flat()) {
        if (x - y).abs() > 1e-9 {
            return y.partial_cmp(&x).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

#[derive(Clone, Debug, Serialize)]
pub struct Summand {
    pub projection: Element,
    /// The summand is `M_size(ℂ)`.
    pub size: usize,
    /// Rank of the central projection as an ambient matrix.
    pub ambient_rank: usize,
    pub minimal_trace: f64,
}

/// Summand data of an inclusion `Q ⊂ P`.
#[derive(Clone, Debug, Serialize)]
pub struct InclusionData {
    pub small: Vec<Summand>,
    pub large: Vec<Summand>,
    /// Rows indexed by summands of the smaller algebra.
    pub matrix: Vec<Vec<u64>>,
}

impl InclusionData {
    pub fn graph(&self, small_prefix: &str, large_prefix: &str) -> Result<BipartiteGraph> {
        let odd = (0..self.small.len()).map(|i| format!("{small_prefix}{i}")).collect();
        let even = (0..self.large.len()).map(|j| format!("{large_prefix}{j}")).collect();
        BipartiteGraph::new(odd, even, self.matrix.clone())
    }
}

pub fn inclusion_data(q: &EmbeddedSubalgebra, p: &EmbeddedSubalgebra) -> Result<InclusionData> {
    q.require_within(p, "inclusion")?;
    let small = q.summands()?;
    let large = p.summands()?;
    let mut matrix = vec![vec![0u64; large.len()]; small.len()];
    for (i, qi) in small.iter().enumerate() {
        for (j, pj) in large.iter().enumerate() {
            let r = qi.projection.mul(&pj.projection).raw_trace().re;
            // a minimal projection of P p_j has ambient rank rank(p_j)/m_j
            let unit = (qi.size * pj.ambient_rank) as f64 / pj.size as f64;
            let b = r / unit;
            if (b - b.round()).abs() > 1e-6 || b < -1e-6 {
                return Err(Error::RankDeficiency(format!("non-integral multiplicity {b} at ({i},{j})")));
            }
            matrix[i][j] = b.round() as u64;
        }
    }
    Ok(InclusionData { small, large, matrix })
}

/// Inclusion graph of `Q ⊂ P`, rows indexed by the summands of `Q`.
pub fn inclusion_matrix(q: &EmbeddedSubalgebra, p: &EmbeddedSubalgebra) -> Result<BipartiteGraph> {
    inclusion_data(q, p)?.graph("q", "p")
}

/// The trace-preserving conditional expectation onto a subalgebra.
#[derive(Clone, Debug)]
pub struct ExpectationMap {
    target: EmbeddedSubalgebra,
    matrix: DMatrix<C64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpectationReport {
    pub idempotent_residual: f64,
    pub self_adjoint_residual: f64,
    pub fixes_target_residual: f64,
    pub unital_residual: f64,
    pub bimodule_residual: f64,
    pub min_eigenvalue_on_positive: f64,
    pub pass: bool,
}

pub fn expectation(ambient: &MultiMatrixAlgebra, target: &EmbeddedSubalgebra) -> Result<ExpectationMap> {
    if ambient != target.ambient() {
        return Err(Error::InvalidScene("target does not live in this ambient algebra".into()));
    }
    target.validate()?;
    Ok(ExpectationMap { target: target.clone(), matrix: target.projector() })
}

impl ExpectationMap {
    pub fn target(&self) -> &EmbeddedSubalgebra {
        &self.target
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn apply(&self, x: &Element) -> Element {
        self.target.project(x)
    }

    /// Checks the defining properties on the basis and on `samples` random
    /// positive elements.
    pub fn check(&self, samples: usize, seed: u64) -> ExpectationReport {
        let a = self.target.ambient();
        let p = &self.matrix;
        let idempotent_residual = frobenius(&(p * p - p));
        let self_adjoint_residual = frobenius(&(p - p.adjoint()));
        let fixes_target_residual = self
            .target
            .basis()
            .iter()
            .map(|b| a.vectorize(&self.apply(b).sub(b)).norm())
            .fold(0.0, f64::max);
        let one = a.identity();
        let unital_residual = a.vectorize(&self.apply(&one).sub(&one)).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = EmbeddedSubalgebra::full(a);
        let mut bimodule_residual = 0.0f64;
        for b1 in self.target.basis() {
            for b2 in self.target.basis() {
                let x = full.random_self_adjoint(&mut rng);
                let lhs = self.apply(&b1.mul(&x).mul(b2));
                let rhs = b1.mul(&self.apply(&x)).mul(b2);
                bimodule_residual = bimodule_residual.max(a.vectorize(&lhs.sub(&rhs)).norm());
            }
        }
        let mut min_eigenvalue_on_positive = f64::INFINITY;
        for _ in 0..samples {
            let y = full.random_self_adjoint(&mut rng);
            let x = y.mul(&y);
            let scale = x.op_norm().max(1.0);
            min_eigenvalue_on_positive = min_eigenvalue_on_positive.min(self.apply(&x).min_eigenvalue() / scale);
        }
        let pass = idempotent_residual.max(self_adjoint_residual).max(fixes_target_residual) <= CLOSURE_TOL
            && unital_residual <= CLOSURE_TOL
            && bimodule_residual <= 1e-8
            && min_eigenvalue_on_positive >= -CLOSURE_TOL;
        ExpectationReport {
            idempotent_residual,
            self_adjoint_residual,
            fixes_target_residual,
            unital_residual,
            bimodule_residual,
            min_eigenvalue_on_positive,
            pass,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CommutingSquareReport {
    pub is_csq: bool,
    /// `‖(E_P E_N − E_Q) E_M‖` in the Frobenius norm.
    pub residual_pn: f64,
    pub residual_np: f64,
    pub q_dim: usize,
    #[serde(skip)]
    pub q: EmbeddedSubalgebra,
}

/// `P ∩ N`.
pub fn intersection(p: &EmbeddedSubalgebra, n: &EmbeddedSubalgebra) -> Result<EmbeddedSubalgebra> {
    if p.ambient() != n.ambient() {
        return Err(Error::InvalidScene("subalgebras live in different ambient algebras".into()));
    }
    let avg = (p.projector() + n.projector()) * c(0.5);
    let d = avg.nrows();
    let se = avg.symmetric_eigen();
    let keep: Vec<usize> = (0..se.eigenvalues.len()).filter(|&k| se.eigenvalues[k] > 1.0 - 1e-9).collect();
    let coords = DMatrix::from_fn(d, keep.len(), |r, k| se.eigenvectors[(r, keep[k])]);
    let q = EmbeddedSubalgebra::from_orthonormal(p.ambient(), coords);
    q.validate()?;
    Ok(q)
}

pub fn commuting_square_check(
    m: &EmbeddedSubalgebra,
    p: &EmbeddedSubalgebra,
    n: &EmbeddedSubalgebra,
    tol: f64,
) -> Result<CommutingSquareReport> {
    p.require_within(m, "P")?;
    n.require_within(m, "N")?;
    let q = intersection(p, n)?;
    let (pp, pn, pq, pm) = (p.projector(), n.projector(), q.projector(), m.projector());
    let residual_pn = frobenius(&((&pp * &pn - &pq) * &pm));
    let residual_np = frobenius(&((&pn * &pp - &pq) * &pm));
    Ok(CommutingSquareReport {
        is_csq: residual_pn <= tol && residual_np <= tol,
        residual_pn,
        residual_np,
        q_dim: q.dim(),
        q,
    })
}

/// Dimension of `span{p n : p ∈ P, n ∈ N}`.
pub fn product_span_dim(p: &EmbeddedSubalgebra, n: &EmbeddedSubalgebra) -> usize {
    let mut xs = Vec::with_capacity(p.dim() * n.dim());
    for a in p.basis() {
        for b in n.basis() {
            xs.push(a.mul(b));
        }
    }
    rank(&p.ambient().columns(&xs))
}

/// Whether `span(P N) = M`.
pub fn nondegeneracy_check(m: &EmbeddedSubalgebra, p: &EmbeddedSubalgebra, n: &EmbeddedSubalgebra) -> Result<bool> {
    p.require_within(m, "P")?;
    n.require_within(m, "N")?;
    Ok(product_span_dim(p, n) == m.dim())
}

/// Left multiplication by `x` on `L²(M)`, in the coordinates given by the
/// orthonormal basis of `M`.
fn left_regular(m: &EmbeddedSubalgebra, x: &Element) -> DMatrix<C64> {
    let a = m.ambient();
    let k = m.dim();
    let mut out = DMatrix::zeros(k, k);
    for (b, mb) in m.basis().iter().enumerate() {
        out.set_column(b, &m.coefficients(&x.mul(mb)));
    }
    let _ = a;
    out
}

/// Orthogonal projection of `L²(M)` onto `L²(B)`.
fn jones_matrix(m: &EmbeddedSubalgebra, b: &EmbeddedSubalgebra) -> DMatrix<C64> {
    let mut cb = DMatrix::zeros(m.dim(), b.dim());
    for (k, y) in b.basis().iter().enumerate() {
        cb.set_column(k, &m.coefficients(y));
    }
    &cb * cb.adjoint()
}

fn single(m: DMatrix<C64>) -> Element {
    Element { blocks: vec![m] }
}

#[derive(Clone, Debug, Serialize)]
pub struct BasicConstructionReport {
    pub l2_dim: usize,
    pub m1_dim: usize,
    pub jones_projection_rank: usize,
    /// `max ‖e L_x e − L_{E(x)} e‖` over a basis of `M`.
    pub compression_residual: f64,
    /// Dimension of `{x ∈ M : x e = e x}`.
    pub commutant_dim: usize,
    pub b_dim: usize,
    pub commutant_contains_b: bool,
    /// `b ↦ b e` is injective on `B`.
    pub injective: bool,
    /// Rank of `Σ x e x*` over the basis of `M`.
    pub support_rank: usize,
    pub lambda_b_m: Vec<Vec<u64>>,
    /// Rows follow the summands of `M`, columns are matched to the summands
    /// of `B`.
    pub lambda_m_m1: Vec<Vec<u64>>,
    pub transpose_law: bool,
    pub pass: bool,
}

/// `M₁ = ⟨M, e_B⟩` acting on `L²(M)`.
#[derive(Clone, Debug)]
pub struct BasicConstruction {
    m: EmbeddedSubalgebra,
    pub ambient: MultiMatrixAlgebra,
    pub m_image: EmbeddedSubalgebra,
    pub m1: EmbeddedSubalgebra,
    pub jones_projection: Element,
    pub e1: ExpectationMap,
    pub report: BasicConstructionReport,
}

impl BasicConstruction {
    /// Image of `x ∈ M` acting by left multiplication.
    pub fn left(&self, x: &Element) -> Element {
        single(left_regular(&self.m, x))
    }
}

fn match_index(target: &Element, candidates: &[Element]) -> Option<usize> {
    let (k, d) = candidates
        .iter()
        .enumerate()
        .map(|(k, y)| (k, target.sub(y).max_abs()))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))?;
    (d <= 1e-6).then_some(k)
}

pub fn basic_construction(m: &EmbeddedSubalgebra, b: &EmbeddedSubalgebra) -> Result<BasicConstruction> {
    b.require_within(m, "B")?;
    let k = m.dim();
    let ambient = MultiMatrixAlgebra::matrix(k)?;
    let e = jones_matrix(m, b);
    let ls: Vec<DMatrix<C64>> = m.basis().iter().map(|x| left_regular(m, x)).collect();
    let m_image = EmbeddedSubalgebra::from_span(&ambient, &ls.iter().cloned().map(single).collect::<Vec<_>>())?;
    let mut span: Vec<Element> = ls.iter().cloned().map(single).collect();
    for la in &ls {
        for lc in &ls {
            span.push(single(la * &e * lc));
        }
    }
    let m1 = EmbeddedSubalgebra::from_span(&ambient, &span)?;
    let e1 = expectation(&ambient, &m_image)?;

    let eb = expectation(m.ambient(), b)?;
    let compression_residual = m
        .basis()
        .iter()
        .zip(&ls)
        .map(|(x, lx)| {
            let lhs = &e * lx * &e;
            let rhs = left_regular(m, &eb.apply(x)) * &e;
            (lhs - rhs).camax()
        })
        .fold(0.0, f64::max);

    let mut comm = DMatrix::zeros(k * k, k);
    for (j, lx) in ls.iter().enumerate() {
        let cm = lx * &e - &e * lx;
        comm.set_column(j, &DVector::from_iterator(k * k, cm.iter().cloned()));
    }
    let commutant_dim = null_basis(&comm).ncols();
    let lb: Vec<DMatrix<C64>> = b.basis().iter().map(|y| left_regular(m, y)).collect();
    let commutant_contains_b = lb.iter().all(|l| (l * &e - &e * l).camax() <= 1e-8);
    let mut be = DMatrix::zeros(k * k, lb.len());
    for (j, l) in lb.iter().enumerate() {
        be.set_column(j, &DVector::from_iterator(k * k, (l * &e).iter().cloned()));
    }
    let injective = rank(&be) == b.dim();
    let support: DMatrix<C64> = ls.iter().fold(DMatrix::zeros(k, k), |acc, l| acc + l * &e * l.adjoint());
    let support_rank = rank(&support);

    let bm = inclusion_data(b, m)?;
    let mm1 = inclusion_data(&m_image, &m1)?;
    let m_match: Option<Vec<usize>> =
        bm.large.iter().map(|s| match_index(&single(left_regular(m, &s.projection)), &proj_list(&mm1.small))).collect();
    let e_el = single(e.clone());
    let b_targets: Vec<Element> = bm.small.iter().map(|s| single(left_regular(m, &s.projection) * &e)).collect();
    let b_match: Option<Vec<usize>> =
        mm1.large.iter().map(|s| match_index(&s.projection.mul(&e_el), &b_targets)).collect();
    let (lambda_m_m1, transpose_law) = match (m_match, b_match) {
        (Some(mj), Some(bi)) if is_permutation(&mj) && is_permutation(&bi) => {
            // column i of the result is the M₁ summand matched to B summand i
            let mut col_of_b = vec![0; bi.len()];
            for (z, &i) in bi.iter().enumerate() {
                col_of_b[i] = z;
            }
            let lam: Vec<Vec<u64>> = mj.iter().map(|&r| col_of_b.iter().map(|&z| mm1.matrix[r][z]).collect()).collect();
            let ok = (0..bm.small.len()).all(|i| (0..bm.large.len()).all(|j| lam[j][i] == bm.matrix[i][j]));
            (lam, ok)
        }
        _ => (mm1.matrix.clone(), false),
    };

    let l2_dim = k;
    let report_pass = compression_residual <= CLOSURE_TOL
        && commutant_dim == b.dim()
        && commutant_contains_b
        && injective
        && support_rank == k
        && transpose_law;
    let report = BasicConstructionReport {
        l2_dim,
        m1_dim: m1.dim(),
        jones_projection_rank: e.trace().re.round() as usize,
        compression_residual,
        commutant_dim,
        b_dim: b.dim(),
        commutant_contains_b,
        injective,
        support_rank,
        lambda_b_m: bm.matrix.clone(),
        lambda_m_m1,
        transpose_law,
        pass: report_pass,
    };
    Ok(BasicConstruction { m: m.clone(), ambient, m_image, m1, jones_projection: e_el, e1, report })
}

fn proj_list(s: &[Summand]) -> Vec<Element> {
    s.iter().map(|x| x.projection.clone()).collect()
}

fn is_permutation(v: &[usize]) -> bool {
    let mut seen = vec![false; v.len()];
    v.iter().all(|&i| i < v.len() && !std::mem::replace(&mut seen[i], true))
}

/// Positive part of `a^{-1/2}` on the support of a positive `a`, together
/// with the eigenvalues that fell in the ambiguous band between noise and
/// the pivot threshold.
fn inv_sqrt(a: &Element, noise: f64, pivot: f64) -> (Element, bool) {
    let mut ambiguous = false;
    let blocks = a
        .blocks
        .iter()
        .map(|b| {
            let h = (b + b.adjoint()) * c(0.5);
            let se = h.symmetric_eigen();
            let n = b.nrows();
            let mut out = DMatrix::zeros(n, n);
            for k in 0..n {
                let l = se.eigenvalues[k];
                if l > pivot {
                    let v = se.eigenvectors.column(k);
                    out += v * v.adjoint() * c(1.0 / l.sqrt());
                } else if l > noise {
                    ambiguous = true;
                }
            }
            out
        })
        .collect();
    (Element { blocks }, ambiguous)
}

/// Largest eigenvalue of a Hermitian positive semidefinite matrix by power
/// iteration, confirmed by a dense eigensolver.
fn psd_top_eigenvalue(h: &DMatrix<C64>) -> Result<f64> {
    let n = h.nrows();
    let dense = h.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut v = DVector::from_element(n, c(1.0));
    // a deterministic generic start avoids starting orthogonal to the top space
    for k in 0..n {
        v[k] += c(0.1 * (k as f64 + 1.0).sqrt());
    }
    v /= c(v.norm());
    let mut rho = 0.0;
    for _ in 0..100_000 {
        let w = h * &v;
        rho = v.dotc(&w).re;
        let r = (&w - &v * c(rho)).norm();
        let wn = w.norm();
        if wn == 0.0 {
            rho = 0.0;
            break;
        }
        v = w / c(wn);
        if r <= 1e-13 * rho.abs().max(1.0) {
            break;
        }
    }
    if (rho - dense).abs() > 1e-8 * dense.abs().max(1.0) {
        return Err(Error::CrossCheck { iterative: rho, lo: dense, hi: dense });
    }
    Ok(rho)
}

/// An orthonormal basis of `M` over `B` for the expectation `E_B`.
#[derive(Clone, Debug, Serialize)]
pub struct OrthonormalBasis {
    pub elements: Vec<Element>,
    /// `‖Σ m_j m_j*‖`.
    pub ind_ob: f64,
    /// `max ‖E(m_i* m_j) − δ_ij p_i‖` with `p_i` a projection.
    pub orthonormality_residual: f64,
    /// `‖Σ m_j e m_j* − 1‖` on `L²(M)`.
    pub reconstruction_residual: f64,
}

pub fn orthonormal_basis(m: &EmbeddedSubalgebra, e: &ExpectationMap, seed: u64) -> Result<OrthonormalBasis> {
    let b = e.target();
    b.require_within(m, "B")?;
    let a = m.ambient();
    let mut candidates = if m.dim() == a.dim() { a.matrix_units() } else { m.basis().to_vec() };
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut ob: Vec<Element> = Vec::new();
    for x in &candidates {
        let mut y = x.clone();
        for mj in &ob {
            y = y.sub(&mj.mul(&e.apply(&mj.adjoint().mul(x))));
        }
        let pivot = e.apply(&y.adjoint().mul(&y));
        let scale = x.op_norm().powi(2).max(f64::MIN_POSITIVE);
        let (r, ambiguous) = inv_sqrt(&pivot, 1e-12 * scale, 1e-10 * scale);
        if ambiguous {
            return Err(Error::RankDeficiency(format!(
                "pivot eigenvalue between {:e} and {:e}",
                1e-12 * scale,
                1e-10 * scale
            )));
        }
        if r.max_abs() == 0.0 {
            continue;
        }
        ob.push(y.mul(&r));
    }

    let mut orthonormality_residual = 0.0f64;
    for (i, mi) in ob.iter().enumerate() {
        for (j, mj) in ob.iter().enumerate() {
            let g = e.apply(&mi.adjoint().mul(mj));
            let r = if i == j { g.mul(&g).sub(&g).max_abs().max(g.sub(&g.adjoint()).max_abs()) } else { g.max_abs() };
            orthonormality_residual = orthonormality_residual.max(r);
        }
    }
    let k = m.dim();
    let jp = jones_matrix(m, b);
    let sum = ob.iter().fold(DMatrix::zeros(k, k), |acc, x| {
        let l = left_regular(m, x);
        acc + &l * &jp * l.adjoint()
    });
    let reconstruction_residual = (sum - DMatrix::identity(k, k)).camax();

    let z = ob.iter().fold(a.zero(), |acc, x| acc.add(&x.mul(&x.adjoint())));
    let ind_ob = z.blocks.iter().map(psd_top_eigenvalue).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    Ok(OrthonormalBasis { elements: ob, ind_ob, orthonormality_residual, reconstruction_residual })
}

/// `‖Σ m_j m_j*‖` for an orthonormal basis built in the order given by
/// `seed`.
pub fn index_via_ob(m: &EmbeddedSubalgebra, e: &ExpectationMap, seed: u64) -> Result<f64> {
    Ok(orthonormal_basis(m, e, seed)?.ind_ob)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMethod {
    /// Minimal projections from top eigenspaces of random self-adjoint
    /// elements.
    BruteforceRank1,
    /// Unit vectors on a regular angular grid, for small blocks of a full
    /// ambient algebra.
    Grid,
}

impl IndexMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bruteforce_rank1" | "bruteforce" => Ok(IndexMethod::BruteforceRank1),
            "grid" => Ok(IndexMethod::Grid),
            other => Err(Error::InvalidParameter(format!("unknown index method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexRegime {
    /// Every multiplicity is at most the size of the corresponding summand
    /// of `B`, so `1/λ(E) = ‖Σ m_j m_j*‖` is expected.
    Equality,
    Inequality,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticOptions {
    pub samples: usize,
    pub refine_rounds: usize,
    /// Grid resolution per angle.
    pub grid_steps: usize,
    pub seed: u64,
}

impl Default for ProbabilisticOptions {
    fn default() -> Self {
        ProbabilisticOptions { samples: 10_000, refine_rounds: 30, grid_steps: 24, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

impl Bracket {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.lower - tol <= x && x <= self.upper + tol
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexReport {
    pub ind_ob: f64,
    /// Sampled estimate of `λ(E)`: the smallest constant found.
    #[serde(rename = "lambda_E")]
    pub lambda_e: f64,
    /// `[1/ind_ob, lambda_E]`, which contains `λ(E)`.
    #[serde(rename = "lambda_E_bracket")]
    pub lambda_e_bracket: Bracket,
    pub ob_size: usize,
    pub regime: IndexRegime,
    pub samples: usize,
    /// `1 ≤ 1/λ ≤ ind_ob ≤ 1/λ²` at the sampled estimate.
    pub chain_holds: bool,
}

/// Largest `c` with `E(p) ≥ c p`.
fn best_constant(e: &ExpectationMap, p: &Element) -> f64 {
    let a = e.apply(p);
    let scale = a.op_norm().max(f64::MIN_POSITIVE);
    let (r, _) = inv_sqrt(&a, 1e-13 * scale, 1e-13 * scale);
    let x = r.mul(p).mul(&r);
    let top = x
        .blocks
        .iter()
        .map(|b| ((b + b.adjoint()) * c(0.5)).symmetric_eigen().eigenvalues.iter().cloned().fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if top > 0.0 {
        1.0 / top
    } else {
        f64::INFINITY
    }
}

fn top_projection(h: &Element) -> Element {
    spectral_projections(h, 1e-9).pop().expect("nonempty spectrum")
}

fn grid_vectors(n: usize, steps: usize) -> Result<Vec<DVector<C64>>> {
    let angle = |k: usize, range: f64| range * k as f64 / steps as f64;
    let half = std::f64::consts::FRAC_PI_2;
    let full = 2.0 * std::f64::consts::PI;
    let mut out = Vec::new();
    match n {
        1 => out.push(DVector::from_element(1, c(1.0))),
        2 => {
            for a in 0..=steps {
                for b in 0..steps {
                    let (t, f) = (angle(a, half), angle(b, full));
                    out.push(DVector::from_vec(vec![c(t.cos()), C64::from_polar(t.sin(), f)]));
                }
            }
        }
        3 => {
            for a in 0..=steps {
                for a2 in 0..=steps {
                    for b in 0..steps {
                        for b2 in 0..steps {
                            let (t, t2) = (angle(a, half), angle(a2, half));
                            let (f, f2) = (angle(b, full), angle(b2, full));
                            out.push(DVector::from_vec(vec![
                                c(t.cos()),
                                C64::from_polar(t.sin() * t2.cos(), f),
                                C64::from_polar(t.sin() * t2.sin(), f2),
                            ]));
                        }
                    }
                }
            }
        }
        _ => return Err(Error::InvalidParameter(format!("grid method supports blocks of size at most 3, got {n}"))),
    }
    Ok(out)
}

/// Brackets `λ(E) = sup{c : E(x) ≥ c x for x ≥ 0}` by minimizing the best
/// constant over sampled minimal projections of `M`. The result is a
/// sampling bracket, not a certificate.
pub fn probabilistic_index(
    m: &EmbeddedSubalgebra,
    e: &ExpectationMap,
    method: IndexMethod,
    opts: &ProbabilisticOptions,
) -> Result<IndexReport> {
    let ob = orthonormal_basis(m, e, opts.seed)?;
    let a = m.ambient();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut best = f64::INFINITY;
    let mut best_h: Option<Element> = None;
    let mut samples = 0;
    let consider = |h: Element, best: &mut f64, best_h: &mut Option<Element>| {
        let cst = best_constant(e, &top_projection(&h));
        if cst < *best {
            *best = cst;
            *best_h = Some(h);
        }
    };
    match method {
        IndexMethod::BruteforceRank1 => {
            for _ in 0..opts.samples {
                consider(m.random_self_adjoint(&mut rng), &mut best, &mut best_h);
                samples += 1;
            }
        }
        IndexMethod::Grid => {
            if m.dim() != a.dim() {
                return Err(Error::InvalidParameter("grid method needs M to be the full ambient algebra".into()));
            }
            for (i, &n) in a.block_sizes().iter().enumerate() {
                for v in grid_vectors(n, opts.grid_steps.max(1))? {
                    let mut p = a.zero();
                    p.blocks[i] = &v * v.adjoint();
                    consider(p, &mut best, &mut best_h);
                    samples += 1;
                }
            }
        }
    }
    if let Some(mut h) = best_h.clone() {
        let mut step = 0.5;
        for _ in 0..opts.refine_rounds {
            for _ in 0..20 {
                let trial = h.add(&m.random_self_adjoint(&mut rng).scale(c(step)));
                let cst = best_constant(e, &top_projection(&trial));
                if cst < best {
                    best = cst;
                    h = trial;
                }
            }
            step *= 0.5;
        }
    }
    let bm = inclusion_data(e.target(), m)?;
    let regime = if bm.small.iter().zip(&bm.matrix).all(|(s, row)| row.iter().all(|&x| x <= s.size as u64)) {
        IndexRegime::Equality
    } else {
        IndexRegime::Inequality
    };
    let inv = 1.0 / best;
    let slack = 1e-8 * ob.ind_ob.max(1.0);
    let chain_holds = 1.0 <= inv + slack && inv <= ob.ind_ob + slack && ob.ind_ob <= inv * inv + slack;
    Ok(IndexReport {
        ind_ob: ob.ind_ob,
        lambda_e: best,
        lambda_e_bracket: Bracket { lower: 1.0 / ob.ind_ob, upper: best },
        ob_size: ob.elements.len(),
        regime,
        samples,
        chain_holds,
    })
}

/// An ambient algebra with named subalgebras.
#[derive(Clone, Debug)]
pub struct Scene {
    pub ambient: MultiMatrixAlgebra,
    pub roles: BTreeMap<String, EmbeddedSubalgebra>,
    pub lambda_inv: Option<Scalar>,
}

impl Scene {
    /// The subalgebra with this role. `M` and `P11` default to the ambient
    /// algebra.
    pub fn role(&self, name: &str) -> Result<EmbeddedSubalgebra> {
        match self.roles.get(name) {
            Some(a) => Ok(a.clone()),
            None if name == "M" || name == "P11" => Ok(EmbeddedSubalgebra::full(&self.ambient)),
            None => Err(Error::InvalidScene(format!("scene has no subalgebra `{name}`"))),
        }
    }
}
