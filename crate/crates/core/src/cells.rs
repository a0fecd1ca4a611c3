//! Markov cells: finite-dimensional non-degenerate commuting squares
//!
//! ```text
//! P10 ⊂ P11
//!  ∪     ∪
//! P00 ⊂ P01
//! ```
//!
//! with Markov rows, and the index of the hyperfinite subfactor they
//! generate.

use serde::Serialize;

use crate::algebra::{commuting_square_check, inclusion_data, product_span_dim, EmbeddedSubalgebra, InclusionData, Scene};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::io::parse_scene_json;
use crate::scalar::Scalar;
use crate::spectral::{jones_spectrum_member, norm_squared, verify_markov, SpectrumVerdict, DEFAULT_SPECTRUM_TOL};
use crate::tower::{build_tower, BratteliTower, MarkovWeightedGraph};

#[derive(Clone, Debug)]
pub struct MarkovCell {
    pub scene: Scene,
    pub p00: EmbeddedSubalgebra,
    pub p01: EmbeddedSubalgebra,
    pub p10: EmbeddedSubalgebra,
    pub p11: EmbeddedSubalgebra,
    pub lambda_inv: Scalar,
}

impl MarkovCell {
    /// Reads the roles `P00`, `P01`, `P10` (and optionally `P11`, which
    /// defaults to the ambient algebra) and `lambda_inv` from a scene.
    pub fn from_scene(scene: Scene) -> Result<Self> {
        let lambda_inv = scene
            .lambda_inv
            .clone()
            .ok_or_else(|| Error::InvalidScene("cell needs lambda_inv".into()))?;
        let (p00, p01, p10, p11) = (scene.role("P00")?, scene.role("P01")?, scene.role("P10")?, scene.role("P11")?);
        for (small, large, what) in [(&p00, &p01, "P00 ⊂ P01"), (&p00, &p10, "P00 ⊂ P10"), (&p01, &p11, "P01 ⊂ P11"), (&p10, &p11, "P10 ⊂ P11")]
        {
            if !small.is_subalgebra_of(large, 1e-8) {
                return Err(Error::InvalidScene(format!("{what} fails")));
            }
        }
        Ok(MarkovCell { scene, p00, p01, p10, p11, lambda_inv })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_scene(parse_scene_json(text)?)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellCertificate {
    /// `E_{P01} E_{P10} = E_{P10} E_{P01} = E_{P00}`.
    pub csq_ok: bool,
    /// `span(P01 P10) = P11`.
    pub nondegenerate_ok: bool,
    pub rows_markov_ok: bool,
    pub graphs_irreducible_ok: bool,
    pub vertical_graph: BipartiteGraph,
    pub subfactor_index: f64,
    pub csq_residual: f64,
    pub intersection_dim: usize,
    pub row_markov_residuals: [f64; 2],
    /// Markov residuals of the two vertical inclusions at
    /// `λ⁻¹ = subfactor_index`. Reported, not required.
    pub vertical_markov_residuals: [f64; 2],
    pub jones_verdict: SpectrumVerdict,
}

impl CellCertificate {
    pub fn verified(&self) -> bool {
        self.csq_ok && self.nondegenerate_ok && self.rows_markov_ok && self.graphs_irreducible_ok
    }
}

/// Minimal-projection traces of the larger algebra, as weights on the even
/// vertices of the inclusion graph.
fn large_weights(d: &InclusionData) -> Vec<Scalar> {
    d.large.iter().map(|s| Scalar::Float(s.minimal_trace)).collect()
}

fn markov_residual(d: &InclusionData, lambda_inv: &Scalar, tol: f64) -> Result<(f64, bool)> {
    let g = d.graph("q", "p")?;
    let r = verify_markov(&g, &large_weights(d), lambda_inv, tol)?;
    Ok((r.residual, r.pass))
}

pub fn verify_cell(cell: &MarkovCell, tol: f64) -> Result<CellCertificate> {
    let csq = commuting_square_check(&cell.p11, &cell.p01, &cell.p10, tol)?;
    let csq_ok = csq.is_csq && csq.q_dim == cell.p00.dim();
    let nondegenerate_ok = product_span_dim(&cell.p01, &cell.p10) == cell.p11.dim();

    let lower = inclusion_data(&cell.p00, &cell.p01)?;
    let upper = inclusion_data(&cell.p10, &cell.p11)?;
    let (r_lower, ok_lower) = markov_residual(&lower, &cell.lambda_inv, tol)?;
    let (r_upper, ok_upper) = markov_residual(&upper, &cell.lambda_inv, tol)?;
    let graphs_irreducible_ok = lower.graph("q", "p")?.is_connected() && upper.graph("q", "p")?.is_connected();

    let left = inclusion_data(&cell.p00, &cell.p10)?;
    let right = inclusion_data(&cell.p01, &cell.p11)?;
    let vertical_graph = left.graph("p00_", "p10_")?;
    let subfactor_index = norm_squared(&vertical_graph, tol.min(1e-12))?;
    let index = Scalar::Float(subfactor_index);
    let (v_left, _) = markov_residual(&left, &index, tol)?;
    let (v_right, _) = markov_residual(&right, &index, tol)?;

    Ok(CellCertificate {
        csq_ok,
        nondegenerate_ok,
        rows_markov_ok: ok_lower && ok_upper,
        graphs_irreducible_ok,
        vertical_graph,
        subfactor_index,
        csq_residual: csq.residual_pn.max(csq.residual_np),
        intersection_dim: csq.q_dim,
        row_markov_residuals: [r_lower, r_upper],
        vertical_markov_residuals: [v_left, v_right],
        jones_verdict: jones_spectrum_member(subfactor_index, DEFAULT_SPECTRUM_TOL),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CellTowerPreview {
    /// Tower over `P00 ⊂ P01`.
    pub lower: BratteliTower,
    /// Tower over `P10 ⊂ P11`.
    pub upper: BratteliTower,
    /// `‖Λ_{P00⊂P01}‖², ‖Λ_{P10⊂P11}‖²`.
    pub row_norms_squared: [f64; 2],
    /// `‖Λ_{P00⊂P10}‖², ‖Λ_{P01⊂P11}‖²`.
    pub vertical_norms_squared: [f64; 2],
    pub rows_match: bool,
    pub verticals_match: bool,
    /// `Λ_{P00⊂P10} Λ_{P10⊂P11}` as a matrix product.
    pub composition_via_p10: Vec<Vec<u64>>,
    /// `Λ_{P00⊂P01} Λ_{P01⊂P11}`.
    pub composition_via_p01: Vec<Vec<u64>>,
    pub composition_ok: bool,
}

fn row_tower(d: &InclusionData, lambda_inv: &Scalar, depth: usize, tol: f64) -> Result<BratteliTower> {
    let g = d.graph("q", "p")?;
    let base = g.even_labels()[0].clone();
    let m = MarkovWeightedGraph::new(g, large_weights(d), lambda_inv.clone(), &base, tol)?;
    build_tower(&m, depth)
}

/// Graph-level towers of both rows of a verified cell, with the norm and
/// composition identities between the four inclusion graphs.
pub fn cell_tower_preview(cell: &MarkovCell, depth: usize, tol: f64) -> Result<CellTowerPreview> {
    let cert = verify_cell(cell, tol)?;
    if !cert.verified() {
        return Err(Error::UnverifiedCell(format!(
            "csq {}, nondegenerate {}, rows Markov {}, irreducible {}",
            cert.csq_ok, cert.nondegenerate_ok, cert.rows_markov_ok, cert.graphs_irreducible_ok
        )));
    }
    let lower = inclusion_data(&cell.p00, &cell.p01)?;
    let upper = inclusion_data(&cell.p10, &cell.p11)?;
    let left = inclusion_data(&cell.p00, &cell.p10)?;
    let right = inclusion_data(&cell.p01, &cell.p11)?;
    let ns = |d: &InclusionData| -> Result<f64> { norm_squared(&d.graph("q", "p")?, tol.min(1e-12)) };
    let row_norms_squared = [ns(&lower)?, ns(&upper)?];
    let vertical_norms_squared = [ns(&left)?, ns(&right)?];
    let close = |a: f64, b: f64| (a.sqrt() - b.sqrt()).abs() <= 2.0 * tol;
    let composition_via_p10 = left.graph("a", "b")?.compose(&upper.graph("a", "b")?)?;
    let composition_via_p01 = lower.graph("a", "b")?.compose(&right.graph("a", "b")?)?;
    Ok(CellTowerPreview {
        lower: row_tower(&lower, &cell.lambda_inv, depth, tol)?,
        upper: row_tower(&upper, &cell.lambda_inv, depth, tol)?,
        row_norms_squared,
        vertical_norms_squared,
        rows_match: close(row_norms_squared[0], row_norms_squared[1]),
        verticals_match: close(vertical_norms_squared[0], vertical_norms_squared[1]),
        composition_ok: composition_via_p10 == composition_via_p01,
        composition_via_p10,
        composition_via_p01,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::tests::{diag2, fourier_diag2, m2};
    use std::collections::BTreeMap;

    fn cell(p00: EmbeddedSubalgebra, p01: EmbeddedSubalgebra, p10: EmbeddedSubalgebra, lambda_inv: i64) -> MarkovCell {
        let a = m2();
        let mut roles = BTreeMap::new();
        roles.insert("P00".to_string(), p00);
        roles.insert("P01".to_string(), p01);
        roles.insert("P10".to_string(), p10);
        MarkovCell::from_scene(Scene { ambient: a, roles, lambda_inv: Some(Scalar::int(lambda_inv)) }).unwrap()
    }

    #[test]
    fn spin_cell() {
        let a = m2();
        let c = cell(EmbeddedSubalgebra::scalars(&a), diag2(&a), fourier_diag2(&a), 2);
        let cert = verify_cell(&c, 1e-10).unwrap();
        assert!(cert.verified(), "{cert:?}");
        assert_eq!(cert.vertical_graph.matrix_u64(), vec![vec![1, 1]]);
        assert!((cert.subfactor_index - 2.0).abs() < 1e-9);
        assert!(cert.vertical_markov_residuals.iter().all(|r| *r < 1e-9));
        let pv = cell_tower_preview(&c, 4, 1e-10).unwrap();
        assert!(pv.rows_match && pv.verticals_match && pv.composition_ok);
        assert_eq!(pv.composition_via_p10, vec![vec![2]]);
        assert_eq!(pv.lower.total_dims()[2], 2.into());
    }

    #[test]
    fn degenerate_cells() {
        let a = m2();
        let c = cell(diag2(&a), diag2(&a), diag2(&a), 2);
        let cert = verify_cell(&c, 1e-10).unwrap();
        assert!(cert.csq_ok);
        assert!(!cert.nondegenerate_ok);
        assert!(cell_tower_preview(&c, 3, 1e-10).is_err());

        let full = EmbeddedSubalgebra::full(&a);
        let c = cell(full.clone(), full.clone(), full, 1);
        let cert = verify_cell(&c, 1e-10).unwrap();
        assert!(cert.verified());
        assert_eq!(cert.vertical_graph.matrix_u64(), vec![vec![1]]);
        assert!((cert.subfactor_index - 1.0).abs() < 1e-12);
        let pv = cell_tower_preview(&c, 3, 1e-10).unwrap();
        assert!(pv.row_norms_squared.iter().chain(&pv.vertical_norms_squared).all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_nesting() {
        let a = m2();
        let mut roles = BTreeMap::new();
        roles.insert("P00".to_string(), diag2(&a));
        roles.insert("P01".to_string(), EmbeddedSubalgebra::scalars(&a));
        roles.insert("P10".to_string(), diag2(&a));
        let s = Scene { ambient: a, roles, lambda_inv: Some(Scalar::int(2)) };
        assert!(MarkovCell::from_scene(s).is_err());
    }
}
