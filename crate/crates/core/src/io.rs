//! JSON file formats and input fingerprints.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use nalgebra::DMatrix;

use crate::algebra::{Element, EmbeddedSubalgebra, MultiMatrixAlgebra, Scene, C64};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::scalar::{scalar_from_json, Scalar};

pub fn fingerprint_bytes(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn fingerprint_str(s: &str) -> String {
    fingerprint_bytes(s.as_bytes())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    odd: Vec<String>,
    even: Vec<String>,
    edges: Vec<(String, String, u64)>,
    #[serde(default)]
    weights: Option<BTreeMap<String, serde_json::Value>>,
    #[serde(default)]
    lambda_inv: Option<serde_json::Value>,
}

/// Contents of a graph file.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphData {
    pub graph: BipartiteGraph,
    /// Weights in even-label order.
    pub weights: Option<Vec<Scalar>>,
    pub lambda_inv: Option<Scalar>,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse(format!("line {} column {}: {e}", e.line(), e.column()))
}

pub fn parse_graph_json(text: &str) -> Result<GraphData> {
    let file: GraphFile = serde_json::from_str(text).map_err(parse_error)?;
    let mut mult = vec![vec![0u64; file.even.len()]; file.odd.len()];
    let odd_pos: BTreeMap<&str, usize> = file.odd.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    let even_pos: BTreeMap<&str, usize> = file.even.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    for (k, (o, e, m)) in file.edges.iter().enumerate() {
        let i = *odd_pos.get(o.as_str()).ok_or_else(|| Error::Parse(format!("edges[{k}]: unknown odd vertex `{o}`")))?;
        let j = *even_pos.get(e.as_str()).ok_or_else(|| Error::Parse(format!("edges[{k}]: unknown even vertex `{e}`")))?;
        mult[i][j] = mult[i][j]
            .checked_add(*m)
            .ok_or(Error::MultiplicityOverflow(u64::MAX))?;
    }
    let graph = BipartiteGraph::new(file.odd.clone(), file.even.clone(), mult)?;
    let weights = match file.weights {
        None => None,
        Some(map) => {
            let mut out = Vec::with_capacity(file.even.len());
            for label in &file.even {
                let v = map.get(label).ok_or_else(|| Error::Parse(format!("weights: missing even vertex `{label}`")))?;
                let s = scalar_from_json(v).map_err(|e| Error::Parse(format!("weights.{label}: {e}")))?;
                if !s.is_positive() {
                    return Err(Error::NonPositiveWeight(label.clone()));
                }
                out.push(s);
            }
            if let Some(extra) = map.keys().find(|k| !even_pos.contains_key(k.as_str())) {
                return Err(Error::Parse(format!("weights: unknown even vertex `{extra}`")));
            }
            Some(out)
        }
    };
    let lambda_inv = match file.lambda_inv {
        None => None,
        Some(v) => {
            let s = scalar_from_json(&v).map_err(|e| Error::Parse(format!("lambda_inv: {e}")))?;
            if !s.is_positive() {
                return Err(Error::InvalidParameter("lambda_inv must be positive".into()));
            }
            Some(s)
        }
    };
    Ok(GraphData { graph, weights, lambda_inv })
}

struct OrderedWeights<'a> {
    labels: &'a [String],
    weights: &'a [Scalar],
}

impl Serialize for OrderedWeights<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.labels.len()))?;
        for (l, w) in self.labels.iter().zip(self.weights) {
            map.serialize_entry(l, w)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct GraphOut<'a> {
    odd: &'a [String],
    even: &'a [String],
    edges: Vec<(&'a str, &'a str, u32)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<OrderedWeights<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_inv: Option<&'a Scalar>,
}

/// Canonical compact serialization: labels in stored order, edges in
/// row-major order, weights keyed in even-label order.
pub fn graph_to_json(g: &BipartiteGraph, weights: Option<&[Scalar]>, lambda_inv: Option<&Scalar>) -> String {
    let mut edges = Vec::new();
    for (i, row) in g.rows().iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            if b != 0 {
                edges.push((g.odd_labels()[i].as_str(), g.even_labels()[j].as_str(), b));
            }
        }
    }
    let out = GraphOut {
        odd: g.odd_labels(),
        even: g.even_labels(),
        edges,
        weights: weights.map(|w| OrderedWeights { labels: g.even_labels(), weights: w }),
        lambda_inv,
    };
    serde_json::to_string(&out).expect("graph serialization cannot fail")
}

/// Role names accepted in scene and cell files.
pub const SCENE_ROLES: [&str; 9] = ["M", "N", "P", "Q", "B", "P00", "P01", "P10", "P11"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmbientFile {
    block_sizes: Vec<usize>,
    trace_weights: Vec<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    ambient: AmbientFile,
    subalgebras: BTreeMap<String, Vec<Vec<Vec<Vec<serde_json::Value>>>>>,
    #[serde(default)]
    lambda_inv: Option<serde_json::Value>,
}

fn entry_from_json(v: &serde_json::Value) -> Result<C64> {
    match v {
        serde_json::Value::Array(parts) if parts.len() == 2 => {
            Ok(C64::new(scalar_from_json(&parts[0])?.to_f64(), scalar_from_json(&parts[1])?.to_f64()))
        }
        serde_json::Value::Array(_) => Err(Error::Parse("complex entries are [re, im]".into())),
        other => Ok(C64::new(scalar_from_json(other)?.to_f64(), 0.0)),
    }
}

/// Scene file: ambient block sizes and trace weights, subalgebras by role as
/// spanning lists of elements. An element is a list of blocks, a block a list
/// of rows, and an entry a number, a rational or decimal string, or
/// `[re, im]`.
pub fn parse_scene_json(text: &str) -> Result<Scene> {
    let file: SceneFile = serde_json::from_str(text).map_err(parse_error)?;
    let weights = file
        .ambient
        .trace_weights
        .iter()
        .enumerate()
        .map(|(k, v)| scalar_from_json(v).map_err(|e| Error::Parse(format!("ambient.trace_weights[{k}]: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let ambient = MultiMatrixAlgebra::new(file.ambient.block_sizes, weights)?;
    let mut roles = BTreeMap::new();
    for (role, elements) in &file.subalgebras {
        if !SCENE_ROLES.contains(&role.as_str()) {
            return Err(Error::InvalidScene(format!("unknown role `{role}`")));
        }
        let mut xs = Vec::with_capacity(elements.len());
        for (e, blocks) in elements.iter().enumerate() {
            let mut bs = Vec::with_capacity(blocks.len());
            for (b, rows) in blocks.iter().enumerate() {
                let n = rows.len();
                let mut m = DMatrix::zeros(n, n);
                for (r, row) in rows.iter().enumerate() {
                    if row.len() != n {
                        return Err(Error::InvalidScene(format!("{role}[{e}] block {b} is not square")));
                    }
                    for (k, v) in row.iter().enumerate() {
                        m[(r, k)] = entry_from_json(v).map_err(|err| Error::Parse(format!("{role}[{e}][{b}][{r}][{k}]: {err}")))?;
                    }
                }
                bs.push(m);
            }
            let x = Element::from_blocks(bs);
            ambient.check_element(&x).map_err(|err| Error::InvalidScene(format!("{role}[{e}]: {err}")))?;
            xs.push(x);
        }
        let sub = EmbeddedSubalgebra::from_span(&ambient, &xs).map_err(|err| Error::InvalidScene(format!("{role}: {err}")))?;
        roles.insert(role.clone(), sub);
    }
    let lambda_inv = match file.lambda_inv {
        None => None,
        Some(v) => {
            let s = scalar_from_json(&v).map_err(|e| Error::Parse(format!("lambda_inv: {e}")))?;
            if !s.is_positive() {
                return Err(Error::InvalidParameter("lambda_inv must be positive".into()));
            }
            Some(s)
        }
    };
    Ok(Scene { ambient, roles, lambda_inv })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let d = parse_graph_json(r#"{"odd":["i"],"even":["j"],"edges":[["i","j",1]]}"#).unwrap();
        assert_eq!(d.graph.matrix_u64(), vec![vec![1]]);
        assert!(d.weights.is_none());
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let text = r#"{"odd":["i0"],"even":["a","b"],"edges":[["i0","a",1],["i0","b",1]],"weights":{"a":1,"b":1},"lambda_inv":2}"#;
        let d = parse_graph_json(text).unwrap();
        let out = graph_to_json(&d.graph, d.weights.as_deref(), d.lambda_inv.as_ref());
        assert_eq!(out, text);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_graph_json(r#"{"odd":["i"],"even":["j","k"],"edges":[["i","j",1]]}"#).is_err());
        assert!(parse_graph_json(r#"{"odd":["i"],"even":["j"],"edges":[["i","j",1]],"extra":1}"#).is_err());
        assert!(parse_graph_json(r#"{"odd":["i"],"even":["j"],"edges":[["i","x",1]]}"#).is_err());
        assert!(parse_graph_json(r#"{"odd":["i"],"even":["j"],"edges":[["i","j",1]],"weights":{"j":0}}"#).is_err());
    }

    #[test]
    fn scene_file() {
        let text = r#"{"ambient":{"block_sizes":[2],"trace_weights":["1/2"]},
            "subalgebras":{"P":[[[[1,0],[0,0]]],[[[0,0],[0,"1"]]]],
                           "N":[[[["0.5",0.5],[0.5,0.5]]],[[[0.5,-0.5],[-0.5,[0.5,0]]]]]},
            "lambda_inv":2}"#;
        let s = parse_scene_json(text).unwrap();
        assert_eq!(s.role("P").unwrap().dim(), 2);
        assert_eq!(s.role("N").unwrap().dim(), 2);
        assert_eq!(s.role("M").unwrap().dim(), 4);
        assert!(s.role("B").is_err());
        assert_eq!(s.lambda_inv, Some(Scalar::int(2)));
    }

    #[test]
    fn scene_errors() {
        let bad_sum = r#"{"ambient":{"block_sizes":[2],"trace_weights":["1/3"]},"subalgebras":{}}"#;
        assert!(matches!(parse_scene_json(bad_sum), Err(Error::InvalidScene(_))));
        let bad_role = r#"{"ambient":{"block_sizes":[1],"trace_weights":[1]},"subalgebras":{"X":[[[[1]]]]}}"#;
        assert!(parse_scene_json(bad_role).is_err());
        let not_unital = r#"{"ambient":{"block_sizes":[2],"trace_weights":["1/2"]},"subalgebras":{"P":[[[[1,0],[0,0]]]]}}"#;
        assert!(parse_scene_json(not_unital).is_err());
        assert!(parse_scene_json("{").is_err());
    }

    #[test]
    fn fingerprint_is_sha256() {
        assert_eq!(
            fingerprint_str("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
