use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use subspec_core::algebra::{
    basic_construction, expectation, probabilistic_index, IndexMethod, ProbabilisticOptions, Scene,
};
use subspec_core::cells::{cell_tower_preview, verify_cell, MarkovCell};
use subspec_core::espec::{classify, enumerate, membership_query, EnumBounds, MembershipOutcome, DEFAULT_CAP};
use subspec_core::folner::{
    certificate_check, interval_search, norm_bound_from_certificate, spectral_cut_search, CutOptions, CutTarget,
    SearchOutcome, WeightedFiniteGraph,
};
use subspec_core::io::{fingerprint_bytes, parse_graph_json, parse_scene_json, GraphData};
use subspec_core::scalar::{parse_rational, Scalar};
use subspec_core::spectral::{
    jones_spectrum_member, markov_weight_tol, norm_report, perron, verify_markov, DEFAULT_SPECTRUM_TOL, DEFAULT_TOL,
};
use subspec_core::tlj::{a_inf_couplings, a_inf_diagnostic, jones_poly, locally_trivial_couplings, positivity_horizon, values};
use subspec_core::tower::{build_tower, growth_rate, MarkovWeightedGraph, MARKOV_TOL};
use subspec_core::{Builtin, Error, LazyWeightedGraph, VertexSet, WeightedEvenGraph, VERSION};

/// Combinatorics of subfactor inclusions: graph norms, Markov traces,
/// Jones towers, commuting squares, Folner certificates and norm atlases.
#[derive(Parser)]
#[command(name = "subspec", version)]
struct Cli {
    /// Also print a short human-readable summary to stderr.
    #[arg(long, global = true)]
    human: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Square norm ‖Λ‖² of a bipartite graph.
    Norm {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Perron eigenpair of ΛᵗΛ, or of a symmetric matrix file.
    Perron {
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        graph: Option<PathBuf>,
        /// JSON array of rows.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Verifies the weights in a graph file, or computes Markov weights.
    Markov {
        #[arg(long)]
        graph: PathBuf,
        /// Even vertex normalized to weight 1; defaults to the first.
        #[arg(long)]
        basepoint: Option<String>,
        #[arg(long, default_value_t = MARKOV_TOL)]
        tol: f64,
    },
    /// Graph-level Jones tower.
    Tower {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long)]
        basepoint: Option<String>,
        #[arg(long, default_value_t = MARKOV_TOL)]
        tol: f64,
    },
    /// Temperley-Lieb-Jones polynomials at λ and their positivity horizon.
    Tlj {
        #[arg(long)]
        lambda: String,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Coupling sequences on the half line or the two-sided line.
    Couplings {
        #[arg(long)]
        lambda: String,
        #[arg(long, value_parser = ["a-inf", "locally-trivial", "diagnostic"], default_value = "a-inf")]
        mode: String,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Searches for a Folner set.
    FolnerSearch {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_parser = ["spectral", "interval"], default_value = "spectral")]
        method: String,
        #[arg(long, default_value_t = 10_000)]
        max_size: usize,
    },
    /// Checks a proposed Folner set.
    FolnerCheck {
        #[command(flatten)]
        target: Target,
        /// `a..b` for an integer interval, or a comma-separated list.
        #[arg(long)]
        set: String,
        #[arg(long)]
        epsilon: f64,
    },
    /// Verifies a Markov cell.
    CellVerify {
        #[arg(long)]
        cell: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Tower depth for the row preview; 0 skips it.
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Basic construction ⟨M, e_B⟩ for roles of a scene file.
    BasicConstruction {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "M")]
        m: String,
        #[arg(long, default_value = "B")]
        b: String,
    },
    /// Pimsner-Popa index data of E: M → B.
    Index {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "M")]
        m: String,
        #[arg(long, default_value = "B")]
        b: String,
        #[arg(long, value_parser = ["bruteforce_rank1", "grid"], default_value = "bruteforce_rank1")]
        method: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enumerates small bipartite graphs into a norm atlas.
    Enumerate {
        #[command(flatten)]
        bounds: Bounds,
        /// Atlas file; defaults to $SUBSPEC_ATLAS_DIR/atlas.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Looks for a small graph with a given square norm.
    QueryE2 {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Graphviz DOT for a graph file or a truncated built-in graph.
    EmitDot {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 6)]
        radius: usize,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    graph: Option<PathBuf>,
    /// a_inf, a_inf_inf or d_inf.
    #[arg(long, requires = "lambda_inv")]
    builtin: Option<String>,
    #[arg(long)]
    lambda_inv: Option<String>,
}

#[derive(Args)]
struct Bounds {
    #[arg(long, default_value_t = 8)]
    max_vertices: usize,
    #[arg(long, default_value_t = 1)]
    max_multiplicity: u8,
    #[arg(long, default_value_t = u64::MAX)]
    max_edges: u64,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

impl Bounds {
    fn get(&self) -> EnumBounds {
        EnumBounds {
            max_vertices: self.max_vertices,
            max_multiplicity: self.max_multiplicity,
            max_edges: self.max_edges,
            cap: self.cap,
        }
    }
}

enum Failure {
    Input(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotMarkov { .. }
            | Error::UnverifiedCell(_)
            | Error::CrossCheck { .. }
            | Error::NonConvergence { .. }
            | Error::RankDeficiency(_)
            | Error::NonPositivePolynomial { .. } => Failure::Check(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type Outcome = Result<Report, Failure>;

/// Result of a command: the JSON body and whether its check passed.
struct Report {
    body: Value,
    pass: bool,
    human: String,
}

impl Report {
    fn ok(body: Value, human: impl Into<String>) -> Self {
        Report { body, pass: true, human: human.into() }
    }

    fn checked(body: Value, pass: bool, human: impl Into<String>) -> Self {
        Report { body, pass, human: human.into() }
    }
}

#[derive(Default)]
struct Inputs(Vec<Value>);

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        self.0.push(json!({"path": path.display().to_string(), "fingerprint": fingerprint_bytes(&bytes)}));
        String::from_utf8(bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }

    fn builtin(&mut self, g: &LazyWeightedGraph) {
        self.0.push(json!({"builtin": g.builtin().name(), "fingerprint": g.fingerprint()}));
    }
}

fn to_json<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn scalar(s: &str) -> Result<Scalar, Failure> {
    parse_rational(s).map(Scalar::Exact).map_err(|e| Failure::Input(e.to_string()))
}

fn read_graph(inputs: &mut Inputs, path: &Path) -> Result<GraphData, Failure> {
    let text = inputs.read(path)?;
    parse_graph_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn markov_from_file(data: GraphData, basepoint: Option<&str>, tol: f64) -> Result<MarkovWeightedGraph, Failure> {
    let base = basepoint.map(str::to_string).unwrap_or_else(|| data.graph.even_labels()[0].clone());
    match (data.weights, data.lambda_inv) {
        (Some(w), Some(li)) => Ok(MarkovWeightedGraph::new(data.graph, w, li, &base, tol)?),
        (None, None) => Ok(markov_weight_tol(&data.graph, &base, DEFAULT_TOL)?),
        _ => Err(Failure::Input("weights and lambda_inv must be given together".into())),
    }
}

fn lazy_target(inputs: &mut Inputs, t: &Target) -> Result<Option<LazyWeightedGraph>, Failure> {
    match (&t.builtin, &t.lambda_inv) {
        (Some(b), Some(li)) => {
            let g = LazyWeightedGraph::new(Builtin::parse(b)?, scalar(li)?)?;
            inputs.builtin(&g);
            Ok(Some(g))
        }
        _ => Ok(None),
    }
}

fn parse_set(s: &str) -> Result<VertexSet, Failure> {
    if let Some((a, b)) = s.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| Failure::Input(format!("bad interval `{s}`")))?;
        let b: i64 = b.trim().parse().map_err(|_| Failure::Input(format!("bad interval `{s}`")))?;
        if a > b {
            return Err(Failure::Input(format!("empty interval `{s}`")));
        }
        return Ok((a..=b).map(|k| k.to_string()).collect());
    }
    let set: VertexSet = s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect();
    if set.is_empty() {
        return Err(Failure::Input("empty vertex set".into()));
    }
    Ok(set)
}

fn atlas_path(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| {
        let dir = std::env::var_os("SUBSPEC_ATLAS_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        dir.join("atlas.jsonl")
    })
}

fn search_report(out: SearchOutcome, bound: Option<f64>) -> Report {
    let pass = out.certificate().is_some();
    let human = match &out {
        SearchOutcome::Certificate(c) => format!("certificate |F| = {} ratio {:.6}", c.f.len(), c.ratio),
        SearchOutcome::Exhausted { frontier_size, best_ratio, .. } => {
            format!("exhausted at {frontier_size} vertices, best ratio {best_ratio:.6}")
        }
    };
    Report::checked(json!({"outcome": to_json(&out), "norm_bound": bound}), pass, human)
}

fn run(cmd: Command, inputs: &mut Inputs) -> Outcome {
    match cmd {
        Command::Norm { graph, tol } => {
            let g = read_graph(inputs, &graph)?.graph;
            let r = norm_report(&g, tol)?;
            let verdict = jones_spectrum_member(r.norm_squared, DEFAULT_SPECTRUM_TOL);
            let human = format!("‖Λ‖² = {}", r.norm_squared);
            Ok(Report::ok(json!({"norm_squared": r.norm_squared, "report": to_json(&r), "jones_verdict": to_json(&verdict)}), human))
        }
        Command::Perron { graph, matrix, tol } => {
            let a: Vec<Vec<f64>> = match (graph, matrix) {
                (Some(p), _) => {
                    let g = read_graph(inputs, &p)?.graph;
                    g.even_gram().iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect()
                }
                (None, Some(p)) => {
                    let text = inputs.read(&p)?;
                    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?
                }
                (None, None) => unreachable!("clap requires one input"),
            };
            let r = perron(&a, tol)?;
            let human = format!("ρ = {}", r.eigenvalue);
            Ok(Report::ok(to_json(&r), human))
        }
        Command::Markov { graph, basepoint, tol } => {
            let data = read_graph(inputs, &graph)?;
            match (&data.weights, &data.lambda_inv) {
                (Some(w), Some(li)) => {
                    let r = verify_markov(&data.graph, w, li, tol)?;
                    let human = format!("Markov residual {:e}", r.residual);
                    Ok(Report::checked(to_json(&r), r.pass, human))
                }
                _ => {
                    let m = markov_from_file(data, basepoint.as_deref(), tol)?;
                    let weights: serde_json::Map<String, Value> =
                        m.graph().even_labels().iter().cloned().zip(m.weights().iter().map(to_json)).collect();
                    let human = format!("λ⁻¹ = {}", m.lambda_inv().to_f64());
                    Ok(Report::ok(json!({"lambda_inv": to_json(m.lambda_inv()), "basepoint": m.basepoint(), "weights": weights}), human))
                }
            }
        }
        Command::Tower { graph, depth, basepoint, tol } => {
            let m = markov_from_file(read_graph(inputs, &graph)?, basepoint.as_deref(), tol)?;
            let tw = build_tower(&m, depth)?;
            let growth = growth_rate(&tw, m.graph()).ok();
            let human = format!("total dims {:?}", tw.total_dims().iter().map(|d| d.to_string()).collect::<Vec<_>>());
            Ok(Report::ok(json!({"tower": to_json(&tw), "growth": growth.as_ref().map(to_json)}), human))
        }
        Command::Tlj { lambda, n_max } => {
            let lam = scalar(&lambda)?;
            let vals = values(&lam, n_max);
            let polys: Vec<Value> = (-1..=n_max as i64)
                .map(|n| {
                    let p = jones_poly(n)?;
                    Ok(json!({"n": n, "coeffs": p.coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>(), "value": to_json(&vals[(n + 1) as usize])}))
                })
                .collect::<Result<_, Error>>()?;
            let horizon = positivity_horizon(&lam, n_max)?;
            let human = format!("horizon {horizon:?}");
            Ok(Report::ok(json!({"lambda": to_json(&lam), "polynomials": polys, "positivity_horizon": to_json(&horizon)}), human))
        }
        Command::Couplings { lambda, mode, n_max } => {
            let lam = scalar(&lambda)?;
            match mode.as_str() {
                "a-inf" => {
                    let seq = a_inf_couplings(&lam, n_max)?;
                    let residual = seq.identity_residual();
                    Ok(Report::ok(json!({"sequence": to_json(&seq), "identity_residual": residual}), format!("identity residual {residual:e}")))
                }
                "locally-trivial" => {
                    let n = n_max as i64;
                    let lt = locally_trivial_couplings(&lam, -n..=n)?;
                    Ok(Report::ok(to_json(&lt), format!("t = {}", lt.t.to_f64())))
                }
                _ => {
                    let d = a_inf_diagnostic(&lam, n_max.max(2))?;
                    let human = format!("formula residual {:e} (reported only)", d.formula.residual_eigen);
                    Ok(Report::ok(to_json(&d), human))
                }
            }
        }
        Command::FolnerSearch { target, epsilon, method, max_size } => {
            let opts = CutOptions { max_size, ..Default::default() };
            if let Some(g) = lazy_target(inputs, &target)? {
                let out = if method == "interval" { interval_search(&g, epsilon, max_size)? } else { spectral_cut_search(CutTarget::Builtin(&g), epsilon, &opts)? };
                let bound = out.certificate().map(|c| norm_bound_from_certificate(&g, c)).transpose()?;
                return Ok(search_report(out, bound));
            }
            if method == "interval" {
                return Err(Failure::Input("interval search runs on built-in graphs".into()));
            }
            let path = target.graph.expect("clap requires a target");
            let m = markov_from_file(read_graph(inputs, &path)?, None, MARKOV_TOL)?;
            let out = spectral_cut_search(CutTarget::Finite(&m), epsilon, &opts)?;
            let bound = out.certificate().map(|c| norm_bound_from_certificate(&m, c)).transpose()?;
            Ok(search_report(out, bound))
        }
        Command::FolnerCheck { target, set, epsilon } => {
            let f = parse_set(&set)?;
            let (report, bound) = if let Some(g) = lazy_target(inputs, &target)? {
                let r = certificate_check(&g, &f, epsilon)?;
                let b = if r.pass { norm_bound_from_certificate(&g, &r.certificate).ok() } else { None };
                (r, b)
            } else {
                let path = target.graph.expect("clap requires a target");
                let data = read_graph(inputs, &path)?;
                let (w, li) = match (data.weights, data.lambda_inv) {
                    (Some(w), Some(li)) => (w, li),
                    (None, None) => {
                        let m = markov_weight_tol(&data.graph, &data.graph.even_labels()[0], DEFAULT_TOL)?;
                        (m.weights().to_vec(), m.lambda_inv().clone())
                    }
                    _ => return Err(Failure::Input("weights and lambda_inv must be given together".into())),
                };
                let g = WeightedFiniteGraph::new(data.graph, w, li)?;
                let r = certificate_check(&g, &f, epsilon)?;
                let b = if r.pass { norm_bound_from_certificate(&g, &r.certificate).ok() } else { None };
                (r, b)
            };
            let human = format!("{} ratio {:.6}", if report.pass { "pass" } else { "fail" }, report.certificate.ratio);
            let pass = report.pass;
            Ok(Report::checked(json!({"pass": pass, "ratio": report.certificate.ratio, "certificate": to_json(&report.certificate), "norm_bound": bound}), pass, human))
        }
        Command::CellVerify { cell, tol, depth } => {
            let text = inputs.read(&cell)?;
            let c = MarkovCell::from_json(&text)?;
            let cert = verify_cell(&c, tol)?;
            let preview = if depth > 0 && cert.verified() { Some(cell_tower_preview(&c, depth, tol)?) } else { None };
            let pass = cert.verified() && preview.as_ref().is_none_or(|p| p.rows_match && p.verticals_match && p.composition_ok);
            let human = format!("verified {} index {}", cert.verified(), cert.subfactor_index);
            Ok(Report::checked(json!({"certificate": to_json(&cert), "preview": preview.as_ref().map(to_json)}), pass, human))
        }
        Command::BasicConstruction { scene, m, b } => {
            let s = read_scene(inputs, &scene)?;
            let bc = basic_construction(&s.role(&m)?, &s.role(&b)?)?;
            let human = format!("dim M1 = {}, pass {}", bc.report.m1_dim, bc.report.pass);
            Ok(Report::checked(to_json(&bc.report), bc.report.pass, human))
        }
        Command::Index { scene, m, b, method, samples, seed } => {
            let s = read_scene(inputs, &scene)?;
            let (m, b) = (s.role(&m)?, s.role(&b)?);
            let e = expectation(m.ambient(), &b)?;
            let opts = ProbabilisticOptions { samples, seed, ..Default::default() };
            let r = probabilistic_index(&m, &e, IndexMethod::parse(&method)?, &opts)?;
            let human = format!("ind_ob {} λ(E) ≈ {}", r.ind_ob, r.lambda_e);
            Ok(Report::ok(to_json(&r), human))
        }
        Command::Enumerate { bounds, out } => {
            let en = enumerate(&bounds.get())?;
            let atlas = classify(&en.graphs);
            let path = atlas_path(out);
            let written = atlas.append_jsonl(&path)?;
            let first = atlas.first_above_four().map(to_json);
            let human = format!("{} graphs, {} atlas entries, {written} new", en.graphs.len(), atlas.entries.len());
            Ok(Report::ok(
                json!({
                    "graphs": en.graphs.len(),
                    "truncated": en.truncated,
                    "atlas_entries": atlas.entries.len(),
                    "written": written,
                    "atlas_path": path.display().to_string(),
                    "first_above_four": first,
                }),
                human,
            ))
        }
        Command::QueryE2 { alpha, tol, bounds } => {
            let out = membership_query(alpha, tol, &bounds.get())?;
            let found = matches!(out, MembershipOutcome::Found { .. });
            let human = if found { "found".to_string() } else { "not found within bounds".to_string() };
            Ok(Report::checked(to_json(&out), found, human))
        }
        Command::EmitDot { .. } => unreachable!("handled before dispatch"),
    }
}

fn read_scene(inputs: &mut Inputs, path: &Path) -> Result<Scene, Failure> {
    let text = inputs.read(path)?;
    parse_scene_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit_dot(target: &Target, radius: usize) -> Result<String, Failure> {
    let mut inputs = Inputs::default();
    if let Some(g) = lazy_target(&mut inputs, target)? {
        let tr = g.truncate(radius)?;
        return Ok(tr.graph.to_dot(g.builtin().name()));
    }
    let path = target.graph.as_ref().expect("clap requires a target");
    let g = read_graph(&mut inputs, path)?.graph;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(g.to_dot(&name))
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Norm { .. } => "norm",
        Command::Perron { .. } => "perron",
        Command::Markov { .. } => "markov",
        Command::Tower { .. } => "tower",
        Command::Tlj { .. } => "tlj",
        Command::Couplings { .. } => "couplings",
        Command::FolnerSearch { .. } => "folner-search",
        Command::FolnerCheck { .. } => "folner-check",
        Command::CellVerify { .. } => "cell-verify",
        Command::BasicConstruction { .. } => "basic-construction",
        Command::Index { .. } => "index",
        Command::Enumerate { .. } => "enumerate",
        Command::QueryE2 { .. } => "query-e2",
        Command::EmitDot { .. } => "emit-dot",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::EmitDot { target, radius } = &cli.command {
        return match emit_dot(target, *radius) {
            Ok(dot) => {
                let _ = std::io::stdout().write_all(dot.as_bytes());
                ExitCode::SUCCESS
            }
            Err(Failure::Input(msg)) | Err(Failure::Check(msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        };
    }
    let name = command_name(&cli.command);
    let mut inputs = Inputs::default();
    let outcome = run(cli.command, &mut inputs);
    let (status, result, code, human) = match outcome {
        Ok(r) if r.pass => ("pass", r.body, 0, r.human),
        Ok(r) => ("fail", r.body, 1, r.human),
        Err(Failure::Check(msg)) => ("fail", json!({"error": msg}), 1, msg),
        Err(Failure::Input(msg)) => ("input_error", json!({"error": msg}), 2, msg),
    };
    let report = json!({
        "tool": "subspec",
        "version": VERSION,
        "command": name,
        "inputs": inputs.0,
        "status": status,
        "result": result,
    });
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&report).expect("json"));
    if cli.human || code == 2 {
        eprintln!("{name}: {human}");
    }
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_sets() {
        let s = parse_set("0..3").ok().unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.contains("3"));
        let s = parse_set("a, b,c").ok().unwrap();
        assert_eq!(s.len(), 3);
        assert!(parse_set("4..1").is_err());
        assert!(parse_set("x..2").is_err());
        assert!(parse_set(" , ").is_err());
    }
}
