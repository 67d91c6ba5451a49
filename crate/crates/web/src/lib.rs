//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function takes plain numbers (plus a model file for the
//! learned search) and returns a JSON string. The `*_inner` functions return
//! typed values so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mec_ibnb::bnb::{solve_bnb, solve_exhaustive, BnbOptions, ExhaustiveOptions, SolveReport, SolveStatus};
use mec_ibnb::ibnb::{solve_ibnb, ThresholdPolicy};
use mec_ibnb::mlp::MlpModel;
use mec_ibnb::scenario::{Scenario, ScenarioConfig, Weights};

/// Exhaustive enumeration is offered only for frames this small.
const EXHAUSTIVE_LIMIT: u128 = 200_000;

#[derive(Debug, Serialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub action: String,
    pub psi: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FrameResult {
    pub num_mds: usize,
    pub num_channels: usize,
    pub rates: Vec<f64>,
    pub tasks: Vec<f64>,
    pub status: String,
    pub psi: Option<f64>,
    pub latency: Option<f64>,
    pub energy: Option<f64>,
    pub x: Vec<bool>,
    pub l: Vec<f64>,
    pub nodes_searched: usize,
    pub exhaustive_psi: Option<f64>,
    pub tree: Vec<TreeNode>,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub lambda_e: f64,
    pub psi: f64,
    pub latency: f64,
    pub energy: f64,
    pub nodes_searched: usize,
}

#[derive(Debug, Serialize)]
pub struct LearnedResult {
    pub bnb_nodes: usize,
    pub bnb_psi: Option<f64>,
    pub ibnb_nodes: usize,
    pub ibnb_psi: Option<f64>,
    pub restarts: usize,
    pub fell_back_to_exact: bool,
    pub thresholds_tried: Vec<f64>,
    pub tree: Vec<TreeNode>,
}

fn frame(num_mds: usize, num_channels: usize, seed: u64, weights: Weights) -> Result<Scenario, String> {
    let cfg = ScenarioConfig::default()
        .with_shape(num_mds, num_channels)
        .with_seed(seed)
        .with_weights(weights);
    cfg.validate().map_err(|e| e.to_string())?;
    Scenario::generate(&cfg).map_err(|e| e.to_string())
}

fn tree(report: &SolveReport) -> Vec<TreeNode> {
    report
        .trace
        .iter()
        .map(|r| TreeNode {
            id: r.id,
            parent: r.parent,
            depth: r.depth,
            action: r.action.as_str().to_string(),
            psi: r.psi(),
        })
        .collect()
}

pub fn solve_frame_inner(
    num_mds: usize,
    num_channels: usize,
    seed: u64,
    lambda_t: f64,
    lambda_e: f64,
) -> Result<FrameResult, String> {
    let sc = frame(num_mds, num_channels, seed, Weights { lambda_t, lambda_e })?;
    let report = solve_bnb(&sc, &BnbOptions::default()).map_err(|e| e.to_string())?;
    let exhaustive_psi = match solve_exhaustive(&sc, &ExhaustiveOptions { enum_budget: EXHAUSTIVE_LIMIT }) {
        Ok(r) => r.psi(),
        Err(_) => None,
    };
    let best = report.best.as_ref();
    Ok(FrameResult {
        num_mds,
        num_channels,
        rates: sc.rates().to_vec(),
        tasks: sc.tasks().to_vec(),
        status: report.status.as_str().to_string(),
        psi: report.psi(),
        latency: best.map(|b| sc.latency(&b.assignment)),
        energy: best.map(|b| sc.energy(&b.assignment)),
        x: best.map_or_else(Vec::new, |b| b.assignment.x.clone()),
        l: best.map_or_else(Vec::new, |b| b.assignment.l.clone()),
        nodes_searched: report.nodes_searched,
        exhaustive_psi,
        tree: tree(&report),
    })
}

pub fn weight_sweep_inner(
    num_mds: usize,
    num_channels: usize,
    seed: u64,
    lambda_e_max: f64,
    steps: usize,
) -> Result<Vec<SweepPoint>, String> {
    if steps < 2 || !(lambda_e_max > 0.0 && lambda_e_max.is_finite()) {
        return Err("need at least two steps and a positive lambda_e_max".into());
    }
    let base = frame(num_mds, num_channels, seed, Weights::default())?;
    (0..steps)
        .map(|i| {
            let lambda_e = lambda_e_max * i as f64 / (steps - 1) as f64;
            let sc = base
                .with_weights(Weights { lambda_t: 1.0, lambda_e })
                .map_err(|e| e.to_string())?;
            let r = solve_bnb(&sc, &BnbOptions::default()).map_err(|e| e.to_string())?;
            let b = match (&r.status, &r.best) {
                (SolveStatus::Optimal, Some(b)) => b,
                _ => return Err(format!("frame is {}", r.status.as_str())),
            };
            Ok(SweepPoint {
                lambda_e,
                psi: b.psi,
                latency: sc.latency(&b.assignment),
                energy: sc.energy(&b.assignment),
                nodes_searched: r.nodes_searched,
            })
        })
        .collect()
}

pub fn solve_learned_inner(model_text: &str, seed: u64, theta: f64) -> Result<LearnedResult, String> {
    let model = MlpModel::from_text(model_text, std::path::Path::new("model.txt")).map_err(|e| e.to_string())?;
    let cfg = ScenarioConfig::default();
    let sc = frame(cfg.num_mds, cfg.num_channels, seed, Weights::default())?;
    let policy = ThresholdPolicy::default().with_theta0(theta).map_err(|e| e.to_string())?;
    let opts = BnbOptions::default();
    let exact = solve_bnb(&sc, &opts).map_err(|e| e.to_string())?;
    let learned = solve_ibnb(&sc, &model, &policy, &opts).map_err(|e| e.to_string())?;
    Ok(LearnedResult {
        bnb_nodes: exact.nodes_searched,
        bnb_psi: exact.psi(),
        ibnb_nodes: learned.report.nodes_searched,
        ibnb_psi: learned.psi(),
        restarts: learned.restarts,
        fell_back_to_exact: learned.fell_back_to_exact,
        thresholds_tried: learned.thresholds_tried.clone(),
        tree: tree(&learned.report),
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Solves one frame with branch-and-bound and cross-checks small frames by
/// enumeration.
#[wasm_bindgen]
pub fn solve_frame(num_mds: usize, num_channels: usize, seed: u64, lambda_t: f64, lambda_e: f64) -> Result<String, JsError> {
    to_json(solve_frame_inner(num_mds, num_channels, seed, lambda_t, lambda_e))
}

/// Latency and energy of the optimum as the energy weight grows.
#[wasm_bindgen]
pub fn weight_sweep(num_mds: usize, num_channels: usize, seed: u64, lambda_e_max: f64, steps: usize) -> Result<String, JsError> {
    to_json(weight_sweep_inner(num_mds, num_channels, seed, lambda_e_max, steps))
}

/// Learned-pruning search on a default-sized frame with a pasted model file.
#[wasm_bindgen]
pub fn solve_learned(model_text: &str, seed: u64, theta: f64) -> Result<String, JsError> {
    to_json(solve_learned_inner(model_text, seed, theta))
}
