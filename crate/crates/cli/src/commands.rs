use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use mec_ibnb::bnb::{solve_bnb, solve_exhaustive, BnbOptions, ExhaustiveOptions, SolveReport, SolveStatus};
use mec_ibnb::dataset::{label_trace, read_dataset, write_dataset, Dataset, NodeSample};
use mec_ibnb::ibnb::{solve_ibnb, IbnbReport, ThresholdPolicy};
use mec_ibnb::mlp::{accuracy, dataset_matrix, load_model, save_model, train, MlpModel, TrainConfig};
use mec_ibnb::scenario::{write_scenario, Scenario, ScenarioConfig, Weights};
use mec_ibnb::textio::{fmt_f64, write_atomic};

use crate::args::{BenchArgs, Command, GenDataArgs, SolveArgs, SolverKind, TrainArgs};
use crate::{eval_seed, train_seed, ExitError};

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Solve(a) => solve(a, out),
        Command::Bench(a) => bench(a, out),
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    let cfg = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn echo_config(out: &mut dyn Write, command: &str, cfg: &ScenarioConfig, extra: &[(&str, String)]) -> Result<()> {
    writeln!(out, "# command={command}")?;
    for (k, v) in cfg.entries() {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "# config_hash={}", cfg.hash_hex())?;
    for (k, v) in extra {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn check_shape(cfg: &ScenarioConfig) -> Result<()> {
    if cfg.num_channels < cfg.num_mds {
        return Err(ExitError::infeasible(format!(
            "infeasible: {} devices cannot each get a private channel out of {}",
            cfg.num_mds, cfg.num_channels
        ))
        .into());
    }
    Ok(())
}

fn status_error(status: SolveStatus, what: &str) -> Option<ExitError> {
    match status {
        SolveStatus::Optimal => None,
        SolveStatus::Infeasible => Some(ExitError::infeasible(format!("infeasible: {what}"))),
        SolveStatus::BudgetExhausted => Some(ExitError::budget(format!("node budget exhausted: {what}"))),
    }
}

fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    echo_config(
        out,
        "gen-data",
        &cfg,
        &[
            ("frames", a.frames.to_string()),
            ("seed_base", a.seed.to_string()),
            ("frame_seeds", "2*(seed_base+i)".into()),
            ("max_nodes", a.max_nodes.to_string()),
            ("out", a.out.display().to_string()),
        ],
    )?;
    if a.frames == 0 {
        bail!("--frames must be at least 1");
    }
    check_shape(&cfg)?;
    prepare_out(&a.out)?;
    let opts = BnbOptions { max_nodes: a.max_nodes };
    let frames: Vec<Result<(u64, usize, Vec<NodeSample>)>> = (0..a.frames)
        .into_par_iter()
        .map(|i| {
            let seed = train_seed(a.seed, i);
            let sc = Scenario::generate(&cfg.with_seed(seed))?;
            let report = solve_bnb(&sc, &opts)?;
            if let Some(e) = status_error(report.status, &format!("frame seed {seed}")) {
                return Err(e.into());
            }
            Ok((seed, report.nodes_searched, label_trace(&report, &sc, seed)?))
        })
        .collect();
    let mut ds = Dataset::new(cfg.num_mds, cfg.num_channels, cfg.hash_hex());
    let mut nodes = 0;
    for frame in frames {
        let (_, n, samples) = frame?;
        nodes += n;
        ds.extend(samples)?;
    }
    let path = a.out.join("dataset.csv");
    write_dataset(&ds, &path)?;
    writeln!(
        out,
        "frames={} nodes={} samples={} positives={} negatives={} path={}",
        a.frames,
        nodes,
        ds.samples.len(),
        ds.positives(),
        ds.negatives(),
        path.display()
    )?;
    Ok(())
}

fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        positive_class_weight: a.pos_weight,
        validation_fraction: a.val_fraction,
        rng_seed: a.seed,
        ..TrainConfig::default()
    };
    writeln!(out, "# command=train")?;
    writeln!(out, "# dataset={}", a.dataset.display())?;
    writeln!(out, "# learning_rate={}", cfg.learning_rate)?;
    writeln!(out, "# beta1={} beta2={} adam_eps={}", cfg.beta1, cfg.beta2, cfg.epsilon)?;
    writeln!(out, "# epochs={} batch_size={}", cfg.epochs, cfg.batch_size)?;
    match cfg.positive_class_weight {
        Some(w) => writeln!(out, "# pos_weight={w}")?,
        None => writeln!(out, "# pos_weight=neg/pos")?,
    }
    writeln!(out, "# val_fraction={} seed={}", cfg.validation_fraction, cfg.rng_seed)?;
    writeln!(out, "# out={}", a.out.display())?;
    cfg.validate()?;
    let ds = read_dataset(&a.dataset)?;
    prepare_out(&a.out)?;
    let init = MlpModel::pruning_classifier(ds.feature_len(), a.seed)?;
    let (model, history) = train(&init, &ds, &cfg)?;
    save_model(&model, &a.out.join("model.txt"))?;
    write_atomic(&a.out.join("history.csv"), history.to_csv().as_bytes())?;
    let (x, labels) = dataset_matrix(&ds);
    writeln!(
        out,
        "samples={} train={} val={} pos_weight={} accuracy={:.6} model_id={}",
        ds.samples.len(),
        history.train_size,
        history.val_size,
        fmt_f64(history.positive_class_weight),
        accuracy(&model, x.view(), &labels)?,
        model.model_id()
    )?;
    if let Some(last) = history.epochs.last() {
        let val = last.val_loss.map_or_else(String::new, fmt_f64);
        writeln!(out, "final_epoch={} train_loss={} val_loss={val}", last.epoch, fmt_f64(last.train_loss))?;
    }
    Ok(())
}

fn policy(theta: f64, delta_theta: f64, theta_min: f64) -> Result<ThresholdPolicy> {
    Ok(ThresholdPolicy::new(theta, delta_theta, theta_min)?)
}

fn read_model(path: &Path, cfg: &ScenarioConfig) -> Result<MlpModel> {
    let model = load_model(path)?;
    let m = mec_ibnb::dataset::feature_len(cfg.num_mds, cfg.num_channels);
    if model.input_dim() != m {
        bail!(
            "{}: model takes {} features but a {}x{} frame yields {m}",
            path.display(),
            model.input_dim(),
            cfg.num_mds,
            cfg.num_channels
        );
    }
    Ok(model)
}

pub const REPORT_HEADER: &str =
    "solver,seed,status,psi,nodes_searched,restarts,fell_back_to_exact,thresholds_tried,model_id,x,l";

fn report_row(solver: SolverKind, seed: u64, report: &SolveReport, ibnb: Option<&IbnbReport>) -> String {
    let psi = report.psi().map_or_else(String::new, fmt_f64);
    let (x, l) = match &report.best {
        Some(b) => (
            b.assignment.x.iter().map(|&v| if v { '1' } else { '0' }).collect::<String>(),
            b.assignment.l.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";"),
        ),
        None => (String::new(), String::new()),
    };
    let (restarts, fell_back, thetas, model_id) = match ibnb {
        Some(r) => (
            r.restarts.to_string(),
            r.fell_back_to_exact.to_string(),
            r.thresholds_tried.iter().map(|&t| fmt_f64(t)).collect::<Vec<_>>().join(";"),
            r.model_id.clone(),
        ),
        None => (String::new(), String::new(), String::new(), String::new()),
    };
    format!(
        "{},{seed},{},{psi},{},{restarts},{fell_back},{thetas},{model_id},{x},{l}\n",
        solver.name(),
        report.status.as_str(),
        report.nodes_searched
    )
}

fn solve(a: &SolveArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let seed = a.seed.unwrap_or(cfg.rng_seed);
    let mut extra = vec![
        ("solver", a.solver.name().to_string()),
        ("frame_seed", seed.to_string()),
        ("max_nodes", a.max_nodes.to_string()),
    ];
    if a.solver == SolverKind::Ibnb {
        extra.push(("theta", fmt_f64(a.theta)));
        extra.push(("delta_theta", fmt_f64(a.delta_theta)));
        extra.push(("theta_min", fmt_f64(a.theta_min)));
        extra.push(("model", a.model.as_ref().map_or_else(String::new, |p| p.display().to_string())));
    }
    extra.push(("out", a.out.display().to_string()));
    echo_config(out, "solve", &cfg, &extra)?;

    let sc = Scenario::generate(&cfg.with_seed(seed))?;
    let model = match (a.solver, &a.model) {
        (SolverKind::Ibnb, Some(p)) => Some(read_model(p, &cfg)?),
        (SolverKind::Ibnb, None) => bail!("--solver ibnb needs --model"),
        _ => None,
    };
    let pol = policy(a.theta, a.delta_theta, a.theta_min)?;
    prepare_out(&a.out)?;
    let opts = BnbOptions { max_nodes: a.max_nodes };
    let n = sc.num_pairs();
    let (report, ibnb, trace) = match a.solver {
        SolverKind::Bnb => {
            let r = solve_bnb(&sc, &opts)?;
            let t = r.trace_csv(n);
            (r, None, t)
        }
        SolverKind::Exhaustive => {
            let r = solve_exhaustive(&sc, &ExhaustiveOptions::default())?;
            let t = r.trace_csv(n);
            (r, None, t)
        }
        SolverKind::Ibnb => {
            let r = solve_ibnb(&sc, model.as_ref().expect("model loaded above"), &pol, &opts)?;
            let t = r.trace_csv(n);
            (r.report.clone(), Some(r), t)
        }
    };
    let row = report_row(a.solver, seed, &report, ibnb.as_ref());
    write_atomic(&a.out.join("report.csv"), format!("{REPORT_HEADER}\n{row}").as_bytes())?;
    write_atomic(&a.out.join("trace.csv"), trace.as_bytes())?;
    write_scenario(&sc, &a.out.join("scenario.csv"))?;
    write!(out, "{REPORT_HEADER}\n{row}")?;
    writeln!(out, "wall_time_s={:.6}", report.wall_time.as_secs_f64())?;
    if let Some(e) = status_error(report.status, &format!("frame seed {seed}")) {
        return Err(e.into());
    }
    Ok(())
}

pub fn parse_weights(s: &str) -> Result<Vec<Weights>> {
    let mut v = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (lt, le) = item
            .split_once(':')
            .with_context(|| format!("weight pair `{item}` is not lambda_t:lambda_e"))?;
        let w = Weights {
            lambda_t: lt.trim().parse().with_context(|| format!("bad lambda_t in `{item}`"))?,
            lambda_e: le.trim().parse().with_context(|| format!("bad lambda_e in `{item}`"))?,
        };
        if !(w.lambda_t >= 0.0 && w.lambda_e >= 0.0 && w.lambda_t.is_finite() && w.lambda_e.is_finite()) {
            bail!("weights in `{item}` must be finite and non-negative");
        }
        v.push(w);
    }
    if v.is_empty() {
        bail!("--weights lists no pairs");
    }
    Ok(v)
}

struct FrameBench {
    seed: u64,
    bnb_nodes: usize,
    ibnb_nodes: Vec<usize>,
    /// Per weight pair: exact objective, then one per threshold.
    psi: Vec<(f64, Vec<f64>)>,
}

fn bench_frame(
    cfg: &ScenarioConfig,
    seed: u64,
    model: &MlpModel,
    policies: &[ThresholdPolicy],
    weights: &[Weights],
    opts: &BnbOptions,
) -> Result<FrameBench> {
    let what = format!("frame seed {seed}");
    let expect_optimal = |status| match status_error(status, &what) {
        None => Ok(()),
        Some(e) => Err(e),
    };
    let sc = Scenario::generate(&cfg.with_seed(seed))?;
    let b = solve_bnb(&sc, opts)?;
    expect_optimal(b.status)?;
    let mut ibnb_nodes = Vec::with_capacity(policies.len());
    for p in policies {
        let r = solve_ibnb(&sc, model, p, opts)?;
        expect_optimal(r.report.status)?;
        ibnb_nodes.push(r.report.nodes_searched);
    }
    let mut psi = Vec::with_capacity(weights.len());
    for &w in weights {
        let sw = sc.with_weights(w)?;
        let b = solve_bnb(&sw, opts)?;
        expect_optimal(b.status)?;
        let mut learned = Vec::with_capacity(policies.len());
        for p in policies {
            let r = solve_ibnb(&sw, model, p, opts)?;
            expect_optimal(r.report.status)?;
            learned.push(r.psi().expect("optimal report has an incumbent"));
        }
        psi.push((b.psi().expect("optimal report has an incumbent"), learned));
    }
    Ok(FrameBench {
        seed,
        bnb_nodes: b.nodes_searched,
        ibnb_nodes,
        psi,
    })
}

fn cdf_rows(csv: &mut String, counts: &[usize], solver: &str, theta: &str) {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    for (i, &c) in sorted.iter().enumerate() {
        if sorted.get(i + 1) != Some(&c) {
            let _ = writeln!(csv, "{c},{},{solver},{theta}", fmt_f64((i + 1) as f64 / n));
        }
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let weights = parse_weights(&a.weights)?;
    let thetas_text = a.thetas.iter().map(|&t| fmt_f64(t)).collect::<Vec<_>>().join(";");
    let weights_text = weights
        .iter()
        .map(|w| format!("{}:{}", w.lambda_t, w.lambda_e))
        .collect::<Vec<_>>()
        .join(",");
    echo_config(
        out,
        "bench",
        &cfg,
        &[
            ("model", a.model.display().to_string()),
            ("thetas", thetas_text),
            ("delta_theta", fmt_f64(a.delta_theta)),
            ("theta_min", fmt_f64(a.theta_min)),
            ("frames", a.frames.to_string()),
            ("seed_base", a.seed.to_string()),
            ("frame_seeds", "2*(seed_base+i)+1".into()),
            ("weights", weights_text),
            ("max_nodes", a.max_nodes.to_string()),
            ("out", a.out.display().to_string()),
        ],
    )?;
    if a.frames == 0 {
        bail!("--frames must be at least 1");
    }
    check_shape(&cfg)?;
    let policies = a
        .thetas
        .iter()
        .map(|&t| policy(t, a.delta_theta, a.theta_min))
        .collect::<Result<Vec<_>>>()?;
    let model = read_model(&a.model, &cfg)?;
    prepare_out(&a.out)?;
    let opts = BnbOptions { max_nodes: a.max_nodes };
    let frames = (0..a.frames)
        .into_par_iter()
        .map(|i| bench_frame(&cfg, eval_seed(a.seed, i), &model, &policies, &weights, &opts))
        .collect::<Result<Vec<_>>>()?;

    let thetas: Vec<String> = a.thetas.iter().map(|&t| fmt_f64(t)).collect();
    let mut counts = String::from("frame,bnb_nodes,ibnb_nodes\n");
    let mut cdf = String::from("nodes,cdf,solver,theta\n");
    let mut sweep = String::from("lambda_t,lambda_e,psi_bnb,psi_ibnb,ratio\n");
    let bnb_counts: Vec<usize> = frames.iter().map(|f| f.bnb_nodes).collect();
    cdf_rows(&mut cdf, &bnb_counts, "bnb", "");
    let bnb_mean = mean(bnb_counts.iter().map(|&c| c as f64));
    writeln!(out, "solver,theta,mean_nodes,node_ratio,mean_psi_ratio,worst_psi_ratio")?;
    writeln!(out, "bnb,,{:.3},1.000000,1.000000,1.000000", bnb_mean)?;
    for (t, theta) in thetas.iter().enumerate() {
        writeln!(counts, "# theta={theta}")?;
        for f in &frames {
            writeln!(counts, "{},{},{}", f.seed, f.bnb_nodes, f.ibnb_nodes[t])?;
        }
        let ibnb_counts: Vec<usize> = frames.iter().map(|f| f.ibnb_nodes[t]).collect();
        cdf_rows(&mut cdf, &ibnb_counts, "ibnb", theta);
        writeln!(sweep, "# theta={theta}")?;
        for (j, w) in weights.iter().enumerate() {
            let pb = mean(frames.iter().map(|f| f.psi[j].0));
            let pi = mean(frames.iter().map(|f| f.psi[j].1[t]));
            writeln!(
                sweep,
                "{},{},{},{},{}",
                fmt_f64(w.lambda_t),
                fmt_f64(w.lambda_e),
                fmt_f64(pb),
                fmt_f64(pi),
                fmt_f64(pi / pb)
            )?;
        }
        let ratios: Vec<f64> = frames.iter().map(|f| f.psi[0].1[t] / f.psi[0].0).collect();
        let im = mean(ibnb_counts.iter().map(|&c| c as f64));
        writeln!(
            out,
            "ibnb,{theta},{:.3},{:.6},{:.6},{:.6}",
            im,
            im / bnb_mean,
            mean(ratios.iter().copied()),
            ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        )?;
    }
    write_atomic(&a.out.join("node_counts.csv"), counts.as_bytes())?;
    write_atomic(&a.out.join("cdf.csv"), cdf.as_bytes())?;
    write_atomic(&a.out.join("weights.csv"), sweep.as_bytes())?;
    Ok(())
}

/// Paths written by a command into `out`, in a fixed order.
pub fn output_files(cmd: &Command) -> Vec<PathBuf> {
    let (dir, names): (&Path, &[&str]) = match cmd {
        Command::GenData(a) => (&a.out, &["dataset.csv"]),
        Command::Train(a) => (&a.out, &["model.txt", "history.csv"]),
        Command::Solve(a) => (&a.out, &["report.csv", "trace.csv", "scenario.csv"]),
        Command::Bench(a) => (&a.out, &["node_counts.csv", "cdf.csv", "weights.csv"]),
    };
    names.iter().map(|n| dir.join(n)).collect()
}
