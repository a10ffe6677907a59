use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use roadcast::data::{
    self, format_timestamp, generate_synthetic, load_csv_spanning, split, SpeedSeries, SynthParams, SynthRecord,
};
use roadcast::eval::{
    evaluate_all, export_attention, khop_sweep, predict_all, write_attention_csv, write_sweep_csv, DirectLinear,
    EvalOptions, Forecaster, HistoricalAverage, LinearBaseline, Naive, PredictorKind, RollingLinear,
};
use roadcast::features::compute_stats;
use roadcast::graph::{parse_graph, write_edges, write_links, HopMask, RoadGraph};
use roadcast::model::{Checkpoint, Model};
use roadcast::train::{default_train_days, train_model, Dataset, TrainConfig};
use serde_json::json;

use crate::args::{
    AttentionArgs, DataArgs, EvaluateArgs, GenerateArgs, GraphArgs, HorizonArgs, HyperArgs, PredictArgs, StatsArgs,
    SweepArgs, TrainArgs,
};
use crate::run::{GraphSpec, RunRecord};
use crate::CliError;

type CliResult<T = ()> = Result<T, CliError>;

const SLOT_MINUTES: usize = 5;

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn out_dir(dir: &Path) -> CliResult<&Path> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn graph_spec(args: &GraphArgs) -> Option<GraphSpec> {
    if let Some(n) = args.ring {
        return Some(GraphSpec::Ring { links: n as usize });
    }
    match (&args.links, &args.edges) {
        (Some(l), Some(e)) => Some(GraphSpec::Files {
            links: l.clone(),
            edges: e.clone(),
        }),
        _ => None,
    }
}

fn require_graph(args: &GraphArgs) -> CliResult<GraphSpec> {
    graph_spec(args).ok_or_else(|| CliError::usage("a graph is required: pass --ring N or --links PATH --edges PATH"))
}

fn load_graph(spec: &GraphSpec) -> CliResult<RoadGraph> {
    match spec {
        GraphSpec::Ring { links } => Ok(RoadGraph::ring(*links)?),
        GraphSpec::Files { links, edges } => {
            let l = File::open(links).map_err(|e| CliError::io(links, e))?;
            let e = File::open(edges).map_err(|err| CliError::io(edges, err))?;
            Ok(parse_graph(l, e)?)
        }
    }
}

fn require_data(args: &DataArgs) -> CliResult<PathBuf> {
    args.data
        .clone()
        .ok_or_else(|| CliError::usage("--data PATH is required"))
}

fn load_series(path: &Path, graph: &RoadGraph) -> CliResult<SpeedSeries> {
    let (series, report) = load_csv_spanning(path, graph)?;
    if report.skipped > 0 {
        log::warn!("{} rows outside the daily horizon were skipped", report.skipped);
    }
    log::info!(
        "loaded {} links over {} days, {} missing cells",
        series.link_count(),
        series.grid().day_count(),
        series.missing_count()
    );
    Ok(series)
}

fn horizon_steps(h: &HorizonArgs) -> CliResult<Option<usize>> {
    if let Some(min) = h.horizon_min {
        if min == 0 || min % SLOT_MINUTES != 0 {
            return Err(CliError::usage(format!(
                "--horizon-min must be a positive multiple of {SLOT_MINUTES}, got {min}"
            )));
        }
        return Ok(Some(min / SLOT_MINUTES));
    }
    Ok(h.n)
}

fn apply_hyper(cfg: &mut TrainConfig, h: &HyperArgs) -> CliResult {
    if let Some(v) = h.optimizer {
        cfg.optimizer = v;
    }
    if let Some(v) = h.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = h.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = h.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = h.patience {
        cfg.patience = v;
    }
    if let Some(v) = h.seed {
        cfg.seed = v;
    }
    if let Some(v) = h.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = h.k {
        cfg.order = v;
    }
    if let Some(v) = h.hop_mode {
        cfg.hop_mode = v;
    }
    if let Some(v) = h.m {
        cfg.lookback = v;
    }
    if let Some(v) = horizon_steps(&h.horizon)? {
        cfg.horizon = v;
    }
    if let Some(v) = h.clip_norm {
        cfg.clip_norm = Some(v);
    }
    if h.no_clip {
        cfg.clip_norm = None;
    }
    if let Some(v) = h.threads {
        cfg.threads = v;
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))
}

/// Graph, data, split and the loaded dataset.
struct Loaded {
    spec: GraphSpec,
    data_path: PathBuf,
    train_days: usize,
    dataset: Dataset,
}

fn load_dataset(spec: GraphSpec, data_path: PathBuf, train_days: Option<usize>) -> CliResult<Loaded> {
    let graph = load_graph(&spec)?;
    let series = load_series(&data_path, &graph)?;
    let train_days = train_days.unwrap_or_else(|| default_train_days(series.grid().day_count()));
    let dataset = Dataset::prepare(graph, &series, train_days)?;
    Ok(Loaded {
        spec,
        data_path,
        train_days,
        dataset,
    })
}

fn load_checkpoint(path: &Path, graph: &RoadGraph) -> CliResult<(Model, Option<usize>)> {
    let ck = Checkpoint::load(path)?;
    let train_days = ck
        .training
        .get("train_days")
        .and_then(|v| v.as_u64())
        .map(|v| v as usize);
    Ok((ck.into_model_for(graph)?, train_days))
}

pub fn generate(args: GenerateArgs) -> CliResult {
    let spec = require_graph(&args.graph)?;
    let graph = load_graph(&spec)?;
    let mut params = SynthParams::default();
    if let Some(v) = args.start_date {
        params.start_date = v;
    }
    if let Some(v) = args.noise {
        params.noise_sigma_kmh = v;
    }
    if let Some(v) = args.wave_lag {
        params.wave_lag_slots = v;
    }
    if let Some(v) = args.bottleneck {
        params.bottleneck = v;
    }
    if let Some(v) = args.peak_jitter {
        params.peak_jitter_minutes = v;
    }
    if let Some(v) = args.depth_jitter {
        params.depth_jitter = v;
    }
    if let Some(v) = args.incidents {
        params.incident_rate_per_day = v;
    }
    let days = args.days as usize;
    let series = generate_synthetic(&graph, days, args.seed, &params)?;
    let dir = out_dir(&args.out.out)?;

    let speeds = dir.join("speeds.csv");
    data::write_csv(&series, create(&speeds)?)?;
    announce(&speeds);
    let sidecar = dir.join("speeds.params.json");
    let record = SynthRecord {
        seed: args.seed,
        days,
        links: graph.link_count(),
        params: params.clone(),
    };
    write_file(
        &sidecar,
        serde_json::to_string_pretty(&record)
            .map_err(roadcast::Error::from)?
            .as_bytes(),
    )?;
    announce(&sidecar);
    let links = dir.join("links.csv");
    write_links(&graph, create(&links)?)?;
    announce(&links);
    let edges = dir.join("edges.csv");
    write_edges(&graph, create(&edges)?)?;
    announce(&edges);

    let mut run = RunRecord::new("generate", spec);
    run.options = json!({ "days": days, "seed": args.seed, "params": params });
    run.write(dir)
}

pub fn stats(args: StatsArgs) -> CliResult {
    let spec = require_graph(&args.data.graph)?;
    let data_path = require_data(&args.data)?;
    let graph = load_graph(&spec)?;
    let series = load_series(&data_path, &graph)?;
    let train_days = args
        .data
        .train_days
        .unwrap_or_else(|| default_train_days(series.grid().day_count()));
    let (train, _) = split(&series, train_days)?;
    let stats = compute_stats(&train)?;
    let dir = out_dir(&args.out.out)?;
    let path = dir.join("stats.csv");
    stats.write_csv(create(&path)?)?;
    announce(&path);

    let mut run = RunRecord::new("stats", spec);
    run.data = Some(data_path);
    run.train_days = Some(train_days);
    run.write(dir)
}

pub fn train(args: TrainArgs) -> CliResult {
    let base = args.from_run.as_deref().map(RunRecord::load).transpose()?;
    let spec = match graph_spec(&args.data.graph) {
        Some(s) => s,
        None => base
            .as_ref()
            .map(|r| r.graph.clone())
            .ok_or_else(|| CliError::usage("a graph is required: pass --ring N, --links/--edges or --from-run"))?,
    };
    let data_path = match args
        .data
        .data
        .clone()
        .or_else(|| base.as_ref().and_then(|r| r.data.clone()))
    {
        Some(p) => p,
        None => return Err(CliError::usage("--data PATH is required")),
    };
    let train_days = args
        .data
        .train_days
        .or_else(|| base.as_ref().and_then(|r| r.train_days));
    let mut cfg = base.as_ref().and_then(|r| r.train.clone()).unwrap_or_default();
    apply_hyper(&mut cfg, &args.hyper)?;

    let loaded = load_dataset(spec, data_path, train_days)?;
    let (model, history, splits) = train_model(&loaded.dataset, &cfg)?;
    let dir = out_dir(&args.out.out)?;

    let training = json!({
        "train": cfg,
        "train_days": loaded.train_days,
        "best_epoch": history.best_epoch,
        "epochs_run": history.epochs.len(),
    });
    let ck_path = dir.join("checkpoint.json");
    Checkpoint::new(&model, loaded.dataset.graph().link_ids(), training).save(&ck_path)?;
    announce(&ck_path);
    let hist_path = dir.join("history.csv");
    history.write_csv(create(&hist_path)?)?;
    announce(&hist_path);

    if splits.test.is_empty() {
        log::warn!("no test samples; skipping test metrics");
    } else {
        let report = evaluate_all(
            &[&model],
            &splits.test,
            EvalOptions {
                threads: cfg.threads,
                timing: false,
            },
        )?;
        let path = dir.join("metrics.csv");
        report.write_csv(create(&path)?)?;
        announce(&path);
    }

    let mut run = RunRecord::new("train", loaded.spec);
    run.data = Some(loaded.data_path);
    run.train_days = Some(loaded.train_days);
    run.train = Some(cfg);
    run.write(dir)
}

pub fn predict(args: PredictArgs) -> CliResult {
    let spec = require_graph(&args.data.graph)?;
    let data_path = require_data(&args.data)?;
    let graph = load_graph(&spec)?;
    let (model, ck_days) = load_checkpoint(&args.checkpoint, &graph)?;
    let loaded = load_dataset(spec, data_path, args.data.train_days.or(ck_days))?;
    let cfg = model.config().clone();
    let splits = loaded.dataset.samples(model.mask(), cfg.lookback, cfg.horizon)?;
    let preds = predict_all(&model, &splits.test, args.threads)?;

    let dir = out_dir(&args.out.out)?;
    let path = dir.join("predictions.csv");
    let grid = loaded.dataset.test().grid();
    let ids = loaded.dataset.graph().link_ids();
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record([
        "link_id",
        "anchor_timestamp",
        "step",
        "target_timestamp",
        "predicted_kmh",
        "observed_kmh",
    ])
    .map_err(roadcast::Error::from)?;
    for (s, p) in splits.test.iter().zip(&preds) {
        let anchor = format_timestamp(grid.timestamp(s.anchor));
        for (j, (&vh, &v)) in p.iter().zip(&s.targets).enumerate() {
            w.write_record([
                ids[s.link].clone(),
                anchor.clone(),
                (j + 1).to_string(),
                format_timestamp(grid.timestamp(s.anchor + j + 1)),
                vh.to_string(),
                v.to_string(),
            ])
            .map_err(roadcast::Error::from)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    announce(&path);

    let mut run = RunRecord::new("predict", loaded.spec);
    run.data = Some(loaded.data_path);
    run.train_days = Some(loaded.train_days);
    run.options = json!({ "checkpoint": args.checkpoint, "threads": args.threads });
    run.write(dir)
}

pub fn evaluate(args: EvaluateArgs) -> CliResult {
    let spec = require_graph(&args.data.graph)?;
    let data_path = require_data(&args.data)?;
    let default_list = if args.checkpoint.is_some() {
        "model,ha,naive,rolling,direct"
    } else {
        "ha,naive,rolling,direct"
    };
    let kinds = PredictorKind::parse_list(args.predictors.as_deref().unwrap_or(default_list))
        .map_err(|e| CliError::usage(format!("--predictors: {e}")))?;
    let wants_model = kinds.contains(&PredictorKind::Model);
    if wants_model && args.checkpoint.is_none() {
        return Err(CliError::usage("the `model` predictor needs --checkpoint"));
    }
    let n_flag = horizon_steps(&args.horizon)?;
    let graph = load_graph(&spec)?;
    let ck = match (&args.checkpoint, wants_model) {
        (Some(p), true) => Some(load_checkpoint(p, &graph)?),
        _ => None,
    };
    let (m, n, mask) = match &ck {
        Some((model, _)) => {
            let c = model.config();
            if args.m.is_some_and(|m| m != c.lookback) || n_flag.is_some_and(|n| n != c.horizon) {
                return Err(CliError::usage(format!(
                    "--m/--n disagree with the checkpoint (m = {}, n = {})",
                    c.lookback, c.horizon
                )));
            }
            (c.lookback, c.horizon, model.mask().clone())
        }
        None => {
            let d = TrainConfig::default();
            (
                args.m.unwrap_or(d.lookback),
                n_flag.unwrap_or(d.horizon),
                HopMask::identity(graph.link_count()),
            )
        }
    };
    let ck_days = ck.as_ref().and_then(|(_, d)| *d);
    let loaded = load_dataset(spec, data_path, args.data.train_days.or(ck_days))?;
    let data = &loaded.dataset;
    let splits = data.samples(&mask, m, n)?;
    if splits.test.is_empty() {
        return Err(roadcast::Error::Validation("no test samples to evaluate".into()).into());
    }
    let linear = if kinds
        .iter()
        .any(|k| matches!(k, PredictorKind::Rolling | PredictorKind::Direct))
    {
        Some(LinearBaseline::fit(data.train(), m, n)?)
    } else {
        None
    };
    let ha = HistoricalAverage {
        stats: data.stats(),
        grid: data.test().grid(),
    };
    let rolling = linear.as_ref().map(RollingLinear);
    let direct = linear.as_ref().map(DirectLinear);
    let mut refs: Vec<&dyn Forecaster> = Vec::new();
    for k in &kinds {
        refs.push(match k {
            PredictorKind::Model => &ck.as_ref().expect("checked above").0,
            PredictorKind::Ha => &ha,
            PredictorKind::Naive => &Naive,
            PredictorKind::Rolling => rolling.as_ref().expect("fitted above"),
            PredictorKind::Direct => direct.as_ref().expect("fitted above"),
        });
    }
    let report = evaluate_all(
        &refs,
        &splits.test,
        EvalOptions {
            threads: args.threads,
            timing: !args.no_timing,
        },
    )?;

    let dir = out_dir(&args.out.out)?;
    let csv_path = dir.join("metrics.csv");
    report.write_csv(create(&csv_path)?)?;
    announce(&csv_path);
    let json_path = dir.join("metrics.json");
    write_file(&json_path, report.to_json()?.as_bytes())?;
    announce(&json_path);

    let mut run = RunRecord::new("evaluate", loaded.spec);
    run.data = Some(loaded.data_path);
    run.train_days = Some(loaded.train_days);
    run.options = json!({
        "checkpoint": args.checkpoint,
        "predictors": kinds,
        "m": m,
        "n": n,
        "threads": args.threads,
        "timing": !args.no_timing,
    });
    run.write(dir)
}

pub fn attention(args: AttentionArgs) -> CliResult {
    let spec = require_graph(&args.data.graph)?;
    let data_path = require_data(&args.data)?;
    let graph = load_graph(&spec)?;
    let (model, ck_days) = load_checkpoint(&args.checkpoint, &graph)?;
    let wanted: Option<Vec<usize>> = match &args.select_links {
        None => None,
        Some(list) => Some(
            list.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|id| {
                    graph
                        .link_index(id)
                        .ok_or_else(|| CliError::usage(format!("--select-links: unknown link `{id}`")))
                })
                .collect::<CliResult<_>>()?,
        ),
    };
    let loaded = load_dataset(spec, data_path, args.data.train_days.or(ck_days))?;
    let cfg = model.config();
    let splits = loaded.dataset.samples(model.mask(), cfg.lookback, cfg.horizon)?;
    let selection: Vec<usize> = splits
        .test
        .iter()
        .enumerate()
        .filter(|(_, s)| wanted.as_ref().is_none_or(|w| w.contains(&s.link)))
        .map(|(i, _)| i)
        .step_by(args.stride as usize)
        .collect();
    let records = export_attention(&model, &splits.test, &selection)?;

    let dir = out_dir(&args.out.out)?;
    let path = dir.join("attention.csv");
    write_attention_csv(
        &records,
        loaded.dataset.graph().link_ids(),
        loaded.dataset.test().grid(),
        create(&path)?,
    )?;
    announce(&path);

    let mut run = RunRecord::new("attention", loaded.spec);
    run.data = Some(loaded.data_path);
    run.train_days = Some(loaded.train_days);
    run.options = json!({
        "checkpoint": args.checkpoint,
        "select_links": args.select_links,
        "stride": args.stride,
    });
    run.write(dir)
}

pub fn khop(args: SweepArgs) -> CliResult {
    let spec = require_graph(&args.data.graph)?;
    let data_path = require_data(&args.data)?;
    let ks: Vec<usize> = args
        .ks
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::usage(format!("--ks: `{s}` is not a hop order")))
        })
        .collect::<CliResult<_>>()?;
    if ks.is_empty() {
        return Err(CliError::usage("--ks needs at least one hop order"));
    }
    let mut cfg = TrainConfig::default();
    apply_hyper(&mut cfg, &args.hyper)?;
    let loaded = load_dataset(spec, data_path, args.data.train_days)?;
    let rows = khop_sweep(&loaded.dataset, &cfg, &ks, cfg.threads)?;

    let dir = out_dir(&args.out.out)?;
    let path = dir.join("khop.csv");
    write_sweep_csv(&rows, create(&path)?)?;
    announce(&path);

    let mut run = RunRecord::new("khop-sweep", loaded.spec);
    run.data = Some(loaded.data_path);
    run.train_days = Some(loaded.train_days);
    run.train = Some(cfg);
    run.options = json!({ "ks": ks });
    run.write(dir)
}
