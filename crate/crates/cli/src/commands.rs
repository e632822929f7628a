use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use lbse::data::{load_dataset, synth_clusters, SplitSpec};
use lbse::encoder::encode;
use lbse::eval::{average_reports, evaluate, split_and_run, EvalConfig};
use lbse::{CodeFile, Dataset, DatasetFormat, HammingIndex, LbseConfig, LbseModel, MetricsReport};
use serde::Serialize;

use crate::grid;
use crate::{BenchArgs, CliError, DataArg, EncodeArgs, EvalArgs, EvalOpts, Hyper, SynthArgs, SynthSpec, TrainArgs};

/// Fails early if an output file could not be created, so nothing is
/// computed only to be thrown away.
fn check_output(path: &Path) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::Lbse(lbse::LbseError::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("output directory {} does not exist", parent.display()),
        ))));
    }
    Ok(())
}

fn check_input(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Lbse(lbse::LbseError::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{} is not a readable file", path.display()),
        ))));
    }
    Ok(())
}

fn load(data: &DataArg) -> Result<Dataset, CliError> {
    check_input(&data.data)?;
    let format = data.format.unwrap_or_else(|| DatasetFormat::from_path(&data.data));
    Ok(load_dataset(&data.data, format)?)
}

fn generate(spec: &SynthSpec, seed: u64) -> Result<Dataset, CliError> {
    Ok(synth_clusters(spec.per_class, spec.classes as usize, spec.dim, spec.spread, seed)?)
}

fn lbse_config(h: &Hyper, bits: usize) -> LbseConfig {
    LbseConfig {
        code_length: bits,
        alpha: h.alpha,
        beta: h.beta,
        gamma: h.gamma,
        lambda: h.lambda,
        max_iters: h.max_iters,
        seed: h.seed,
        block: h.block,
        ..LbseConfig::default()
    }
}

fn eval_config(o: &EvalOpts) -> EvalConfig {
    EvalConfig {
        depth: o.depth,
        k_vote: o.k_vote,
        precision_ks: o.precision_at.clone(),
        ..EvalConfig::default()
    }
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    check_output(&a.output)?;
    let d = generate(&a.spec, a.seed)?;
    d.save(&a.output, DatasetFormat::from_path(&a.output))?;
    log::info!("wrote {} samples ({} classes, D={}) to {}", d.len(), d.num_classes(), d.dim(), a.output.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a LbseConfig,
    samples: usize,
    #[serde(flatten)]
    stats: &'a lbse::TrainStats,
    history: &'a [lbse::trainer::IterationRecord],
}

fn default_stats_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".stats.json");
    s.into()
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let stats_path = a.stats.clone().unwrap_or_else(|| default_stats_path(&a.output));
    check_output(&a.output)?;
    check_output(&stats_path)?;
    let data = load(&a.data)?;
    let cfg = lbse_config(&a.hyper, a.bits);
    cfg.validate_for(&data)?;

    let (model, stats) = lbse::trainer::train(&data, &cfg)?;
    model.save(&a.output)?;
    let report = TrainReport { config: &cfg, samples: data.len(), stats: &stats, history: model.history() };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Format(e.to_string()))?;
    fs::write(&stats_path, json + "\n")?;

    match stats.converged_at {
        Some(it) => log::info!("converged after {it} iterations"),
        None => log::info!("stopped at the iteration cap ({})", cfg.max_iters),
    }
    Ok(())
}

pub fn encode_cmd(a: EncodeArgs) -> Result<(), CliError> {
    check_input(&a.model)?;
    check_output(&a.output)?;
    let model = LbseModel::load(&a.model)?;
    let data = load(&a.data)?;
    if data.dim() != model.feature_dim() {
        return Err(lbse::LbseError::DimensionMismatch(format!(
            "model expects {} features, dataset has {}",
            model.feature_dim(),
            data.dim()
        ))
        .into());
    }
    let codes = encode(&model, data.features())?;
    CodeFile::new(codes, Some(data.labels().to_vec()))?.save(&a.output)?;
    Ok(())
}

fn load_codes(path: &Path) -> Result<(lbse::CodeMatrix, Vec<usize>), CliError> {
    check_input(path)?;
    let f = CodeFile::load(path)?;
    let labels = f
        .labels
        .ok_or_else(|| CliError::Format(format!("{} carries no labels", path.display())))?;
    Ok((f.codes, labels))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    for out in a.json.iter().chain(&a.csv) {
        check_output(out)?;
    }
    let (db_codes, db_labels) = load_codes(&a.database)?;
    let (q_codes, q_labels) = load_codes(&a.queries)?;
    let exclude_self = if a.exclude_self {
        true
    } else if a.include_self {
        false
    } else {
        same_file(&a.database, &a.queries)
    };
    let cfg = EvalConfig { exclude_self, per_query: a.per_query, ..eval_config(&a.opts) };
    let index = HammingIndex::new(db_codes, db_labels)?;
    let report = evaluate(&index, &q_codes, &q_labels, None, &cfg)?;

    let json = report.to_json()?;
    match &a.json {
        Some(p) => fs::write(p, json + "\n")?,
        None => println!("{json}"),
    }
    if let Some(p) = &a.csv {
        let mut w = BufWriter::new(File::create(p)?);
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn bench(a: BenchArgs) -> Result<(), CliError> {
    if let Some(out) = &a.output {
        check_output(out)?;
    }
    if !(a.query_fraction > 0.0 && a.query_fraction < 1.0) {
        return Err(CliError::Usage(format!("--query-fraction must lie in (0, 1), got {}", a.query_fraction)));
    }
    if a.bits.is_empty() || a.bits.contains(&0) {
        return Err(CliError::Usage("--bits needs positive code lengths".into()));
    }
    let axes = grid::parse_axes(&a.sweep)?;
    let data = match &a.data {
        Some(p) => load(&DataArg { data: p.clone(), format: a.format })?,
        None => generate(&a.synth, a.synth_seed)?,
    };
    let eval = eval_config(&a.eval);

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut metric_names: Option<Vec<String>> = None;
    for &bits in &a.bits {
        for cell in grid::cells(&axes) {
            let mut cfg = lbse_config(&a.hyper, bits);
            for (name, v) in &cell {
                match name.as_str() {
                    "alpha" => cfg.alpha = *v,
                    "beta" => cfg.beta = *v,
                    "gamma" => cfg.gamma = *v,
                    "lambda" => cfg.lambda = *v,
                    _ => unreachable!("axis names are validated when parsed"),
                }
            }
            let mut reports: Vec<MetricsReport> = Vec::new();
            let mut iterations = 0usize;
            for r in 0..a.runs {
                let run_cfg = LbseConfig { seed: cfg.seed.wrapping_add(r), ..cfg.clone() };
                let spec = SplitSpec { query_fraction: a.query_fraction, seed: a.split_seed.wrapping_add(r) };
                let outcome = split_and_run(&data, spec, &run_cfg, &eval, a.standardize)?;
                iterations += outcome.stats.iterations();
                reports.push(outcome.report);
            }
            let avg = average_reports(&reports).expect("at least one run");
            log::info!("L={bits} alpha={} gamma={}: mAP {:.4}", cfg.alpha, cfg.gamma, avg.map);

            let metrics = avg.rows();
            metric_names.get_or_insert_with(|| metrics.iter().map(|(k, _)| k.clone()).collect());
            let mut row = vec![
                bits.to_string(),
                fmt_f64(cfg.alpha),
                fmt_f64(cfg.beta),
                fmt_f64(cfg.gamma),
                fmt_f64(cfg.lambda),
                a.runs.to_string(),
            ];
            row.extend(metrics.iter().map(|(_, v)| fmt_f64(*v)));
            row.push(fmt_f64(iterations as f64 / a.runs as f64));
            rows.push(row);
        }
    }

    let mut header: Vec<String> = ["bits", "alpha", "beta", "gamma", "lambda", "runs"].map(String::from).to_vec();
    header.extend(metric_names.unwrap_or_default());
    header.push("iterations".into());

    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
