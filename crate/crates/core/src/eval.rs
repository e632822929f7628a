//! End-to-end evaluation: retrieve against a Hamming index, vote for a class,
//! and score both tasks. Also the train/encode/evaluate loop used by the
//! benchmark sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, Dataset, SplitSpec, Standardizer};
use crate::encoder::{encode, CodeMatrix};
use crate::index::{vote, HammingIndex, DEFAULT_DEPTH, DEFAULT_K_VOTE};
use crate::metrics::{
    average_precision, classification_metrics, mean_average_precision, mean_precision_at_k,
    MetricsReport, QueryDetail,
};
use crate::trainer::{train, LbseConfig, TrainStats};
use crate::{LbseError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Retrieval depth for mAP.
    pub depth: usize,
    pub k_vote: usize,
    pub precision_ks: Vec<usize>,
    /// Query `i` is database item `i`; never retrieve it for itself.
    pub exclude_self: bool,
    pub per_query: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            depth: DEFAULT_DEPTH,
            k_vote: DEFAULT_K_VOTE,
            precision_ks: vec![1, 10, 50, DEFAULT_DEPTH],
            exclude_self: false,
            per_query: false,
        }
    }
}

/// Scores `queries` (with ground-truth `query_labels`) against `db`.
/// `num_classes` of `None` infers it from the largest label seen.
pub fn evaluate(
    db: &HammingIndex,
    queries: &CodeMatrix,
    query_labels: &[usize],
    num_classes: Option<usize>,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    if queries.is_empty() {
        return Err(LbseError::LengthMismatch("no queries to evaluate".into()));
    }
    if db.is_empty() {
        return Err(LbseError::EmptyIndex);
    }
    if query_labels.len() != queries.len() {
        return Err(LbseError::LengthMismatch(format!(
            "{} labels for {} queries",
            query_labels.len(),
            queries.len()
        )));
    }
    if queries.code_length() != db.codes().code_length() {
        return Err(LbseError::LengthMismatch(format!(
            "query codes have {} bits, database codes have {}",
            queries.code_length(),
            db.codes().code_length()
        )));
    }
    if cfg.exclude_self && queries.len() != db.len() {
        return Err(LbseError::LengthMismatch(
            "self-exclusion needs the query set to be the database".into(),
        ));
    }
    if cfg.depth == 0 || cfg.k_vote == 0 || cfg.precision_ks.contains(&0) {
        return Err(LbseError::InvalidConfig("depth, k_vote and every K must be >= 1".into()));
    }

    let reach = cfg
        .precision_ks
        .iter()
        .copied()
        .chain([cfg.depth, cfg.k_vote])
        .max()
        .unwrap_or(cfg.depth);
    let labels = db.labels();

    let per_query: Vec<(usize, Vec<bool>)> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let skip = cfg.exclude_self.then_some(q);
            let nn = db.search_excluding(queries.code(q), reach, skip)?;
            let truth = query_labels[q];
            let predicted = vote(
                nn.ids
                    .iter()
                    .zip(&nn.distances)
                    .take(cfg.k_vote)
                    .map(|(&i, &d)| (labels[i], d)),
            );
            let relevance = nn.ids.iter().map(|&i| labels[i] == truth).collect();
            Ok((predicted, relevance))
        })
        .collect::<Result<_>>()?;

    let predicted: Vec<usize> = per_query.iter().map(|(p, _)| *p).collect();
    let rankings: Vec<&[bool]> = per_query.iter().map(|(_, r)| r.as_slice()).collect();
    let depth_rankings: Vec<&[bool]> = rankings.iter().map(|r| &r[..cfg.depth.min(r.len())]).collect();

    let c = num_classes.unwrap_or_else(|| {
        query_labels
            .iter()
            .chain(labels)
            .chain(&predicted)
            .max()
            .map_or(2, |m| (m + 1).max(2))
    });
    let (_, summary) = classification_metrics(&predicted, query_labels, c)?;

    let details = cfg.per_query.then(|| {
        depth_rankings
            .iter()
            .enumerate()
            .map(|(q, r)| QueryDetail {
                query: q,
                truth: query_labels[q],
                predicted: predicted[q],
                average_precision: average_precision(r, cfg.depth),
            })
            .collect()
    });

    Ok(MetricsReport {
        oa: summary.oa,
        sensitivity: summary.sensitivity,
        ppv: summary.ppv,
        f1: summary.f1,
        map: mean_average_precision(&depth_rankings, cfg.depth),
        precision_at_k: cfg
            .precision_ks
            .iter()
            .map(|&k| (k, mean_precision_at_k(&rankings, k)))
            .collect(),
        per_query: details,
    })
}

/// Outcome of one train/encode/evaluate run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub stats: TrainStats,
}

/// Trains on `database`, encodes both sides and evaluates `query` against
/// the database codes. With `standardize`, a transform fitted on the
/// database is applied to both.
pub fn run_experiment(
    database: &Dataset,
    query: &Dataset,
    cfg: &LbseConfig,
    eval: &EvalConfig,
    standardize: bool,
) -> Result<ExperimentOutcome> {
    let (database, query) = if standardize {
        let s = Standardizer::fit(database.features());
        (s.apply(database)?, s.apply(query)?)
    } else {
        (database.clone(), query.clone())
    };
    let (model, stats) = train(&database, cfg)?;
    let db_codes = encode(&model, database.features())?;
    let q_codes = encode(&model, query.features())?;
    let index = HammingIndex::new(db_codes, database.labels().to_vec())?;
    let report = evaluate(&index, &q_codes, query.labels(), Some(database.num_classes()), eval)?;
    Ok(ExperimentOutcome { report, stats })
}

/// Splits `data` and runs [`run_experiment`].
pub fn split_and_run(
    data: &Dataset,
    split_spec: SplitSpec,
    cfg: &LbseConfig,
    eval: &EvalConfig,
    standardize: bool,
) -> Result<ExperimentOutcome> {
    let (db, q) = split(data, split_spec)?;
    run_experiment(&db, &q, cfg, eval, standardize)
}

/// Element-wise mean of reports over repeated runs (per-query detail is
/// dropped).
pub fn average_reports(reports: &[MetricsReport]) -> Option<MetricsReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(MetricsReport {
        oa: avg(|r| r.oa),
        sensitivity: avg(|r| r.sensitivity),
        ppv: avg(|r| r.ppv),
        f1: avg(|r| r.f1),
        map: avg(|r| r.map),
        precision_at_k: first
            .precision_at_k
            .iter()
            .enumerate()
            .map(|(i, &(k, _))| (k, reports.iter().map(|r| r.precision_at_k[i].1).sum::<f64>() / n))
            .collect(),
        per_query: None,
    })
}
