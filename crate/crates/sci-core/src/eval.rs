//! Classifier evaluation and the four reproduction experiments.
//!
//! Scores simulated datasets with the index and its ablations, computes
//! ROC/AUC with stratified bootstrap confidence intervals, picks the
//! operating threshold by the Youden criterion, and benchmarks against a
//! cross-validated logistic regression on the raw components.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dgp::{
    builtin_spec, builtin_specs, generate_dataset, sweep_specs, Dataset, DgpError, SimulatedPath,
    SweepParam, ADVERSARIAL_NAMES, BASELINE_NAMES, N_BINS,
};
use crate::metrics::{
    compute_sci_for_shock, rolling_sci, LogitPath, MetricsError, SciComponents, TraderFlows,
    DEFAULT_BIN_MINUTES,
};
use crate::rng::{bootstrap_stream, derived_stream};

/// Default resample count for bootstrap confidence intervals.
pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// Default two-sided confidence level.
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
/// Default evaluation window grid, in 5-minute bins (1h, 2h, 3h, 4h).
pub const WINDOW_GRID: [usize; 4] = [12, 24, 36, 48];
/// Default AR-coefficient grid for the robustness sweep: the anchor
/// value, a nearby interior point, and the no-reversal endpoint.
pub const PHI_GRID: [f64; 3] = [-0.55, -0.5, 0.0];
/// Default concentration grid for the Dirichlet-alpha sweep.
pub const ALPHA_GRID: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least one positive and one negative example")]
    OneClass,
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("singular system in logistic solve")]
    Singular,
    #[error("logistic fit did not converge")]
    NotConverged,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Dgp(#[from] DgpError),
}

type Result<T> = std::result::Result<T, EvalError>;

/// Index components for one path, plus its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    pub dgp: String,
    pub label: u8,
    pub components: SciComponents,
}

impl PathScore {
    /// Equal-weight additive ablation of the composite.
    pub fn additive(&self) -> f64 {
        let c = &self.components;
        (c.pr + (1.0 - c.ts) + (1.0 - c.hhi_flow)) / 3.0
    }
}

/// Score every path over its first `window_bins` bins (the shock window
/// starts at the first price point). Path-level flows are used whole;
/// they are not attributable to sub-windows in the simulated universe.
pub fn score_dataset(dataset: &Dataset, window_bins: usize) -> Result<Vec<PathScore>> {
    dataset
        .paths
        .iter()
        .map(|p| score_path(p, window_bins))
        .collect()
}

pub fn score_path(path: &SimulatedPath, window_bins: usize) -> Result<PathScore> {
    if window_bins == 0 || window_bins >= path.prices.len() {
        return Err(EvalError::InvalidParam(format!("window {window_bins} bins")));
    }
    let prices =
        LogitPath::from_probabilities(&path.prices[..=window_bins], DEFAULT_BIN_MINUTES)?;
    let components = compute_sci_for_shock(
        &prices,
        &path.bin_volumes[..window_bins],
        &path.trader_flows,
        0,
        window_bins,
        None,
    )?;
    Ok(PathScore { dgp: path.dgp_name.clone(), label: path.label, components })
}

/// Split a path's whole-window trader flows into per-bin flows in
/// proportion to each bin's share of total volume, for trailing-window
/// monitoring of simulated paths.
pub fn per_bin_flows(path: &SimulatedPath) -> Vec<TraderFlows> {
    let total: f64 = path.bin_volumes.iter().map(|v| v.total()).sum();
    path.bin_volumes
        .iter()
        .map(|v| {
            let share = if total > 0.0 { v.total() / total } else { 0.0 };
            TraderFlows::from_entries(
                path.trader_flows
                    .entries()
                    .iter()
                    .map(|(k, &f)| (k.clone(), f * share)),
            )
        })
        .collect()
}

/// Trailing-window SCI trace for one simulated path.
pub fn rolling_trace(path: &SimulatedPath, w: usize) -> Result<Vec<Option<SciComponents>>> {
    let prices = LogitPath::from_probabilities(&path.prices, DEFAULT_BIN_MINUTES)?;
    let flows = per_bin_flows(path);
    Ok(rolling_sci(&prices, &path.bin_volumes, &flows, w)?)
}

// ---------------------------------------------------------------------
// ROC / AUC
// ---------------------------------------------------------------------

fn check_classes(labels: &[u8]) -> Result<(usize, usize)> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::OneClass);
    }
    Ok((n_pos, n_neg))
}

/// AUC by the rank statistic, ties counted one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let (n_pos, n_neg) = check_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tie groups.
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum_pos - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One point on the ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn rates_at(scores: &[f64], labels: &[u8], tau: f64, n_pos: usize, n_neg: usize) -> (f64, f64) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        if s > tau {
            if l == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64)
}

/// Candidate thresholds for the rule `score > tau`: midpoints between
/// consecutive distinct scores, one below the minimum, and the maximum
/// itself (which classifies everything negative).
fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut taus = Vec::with_capacity(distinct.len() + 1);
    taus.push(distinct[0] - 1.0);
    for pair in distinct.windows(2) {
        taus.push((pair[0] + pair[1]) / 2.0);
    }
    taus.push(distinct[distinct.len() - 1]);
    taus
}

/// Full ROC curve over the candidate threshold sweep.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let (n_pos, n_neg) = check_classes(labels)?;
    Ok(candidate_thresholds(scores)
        .into_iter()
        .map(|tau| {
            let (fpr, tpr) = rates_at(scores, labels, tau, n_pos, n_neg);
            RocPoint { threshold: tau, fpr, tpr }
        })
        .collect())
}

/// Operating point chosen by the Youden criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub tau: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub youden_j: f64,
}

/// Maximize `J = TPR - FPR` over the candidate sweep; ties resolve
/// toward the larger threshold (the more conservative alarm).
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<OperatingPoint> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let (n_pos, n_neg) = check_classes(labels)?;
    let mut best: Option<OperatingPoint> = None;
    for tau in candidate_thresholds(scores) {
        let (fpr, tpr) = rates_at(scores, labels, tau, n_pos, n_neg);
        let j = tpr - fpr;
        let better = match &best {
            None => true,
            Some(b) => j > b.youden_j || (j == b.youden_j && tau > b.tau),
        };
        if better {
            best = Some(OperatingPoint { tau, tpr, fpr, youden_j: j });
        }
    }
    Ok(best.expect("candidate sweep is nonempty"))
}

/// Two-sided percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub resamples: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between order statistics.
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Stratified bootstrap AUC interval: positives and negatives are
/// resampled separately so every resample keeps both classes. Resample
/// `b` draws from its own stream, so the interval does not depend on
/// evaluation order.
pub fn bootstrap_auc_ci(
    scores: &[f64],
    labels: &[u8],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceInterval> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if resamples == 0 || !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(EvalError::InvalidParam(format!(
            "resamples {resamples}, level {level}"
        )));
    }
    check_classes(labels)?;
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .collect();
    let mut aucs = Vec::with_capacity(resamples);
    for b in 0..resamples {
        let mut rng = bootstrap_stream(seed, b as u64);
        let mut s = Vec::with_capacity(scores.len());
        let mut l = Vec::with_capacity(scores.len());
        for _ in 0..pos.len() {
            s.push(pos[rng.gen_range(0..pos.len())]);
            l.push(1u8);
        }
        for _ in 0..neg.len() {
            s.push(neg[rng.gen_range(0..neg.len())]);
            l.push(0u8);
        }
        aucs.push(roc_auc(&s, &l)?);
    }
    aucs.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        lo: percentile(&aucs, alpha),
        hi: percentile(&aucs, 1.0 - alpha),
        level,
        resamples,
    })
}

// ---------------------------------------------------------------------
// Logistic benchmark
// ---------------------------------------------------------------------

/// Solve `a x = b` in place by Gaussian elimination with partial
/// pivoting; `a` is small (4x4 here).
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot][col].abs() < 1e-12 {
            return Err(EvalError::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fitted logistic model; `coefficients[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Set when the ridge fallback was needed (separation or a singular
    /// Newton system at ridge zero).
    pub regularized: bool,
}

impl LogisticFit {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let eta = self.coefficients[0]
            + features
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>();
        sigmoid(eta)
    }
}

const LOGISTIC_MAX_ITER: usize = 100;
const LOGISTIC_GRAD_TOL: f64 = 1e-8;
const LOGISTIC_RIDGE_FALLBACK: f64 = 1e-6;
// An unpenalized fit walking past this magnitude is treated as
// (quasi-)separation; the penalized problem has a finite optimum, so it
// only gets a loose divergence guard.
const LOGISTIC_COEF_CAP_MLE: f64 = 1e2;
const LOGISTIC_COEF_CAP_RIDGE: f64 = 1e6;

fn fit_logistic_ridge(features: &[Vec<f64>], labels: &[u8], ridge: f64) -> Result<LogisticFit> {
    let n = features.len();
    let k = features[0].len() + 1;
    let mut beta = vec![0.0; k];
    let row = |i: usize, j: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            features[i][j - 1]
        }
    };
    for iter in 1..=LOGISTIC_MAX_ITER {
        let mut grad = vec![0.0; k];
        let mut hess = vec![vec![0.0; k]; k];
        for i in 0..n {
            let eta: f64 = (0..k).map(|j| row(i, j) * beta[j]).sum();
            let p = sigmoid(eta);
            let resid = labels[i] as f64 - p;
            let w = (p * (1.0 - p)).max(1e-12);
            for j in 0..k {
                grad[j] += row(i, j) * resid;
                for m in j..k {
                    hess[j][m] += w * row(i, j) * row(i, m);
                }
            }
        }
        for j in 0..k {
            // Intercept is never penalized.
            if j > 0 {
                grad[j] -= ridge * beta[j];
                hess[j][j] += ridge;
            }
            for m in 0..j {
                hess[j][m] = hess[m][j];
            }
        }
        let grad_norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if grad_norm < LOGISTIC_GRAD_TOL {
            return Ok(LogisticFit { coefficients: beta, iterations: iter - 1, regularized: ridge > 0.0 });
        }
        let step = solve_dense(hess, grad)?;
        for j in 0..k {
            beta[j] += step[j];
        }
        let cap = if ridge > 0.0 { LOGISTIC_COEF_CAP_RIDGE } else { LOGISTIC_COEF_CAP_MLE };
        if beta.iter().any(|b| !b.is_finite() || b.abs() > cap) {
            // Diverging coefficients indicate (quasi-)separation.
            return Err(EvalError::NotConverged);
        }
    }
    Err(EvalError::NotConverged)
}

/// Maximum-likelihood logistic regression by Newton iteration, with a
/// small ridge fallback when the unpenalized problem is separable.
pub fn fit_logistic(features: &[Vec<f64>], labels: &[u8]) -> Result<LogisticFit> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(EvalError::LengthMismatch(features.len(), labels.len()));
    }
    check_classes(labels)?;
    match fit_logistic_ridge(features, labels, 0.0) {
        Ok(fit) => Ok(fit),
        Err(EvalError::NotConverged) | Err(EvalError::Singular) => {
            let mut fit = fit_logistic_ridge(features, labels, LOGISTIC_RIDGE_FALLBACK)?;
            fit.regularized = true;
            Ok(fit)
        }
        Err(e) => Err(e),
    }
}

/// Round-robin assignment over independently shuffled positives and
/// negatives keeps every fold's class balance within one example.
fn stratified_folds(labels: &[u8], n_folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = derived_stream(seed, 1);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold = vec![0usize; labels.len()];
    for (slot, &i) in pos.iter().enumerate() {
        fold[i] = slot % n_folds;
    }
    for (slot, &i) in neg.iter().enumerate() {
        fold[i] = slot % n_folds;
    }
    fold
}

/// Cross-validated logistic benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticReport {
    /// Full-data fit: intercept, then one coefficient per feature.
    pub coefficients: Vec<f64>,
    /// Pooled out-of-fold AUC (the headline number).
    pub cv_auc: f64,
    pub in_sample_auc: f64,
    pub folds: usize,
    pub regularized: bool,
}

/// Fit with stratified k-fold cross-validation; the reported AUC pools
/// out-of-fold predictions into a single ranking.
pub fn fit_logistic_cv(
    features: &[Vec<f64>],
    labels: &[u8],
    n_folds: usize,
    seed: u64,
) -> Result<LogisticReport> {
    if n_folds < 2 {
        return Err(EvalError::InvalidParam(format!("{n_folds} folds")));
    }
    let full = fit_logistic(features, labels)?;
    let fold = stratified_folds(labels, n_folds, seed);
    let mut oof = vec![0.0; labels.len()];
    let mut regularized = full.regularized;
    for f in 0..n_folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
        let fx: Vec<Vec<f64>> = train.iter().map(|&i| features[i].clone()).collect();
        let fy: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let fit = fit_logistic(&fx, &fy)?;
        regularized |= fit.regularized;
        for i in (0..labels.len()).filter(|&i| fold[i] == f) {
            oof[i] = fit.predict(&features[i]);
        }
    }
    let in_sample: Vec<f64> = features.iter().map(|x| full.predict(x)).collect();
    Ok(LogisticReport {
        coefficients: full.coefficients,
        cv_auc: roc_auc(&oof, labels)?,
        in_sample_auc: roc_auc(&in_sample, labels)?,
        folds: n_folds,
        regularized,
    })
}

// ---------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------

/// Per-regime component means over a scored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSummary {
    pub dgp: String,
    pub label: u8,
    pub n: usize,
    pub mean_pr: f64,
    pub mean_ts: f64,
    pub mean_hhi: f64,
    pub mean_sci: f64,
}

pub fn summarize_by_dgp(scores: &[PathScore]) -> Vec<DgpSummary> {
    let mut out: Vec<DgpSummary> = Vec::new();
    for s in scores {
        let entry = match out.iter_mut().find(|d| d.dgp == s.dgp) {
            Some(e) => e,
            None => {
                out.push(DgpSummary {
                    dgp: s.dgp.clone(),
                    label: s.label,
                    n: 0,
                    mean_pr: 0.0,
                    mean_ts: 0.0,
                    mean_hhi: 0.0,
                    mean_sci: 0.0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        entry.n += 1;
        entry.mean_pr += s.components.pr;
        entry.mean_ts += s.components.ts;
        entry.mean_hhi += s.components.hhi_flow;
        entry.mean_sci += s.components.sci;
    }
    for d in &mut out {
        let n = d.n as f64;
        d.mean_pr /= n;
        d.mean_ts /= n;
        d.mean_hhi /= n;
        d.mean_sci /= n;
    }
    out
}

fn sci_scores(scores: &[PathScore]) -> (Vec<f64>, Vec<u8>) {
    (
        scores.iter().map(|s| s.components.sci).collect(),
        scores.iter().map(|s| s.label).collect(),
    )
}

/// Baseline separation experiment: the three baseline regimes, full
/// window, SCI discrimination plus the chosen operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Report {
    pub seed: u64,
    pub n_per_dgp: usize,
    pub window_bins: usize,
    pub summaries: Vec<DgpSummary>,
    pub auc: f64,
    pub auc_ci: ConfidenceInterval,
    pub operating_point: OperatingPoint,
    pub roc: Vec<RocPoint>,
}

pub fn run_exp1(n_per_dgp: usize, seed: u64, resamples: usize) -> Result<Exp1Report> {
    let specs: Vec<_> = BASELINE_NAMES
        .iter()
        .map(|n| builtin_spec(n))
        .collect::<std::result::Result<_, _>>()?;
    let dataset = generate_dataset(&specs, n_per_dgp, seed)?;
    let scored = score_dataset(&dataset, N_BINS)?;
    let (s, l) = sci_scores(&scored);
    Ok(Exp1Report {
        seed,
        n_per_dgp,
        window_bins: N_BINS,
        summaries: summarize_by_dgp(&scored),
        auc: roc_auc(&s, &l)?,
        auc_ci: bootstrap_auc_ci(&s, &l, resamples, DEFAULT_CI_LEVEL, seed)?,
        operating_point: youden_threshold(&s, &l)?,
        roc: roc_curve(&s, &l)?,
    })
}

/// Majority verdict for one adversarial regime at the frozen threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialVerdict {
    pub dgp: String,
    pub label: u8,
    pub mean_sci: f64,
    pub frac_above_tau: f64,
    /// Majority of paths exceeded the threshold.
    pub predicted_informed: bool,
    /// "type_i" (false alarm), "type_ii" (miss), or None when correct.
    pub error_type: Option<String>,
}

/// Adversarial stress experiment: threshold frozen from the baseline
/// experiment, then applied out of distribution to the five adversarial
/// regimes; the combined AUC pools those five regimes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Report {
    pub seed: u64,
    pub n_per_dgp: usize,
    pub tau: f64,
    pub verdicts: Vec<AdversarialVerdict>,
    pub ood_auc: f64,
    pub ood_auc_ci: ConfidenceInterval,
}

pub fn run_exp2(n_per_dgp: usize, seed: u64, resamples: usize) -> Result<Exp2Report> {
    let tau = run_exp1(n_per_dgp, seed, resamples.min(100))?.operating_point.tau;
    let adversarial: Vec<_> = ADVERSARIAL_NAMES
        .iter()
        .map(|n| builtin_spec(n))
        .collect::<std::result::Result<_, _>>()?;
    // Adversarial specs occupy the slots after the three baseline ones,
    // so their streams never collide with the baseline dataset.
    let all_specs = builtin_specs();
    let dataset = generate_dataset(&all_specs, n_per_dgp, seed)?;
    let scored = score_dataset(&dataset, N_BINS)?;

    let mut verdicts = Vec::new();
    for spec in &adversarial {
        let group: Vec<&PathScore> = scored.iter().filter(|s| s.dgp == spec.name).collect();
        let n = group.len() as f64;
        let mean_sci = group.iter().map(|s| s.components.sci).sum::<f64>() / n;
        let frac = group.iter().filter(|s| s.components.sci > tau).count() as f64 / n;
        let predicted = frac > 0.5;
        let error_type = match (spec.label, predicted) {
            (1, false) => Some("type_ii".to_string()),
            (0, true) => Some("type_i".to_string()),
            _ => None,
        };
        verdicts.push(AdversarialVerdict {
            dgp: spec.name.clone(),
            label: spec.label,
            mean_sci,
            frac_above_tau: frac,
            predicted_informed: predicted,
            error_type,
        });
    }
    let adversarial_scores: Vec<PathScore> = scored
        .into_iter()
        .filter(|s| ADVERSARIAL_NAMES.contains(&s.dgp.as_str()))
        .collect();
    let (s, l) = sci_scores(&adversarial_scores);
    Ok(Exp2Report {
        seed,
        n_per_dgp,
        tau,
        verdicts,
        ood_auc: roc_auc(&s, &l)?,
        ood_auc_ci: bootstrap_auc_ci(&s, &l, resamples, DEFAULT_CI_LEVEL, seed)?,
    })
}

/// Ablation experiment: composite vs additive vs single components,
/// plus the cross-validated logistic benchmark, over all eight regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Report {
    pub seed: u64,
    pub n_per_dgp: usize,
    pub auc_sci: f64,
    pub auc_additive: f64,
    pub auc_pr: f64,
    pub auc_one_minus_ts: f64,
    pub auc_one_minus_hhi: f64,
    pub logistic: LogisticReport,
}

pub fn run_exp3(n_per_dgp: usize, seed: u64) -> Result<Exp3Report> {
    let dataset = generate_dataset(&builtin_specs(), n_per_dgp, seed)?;
    let scored = score_dataset(&dataset, N_BINS)?;
    let labels: Vec<u8> = scored.iter().map(|s| s.label).collect();
    let auc_of = |f: &dyn Fn(&PathScore) -> f64| -> Result<f64> {
        let s: Vec<f64> = scored.iter().map(f).collect();
        roc_auc(&s, &labels)
    };
    let features: Vec<Vec<f64>> = scored
        .iter()
        .map(|s| vec![s.components.pr, 1.0 - s.components.ts, 1.0 - s.components.hhi_flow])
        .collect();
    Ok(Exp3Report {
        seed,
        n_per_dgp,
        auc_sci: auc_of(&|s| s.components.sci)?,
        auc_additive: auc_of(&|s| s.additive())?,
        auc_pr: auc_of(&|s| s.components.pr)?,
        auc_one_minus_ts: auc_of(&|s| 1.0 - s.components.ts)?,
        auc_one_minus_hhi: auc_of(&|s| 1.0 - s.components.hhi_flow)?,
        logistic: fit_logistic_cv(&features, &labels, 5, seed)?,
    })
}

/// One evaluation-window grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_bins: usize,
    pub auc: f64,
    pub tau: f64,
}

/// Window-length robustness: baseline discrimination over the first
/// `w` bins for each grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4WindowReport {
    pub seed: u64,
    pub n_per_dgp: usize,
    pub windows: Vec<WindowResult>,
}

pub fn run_exp4_window(
    n_per_dgp: usize,
    seed: u64,
    windows: &[usize],
) -> Result<Exp4WindowReport> {
    let specs: Vec<_> = BASELINE_NAMES
        .iter()
        .map(|n| builtin_spec(n))
        .collect::<std::result::Result<_, _>>()?;
    let dataset = generate_dataset(&specs, n_per_dgp, seed)?;
    let mut out = Vec::with_capacity(windows.len());
    for &w in windows {
        let scored = score_dataset(&dataset, w)?;
        let (s, l) = sci_scores(&scored);
        out.push(WindowResult {
            window_bins: w,
            auc: roc_auc(&s, &l)?,
            tau: youden_threshold(&s, &l)?.tau,
        });
    }
    Ok(Exp4WindowReport { seed, n_per_dgp, windows: out })
}

/// One AR-coefficient grid point: pairwise informed-vs-swept-liquidity
/// AUC at that coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiPoint {
    pub phi: f64,
    pub auc: f64,
}

/// One concentration grid point: mean informed-regime flow HHI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub mean_hhi: f64,
}

/// Parameter-sweep robustness report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4SweepReport {
    pub seed: u64,
    pub n_per_dgp: usize,
    pub phi_sweep: Vec<PhiPoint>,
    pub alpha_sweep: Vec<AlphaPoint>,
}

pub fn run_exp4_sweep(
    n_per_dgp: usize,
    seed: u64,
    phi_grid: &[f64],
    alpha_grid: &[f64],
) -> Result<Exp4SweepReport> {
    let informed = builtin_spec("informed")?;
    let liquidity = builtin_spec("liquidity")?;

    let mut phi_sweep = Vec::with_capacity(phi_grid.len());
    for swept in sweep_specs(&liquidity, SweepParam::ArCoefficient, phi_grid)? {
        let dataset = generate_dataset(&[informed.clone(), swept.clone()], n_per_dgp, seed)?;
        let scored = score_dataset(&dataset, N_BINS)?;
        let (s, l) = sci_scores(&scored);
        let phi = match &swept.return_process {
            crate::dgp::ReturnProcess::Ar1 { phi, .. } => *phi,
            _ => unreachable!("sweep preserves the AR form"),
        };
        phi_sweep.push(PhiPoint { phi, auc: roc_auc(&s, &l)? });
    }

    let mut alpha_sweep = Vec::with_capacity(alpha_grid.len());
    for swept in sweep_specs(&informed, SweepParam::DirichletAlpha, alpha_grid)? {
        let dataset = generate_dataset(&[swept.clone()], n_per_dgp, seed)?;
        let scored = score_dataset(&dataset, N_BINS)?;
        let mean_hhi = scored.iter().map(|s| s.components.hhi_flow).sum::<f64>()
            / scored.len() as f64;
        alpha_sweep.push(AlphaPoint { alpha: swept.dirichlet_alpha, mean_hhi });
    }

    Ok(Exp4SweepReport { seed, n_per_dgp, phi_sweep, alpha_sweep })
}
