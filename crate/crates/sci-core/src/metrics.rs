//! Index mathematics: logit transforms, the three components, the
//! baseline / weighted / time-varying SCI, and the alarm rule.
//!
//! Every operation here is a pure function over immutable inputs.
//! Probability clipping is deliberately *not* done here; the simulator
//! and the ingestion layer clip at their boundaries so the metric ops
//! stay total and honest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterMap;

/// Gross logit movement below this triggers the no-trade guard.
///
/// Far below any 5-minute tick at 2-decimal market prices.
pub const EPS_NO_TRADE: f64 = 1e-9;

/// Default bin width in minutes.
pub const DEFAULT_BIN_MINUTES: u32 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("probability {0} outside open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("non-finite value where a finite one is required")]
    NonFinite,
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("window [{start}, {end}] out of range for series of length {len}")]
    WindowOutOfRange { start: usize, end: usize, len: usize },
    #[error("gross logit movement below no-trade epsilon")]
    NoTrade,
    #[error("zero total volume")]
    ZeroVolume,
    #[error("zero total absolute flow")]
    ZeroFlow,
    #[error("both variances are zero; variance ratio undefined")]
    DegenerateVariance,
    #[error("component {name} = {value} outside its admissible range")]
    ComponentOutOfRange { name: &'static str, value: f64 },
    #[error("weights must all be strictly positive")]
    NonPositiveWeight,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// A market price as a probability in the open interval (0, 1).
///
/// Construction rejects boundary values; clipping is the caller's job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(MetricsError::ProbabilityOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn logit(self) -> LogitPrice {
        LogitPrice((self.0 / (1.0 - self.0)).ln())
    }
}

/// A log-odds price, `log(p / (1 - p))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitPrice(pub f64);

impl LogitPrice {
    /// Inverse logit. Total on finite inputs; the result may round to
    /// 0 or 1 in floating point for extreme arguments, no clipping is
    /// applied here.
    pub fn inverse_logit(self) -> f64 {
        inverse_logit(self.0)
    }
}

/// Log-odds transform. Errors on p outside (0, 1).
pub fn logit(p: f64) -> Result<f64> {
    Ok(Probability::new(p)?.logit().0)
}

/// Inverse log-odds transform, `1 / (1 + exp(-l))`.
pub fn inverse_logit(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// An ordered sequence of logit prices on a fixed bin grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitPath {
    values: Vec<f64>,
    bin_minutes: u32,
}

impl LogitPath {
    /// Build from raw logit values. All values must be finite.
    pub fn new(values: Vec<f64>, bin_minutes: u32) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self { values, bin_minutes })
    }

    /// Build from probabilities, applying the logit transform pointwise.
    pub fn from_probabilities(probs: &[f64], bin_minutes: u32) -> Result<Self> {
        let values = probs.iter().map(|&p| logit(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self { values, bin_minutes })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bin_minutes(&self) -> u32 {
        self.bin_minutes
    }
}

/// Per-bin aggressive buy and sell volume.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VolumePair {
    pub buy: f64,
    pub sell: f64,
}

impl VolumePair {
    pub fn new(buy: f64, sell: f64) -> Result<Self> {
        if buy.is_finite() && sell.is_finite() && buy >= 0.0 && sell >= 0.0 {
            Ok(Self { buy, sell })
        } else {
            Err(MetricsError::ComponentOutOfRange {
                name: "volume",
                value: if buy < 0.0 { buy } else { sell },
            })
        }
    }

    pub fn total(&self) -> f64 {
        self.buy + self.sell
    }
}

/// Signed net flow per trader over a window.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraderFlows {
    entries: BTreeMap<String, f64>,
}

impl TraderFlows {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self {
            entries: entries.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    /// Accumulate a signed flow onto a trader.
    pub fn add(&mut self, trader: &str, flow: f64) {
        *self.entries.entry(trader.to_string()).or_insert(0.0) += flow;
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_abs(&self) -> f64 {
        self.entries.values().map(|v| v.abs()).sum()
    }

    /// Merge another window's flows into this one, trader by trader.
    pub fn merge(&mut self, other: &TraderFlows) {
        for (k, v) in &other.entries {
            *self.entries.entry(k.clone()).or_insert(0.0) += v;
        }
    }
}

/// The three components plus the composite value for one shock window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SciComponents {
    pub pr: f64,
    pub ts: f64,
    pub hhi_flow: f64,
    pub sci: f64,
    /// Set when the no-trade guard fired; component fields are zero and
    /// only `sci = 0` is meaningful.
    pub no_trade: bool,
}

impl SciComponents {
    pub fn new(pr: f64, ts: f64, hhi_flow: f64) -> Result<Self> {
        let sci = sci(pr, ts, hhi_flow)?;
        Ok(Self { pr, ts, hhi_flow, sci, no_trade: false })
    }

    pub fn no_trade() -> Self {
        Self { pr: 0.0, ts: 0.0, hhi_flow: 0.0, sci: 0.0, no_trade: true }
    }
}

/// Cobb-Douglas exponents for the weighted SCI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Weights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        if alpha1 > 0.0 && alpha2 > 0.0 && alpha3 > 0.0 {
            Ok(Self { alpha1, alpha2, alpha3 })
        } else {
            Err(MetricsError::NonPositiveWeight)
        }
    }

    /// Rescale to the comparability constraint `alpha1 + alpha2 + alpha3 = 3`.
    pub fn normalized(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        let w = Self::new(alpha1, alpha2, alpha3)?;
        let scale = 3.0 / (w.alpha1 + w.alpha2 + w.alpha3);
        Ok(Self {
            alpha1: w.alpha1 * scale,
            alpha2: w.alpha2 * scale,
            alpha3: w.alpha3 * scale,
        })
    }

    pub fn is_normalized(&self) -> bool {
        (self.alpha1 + self.alpha2 + self.alpha3 - 3.0).abs() <= 1e-9
    }

    pub fn balanced() -> Self {
        Self { alpha1: 1.0, alpha2: 1.0, alpha3: 1.0 }
    }

    /// Anchor for high-frequency financial markets.
    pub fn persistence_weighted() -> Self {
        Self { alpha1: 1.5, alpha2: 1.0, alpha3: 0.5 }
    }

    /// Anchor for political markets.
    pub fn breadth_weighted() -> Self {
        Self { alpha1: 0.5, alpha2: 1.0, alpha3: 1.5 }
    }
}

/// Alarm-rule summary of a time-varying SCI series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmSummary {
    /// First bin index with `sci > tau`, if any.
    pub onset: Option<usize>,
    /// Total minutes spent above the threshold.
    pub duration_minutes: u32,
    /// Minutes from the global-peak bin to the first later bin at or
    /// below the threshold. None if the series never decays (or never
    /// alarms).
    pub decay_minutes: Option<u32>,
    /// Alarm duration exceeded 60 minutes.
    pub sustained: bool,
}

/// First differences of a logit path.
pub fn logit_returns(path: &LogitPath) -> Result<Vec<f64>> {
    if path.len() < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: path.len() });
    }
    Ok(path.values.windows(2).map(|w| w[1] - w[0]).collect())
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Variance ratio `Var(k-period) / (k * Var(1-period))` on non-overlapping
/// k-period returns.
///
/// Reference diagnostic only: it needs at least two non-overlapping
/// k-period returns (path length >= 2k + 1), which is exactly why the
/// persistence ratio replaces it on short windows.
pub fn variance_ratio(path: &LogitPath, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(MetricsError::InsufficientData { needed: 1, got: 0 });
    }
    let needed = 2 * k + 1;
    if path.len() < needed {
        return Err(MetricsError::InsufficientData { needed, got: path.len() });
    }
    let one = logit_returns(path)?;
    let m = (path.len() - 1) / k;
    let kret: Vec<f64> = (0..m)
        .map(|i| path.values[(i + 1) * k] - path.values[i * k])
        .collect();
    let var1 = sample_variance(&one);
    let vark = sample_variance(&kret);
    if var1 == 0.0 {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok(vark / (k as f64 * var1))
}

/// Persistence ratio `|l_t - l_{t-w}| / sum |l_tau - l_{tau-1}|` over the
/// window `(t - w, t]`.
///
/// Returns `Err(NoTrade)` when gross movement is below [`EPS_NO_TRADE`];
/// callers map that to SCI = 0.
pub fn persistence_ratio(path: &LogitPath, t: usize, w: usize) -> Result<f64> {
    if w == 0 {
        return Err(MetricsError::InsufficientData { needed: 1, got: 0 });
    }
    if t < w || t >= path.len() {
        return Err(MetricsError::WindowOutOfRange {
            start: t.saturating_sub(w),
            end: t,
            len: path.len(),
        });
    }
    let vals = &path.values;
    let gross: f64 = (t - w + 1..=t).map(|tau| (vals[tau] - vals[tau - 1]).abs()).sum();
    if gross < EPS_NO_TRADE {
        return Err(MetricsError::NoTrade);
    }
    let net = (vals[t] - vals[t - w]).abs();
    // Triangle inequality guarantees net <= gross; clamp rounding dust.
    Ok((net / gross).min(1.0))
}

/// Two-sidedness `1 - |B - S| / (B + S)`.
pub fn two_sidedness(v: &VolumePair) -> Result<f64> {
    let total = v.total();
    if total <= 0.0 {
        return Err(MetricsError::ZeroVolume);
    }
    Ok(1.0 - (v.buy - v.sell).abs() / total)
}

/// Flow-based Herfindahl index over traders with nonzero net flow.
///
/// Zero-flow traders are dropped, which makes the `1/N` lower bound
/// exact for the remaining N.
pub fn hhi_flow(flows: &TraderFlows) -> Result<f64> {
    let total = flows.total_abs();
    if total <= 0.0 {
        return Err(MetricsError::ZeroFlow);
    }
    Ok(flows
        .entries
        .values()
        .filter(|v| **v != 0.0)
        .map(|v| (v.abs() / total).powi(2))
        .sum())
}

fn check_components(pr: f64, ts: f64, hhi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&pr) || pr.is_nan() {
        return Err(MetricsError::ComponentOutOfRange { name: "pr", value: pr });
    }
    if !(0.0..=1.0).contains(&ts) || ts.is_nan() {
        return Err(MetricsError::ComponentOutOfRange { name: "ts", value: ts });
    }
    if !(hhi > 0.0 && hhi <= 1.0) {
        return Err(MetricsError::ComponentOutOfRange { name: "hhi_flow", value: hhi });
    }
    Ok(())
}

/// Baseline composite `PR * (1 - TS) * (1 - HHI_flow)`.
///
/// The product is evaluated in this exact order for determinism of
/// golden values.
pub fn sci(pr: f64, ts: f64, hhi: f64) -> Result<f64> {
    check_components(pr, ts, hhi)?;
    Ok(pr * (1.0 - ts) * (1.0 - hhi))
}

/// Weighted Cobb-Douglas composite `PR^a1 * (1-TS)^a2 * (1-HHI)^a3`.
///
/// With weights (1, 1, 1) this reduces to [`sci`].
pub fn weighted_sci(pr: f64, ts: f64, hhi: f64, weights: &Weights) -> Result<f64> {
    check_components(pr, ts, hhi)?;
    Ok(pr.powf(weights.alpha1)
        * (1.0 - ts).powf(weights.alpha2)
        * (1.0 - hhi).powf(weights.alpha3))
}

/// Compute the SCI for one shock event over the window `[shock_time,
/// shock_time + window]` (price-point indices; `volumes[t]` covers the
/// bin between points `t` and `t + 1`).
///
/// Follows the shock algorithm step by step: no-trade guard, PR over
/// the full window, TS on summed volumes, optional wallet clustering,
/// HHI on (clustered) flows, multiplicative composite. Zero-volume and
/// zero-flow windows are folded into the no-trade outcome.
pub fn compute_sci_for_shock(
    prices: &LogitPath,
    volumes: &[VolumePair],
    flows: &TraderFlows,
    shock_time: usize,
    window: usize,
    clustering: Option<&ClusterMap>,
) -> Result<SciComponents> {
    let end = shock_time + window;
    if window == 0 || end >= prices.len() || volumes.len() + 1 < prices.len() {
        return Err(MetricsError::WindowOutOfRange {
            start: shock_time,
            end,
            len: prices.len(),
        });
    }
    let pr = match persistence_ratio(prices, end, window) {
        Ok(pr) => pr,
        Err(MetricsError::NoTrade) => return Ok(SciComponents::no_trade()),
        Err(e) => return Err(e),
    };
    let summed = volumes[shock_time..end]
        .iter()
        .fold(VolumePair::default(), |acc, v| VolumePair {
            buy: acc.buy + v.buy,
            sell: acc.sell + v.sell,
        });
    let ts = match two_sidedness(&summed) {
        Ok(ts) => ts,
        Err(MetricsError::ZeroVolume) => return Ok(SciComponents::no_trade()),
        Err(e) => return Err(e),
    };
    let clustered;
    let effective_flows = match clustering {
        Some(map) => {
            clustered = map.apply_to_flows(flows);
            &clustered
        }
        None => flows,
    };
    let hhi = match hhi_flow(effective_flows) {
        Ok(h) => h,
        Err(MetricsError::ZeroFlow) => return Ok(SciComponents::no_trade()),
        Err(e) => return Err(e),
    };
    SciComponents::new(pr, ts, hhi)
}

/// Time-varying SCI on trailing windows `(t - w, t]`.
///
/// The output has one slot per price point; indices `t < w` have no full
/// trailing window and yield `None` rather than a fabricated value.
/// Per-window no-trade outcomes yield `sci = 0` for that `t`.
pub fn rolling_sci(
    prices: &LogitPath,
    volumes: &[VolumePair],
    flows_by_bin: &[TraderFlows],
    w: usize,
) -> Result<Vec<Option<SciComponents>>> {
    if w < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: w });
    }
    if volumes.len() + 1 < prices.len() || flows_by_bin.len() + 1 < prices.len() {
        return Err(MetricsError::WindowOutOfRange { start: 0, end: w, len: prices.len() });
    }
    let mut out = Vec::with_capacity(prices.len());
    for t in 0..prices.len() {
        if t < w {
            out.push(None);
            continue;
        }
        let mut window_flows = TraderFlows::new();
        for f in &flows_by_bin[t - w..t] {
            window_flows.merge(f);
        }
        let comps =
            compute_sci_for_shock(prices, volumes, &window_flows, t - w, w, None)?;
        out.push(Some(comps));
    }
    Ok(out)
}

/// Summarize the alarm rule `SCI(t) > tau` over a series.
pub fn alarm_summary(sci_series: &[f64], tau: f64, bin_minutes: u32) -> AlarmSummary {
    let above: Vec<bool> = sci_series.iter().map(|&s| s > tau).collect();
    let onset = above.iter().position(|&a| a);
    let n_above = above.iter().filter(|&&a| a).count();
    let duration_minutes = n_above as u32 * bin_minutes;
    let decay_minutes = onset.and_then(|_| {
        let peak = sci_series
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &s)| {
                if s > acc.1 { (i, s) } else { acc }
            })
            .0;
        above[peak + 1..]
            .iter()
            .position(|&a| !a)
            .map(|off| (off + 1) as u32 * bin_minutes)
    });
    AlarmSummary {
        onset,
        duration_minutes,
        decay_minutes,
        sustained: duration_minutes > 60,
    }
}
