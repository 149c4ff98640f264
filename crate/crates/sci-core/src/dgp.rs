//! The Monte Carlo validation universe: eight fully parameterized
//! regimes generating post-shock paths with prices, per-bin volumes and
//! trader-level flows, deterministically from a seed.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::{BufRead, Write};
use thiserror::Error;

use crate::metrics::{logit, TraderFlows, VolumePair};
use crate::rng::path_stream;

/// Bins per path: four hours of 5-minute bins.
pub const N_BINS: usize = 48;
/// Post-shock starting price.
pub const P0: f64 = 0.72;
/// Price clipping bounds, avoiding numerical pathology near 0 and 1.
pub const CLIP_LO: f64 = 0.01;
pub const CLIP_HI: f64 = 0.99;
/// Default master seed for all reproduction runs.
pub const DEFAULT_SEED: u64 = 20260429;

pub const BASELINE_NAMES: [&str; 3] = ["informed", "liquidity", "disagreement"];
pub const ADVERSARIAL_NAMES: [&str; 5] = [
    "whale_informed",
    "noisy_broad",
    "manip_then_info",
    "persistent_two_sided",
    "coord_manip_broad",
];

#[derive(Debug, Error)]
pub enum DgpError {
    #[error("invalid DGP parameter: {0}")]
    InvalidParam(String),
    #[error("unknown DGP name {0:?}")]
    UnknownSpec(String),
    #[error("sweep parameter {param} not applicable to DGP {name:?}")]
    ParamNotApplicable { param: &'static str, name: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("dataset file missing or malformed header line")]
    BadHeader,
}

/// Per-bin logit-return process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReturnProcess {
    IidNormal { mu: f64, sigma: f64 },
    Ar1 { phi: f64, mu: f64, sigma: f64 },
    /// `before` for bins `t < switch_bin`, `after` from `switch_bin` on.
    Piecewise {
        switch_bin: usize,
        before: Box<ReturnProcess>,
        after: Box<ReturnProcess>,
    },
}

/// Per-bin buy/sell volume model. Gamma uses the shape-scale
/// convention: `Gamma(k, theta)` has mean `k * theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VolumeModel {
    TwoGamma {
        buy_shape: f64,
        buy_scale: f64,
        sell_shape: f64,
        sell_scale: f64,
    },
    TotalWithBetaSplit {
        shape: f64,
        scale: f64,
        beta_a: f64,
        beta_b: f64,
    },
    Switching {
        switch_bin: usize,
        before: Box<VolumeModel>,
        after: Box<VolumeModel>,
    },
}

/// Full parameterization of one simulation regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub return_process: ReturnProcess,
    pub volume_model: VolumeModel,
    pub trader_lo: u32,
    pub trader_hi: u32,
    pub dirichlet_alpha: f64,
    pub label: u8,
}

fn validate_returns(p: &ReturnProcess) -> Result<(), DgpError> {
    match p {
        ReturnProcess::IidNormal { mu, sigma } | ReturnProcess::Ar1 { mu, sigma, .. } => {
            if !mu.is_finite() || !sigma.is_finite() || *sigma < 0.0 {
                return Err(DgpError::InvalidParam(format!(
                    "normal(mu={mu}, sigma={sigma})"
                )));
            }
            if let ReturnProcess::Ar1 { phi, .. } = p {
                if !phi.is_finite() || phi.abs() >= 1.0 {
                    return Err(DgpError::InvalidParam(format!("AR coefficient {phi}")));
                }
            }
            Ok(())
        }
        ReturnProcess::Piecewise { switch_bin, before, after } => {
            if *switch_bin == 0 || *switch_bin >= N_BINS {
                return Err(DgpError::InvalidParam(format!("switch_bin {switch_bin}")));
            }
            validate_returns(before)?;
            validate_returns(after)
        }
    }
}

fn validate_volumes(v: &VolumeModel) -> Result<(), DgpError> {
    match v {
        VolumeModel::TwoGamma { buy_shape, buy_scale, sell_shape, sell_scale } => {
            for p in [buy_shape, buy_scale, sell_shape, sell_scale] {
                if !(*p > 0.0) || !p.is_finite() {
                    return Err(DgpError::InvalidParam(format!("gamma parameter {p}")));
                }
            }
            Ok(())
        }
        VolumeModel::TotalWithBetaSplit { shape, scale, beta_a, beta_b } => {
            for p in [shape, scale, beta_a, beta_b] {
                if !(*p > 0.0) || !p.is_finite() {
                    return Err(DgpError::InvalidParam(format!("volume parameter {p}")));
                }
            }
            Ok(())
        }
        VolumeModel::Switching { switch_bin, before, after } => {
            if *switch_bin == 0 || *switch_bin >= N_BINS {
                return Err(DgpError::InvalidParam(format!("switch_bin {switch_bin}")));
            }
            validate_volumes(before)?;
            validate_volumes(after)
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<(), DgpError> {
        validate_returns(&self.return_process)?;
        validate_volumes(&self.volume_model)?;
        if self.trader_lo == 0 || self.trader_lo > self.trader_hi {
            return Err(DgpError::InvalidParam(format!(
                "trader range [{}, {}]",
                self.trader_lo, self.trader_hi
            )));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(DgpError::InvalidParam(format!(
                "dirichlet alpha {}",
                self.dirichlet_alpha
            )));
        }
        if self.label > 1 {
            return Err(DgpError::InvalidParam(format!("label {}", self.label)));
        }
        Ok(())
    }

    /// Switch bin of a piecewise return process, if any.
    pub fn switch_bin(&self) -> Option<usize> {
        match &self.return_process {
            ReturnProcess::Piecewise { switch_bin, .. } => Some(*switch_bin),
            _ => None,
        }
    }
}

fn informed_volumes() -> VolumeModel {
    VolumeModel::TwoGamma {
        buy_shape: 2.5,
        buy_scale: 5e4,
        sell_shape: 0.5,
        sell_scale: 1.5e4,
    }
}

fn liquidity_volumes() -> VolumeModel {
    VolumeModel::TwoGamma {
        buy_shape: 0.6,
        buy_scale: 1.5e4,
        sell_shape: 2.5,
        sell_scale: 4e4,
    }
}

/// The eight built-in regimes, in canonical order: the three baseline
/// regimes first, then the five adversarial ones.
pub fn builtin_specs() -> Vec<DgpSpec> {
    vec![
        DgpSpec {
            name: "informed".into(),
            return_process: ReturnProcess::IidNormal { mu: 0.0010, sigma: 0.0022 },
            volume_model: informed_volumes(),
            trader_lo: 150,
            trader_hi: 250,
            dirichlet_alpha: 4.0,
            label: 1,
        },
        DgpSpec {
            name: "liquidity".into(),
            return_process: ReturnProcess::Ar1 { phi: -0.55, mu: -0.0008, sigma: 0.0025 },
            volume_model: liquidity_volumes(),
            trader_lo: 20,
            trader_hi: 50,
            dirichlet_alpha: 0.4,
            label: 0,
        },
        DgpSpec {
            name: "disagreement".into(),
            return_process: ReturnProcess::IidNormal { mu: 0.0, sigma: 0.0040 },
            volume_model: VolumeModel::TotalWithBetaSplit {
                shape: 2.0,
                scale: 4e4,
                beta_a: 8.0,
                beta_b: 8.0,
            },
            trader_lo: 60,
            trader_hi: 120,
            dirichlet_alpha: 1.2,
            label: 0,
        },
        DgpSpec {
            name: "whale_informed".into(),
            return_process: ReturnProcess::IidNormal { mu: 0.0010, sigma: 0.0022 },
            volume_model: informed_volumes(),
            trader_lo: 4,
            trader_hi: 8,
            dirichlet_alpha: 0.3,
            label: 1,
        },
        DgpSpec {
            name: "noisy_broad".into(),
            return_process: ReturnProcess::IidNormal { mu: 0.0, sigma: 0.006 },
            volume_model: VolumeModel::TotalWithBetaSplit {
                shape: 2.0,
                scale: 4e4,
                beta_a: 3.0,
                beta_b: 3.0,
            },
            trader_lo: 120,
            trader_hi: 200,
            dirichlet_alpha: 3.0,
            label: 0,
        },
        DgpSpec {
            name: "manip_then_info".into(),
            return_process: ReturnProcess::Piecewise {
                switch_bin: 6,
                before: Box::new(ReturnProcess::Ar1 {
                    phi: -0.5,
                    mu: -0.0005,
                    sigma: 0.003,
                }),
                after: Box::new(ReturnProcess::IidNormal { mu: 0.0012, sigma: 0.0022 }),
            },
            volume_model: VolumeModel::Switching {
                switch_bin: 6,
                before: Box::new(liquidity_volumes()),
                after: Box::new(informed_volumes()),
            },
            trader_lo: 80,
            trader_hi: 150,
            dirichlet_alpha: 2.5,
            label: 1,
        },
        DgpSpec {
            name: "persistent_two_sided".into(),
            return_process: ReturnProcess::IidNormal { mu: 0.0008, sigma: 0.002 },
            volume_model: VolumeModel::TotalWithBetaSplit {
                shape: 2.5,
                scale: 4e4,
                beta_a: 8.0,
                beta_b: 8.0,
            },
            trader_lo: 80,
            trader_hi: 150,
            dirichlet_alpha: 2.0,
            label: 0,
        },
        DgpSpec {
            name: "coord_manip_broad".into(),
            return_process: ReturnProcess::IidNormal { mu: 0.0009, sigma: 0.0024 },
            volume_model: VolumeModel::TwoGamma {
                buy_shape: 2.5,
                buy_scale: 5e4,
                sell_shape: 0.4,
                sell_scale: 1.2e4,
            },
            trader_lo: 80,
            trader_hi: 130,
            dirichlet_alpha: 4.0,
            label: 0,
        },
    ]
}

pub fn builtin_spec(name: &str) -> Result<DgpSpec, DgpError> {
    builtin_specs()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| DgpError::UnknownSpec(name.to_string()))
}

/// Parameter swept by experiment 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    ArCoefficient,
    DirichletAlpha,
}

/// One spec per grid point, all other fields unchanged. Swept specs are
/// renamed `<base>@<param>=<value>`.
pub fn sweep_specs(
    base: &DgpSpec,
    param: SweepParam,
    grid: &[f64],
) -> Result<Vec<DgpSpec>, DgpError> {
    grid.iter()
        .map(|&value| {
            let mut spec = base.clone();
            match param {
                SweepParam::ArCoefficient => match &mut spec.return_process {
                    ReturnProcess::Ar1 { phi, .. } => *phi = value,
                    _ => {
                        return Err(DgpError::ParamNotApplicable {
                            param: "ar_coefficient",
                            name: base.name.clone(),
                        })
                    }
                },
                SweepParam::DirichletAlpha => spec.dirichlet_alpha = value,
            }
            let tag = match param {
                SweepParam::ArCoefficient => "phi",
                SweepParam::DirichletAlpha => "alpha",
            };
            spec.name = format!("{}@{}={}", base.name, tag, value);
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

/// One simulated post-shock path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    /// 49 clipped probabilities: p0 plus one per bin.
    pub prices: Vec<f64>,
    /// 48 per-bin buy/sell volume pairs.
    pub bin_volumes: Vec<VolumePair>,
    /// Signed net flow per trader over the full window.
    pub trader_flows: TraderFlows,
    pub dgp_name: String,
    pub label: u8,
}

fn draw_returns<R: Rng>(process: &ReturnProcess, rng: &mut R, out: &mut Vec<f64>) {
    match process {
        ReturnProcess::Piecewise { switch_bin, before, after } => {
            draw_segment(before, rng, out, *switch_bin);
            draw_segment(after, rng, out, N_BINS);
        }
        other => draw_segment(other, rng, out, N_BINS),
    }
}

// The AR recursion restarts at each segment boundary: the first return
// of a segment is a raw innovation.
fn draw_segment<R: Rng>(
    process: &ReturnProcess,
    rng: &mut R,
    out: &mut Vec<f64>,
    until: usize,
) {
    match process {
        ReturnProcess::IidNormal { mu, sigma } => {
            let dist = Normal::new(*mu, *sigma).expect("validated");
            while out.len() < until {
                out.push(dist.sample(rng));
            }
        }
        ReturnProcess::Ar1 { phi, mu, sigma } => {
            let dist = Normal::new(*mu, *sigma).expect("validated");
            let mut prev: Option<f64> = None;
            while out.len() < until {
                let eps = dist.sample(rng);
                let r = match prev {
                    None => eps,
                    Some(p) => phi * p + eps,
                };
                out.push(r);
                prev = Some(r);
            }
        }
        ReturnProcess::Piecewise { .. } => unreachable!("nested piecewise rejected by validate"),
    }
}

fn bin_volume<R: Rng>(model: &VolumeModel, bin: usize, rng: &mut R) -> VolumePair {
    match model {
        VolumeModel::TwoGamma { buy_shape, buy_scale, sell_shape, sell_scale } => {
            let buy = Gamma::new(*buy_shape, *buy_scale).expect("validated").sample(rng);
            let sell = Gamma::new(*sell_shape, *sell_scale).expect("validated").sample(rng);
            VolumePair { buy, sell }
        }
        VolumeModel::TotalWithBetaSplit { shape, scale, beta_a, beta_b } => {
            let total = Gamma::new(*shape, *scale).expect("validated").sample(rng);
            let split = Beta::new(*beta_a, *beta_b).expect("validated").sample(rng);
            VolumePair { buy: total * split, sell: total * (1.0 - split) }
        }
        VolumeModel::Switching { switch_bin, before, after } => {
            if bin < *switch_bin {
                bin_volume(before, bin, rng)
            } else {
                bin_volume(after, bin, rng)
            }
        }
    }
}

/// Draw one path from a validated spec.
///
/// Draw order is pinned: 48 returns, 48 bin volumes, trader count,
/// N Dirichlet gammas, N sign draws.
pub fn sample_path<R: Rng>(spec: &DgpSpec, rng: &mut R) -> SimulatedPath {
    let mut returns = Vec::with_capacity(N_BINS);
    draw_returns(&spec.return_process, rng, &mut returns);

    let l0 = logit(P0).expect("P0 in (0,1)");
    let mut prices = Vec::with_capacity(N_BINS + 1);
    prices.push(P0.clamp(CLIP_LO, CLIP_HI));
    let mut level = l0;
    for r in &returns {
        level += r;
        prices.push(crate::metrics::inverse_logit(level).clamp(CLIP_LO, CLIP_HI));
    }

    let bin_volumes: Vec<VolumePair> =
        (0..N_BINS).map(|t| bin_volume(&spec.volume_model, t, rng)).collect();

    let n_traders = rng.gen_range(spec.trader_lo..=spec.trader_hi) as usize;
    // Dirichlet(alpha * 1_N) via normalized independent gamma draws.
    let gamma = Gamma::new(spec.dirichlet_alpha, 1.0).expect("validated");
    let mut weights: Vec<f64> = (0..n_traders).map(|_| gamma.sample(rng)).collect();
    let total_weight: f64 = weights.iter().sum();
    if total_weight > 0.0 {
        for w in &mut weights {
            *w /= total_weight;
        }
    } else {
        // All draws underflowed to zero; fall back to equal weights.
        weights.iter_mut().for_each(|w| *w = 1.0 / n_traders as f64);
    }

    let total_buy: f64 = bin_volumes.iter().map(|v| v.buy).sum();
    let total_sell: f64 = bin_volumes.iter().map(|v| v.sell).sum();
    let total_volume = total_buy + total_sell;
    // Sign mixture: each trader buys with probability B/(B+S) computed
    // from the path's own volume imbalance, independently.
    let p_buy = if total_volume > 0.0 { total_buy / total_volume } else { 0.5 };
    let mut flows = TraderFlows::new();
    for (j, w) in weights.iter().enumerate() {
        let sign = if rng.gen::<f64>() < p_buy { 1.0 } else { -1.0 };
        flows.add(&trader_id(j), sign * w * total_volume);
    }

    SimulatedPath {
        prices,
        bin_volumes,
        trader_flows: flows,
        dgp_name: spec.name.clone(),
        label: spec.label,
    }
}

fn trader_id(j: usize) -> String {
    format!("t{j:04}")
}

/// A generated dataset plus the seed that reproduces it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub paths: Vec<SimulatedPath>,
    pub master_seed: u64,
    /// (dgp name, path count) in generation order.
    pub counts: Vec<(String, usize)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Generate `n_per_dgp` paths per spec. The stream for path `i` of spec
/// slot `d` depends only on `(master_seed, d, i)`, so output is
/// independent of evaluation order and thread count.
pub fn generate_dataset(
    specs: &[DgpSpec],
    n_per_dgp: usize,
    master_seed: u64,
) -> Result<Dataset, DgpError> {
    for spec in specs {
        spec.validate()?;
    }
    let paths: Vec<SimulatedPath> = (0..specs.len() * n_per_dgp)
        .into_par_iter()
        .map(|k| {
            let d = k / n_per_dgp;
            let i = k % n_per_dgp;
            let mut rng = path_stream(master_seed, d as u64, i as u64);
            sample_path(&specs[d], &mut rng)
        })
        .collect();
    Ok(Dataset {
        paths,
        master_seed,
        counts: specs.iter().map(|s| (s.name.clone(), n_per_dgp)).collect(),
    })
}

/// Resolve builtin spec names and generate.
pub fn generate_named(
    names: &[&str],
    n_per_dgp: usize,
    master_seed: u64,
) -> Result<Dataset, DgpError> {
    let specs = names
        .iter()
        .map(|n| builtin_spec(n))
        .collect::<Result<Vec<_>, _>>()?;
    generate_dataset(&specs, n_per_dgp, master_seed)
}

const DATASET_SCHEMA: &str = "sci.dataset.v1";

/// Write the line-delimited dataset format: a header record followed by
/// one JSON record per path (`dgp`, `label`, `prices`, `buy`, `sell`,
/// `flows`). See docs/formats.md for the full schema.
pub fn write_dataset_jsonl<W: Write>(dataset: &Dataset, mut w: W) -> Result<(), DgpError> {
    let header = json!({
        "schema": DATASET_SCHEMA,
        "master_seed": dataset.master_seed,
        "counts": dataset.counts,
    });
    writeln!(w, "{header}")?;
    for p in &dataset.paths {
        let record = json!({
            "dgp": p.dgp_name,
            "label": p.label,
            "prices": p.prices,
            "buy": p.bin_volumes.iter().map(|v| v.buy).collect::<Vec<_>>(),
            "sell": p.bin_volumes.iter().map(|v| v.sell).collect::<Vec<_>>(),
            "flows": p.trader_flows.entries(),
        });
        writeln!(w, "{record}")?;
    }
    Ok(())
}

pub fn read_dataset_jsonl<R: BufRead>(r: R) -> Result<Dataset, DgpError> {
    let mut lines = r.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(DgpError::BadHeader)?;
    let header: serde_json::Value = serde_json::from_str(&header_line?)
        .map_err(|source| DgpError::Json { line: 1, source })?;
    if header.get("schema").and_then(|s| s.as_str()) != Some(DATASET_SCHEMA) {
        return Err(DgpError::BadHeader);
    }
    let master_seed = header
        .get("master_seed")
        .and_then(|s| s.as_u64())
        .ok_or(DgpError::BadHeader)?;
    let counts: Vec<(String, usize)> = header
        .get("counts")
        .map(|c| serde_json::from_value(c.clone()).map_err(|source| DgpError::Json { line: 1, source }))
        .transpose()?
        .unwrap_or_default();

    #[derive(Deserialize)]
    struct Record {
        dgp: String,
        label: u8,
        prices: Vec<f64>,
        buy: Vec<f64>,
        sell: Vec<f64>,
        flows: std::collections::BTreeMap<String, f64>,
    }

    let mut paths = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|source| DgpError::Json { line: lineno + 1, source })?;
        paths.push(SimulatedPath {
            prices: rec.prices,
            bin_volumes: rec
                .buy
                .into_iter()
                .zip(rec.sell)
                .map(|(buy, sell)| VolumePair { buy, sell })
                .collect(),
            trader_flows: TraderFlows::from_entries(rec.flows),
            dgp_name: rec.dgp,
            label: rec.label,
        });
    }
    Ok(Dataset { paths, master_seed, counts })
}
