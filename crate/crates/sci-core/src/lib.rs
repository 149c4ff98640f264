//! Signal Credibility Index (SCI) for prediction-market shocks.
//!
//! The index decomposes the question "is this post-shock price move a
//! credible coordination signal?" into three measurable components on
//! 5-minute bins:
//!
//! * `PR` — persistence ratio: net signed logit movement over gross
//!   absolute logit movement,
//! * `TS` — two-sidedness: `1 - |B - S| / (B + S)` on buy/sell volumes,
//! * `HHI_flow` — flow-based Herfindahl concentration of per-trader
//!   net post-shock flow,
//!
//! combined multiplicatively as `SCI = PR * (1 - TS) * (1 - HHI_flow)`.
//!
//! The crate bundles everything needed to exercise the index end to end:
//! the metric layer ([`metrics`]), a deterministic Monte Carlo universe
//! of eight regimes ([`dgp`]), ROC/AUC evaluation with bootstrap CIs and
//! a logistic benchmark ([`eval`]), the four-step multi-wallet clustering
//! protocol ([`cluster`]), and a trade-tape ingestion path ([`ingest`]).

pub mod cluster;
pub mod dgp;
pub mod eval;
pub mod ingest;
pub mod metrics;
pub mod rng;
