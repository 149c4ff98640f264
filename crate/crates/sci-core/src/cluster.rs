//! Multi-wallet clustering: the four-step protocol applied before the
//! flow-concentration index, plus the with/without-clustering
//! robustness report.
//!
//! Steps, in order: (a) common-funder identification, (b) temporal
//! co-movement, (c) custodial filtering, (d) graph community detection
//! on the residual set. Steps (a), (b) and (d) produce wallet merges
//! composed through a union-find; step (c) is a flow transformation
//! applied when the cluster map is used.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{hhi_flow, MetricsError, TraderFlows};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("downweight factor {0} outside (0, 1)")]
    InvalidLambda(f64),
    #[error("graph file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("activity series for {wallet} has length {got}, expected {expected}")]
    ActivityLength { wallet: String, got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A funding transfer between wallets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundingEdge {
    pub funder: String,
    pub funded: String,
    pub amount: f64,
    /// True when this transfer was the funded wallet's first deposit.
    pub first_deposit: bool,
}

/// Wallet-level side information used by the clustering protocol.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WalletGraph {
    wallets: BTreeSet<String>,
    funding_edges: Vec<FundingEdge>,
    /// Per wallet, per pre-shock bin: signed trade direction (+1/-1/0).
    activity: BTreeMap<String, Vec<i8>>,
    custodial: BTreeSet<String>,
}

impl WalletGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_wallet(&mut self, id: &str) {
        self.wallets.insert(id.to_string());
    }

    pub fn add_edge(&mut self, funder: &str, funded: &str, amount: f64, first_deposit: bool) {
        self.wallets.insert(funder.to_string());
        self.wallets.insert(funded.to_string());
        self.funding_edges.push(FundingEdge {
            funder: funder.to_string(),
            funded: funded.to_string(),
            amount,
            first_deposit,
        });
    }

    /// Register an activity series. Series must share one bin grid.
    pub fn set_activity(&mut self, wallet: &str, series: Vec<i8>) -> Result<(), ClusterError> {
        if let Some(expected) = self.activity.values().next().map(Vec::len) {
            if series.len() != expected {
                return Err(ClusterError::ActivityLength {
                    wallet: wallet.to_string(),
                    got: series.len(),
                    expected,
                });
            }
        }
        self.wallets.insert(wallet.to_string());
        self.activity.insert(wallet.to_string(), series);
        Ok(())
    }

    pub fn add_custodial(&mut self, id: &str) {
        self.wallets.insert(id.to_string());
        self.custodial.insert(id.to_string());
    }

    pub fn wallets(&self) -> &BTreeSet<String> {
        &self.wallets
    }

    pub fn funding_edges(&self) -> &[FundingEdge] {
        &self.funding_edges
    }

    pub fn custodial(&self) -> &BTreeSet<String> {
        &self.custodial
    }
}

/// Which protocol step produced a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergeStep {
    CommonFunder,
    Temporal,
    Community,
}

/// One pairwise merge with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePair {
    pub a: String,
    pub b: String,
    pub step: MergeStep,
}

/// Custodial handling mode for step (c).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CustodialMode {
    Exclude,
    /// Scale custodial flows by a factor in (0, 1).
    Downweight(f64),
}

/// Protocol configuration with the documented defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Same-sign share required by temporal co-movement.
    pub share_threshold: f64,
    /// Pairs with fewer jointly active bins than this are never merged.
    pub min_joint_bins: usize,
    pub custodial_mode: CustodialMode,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            share_threshold: 0.5,
            min_joint_bins: 20,
            custodial_mode: CustodialMode::Exclude,
        }
    }
}

/// Wallet -> cluster assignment with provenance, plus the custodial
/// filter to apply when mapping flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMap {
    /// Total on input wallets; cluster id is the minimum member id.
    assign: BTreeMap<String, String>,
    provenance: Vec<MergePair>,
    custodial: BTreeSet<String>,
    custodial_mode: CustodialMode,
}

impl ClusterMap {
    /// Identity map over a set of wallets, no custodial filtering.
    pub fn identity<I, S>(wallets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            assign: wallets
                .into_iter()
                .map(|w| {
                    let w = w.into();
                    (w.clone(), w)
                })
                .collect(),
            provenance: Vec::new(),
            custodial: BTreeSet::new(),
            custodial_mode: CustodialMode::Exclude,
        }
    }

    /// Build a map from an externally supplied wallet-to-group
    /// assignment. Cluster ids are canonicalized to the minimum member
    /// id of each group; no custodial filtering.
    pub fn from_assignments<I, S>(assignments: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let raw: Vec<(String, String)> = assignments
            .into_iter()
            .map(|(w, g)| (w.into(), g.into()))
            .collect();
        let mut group_min: BTreeMap<&str, &str> = BTreeMap::new();
        for (wallet, group) in &raw {
            let entry = group_min.entry(group).or_insert(wallet);
            if wallet.as_str() < *entry {
                *entry = wallet;
            }
        }
        let assign = raw
            .iter()
            .map(|(w, g)| (w.clone(), group_min[g.as_str()].to_string()))
            .collect();
        Self {
            assign,
            provenance: Vec::new(),
            custodial: BTreeSet::new(),
            custodial_mode: CustodialMode::Exclude,
        }
    }

    pub fn cluster_of(&self, wallet: &str) -> Option<&str> {
        self.assign.get(wallet).map(String::as_str)
    }

    pub fn assignments(&self) -> &BTreeMap<String, String> {
        &self.assign
    }

    pub fn provenance(&self) -> &[MergePair] {
        &self.provenance
    }

    /// Map per-wallet flows to per-cluster flows.
    ///
    /// Custodial wallets are filtered first (step c). A cluster's flow
    /// magnitude is the sum of its members' absolute flows (gross, not
    /// net), signed by the cluster's net direction: a cluster's market
    /// footprint is its combined activity, and gross aggregation keeps
    /// clustered HHI >= raw HHI for every partition. Wallets absent
    /// from the map pass through unmerged.
    pub fn apply_to_flows(&self, flows: &TraderFlows) -> TraderFlows {
        let mut gross: BTreeMap<String, f64> = BTreeMap::new();
        let mut net: BTreeMap<String, f64> = BTreeMap::new();
        for (wallet, &flow) in flows.entries() {
            let flow = if self.custodial.contains(wallet) {
                match self.custodial_mode {
                    CustodialMode::Exclude => continue,
                    CustodialMode::Downweight(lambda) => flow * lambda,
                }
            } else {
                flow
            };
            let cluster = self.cluster_of(wallet).unwrap_or(wallet.as_str()).to_string();
            *gross.entry(cluster.clone()).or_insert(0.0) += flow.abs();
            *net.entry(cluster).or_insert(0.0) += flow;
        }
        TraderFlows::from_entries(gross.into_iter().map(|(c, g)| {
            let sign = if net[&c] < 0.0 { -1.0 } else { 1.0 };
            (c, sign * g)
        }))
    }
}

/// Step (a): wallets whose first deposit came from the same source are
/// merged. Custodial sources are excluded as merge keys and custodial
/// wallets are never merged themselves.
pub fn cluster_common_funder(graph: &WalletGraph) -> Vec<MergePair> {
    // First first-deposit edge per wallet, in input order.
    let mut first_funder: BTreeMap<&str, &str> = BTreeMap::new();
    for edge in &graph.funding_edges {
        if edge.first_deposit
            && !graph.custodial.contains(&edge.funder)
            && !graph.custodial.contains(&edge.funded)
        {
            first_funder.entry(edge.funded.as_str()).or_insert(edge.funder.as_str());
        }
    }
    let mut by_funder: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (funded, funder) in first_funder {
        by_funder.entry(funder).or_default().push(funded);
    }
    let mut merges = Vec::new();
    for group in by_funder.values() {
        for pair in group.windows(2) {
            merges.push(MergePair {
                a: pair[0].to_string(),
                b: pair[1].to_string(),
                step: MergeStep::CommonFunder,
            });
        }
    }
    merges
}

/// Step (b): wallet pairs whose fraction of jointly active bins with
/// identical signed direction exceeds the threshold are merged.
/// Pairs with fewer than `min_joint_bins` jointly active bins never are.
pub fn cluster_temporal(
    graph: &WalletGraph,
    share_threshold: f64,
    min_joint_bins: usize,
) -> Vec<MergePair> {
    let wallets: Vec<(&String, &Vec<i8>)> = graph
        .activity
        .iter()
        .filter(|(w, _)| !graph.custodial.contains(*w))
        .collect();
    let mut merges = Vec::new();
    for i in 0..wallets.len() {
        for j in i + 1..wallets.len() {
            let (wa, sa) = wallets[i];
            let (wb, sb) = wallets[j];
            let mut joint = 0usize;
            let mut same = 0usize;
            for (x, y) in sa.iter().zip(sb.iter()) {
                if *x != 0 && *y != 0 {
                    joint += 1;
                    if x == y {
                        same += 1;
                    }
                }
            }
            if joint >= min_joint_bins && (same as f64) / (joint as f64) > share_threshold {
                merges.push(MergePair {
                    a: wa.clone(),
                    b: wb.clone(),
                    step: MergeStep::Temporal,
                });
            }
        }
    }
    merges
}

/// Step (c): remove listed custodial wallets from a flow map, or scale
/// their flows by `lambda` in (0, 1).
pub fn filter_custodial(
    flows: &TraderFlows,
    custodial: &BTreeSet<String>,
    mode: CustodialMode,
) -> Result<TraderFlows, ClusterError> {
    if let CustodialMode::Downweight(lambda) = mode {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ClusterError::InvalidLambda(lambda));
        }
    }
    let mut out = TraderFlows::new();
    for (wallet, &flow) in flows.entries() {
        if custodial.contains(wallet) {
            match mode {
                CustodialMode::Exclude => continue,
                CustodialMode::Downweight(lambda) => out.add(wallet, flow * lambda),
            }
        } else {
            out.add(wallet, flow);
        }
    }
    Ok(out)
}

/// Undirected weighted wallet-funding graph restricted to a wallet set.
/// Edge weight is the total transferred amount between the pair.
fn undirected_weights(
    graph: &WalletGraph,
    members: &BTreeSet<&str>,
) -> BTreeMap<(String, String), f64> {
    let mut weights: BTreeMap<(String, String), f64> = BTreeMap::new();
    for edge in &graph.funding_edges {
        if members.contains(edge.funder.as_str()) && members.contains(edge.funded.as_str()) {
            let key = if edge.funder <= edge.funded {
                (edge.funder.clone(), edge.funded.clone())
            } else {
                (edge.funded.clone(), edge.funder.clone())
            };
            *weights.entry(key).or_insert(0.0) += edge.amount;
        }
    }
    weights
}

const MODULARITY_GAIN_EPS: f64 = 1e-9;

/// Greedy modularity maximization by local moving (Louvain-style,
/// single-level passes until no gain above 1e-9).
///
/// Returns the communities as merge pairs. Empty graphs and isolated
/// nodes yield no merges.
pub fn community_detect(graph: &WalletGraph) -> Vec<MergePair> {
    let members: BTreeSet<&str> = graph
        .wallets
        .iter()
        .map(String::as_str)
        .filter(|w| !graph.custodial.contains(*w))
        .collect();
    community_detect_on(graph, &members)
}

fn community_detect_on(graph: &WalletGraph, members: &BTreeSet<&str>) -> Vec<MergePair> {
    let nodes: Vec<&str> = members.iter().copied().collect();
    let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let n = nodes.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut two_m = 0.0;
    for ((a, b), w) in undirected_weights(graph, members) {
        if a == b {
            continue;
        }
        let (i, j) = (index[a.as_str()], index[b.as_str()]);
        adj[i].push((j, w));
        adj[j].push((i, w));
        two_m += 2.0 * w;
    }
    if two_m == 0.0 {
        return Vec::new();
    }
    let degree: Vec<f64> = adj.iter().map(|nb| nb.iter().map(|(_, w)| w).sum()).collect();
    let mut community: Vec<usize> = (0..n).collect();
    // Total degree per community.
    let mut comm_degree: Vec<f64> = degree.clone();

    let mut improved = true;
    while improved {
        improved = false;
        for node in 0..n {
            let current = community[node];
            // Weight from node to each neighboring community.
            let mut links: BTreeMap<usize, f64> = BTreeMap::new();
            for &(nb, w) in &adj[node] {
                *links.entry(community[nb]).or_insert(0.0) += w;
            }
            let own_links = links.get(&current).copied().unwrap_or(0.0);
            comm_degree[current] -= degree[node];
            let base = own_links - comm_degree[current] * degree[node] / two_m;
            let mut best = (current, 0.0f64);
            for (&cand, &w) in &links {
                if cand == current {
                    continue;
                }
                let gain = (w - comm_degree[cand] * degree[node] / two_m) - base;
                if gain > best.1 + MODULARITY_GAIN_EPS
                    || (gain > best.1 - MODULARITY_GAIN_EPS && gain > 0.0 && cand < best.0)
                {
                    best = (cand, gain);
                }
            }
            comm_degree[best.0] += degree[node];
            if best.0 != current {
                community[node] = best.0;
                improved = true;
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (node, &c) in community.iter().enumerate() {
        groups.entry(c).or_default().push(nodes[node]);
    }
    let mut merges = Vec::new();
    for group in groups.values_mut() {
        group.sort_unstable();
        for pair in group.windows(2) {
            merges.push(MergePair {
                a: pair[0].to_string(),
                b: pair[1].to_string(),
                step: MergeStep::Community,
            });
        }
    }
    merges
}

/// Modularity of a partition, for diagnostics and test oracles.
pub fn modularity(graph: &WalletGraph, partition: &BTreeMap<String, usize>) -> f64 {
    let members: BTreeSet<&str> = partition.keys().map(String::as_str).collect();
    let weights = undirected_weights(graph, &members);
    let two_m: f64 = 2.0 * weights.values().sum::<f64>();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut degree: BTreeMap<&str, f64> = BTreeMap::new();
    for ((a, b), w) in &weights {
        *degree.entry(a.as_str()).or_insert(0.0) += w;
        *degree.entry(b.as_str()).or_insert(0.0) += w;
    }
    let mut q = 0.0;
    for ((a, b), w) in &weights {
        if partition[a.as_str()] == partition[b.as_str()] {
            q += 2.0 * w / two_m;
        }
    }
    let mut comm_degree: BTreeMap<usize, f64> = BTreeMap::new();
    for (node, d) in &degree {
        *comm_degree.entry(partition[*node]).or_insert(0.0) += d;
    }
    for d in comm_degree.values() {
        q -= (d / two_m).powi(2);
    }
    q
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller index as root so canonical ids are
            // order-independent.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Run the full protocol: (a) -> (b) -> (c) -> (d), composing merges
/// through a union-find. Step (d) runs on the residual set of wallets
/// untouched by (a) and (b). Cluster ids are the minimum member id.
pub fn build_cluster_map(graph: &WalletGraph, config: &ClusterConfig) -> ClusterMap {
    let wallets: Vec<&String> = graph.wallets.iter().collect();
    let index: BTreeMap<&str, usize> =
        wallets.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut uf = UnionFind::new(wallets.len());
    let mut provenance = Vec::new();

    let mut touched: BTreeSet<String> = BTreeSet::new();
    let apply = |uf: &mut UnionFind,
                 touched: &mut BTreeSet<String>,
                 merges: Vec<MergePair>,
                 provenance: &mut Vec<MergePair>| {
        for m in merges {
            uf.union(index[m.a.as_str()], index[m.b.as_str()]);
            touched.insert(m.a.clone());
            touched.insert(m.b.clone());
            provenance.push(m);
        }
    };

    apply(&mut uf, &mut touched, cluster_common_funder(graph), &mut provenance);
    apply(
        &mut uf,
        &mut touched,
        cluster_temporal(graph, config.share_threshold, config.min_joint_bins),
        &mut provenance,
    );
    // Step (c) carries through to flow application time.
    let residual: BTreeSet<&str> = graph
        .wallets
        .iter()
        .map(String::as_str)
        .filter(|w| !touched.contains(*w as &str) && !graph.custodial.contains(*w))
        .collect();
    apply(
        &mut uf,
        &mut touched,
        community_detect_on(graph, &residual),
        &mut provenance,
    );

    // Canonicalize: cluster id is the minimum member id.
    let mut root_min: BTreeMap<usize, &str> = BTreeMap::new();
    for (i, w) in wallets.iter().enumerate() {
        let root = uf.find(i);
        let entry = root_min.entry(root).or_insert(w.as_str());
        if w.as_str() < *entry {
            *entry = w.as_str();
        }
    }
    let mut assign = BTreeMap::new();
    for (i, w) in wallets.iter().enumerate() {
        assign.insert((*w).clone(), root_min[&uf.find(i)].to_string());
    }
    ClusterMap {
        assign,
        provenance,
        custodial: graph.custodial.clone(),
        custodial_mode: config.custodial_mode,
    }
}

/// HHI with and without clustering; a large gap flags breadth inflation
/// by multi-wallet operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub hhi_raw: f64,
    pub hhi_clustered: f64,
    pub gap: f64,
}

pub fn hhi_robustness_report(
    flows: &TraderFlows,
    map: &ClusterMap,
) -> Result<RobustnessReport, ClusterError> {
    let hhi_raw = hhi_flow(flows)?;
    let hhi_clustered = hhi_flow(&map.apply_to_flows(flows))?;
    Ok(RobustnessReport { hhi_raw, hhi_clustered, gap: hhi_clustered - hhi_raw })
}

/// Parse the line-delimited wallet-graph format:
///
/// ```text
/// edge <funder> <funded> <amount> <0|1>
/// activity <wallet> <s1,s2,...>     # each s in {-1, 0, 1}
/// custodial <wallet>
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn parse_wallet_graph<R: BufRead>(reader: R) -> Result<WalletGraph, ClusterError> {
    let mut graph = WalletGraph::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| ClusterError::Parse { line: lineno, msg: msg.to_string() };
        match parts[0] {
            "edge" => {
                if parts.len() != 5 {
                    return Err(err("expected: edge <funder> <funded> <amount> <0|1>"));
                }
                let amount: f64 = parts[3].parse().map_err(|_| err("bad amount"))?;
                let first = match parts[4] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(err("first_deposit flag must be 0 or 1")),
                };
                graph.add_edge(parts[1], parts[2], amount, first);
            }
            "activity" => {
                if parts.len() != 3 {
                    return Err(err("expected: activity <wallet> <s1,s2,...>"));
                }
                let series = parts[2]
                    .split(',')
                    .map(|s| match s {
                        "-1" => Ok(-1i8),
                        "0" => Ok(0),
                        "1" | "+1" => Ok(1),
                        _ => Err(err("activity entries must be -1, 0 or 1")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                graph.set_activity(parts[1], series)?;
            }
            "custodial" => {
                if parts.len() != 2 {
                    return Err(err("expected: custodial <wallet>"));
                }
                graph.add_custodial(parts[1]);
            }
            other => return Err(err(&format!("unknown record type {other:?}"))),
        }
    }
    Ok(graph)
}

pub fn write_wallet_graph<W: Write>(graph: &WalletGraph, mut w: W) -> std::io::Result<()> {
    for e in &graph.funding_edges {
        writeln!(
            w,
            "edge {} {} {} {}",
            e.funder,
            e.funded,
            e.amount,
            u8::from(e.first_deposit)
        )?;
    }
    for (wallet, series) in &graph.activity {
        let joined: Vec<String> = series.iter().map(|s| s.to_string()).collect();
        writeln!(w, "activity {} {}", wallet, joined.join(","))?;
    }
    for c in &graph.custodial {
        writeln!(w, "custodial {c}")?;
    }
    Ok(())
}

/// Test scaffolding: inject a common funder behind a fraction of the
/// given wallets. Not a DGP change; used to exercise the protocol
/// against wallet-splitting.
pub fn synthetic_common_funder_graph(
    wallet_ids: &[String],
    fraction: f64,
    funder_id: &str,
) -> WalletGraph {
    let mut graph = WalletGraph::new();
    for id in wallet_ids {
        graph.add_wallet(id);
    }
    let n = ((wallet_ids.len() as f64) * fraction).round() as usize;
    for id in wallet_ids.iter().take(n) {
        graph.add_edge(funder_id, id, 1.0, true);
    }
    graph
}
