//! Descriptive network statistics.
//!
//! Everything here is a pure function of an immutable [`Network`], cheap
//! enough to evaluate per simulated graph inside a reference-table build.

use super::Network;
use crate::{Error, Result};
use std::collections::VecDeque;

/// Population moments of the in- and out-degree sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeSummaries {
    pub mean_in: f64,
    pub var_in: f64,
    pub mean_out: f64,
    pub var_out: f64,
}

fn moments(degrees: impl Iterator<Item = usize>, n: usize) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for d in degrees {
        let d = d as f64;
        sum += d;
        sumsq += d * d;
    }
    let mean = sum / n as f64;
    (mean, sumsq / n as f64 - mean * mean)
}

/// Mean and population variance of in/out degrees. For undirected networks
/// the in and out entries coincide. Mean-in always equals mean-out (both are
/// `edges / n` for directed graphs).
pub fn degree_summaries(net: &Network) -> DegreeSummaries {
    let n = net.node_count();
    let (mean_in, var_in) = moments((0..n).map(|u| net.degree_in(u)), n);
    let (mean_out, var_out) = moments((0..n).map(|u| net.degree_out(u)), n);
    DegreeSummaries { mean_in, var_in, mean_out, var_out }
}

fn require_undirected(net: &Network, what: &str) -> Result<()> {
    if net.is_directed() {
        Err(Error::InvalidArgument(format!("{what} requires an undirected network")))
    } else {
        Ok(())
    }
}

/// Number of 2-stars: Σ_v C(deg(v), 2).
pub fn count_kstar2(net: &Network) -> Result<u64> {
    require_undirected(net, "kstar2")?;
    Ok((0..net.node_count())
        .map(|u| {
            let d = net.degree(u) as u64;
            d * (d.saturating_sub(1)) / 2
        })
        .sum())
}

/// Number of triangles (each counted once).
pub fn count_triangles(net: &Network) -> Result<u64> {
    require_undirected(net, "triangle count")?;
    let mut closed = 0u64;
    for u in 0..net.node_count() {
        for &v in net.neighbors_out(u) {
            let v = v as usize;
            if v > u {
                closed += sorted_intersection_size(net.neighbors_out(u), net.neighbors_out(v));
            }
        }
    }
    // Each triangle {a,b,c} is found once per edge, i.e. three times.
    Ok(closed / 3)
}

/// Size of the intersection of two sorted neighbor lists.
pub(crate) fn sorted_intersection_size(a: &[u32], b: &[u32]) -> u64 {
    let (mut i, mut j, mut count) = (0usize, 0usize, 0u64);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Geometrically weighted degree statistic:
/// `e^α · Σ_v (1 − (1 − e^{−α})^{deg(v)})` with decay `α > 0`.
pub fn gw_degree(net: &Network, decay: f64) -> Result<f64> {
    require_undirected(net, "gw-degree")?;
    if !(decay > 0.0) {
        return Err(Error::InvalidArgument(format!("gw-degree decay must be > 0, got {decay}")));
    }
    let q = 1.0 - (-decay).exp();
    let sum: f64 = (0..net.node_count()).map(|u| 1.0 - q.powi(net.degree(u) as i32)).sum();
    Ok(decay.exp() * sum)
}

/// Global clustering coefficient: 3·triangles / 2-stars (0 when no 2-stars).
pub fn clustering_global(net: &Network) -> Result<f64> {
    let stars = count_kstar2(net)?;
    if stars == 0 {
        return Ok(0.0);
    }
    Ok(3.0 * count_triangles(net)? as f64 / stars as f64)
}

/// Average local clustering: mean over all nodes of the fraction of a node's
/// neighbor pairs that are themselves adjacent; degree < 2 contributes 0.
pub fn clustering_avg_local(net: &Network) -> Result<f64> {
    require_undirected(net, "local clustering")?;
    let n = net.node_count();
    if n == 0 {
        return Err(Error::Degenerate("clustering of empty node set".into()));
    }
    let mut total = 0.0;
    for u in 0..n {
        let nbrs = net.neighbors_out(u);
        let d = nbrs.len();
        if d < 2 {
            continue;
        }
        let mut links = 0u64;
        for (idx, &v) in nbrs.iter().enumerate() {
            for &w in &nbrs[idx + 1..] {
                if net.has_edge(v as usize, w as usize) {
                    links += 1;
                }
            }
        }
        total += links as f64 / (d * (d - 1) / 2) as f64;
    }
    Ok(total / n as f64)
}

/// Degree assortativity: Pearson correlation of endpoint degrees over edges,
/// both orientations counted. Returns NaN (undefined sentinel) when the
/// endpoint-degree variance is zero, e.g. on regular graphs; reference-table
/// filters drop such rows.
pub fn assortativity_degree(net: &Network) -> Result<f64> {
    require_undirected(net, "degree assortativity")?;
    if net.edge_count() == 0 {
        return Err(Error::Degenerate("assortativity of an edgeless network".into()));
    }
    let mut sx = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut m = 0.0;
    for u in 0..net.node_count() {
        let du = net.degree(u) as f64;
        for &v in net.neighbors_out(u) {
            // Iterating every adjacency entry visits each edge in both
            // orientations, which is exactly the both-ways endpoint list.
            let dv = net.degree(v as usize) as f64;
            sx += du;
            sxx += du * du;
            sxy += du * dv;
            m += 1.0;
        }
    }
    let mean = sx / m;
    let var = sxx / m - mean * mean;
    let cov = sxy / m - mean * mean;
    if var <= 0.0 {
        return Ok(f64::NAN);
    }
    Ok(cov / var)
}

/// Edge count over the maximum possible: `e / (n(n−1)/2)` undirected,
/// `e / (n(n−1))` directed.
pub fn density(net: &Network) -> Result<f64> {
    let n = net.node_count() as f64;
    if net.node_count() < 2 {
        return Err(Error::Degenerate("density needs at least 2 nodes".into()));
    }
    let max_edges = if net.is_directed() { n * (n - 1.0) } else { n * (n - 1.0) / 2.0 };
    Ok(net.edge_count() as f64 / max_edges)
}

/// Fraction of directed edges whose reverse edge also exists. Undirected
/// networks are trivially reciprocal (returns 1).
pub fn reciprocity(net: &Network) -> Result<f64> {
    if net.edge_count() == 0 {
        return Err(Error::Degenerate("reciprocity of an edgeless network".into()));
    }
    if !net.is_directed() {
        return Ok(1.0);
    }
    let mut mutual = 0usize;
    for u in 0..net.node_count() {
        for &v in net.neighbors_out(u) {
            if net.has_edge(v as usize, u) {
                mutual += 1;
            }
        }
    }
    Ok(mutual as f64 / net.edge_count() as f64)
}

/// Shortest-path aggregates over ordered reachable pairs (u ≠ v with a
/// finite directed path u → v; undirected networks count both orientations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMetrics {
    /// Mean shortest-path length over reachable ordered pairs.
    pub mean_path: f64,
    /// Longest finite shortest path (the conventional diameter).
    pub max_eccentricity: f64,
    /// Number of ordered reachable pairs averaged over.
    pub reachable_pairs: u64,
}

/// BFS from every node; averages exclude unreachable and self pairs.
pub fn path_metrics(net: &Network) -> Result<PathMetrics> {
    let n = net.node_count();
    if n < 2 {
        return Err(Error::Degenerate("path metrics need at least 2 nodes".into()));
    }
    let mut total = 0u64;
    let mut pairs = 0u64;
    let mut longest = 0u64;
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[s] = 0;
        queue.clear();
        queue.push_back(s as u32);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for &v in net.neighbors_out(u as usize) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        for (v, &d) in dist.iter().enumerate() {
            if v != s && d != u32::MAX {
                total += d as u64;
                pairs += 1;
                longest = longest.max(d as u64);
            }
        }
    }
    if pairs == 0 {
        return Err(Error::Degenerate("no reachable pairs (edgeless network)".into()));
    }
    Ok(PathMetrics {
        mean_path: total as f64 / pairs as f64,
        max_eccentricity: longest as f64,
        reachable_pairs: pairs,
    })
}

/// Mean shortest-path length over reachable ordered pairs — the path-length
/// summary used in ABC summary vectors.
pub fn mean_path(net: &Network) -> Result<f64> {
    Ok(path_metrics(net)?.mean_path)
}

/// Longest finite shortest path (conventional diameter).
pub fn max_eccentricity(net: &Network) -> Result<f64> {
    Ok(path_metrics(net)?.max_eccentricity)
}
