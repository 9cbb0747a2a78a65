//! Mechanistic network growth models: preferential attachment (directed and
//! nonlinear undirected) and duplication-based growth.
//!
//! Each grower adds nodes one at a time; the per-step kernels are separate
//! functions so tests can drive a single step with a chosen anchor.

use crate::netstats::Network;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Draw `m` distinct indices with probability proportional to `weights`
/// (without replacement). Weights must be nonnegative with positive total.
fn weighted_without_replacement<R: Rng + ?Sized>(
    weights: &mut [f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate(
                "attachment weights sum to zero (undefined distribution)".into(),
            ));
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                pick = i;
                break;
            }
        }
        chosen.push(pick);
        weights[pick] = 0.0;
    }
    Ok(chosen)
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {p} outside [0,1]")))
    }
}

/// Directed citation growth. Starting from one seed node, each new node `j`
/// cites Binomial(n0, p)-many distinct existing nodes (capped at `j`), each
/// picked without replacement with weight `k0 + indegree`. Edges run from the
/// newer node to the older, so the graph is acyclic under the index order.
pub fn grow_price<R: Rng + ?Sized>(
    k0: f64,
    p: f64,
    n: usize,
    n0: usize,
    rng: &mut R,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidArgument("price growth needs n ≥ 2".into()));
    }
    if n0 < 1 {
        return Err(Error::InvalidArgument("price needs n0 ≥ 1".into()));
    }
    check_probability("p", p)?;
    if !k0.is_finite() {
        return Err(Error::InvalidArgument("k0 must be finite".into()));
    }
    let binom = Binomial::new(n0 as u64, p)
        .map_err(|e| Error::InvalidArgument(format!("Binomial({n0},{p}): {e}")))?;
    let mut net = Network::new(n, true);
    for j in 1..n {
        let m = (binom.sample(rng) as usize).min(j);
        if m == 0 {
            continue;
        }
        let mut weights: Vec<f64> = (0..j).map(|i| k0 + net.degree_in(i) as f64).collect();
        if weights.iter().any(|&w| w < 0.0) || !weights.iter().sum::<f64>().is_finite() {
            return Err(Error::Degenerate(format!(
                "k0 = {k0} yields negative attachment weights"
            )));
        }
        for target in weighted_without_replacement(&mut weights, m, rng)? {
            net.add_edge(j, target)?;
        }
    }
    Ok(net)
}

/// Truncated Binomial(n0, p) conditioned on a positive count, sampled by
/// inverse CDF over the normalized positive-support pmf. The p→0 limit
/// concentrates at 1.
fn truncated_binomial_positive<R: Rng + ?Sized>(n0: usize, p: f64, rng: &mut R) -> usize {
    if p <= 0.0 {
        return 1;
    }
    if p >= 1.0 {
        return n0;
    }
    let q = 1.0 - p;
    // pmf(0) = q^n0; recurrence pmf(k+1) = pmf(k)·(n0−k)/(k+1)·p/q.
    let mut pmf = q.powi(n0 as i32);
    let norm = 1.0 - pmf;
    let mut u = rng.random::<f64>() * norm;
    for k in 1..=n0 {
        pmf *= (n0 - (k - 1)) as f64 / k as f64 * (p / q);
        u -= pmf;
        if u <= 0.0 {
            return k;
        }
    }
    n0
}

/// Undirected nonlinear preferential attachment. Each new node connects to
/// `m ≥ 1` distinct existing nodes (m truncated-Binomial(n0, p), capped at
/// the current node count) with attachment weight `degree^α`; degree-zero
/// nodes get weight 1e-12 so the distribution stays proper early in growth.
pub fn grow_nlpa<R: Rng + ?Sized>(
    alpha: f64,
    p: f64,
    n: usize,
    n0: usize,
    rng: &mut R,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidArgument("nlpa growth needs n ≥ 2".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("nlpa needs alpha > 0, got {alpha}")));
    }
    if n0 < 1 {
        return Err(Error::InvalidArgument("nlpa needs n0 ≥ 1".into()));
    }
    check_probability("p", p)?;
    const ZERO_DEGREE_WEIGHT: f64 = 1e-12;
    let mut net = Network::new(n, false);
    for j in 1..n {
        let m = truncated_binomial_positive(n0, p, rng).min(j);
        let mut weights: Vec<f64> = (0..j)
            .map(|i| {
                let k = net.degree(i) as f64;
                if k > 0.0 {
                    k.powf(alpha)
                } else {
                    ZERO_DEGREE_WEIGHT
                }
            })
            .collect();
        for target in weighted_without_replacement(&mut weights, m, rng)? {
            net.add_edge(j, target)?;
        }
    }
    Ok(net)
}

/// One duplication-mutation-complementation step: `new` copies the edges of
/// `anchor`; for each copied neighbor, with probability `q_mod` exactly one of
/// the pair {(anchor, nbr), (new, nbr)} is removed (uniform coin); finally
/// the anchor–new edge is added with probability `q_con`.
pub(crate) fn dmc_step<R: Rng + ?Sized>(
    net: &mut Network,
    new: usize,
    anchor: usize,
    q_mod: f64,
    q_con: f64,
    rng: &mut R,
) -> Result<()> {
    let nbrs: Vec<usize> = net.neighbors_out(anchor).iter().map(|&v| v as usize).collect();
    for &w in &nbrs {
        net.add_edge(new, w)?;
    }
    for &w in &nbrs {
        if rng.random::<f64>() < q_mod {
            if rng.random::<f64>() < 0.5 {
                net.remove_edge(anchor, w)?;
            } else {
                net.remove_edge(new, w)?;
            }
        }
    }
    if rng.random::<f64>() < q_con {
        net.add_edge(anchor, new)?;
    }
    Ok(())
}

/// Duplication-mutation-complementation growth from a two-node connected
/// seed. θ = (q_mod, q_con).
pub fn grow_dmc<R: Rng + ?Sized>(
    q_mod: f64,
    q_con: f64,
    n: usize,
    rng: &mut R,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidArgument("dmc growth needs n ≥ 2".into()));
    }
    check_probability("q_mod", q_mod)?;
    check_probability("q_con", q_con)?;
    let mut net = Network::new(n, false);
    net.add_edge(0, 1)?;
    for j in 2..n {
        let anchor = rng.random_range(0..j);
        dmc_step(&mut net, j, anchor, q_mod, q_con, rng)?;
    }
    Ok(net)
}

/// One duplication-random-mutation step: `new` copies the anchor's edges,
/// each copy removed independently with probability `q_del`; then every
/// existing node gains an edge to `new` independently with probability
/// `q_new/(n′−1)` (n′ = node count including `new`; probability clamped).
pub(crate) fn dmr_step<R: Rng + ?Sized>(
    net: &mut Network,
    new: usize,
    anchor: usize,
    q_del: f64,
    q_new: f64,
    rng: &mut R,
) -> Result<()> {
    let nbrs: Vec<usize> = net.neighbors_out(anchor).iter().map(|&v| v as usize).collect();
    for &w in &nbrs {
        net.add_edge(new, w)?;
    }
    for &w in &nbrs {
        if rng.random::<f64>() < q_del {
            net.remove_edge(new, w)?;
        }
    }
    let n_prime = new + 1; // nodes 0..=new exist at this point
    let attach = (q_new / (n_prime as f64 - 1.0)).clamp(0.0, 1.0);
    for u in 0..new {
        if rng.random::<f64>() < attach {
            net.add_edge(u, new)?;
        }
    }
    Ok(())
}

/// Duplication growth with random mutation from a two-node connected seed.
/// θ = (q_del, q_new); q_new ≥ 0 need not be a probability (it is divided by
/// n′−1 and clamped).
pub fn grow_dmr<R: Rng + ?Sized>(
    q_del: f64,
    q_new: f64,
    n: usize,
    rng: &mut R,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidArgument("dmr growth needs n ≥ 2".into()));
    }
    check_probability("q_del", q_del)?;
    if !(q_new >= 0.0) {
        return Err(Error::InvalidArgument(format!("q_new = {q_new} must be ≥ 0")));
    }
    let mut net = Network::new(n, false);
    net.add_edge(0, 1)?;
    for j in 2..n {
        let anchor = rng.random_range(0..j);
        dmr_step(&mut net, j, anchor, q_del, q_new, rng)?;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_two_nodes_edge_iff_positive_draw() {
        let mut rng = crate::rng::master_rng(31);
        let forced = grow_price(1.0, 1.0, 2, 3, &mut rng).unwrap();
        assert!(forced.has_edge(1, 0), "p=1 forces at least one citation");
        let empty = grow_price(1.0, 0.0, 2, 3, &mut rng).unwrap();
        assert_eq!(empty.edge_count(), 0);
    }

    #[test]
    fn price_mean_outdegree_tracks_binomial_mean() {
        let (n, n0, p) = (50usize, 10usize, 0.02f64);
        let mut sum = 0.0;
        let mut count = 0.0;
        for rep in 0..1000u64 {
            let mut rng = crate::rng::stream_rng(32, rep);
            let net = grow_price(1.0, p, n, n0, &mut rng).unwrap();
            for j in 1..n {
                sum += net.degree_out(j) as f64;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let expect = n0 as f64 * p;
        assert!((mean - expect).abs() < 0.01, "mean outdegree {mean} vs {expect}");
    }

    #[test]
    fn price_edges_point_backwards() {
        let mut rng = crate::rng::master_rng(33);
        let net = grow_price(1.0, 0.3, 40, 5, &mut rng).unwrap();
        for (u, v) in net.edge_list() {
            assert!(u > v, "edge {u}→{v} violates growth ordering");
        }
    }

    #[test]
    fn price_rejects_nonpositive_attachment_mass() {
        let mut rng = crate::rng::master_rng(34);
        // k0 = 0 with all-zero indegrees: the first citation draw has no
        // defined distribution.
        let err = grow_price(0.0, 1.0, 5, 3, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "got {err:?}");
    }

    #[test]
    fn nlpa_every_arrival_has_degree() {
        for seed in 0..5 {
            let mut rng = crate::rng::stream_rng(35, seed);
            let net = grow_nlpa(1.2, 0.02, 100, 49, &mut rng).unwrap();
            // Arrival degree ≥ 1 implies no isolated non-seed node, and the
            // graph stays connected since every arrival links to the existing
            // component.
            for v in 1..100 {
                assert!(net.degree(v) >= 1, "node {v} isolated");
            }
            let pm = crate::netstats::path_metrics(&net).unwrap();
            assert_eq!(pm.reachable_pairs, 100 * 99, "graph not connected");
        }
    }

    #[test]
    fn nlpa_alpha_one_is_proportional_to_degree() {
        // With α=1 and single-edge arrivals (p→0 truncation forces m=1) the
        // attachment frequencies must match plain degree proportionality.
        let mut hits0 = 0u32;
        let total = 40_000u32;
        for rep in 0..total {
            let mut rng = crate::rng::stream_rng(36, rep as u64);
            // Arrival 1 must link to 0; arrival 2 links to 0 or 1 evenly.
            let net = grow_nlpa(1.0, 0.0, 4, 3, &mut rng).unwrap();
            if net.has_edge(3, 0) {
                hits0 += 1;
            }
        }
        // Arrival 2 joins node 0 or node 1 with probability ½ each, leaving
        // node 0 with degree 2 or 1 out of a total of 4. Node 0's share of
        // node 3's single edge is therefore ½·(2/4) + ½·(1/4) = 0.375.
        let frac = hits0 as f64 / total as f64;
        assert!((frac - 0.375).abs() < 0.02, "attachment share {frac}");
    }

    #[test]
    fn dmc_no_deletion_copies_whole_neighborhood() {
        let mut rng = crate::rng::master_rng(37);
        let mut net = Network::new(5, false);
        net.add_edge(0, 1).unwrap();
        net.add_edge(0, 2).unwrap();
        net.add_edge(1, 2).unwrap();
        let pre: Vec<usize> = net.neighbors_out(0).iter().map(|&v| v as usize).collect();
        dmc_step(&mut net, 4, 0, 0.0, 0.0, &mut rng).unwrap();
        for w in pre {
            assert!(net.has_edge(4, w), "copied edge (4,{w}) missing");
            assert!(net.has_edge(0, w), "original edge (0,{w}) lost");
        }
    }

    #[test]
    fn dmc_forced_deletion_keeps_exactly_one_of_each_pair() {
        for seed in 0..50 {
            let mut rng = crate::rng::stream_rng(38, seed);
            let mut net = Network::new(6, false);
            for w in [1, 2, 3] {
                net.add_edge(0, w).unwrap();
            }
            dmc_step(&mut net, 5, 0, 1.0, 0.0, &mut rng).unwrap();
            for w in [1, 2, 3] {
                let kept = usize::from(net.has_edge(0, w)) + usize::from(net.has_edge(5, w));
                assert_eq!(kept, 1, "neighbor {w} kept {kept} edges");
            }
            assert!(!net.has_edge(0, 5), "q_con = 0 must not connect anchor");
        }
    }

    #[test]
    fn dmc_forced_connection_links_anchor() {
        let mut rng = crate::rng::master_rng(39);
        let mut net = Network::new(4, false);
        net.add_edge(0, 1).unwrap();
        dmc_step(&mut net, 3, 0, 0.5, 1.0, &mut rng).unwrap();
        assert!(net.has_edge(0, 3));
    }

    #[test]
    fn dmr_extremes() {
        let mut rng = crate::rng::master_rng(40);
        // All mechanisms off: isolated arrival.
        let mut net = Network::new(4, false);
        net.add_edge(0, 1).unwrap();
        net.add_edge(0, 2).unwrap();
        dmr_step(&mut net, 3, 0, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(net.degree(3), 0);
        // Pure duplication: arrival degree equals anchor pre-step degree.
        let mut net = Network::new(4, false);
        net.add_edge(0, 1).unwrap();
        net.add_edge(0, 2).unwrap();
        dmr_step(&mut net, 3, 0, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(net.degree(3), 2);
    }

    #[test]
    fn dmr_random_attachment_gains_q_new_edges_in_expectation() {
        // With q_del = 1 the duplicated edges all vanish, so every edge on
        // the new node comes from the random-attachment coins and linearity
        // gives E[gain] = (n′−1)·q_new/(n′−1) = q_new exactly.
        let q_new = 0.1;
        let mut total = 0.0;
        let reps = 20_000u64;
        for rep in 0..reps {
            let mut rng = crate::rng::stream_rng(41, rep);
            let mut net = Network::new(30, false);
            for v in 1..29 {
                net.add_edge(0, v).unwrap();
            }
            dmr_step(&mut net, 29, 0, 1.0, q_new, &mut rng).unwrap();
            total += net.degree(29) as f64;
        }
        let mean = total / reps as f64;
        assert!((mean - q_new).abs() < 0.01, "mean attachment gain {mean}");
    }

    #[test]
    fn growers_emit_exactly_n_nodes_and_simple_graphs() {
        let mut rng = crate::rng::master_rng(42);
        let nets = [
            grow_price(1.0, 0.05, 30, 10, &mut rng).unwrap(),
            grow_nlpa(1.2, 0.05, 30, 10, &mut rng).unwrap(),
            grow_dmc(0.2, 0.1, 30, &mut rng).unwrap(),
            grow_dmr(0.2, 0.1, 30, &mut rng).unwrap(),
        ];
        for net in &nets {
            assert_eq!(net.node_count(), 30);
            let edges = net.edge_list();
            let mut seen = std::collections::HashSet::new();
            for (u, v) in edges {
                assert!(u != v, "self-loop");
                assert!(u < 30 && v < 30);
                assert!(seen.insert((u, v)), "duplicate edge ({u},{v})");
            }
        }
    }
}
