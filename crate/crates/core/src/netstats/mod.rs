//! Network representation and summary statistics.
//!
//! Summaries exposed here are the building blocks for simulation-based
//! inference on graphs: size-invariant descriptive statistics (density,
//! clustering, assortativity, mean path length) and maximum pseudo-likelihood
//! coefficients with a fixed size-offset, both usable as ABC summary vectors.

mod ergm;
mod stats;

pub use ergm::{
    change_stats, global_stats, mple, pseudo_hessian, pseudo_log_lik, size_offset,
    ChangeStatVector, ErgmStat, ErgmStatSpec,
};
pub use stats::{
    assortativity_degree, clustering_avg_local, clustering_global, count_kstar2, count_triangles,
    degree_summaries, density, gw_degree, max_eccentricity, mean_path, path_metrics,
    reciprocity, DegreeSummaries, PathMetrics,
};

use crate::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

/// Simple graph (directed or undirected), no self-loops, no multi-edges.
///
/// Neighbor lists are kept sorted so membership tests and set intersections
/// run in O(log deg) / O(deg) — the costs that dominate change-statistic and
/// toggle-based simulation workloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    directed: bool,
    /// Undirected: the only adjacency (symmetric). Directed: out-neighbors.
    out: Vec<Vec<u32>>,
    /// Directed only: in-neighbors. Empty for undirected networks.
    inc: Vec<Vec<u32>>,
    edges: usize,
}

impl Network {
    /// Empty network on `n` nodes.
    pub fn new(n: usize, directed: bool) -> Self {
        Network {
            n,
            directed,
            out: vec![Vec::new(); n],
            inc: if directed { vec![Vec::new(); n] } else { Vec::new() },
            edges: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of edges (each undirected edge counted once).
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    fn check_dyad(&self, u: usize, v: usize) -> Result<()> {
        if u == v {
            return Err(Error::InvalidArgument(format!("self-loop at node {u}")));
        }
        if u >= self.n || v >= self.n {
            return Err(Error::InvalidArgument(format!(
                "node index out of range: dyad ({u},{v}) on {} nodes",
                self.n
            )));
        }
        Ok(())
    }

    /// Insert an edge; returns `false` if it was already present.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<bool> {
        self.check_dyad(u, v)?;
        let (u32u, u32v) = (u as u32, v as u32);
        match self.out[u].binary_search(&u32v) {
            Ok(_) => Ok(false),
            Err(pos) => {
                self.out[u].insert(pos, u32v);
                if self.directed {
                    let pos_in = self.inc[v].binary_search(&u32u).unwrap_err();
                    self.inc[v].insert(pos_in, u32u);
                } else {
                    let pos_rev = self.out[v].binary_search(&u32u).unwrap_err();
                    self.out[v].insert(pos_rev, u32u);
                }
                self.edges += 1;
                Ok(true)
            }
        }
    }

    /// Remove an edge; returns `false` if it was absent.
    pub fn remove_edge(&mut self, u: usize, v: usize) -> Result<bool> {
        self.check_dyad(u, v)?;
        let (u32u, u32v) = (u as u32, v as u32);
        match self.out[u].binary_search(&u32v) {
            Err(_) => Ok(false),
            Ok(pos) => {
                self.out[u].remove(pos);
                if self.directed {
                    let pos_in = self.inc[v].binary_search(&u32u).unwrap();
                    self.inc[v].remove(pos_in);
                } else {
                    let pos_rev = self.out[v].binary_search(&u32u).unwrap();
                    self.out[v].remove(pos_rev);
                }
                self.edges -= 1;
                Ok(true)
            }
        }
    }

    /// Edge test: undirected `{u,v}` or directed `u → v`.
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && u < self.n && v < self.n && self.out[u].binary_search(&(v as u32)).is_ok()
    }

    /// Out-neighbors (directed) or all neighbors (undirected), sorted.
    pub fn neighbors_out(&self, u: usize) -> &[u32] {
        &self.out[u]
    }

    /// In-neighbors (directed); for undirected networks same as out.
    pub fn neighbors_in(&self, u: usize) -> &[u32] {
        if self.directed {
            &self.inc[u]
        } else {
            &self.out[u]
        }
    }

    pub fn degree_out(&self, u: usize) -> usize {
        self.out[u].len()
    }

    pub fn degree_in(&self, u: usize) -> usize {
        if self.directed {
            self.inc[u].len()
        } else {
            self.out[u].len()
        }
    }

    /// Undirected degree. For directed networks this is the out-degree plus
    /// in-degree (callers wanting the skeleton degree should skeletonize).
    pub fn degree(&self, u: usize) -> usize {
        if self.directed {
            self.out[u].len() + self.inc[u].len()
        } else {
            self.out[u].len()
        }
    }

    /// Undirected collapse: edge `{u,v}` present iff `u→v` or `v→u` is.
    /// Identity (cheap clone) on already-undirected networks.
    pub fn skeleton(&self) -> Network {
        if !self.directed {
            return self.clone();
        }
        let mut sk = Network::new(self.n, false);
        for u in 0..self.n {
            for &v in &self.out[u] {
                // add_edge dedups reciprocal pairs.
                sk.add_edge(u, v as usize).expect("valid dyad");
            }
        }
        sk
    }

    /// All edges as (u, v) pairs; undirected edges reported once with u < v.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edges);
        for u in 0..self.n {
            for &v in &self.out[u] {
                let v = v as usize;
                if self.directed || u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Parse a whitespace-separated "u v" edge list, 0-based node ids.
    ///
    /// `n` forces the node count; when `None` it is inferred as max id + 1.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn read_edge_list<R: BufRead>(reader: R, directed: bool, n: Option<usize>) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut max_id = 0usize;
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut it = trimmed.split_whitespace();
            let parse = |tok: Option<&str>, idx: usize| -> Result<usize> {
                tok.ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    msg: "expected two node ids".into(),
                })?
                .parse::<usize>()
                .map_err(|e| Error::Parse { line: idx + 1, msg: format!("bad node id: {e}") })
            };
            let u = parse(it.next(), idx)?;
            let v = parse(it.next(), idx)?;
            if it.next().is_some() {
                return Err(Error::Parse { line: idx + 1, msg: "trailing tokens".into() });
            }
            max_id = max_id.max(u).max(v);
            pairs.push((u, v));
        }
        let n = match n {
            Some(n) => n,
            None if pairs.is_empty() => 0,
            None => max_id + 1,
        };
        let mut net = Network::new(n, directed);
        for (line_no, (u, v)) in pairs.iter().enumerate() {
            net.add_edge(*u, *v).map_err(|e| Error::Parse {
                line: line_no + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(net)
    }

    /// Read an edge list from a file path.
    pub fn load_edge_list(path: &Path, directed: bool, n: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edge_list(std::io::BufReader::new(file), directed, n)
    }

    /// Write the edge list in the same "u v" format.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (u, v) in self.edge_list() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    }
}

/// Complete undirected graph on `n` nodes (test and oracle helper).
pub fn complete(n: usize) -> Network {
    let mut net = Network::new(n, false);
    for u in 0..n {
        for v in (u + 1)..n {
            net.add_edge(u, v).expect("valid dyad");
        }
    }
    net
}
