//! Undirected network graphs.
//!
//! Every node is a member of its own neighborhood: the diagonal of the
//! adjacency matrix is always set, and self-loops are never written to or
//! accepted from edge-list documents. Node indices are 0-based.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge-list document version understood by [`Topology::from_document`].
pub const DOCUMENT_VERSION: u32 = 1;

/// Erdős–Rényi redraws attempted before falling back to spanning-tree
/// augmentation.
pub const MAX_CONNECTIVITY_RETRIES: usize = 100;

/// A connected undirected graph with self-inclusive neighborhoods.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    // Row-major V×V.
    adjacency: Vec<bool>,
}

/// On-disk edge-list representation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    #[serde(default = "default_version")]
    pub version: u32,
    pub node_count: usize,
    pub edges: Vec<[usize; 2]>,
}

fn default_version() -> u32 {
    DOCUMENT_VERSION
}

impl Topology {
    fn empty(node_count: usize) -> Self {
        let mut adjacency = vec![false; node_count * node_count];
        for k in 0..node_count {
            adjacency[k * node_count + k] = true;
        }
        Topology {
            node_count,
            adjacency,
        }
    }

    fn connect(&mut self, i: usize, j: usize) {
        let v = self.node_count;
        self.adjacency[i * v + j] = true;
        self.adjacency[j * v + i] = true;
    }

    /// Builds a graph from undirected edges, rejecting self-loops, duplicates,
    /// out-of-range indices and disconnected results.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::format("node_count", "must be at least 1"));
        }
        let mut topo = Topology::empty(node_count);
        let mut seen = HashSet::new();
        for (idx, &(i, j)) in edges.iter().enumerate() {
            let item = format!("edges[{idx}] = [{i}, {j}]");
            if i >= node_count || j >= node_count {
                return Err(Error::format(
                    item,
                    format!("node index out of range 0..{node_count}"),
                ));
            }
            if i == j {
                return Err(Error::format(item, "self-loops are implicit and must not be listed"));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::format(item, "duplicate edge"));
            }
            topo.connect(i, j);
        }
        if !topo.is_connected() {
            return Err(Error::format("edges", "graph is disconnected"));
        }
        Ok(topo)
    }

    /// The complete graph `K_V`.
    pub fn complete_graph(node_count: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("complete graph needs at least one node"));
        }
        Ok(Topology {
            node_count,
            adjacency: vec![true; node_count * node_count],
        })
    }

    /// The path `0 – 1 – … – V-1`.
    pub fn path_graph(node_count: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("path graph needs at least one node"));
        }
        let edges: Vec<_> = (1..node_count).map(|k| (k - 1, k)).collect();
        Topology::from_edges(node_count, &edges)
    }

    /// Seeded random connected graph.
    ///
    /// Draws `G(V, edge_prob)` up to [`MAX_CONNECTIVITY_RETRIES`] times and
    /// returns the first connected draw. If none is connected, the last draw
    /// is united with a uniformly random spanning tree.
    pub fn random_connected(node_count: usize, edge_prob: f64, seed: u64) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("random graph needs at least one node"));
        }
        if !(edge_prob > 0.0 && edge_prob <= 1.0) {
            return Err(Error::invalid(format!(
                "edge probability {edge_prob} outside (0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut topo = Topology::empty(node_count);
        for _ in 0..MAX_CONNECTIVITY_RETRIES {
            topo = Topology::empty(node_count);
            for i in 0..node_count {
                for j in i + 1..node_count {
                    if rng.random_bool(edge_prob) {
                        topo.connect(i, j);
                    }
                }
            }
            if topo.is_connected() {
                return Ok(topo);
            }
        }
        let mut order: Vec<usize> = (0..node_count).collect();
        order.shuffle(&mut rng);
        for idx in 1..node_count {
            let parent = order[rng.random_range(0..idx)];
            topo.connect(order[idx], parent);
        }
        debug_assert!(topo.is_connected());
        Ok(topo)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.node_count + j]
    }

    /// Members of `N_k`, including `k`, in increasing order.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.adjacency[k * self.node_count..(k + 1) * self.node_count];
        row.iter()
            .enumerate()
            .filter_map(|(i, &adj)| adj.then_some(i))
    }

    /// `|N_k|` for every node, counting the node itself.
    pub fn neighborhood_sizes(&self) -> Vec<usize> {
        self.adjacency
            .chunks(self.node_count)
            .map(|row| row.iter().filter(|&&a| a).count())
            .collect()
    }

    /// Undirected edges `(i, j)` with `i < j`, lexicographically ordered.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let v = self.node_count;
        (0..v)
            .flat_map(|i| (i + 1..v).map(move |j| (i, j)))
            .filter(|&(i, j)| self.is_adjacent(i, j))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn is_connected(&self) -> bool {
        let v = self.node_count;
        let mut visited = vec![false; v];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut reached = 1;
        while let Some(k) = queue.pop_front() {
            for i in self.neighbors(k) {
                if !visited[i] {
                    visited[i] = true;
                    reached += 1;
                    queue.push_back(i);
                }
            }
        }
        reached == v
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            version: DOCUMENT_VERSION,
            node_count: self.node_count,
            edges: self.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }

    pub fn from_document(doc: &TopologyDocument) -> Result<Self> {
        if doc.version != DOCUMENT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {} (expected {DOCUMENT_VERSION})", doc.version),
            ));
        }
        let edges: Vec<_> = doc.edges.iter().map(|&[i, j]| (i, j)).collect();
        Topology::from_edges(doc.node_count, &edges)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_document()).expect("edge list serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: TopologyDocument =
            toml::from_str(text).map_err(|e| Error::format("document", e.to_string()))?;
        Topology::from_document(&doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Topology::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent reachability check by repeated relaxation.
    fn connected_by_closure(t: &Topology) -> bool {
        let v = t.node_count();
        let mut reach = vec![false; v];
        reach[0] = true;
        loop {
            let mut changed = false;
            for i in 0..v {
                for j in 0..v {
                    if reach[i] && t.is_adjacent(i, j) && !reach[j] {
                        reach[j] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        reach.into_iter().all(|r| r)
    }

    fn assert_well_formed(t: &Topology) {
        let v = t.node_count();
        for i in 0..v {
            assert!(t.is_adjacent(i, i));
            for j in 0..v {
                assert_eq!(t.is_adjacent(i, j), t.is_adjacent(j, i));
            }
        }
        assert!(connected_by_closure(t));
    }

    #[test]
    fn complete_graph_neighborhoods() {
        let k8 = Topology::complete_graph(8).unwrap();
        assert_eq!(k8.neighborhood_sizes(), vec![8; 8]);
        assert_eq!(Topology::complete_graph(1).unwrap().neighborhood_sizes(), vec![1]);
        let k2 = Topology::complete_graph(2).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| k2.is_adjacent(i, j))));
        assert!(matches!(
            Topology::complete_graph(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn path_neighborhoods() {
        let p = Topology::path_graph(3).unwrap();
        assert_eq!(p.neighborhood_sizes(), vec![2, 3, 2]);
        assert_eq!(p.neighbors(1).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn random_connected_is_deterministic_and_valid() {
        let a = Topology::random_connected(20, 0.2, 7).unwrap();
        let b = Topology::random_connected(20, 0.2, 7).unwrap();
        assert_eq!(a, b);
        assert_well_formed(&a);
        let single = Topology::random_connected(1, 0.5, 0).unwrap();
        assert_eq!(single.neighborhood_sizes(), vec![1]);
    }

    #[test]
    fn sparse_draws_fall_back_to_spanning_tree() {
        // p this small essentially never yields a connected 30-node graph.
        let t = Topology::random_connected(30, 1e-4, 3).unwrap();
        assert_well_formed(&t);
        assert!(t.edge_count() >= 29);
    }

    #[test]
    fn rejects_bad_edge_probability() {
        assert!(Topology::random_connected(5, 0.0, 1).is_err());
        assert!(Topology::random_connected(5, 1.5, 1).is_err());
        assert!(Topology::random_connected(0, 0.5, 1).is_err());
    }

    #[test]
    fn document_errors_name_offending_item() {
        let self_loop = "version = 1\nnode_count = 2\nedges = [[0, 0], [0, 1]]\n";
        match Topology::from_toml_str(self_loop) {
            Err(Error::Format { item, .. }) => assert!(item.contains("edges[0]")),
            other => panic!("expected format error, got {other:?}"),
        }
        let dup = "version = 1\nnode_count = 2\nedges = [[0, 1], [1, 0]]\n";
        assert!(matches!(
            Topology::from_toml_str(dup),
            Err(Error::Format { reason, .. }) if reason.contains("duplicate")
        ));
        let range = "version = 1\nnode_count = 2\nedges = [[0, 2]]\n";
        assert!(matches!(
            Topology::from_toml_str(range),
            Err(Error::Format { reason, .. }) if reason.contains("range")
        ));
        let disconnected = "version = 1\nnode_count = 3\nedges = [[0, 1]]\n";
        assert!(matches!(
            Topology::from_toml_str(disconnected),
            Err(Error::Format { reason, .. }) if reason.contains("disconnected")
        ));
        let version = "version = 9\nnode_count = 1\nedges = []\n";
        assert!(Topology::from_toml_str(version).is_err());
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.toml");
        let t = Topology::random_connected(12, 0.3, 99).unwrap();
        t.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("version") && text.contains("node_count") && text.contains("edges"));
        assert_eq!(Topology::load(&path).unwrap(), t);
    }

    proptest! {
        #[test]
        fn generated_graphs_are_well_formed(v in 1usize..25, p in 0.01f64..=1.0, seed: u64) {
            let t = Topology::random_connected(v, p, seed).unwrap();
            assert_well_formed(&t);
            prop_assert_eq!(Topology::random_connected(v, p, seed).unwrap(), t.clone());
            // Σ|N_k| = V + 2·edges
            let total: usize = t.neighborhood_sizes().iter().sum();
            prop_assert_eq!(total, v + 2 * t.edge_count());
            prop_assert_eq!(Topology::from_toml_str(&t.to_toml_string()).unwrap(), t);
        }
    }
}
