//! Interference graph: node set, undirected links, neighbourhood queries.
//!
//! Links are binary (in or out of range). Two nodes within one hop hear
//! each other; transmissions from anywhere in a receiver's one-hop set
//! overlap-destroy its receptions, which makes the two-hop set the
//! interference scope of every node.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub type NodeId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoop(NodeId),
    #[error("node {0} is not part of the topology")]
    UnknownNode(NodeId),
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("node {0} has no neighbors")]
    IsolatedNode(NodeId),
}

/// Undirected interference graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Topology {
    /// Build from an explicit node list and edge list. Edges are
    /// undirected; self-loops and edges naming unknown nodes are rejected.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, TopologyError> {
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for n in nodes {
            if adjacency.insert(n, BTreeSet::new()).is_some() {
                return Err(TopologyError::DuplicateNode(n));
            }
        }
        let mut topo = Topology { adjacency };
        for (a, b) in edges {
            topo.insert_edge(a, b)?;
        }
        Ok(topo)
    }

    /// Build from an edge list alone; the node set is the set of endpoints.
    pub fn from_edges(
        edges: impl IntoIterator<Item = (NodeId, NodeId)> + Clone,
    ) -> Result<Self, TopologyError> {
        let nodes: BTreeSet<NodeId> = edges
            .clone()
            .into_iter()
            .flat_map(|(a, b)| [a, b])
            .collect();
        Self::from_parts(nodes, edges)
    }

    /// Complete graph on `n` nodes with ids `1..=n`.
    pub fn fully_connected(n: u32) -> Self {
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for i in 1..=n {
            adjacency.insert(i, (1..=n).filter(|&j| j != i).collect());
        }
        Topology { adjacency }
    }

    /// The five-node graph used throughout the random-access experiments:
    /// nodes 1..4 form a square and node 5 hangs off node 4.
    pub fn paper_5node() -> Self {
        Self::from_parts(1..=5, [(1, 2), (2, 3), (3, 4), (4, 1), (4, 5)])
            .expect("preset is valid")
    }

    /// 12 nodes on a 4x3 grid, orthogonal adjacency. Stand-in for the
    /// 12-node partially-connected scenarios.
    pub fn paper_12node() -> Self {
        Self::grid(3, 4)
    }

    /// 20 nodes on a 4x5 grid, orthogonal adjacency.
    pub fn mesh_20node() -> Self {
        Self::grid(4, 5)
    }

    /// Grid graph with `rows * cols` nodes, ids row-major starting at 1,
    /// edges between orthogonal neighbours.
    pub fn grid(rows: u32, cols: u32) -> Self {
        let id = |r: u32, c: u32| r * cols + c + 1;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Self::from_parts((0..rows * cols).map(|k| k + 1), edges).expect("grid is valid")
    }

    fn insert_edge(&mut self, a: NodeId, b: NodeId) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLoop(a));
        }
        if !self.adjacency.contains_key(&a) {
            return Err(TopologyError::UnknownNode(a));
        }
        if !self.adjacency.contains_key(&b) {
            return Err(TopologyError::UnknownNode(b));
        }
        self.adjacency.get_mut(&a).unwrap().insert(b);
        self.adjacency.get_mut(&b).unwrap().insert(a);
        Ok(())
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.adjacency.contains_key(&node)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(|s| s.len()).sum::<usize>() / 2
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn is_fully_connected(&self) -> bool {
        let n = self.node_count();
        n > 0 && self.adjacency.values().all(|s| s.len() == n - 1)
    }

    /// All nodes one hop away from `node`, excluding `node` itself.
    pub fn one_hop(&self, node: NodeId) -> Result<&BTreeSet<NodeId>, TopologyError> {
        self.adjacency
            .get(&node)
            .ok_or(TopologyError::UnknownNode(node))
    }

    /// Union of `node`'s neighbours and their neighbours, excluding `node`.
    pub fn two_hop(&self, node: NodeId) -> Result<BTreeSet<NodeId>, TopologyError> {
        let first = self.one_hop(node)?;
        let mut out = first.clone();
        for &j in first {
            out.extend(self.adjacency[&j].iter().copied());
        }
        out.remove(&node);
        Ok(out)
    }

    /// Add a fresh node attached by `attach` edges.
    pub fn add_node(
        &mut self,
        node: NodeId,
        attach: &[NodeId],
    ) -> Result<(), TopologyError> {
        if self.contains(node) {
            return Err(TopologyError::DuplicateNode(node));
        }
        for &peer in attach {
            if !self.contains(peer) {
                return Err(TopologyError::UnknownNode(peer));
            }
            if peer == node {
                return Err(TopologyError::SelfLoop(node));
            }
        }
        self.adjacency.insert(node, BTreeSet::new());
        for &peer in attach {
            self.adjacency.get_mut(&node).unwrap().insert(peer);
            self.adjacency.get_mut(&peer).unwrap().insert(node);
        }
        Ok(())
    }

    /// Remove a node and all incident edges.
    pub fn remove_node(&mut self, node: NodeId) -> Result<(), TopologyError> {
        if self.adjacency.remove(&node).is_none() {
            return Err(TopologyError::UnknownNode(node));
        }
        for set in self.adjacency.values_mut() {
            set.remove(&node);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_connected_counts() {
        let t = Topology::fully_connected(3);
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.edge_count(), 3);
        assert!(t.is_fully_connected());
    }

    #[test]
    fn paper_5node_layout() {
        let t = Topology::paper_5node();
        assert_eq!(t.node_count(), 5);
        assert_eq!(t.edge_count(), 5);
        assert!(!t.is_fully_connected());
    }

    #[test]
    fn self_loop_rejected() {
        let err = Topology::from_parts([1, 2], [(1, 1)]).unwrap_err();
        assert_eq!(err, TopologyError::SelfLoop(1));
    }

    #[test]
    fn one_hop_examples() {
        let t = Topology::paper_5node();
        assert_eq!(t.one_hop(5).unwrap().iter().copied().collect::<Vec<_>>(), vec![4]);
        assert_eq!(
            t.one_hop(4).unwrap().iter().copied().collect::<Vec<_>>(),
            vec![1, 3, 5]
        );
        let fc = Topology::fully_connected(3);
        assert_eq!(
            fc.one_hop(1).unwrap().iter().copied().collect::<Vec<_>>(),
            vec![2, 3]
        );
        assert_eq!(t.one_hop(9).unwrap_err(), TopologyError::UnknownNode(9));
    }

    #[test]
    fn two_hop_examples() {
        let t = Topology::paper_5node();
        assert_eq!(
            t.two_hop(5).unwrap().into_iter().collect::<Vec<_>>(),
            vec![1, 3, 4]
        );
        let fc = Topology::fully_connected(4);
        assert_eq!(fc.two_hop(2).unwrap().len(), 3);
        let path = Topology::from_parts(1..=4, [(1, 2), (2, 3), (3, 4)]).unwrap();
        assert_eq!(
            path.two_hop(1).unwrap().into_iter().collect::<Vec<_>>(),
            vec![2, 3]
        );
    }

    #[test]
    fn add_and_remove_nodes() {
        let mut t = Topology::paper_5node();
        t.remove_node(5).unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.edge_count(), 4);
        t.add_node(6, &[4]).unwrap();
        assert_eq!(t.node_count(), 5);
        assert!(t.one_hop(4).unwrap().contains(&6));
        assert_eq!(t.remove_node(99).unwrap_err(), TopologyError::UnknownNode(99));
    }

    #[test]
    fn one_hop_symmetry() {
        let t = Topology::paper_12node();
        for i in t.node_ids() {
            for j in t.node_ids() {
                if i == j {
                    continue;
                }
                assert_eq!(
                    t.one_hop(i).unwrap().contains(&j),
                    t.one_hop(j).unwrap().contains(&i)
                );
            }
        }
    }

    #[test]
    fn two_hop_superset_and_irreflexive() {
        let t = Topology::mesh_20node();
        for i in t.node_ids() {
            let two = t.two_hop(i).unwrap();
            assert!(!two.contains(&i));
            for j in t.one_hop(i).unwrap() {
                assert!(two.contains(j));
            }
        }
    }

    #[test]
    fn fail_then_readd_restores_shape() {
        let orig = Topology::paper_5node();
        let mut t = orig.clone();
        t.remove_node(5).unwrap();
        t.add_node(5, &[4]).unwrap();
        assert_eq!(t, orig);
    }
}
