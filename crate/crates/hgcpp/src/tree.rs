//! The lifetime plan-tree.
//!
//! Nodes are states; every edge is a learned goal-conditioned policy. Each
//! node carries an ordered set of high-level actions starting there: at level
//! 0 these wrap single policies, and a run of `n_compose` consecutively
//! linked level-`l` actions along a path composes into one action at level
//! `l + 1`. Per desired goal, every action keeps a q-value; level-0 q-values
//! are maintained by backpropagation, higher levels by recomputation from
//! their constituents.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcp::{link_check, Cgcp, LearnOutcome, TrajectoryArchive};
use crate::maze::Cell;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HlaId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GcpId(pub u32);

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("unknown node id {0:?}")]
    UnknownNode(NodeId),
    #[error("unknown HLA id {0:?}")]
    UnknownHla(HlaId),
    #[error("unknown GCP id {0:?} (dangling constituent)")]
    UnknownGcp(GcpId),
    #[error("node {node:?} already has a child at state {state}")]
    DuplicateEdge { node: NodeId, state: Cell },
    #[error("policy context {policy} does not match node state {node}")]
    ContextMismatch { policy: Cell, node: Cell },
    #[error("path is not a root-to-node chain (broken at position {0})")]
    BrokenPath(usize),
    #[error("expected {expected} per-goal values, got {got}")]
    GoalArity { expected: usize, got: usize },
    #[error("schema version {found} unsupported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("serialization failed: {0}")]
    Serde(String),
}

/// A plan-tree node: one state reached by a chain of linked policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: NodeId,
    pub state: Cell,
    pub parent: Option<NodeId>,
    pub incoming_gcp: Option<GcpId>,
    pub children: Vec<NodeId>,
    pub visit_count: u64,
}

/// A high-level action. Level 0 wraps a single policy; level `l + 1` is an
/// ordered run of consecutively linked level-`l` actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hla {
    pub id: HlaId,
    pub level: u32,
    pub start_node: NodeId,
    pub end_node: NodeId,
    pub constituents: Vec<HlaId>,
    pub gcp: Option<GcpId>,
    pub q_values: Vec<f64>,
    pub visit_count: u64,
}

impl Hla {
    pub fn is_gcp(&self) -> bool {
        self.level == 0
    }
}

/// A stored policy edge: the policy itself plus its per-goal values, frozen
/// from the trajectory archive when the edge was added.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcpEntry {
    pub id: GcpId,
    pub policy: Cgcp,
    pub r_values: Vec<f64>,
}

/// The plan-tree itself. Stores are id-indexed vectors, so serialization is
/// canonical (ascending ids) by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanTree {
    nodes: Vec<PlanNode>,
    hlas: Vec<Hla>,
    gcps: Vec<GcpEntry>,
    hlas_by_node: Vec<Vec<HlaId>>,
    root: NodeId,
    num_goals: usize,
    config_digest: String,
}

impl PlanTree {
    pub fn new(root_state: Cell, num_goals: usize, config_digest: String) -> Self {
        let root = PlanNode {
            id: NodeId(0),
            state: root_state,
            parent: None,
            incoming_gcp: None,
            children: Vec::new(),
            visit_count: 0,
        };
        PlanTree {
            nodes: vec![root],
            hlas: Vec::new(),
            gcps: Vec::new(),
            hlas_by_node: vec![Vec::new()],
            root: NodeId(0),
            num_goals,
            config_digest,
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_goals(&self) -> usize {
        self.num_goals
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn hla_count(&self) -> usize {
        self.hlas.len()
    }

    pub fn gcp_count(&self) -> usize {
        self.gcps.len()
    }

    pub fn node(&self, id: NodeId) -> Result<&PlanNode, TreeError> {
        self.nodes.get(id.0 as usize).ok_or(TreeError::UnknownNode(id))
    }

    pub fn hla(&self, id: HlaId) -> Result<&Hla, TreeError> {
        self.hlas.get(id.0 as usize).ok_or(TreeError::UnknownHla(id))
    }

    pub fn gcp(&self, id: GcpId) -> Result<&GcpEntry, TreeError> {
        self.gcps.get(id.0 as usize).ok_or(TreeError::UnknownGcp(id))
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Result<&mut PlanNode, TreeError> {
        self.nodes.get_mut(id.0 as usize).ok_or(TreeError::UnknownNode(id))
    }

    pub(crate) fn hla_mut(&mut self, id: HlaId) -> Result<&mut Hla, TreeError> {
        self.hlas.get_mut(id.0 as usize).ok_or(TreeError::UnknownHla(id))
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn hlas(&self) -> &[Hla] {
        &self.hlas
    }

    pub fn gcps(&self) -> &[GcpEntry] {
        &self.gcps
    }

    /// HLAs starting at the node, in registration order.
    pub fn hlas_at(&self, node: NodeId) -> &[HlaId] {
        &self.hlas_by_node[node.0 as usize]
    }

    /// The node a GCP edge points to.
    pub fn gcp_child(&self, gcp: GcpId) -> Result<NodeId, TreeError> {
        self.nodes
            .iter()
            .find(|n| n.incoming_gcp == Some(gcp))
            .map(|n| n.id)
            .ok_or(TreeError::UnknownGcp(gcp))
    }

    /// The level-0 HLA wrapping a GCP edge.
    pub fn gcp_hla(&self, gcp: GcpId) -> Result<HlaId, TreeError> {
        self.hlas
            .iter()
            .find(|h| h.gcp == Some(gcp))
            .map(|h| h.id)
            .ok_or(TreeError::UnknownGcp(gcp))
    }

    /// Root-to-node path, inclusive on both ends.
    pub fn path_to(&self, node: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(parent) = self.node(cur)?.parent {
            path.push(parent);
            cur = parent;
        }
        path.reverse();
        Ok(path)
    }

    /// Adds a learned policy as a new edge and child node, wrapping it in a
    /// level-0 HLA with the given per-goal values.
    pub fn add_gcp_edge(
        &mut self,
        node: NodeId,
        outcome: LearnOutcome,
        r_values: Vec<f64>,
        initial_q: Vec<f64>,
    ) -> Result<NodeId, TreeError> {
        let parent_state = self.node(node)?.state;
        if outcome.policy.context != parent_state {
            return Err(TreeError::ContextMismatch {
                policy: outcome.policy.context,
                node: parent_state,
            });
        }
        if r_values.len() != self.num_goals {
            return Err(TreeError::GoalArity { expected: self.num_goals, got: r_values.len() });
        }
        if initial_q.len() != self.num_goals {
            return Err(TreeError::GoalArity { expected: self.num_goals, got: initial_q.len() });
        }
        let child_state = outcome.achieved_goal;
        for &c in &self.node(node)?.children {
            if self.node(c)?.state == child_state {
                return Err(TreeError::DuplicateEdge { node, state: child_state });
            }
        }

        let gcp_id = GcpId(self.gcps.len() as u32);
        self.gcps.push(GcpEntry { id: gcp_id, policy: outcome.policy, r_values });

        let child_id = NodeId(self.nodes.len() as u32);
        self.nodes.push(PlanNode {
            id: child_id,
            state: child_state,
            parent: Some(node),
            incoming_gcp: Some(gcp_id),
            children: Vec::new(),
            visit_count: 0,
        });
        self.hlas_by_node.push(Vec::new());
        self.node_mut(node)?.children.push(child_id);

        let hla_id = HlaId(self.hlas.len() as u32);
        self.hlas.push(Hla {
            id: hla_id,
            level: 0,
            start_node: node,
            end_node: child_id,
            constituents: Vec::new(),
            gcp: Some(gcp_id),
            q_values: initial_q,
            visit_count: 0,
        });
        self.hlas_by_node[node.0 as usize].push(hla_id);
        Ok(child_id)
    }

    fn check_path(&self, path: &[NodeId]) -> Result<(), TreeError> {
        if path.is_empty() || path[0] != self.root {
            return Err(TreeError::BrokenPath(0));
        }
        for i in 1..path.len() {
            if self.node(path[i])?.parent != Some(path[i - 1]) {
                return Err(TreeError::BrokenPath(i));
            }
        }
        Ok(())
    }

    /// Whether an HLA is already a constituent of some higher-level HLA.
    fn is_constituent(&self, id: HlaId) -> bool {
        self.hlas.iter().any(|h| h.constituents.contains(&id))
    }

    /// The maximal chain of level-`level` HLAs lying on `path` and ending at
    /// its last node, in path order.
    fn trailing_chain(&self, path: &[NodeId], level: u32) -> Vec<HlaId> {
        let on_path: BTreeSet<NodeId> = path.iter().copied().collect();
        let mut chain = Vec::new();
        let mut cur = *path.last().unwrap();
        'walk: while cur != self.root {
            for h in &self.hlas {
                if h.level == level && h.end_node == cur && on_path.contains(&h.start_node) {
                    chain.push(h.id);
                    cur = h.start_node;
                    continue 'walk;
                }
            }
            break;
        }
        chain.reverse();
        chain
    }

    /// After a path has been extended, composes every new higher-level HLA it
    /// enables: whenever the trailing `n_compose` consecutive HLAs of one
    /// level exist along the path and none of them already belongs to a
    /// higher-level HLA, they compose into one, recursing upward. Returns the
    /// created HLAs, lowest level first.
    pub fn compose_hlas(
        &mut self,
        leaf_path: &[NodeId],
        n_compose: usize,
    ) -> Result<Vec<HlaId>, TreeError> {
        self.check_path(leaf_path)?;
        let mut created = Vec::new();
        let mut level = 0u32;
        loop {
            let chain = self.trailing_chain(leaf_path, level);
            if chain.len() < n_compose {
                break;
            }
            let window = &chain[chain.len() - n_compose..];
            if window.iter().any(|&h| self.is_constituent(h)) {
                break;
            }
            let start_node = self.hla(window[0])?.start_node;
            let end_node = self.hla(*window.last().unwrap())?.end_node;
            let id = HlaId(self.hlas.len() as u32);
            self.hlas.push(Hla {
                id,
                level: level + 1,
                start_node,
                end_node,
                constituents: window.to_vec(),
                gcp: None,
                q_values: vec![0.0; self.num_goals],
                visit_count: 0,
            });
            self.hlas_by_node[start_node.0 as usize].push(id);
            created.push(id);
            level += 1;
        }
        Ok(created)
    }

    /// The ordered GCP chain an HLA decomposes into.
    pub fn flatten(&self, id: HlaId) -> Result<Vec<GcpId>, TreeError> {
        let hla = self.hla(id)?;
        if let Some(gcp) = hla.gcp {
            self.gcp(gcp)?;
            return Ok(vec![gcp]);
        }
        let mut out = Vec::new();
        for &part in &hla.constituents {
            out.extend(self.flatten(part)?);
        }
        Ok(out)
    }

    /// The q-value of an HLA for one desired goal: the discounted sum of its
    /// constituent GCP values, closed off by either a rollout estimate (when
    /// the HLA ends at a leaf) or the discounted best q-value among the HLAs
    /// available at its end node.
    ///
    /// `rollout(state, depth, goal)` must return the already-discounted
    /// rollout term for a leaf `depth` GCP-steps below the HLA's start.
    pub fn hla_value(
        &self,
        id: HlaId,
        goal: usize,
        gamma: f64,
        rollout: &mut dyn FnMut(Cell, usize, usize) -> f64,
    ) -> Result<f64, TreeError> {
        let hla = self.hla(id)?;
        let flat = self.flatten(id)?;
        let m = flat.len();
        let mut value = 0.0;
        for (t, &gcp) in flat.iter().enumerate() {
            value += gamma.powi(t as i32) * self.gcp(gcp)?.r_values[goal];
        }
        let end = hla.end_node;
        let outgoing = self.hlas_at(end);
        if outgoing.is_empty() {
            value += rollout(self.node(end)?.state, m, goal);
        } else {
            let best = outgoing
                .iter()
                .map(|&h| self.hla(h).map(|hla| hla.q_values[goal]))
                .collect::<Result<Vec<f64>, _>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            value += gamma.powi(m as i32) * best;
        }
        Ok(value)
    }

    fn node_depth(&self, id: NodeId) -> Result<usize, TreeError> {
        let mut depth = 0;
        let mut cur = id;
        while let Some(parent) = self.node(cur)?.parent {
            depth += 1;
            cur = parent;
        }
        Ok(depth)
    }

    /// Recomputes the q-values of exactly those non-GCP HLAs whose flattened
    /// GCP sequence intersects the path's GCP sequence; everything else is
    /// untouched. An HLA's value reads the values of HLAs starting at its end
    /// node, so recomputation runs deepest end node first: every dependency
    /// is final before it is read and one pass reaches the fixed point.
    /// Returns how many were recomputed.
    pub fn update_affected_hlas(
        &mut self,
        leaf_path: &[NodeId],
        gamma: f64,
        rollout: &mut dyn FnMut(Cell, usize, usize) -> f64,
    ) -> Result<usize, TreeError> {
        self.check_path(leaf_path)?;
        let path_gcps: BTreeSet<GcpId> = leaf_path
            .iter()
            .filter_map(|&n| self.node(n).ok().and_then(|node| node.incoming_gcp))
            .collect();

        let mut affected: Vec<(std::cmp::Reverse<usize>, u32, HlaId)> = Vec::new();
        for h in &self.hlas {
            if h.is_gcp() {
                continue;
            }
            let flat = self.flatten(h.id)?;
            if flat.iter().any(|g| path_gcps.contains(g)) {
                let depth = self.node_depth(h.end_node)?;
                affected.push((std::cmp::Reverse(depth), h.level, h.id));
            }
        }
        affected.sort();

        for &(_, _, id) in &affected {
            for goal in 0..self.num_goals {
                let value = self.hla_value(id, goal, gamma, rollout)?;
                self.hla_mut(id)?.q_values[goal] = value;
            }
        }
        Ok(affected.len())
    }

    /// Structural validation of every tree invariant that does not depend on
    /// configuration. Used on every deserialized tree and by tests.
    pub fn validate(&self) -> Result<(), TreeError> {
        let fail = |msg: String| Err(TreeError::Invariant(msg));

        if self.nodes.len() != self.hlas_by_node.len() {
            return fail("hlas_by_node length differs from node count".into());
        }
        let roots = self.nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 || self.node(self.root)?.parent.is_some() {
            return fail(format!("expected exactly one root, found {roots}"));
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.id.0 as usize != i {
                return fail(format!("node id {:?} out of place", node.id));
            }
            match (node.parent, node.incoming_gcp) {
                (None, None) => {}
                (Some(parent), Some(gcp)) => {
                    let parent_state = self.node(parent)?.state;
                    let policy = &self.gcp(gcp)?.policy;
                    if policy.context != parent_state {
                        return fail(format!(
                            "edge into {:?}: context {} != parent state {}",
                            node.id, policy.context, parent_state
                        ));
                    }
                    if policy.behavioral_goal != node.state {
                        return fail(format!(
                            "edge into {:?}: behavioral goal {} != node state {}",
                            node.id, policy.behavioral_goal, node.state
                        ));
                    }
                    if !self.node(parent)?.children.contains(&node.id) {
                        return fail(format!("{:?} missing from its parent's children", node.id));
                    }
                }
                _ => return fail(format!("{:?} has parent xor incoming edge", node.id)),
            }
            let mut child_states = BTreeSet::new();
            for &c in &node.children {
                let state = self.node(c)?.state;
                if !child_states.insert(state) {
                    return fail(format!("{:?} has two children at {}", node.id, state));
                }
            }
        }

        let level0 = self.hlas.iter().filter(|h| h.is_gcp()).count();
        if self.nodes.len() != level0 + 1 {
            return fail(format!("{} nodes but {} level-0 HLAs", self.nodes.len(), level0));
        }

        for (i, h) in self.hlas.iter().enumerate() {
            if h.id.0 as usize != i {
                return fail(format!("HLA id {:?} out of place", h.id));
            }
            if h.q_values.len() != self.num_goals {
                return fail(format!("{:?} has wrong q-value arity", h.id));
            }
            if (h.level == 0) != h.constituents.is_empty() || (h.level == 0) != h.gcp.is_some() {
                return fail(format!("{:?} violates the level-0 shape", h.id));
            }
            if h.level > 0 {
                for pair in h.constituents.windows(2) {
                    let a = self.hla(pair[0])?;
                    let b = self.hla(pair[1])?;
                    if a.level != h.level - 1 || b.level != h.level - 1 {
                        return fail(format!("{:?} constituent level mismatch", h.id));
                    }
                    if a.end_node != b.start_node {
                        return fail(format!("{:?} constituents not consecutive", h.id));
                    }
                }
                let first = self.hla(h.constituents[0])?;
                let last = self.hla(*h.constituents.last().unwrap())?;
                if first.start_node != h.start_node || last.end_node != h.end_node {
                    return fail(format!("{:?} span mismatch", h.id));
                }
            }
            let flat = self.flatten(h.id)?;
            for pair in flat.windows(2) {
                if !link_check(&self.gcp(pair[0])?.policy, &self.gcp(pair[1])?.policy) {
                    return fail(format!("{:?} flattens to an unlinked chain", h.id));
                }
            }
        }

        let mut seen = BTreeSet::new();
        for (node_idx, bucket) in self.hlas_by_node.iter().enumerate() {
            for &h in bucket {
                if self.hla(h)?.start_node.0 as usize != node_idx {
                    return fail(format!("{h:?} bucketed under the wrong node"));
                }
                if !seen.insert(h) {
                    return fail(format!("{h:?} appears in two buckets"));
                }
            }
        }
        if seen.len() != self.hlas.len() {
            return fail("some HLA is missing from hlas_by_node".into());
        }

        for g in &self.gcps {
            if g.r_values.len() != self.num_goals {
                return fail(format!("{:?} has wrong r-value arity", g.id));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    version: u32,
    config_digest: String,
    num_goals: usize,
    root: NodeId,
    nodes: Vec<PlanNode>,
    hlas: Vec<Hla>,
    gcps: Vec<GcpEntry>,
    archive: TrajectoryArchive,
}

/// Serializes a tree (with the trajectory archive that produced it) to
/// canonical JSON: ids ascend, map-like data is sorted, and equal trees
/// serialize byte-identically.
pub fn serialize(tree: &PlanTree, archive: &TrajectoryArchive) -> String {
    let doc = TreeDocument {
        version: SCHEMA_VERSION,
        config_digest: tree.config_digest.clone(),
        num_goals: tree.num_goals,
        root: tree.root,
        nodes: tree.nodes.clone(),
        hlas: tree.hlas.clone(),
        gcps: tree.gcps.clone(),
        archive: archive.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("plan-tree serialization");
    out.push('\n');
    out
}

/// Parses and validates a serialized tree, rebuilding derived state.
pub fn deserialize(json: &str) -> Result<(PlanTree, TrajectoryArchive), TreeError> {
    let doc: TreeDocument =
        serde_json::from_str(json).map_err(|e| TreeError::Serde(e.to_string()))?;
    if doc.version != SCHEMA_VERSION {
        return Err(TreeError::SchemaVersion { found: doc.version, expected: SCHEMA_VERSION });
    }
    let mut hlas_by_node = vec![Vec::new(); doc.nodes.len()];
    for h in &doc.hlas {
        let idx = h.start_node.0 as usize;
        if idx >= hlas_by_node.len() {
            return Err(TreeError::UnknownNode(h.start_node));
        }
        hlas_by_node[idx].push(h.id);
    }
    let tree = PlanTree {
        nodes: doc.nodes,
        hlas: doc.hlas,
        gcps: doc.gcps,
        hlas_by_node,
        root: doc.root,
        num_goals: doc.num_goals,
        config_digest: doc.config_digest,
    };
    tree.validate()?;
    Ok((tree, doc.archive))
}

/// Renders the tree as DOT: one node statement per plan node, one edge
/// statement per GCP edge, and one subgraph annotation per non-GCP HLA
/// listing the nodes it spans.
pub fn to_dot(tree: &PlanTree) -> String {
    let mut out = String::from("digraph plan_tree {\n  rankdir=TB;\n");
    for node in tree.nodes() {
        let _ = writeln!(out, "  n{} [label=\"{} {}\"];", node.id.0, node.id.0, node.state);
    }
    for hla in tree.hlas() {
        if let Some(gcp) = hla.gcp {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"gcp{}\"];",
                hla.start_node.0, hla.end_node.0, gcp.0
            );
        }
    }
    for hla in tree.hlas() {
        if hla.is_gcp() {
            continue;
        }
        let mut span = vec![hla.start_node];
        if let Ok(flat) = tree.flatten(hla.id) {
            for gcp in flat {
                if let Ok(child) = tree.gcp_child(gcp) {
                    span.push(child);
                }
            }
        }
        let members: Vec<String> = span.iter().map(|n| format!("n{}", n.0)).collect();
        let _ = writeln!(
            out,
            "  subgraph hla{} {{ label=\"hla{} level {}\"; {}; }}",
            hla.id.0,
            hla.id.0,
            hla.level,
            members.join("; ")
        );
    }
    out.push_str("}\n");
    out
}
