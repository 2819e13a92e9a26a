//! Medoid-lineage forest built while the engine agglomerates.
//!
//! Nodes `0..n` are the original samples (step 0). Every later step adds one
//! node per group, whose children are the step-before nodes it absorbed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Partition;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub step: usize,
    /// Original sample id of the group representative.
    pub medoid: usize,
    pub children: Vec<usize>,
    /// Number of original samples below this node.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyTree {
    nodes: Vec<HierarchyNode>,
    n_leaves: usize,
    roots: Vec<usize>,
}

impl HierarchyTree {
    /// A forest of `n` bare leaves, each its own root.
    pub fn with_leaves(n: usize) -> Self {
        let nodes = (0..n)
            .map(|i| HierarchyNode {
                step: 0,
                medoid: i,
                children: Vec::new(),
                size: 1,
            })
            .collect();
        Self {
            nodes,
            n_leaves: n,
            roots: (0..n).collect(),
        }
    }

    /// Assembles a tree from raw parts and checks it.
    pub fn from_parts(
        nodes: Vec<HierarchyNode>,
        n_leaves: usize,
        roots: Vec<usize>,
    ) -> Result<Self> {
        let tree = Self {
            nodes,
            n_leaves,
            roots,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub(crate) fn push(&mut self, step: usize, medoid: usize, children: Vec<usize>) -> usize {
        let size = children.iter().map(|&c| self.nodes[c].size).sum();
        self.nodes.push(HierarchyNode {
            step,
            medoid,
            children,
            size,
        });
        self.nodes.len() - 1
    }

    pub(crate) fn set_roots(&mut self, roots: Vec<usize>) {
        self.roots = roots;
    }

    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &HierarchyNode {
        &self.nodes[id]
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn n_edges(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).sum()
    }

    /// Checks the structural invariants: leaves come first and are bare,
    /// sizes add up, children sit exactly one step below their parent, and
    /// every node other than a root has exactly one parent.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Internal(msg));
        if self.nodes.len() < self.n_leaves {
            return bad(format!(
                "{} nodes cannot hold {} leaves",
                self.nodes.len(),
                self.n_leaves
            ));
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if id < self.n_leaves {
                if node.step != 0 || !node.children.is_empty() || node.size != 1 {
                    return bad(format!("leaf {id} is not a bare step-0 node"));
                }
                continue;
            }
            if node.children.is_empty() {
                return bad(format!("internal node {id} has no children"));
            }
            let mut size = 0;
            for &c in &node.children {
                let Some(child) = self.nodes.get(c) else {
                    return bad(format!("node {id} points at missing child {c}"));
                };
                if child.step + 1 != node.step {
                    return bad(format!(
                        "node {id} at step {} has child {c} at step {}",
                        node.step, child.step
                    ));
                }
                parents[c] += 1;
                size += child.size;
            }
            if size != node.size {
                return bad(format!(
                    "node {id} claims size {} but children hold {size}",
                    node.size
                ));
            }
        }
        let mut is_root = vec![false; self.nodes.len()];
        for &r in &self.roots {
            if r >= self.nodes.len() || is_root[r] {
                return bad(format!("bad or repeated root {r}"));
            }
            is_root[r] = true;
        }
        for (id, &count) in parents.iter().enumerate() {
            let expected = usize::from(!is_root[id]);
            if count != expected {
                return bad(format!("node {id} has {count} parents"));
            }
        }
        Ok(())
    }
}

/// Labels every original sample with the index of the root it descends from.
pub fn reconstruct_final_clusters(tree: &HierarchyTree) -> Result<Partition> {
    let n = tree.n_leaves();
    let mut labels = vec![usize::MAX; n];
    for (label, &root) in tree.roots().iter().enumerate() {
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let node = tree
                .nodes()
                .get(id)
                .ok_or_else(|| Error::Internal(format!("missing node {id}")))?;
            if id < n {
                if labels[id] != usize::MAX {
                    return Err(Error::Internal(format!("leaf {id} reached from two roots")));
                }
                labels[id] = label;
            } else {
                stack.extend(node.children.iter().copied());
            }
        }
    }
    if let Some(orphan) = labels.iter().position(|&l| l == usize::MAX) {
        return Err(Error::Internal(format!(
            "leaf {orphan} has no root ancestor"
        )));
    }
    Ok(labels)
}
