//! DOT dumps and portable snapshots of BDDs.

use std::fmt::Write;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::{BddError, Manager, NodeRef, Result};

/// A self-contained, manager-independent encoding of a set of BDDs.
///
/// `nodes[k]` is `(var, low, high)` where `low`/`high` index either a
/// terminal (`0` = false, `1` = true) or `nodes[i - 2]` for some earlier
/// entry `i - 2 < k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub nodes: Vec<(u32, u32, u32)>,
    pub roots: Vec<u32>,
}

impl Manager {
    pub fn export(&self, roots: &[NodeRef]) -> Snapshot {
        let mut index: FxHashMap<NodeRef, u32> = FxHashMap::default();
        index.insert(NodeRef::FALSE, 0);
        index.insert(NodeRef::TRUE, 1);
        let mut nodes = Vec::new();
        for &r in roots {
            let mut stack = vec![(r, false)];
            while let Some((g, expanded)) = stack.pop() {
                if index.contains_key(&g) {
                    continue;
                }
                let (lo, hi) = self.children(g);
                if expanded {
                    let var = self.top_var(g).expect("non-terminal");
                    nodes.push((var, index[&lo], index[&hi]));
                    index.insert(g, nodes.len() as u32 + 1);
                } else {
                    stack.push((g, true));
                    stack.push((hi, false));
                    stack.push((lo, false));
                }
            }
        }
        Snapshot {
            nodes,
            roots: roots.iter().map(|r| index[r]).collect(),
        }
    }

    pub fn import(&mut self, snap: &Snapshot) -> Result<Vec<NodeRef>> {
        let mut refs = vec![NodeRef::FALSE, NodeRef::TRUE];
        for (k, &(var, lo, hi)) in snap.nodes.iter().enumerate() {
            let limit = k as u32 + 2;
            if lo >= limit || hi >= limit {
                return Err(BddError::Snapshot(format!("node {k} refers forward")));
            }
            let v = self.var(var)?;
            let r = self.ite(v, refs[hi as usize], refs[lo as usize])?;
            refs.push(r);
        }
        snap.roots
            .iter()
            .map(|&r| {
                refs.get(r as usize)
                    .copied()
                    .ok_or_else(|| BddError::Snapshot(format!("root {r} out of range")))
            })
            .collect()
    }

    /// Graphviz rendering of `f`. `name` labels variables.
    pub fn to_dot(&self, f: NodeRef, name: impl Fn(u32) -> String) -> String {
        let mut out = String::from("digraph bdd {\n  node [shape=circle];\n");
        out.push_str("  n0 [label=\"0\", shape=box];\n  n1 [label=\"1\", shape=box];\n");
        let mut seen = rustc_hash::FxHashSet::default();
        let mut stack = vec![f];
        while let Some(g) = stack.pop() {
            if g.is_const() || !seen.insert(g) {
                continue;
            }
            let (lo, hi) = self.children(g);
            let var = self.top_var(g).expect("non-terminal");
            let _ = writeln!(out, "  n{} [label=\"{}\"];", g.index(), name(var));
            let _ = writeln!(out, "  n{} -> n{} [style=dashed];", g.index(), lo.index());
            let _ = writeln!(out, "  n{} -> n{};", g.index(), hi.index());
            stack.push(lo);
            stack.push(hi);
        }
        out.push_str("}\n");
        out
    }
}
