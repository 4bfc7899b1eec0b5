//! A reduced, ordered binary decision diagram engine.
//!
//! Variables are identified by their level: variable `i` sits at position `i`
//! in the (static) order. Nodes live in a single arena owned by a [`Manager`]
//! and are hash-consed, so two [`NodeRef`]s from the same manager are equal
//! iff they denote the same Boolean function.

mod cover;
mod io;

pub use cover::Cube;
pub use io::Snapshot;

use rustc_hash::FxHashMap;
use thiserror::Error;

/// Handle to a node in a [`Manager`]. Only meaningful for the manager that
/// produced it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct NodeRef(u32);

impl NodeRef {
    pub const FALSE: NodeRef = NodeRef(0);
    pub const TRUE: NodeRef = NodeRef(1);

    pub fn is_const(self) -> bool {
        self.0 < 2
    }

    pub fn is_true(self) -> bool {
        self == NodeRef::TRUE
    }

    pub fn is_false(self) -> bool {
        self == NodeRef::FALSE
    }

    pub fn index(self) -> u32 {
        self.0
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum BddError {
    #[error("BDD node store exceeded its limit of {limit} nodes")]
    Capacity { limit: usize },
    #[error("variable {var} is out of range (manager has {num_vars} variables)")]
    UnknownVar { var: u32, num_vars: u32 },
    #[error("no prime pairing registered")]
    NoPrimePairs,
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, BddError>;

const TERMINAL_VAR: u32 = u32::MAX;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
struct Node {
    var: u32,
    lo: NodeRef,
    hi: NodeRef,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Op {
    And,
    Or,
    Xor,
    Not,
    Ite,
    Exists,
    Forall,
    AndExists,
    Rename(u32),
    Restrict,
}

/// Which branch [`Manager::pick_cube`] prefers when both are satisfiable, and
/// the value given to care variables the path does not constrain.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, serde::Serialize, serde::Deserialize)]
pub enum CubePolicy {
    #[default]
    PreferLow,
    PreferHigh,
}

/// Identifier of a variable substitution registered with
/// [`Manager::register_map`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct MapId(u32);

#[derive(Clone)]
pub struct Manager {
    nodes: Vec<Node>,
    unique: FxHashMap<Node, NodeRef>,
    cache: FxHashMap<(Op, NodeRef, NodeRef, NodeRef), NodeRef>,
    num_vars: u32,
    node_limit: usize,
    maps: Vec<Vec<u32>>,
    prime_map: Option<MapId>,
    free: Vec<u32>,
    gc_threshold: usize,
}

/// Live-node count below which [`Manager::should_collect`] never fires.
const GC_BASE: usize = 1 << 20;
const FREE_VAR: u32 = u32::MAX - 1;

pub const DEFAULT_NODE_LIMIT: usize = 40_000_000;

impl Manager {
    pub fn new(num_vars: u32) -> Manager {
        Manager::with_node_limit(num_vars, DEFAULT_NODE_LIMIT)
    }

    pub fn with_node_limit(num_vars: u32, node_limit: usize) -> Manager {
        let terminal = |v| Node {
            var: TERMINAL_VAR,
            lo: NodeRef(v),
            hi: NodeRef(v),
        };
        Manager {
            nodes: vec![terminal(0), terminal(1)],
            unique: FxHashMap::default(),
            cache: FxHashMap::default(),
            num_vars,
            node_limit,
            maps: Vec::new(),
            prime_map: None,
            free: Vec::new(),
            gc_threshold: GC_BASE,
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    /// Number of live nodes, terminals included.
    pub fn allocated(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    /// Whether enough nodes accumulated since the last collection to make
    /// [`Manager::collect_garbage`] worthwhile.
    pub fn should_collect(&self) -> bool {
        self.allocated() >= self.gc_threshold
    }

    /// Frees every node not reachable from `roots` and clears the operation
    /// cache. Node references not reachable from `roots` become invalid.
    /// Returns the number of nodes freed.
    pub fn collect_garbage(&mut self, roots: &[NodeRef]) -> usize {
        let mut marked = vec![false; self.nodes.len()];
        marked[0] = true;
        marked[1] = true;
        let mut stack: Vec<NodeRef> = roots.to_vec();
        while let Some(f) = stack.pop() {
            let i = f.0 as usize;
            if marked[i] {
                continue;
            }
            marked[i] = true;
            let n = self.nodes[i];
            stack.push(n.lo);
            stack.push(n.hi);
        }
        let mut freed = 0;
        for (i, &live) in marked.iter().enumerate().skip(2) {
            let n = self.nodes[i];
            if live || n.var == FREE_VAR {
                continue;
            }
            self.unique.remove(&n);
            self.nodes[i] = Node {
                var: FREE_VAR,
                lo: NodeRef::FALSE,
                hi: NodeRef::FALSE,
            };
            self.free.push(i as u32);
            freed += 1;
        }
        self.cache.clear();
        self.gc_threshold = GC_BASE.max(2 * self.allocated());
        freed
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }

    pub fn constant(&self, value: bool) -> NodeRef {
        if value {
            NodeRef::TRUE
        } else {
            NodeRef::FALSE
        }
    }

    fn node(&self, f: NodeRef) -> Node {
        self.nodes[f.0 as usize]
    }

    /// Top variable of `f`, or `None` for terminals.
    pub fn top_var(&self, f: NodeRef) -> Option<u32> {
        let v = self.node(f).var;
        (v != TERMINAL_VAR).then_some(v)
    }

    /// Low (`var = 0`) and high (`var = 1`) children of a non-terminal node.
    pub fn children(&self, f: NodeRef) -> (NodeRef, NodeRef) {
        let n = self.node(f);
        (n.lo, n.hi)
    }

    fn level(&self, f: NodeRef) -> u32 {
        self.node(f).var
    }

    fn mk(&mut self, var: u32, lo: NodeRef, hi: NodeRef) -> Result<NodeRef> {
        if lo == hi {
            return Ok(lo);
        }
        let n = Node { var, lo, hi };
        if let Some(&r) = self.unique.get(&n) {
            return Ok(r);
        }
        if self.allocated() >= self.node_limit {
            return Err(BddError::Capacity {
                limit: self.node_limit,
            });
        }
        let r = match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = n;
                NodeRef(i)
            }
            None => {
                self.nodes.push(n);
                NodeRef(self.nodes.len() as u32 - 1)
            }
        };
        self.unique.insert(n, r);
        Ok(r)
    }

    fn check_var(&self, var: u32) -> Result<()> {
        if var >= self.num_vars {
            return Err(BddError::UnknownVar {
                var,
                num_vars: self.num_vars,
            });
        }
        Ok(())
    }

    pub fn var(&mut self, var: u32) -> Result<NodeRef> {
        self.check_var(var)?;
        self.mk(var, NodeRef::FALSE, NodeRef::TRUE)
    }

    pub fn nvar(&mut self, var: u32) -> Result<NodeRef> {
        self.check_var(var)?;
        self.mk(var, NodeRef::TRUE, NodeRef::FALSE)
    }

    pub fn literal(&mut self, var: u32, value: bool) -> Result<NodeRef> {
        if value {
            self.var(var)
        } else {
            self.nvar(var)
        }
    }

    /// Conjunction of positive literals, used as a quantification set.
    pub fn cube(&mut self, vars: &[u32]) -> Result<NodeRef> {
        let mut vs = vars.to_vec();
        vs.sort_unstable();
        vs.dedup();
        let mut r = NodeRef::TRUE;
        for &v in vs.iter().rev() {
            self.check_var(v)?;
            r = self.mk(v, NodeRef::FALSE, r)?;
        }
        Ok(r)
    }

    /// Conjunction of literals.
    pub fn cube_lits(&mut self, lits: &[(u32, bool)]) -> Result<NodeRef> {
        let mut ls = lits.to_vec();
        ls.sort_unstable();
        let mut r = NodeRef::TRUE;
        for &(v, b) in ls.iter().rev() {
            self.check_var(v)?;
            let lit = self.literal(v, b)?;
            r = self.and(lit, r)?;
        }
        Ok(r)
    }

    pub fn not(&mut self, f: NodeRef) -> Result<NodeRef> {
        if f.is_const() {
            return Ok(NodeRef(1 - f.0));
        }
        let key = (Op::Not, f, f, f);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let n = self.node(f);
        let lo = self.not(n.lo)?;
        let hi = self.not(n.hi)?;
        let r = self.mk(n.var, lo, hi)?;
        self.cache.insert(key, r);
        Ok(r)
    }

    fn cofactors(&self, f: NodeRef, var: u32) -> (NodeRef, NodeRef) {
        let n = self.node(f);
        if n.var == var {
            (n.lo, n.hi)
        } else {
            (f, f)
        }
    }

    fn binary(&mut self, op: Op, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        match op {
            Op::And => {
                if a.is_false() || b.is_false() {
                    return Ok(NodeRef::FALSE);
                }
                if a.is_true() {
                    return Ok(b);
                }
                if b.is_true() || a == b {
                    return Ok(a);
                }
            }
            Op::Or => {
                if a.is_true() || b.is_true() {
                    return Ok(NodeRef::TRUE);
                }
                if a.is_false() {
                    return Ok(b);
                }
                if b.is_false() || a == b {
                    return Ok(a);
                }
            }
            Op::Xor => {
                if a == b {
                    return Ok(NodeRef::FALSE);
                }
                if a.is_false() {
                    return Ok(b);
                }
                if b.is_false() {
                    return Ok(a);
                }
                if a.is_true() {
                    return self.not(b);
                }
                if b.is_true() {
                    return self.not(a);
                }
            }
            _ => unreachable!("not a binary operator"),
        }
        // Commutative: normalise the key.
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let key = (op, a, b, NodeRef::FALSE);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let var = self.level(a).min(self.level(b));
        let (a0, a1) = self.cofactors(a, var);
        let (b0, b1) = self.cofactors(b, var);
        let lo = self.binary(op, a0, b0)?;
        let hi = self.binary(op, a1, b1)?;
        let r = self.mk(var, lo, hi)?;
        self.cache.insert(key, r);
        Ok(r)
    }

    pub fn and(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.binary(Op::And, a, b)
    }

    pub fn or(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.binary(Op::Or, a, b)
    }

    pub fn xor(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.binary(Op::Xor, a, b)
    }

    pub fn iff(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let x = self.xor(a, b)?;
        self.not(x)
    }

    pub fn implies(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let na = self.not(a)?;
        self.or(na, b)
    }

    /// `a ∧ ¬b`
    pub fn diff(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let nb = self.not(b)?;
        self.and(a, nb)
    }

    /// `a ≤ b` as Boolean functions.
    pub fn leq(&mut self, a: NodeRef, b: NodeRef) -> Result<bool> {
        Ok(self.diff(a, b)?.is_false())
    }

    pub fn and_all(&mut self, fs: impl IntoIterator<Item = NodeRef>) -> Result<NodeRef> {
        let mut r = NodeRef::TRUE;
        for f in fs {
            r = self.and(r, f)?;
        }
        Ok(r)
    }

    pub fn or_all(&mut self, fs: impl IntoIterator<Item = NodeRef>) -> Result<NodeRef> {
        let mut r = NodeRef::FALSE;
        for f in fs {
            r = self.or(r, f)?;
        }
        Ok(r)
    }

    pub fn ite(&mut self, f: NodeRef, g: NodeRef, h: NodeRef) -> Result<NodeRef> {
        if f.is_true() {
            return Ok(g);
        }
        if f.is_false() {
            return Ok(h);
        }
        if g == h {
            return Ok(g);
        }
        if g.is_true() && h.is_false() {
            return Ok(f);
        }
        if g.is_false() && h.is_true() {
            return self.not(f);
        }
        if g.is_true() {
            return self.or(f, h);
        }
        if h.is_false() {
            return self.and(f, g);
        }
        let key = (Op::Ite, f, g, h);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let var = self.level(f).min(self.level(g)).min(self.level(h));
        let (f0, f1) = self.cofactors(f, var);
        let (g0, g1) = self.cofactors(g, var);
        let (h0, h1) = self.cofactors(h, var);
        let lo = self.ite(f0, g0, h0)?;
        let hi = self.ite(f1, g1, h1)?;
        let r = self.mk(var, lo, hi)?;
        self.cache.insert(key, r);
        Ok(r)
    }

    /// Existential quantification of the variables in `cube` (a conjunction
    /// of positive literals, see [`Manager::cube`]).
    pub fn exists(&mut self, f: NodeRef, cube: NodeRef) -> Result<NodeRef> {
        if f.is_const() || cube.is_true() {
            return Ok(f);
        }
        let fv = self.level(f);
        let mut cube = cube;
        while !cube.is_true() && self.level(cube) < fv {
            cube = self.node(cube).hi;
        }
        if cube.is_true() {
            return Ok(f);
        }
        let key = (Op::Exists, f, cube, NodeRef::FALSE);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let n = self.node(f);
        let r = if self.level(cube) == n.var {
            let rest = self.node(cube).hi;
            let lo = self.exists(n.lo, rest)?;
            if lo.is_true() {
                NodeRef::TRUE
            } else {
                let hi = self.exists(n.hi, rest)?;
                self.or(lo, hi)?
            }
        } else {
            let lo = self.exists(n.lo, cube)?;
            let hi = self.exists(n.hi, cube)?;
            self.mk(n.var, lo, hi)?
        };
        self.cache.insert(key, r);
        Ok(r)
    }

    pub fn forall(&mut self, f: NodeRef, cube: NodeRef) -> Result<NodeRef> {
        if f.is_const() || cube.is_true() {
            return Ok(f);
        }
        let key = (Op::Forall, f, cube, NodeRef::FALSE);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let nf = self.not(f)?;
        let e = self.exists(nf, cube)?;
        let r = self.not(e)?;
        self.cache.insert(key, r);
        Ok(r)
    }

    /// Relational product `∃cube. f ∧ g`.
    pub fn and_exists(&mut self, f: NodeRef, g: NodeRef, cube: NodeRef) -> Result<NodeRef> {
        if f.is_false() || g.is_false() {
            return Ok(NodeRef::FALSE);
        }
        if cube.is_true() {
            return self.and(f, g);
        }
        if f.is_true() {
            return self.exists(g, cube);
        }
        if g.is_true() || f == g {
            return self.exists(f, cube);
        }
        let (f, g) = if f <= g { (f, g) } else { (g, f) };
        let top = self.level(f).min(self.level(g));
        let mut cube = cube;
        while !cube.is_true() && self.level(cube) < top {
            cube = self.node(cube).hi;
        }
        if cube.is_true() {
            return self.and(f, g);
        }
        let key = (Op::AndExists, f, g, cube);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let (f0, f1) = self.cofactors(f, top);
        let (g0, g1) = self.cofactors(g, top);
        let r = if self.level(cube) == top {
            let rest = self.node(cube).hi;
            let lo = self.and_exists(f0, g0, rest)?;
            if lo.is_true() {
                NodeRef::TRUE
            } else {
                let hi = self.and_exists(f1, g1, rest)?;
                self.or(lo, hi)?
            }
        } else {
            let lo = self.and_exists(f0, g0, cube)?;
            let hi = self.and_exists(f1, g1, cube)?;
            self.mk(top, lo, hi)?
        };
        self.cache.insert(key, r);
        Ok(r)
    }

    /// Registers a variable substitution. Variables not mentioned map to
    /// themselves. The substitution must be injective on the support of any
    /// function it is later applied to.
    pub fn register_map(&mut self, pairs: &[(u32, u32)]) -> Result<MapId> {
        let mut map: Vec<u32> = (0..self.num_vars).collect();
        for &(from, to) in pairs {
            self.check_var(from)?;
            self.check_var(to)?;
            map[from as usize] = to;
        }
        self.maps.push(map);
        Ok(MapId(self.maps.len() as u32 - 1))
    }

    /// Applies a registered substitution. Works for arbitrary (not
    /// necessarily order-preserving) maps by rebuilding through `ite`.
    pub fn rename(&mut self, f: NodeRef, map: MapId) -> Result<NodeRef> {
        if f.is_const() {
            return Ok(f);
        }
        let key = (Op::Rename(map.0), f, NodeRef::FALSE, NodeRef::FALSE);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let n = self.node(f);
        let lo = self.rename(n.lo, map)?;
        let hi = self.rename(n.hi, map)?;
        let target = self.maps[map.0 as usize][n.var as usize];
        let v = self.var(target)?;
        let r = self.ite(v, hi, lo)?;
        self.cache.insert(key, r);
        Ok(r)
    }

    /// Declares the pairing between current-state variables and their
    /// primed copies used by [`Manager::swap_prime`].
    pub fn set_prime_pairs(&mut self, pairs: &[(u32, u32)]) -> Result<()> {
        let mut both = Vec::with_capacity(pairs.len() * 2);
        for &(x, xp) in pairs {
            both.push((x, xp));
            both.push((xp, x));
        }
        self.prime_map = Some(self.register_map(&both)?);
        Ok(())
    }

    /// Exchanges every state variable with its primed copy.
    pub fn swap_prime(&mut self, f: NodeRef) -> Result<NodeRef> {
        let map = self.prime_map.ok_or(BddError::NoPrimePairs)?;
        self.rename(f, map)
    }

    /// Cofactor of `f` with respect to the given partial assignment.
    pub fn restrict(&mut self, f: NodeRef, assignment: &[(u32, bool)]) -> Result<NodeRef> {
        let lits = self.cube_lits(assignment)?;
        self.restrict_cube(f, lits)
    }

    fn restrict_cube(&mut self, f: NodeRef, lits: NodeRef) -> Result<NodeRef> {
        if f.is_const() || lits.is_true() {
            return Ok(f);
        }
        let fv = self.level(f);
        let mut lits = lits;
        while !lits.is_true() && self.level(lits) < fv {
            let n = self.node(lits);
            lits = if n.lo.is_false() { n.hi } else { n.lo };
        }
        if lits.is_true() {
            return Ok(f);
        }
        let key = (Op::Restrict, f, lits, NodeRef::FALSE);
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let n = self.node(f);
        let l = self.node(lits);
        let r = if l.var == n.var {
            if l.lo.is_false() {
                self.restrict_cube(n.hi, l.hi)?
            } else {
                self.restrict_cube(n.lo, l.lo)?
            }
        } else {
            let lo = self.restrict_cube(n.lo, lits)?;
            let hi = self.restrict_cube(n.hi, lits)?;
            self.mk(n.var, lo, hi)?
        };
        self.cache.insert(key, r);
        Ok(r)
    }

    /// Evaluates `f` under a total assignment.
    pub fn eval(&self, f: NodeRef, assignment: impl Fn(u32) -> bool) -> bool {
        let mut cur = f;
        while !cur.is_const() {
            let n = self.node(cur);
            cur = if assignment(n.var) { n.hi } else { n.lo };
        }
        cur.is_true()
    }

    /// Picks one satisfying assignment of `f`, returned as values for
    /// `care` (in the order given). Branch choice and the value of care
    /// variables the chosen path leaves free follow `policy`. Returns `None`
    /// iff `f` is unsatisfiable.
    pub fn pick_cube(&self, f: NodeRef, care: &[u32], policy: CubePolicy) -> Option<Vec<bool>> {
        if f.is_false() {
            return None;
        }
        let default = policy == CubePolicy::PreferHigh;
        let mut fixed: FxHashMap<u32, bool> = FxHashMap::default();
        let mut cur = f;
        while !cur.is_const() {
            let n = self.node(cur);
            let (first, second, first_val) = if default {
                (n.hi, n.lo, true)
            } else {
                (n.lo, n.hi, false)
            };
            if !first.is_false() {
                fixed.insert(n.var, first_val);
                cur = first;
            } else {
                fixed.insert(n.var, !first_val);
                cur = second;
            }
        }
        Some(
            care.iter()
                .map(|v| fixed.get(v).copied().unwrap_or(default))
                .collect(),
        )
    }

    /// Number of satisfying assignments over `vars`, which must include the
    /// support of `f`. Saturates at `u128::MAX`.
    pub fn sat_count(&self, f: NodeRef, vars: &[u32]) -> u128 {
        let mut vs = vars.to_vec();
        vs.sort_unstable();
        vs.dedup();
        let pos: FxHashMap<u32, usize> = vs.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = vs.len();
        let pos_of = |m: &Manager, g: NodeRef| -> usize {
            if g.is_const() {
                n
            } else {
                *pos.get(&m.level(g))
                    .expect("sat_count: function depends on a variable outside the counting set")
            }
        };
        fn pow2(k: usize) -> u128 {
            if k >= 128 {
                u128::MAX
            } else {
                1u128 << k
            }
        }
        fn rec(
            m: &Manager,
            g: NodeRef,
            memo: &mut FxHashMap<NodeRef, u128>,
            pos_of: &dyn Fn(&Manager, NodeRef) -> usize,
        ) -> u128 {
            if g.is_false() {
                return 0;
            }
            if g.is_true() {
                return 1;
            }
            if let Some(&c) = memo.get(&g) {
                return c;
            }
            let nd = m.node(g);
            let p = pos_of(m, g);
            let lo = rec(m, nd.lo, memo, pos_of).saturating_mul(pow2(pos_of(m, nd.lo) - p - 1));
            let hi = rec(m, nd.hi, memo, pos_of).saturating_mul(pow2(pos_of(m, nd.hi) - p - 1));
            let c = lo.saturating_add(hi);
            memo.insert(g, c);
            c
        }
        let mut memo = FxHashMap::default();
        let c = rec(self, f, &mut memo, &pos_of);
        c.saturating_mul(pow2(pos_of(self, f)))
    }

    /// Variables `f` depends on, in order.
    pub fn support(&self, f: NodeRef) -> Vec<u32> {
        let mut seen = rustc_hash::FxHashSet::default();
        let mut vars = std::collections::BTreeSet::new();
        let mut stack = vec![f];
        while let Some(g) = stack.pop() {
            if g.is_const() || !seen.insert(g) {
                continue;
            }
            let n = self.node(g);
            vars.insert(n.var);
            stack.push(n.lo);
            stack.push(n.hi);
        }
        vars.into_iter().collect()
    }

    /// Number of distinct nodes reachable from `f`, terminals included.
    pub fn node_count(&self, f: NodeRef) -> usize {
        let mut seen = rustc_hash::FxHashSet::default();
        let mut stack = vec![f];
        while let Some(g) = stack.pop() {
            if !seen.insert(g) || g.is_const() {
                continue;
            }
            let n = self.node(g);
            stack.push(n.lo);
            stack.push(n.hi);
        }
        seen.len()
    }

    /// Checks the reducedness and uniqueness invariants of the node store.
    /// Returns a description of the first violation found.
    pub fn check_integrity(&self) -> std::result::Result<(), String> {
        let mut seen = rustc_hash::FxHashSet::default();
        for (i, n) in self.nodes.iter().enumerate().skip(2) {
            if n.var == FREE_VAR {
                continue;
            }
            if n.lo == n.hi {
                return Err(format!("node {i} has identical children"));
            }
            if !seen.insert(*n) {
                return Err(format!(
                    "node {i} duplicates an earlier (var, low, high) triple"
                ));
            }
            for c in [n.lo, n.hi] {
                if self.nodes[c.0 as usize].var == FREE_VAR {
                    return Err(format!("node {i} points to freed node {}", c.0));
                }
                if !c.is_const() && self.level(c) <= n.var {
                    return Err(format!("node {i} violates the variable order"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contradiction_is_false() {
        let mut m = Manager::new(2);
        let x = m.var(0).unwrap();
        let nx = m.not(x).unwrap();
        assert_eq!(m.and(x, nx).unwrap(), NodeRef::FALSE);
    }

    #[test]
    fn ite_identity() {
        let mut m = Manager::new(3);
        let x = m.var(0).unwrap();
        let y = m.var(2).unwrap();
        let f = m.xor(x, y).unwrap();
        assert_eq!(m.ite(f, NodeRef::TRUE, NodeRef::FALSE).unwrap(), f);
    }

    #[test]
    fn quantifiers() {
        let mut m = Manager::new(2);
        let x = m.var(0).unwrap();
        let y = m.var(1).unwrap();
        let cx = m.cube(&[0]).unwrap();
        let xy = m.and(x, y).unwrap();
        assert_eq!(m.exists(xy, cx).unwrap(), y);
        let xoy = m.or(x, y).unwrap();
        assert_eq!(m.forall(xoy, cx).unwrap(), y);
    }

    #[test]
    fn swap_prime_exchanges_pairs() {
        let mut m = Manager::new(4);
        m.set_prime_pairs(&[(0, 1), (2, 3)]).unwrap();
        let x = m.var(0).unwrap();
        let xp = m.var(1).unwrap();
        assert_eq!(m.swap_prime(x).unwrap(), xp);
        let yp = m.var(3).unwrap();
        let y = m.var(2).unwrap();
        let f = m.and(x, yp).unwrap();
        let g = m.and(xp, y).unwrap();
        assert_eq!(m.swap_prime(f).unwrap(), g);
    }

    #[test]
    fn pick_cube_policy() {
        let m = Manager::new(1);
        assert_eq!(
            m.pick_cube(NodeRef::TRUE, &[0], CubePolicy::PreferLow),
            Some(vec![false])
        );
        assert_eq!(
            m.pick_cube(NodeRef::FALSE, &[0], CubePolicy::PreferLow),
            None
        );
        assert_eq!(
            m.pick_cube(NodeRef::TRUE, &[0], CubePolicy::PreferHigh),
            Some(vec![true])
        );
    }

    #[test]
    fn sat_count_skips_levels() {
        let mut m = Manager::new(4);
        let x = m.var(1).unwrap();
        assert_eq!(m.sat_count(x, &[0, 1, 2, 3]), 8);
        assert_eq!(m.sat_count(NodeRef::TRUE, &[0, 1]), 4);
        assert_eq!(m.sat_count(NodeRef::FALSE, &[0, 1]), 0);
    }

    #[test]
    fn capacity_is_reported() {
        let mut m = Manager::with_node_limit(8, 6);
        let mut f = NodeRef::FALSE;
        let mut err = None;
        for i in 0..8 {
            let v = match m.var(i) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            };
            match m.xor(f, v) {
                Ok(g) => f = g,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert_eq!(err, Some(BddError::Capacity { limit: 6 }));
    }

    #[test]
    fn restrict_fixes_variables() {
        let mut m = Manager::new(3);
        let x = m.var(0).unwrap();
        let y = m.var(1).unwrap();
        let z = m.var(2).unwrap();
        let xy = m.and(x, y).unwrap();
        let f = m.or(xy, z).unwrap();
        assert_eq!(m.restrict(f, &[(0, true)]).unwrap(), m.or(y, z).unwrap());
        assert_eq!(
            m.restrict(f, &[(0, false), (2, false)]).unwrap(),
            NodeRef::FALSE
        );
    }
}
