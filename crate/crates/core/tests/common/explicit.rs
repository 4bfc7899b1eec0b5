//! Explicit-state games: a brute-force GR(1) solver over enumerated states
//! and graph checks of strategies, used as an oracle for the symbolic
//! solver.

#![allow(dead_code)]

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::Rng;
use std::collections::HashMap;
use tslsynth::game::{GameVars, SymbolicGame};
use tslsynth::solver::{EnvMemory, SpoilingCert, WinningCert};
use tslsynth_bdd::NodeRef;

/// Moves are deterministic per action value.
#[derive(Clone, Debug)]
pub struct Explicit {
    pub bits: u32,
    pub ku: u32,
    pub kc: u32,
    pub turn: Vec<bool>,
    pub init: Vec<bool>,
    /// `env[x]`: (action, successor) for environment states.
    pub env: Vec<Vec<(u32, usize)>>,
    pub ctrl: Vec<Vec<(u32, usize)>>,
    pub goals: Vec<Vec<bool>>,
    /// `fair[j][x][yu]`.
    pub fair: Vec<Vec<Vec<bool>>>,
}

impl Explicit {
    pub fn n(&self) -> usize {
        1 << self.bits
    }

    pub fn random(rng: &mut impl Rng, bits: u32, goals: usize, fair: usize) -> Explicit {
        let n = 1usize << bits;
        let ku = rng.gen_range(1..=2);
        let kc = rng.gen_range(1..=2);
        let p_turn = rng.gen_range(0.1..0.6);
        let p_move = rng.gen_range(0.3..0.9);
        let p_goal = rng.gen_range(0.02..0.4);
        let p_fair = rng.gen_range(0.2..0.9);
        // Successors are drawn near the source half of the time so that
        // games have structure beyond uniform random graphs.
        let succ = |rng: &mut dyn rand::RngCore, x: usize| -> usize {
            if rng.gen_bool(0.5) {
                (x + rng.gen_range(0..4)) % n
            } else {
                rng.gen_range(0..n)
            }
        };
        let turn: Vec<bool> = (0..n).map(|_| rng.gen_bool(p_turn)).collect();
        let mut env = vec![Vec::new(); n];
        let mut ctrl = vec![Vec::new(); n];
        for x in 0..n {
            let (k, list) = if turn[x] {
                (kc, &mut ctrl[x])
            } else {
                (ku, &mut env[x])
            };
            for a in 0..(1u32 << k) {
                if rng.gen_bool(p_move) {
                    list.push((a, succ(rng, x)));
                }
            }
            if list.is_empty() {
                list.push((rng.gen_range(0..1u32 << k), succ(rng, x)));
            }
        }
        Explicit {
            bits,
            ku,
            kc,
            init: (0..n).map(|_| rng.gen_bool(0.2)).collect(),
            turn,
            env,
            ctrl,
            goals: (0..goals)
                .map(|_| (0..n).map(|_| rng.gen_bool(p_goal)).collect())
                .collect(),
            fair: (0..fair)
                .map(|_| {
                    (0..n)
                        .map(|_| (0..1u32 << ku).map(|_| rng.gen_bool(p_fair)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    // Order: X, Yu, Yc, X'. Random successors make interleaving X with X'
    // blow up, so the successor is read last like in a lookup table.
    fn xvar(&self, b: u32) -> u32 {
        b
    }

    fn xpvar(&self, b: u32) -> u32 {
        self.bits + self.ku + self.kc + b
    }

    pub fn yu_vars(&self) -> Vec<u32> {
        (0..self.ku).map(|b| self.bits + b).collect()
    }

    pub fn yc_vars(&self) -> Vec<u32> {
        (0..self.kc).map(|b| self.bits + self.ku + b).collect()
    }

    pub fn state_lits(&self, x: usize) -> Vec<(u32, bool)> {
        (0..self.bits)
            .map(|b| (self.xvar(b), (x >> b) & 1 == 1))
            .collect()
    }

    fn next_lits(&self, x: usize) -> Vec<(u32, bool)> {
        (0..self.bits)
            .map(|b| (self.xpvar(b), (x >> b) & 1 == 1))
            .collect()
    }

    fn act_lits(vars: &[u32], a: u32) -> Vec<(u32, bool)> {
        vars.iter()
            .enumerate()
            .map(|(b, &v)| (v, (a >> b) & 1 == 1))
            .collect()
    }

    pub fn to_symbolic(&self) -> SymbolicGame {
        let total = 2 * self.bits + self.ku + self.kc;
        let vars = GameVars {
            x: (0..self.bits).map(|b| self.xvar(b)).collect(),
            xp: (0..self.bits).map(|b| self.xpvar(b)).collect(),
            yu: self.yu_vars(),
            yc: self.yc_vars(),
            names: (0..total).map(|i| format!("v{i}")).collect(),
        };
        let mut mgr = SymbolicGame::manager_for(&vars, 1 << 22).unwrap();
        let set = |mgr: &mut tslsynth_bdd::Manager, pred: &dyn Fn(usize) -> bool| -> NodeRef {
            let mut acc = mgr.constant(false);
            for x in 0..self.n() {
                if pred(x) {
                    let c = mgr.cube_lits(&self.state_lits(x)).unwrap();
                    acc = mgr.or(acc, c).unwrap();
                }
            }
            acc
        };
        let init = set(&mut mgr, &|x| self.init[x]);
        let turn = set(&mut mgr, &|x| self.turn[x]);
        let goals: Vec<(String, NodeRef)> = self
            .goals
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{i}"), set(&mut mgr, &|x| g[x])))
            .collect();
        let yu = self.yu_vars();
        let yc = self.yc_vars();
        let rel = |mgr: &mut tslsynth_bdd::Manager, moves: &[Vec<(u32, usize)>], avars: &[u32]| {
            let mut acc = mgr.constant(false);
            for (x, list) in moves.iter().enumerate() {
                for &(a, y) in list {
                    let mut lits = self.state_lits(x);
                    lits.extend(Self::act_lits(avars, a));
                    lits.extend(self.next_lits(y));
                    let c = mgr.cube_lits(&lits).unwrap();
                    acc = mgr.or(acc, c).unwrap();
                }
            }
            acc
        };
        let du = rel(&mut mgr, &self.env, &yu);
        let dc = rel(&mut mgr, &self.ctrl, &yc);
        let fairness: Vec<(String, NodeRef)> = self
            .fair
            .iter()
            .enumerate()
            .map(|(j, phi)| {
                let mut acc = mgr.constant(false);
                for x in 0..self.n() {
                    for a in 0..1u32 << self.ku {
                        if phi[x][a as usize] {
                            let mut lits = self.state_lits(x);
                            lits.extend(Self::act_lits(&yu, a));
                            let c = mgr.cube_lits(&lits).unwrap();
                            acc = mgr.or(acc, c).unwrap();
                        }
                    }
                }
                (format!("f{j}"), acc)
            })
            .collect();
        let error = mgr.constant(false);
        SymbolicGame::new(mgr, vars, init, turn, error, du, dc, goals, fairness).unwrap()
    }

    /// States from which the controller can force the next state into `s`.
    pub fn cpre(&self, s: &[bool]) -> Vec<bool> {
        (0..self.n())
            .map(|x| {
                if self.turn[x] {
                    self.ctrl[x].iter().any(|&(_, y)| s[y])
                } else {
                    self.env[x].iter().all(|&(_, y)| s[y])
                }
            })
            .collect()
    }

    /// Brute-force winning region by direct set iteration.
    pub fn winning(&self) -> Vec<bool> {
        let n = self.n();
        let mut z = vec![true; n];
        loop {
            let cz = self.cpre(&z);
            let mut znew = vec![true; n];
            for (gi, goal) in self.goals.iter().enumerate() {
                let _ = gi;
                let mut y = vec![false; n];
                loop {
                    let mut ynew = vec![false; n];
                    for phi in &self.fair {
                        let mut xs = vec![true; n];
                        loop {
                            let xn: Vec<bool> = (0..n)
                                .map(|x| {
                                    if goal[x] && cz[x] {
                                        return true;
                                    }
                                    if self.turn[x] {
                                        self.ctrl[x].iter().any(|&(_, t)| y[t])
                                    } else {
                                        self.env[x]
                                            .iter()
                                            .all(|&(a, t)| y[t] || (!phi[x][a as usize] && xs[t]))
                                    }
                                })
                                .collect();
                            if xn == xs {
                                break;
                            }
                            xs = xn;
                        }
                        for x in 0..n {
                            ynew[x] |= xs[x];
                        }
                    }
                    if ynew == y {
                        break;
                    }
                    y = ynew;
                }
                for x in 0..n {
                    znew[x] &= y[x];
                }
            }
            if znew == z {
                return z;
            }
            z = znew;
        }
    }

    fn is_fair_env(&self, x: usize, a: u32, j: usize) -> bool {
        self.fair[j][x][a as usize]
    }

    /// Checks that every play consistent with the controller certificate
    /// from `W` stays in `W` and, if fair, visits every goal infinitely
    /// often. The controller's memory is the goal it is pursuing.
    pub fn check_winning(&self, g: &mut SymbolicGame, cert: &WinningCert) -> Result<(), String> {
        let w = self.decode_set(g, cert.w);
        let ng = self.goals.len();
        let mut graph: DiGraph<(usize, usize), Vec<bool>> = DiGraph::new();
        let mut index: HashMap<(usize, usize), NodeIndex> = HashMap::new();
        let mut todo = Vec::new();
        for x in 0..self.n() {
            if w[x] {
                let id = graph.add_node((x, 0));
                index.insert((x, 0), id);
                todo.push((x, 0));
            }
        }
        let nf = self.fair.len();
        while let Some((x, i)) = todo.pop() {
            if !w[x] {
                return Err(format!("play leaves W at state {x}"));
            }
            let from = index[&(x, i)];
            let next_i = if self.goals[i][x] { (i + 1) % ng } else { i };
            let mut edges = Vec::new();
            if self.turn[x] {
                let mut any = false;
                for &(a, y) in &self.ctrl[x] {
                    let mut lits = self.state_lits(x);
                    lits.extend(Self::act_lits(&self.yc_vars(), a));
                    let allowed = {
                        let mut v = vec![false; g.var_names.len()];
                        for (k, b) in lits {
                            v[k as usize] = b;
                        }
                        g.mgr.eval(cert.rho[i], |k| v[k as usize])
                    };
                    if allowed {
                        any = true;
                        edges.push((y, vec![true; nf]));
                    }
                }
                if !any {
                    return Err(format!("no strategy move at controller state {x}"));
                }
            } else {
                for &(a, y) in &self.env[x] {
                    edges.push((y, (0..nf).map(|j| self.is_fair_env(x, a, j)).collect()));
                }
            }
            for (y, label) in edges {
                let key = (y, next_i);
                let to = *index.entry(key).or_insert_with(|| {
                    todo.push(key);
                    graph.add_node(key)
                });
                graph.add_edge(from, to, label);
            }
        }
        // A fair cycle that avoids some goal refutes the strategy.
        for avoid in 0..ng {
            let sub = graph.filter_map(
                |_, &(x, i)| (!self.goals[avoid][x]).then_some((x, i)),
                |_, l| Some(l.clone()),
            );
            for scc in tarjan_scc(&sub) {
                let set: std::collections::HashSet<_> = scc.iter().copied().collect();
                let mut fair_seen = vec![false; nf];
                let mut has_edge = false;
                for &v in &scc {
                    for e in sub.edges(v) {
                        use petgraph::visit::EdgeRef;
                        if set.contains(&e.target()) {
                            has_edge = true;
                            for (j, &f) in e.weight().iter().enumerate() {
                                fair_seen[j] |= f;
                            }
                        }
                    }
                }
                if has_edge && fair_seen.iter().all(|&f| f) {
                    let (x, i) = sub[scc[0]];
                    return Err(format!(
                        "fair cycle avoiding goal {avoid} through ({x}, {i})"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checks that, following the counterstrategy from every losing state,
    /// each play stays losing, is fair, and starves some goal.
    pub fn check_spoiling(&self, g: &mut SymbolicGame, cert: &SpoilingCert) -> Result<(), String> {
        let w = self.decode_set(g, cert.w);
        let nf = self.fair.len();
        let mut graph: DiGraph<(usize, EnvMemory), Vec<bool>> = DiGraph::new();
        let mut index: HashMap<(usize, EnvMemory), NodeIndex> = HashMap::new();
        let mut todo = Vec::new();
        for x in 0..self.n() {
            if !w[x] {
                let key = (x, EnvMemory::default());
                index.insert(key, graph.add_node(key));
                todo.push(key);
            }
        }
        let yu_vars = self.yu_vars();
        while let Some((x, mem)) = todo.pop() {
            if w[x] {
                return Err(format!("counterplay enters W at state {x}"));
            }
            let from = index[&(x, mem)];
            let mut edges = Vec::new();
            if self.turn[x] {
                for &(_, y) in &self.ctrl[x] {
                    edges.push((y, mem, vec![true; nf]));
                }
            } else {
                let (yu, next) = cert
                    .strategy
                    .choose(g, &self.state_lits(x), mem)
                    .unwrap()
                    .ok_or_else(|| format!("no counter move at {x}"))?;
                let a = yu_vars
                    .iter()
                    .enumerate()
                    .fold(0u32, |acc, (b, _)| acc | ((yu[b] as u32) << b));
                let &(_, y) = self.env[x]
                    .iter()
                    .find(|&&(b, _)| b == a)
                    .ok_or_else(|| format!("counter move {a} at {x} is not a move"))?;
                edges.push((
                    y,
                    next,
                    (0..nf).map(|j| self.is_fair_env(x, a, j)).collect(),
                ));
            }
            for (y, m, label) in edges {
                let key = (y, m);
                let to = *index.entry(key).or_insert_with(|| {
                    todo.push(key);
                    graph.add_node(key)
                });
                graph.add_edge(from, to, label);
            }
        }
        // No cycle may visit every goal.
        for scc in tarjan_scc(&graph) {
            let set: std::collections::HashSet<_> = scc.iter().copied().collect();
            let cyclic = scc
                .iter()
                .any(|&v| graph.neighbors(v).any(|u| set.contains(&u)));
            if !cyclic {
                continue;
            }
            let all_goals = self
                .goals
                .iter()
                .all(|goal| scc.iter().any(|&v| goal[graph[v].0]));
            if all_goals {
                return Err(format!("cycle through every goal at {:?}", graph[scc[0]]));
            }
        }
        // No cycle may avoid a fairness condition forever.
        for j in 0..nf {
            let sub = graph.filter_map(|_, n| Some(*n), |_, l| (!l[j]).then_some(()));
            if petgraph::algo::is_cyclic_directed(&sub) {
                return Err(format!("unfair cycle for fairness condition {j}"));
            }
        }
        Ok(())
    }

    pub fn decode_set(&self, g: &SymbolicGame, f: NodeRef) -> Vec<bool> {
        (0..self.n())
            .map(|x| {
                let lits = self.state_lits(x);
                let mut v = vec![false; g.var_names.len()];
                for (k, b) in lits {
                    v[k as usize] = b;
                }
                g.mgr.eval(f, |k| v[k as usize])
            })
            .collect()
    }
}
