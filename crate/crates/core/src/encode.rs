//! Bit-blasting of a compiled specification into a [`SymbolicGame`].
//!
//! Variable order: each program variable MSB-first with current and next
//! copies interleaved, then the program counters, then the error flag, then
//! the environment action bits (scheduler, choices) and finally the
//! controller action bits (selector, arguments).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tslsynth_bdd::{BddError, CubePolicy, Manager, NodeRef};

use crate::cfa::{Cfas, Instr, LocKind, Program};
use crate::frontend::ast::{bits_for, BinOp};
use crate::frontend::Type;
use crate::game::{GameVars, SymbolicGame};
use crate::interp::{mask, Move, ProgState};
use crate::model::{MExpr, MExprKind, ProcId, SpecModel, TaskId};

pub const DEFAULT_NODE_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("capacity exceeded: {0}")]
    Capacity(#[from] BddError),
    #[error("variable `{name}` is {width} bits wide; at most 64 are supported")]
    Width { name: String, width: u32 },
}

pub type Result<T> = std::result::Result<T, EncodeError>;

/// Boolean encoding of one bounded variable. Index vectors are LSB-first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitVar {
    pub name: String,
    pub width: u32,
    pub cur: Vec<u32>,
    pub next: Vec<u32>,
}

/// A controller move kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Call(TaskId),
    /// Leave the magic block the process is waiting in.
    Exit(ProcId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarMap {
    pub vars: Vec<BitVar>,
    pub pcs: Vec<BitVar>,
    pub err: BitVar,
    /// Scheduler selector (empty with at most one process).
    pub sched: Vec<u32>,
    /// Shared pool of `*` choice bits, laid out per location.
    pub choice: Vec<u32>,
    /// Controller action selector (empty with at most one action).
    pub action: Vec<u32>,
    pub args: Vec<u32>,
    pub actions: Vec<Action>,
    pub names: Vec<String>,
}

impl VarMap {
    pub fn num_vars(&self) -> u32 {
        self.names.len() as u32
    }

    pub fn state_bits(&self) -> u32 {
        self.vars
            .iter()
            .chain(&self.pcs)
            .map(|v| v.width)
            .sum::<u32>()
            + 1
    }

    pub fn data_bits(&self) -> u32 {
        self.vars.iter().map(|v| v.width).sum()
    }

    pub fn x(&self) -> Vec<u32> {
        self.all_state()
            .flat_map(|v| v.cur.iter().copied())
            .collect()
    }

    pub fn xp(&self) -> Vec<u32> {
        self.all_state()
            .flat_map(|v| v.next.iter().copied())
            .collect()
    }

    pub fn yu(&self) -> Vec<u32> {
        self.sched.iter().chain(&self.choice).copied().collect()
    }

    pub fn yc(&self) -> Vec<u32> {
        self.action.iter().chain(&self.args).copied().collect()
    }

    fn all_state(&self) -> impl Iterator<Item = &BitVar> {
        self.vars
            .iter()
            .chain(&self.pcs)
            .chain(std::iter::once(&self.err))
    }

    pub fn action_index(&self, a: Action) -> Option<usize> {
        self.actions.iter().position(|&b| b == a)
    }

    fn state_lits_with(&self, s: &ProgState, next: bool) -> Vec<(u32, bool)> {
        let mut out = Vec::new();
        let pick = |v: &BitVar| if next { v.next.clone() } else { v.cur.clone() };
        for (v, &val) in self.vars.iter().zip(&s.vars) {
            push_value(&mut out, &pick(v), val);
        }
        for (v, &val) in self.pcs.iter().zip(&s.pcs) {
            push_value(&mut out, &pick(v), val as u64);
        }
        out.push((pick(&self.err)[0], s.err));
        out
    }

    /// Assignment to `X` describing `s`.
    pub fn state_lits(&self, s: &ProgState) -> Vec<(u32, bool)> {
        self.state_lits_with(s, false)
    }

    /// Assignment to `X'` describing `s`.
    pub fn next_lits(&self, s: &ProgState) -> Vec<(u32, bool)> {
        self.state_lits_with(s, true)
    }

    pub fn decode_state(&self, val: impl Fn(u32) -> bool) -> ProgState {
        ProgState {
            vars: self.vars.iter().map(|v| read_value(&v.cur, &val)).collect(),
            pcs: self
                .pcs
                .iter()
                .map(|v| read_value(&v.cur, &val) as usize)
                .collect(),
            err: val(self.err.cur[0]),
        }
    }

    pub fn decode_next(&self, val: impl Fn(u32) -> bool) -> ProgState {
        ProgState {
            vars: self
                .vars
                .iter()
                .map(|v| read_value(&v.next, &val))
                .collect(),
            pcs: self
                .pcs
                .iter()
                .map(|v| read_value(&v.next, &val) as usize)
                .collect(),
            err: val(self.err.next[0]),
        }
    }

    /// Environment action scheduling `p` in `s` with the given choice
    /// values. Choice bits not read by the scheduled segment are zero, as
    /// are all of them when `p` cannot run.
    pub fn env_lits(
        &self,
        cfas: &Cfas,
        s: &ProgState,
        p: ProcId,
        choices: &BTreeMap<usize, u64>,
    ) -> Vec<(u32, bool)> {
        let mut out = Vec::new();
        push_value(&mut out, &self.sched, p as u64);
        let mut bits = vec![false; self.choice.len()];
        if let Some(cfa) = cfas.procs.get(p).filter(|c| !s.err && can_run(c, s.pcs[p])) {
            if let Some(layout) = cfa.choice_layout.get(s.pcs[p]) {
                for (&c, &off) in layout {
                    let v = choices.get(&c).copied().unwrap_or(0);
                    for b in 0..cfa.program.choices[c].width() {
                        bits[(off + b) as usize] = (v >> b) & 1 == 1;
                    }
                }
            }
        }
        out.extend(self.choice.iter().copied().zip(bits));
        out
    }

    /// Scheduled process and choice values of an environment action taken
    /// in `s`.
    pub fn decode_env(
        &self,
        cfas: &Cfas,
        s: &ProgState,
        val: impl Fn(u32) -> bool,
    ) -> (ProcId, BTreeMap<usize, u64>) {
        let p = read_value(&self.sched, &val) as usize;
        let mut choices = BTreeMap::new();
        if let Some(cfa) = cfas.procs.get(p) {
            if let Some(layout) = cfa.choice_layout.get(s.pcs[p]) {
                for (&c, &off) in layout {
                    let w = cfa.program.choices[c].width() as usize;
                    let off = off as usize;
                    choices.insert(c, read_value(&self.choice[off..off + w], &val));
                }
            }
        }
        (p, choices)
    }

    pub fn ctrl_lits(&self, action: usize, args: &[u64], model: &SpecModel) -> Vec<(u32, bool)> {
        let mut out = Vec::new();
        push_value(&mut out, &self.action, action as u64);
        let mut bits = vec![false; self.args.len()];
        if let Some(Action::Call(t)) = self.actions.get(action) {
            let mut off = 0usize;
            for (p, &v) in model.tasks[*t].params.iter().zip(args) {
                for b in 0..p.ty.width() as usize {
                    bits[off + b] = (v >> b) & 1 == 1;
                }
                off += p.ty.width() as usize;
            }
        }
        out.extend(self.args.iter().copied().zip(bits));
        out
    }

    /// Assignment to `Yu` or `Yc` encoding `mv` taken in `s`.
    pub fn move_lits(
        &self,
        model: &SpecModel,
        cfas: &Cfas,
        s: &ProgState,
        mv: &Move,
    ) -> Vec<(u32, bool)> {
        match mv {
            Move::Env { process, choices } => self.env_lits(cfas, s, *process, choices),
            Move::Ctrl { action, args } => {
                let k = self
                    .action_index(*action)
                    .expect("action is part of the game");
                self.ctrl_lits(k, args, model)
            }
        }
    }

    pub fn decode_ctrl(&self, model: &SpecModel, val: impl Fn(u32) -> bool) -> (Action, Vec<u64>) {
        let k = read_value(&self.action, &val) as usize;
        let a = self.actions[k.min(self.actions.len().saturating_sub(1))];
        let mut args = Vec::new();
        if let Action::Call(t) = a {
            let mut off = 0usize;
            for p in &model.tasks[t].params {
                let w = p.ty.width() as usize;
                args.push(read_value(&self.args[off..off + w], &val));
                off += w;
            }
        }
        (a, args)
    }
}

fn can_run(cfa: &crate::cfa::Cfa, loc: usize) -> bool {
    cfa.locations
        .get(loc)
        .is_some_and(|l| matches!(l.kind, LocKind::Initial | LocKind::Pause))
}

fn push_value(out: &mut Vec<(u32, bool)>, bits: &[u32], v: u64) {
    for (b, &i) in bits.iter().enumerate() {
        out.push((i, (v >> b) & 1 == 1));
    }
}

fn read_value(bits: &[u32], val: &impl Fn(u32) -> bool) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (b, &i)| acc | ((val(i) as u64) << b))
}

/// Lays out Boolean variables for `model`.
pub fn encode_vars(model: &SpecModel, cfas: &Cfas) -> Result<VarMap> {
    let mut names = Vec::new();
    let pair = |names: &mut Vec<String>, name: &str, width: u32| -> BitVar {
        let mut cur = vec![0; width as usize];
        let mut next = vec![0; width as usize];
        for b in (0..width as usize).rev() {
            cur[b] = names.len() as u32;
            names.push(format!("{name}[{b}]"));
            next[b] = names.len() as u32;
            names.push(format!("{name}[{b}]'"));
        }
        BitVar {
            name: name.to_string(),
            width,
            cur,
            next,
        }
    };
    let mut vars = Vec::new();
    for v in &model.vars {
        let width = v.ty.width();
        if width > 64 || width == 0 {
            return Err(EncodeError::Width {
                name: v.name.clone(),
                width,
            });
        }
        vars.push(pair(&mut names, &v.name, width));
    }
    let pcs = cfas
        .procs
        .iter()
        .map(|c| {
            pair(
                &mut names,
                &format!("pc.{}", c.name),
                bits_for(c.locations.len() as u32),
            )
        })
        .collect();
    let err = pair(&mut names, "err", 1);
    let fresh = |names: &mut Vec<String>, prefix: &str, n: u32| -> Vec<u32> {
        (0..n)
            .map(|b| {
                names.push(format!("{prefix}[{b}]"));
                names.len() as u32 - 1
            })
            .collect()
    };
    let n_procs = cfas.procs.len() as u32;
    let sched = fresh(
        &mut names,
        "sched",
        if n_procs > 1 { bits_for(n_procs) } else { 0 },
    );
    let n_choice = cfas
        .procs
        .iter()
        .flat_map(|c| (0..c.locations.len()).map(move |l| c.choice_bits(l)))
        .max()
        .unwrap_or(0);
    let choice = fresh(&mut names, "choice", n_choice);
    let mut actions: Vec<Action> = cfas.controllable.keys().map(|&t| Action::Call(t)).collect();
    for c in &cfas.procs {
        if c.locations
            .iter()
            .any(|l| matches!(l.kind, LocKind::Magic(_)))
        {
            actions.push(Action::Exit(c.process));
        }
    }
    let n_act = actions.len() as u32;
    let action = fresh(
        &mut names,
        "action",
        if n_act > 1 { bits_for(n_act) } else { 0 },
    );
    let n_args = cfas
        .controllable
        .keys()
        .map(|&t| {
            model.tasks[t]
                .params
                .iter()
                .map(|p| p.ty.width())
                .sum::<u32>()
        })
        .max()
        .unwrap_or(0);
    let args = fresh(&mut names, "arg", n_args);
    Ok(VarMap {
        vars,
        pcs,
        err,
        sched,
        choice,
        action,
        args,
        actions,
        names,
    })
}

type Bv = Vec<NodeRef>;

#[derive(Clone)]
struct Store {
    vars: Vec<Bv>,
    locals: Vec<Bv>,
}

/// Outcome of symbolically running a program from one instruction.
struct Run {
    /// (stop instruction, path condition, store at the stop)
    stops: Vec<(usize, NodeRef, Store)>,
    fail: NodeRef,
}

/// Builds the relations of a game over a [`VarMap`].
pub struct Encoder<'a> {
    pub mgr: Manager,
    pub model: &'a SpecModel,
    pub cfas: &'a Cfas,
    pub map: VarMap,
    t: NodeRef,
    f: NodeRef,
}

impl<'a> Encoder<'a> {
    pub fn new(
        model: &'a SpecModel,
        cfas: &'a Cfas,
        map: VarMap,
        node_limit: usize,
    ) -> Result<Self> {
        let vars = game_vars(&map);
        let mgr = SymbolicGame::manager_for(&vars, node_limit)?;
        let t = mgr.constant(true);
        let f = mgr.constant(false);
        Ok(Encoder {
            mgr,
            model,
            cfas,
            map,
            t,
            f,
        })
    }

    fn bits(&mut self, idx: &[u32]) -> Result<Bv> {
        Ok(idx
            .iter()
            .map(|&i| self.mgr.var(i))
            .collect::<std::result::Result<_, _>>()?)
    }

    fn konst(&self, v: u64, w: u32) -> Bv {
        (0..w)
            .map(|b| if (v >> b) & 1 == 1 { self.t } else { self.f })
            .collect()
    }

    /// `bits == v` as a BDD.
    pub fn eq_const(&mut self, idx: &[u32], v: u64) -> Result<NodeRef> {
        let lits: Vec<(u32, bool)> = idx
            .iter()
            .enumerate()
            .map(|(b, &i)| (i, (v >> b) & 1 == 1))
            .collect();
        if idx.len() < 64 && v >> idx.len() != 0 {
            return Ok(self.f);
        }
        Ok(self.mgr.cube_lits(&lits)?)
    }

    /// `bits < bound` (unsigned).
    pub fn lt_const(&mut self, idx: &[u32], bound: u64) -> Result<NodeRef> {
        if idx.len() < 64 && bound >= 1u64 << idx.len() {
            return Ok(self.t);
        }
        let a = self.bits(idx)?;
        let b = self.konst(bound, idx.len() as u32);
        self.ult(&a, &b)
    }

    fn bv_eq(&mut self, a: &Bv, b: &Bv) -> Result<NodeRef> {
        let n = a.len().max(b.len());
        let mut acc = self.t;
        for i in 0..n {
            let x = a.get(i).copied().unwrap_or(self.f);
            let y = b.get(i).copied().unwrap_or(self.f);
            let e = self.mgr.iff(x, y)?;
            acc = self.mgr.and(acc, e)?;
        }
        Ok(acc)
    }

    fn ult(&mut self, a: &Bv, b: &Bv) -> Result<NodeRef> {
        let n = a.len().max(b.len());
        let mut lt = self.f;
        for i in 0..n {
            let x = a.get(i).copied().unwrap_or(self.f);
            let y = b.get(i).copied().unwrap_or(self.f);
            let nx = self.mgr.not(x)?;
            let here = self.mgr.and(nx, y)?;
            let same = self.mgr.iff(x, y)?;
            let carry = self.mgr.and(same, lt)?;
            lt = self.mgr.or(here, carry)?;
        }
        Ok(lt)
    }

    fn fit(&self, mut v: Bv, w: u32) -> Bv {
        v.resize(w as usize, self.f);
        v
    }

    fn eval(&mut self, e: &MExpr, st: &Store, layout: Option<&BTreeMap<usize, u32>>) -> Result<Bv> {
        let w = e.ty.width();
        Ok(match &e.kind {
            MExprKind::Const(v) => self.konst(*v & mask(w), w),
            MExprKind::Var(v) => st.vars[*v].clone(),
            MExprKind::Local(s) => {
                let v = st.locals.get(*s).cloned().unwrap_or_default();
                self.fit(v, w)
            }
            MExprKind::Choice(c) => {
                let off = *layout
                    .and_then(|l| l.get(c))
                    .expect("choice outside its segment layout") as usize;
                let idx = self.map.choice[off..off + w as usize].to_vec();
                self.bits(&idx)?
            }
            MExprKind::Param(_) | MExprKind::Nondet => {
                panic!("expression not compiled: {:?}", e.kind)
            }
            MExprKind::Not(a) => {
                let a = self.eval(a, st, layout)?;
                vec![self.mgr.not(a[0])?]
            }
            MExprKind::Bin(op, a, b) => {
                let a = self.eval(a, st, layout)?;
                let b = self.eval(b, st, layout)?;
                let r = match op {
                    BinOp::And => self.mgr.and(a[0], b[0])?,
                    BinOp::Or => self.mgr.or(a[0], b[0])?,
                    BinOp::Eq => self.bv_eq(&a, &b)?,
                    BinOp::Ne => {
                        let e = self.bv_eq(&a, &b)?;
                        self.mgr.not(e)?
                    }
                    BinOp::Lt => self.ult(&a, &b)?,
                    BinOp::Gt => self.ult(&b, &a)?,
                    BinOp::Le => {
                        let g = self.ult(&b, &a)?;
                        self.mgr.not(g)?
                    }
                    BinOp::Ge => {
                        let l = self.ult(&a, &b)?;
                        self.mgr.not(l)?
                    }
                };
                vec![r]
            }
            MExprKind::Slice(a, hi, lo) => {
                let a = self.eval(a, st, layout)?;
                let a = self.fit(a, hi + 1);
                a[*lo as usize..=*hi as usize].to_vec()
            }
        })
    }

    /// Boolean value of a condition over the current state.
    pub fn state_predicate(&mut self, e: &MExpr) -> Result<NodeRef> {
        let st = self.current_store()?;
        Ok(self.eval(e, &st, None)?[0])
    }

    fn current_store(&mut self) -> Result<Store> {
        let cur: Vec<Vec<u32>> = self.map.vars.iter().map(|v| v.cur.clone()).collect();
        let vars = cur.iter().map(|c| self.bits(c)).collect::<Result<_>>()?;
        Ok(Store {
            vars,
            locals: Vec::new(),
        })
    }

    fn merge(&mut self, r: NodeRef, new: &Store, old: &Store) -> Result<Store> {
        let mut out = old.clone();
        for (o, n) in out.vars.iter_mut().zip(&new.vars) {
            for (ob, &nb) in o.iter_mut().zip(n) {
                *ob = self.mgr.ite(r, nb, *ob)?;
            }
        }
        if out.locals.len() < new.locals.len() {
            out.locals.resize(new.locals.len(), Vec::new());
        }
        for (k, n) in new.locals.iter().enumerate() {
            let o = self.fit(out.locals[k].clone(), n.len() as u32);
            let mut m = Vec::with_capacity(n.len());
            for (&ob, &nb) in o.iter().zip(n) {
                m.push(self.mgr.ite(r, nb, ob)?);
            }
            out.locals[k] = m;
        }
        Ok(out)
    }

    fn run(
        &mut self,
        prog: &Program,
        start: usize,
        init: Store,
        layout: Option<&BTreeMap<usize, u32>>,
    ) -> Result<Run> {
        let order = topo_order(prog, start);
        let mut pending: BTreeMap<usize, (NodeRef, Store)> = BTreeMap::new();
        pending.insert(start, (self.t, init));
        let mut run = Run {
            stops: Vec::new(),
            fail: self.f,
        };
        for i in order {
            let Some((r, mut st)) = pending.remove(&i) else {
                continue;
            };
            if r.is_false() {
                continue;
            }
            let mut flow: Vec<(usize, NodeRef, Store)> = Vec::new();
            match &prog.instrs[i] {
                Instr::Assign { var, slice, rhs } => {
                    let v = self.eval(rhs, &st, layout)?;
                    let w = self.model.vars[*var].ty.width();
                    match slice {
                        None => st.vars[*var] = self.fit(v, w),
                        Some((hi, lo)) => {
                            let v = self.fit(v, hi - lo + 1);
                            for (k, b) in v.into_iter().enumerate() {
                                st.vars[*var][*lo as usize + k] = b;
                            }
                        }
                    }
                    flow.push((i + 1, r, st));
                }
                Instr::SetLocal { slot, rhs } => {
                    let v = self.eval(rhs, &st, layout)?;
                    if st.locals.len() <= *slot {
                        st.locals.resize(slot + 1, Vec::new());
                    }
                    st.locals[*slot] = v;
                    flow.push((i + 1, r, st));
                }
                Instr::Assert(c) => {
                    let c = self.eval(c, &st, layout)?[0];
                    let bad = self.mgr.diff(r, c)?;
                    run.fail = self.mgr.or(run.fail, bad)?;
                    let ok = self.mgr.and(r, c)?;
                    flow.push((i + 1, ok, st));
                }
                Instr::Branch { cond, else_target } => {
                    let c = self.eval(cond, &st, layout)?[0];
                    let yes = self.mgr.and(r, c)?;
                    let no = self.mgr.diff(r, c)?;
                    flow.push((i + 1, yes, st.clone()));
                    flow.push((*else_target, no, st));
                }
                Instr::Jump(t) => flow.push((*t, r, st)),
                Instr::Pause | Instr::Magic(_) | Instr::End => run.stops.push((i, r, st)),
            }
            for (j, r, st) in flow {
                if r.is_false() {
                    continue;
                }
                let merged = match pending.remove(&j) {
                    None => (r, st),
                    Some((r0, st0)) => {
                        let m = self.merge(r, &st, &st0)?;
                        (self.mgr.or(r, r0)?, m)
                    }
                };
                pending.insert(j, merged);
            }
        }
        Ok(run)
    }

    /// `x'_v = x_v` for every program variable.
    fn ident_vars(&mut self) -> Result<NodeRef> {
        let pairs: Vec<(Vec<u32>, Vec<u32>)> = self
            .map
            .vars
            .iter()
            .map(|v| (v.cur.clone(), v.next.clone()))
            .collect();
        self.ident(&pairs)
    }

    fn ident(&mut self, pairs: &[(Vec<u32>, Vec<u32>)]) -> Result<NodeRef> {
        let mut acc = self.t;
        for (c, n) in pairs.iter().rev() {
            for (&a, &b) in c.iter().zip(n).rev() {
                let x = self.mgr.var(a)?;
                let y = self.mgr.var(b)?;
                let e = self.mgr.iff(x, y)?;
                acc = self.mgr.and(e, acc)?;
            }
        }
        Ok(acc)
    }

    fn ident_pcs_except(&mut self, skip: Option<ProcId>) -> Result<NodeRef> {
        let pairs: Vec<(Vec<u32>, Vec<u32>)> = self
            .map
            .pcs
            .iter()
            .enumerate()
            .filter(|(q, _)| Some(*q) != skip)
            .map(|(_, v)| (v.cur.clone(), v.next.clone()))
            .collect();
        self.ident(&pairs)
    }

    fn next_store_eq(&mut self, st: &Store) -> Result<NodeRef> {
        let mut acc = self.t;
        for k in (0..st.vars.len()).rev() {
            let next = self.map.vars[k].next.clone();
            for (b, &i) in next.iter().enumerate().rev() {
                let x = self.mgr.var(i)?;
                let e = self.mgr.iff(x, st.vars[k][b])?;
                acc = self.mgr.and(e, acc)?;
            }
        }
        Ok(acc)
    }

    fn pc_is(&mut self, p: ProcId, l: usize, next: bool) -> Result<NodeRef> {
        let v = &self.map.pcs[p];
        let idx = if next { v.next.clone() } else { v.cur.clone() };
        self.eq_const(&idx, l as u64)
    }

    fn err_lit(&mut self, next: bool, value: bool) -> Result<NodeRef> {
        let i = if next {
            self.map.err.next[0]
        } else {
            self.map.err.cur[0]
        };
        Ok(self.mgr.literal(i, value)?)
    }

    /// Relation of a run's outcome: stops update the data variables (and
    /// `pc_p` through `stop_loc`, when given); failures only raise `err`.
    /// Program counters other than `pc_p` are left to the caller.
    fn outcome(&mut self, run: &Run, p: Option<(ProcId, usize)>) -> Result<NodeRef> {
        let ok_err = self.err_lit(true, false)?;
        let mut rel = self.f;
        for (i, r, st) in &run.stops {
            let mut t = self.next_store_eq(st)?;
            if let Some((p, _)) = p {
                let loc = self.cfas.procs[p].stop_loc[i];
                let pc = self.pc_is(p, loc, true)?;
                t = self.mgr.and(t, pc)?;
            }
            t = self.mgr.and(t, ok_err)?;
            t = self.mgr.and(t, *r)?;
            rel = self.mgr.or(rel, t)?;
        }
        if !run.fail.is_false() {
            let mut t = self.ident_vars()?;
            if let Some((p, l)) = p {
                let pc = self.pc_is(p, l, true)?;
                t = self.mgr.and(t, pc)?;
            }
            let e = self.err_lit(true, true)?;
            t = self.mgr.and(t, e)?;
            t = self.mgr.and(t, run.fail)?;
            rel = self.mgr.or(rel, t)?;
        }
        Ok(rel)
    }

    /// Transition relation of the segment leaving location `l` of process
    /// `p`, including the frame on other program counters.
    fn segment(&mut self, p: ProcId, l: usize) -> Result<NodeRef> {
        let cfas = self.cfas;
        let cfa = &cfas.procs[p];
        let init = self.current_store()?;
        let run = self.run(
            &cfa.program,
            cfa.locations[l].resume,
            init,
            Some(&cfa.choice_layout[l]),
        )?;
        let rel = self.outcome(&run, Some((p, l)))?;
        let frame = self.ident_pcs_except(Some(p))?;
        Ok(self.mgr.and(rel, frame)?)
    }

    fn zero(&mut self, idx: &[u32]) -> Result<NodeRef> {
        let lits: Vec<(u32, bool)> = idx.iter().map(|&i| (i, false)).collect();
        Ok(self.mgr.cube_lits(&lits)?)
    }

    /// Legal choice bits at location `l` of `p`: enum choices in range and
    /// bits not read by the segment zero.
    fn choices_ok(&mut self, p: ProcId, l: usize) -> Result<NodeRef> {
        let cfas = self.cfas;
        let cfa = &cfas.procs[p];
        let used = cfa.choice_bits(l) as usize;
        let unused = self.map.choice[used..].to_vec();
        let mut acc = self.zero(&unused)?;
        for (&c, &off) in &cfa.choice_layout[l] {
            if let Type::Enum { size, .. } = cfa.program.choices[c] {
                let w = cfa.program.choices[c].width() as usize;
                let idx = self.map.choice[off as usize..off as usize + w].to_vec();
                let ok = self.lt_const(&idx, size as u64)?;
                acc = self.mgr.and(acc, ok)?;
            }
        }
        Ok(acc)
    }

    /// Process `p` is at an initial or pause location and no error occurred.
    pub fn runnable(&mut self, p: ProcId) -> Result<NodeRef> {
        let cfas = self.cfas;
        let mut acc = self.f;
        for loc in &cfas.procs[p].locations {
            if matches!(loc.kind, LocKind::Initial | LocKind::Pause) {
                let at = self.pc_is(p, loc.id, false)?;
                acc = self.mgr.or(acc, at)?;
            }
        }
        let ok = self.err_lit(false, false)?;
        Ok(self.mgr.and(acc, ok)?)
    }

    pub fn error(&mut self) -> Result<NodeRef> {
        self.err_lit(false, true)
    }

    /// Some process waits in a magic block and no error occurred.
    pub fn turn(&mut self) -> Result<NodeRef> {
        let cfas = self.cfas;
        let mut acc = self.f;
        for (p, cfa) in cfas.procs.iter().enumerate() {
            for loc in &cfa.locations {
                if matches!(loc.kind, LocKind::Magic(_)) {
                    let at = self.pc_is(p, loc.id, false)?;
                    acc = self.mgr.or(acc, at)?;
                }
            }
        }
        let ok = self.err_lit(false, false)?;
        Ok(self.mgr.and(acc, ok)?)
    }

    fn sched_is(&mut self, p: ProcId) -> Result<NodeRef> {
        let idx = self.map.sched.clone();
        self.eq_const(&idx, p as u64)
    }

    pub fn init(&mut self) -> Result<NodeRef> {
        let mut acc = self.err_lit(false, false)?;
        for p in 0..self.map.pcs.len() {
            let at = self.pc_is(p, 0, false)?;
            acc = self.mgr.and(acc, at)?;
        }
        let model = self.model;
        for (k, v) in model.vars.iter().enumerate() {
            let idx = self.map.vars[k].cur.clone();
            let c = match (v.init, &v.ty) {
                (Some(x), _) => self.eq_const(&idx, x)?,
                (None, Type::Enum { size, .. }) => self.lt_const(&idx, *size as u64)?,
                _ => continue,
            };
            acc = self.mgr.and(acc, c)?;
        }
        Ok(acc)
    }

    pub fn delta_u(&mut self) -> Result<NodeRef> {
        let n = self.cfas.procs.len();
        let stutter = {
            let a = self.ident_vars()?;
            let b = self.ident_pcs_except(None)?;
            let e = {
                let x = self.err_lit(false, true)?;
                let y = self.err_lit(true, true)?;
                self.mgr.iff(x, y)?
            };
            let ab = self.mgr.and(a, b)?;
            self.mgr.and(ab, e)?
        };
        let choice = self.map.choice.clone();
        let no_choice = self.zero(&choice)?;
        let idle = self.mgr.and(stutter, no_choice)?;
        let sched_ok = {
            let idx = self.map.sched.clone();
            self.lt_const(&idx, n.max(1) as u64)?
        };
        let mut moves = self.f;
        for p in 0..n {
            let mut run_p = self.f;
            let cfas = self.cfas;
            for loc in &cfas.procs[p].locations {
                if !matches!(loc.kind, LocKind::Initial | LocKind::Pause) {
                    continue;
                }
                let at = self.pc_is(p, loc.id, false)?;
                let seg = self.segment(p, loc.id)?;
                let ok = self.choices_ok(p, loc.id)?;
                let t = self.mgr.and_all([at, seg, ok])?;
                run_p = self.mgr.or(run_p, t)?;
            }
            let runnable = self.runnable(p)?;
            let nr = self.mgr.not(runnable)?;
            let stay = self.mgr.and(nr, idle)?;
            let body = self.mgr.or(run_p, stay)?;
            let sel = self.sched_is(p)?;
            let t = self.mgr.and(sel, body)?;
            moves = self.mgr.or(moves, t)?;
        }
        if n == 0 {
            moves = idle;
        }
        let ok = self.err_lit(false, false)?;
        let live = self.mgr.and(ok, moves)?;
        let bad = self.err_lit(false, true)?;
        let dead = self.mgr.and(bad, idle)?;
        let body = self.mgr.or(live, dead)?;
        let turn = self.turn()?;
        let nt = self.mgr.not(turn)?;
        Ok(self.mgr.and_all([nt, sched_ok, body])?)
    }

    fn args_ok(&mut self, t: TaskId) -> Result<NodeRef> {
        let model = self.model;
        let mut acc = self.t;
        let mut off = 0usize;
        for p in &model.tasks[t].params {
            let w = p.ty.width() as usize;
            if let Type::Enum { size, .. } = p.ty {
                let idx = self.map.args[off..off + w].to_vec();
                let ok = self.lt_const(&idx, size as u64)?;
                acc = self.mgr.and(acc, ok)?;
            }
            off += w;
        }
        let rest = self.map.args[off..].to_vec();
        let z = self.zero(&rest)?;
        Ok(self.mgr.and(acc, z)?)
    }

    fn call_move(&mut self, t: TaskId) -> Result<NodeRef> {
        let cfas = self.cfas;
        let prog = &cfas.controllable[&t];
        let mut init = self.current_store()?;
        let model = self.model;
        let mut off = 0usize;
        for p in &model.tasks[t].params {
            let w = p.ty.width() as usize;
            let idx = self.map.args[off..off + w].to_vec();
            init.locals.push(self.bits(&idx)?);
            off += w;
        }
        let run = self.run(prog, 0, init, None)?;
        let rel = self.outcome(&run, None)?;
        let frame = self.ident_pcs_except(None)?;
        let ok = self.args_ok(t)?;
        Ok(self.mgr.and_all([rel, frame, ok])?)
    }

    fn exit_move(&mut self, p: ProcId) -> Result<NodeRef> {
        let cfas = self.cfas;
        let mut acc = self.f;
        for loc in &cfas.procs[p].locations {
            if matches!(loc.kind, LocKind::Magic(_)) {
                let at = self.pc_is(p, loc.id, false)?;
                let seg = self.segment(p, loc.id)?;
                let t = self.mgr.and(at, seg)?;
                acc = self.mgr.or(acc, t)?;
            }
        }
        let args = self.map.args.clone();
        let z = self.zero(&args)?;
        Ok(self.mgr.and(acc, z)?)
    }

    pub fn delta_c(&mut self) -> Result<NodeRef> {
        let mut acc = self.f;
        let actions = self.map.actions.clone();
        for (k, a) in actions.iter().enumerate() {
            let m = match *a {
                Action::Call(t) => self.call_move(t)?,
                Action::Exit(p) => self.exit_move(p)?,
            };
            let idx = self.map.action.clone();
            let sel = self.eq_const(&idx, k as u64)?;
            let t = self.mgr.and(sel, m)?;
            acc = self.mgr.or(acc, t)?;
        }
        let turn = self.turn()?;
        Ok(self.mgr.and(turn, acc)?)
    }

    /// One region per goal declaration, conjoined with `¬err ∧ ¬turn`; a
    /// single `¬err ∧ ¬turn` region when there are none. One fairness
    /// condition per process, `sched = p ∨ ¬runnable(p)`.
    pub fn goals_fairness(&mut self) -> Result<(Vec<(String, NodeRef)>, Vec<(String, NodeRef)>)> {
        let ok = self.err_lit(false, false)?;
        let turn = self.turn()?;
        let nt = self.mgr.not(turn)?;
        let base = self.mgr.and(ok, nt)?;
        let model = self.model;
        let mut goals = Vec::new();
        for g in &model.goals {
            let e = self.state_predicate(&g.expr)?;
            goals.push((g.name.clone(), self.mgr.and(e, base)?));
        }
        if goals.is_empty() {
            goals.push(("true".to_string(), base));
        }
        let mut fairness = Vec::new();
        for p in 0..self.cfas.procs.len() {
            let sel = self.sched_is(p)?;
            let r = self.runnable(p)?;
            let nr = self.mgr.not(r)?;
            fairness.push((self.cfas.procs[p].name.clone(), self.mgr.or(sel, nr)?));
        }
        if fairness.is_empty() {
            fairness.push(("true".to_string(), self.t));
        }
        Ok((goals, fairness))
    }

    pub fn finish(mut self) -> Result<Encoding> {
        let init = self.init()?;
        let turn = self.turn()?;
        let error = self.error()?;
        let du = self.delta_u()?;
        let dc = self.delta_c()?;
        let (goals, fairness) = self.goals_fairness()?;
        let vars = game_vars(&self.map);
        let game = SymbolicGame::new(self.mgr, vars, init, turn, error, du, dc, goals, fairness)?;
        Ok(Encoding {
            game,
            map: self.map,
        })
    }
}

fn game_vars(map: &VarMap) -> GameVars {
    GameVars {
        x: map.x(),
        xp: map.xp(),
        yu: map.yu(),
        yc: map.yc(),
        names: map.names.clone(),
    }
}

/// Reverse post-order of the instructions reachable from `start` (the
/// region is acyclic once stops are cut).
fn topo_order(prog: &Program, start: usize) -> Vec<usize> {
    let mut seen = vec![false; prog.instrs.len()];
    let mut post = Vec::new();
    let mut stack = vec![(start, 0usize)];
    seen[start] = true;
    while let Some(&(i, k)) = stack.last() {
        let succ = prog.successors(i);
        if k < succ.len() {
            stack.last_mut().expect("non-empty").1 += 1;
            let j = succ[k];
            if !seen[j] {
                seen[j] = true;
                stack.push((j, 0));
            }
        } else {
            post.push(i);
            stack.pop();
        }
    }
    post.reverse();
    post
}

/// A game together with the map relating it to the program.
#[derive(Clone)]
pub struct Encoding {
    pub game: SymbolicGame,
    pub map: VarMap,
}

impl Encoding {
    pub fn stats(&self) -> EncodingStats {
        let g = &self.game;
        let size = |f: NodeRef| g.mgr.node_count(f);
        EncodingStats {
            state_bits: self.map.state_bits(),
            data_bits: self.map.data_bits(),
            env_action_bits: self.map.yu().len() as u32,
            ctrl_action_bits: self.map.yc().len() as u32,
            init_nodes: size(g.init),
            delta_u_nodes: size(g.delta_u),
            delta_c_nodes: size(g.delta_c),
            goal_nodes: g.goals.iter().map(|&f| size(f)).collect(),
            fairness_nodes: g.fairness.iter().map(|&f| size(f)).collect(),
            allocated: g.mgr.allocated(),
        }
    }

    /// Boolean value of `e` over the current state, as a BDD in the game's
    /// manager.
    pub fn predicate(&mut self, model: &SpecModel, cfas: &Cfas, e: &MExpr) -> Result<NodeRef> {
        let mgr = std::mem::replace(&mut self.game.mgr, Manager::new(0));
        let t = mgr.constant(true);
        let f = mgr.constant(false);
        let mut enc = Encoder {
            mgr,
            model,
            cfas,
            map: self.map.clone(),
            t,
            f,
        };
        let r = enc.state_predicate(e);
        self.game.mgr = enc.mgr;
        r
    }

    /// States with process `p` at location `l`, for any listed pair.
    pub fn at_locations(&mut self, locs: &[(ProcId, usize)]) -> Result<NodeRef> {
        let mgr = &mut self.game.mgr;
        let mut acc = mgr.constant(false);
        for &(p, l) in locs {
            let lits: Vec<(u32, bool)> = self.map.pcs[p]
                .cur
                .iter()
                .enumerate()
                .map(|(b, &i)| (i, (l >> b) & 1 == 1))
                .collect();
            let c = mgr.cube_lits(&lits)?;
            acc = mgr.or(acc, c)?;
        }
        Ok(acc)
    }

    /// The single state `s` as a BDD over `X`.
    pub fn state_bdd(&mut self, s: &ProgState) -> Result<NodeRef> {
        Ok(self.game.mgr.cube_lits(&self.map.state_lits(s))?)
    }

    /// Some state of `set`, chosen by the low-first policy.
    pub fn pick_state(&self, set: NodeRef) -> Option<ProgState> {
        let xs = self.map.x();
        let bits = self.game.mgr.pick_cube(set, &xs, CubePolicy::PreferLow)?;
        let val: BTreeMap<u32, bool> = xs.into_iter().zip(bits).collect();
        Some(
            self.map
                .decode_state(|i| val.get(&i).copied().unwrap_or(false)),
        )
    }

    /// Whether `(s, mv, t)` is a transition of the game.
    pub fn holds(
        &mut self,
        model: &SpecModel,
        cfas: &Cfas,
        s: &ProgState,
        mv: &Move,
        t: &ProgState,
    ) -> Result<bool> {
        let mut lits = self.map.state_lits(s);
        lits.extend(self.map.move_lits(model, cfas, s, mv));
        lits.extend(self.map.next_lits(t));
        let rel = match mv {
            Move::Env { .. } => self.game.delta_u,
            Move::Ctrl { .. } => self.game.delta_c,
        };
        let val: BTreeMap<u32, bool> = lits.into_iter().collect();
        Ok(self
            .game
            .mgr
            .eval(rel, |i| val.get(&i).copied().unwrap_or(false)))
    }

    /// Variable map plus relation sizes.
    pub fn dump_json(&self) -> serde_json::Value {
        serde_json::json!({
            "varmap": self.map,
            "stats": self.stats(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingStats {
    pub state_bits: u32,
    pub data_bits: u32,
    pub env_action_bits: u32,
    pub ctrl_action_bits: u32,
    pub init_nodes: usize,
    pub delta_u_nodes: usize,
    pub delta_c_nodes: usize,
    pub goal_nodes: Vec<usize>,
    pub fairness_nodes: Vec<usize>,
    pub allocated: usize,
}

pub fn encode(model: &SpecModel, cfas: &Cfas, node_limit: usize) -> Result<Encoding> {
    let map = encode_vars(model, cfas)?;
    Encoder::new(model, cfas, map, node_limit)?.finish()
}
