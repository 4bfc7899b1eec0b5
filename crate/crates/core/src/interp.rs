//! Concrete reference semantics of compiled programs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cfa::{Cfas, Instr, LocKind, Program};
use crate::encode::Action;
use crate::frontend::ast::BinOp;
use crate::frontend::{Pos, Type};
use crate::model::{MExpr, MExprKind, ProcId, SpecModel, TaskId, VarId};

/// Supplies values for `*` occurrences.
pub trait ChoiceSource {
    fn choose(&mut self, choice: usize, ty: &Type) -> u64;
}

/// Uniformly random legal values.
pub struct RandomChoices<R: Rng>(pub R);

impl<R: Rng> ChoiceSource for RandomChoices<R> {
    fn choose(&mut self, _choice: usize, ty: &Type) -> u64 {
        random_value(&mut self.0, ty)
    }
}

pub fn random_value(rng: &mut impl Rng, ty: &Type) -> u64 {
    match ty {
        Type::Uint(64) => rng.gen(),
        _ => rng.gen_range(0..ty.cardinality()),
    }
}

/// Values fixed per choice id; missing ids read as zero.
pub struct FixedChoices(pub std::collections::BTreeMap<usize, u64>);

impl ChoiceSource for FixedChoices {
    fn choose(&mut self, choice: usize, _ty: &Type) -> u64 {
        self.0.get(&choice).copied().unwrap_or(0)
    }
}

/// Fails loudly: for code that must be deterministic.
pub struct NoChoices;

impl ChoiceSource for NoChoices {
    fn choose(&mut self, choice: usize, _ty: &Type) -> u64 {
        panic!("unexpected nondeterministic choice {choice}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProgState {
    pub vars: Vec<u64>,
    pub pcs: Vec<usize>,
    pub err: bool,
}

/// One game move in concrete terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Move {
    /// Process `process` runs one segment with the given `*` values.
    Env {
        process: ProcId,
        choices: std::collections::BTreeMap<usize, u64>,
    },
    /// The controller calls a controllable task or exits a magic block.
    Ctrl { action: Action, args: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Write { var: VarId, value: u64 },
    Local { slot: usize, value: u64 },
    Branch { taken: bool },
    Assert { holds: bool },
    Stop,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub instr: usize,
    pub pos: Pos,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunEnd {
    /// Stopped at a pause, magic block or end instruction.
    Stop(usize),
    AssertFail(usize),
}

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

pub fn eval(e: &MExpr, vars: &[u64], locals: &[u64], choices: &mut dyn ChoiceSource) -> u64 {
    match &e.kind {
        MExprKind::Const(v) => *v,
        MExprKind::Var(v) => vars[*v],
        MExprKind::Local(s) => locals[*s],
        MExprKind::Choice(c) => choices.choose(*c, &e.ty) & mask(e.ty.width()),
        MExprKind::Param(_) | MExprKind::Nondet => {
            panic!("expression not compiled: {:?}", e.kind)
        }
        MExprKind::Not(a) => (eval(a, vars, locals, choices) == 0) as u64,
        MExprKind::Bin(op, a, b) => {
            let x = eval(a, vars, locals, choices);
            // Both operands are evaluated so that choice consumption does not
            // depend on short-circuiting.
            let y = eval(b, vars, locals, choices);
            let r = match op {
                BinOp::And => x != 0 && y != 0,
                BinOp::Or => x != 0 || y != 0,
                BinOp::Eq => x == y,
                BinOp::Ne => x != y,
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                BinOp::Ge => x >= y,
            };
            r as u64
        }
        MExprKind::Slice(a, hi, lo) => (eval(a, vars, locals, choices) >> lo) & mask(hi - lo + 1),
    }
}

pub fn write_var(vars: &mut [u64], ty: &Type, var: VarId, slice: Option<(u32, u32)>, value: u64) {
    match slice {
        None => vars[var] = value & mask(ty.width()),
        Some((hi, lo)) => {
            let m = mask(hi - lo + 1) << lo;
            vars[var] = (vars[var] & !m) | ((value << lo) & m);
        }
    }
}

/// Runs `prog` from instruction `start` until it stops or an assertion
/// fails. Events are appended to `events` when given.
pub fn run_program(
    model: &SpecModel,
    prog: &Program,
    start: usize,
    vars: &mut [u64],
    locals: &mut Vec<u64>,
    choices: &mut dyn ChoiceSource,
    mut events: Option<&mut Vec<StepEvent>>,
) -> RunEnd {
    if locals.len() < prog.n_locals {
        locals.resize(prog.n_locals, 0);
    }
    let mut pc = start;
    loop {
        let pos = prog.pos[pc];
        let mut emit = |kind: EventKind| {
            if let Some(ev) = events.as_deref_mut() {
                ev.push(StepEvent {
                    instr: pc,
                    pos,
                    kind,
                });
            }
        };
        match &prog.instrs[pc] {
            Instr::Assign { var, slice, rhs } => {
                let v = eval(rhs, vars, locals, choices);
                write_var(vars, &model.vars[*var].ty, *var, *slice, v);
                emit(EventKind::Write {
                    var: *var,
                    value: vars[*var],
                });
                pc += 1;
            }
            Instr::SetLocal { slot, rhs } => {
                let v = eval(rhs, vars, locals, choices);
                locals[*slot] = v;
                emit(EventKind::Local {
                    slot: *slot,
                    value: v,
                });
                pc += 1;
            }
            Instr::Assert(c) => {
                let holds = eval(c, vars, locals, choices) != 0;
                emit(EventKind::Assert { holds });
                if !holds {
                    return RunEnd::AssertFail(pc);
                }
                pc += 1;
            }
            Instr::Branch { cond, else_target } => {
                let taken = eval(cond, vars, locals, choices) != 0;
                emit(EventKind::Branch { taken });
                pc = if taken { pc + 1 } else { *else_target };
            }
            Instr::Jump(t) => pc = *t,
            Instr::Pause | Instr::Magic(_) | Instr::End => {
                emit(EventKind::Stop);
                return RunEnd::Stop(pc);
            }
        }
    }
}

/// Executable view of a compiled specification.
pub struct Interp<'a> {
    pub model: &'a SpecModel,
    pub cfas: &'a Cfas,
}

impl<'a> Interp<'a> {
    pub fn new(model: &'a SpecModel, cfas: &'a Cfas) -> Self {
        Interp { model, cfas }
    }

    /// Initial state with uninitialised variables taken from `fill`.
    pub fn initial_state(&self, mut fill: impl FnMut(VarId, &Type) -> u64) -> ProgState {
        let vars = self
            .model
            .vars
            .iter()
            .enumerate()
            .map(|(k, v)| v.init.unwrap_or_else(|| fill(k, &v.ty)))
            .collect();
        ProgState {
            vars,
            pcs: vec![0; self.cfas.procs.len()],
            err: false,
        }
    }

    pub fn is_turn(&self, s: &ProgState) -> bool {
        !s.err
            && s.pcs
                .iter()
                .enumerate()
                .any(|(p, &l)| self.cfas.procs[p].is_magic(l))
    }

    pub fn runnable(&self, s: &ProgState, p: ProcId) -> bool {
        let cfa = &self.cfas.procs[p];
        !s.err
            && matches!(
                cfa.locations[s.pcs[p]].kind,
                LocKind::Initial | LocKind::Pause
            )
    }

    /// Environment move: process `p` runs one segment. Errors, deadlocks and
    /// non-runnable selections stutter.
    pub fn env_step(
        &self,
        s: &ProgState,
        p: ProcId,
        choices: &mut dyn ChoiceSource,
        events: Option<&mut Vec<StepEvent>>,
    ) -> ProgState {
        if self.is_turn(s) || !self.runnable(s, p) {
            return s.clone();
        }
        let cfa = &self.cfas.procs[p];
        let start = cfa.locations[s.pcs[p]].resume;
        self.run_segment(s, p, start, choices, events)
    }

    fn run_segment(
        &self,
        s: &ProgState,
        p: ProcId,
        start: usize,
        choices: &mut dyn ChoiceSource,
        events: Option<&mut Vec<StepEvent>>,
    ) -> ProgState {
        let cfa = &self.cfas.procs[p];
        let mut next = s.clone();
        let mut locals = Vec::new();
        match run_program(
            self.model,
            &cfa.program,
            start,
            &mut next.vars,
            &mut locals,
            choices,
            events,
        ) {
            RunEnd::Stop(i) => {
                next.pcs[p] = cfa.stop_loc[&i];
                next
            }
            RunEnd::AssertFail(_) => {
                let mut e = s.clone();
                e.err = true;
                e
            }
        }
    }

    /// Controller move: invoke controllable task `t` with `args`. The
    /// process stays at its magic location.
    pub fn ctrl_call(
        &self,
        s: &ProgState,
        t: TaskId,
        args: &[u64],
        events: Option<&mut Vec<StepEvent>>,
    ) -> ProgState {
        let prog = &self.cfas.controllable[&t];
        let mut next = s.clone();
        let mut locals = args.to_vec();
        match run_program(
            self.model,
            prog,
            0,
            &mut next.vars,
            &mut locals,
            &mut NoChoices,
            events,
        ) {
            RunEnd::Stop(_) => next,
            RunEnd::AssertFail(_) => {
                let mut e = s.clone();
                e.err = true;
                e
            }
        }
    }

    /// Controller move: leave the magic block of process `p`.
    pub fn ctrl_exit(
        &self,
        s: &ProgState,
        p: ProcId,
        events: Option<&mut Vec<StepEvent>>,
    ) -> ProgState {
        let cfa = &self.cfas.procs[p];
        let start = cfa.locations[s.pcs[p]].resume;
        self.run_segment(s, p, start, &mut NoChoices, events)
    }

    /// Successor of `s` under `mv`, which must be a move of the player
    /// owning `s`.
    pub fn apply(
        &self,
        s: &ProgState,
        mv: &Move,
        events: Option<&mut Vec<StepEvent>>,
    ) -> ProgState {
        match mv {
            Move::Env { process, choices } => {
                self.env_step(s, *process, &mut FixedChoices(choices.clone()), events)
            }
            Move::Ctrl {
                action: Action::Call(t),
                args,
            } => self.ctrl_call(s, *t, args, events),
            Move::Ctrl {
                action: Action::Exit(p),
                ..
            } => self.ctrl_exit(s, *p, events),
        }
    }

    /// The process waiting in a magic block, if any.
    pub fn magic_process(&self, s: &ProgState) -> Option<ProcId> {
        (0..self.cfas.procs.len()).find(|&p| self.cfas.procs[p].is_magic(s.pcs[p]))
    }
}
