//! Control-flow automata: each process compiled to a flat instruction list
//! whose control locations are the initial point, pauses, magic blocks and
//! termination. Tasks are inlined at their call sites.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{Pos, Type};
use crate::model::*;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("{pos:?}: magic block inside controllable task `{task}`")]
    MagicInControllable { task: String, pos: Pos },
    #[error("{pos:?}: `pause` inside controllable task `{task}`")]
    PauseInControllable { task: String, pos: Pos },
    #[error("{pos:?}: `*` inside controllable task `{task}`")]
    NondetInControllable { task: String, pos: Pos },
    #[error("{pos:?}: recursive call to `{task}`")]
    Recursion { task: String, pos: Pos },
    #[error("{pos:?}: loop in `{process}` without a `pause`")]
    PauseFreeCycle { process: String, pos: Pos },
    #[error("{pos:?}: `*` between a magic block and the next pause")]
    NondetAfterMagic { pos: Pos },
}

impl StructureError {
    pub fn pos(&self) -> Pos {
        match self {
            StructureError::MagicInControllable { pos, .. }
            | StructureError::PauseInControllable { pos, .. }
            | StructureError::NondetInControllable { pos, .. }
            | StructureError::Recursion { pos, .. }
            | StructureError::PauseFreeCycle { pos, .. }
            | StructureError::NondetAfterMagic { pos } => *pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instr {
    Assign {
        var: VarId,
        slice: Option<(u32, u32)>,
        rhs: MExpr,
    },
    SetLocal {
        slot: usize,
        rhs: MExpr,
    },
    Assert(MExpr),
    /// Falls through when `cond` holds, otherwise jumps to `else_target`.
    Branch {
        cond: MExpr,
        else_target: usize,
    },
    Jump(usize),
    Pause,
    Magic(SiteId),
    End,
}

/// A straight-line compiled body.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Program {
    pub instrs: Vec<Instr>,
    pub pos: Vec<Pos>,
    pub n_locals: usize,
    /// Type of each numbered `*` occurrence.
    pub choices: Vec<Type>,
}

impl Program {
    pub fn successors(&self, i: usize) -> Vec<usize> {
        match &self.instrs[i] {
            Instr::Branch { else_target, .. } => vec![i + 1, *else_target],
            Instr::Jump(t) => vec![*t],
            Instr::Pause | Instr::Magic(_) | Instr::End => Vec::new(),
            _ => vec![i + 1],
        }
    }

    /// Choice ids used by instruction `i`, in evaluation order.
    pub fn choices_in(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut grab = |e: &MExpr| {
            e.visit(&mut |x| {
                if let MExprKind::Choice(c) = x.kind {
                    out.push(c);
                }
            })
        };
        match &self.instrs[i] {
            Instr::Assign { rhs, .. } | Instr::SetLocal { rhs, .. } => grab(rhs),
            Instr::Assert(e) | Instr::Branch { cond: e, .. } => grab(e),
            _ => {}
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocKind {
    Initial,
    Pause,
    Magic(SiteId),
    Final,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Location {
    pub id: usize,
    pub kind: LocKind,
    pub pos: Pos,
    /// Instruction where execution continues from this location.
    pub resume: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Segment {
    pub from: usize,
    /// Locations where some path of the segment stops.
    pub to: Vec<usize>,
    /// Instructions on the segment's paths, in program order.
    pub instrs: Vec<usize>,
    /// Whether an assertion on some path may fail.
    pub may_fail: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cfa {
    pub process: ProcId,
    pub name: String,
    pub program: Program,
    pub locations: Vec<Location>,
    /// One segment per non-final location (for magic locations: the exit
    /// continuation).
    pub segments: Vec<Segment>,
    /// Bit offset of each choice used in the segment leaving a location.
    pub choice_layout: Vec<BTreeMap<usize, u32>>,
    /// Location entered when execution stops at a given instruction.
    pub stop_loc: BTreeMap<usize, usize>,
}

impl Cfa {
    pub fn choice_bits(&self, loc: usize) -> u32 {
        self.choice_layout[loc]
            .iter()
            .map(|(c, off)| off + self.program.choices[*c].width())
            .max()
            .unwrap_or(0)
    }

    pub fn is_magic(&self, loc: usize) -> bool {
        matches!(self.locations[loc].kind, LocKind::Magic(_))
    }
}

/// Compiled form of a whole specification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cfas {
    pub procs: Vec<Cfa>,
    /// Body program of every controllable task (indexed by task id).
    pub controllable: BTreeMap<TaskId, Program>,
}

impl Cfas {
    /// All (process, location) pairs for a magic site.
    pub fn site_locations(&self, site: SiteId) -> Vec<(ProcId, usize)> {
        let mut out = Vec::new();
        for (p, cfa) in self.procs.iter().enumerate() {
            for l in &cfa.locations {
                if l.kind == LocKind::Magic(site) {
                    out.push((p, l.id));
                }
            }
        }
        out
    }
}

struct Emitter<'m> {
    model: &'m SpecModel,
    prog: Program,
    stack: Vec<TaskId>,
}

impl<'m> Emitter<'m> {
    fn new(model: &'m SpecModel) -> Self {
        Emitter {
            model,
            prog: Program::default(),
            stack: Vec::new(),
        }
    }

    fn push(&mut self, i: Instr, pos: Pos) -> usize {
        self.prog.instrs.push(i);
        self.prog.pos.push(pos);
        self.prog.instrs.len() - 1
    }

    fn expr(&mut self, e: &MExpr, locals: &[usize]) -> MExpr {
        let kind = match &e.kind {
            MExprKind::Param(i) => MExprKind::Local(locals[*i]),
            MExprKind::Nondet => {
                self.prog.choices.push(e.ty.clone());
                MExprKind::Choice(self.prog.choices.len() - 1)
            }
            MExprKind::Not(a) => MExprKind::Not(Box::new(self.expr(a, locals))),
            MExprKind::Bin(op, a, b) => {
                let a = self.expr(a, locals);
                let b = self.expr(b, locals);
                MExprKind::Bin(*op, Box::new(a), Box::new(b))
            }
            MExprKind::Slice(a, hi, lo) => {
                MExprKind::Slice(Box::new(self.expr(a, locals)), *hi, *lo)
            }
            k => k.clone(),
        };
        MExpr {
            kind,
            ty: e.ty.clone(),
        }
    }

    fn controllable_ctx(&self) -> Option<TaskId> {
        self.stack
            .iter()
            .rev()
            .copied()
            .find(|t| self.model.tasks[*t].controllable)
    }

    fn stmts(&mut self, stmts: &[MStmt], locals: &[usize]) -> Result<(), StructureError> {
        for s in stmts {
            self.stmt(s, locals)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &MStmt, locals: &[usize]) -> Result<(), StructureError> {
        match &s.kind {
            MStmtKind::If { cond, then, els } => {
                let cond = self.expr(cond, locals);
                let br = self.push(
                    Instr::Branch {
                        cond,
                        else_target: usize::MAX,
                    },
                    s.pos,
                );
                self.stmts(then, locals)?;
                if els.is_empty() {
                    let end = self.prog.instrs.len();
                    self.patch(br, end);
                } else {
                    let j = self.push(Instr::Jump(usize::MAX), s.pos);
                    let else_start = self.prog.instrs.len();
                    self.patch(br, else_start);
                    self.stmts(els, locals)?;
                    let end = self.prog.instrs.len();
                    self.prog.instrs[j] = Instr::Jump(end);
                }
            }
            MStmtKind::Forever(body) => {
                let start = self.prog.instrs.len();
                self.stmts(body, locals)?;
                self.push(Instr::Jump(start), s.pos);
            }
            MStmtKind::Block(body) => self.stmts(body, locals)?,
            MStmtKind::Pause => {
                if let Some(t) = self.controllable_ctx() {
                    return Err(StructureError::PauseInControllable {
                        task: self.model.tasks[t].name.clone(),
                        pos: s.pos,
                    });
                }
                self.push(Instr::Pause, s.pos);
            }
            MStmtKind::Magic(site) => {
                if let Some(t) = self.controllable_ctx() {
                    return Err(StructureError::MagicInControllable {
                        task: self.model.tasks[t].name.clone(),
                        pos: s.pos,
                    });
                }
                self.push(Instr::Magic(*site), s.pos);
            }
            MStmtKind::Assert(e) => {
                let e = self.expr(e, locals);
                self.push(Instr::Assert(e), s.pos);
            }
            MStmtKind::Assign { var, slice, rhs } => {
                let rhs = self.expr(rhs, locals);
                self.push(
                    Instr::Assign {
                        var: *var,
                        slice: *slice,
                        rhs,
                    },
                    s.pos,
                );
            }
            MStmtKind::Call { task, args } => self.call(*task, args, locals, s.pos)?,
        }
        Ok(())
    }

    fn patch(&mut self, br: usize, target: usize) {
        if let Instr::Branch { else_target, .. } = &mut self.prog.instrs[br] {
            *else_target = target;
        }
    }

    fn call(
        &mut self,
        task: TaskId,
        args: &[MExpr],
        locals: &[usize],
        pos: Pos,
    ) -> Result<(), StructureError> {
        let t = &self.model.tasks[task];
        if self.stack.contains(&task) {
            return Err(StructureError::Recursion {
                task: t.name.clone(),
                pos,
            });
        }
        let mut inner_locals = Vec::new();
        // Arguments are evaluated before the body runs.
        for (a, p) in args.iter().zip(&t.params) {
            let rhs = self.expr(a, locals);
            match p.var {
                Some(var) => {
                    self.push(
                        Instr::Assign {
                            var,
                            slice: None,
                            rhs,
                        },
                        pos,
                    );
                }
                None => {
                    let slot = self.prog.n_locals;
                    self.prog.n_locals += 1;
                    self.push(Instr::SetLocal { slot, rhs }, pos);
                    inner_locals.push(slot);
                }
            }
        }
        self.stack.push(task);
        self.stmts(&t.body, &inner_locals)?;
        self.stack.pop();
        Ok(())
    }
}

/// Compiles the body of a controllable task, with its parameters in locals
/// `0..params.len()`.
pub fn compile_controllable(model: &SpecModel, task: TaskId) -> Result<Program, StructureError> {
    let mut em = Emitter::new(model);
    let n = model.tasks[task].params.len();
    em.prog.n_locals = n;
    em.stack.push(task);
    let locals: Vec<usize> = (0..n).collect();
    em.stmts(&model.tasks[task].body, &locals)?;
    em.push(Instr::End, model.tasks[task].pos);
    if let Some(k) = (0..em.prog.instrs.len()).find(|&i| !em.prog.choices_in(i).is_empty()) {
        return Err(StructureError::NondetInControllable {
            task: model.tasks[task].name.clone(),
            pos: em.prog.pos[k],
        });
    }
    Ok(em.prog)
}

/// Compiles a free-standing statement list (used for one-off programs such
/// as debugger commands).
pub fn compile_snippet(model: &SpecModel, stmts: &[MStmt]) -> Result<Program, StructureError> {
    let mut em = Emitter::new(model);
    em.stmts(stmts, &[])?;
    em.push(Instr::End, Pos::default());
    Ok(em.prog)
}

pub fn build_cfas(model: &SpecModel) -> Result<Cfas, StructureError> {
    let mut procs = Vec::new();
    for (pid, p) in model.processes.iter().enumerate() {
        let mut em = Emitter::new(model);
        em.stmts(&p.body, &[])?;
        em.push(Instr::End, p.pos);
        procs.push(analyse(pid, p, em.prog)?);
    }
    let mut controllable = BTreeMap::new();
    for t in model.controllable_tasks() {
        controllable.insert(t, compile_controllable(model, t)?);
    }
    // Magic blocks in controllable tasks are errors even when never called.
    for site in &model.magic_sites {
        if let Some(t) = site.task {
            if model.tasks[t].controllable {
                return Err(StructureError::MagicInControllable {
                    task: model.tasks[t].name.clone(),
                    pos: site.pos,
                });
            }
        }
    }
    Ok(Cfas {
        procs,
        controllable,
    })
}

/// Explores the segment starting at `start`: returns stop instructions and
/// visited instructions, rejecting cycles that do not pass a stop.
fn explore(
    prog: &Program,
    start: usize,
    name: &str,
) -> Result<(BTreeSet<usize>, BTreeSet<usize>), StructureError> {
    let mut stops = BTreeSet::new();
    let mut visited = BTreeSet::new();
    // 0 = unseen, 1 = on stack, 2 = done
    let mut state = vec![0u8; prog.instrs.len()];
    let mut stack = vec![(start, 0usize)];
    state[start] = 1;
    visited.insert(start);
    while let Some(&(i, k)) = stack.last() {
        let succ = prog.successors(i);
        if succ.is_empty() {
            stops.insert(i);
        }
        if k < succ.len() {
            let j = succ[k];
            stack.last_mut().expect("non-empty").1 += 1;
            match state[j] {
                0 => {
                    state[j] = 1;
                    visited.insert(j);
                    stack.push((j, 0));
                }
                1 => {
                    return Err(StructureError::PauseFreeCycle {
                        process: name.to_string(),
                        pos: prog.pos[j],
                    })
                }
                _ => {}
            }
        } else {
            state[i] = 2;
            stack.pop();
        }
    }
    Ok((stops, visited))
}

fn analyse(pid: ProcId, p: &Process, program: Program) -> Result<Cfa, StructureError> {
    let mut locations = vec![Location {
        id: 0,
        kind: LocKind::Initial,
        pos: p.pos,
        resume: 0,
    }];
    let mut by_stop: BTreeMap<usize, usize> = BTreeMap::new();
    let mut segments = Vec::new();
    let mut layouts = Vec::new();
    let mut next = 0;
    while next < locations.len() {
        let loc = locations[next].clone();
        next += 1;
        if loc.kind == LocKind::Final {
            segments.push(Segment {
                from: loc.id,
                to: Vec::new(),
                instrs: Vec::new(),
                may_fail: false,
            });
            layouts.push(BTreeMap::new());
            continue;
        }
        let (stops, visited) = explore(&program, loc.resume, &p.name)?;
        let mut to = Vec::new();
        for s in stops {
            let id = *by_stop.entry(s).or_insert_with(|| {
                let (kind, resume) = match program.instrs[s] {
                    Instr::Pause => (LocKind::Pause, s + 1),
                    Instr::Magic(site) => (LocKind::Magic(site), s + 1),
                    _ => (LocKind::Final, s),
                };
                locations.push(Location {
                    id: locations.len(),
                    kind,
                    pos: program.pos[s],
                    resume,
                });
                locations.len() - 1
            });
            to.push(id);
        }
        let mut layout = BTreeMap::new();
        let mut off = 0;
        for &i in &visited {
            for c in program.choices_in(i) {
                layout.insert(c, off);
                off += program.choices[c].width();
            }
        }
        if matches!(loc.kind, LocKind::Magic(_)) && !layout.is_empty() {
            let first = visited
                .iter()
                .find(|&&i| !program.choices_in(i).is_empty())
                .copied()
                .unwrap_or(loc.resume);
            return Err(StructureError::NondetAfterMagic {
                pos: program.pos[first],
            });
        }
        let may_fail = visited
            .iter()
            .any(|&i| matches!(program.instrs[i], Instr::Assert(_)));
        segments.push(Segment {
            from: loc.id,
            to,
            instrs: visited.into_iter().collect(),
            may_fail,
        });
        layouts.push(layout);
    }
    Ok(Cfa {
        process: pid,
        name: p.name.clone(),
        program,
        locations,
        segments,
        choice_layout: layouts,
        stop_loc: by_stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{compile, SourceSpec};

    fn cfas(text: &str) -> Result<Cfas, StructureError> {
        let m = compile(&SourceSpec::single("t.tsl", text)).unwrap();
        build_cfas(&m)
    }

    #[test]
    fn forever_pause_has_two_locations() {
        let c = cfas("template main process p { forever { pause; }; } endtemplate").unwrap();
        let kinds: Vec<LocKind> = c.procs[0].locations.iter().map(|l| l.kind).collect();
        assert_eq!(kinds, [LocKind::Initial, LocKind::Pause]);
        assert_eq!(c.procs[0].segments[1].to, vec![1]);
    }

    #[test]
    fn pause_free_loop_is_rejected() {
        let e = cfas("template main bool b; process p { forever { b = !b; }; } endtemplate");
        assert!(matches!(e, Err(StructureError::PauseFreeCycle { .. })));
    }

    #[test]
    fn magic_in_controllable_task_is_rejected() {
        let e = cfas("template main task controllable void f() { ...; }; endtemplate");
        assert!(matches!(e, Err(StructureError::MagicInControllable { .. })));
    }
}
