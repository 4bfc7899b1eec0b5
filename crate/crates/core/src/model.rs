//! Flattened, fully resolved specification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::frontend::ast::{Ast, BinOp};
use crate::frontend::{Pos, Type};

pub type VarId = usize;
pub type TaskId = usize;
pub type InstId = usize;
pub type SiteId = usize;
pub type ProcId = usize;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecModel {
    pub files: Vec<String>,
    pub instances: Vec<Instance>,
    pub vars: Vec<VarDecl>,
    pub processes: Vec<Process>,
    pub tasks: Vec<Task>,
    pub goals: Vec<Goal>,
    pub magic_sites: Vec<MagicSite>,
    /// The typed tree the model was built from; used to check and lower
    /// statements supplied later (debugger commands, generated code).
    #[serde(skip)]
    pub ast: Ast,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    Var(VarId),
    Task(TaskId),
    Instance(InstId),
    Lit(u32),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Instance {
    /// Dotted path from the entry instance (empty for the entry itself).
    pub path: String,
    pub template: String,
    pub parent: Option<InstId>,
    pub scope: BTreeMap<String, Binding>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub ty: Type,
    pub init: Option<u64>,
    pub instance: InstId,
    pub pos: Pos,
    /// Set when the variable stores a parameter of a non-controllable task.
    pub param_of: Option<TaskId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Process {
    pub name: String,
    pub instance: InstId,
    pub body: Vec<MStmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskParam {
    pub name: String,
    pub ty: Type,
    /// Backing state variable (non-controllable tasks only).
    pub var: Option<VarId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub local_name: String,
    pub instance: InstId,
    pub controllable: bool,
    pub params: Vec<TaskParam>,
    pub body: Vec<MStmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Goal {
    pub name: String,
    pub instance: InstId,
    pub expr: MExpr,
    pub pos: Pos,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MagicSite {
    pub id: SiteId,
    pub task: Option<TaskId>,
    pub process: Option<ProcId>,
    pub instance: InstId,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MExpr {
    pub kind: MExprKind,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MExprKind {
    Const(u64),
    Var(VarId),
    /// Parameter of the enclosing controllable task.
    Param(usize),
    Nondet,
    /// Temporary introduced when a controllable call is inlined.
    Local(usize),
    /// A numbered occurrence of `*` after inlining.
    Choice(usize),
    Not(Box<MExpr>),
    Bin(BinOp, Box<MExpr>, Box<MExpr>),
    Slice(Box<MExpr>, u32, u32),
}

impl MExpr {
    pub fn constant(value: u64, ty: Type) -> MExpr {
        MExpr {
            kind: MExprKind::Const(value),
            ty,
        }
    }

    pub fn var(v: VarId, ty: Type) -> MExpr {
        MExpr {
            kind: MExprKind::Var(v),
            ty,
        }
    }

    pub fn visit(&self, f: &mut impl FnMut(&MExpr)) {
        f(self);
        match &self.kind {
            MExprKind::Not(a) | MExprKind::Slice(a, _, _) => a.visit(f),
            MExprKind::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn has_nondet(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e.kind, MExprKind::Nondet));
        found
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MStmt {
    pub kind: MStmtKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MStmtKind {
    If {
        cond: MExpr,
        then: Vec<MStmt>,
        els: Vec<MStmt>,
    },
    Forever(Vec<MStmt>),
    Block(Vec<MStmt>),
    Pause,
    Assert(MExpr),
    Magic(SiteId),
    Assign {
        var: VarId,
        slice: Option<(u32, u32)>,
        rhs: MExpr,
    },
    Call {
        task: TaskId,
        args: Vec<MExpr>,
    },
}

pub fn visit_stmts(stmts: &[MStmt], f: &mut impl FnMut(&MStmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            MStmtKind::If { then, els, .. } => {
                visit_stmts(then, f);
                visit_stmts(els, f);
            }
            MStmtKind::Forever(b) | MStmtKind::Block(b) => visit_stmts(b, f),
            _ => {}
        }
    }
}

pub fn visit_stmts_mut(stmts: &mut [MStmt], f: &mut impl FnMut(&mut MStmt)) {
    for s in stmts {
        f(s);
        match &mut s.kind {
            MStmtKind::If { then, els, .. } => {
                visit_stmts_mut(then, f);
                visit_stmts_mut(els, f);
            }
            MStmtKind::Forever(b) | MStmtKind::Block(b) => visit_stmts_mut(b, f),
            _ => {}
        }
    }
}

impl SpecModel {
    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn task_by_name(&self, name: &str) -> Option<TaskId> {
        self.tasks.iter().position(|t| t.name == name)
    }

    pub fn instance_by_path(&self, path: &str) -> Option<InstId> {
        self.instances.iter().position(|i| i.path == path)
    }

    pub fn controllable_tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        (0..self.tasks.len()).filter(|&t| self.tasks[t].controllable)
    }

    /// Resolves a dotted name as seen from inside instance `inst`.
    pub fn resolve(&self, inst: InstId, path: &[&str]) -> Option<Binding> {
        let mut cur = inst;
        for (k, seg) in path.iter().enumerate() {
            let b = self.instances[cur].scope.get(*seg)?;
            if k + 1 == path.len() {
                return Some(b.clone());
            }
            match b {
                Binding::Instance(i) => cur = *i,
                _ => return None,
            }
        }
        None
    }

    /// Shortest dotted name for `var` as seen from `inst`.
    pub fn local_var_name(&self, inst: InstId, var: VarId) -> String {
        let full = &self.vars[var].name;
        for (name, b) in &self.instances[inst].scope {
            if *b == Binding::Var(var) {
                return name.clone();
            }
        }
        for (name, b) in &self.instances[inst].scope {
            if let Binding::Instance(i) = b {
                for (inner, bb) in &self.instances[*i].scope {
                    if *bb == Binding::Var(var) {
                        return format!("{name}.{inner}");
                    }
                }
            }
        }
        full.clone()
    }

    /// Shortest dotted name for `task` as seen from `inst`.
    pub fn local_task_name(&self, inst: InstId, task: TaskId) -> String {
        for (name, b) in &self.instances[inst].scope {
            if *b == Binding::Task(task) {
                return name.clone();
            }
        }
        for (name, b) in &self.instances[inst].scope {
            if let Binding::Instance(i) = b {
                for (inner, bb) in &self.instances[*i].scope {
                    if *bb == Binding::Task(task) {
                        return format!("{name}.{inner}");
                    }
                }
            }
        }
        self.tasks[task].name.clone()
    }

    /// Source-level rendering of value `v` of type `ty`.
    pub fn display_value(&self, ty: &Type, v: u64) -> String {
        match ty {
            Type::Bool => (v != 0).to_string(),
            Type::Enum { .. } => self.enum_literal(ty, v).unwrap_or_else(|| v.to_string()),
            Type::Uint(_) => v.to_string(),
        }
    }

    /// Name of value `v` of an enum type, as written in the source.
    pub fn enum_literal(&self, ty: &Type, v: u64) -> Option<String> {
        let Type::Enum { template, name, .. } = ty else {
            return None;
        };
        let t = self.ast.template(template)?;
        t.items.iter().find_map(|item| match item {
            crate::frontend::ast::Item::Enum { name: n, variants } if n.name == *name => {
                variants.get(v as usize).map(|i| i.name.clone())
            }
            _ => None,
        })
    }
}
