use std::collections::BTreeMap;

use super::ast::*;
use super::{InstantiationError, TypeError};
use crate::model::*;

#[derive(Debug, thiserror::Error)]
enum FlatError {
    #[error(transparent)]
    Inst(#[from] InstantiationError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

impl From<FlatError> for super::FrontendError {
    fn from(e: FlatError) -> Self {
        match e {
            FlatError::Inst(e) => e.into(),
            FlatError::Type(e) => e.into(),
        }
    }
}

fn inst_err<T>(pos: Pos, msg: impl Into<String>) -> Result<T, FlatError> {
    Err(InstantiationError {
        pos,
        msg: msg.into(),
    }
    .into())
}

fn qualify(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Instantiates the entry template and resolves every name to a concrete
/// variable, task or instance. Expects a type-checked tree.
pub fn flatten(ast: &Ast, entry: &str) -> Result<SpecModel, super::FrontendError> {
    let Some(root) = ast.template(entry) else {
        return Err(InstantiationError {
            pos: Pos::default(),
            msg: format!("entry template `{entry}` not found"),
        }
        .into());
    };
    let mut f = Flattener {
        ast,
        model: SpecModel {
            files: Vec::new(),
            instances: Vec::new(),
            vars: Vec::new(),
            processes: Vec::new(),
            tasks: Vec::new(),
            goals: Vec::new(),
            magic_sites: Vec::new(),
            ast: ast.clone(),
        },
        stack: Vec::new(),
    };
    f.model.instances.push(Instance {
        path: String::new(),
        template: entry.to_string(),
        parent: None,
        scope: BTreeMap::new(),
    });
    if !root.ports.is_empty() {
        return Err(InstantiationError {
            pos: root.name.pos,
            msg: format!("entry template `{entry}` has unbound ports"),
        }
        .into());
    }
    f.declare(0, root.name.pos)?;
    for inst in 0..f.model.instances.len() {
        f.lower_bodies(inst)?;
    }
    f.number_sites();
    Ok(f.model)
}

struct Flattener<'a> {
    ast: &'a Ast,
    model: SpecModel,
    stack: Vec<String>,
}

impl<'a> Flattener<'a> {
    fn template(&self, inst: InstId) -> &'a TemplateDecl {
        self.ast
            .template(&self.model.instances[inst].template)
            .expect("instance of a known template")
    }

    /// Creates variables, tasks and child instances for `inst`, whose port
    /// bindings are already in its scope.
    fn declare(&mut self, inst: InstId, at: Pos) -> Result<(), FlatError> {
        let t = self.template(inst);
        if self.stack.contains(&t.name.name) {
            return inst_err(
                at,
                format!("cyclic instantiation of template `{}`", t.name.name),
            );
        }
        self.stack.push(t.name.name.clone());
        let prefix = self.model.instances[inst].path.clone();
        let mut scope = std::mem::take(&mut self.model.instances[inst].scope);
        for item in &t.items {
            match item {
                Item::Enum { variants, .. } => {
                    for (k, v) in variants.iter().enumerate() {
                        scope.insert(v.name.clone(), Binding::Lit(k as u32));
                    }
                }
                Item::Var { name, init, .. } => {
                    let ty = self.var_type(t, &name.name).expect("declared variable");
                    let init = match init {
                        None => None,
                        Some(e) => Some(const_value(e, ast_literals(t))?),
                    };
                    self.model.vars.push(VarDecl {
                        name: qualify(&prefix, &name.name),
                        ty,
                        init,
                        instance: inst,
                        pos: name.pos,
                        param_of: None,
                    });
                    scope.insert(name.name.clone(), Binding::Var(self.model.vars.len() - 1));
                }
                Item::Task {
                    name,
                    controllable,
                    params,
                    ..
                } => {
                    let id = self.model.tasks.len();
                    let qname = qualify(&prefix, &name.name);
                    let mut ps = Vec::new();
                    for p in params {
                        let ty = self.resolve_typeref(t, &p.ty);
                        let var = if *controllable {
                            None
                        } else {
                            self.model.vars.push(VarDecl {
                                name: format!("{qname}.{}", p.name.name),
                                ty: ty.clone(),
                                init: None,
                                instance: inst,
                                pos: p.name.pos,
                                param_of: Some(id),
                            });
                            Some(self.model.vars.len() - 1)
                        };
                        ps.push(TaskParam {
                            name: p.name.name.clone(),
                            ty,
                            var,
                        });
                    }
                    self.model.tasks.push(Task {
                        name: qname,
                        local_name: name.name.clone(),
                        instance: inst,
                        controllable: *controllable,
                        params: ps,
                        body: Vec::new(),
                        pos: name.pos,
                    });
                    scope.insert(name.name.clone(), Binding::Task(id));
                }
                _ => {}
            }
        }
        // Children are created before any is declared so that siblings can
        // be passed to each other's ports.
        let mut children = Vec::new();
        for item in &t.items {
            if let Item::Instance {
                template,
                name,
                args,
            } = item
            {
                let id = self.model.instances.len();
                self.model.instances.push(Instance {
                    path: qualify(&prefix, &name.name),
                    template: template.name.clone(),
                    parent: Some(inst),
                    scope: BTreeMap::new(),
                });
                scope.insert(name.name.clone(), Binding::Instance(id));
                children.push((id, template, name, args));
            }
        }
        for (id, template, name, args) in &children {
            let Some(target) = self.ast.template(&template.name) else {
                return inst_err(
                    template.pos,
                    format!("unknown template `{}`", template.name),
                );
            };
            if target.ports.len() != args.len() {
                return inst_err(
                    name.pos,
                    format!("instance `{}` leaves ports unbound", name.name),
                );
            }
            for (port, arg) in target.ports.iter().zip(args.iter()) {
                match scope.get(&arg.name) {
                    Some(Binding::Instance(b)) => {
                        self.model.instances[*id]
                            .scope
                            .insert(port.name.name.clone(), Binding::Instance(*b));
                    }
                    _ => {
                        return inst_err(
                            arg.pos,
                            format!(
                                "port `{}` bound to unknown instance `{}`",
                                port.name.name, arg.name
                            ),
                        )
                    }
                }
            }
        }
        self.model.instances[inst].scope = scope;
        for (id, _, name, _) in children {
            self.declare(id, name.pos)?;
        }
        self.stack.pop();
        Ok(())
    }

    fn var_type(&self, t: &TemplateDecl, name: &str) -> Option<Type> {
        t.items.iter().find_map(|item| match item {
            Item::Var { ty, name: n, .. } if n.name == name => Some(self.resolve_typeref(t, ty)),
            _ => None,
        })
    }

    fn resolve_typeref(&self, t: &TemplateDecl, ty: &TypeRef) -> Type {
        match ty {
            TypeRef::Bool => Type::Bool,
            TypeRef::Uint(n) => Type::Uint(*n),
            TypeRef::Named(id) => {
                let size = t
                    .items
                    .iter()
                    .find_map(|item| match item {
                        Item::Enum { name, variants } if name.name == id.name => {
                            Some(variants.len() as u32)
                        }
                        _ => None,
                    })
                    .expect("enum checked by the type checker");
                Type::Enum {
                    template: t.name.name.clone(),
                    name: id.name.clone(),
                    size,
                }
            }
        }
    }

    fn lower_bodies(&mut self, inst: InstId) -> Result<(), FlatError> {
        let t = self.template(inst);
        let prefix = self.model.instances[inst].path.clone();
        for item in &t.items {
            match item {
                Item::Process { name, body } => {
                    let id = self.model.processes.len();
                    let ctx = Ctx {
                        inst,
                        task: None,
                        process: Some(id),
                    };
                    let body = self.lower_block(&ctx, body)?;
                    self.model.processes.push(Process {
                        name: qualify(&prefix, &name.name),
                        instance: inst,
                        body,
                        pos: name.pos,
                    });
                }
                Item::Task { name, body, .. } => {
                    let Some(Binding::Task(id)) =
                        self.model.instances[inst].scope.get(&name.name).cloned()
                    else {
                        unreachable!("task declared in phase one")
                    };
                    let ctx = Ctx {
                        inst,
                        task: Some(id),
                        process: None,
                    };
                    let body = self.lower_block(&ctx, body)?;
                    self.model.tasks[id].body = body;
                }
                Item::Goal { name, expr } => {
                    let ctx = Ctx {
                        inst,
                        task: None,
                        process: None,
                    };
                    let expr = lower_expr(&self.model, &ctx, expr)?;
                    self.model.goals.push(Goal {
                        name: qualify(&prefix, &name.name),
                        instance: inst,
                        expr,
                        pos: name.pos,
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn lower_block(&mut self, ctx: &Ctx, b: &Block) -> Result<Vec<MStmt>, FlatError> {
        b.stmts.iter().map(|s| self.lower_stmt(ctx, s)).collect()
    }

    fn lower_stmt(&mut self, ctx: &Ctx, s: &Stmt) -> Result<MStmt, FlatError> {
        let mut sites = SiteAlloc {
            model: &mut self.model,
        };
        lower_stmt_with(&mut sites, ctx, s)
    }

    /// Renumbers magic sites in source order.
    fn number_sites(&mut self) {
        let mut order: Vec<usize> = (0..self.model.magic_sites.len()).collect();
        order.sort_by_key(|&k| {
            let s = &self.model.magic_sites[k];
            (s.pos, s.instance)
        });
        let mut new_id = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new;
        }
        let mut sites: Vec<MagicSite> = order
            .iter()
            .map(|&old| self.model.magic_sites[old].clone())
            .collect();
        for (k, s) in sites.iter_mut().enumerate() {
            s.id = k;
        }
        self.model.magic_sites = sites;
        let mut remap = |s: &mut MStmt| {
            if let MStmtKind::Magic(id) = &mut s.kind {
                *id = new_id[*id];
            }
        };
        for p in &mut self.model.processes {
            visit_stmts_mut(&mut p.body, &mut remap);
        }
        for t in &mut self.model.tasks {
            visit_stmts_mut(&mut t.body, &mut remap);
        }
    }
}

fn ast_literals(t: &TemplateDecl) -> impl Fn(&str) -> Option<u64> + '_ {
    move |name| {
        t.items.iter().find_map(|item| match item {
            Item::Enum { variants, .. } => variants
                .iter()
                .position(|v| v.name == name)
                .map(|k| k as u64),
            _ => None,
        })
    }
}

fn const_value(e: &Expr, literal: impl Fn(&str) -> Option<u64>) -> Result<u64, FlatError> {
    match &e.kind {
        ExprKind::Bool(b) => Ok(*b as u64),
        ExprKind::Int(v) => Ok(*v),
        ExprKind::Path(p) if p.segments.len() == 1 => {
            literal(&p.segments[0].name).ok_or_else(|| {
                TypeError {
                    pos: e.pos,
                    msg: "initialiser must be a constant".into(),
                }
                .into()
            })
        }
        _ => Err(TypeError {
            pos: e.pos,
            msg: "initialiser must be a constant".into(),
        }
        .into()),
    }
}

/// Lowering context: the instance and the enclosing task or process.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub inst: InstId,
    pub task: Option<TaskId>,
    pub process: Option<ProcId>,
}

/// Source of magic-site ids during lowering.
pub trait Sites {
    fn model(&self) -> &SpecModel;
    fn new_site(&mut self, ctx: &Ctx, pos: Pos) -> Result<SiteId, TypeError>;
}

struct SiteAlloc<'m> {
    model: &'m mut SpecModel,
}

impl Sites for SiteAlloc<'_> {
    fn model(&self) -> &SpecModel {
        self.model
    }

    fn new_site(&mut self, ctx: &Ctx, pos: Pos) -> Result<SiteId, TypeError> {
        let id = self.model.magic_sites.len();
        self.model.magic_sites.push(MagicSite {
            id,
            task: ctx.task,
            process: ctx.process,
            instance: ctx.inst,
            pos,
        });
        Ok(id)
    }
}

/// Lowering of statements outside flattening, where new magic blocks are
/// not allowed.
pub struct NoSites<'m>(pub &'m SpecModel);

impl Sites for NoSites<'_> {
    fn model(&self) -> &SpecModel {
        self.0
    }

    fn new_site(&mut self, _ctx: &Ctx, pos: Pos) -> Result<SiteId, TypeError> {
        Err(TypeError {
            pos,
            msg: "`...` is not allowed here".into(),
        })
    }
}

fn lower_stmt_with(sites: &mut impl Sites, ctx: &Ctx, s: &Stmt) -> Result<MStmt, FlatError> {
    let kind = match &s.kind {
        StmtKind::If { cond, then, els } => MStmtKind::If {
            cond: lower_expr(sites.model(), ctx, cond)?,
            then: vec![lower_stmt_with(sites, ctx, then)?],
            els: match els {
                Some(e) => vec![lower_stmt_with(sites, ctx, e)?],
                None => Vec::new(),
            },
        },
        StmtKind::Forever(b) => MStmtKind::Forever(
            b.stmts
                .iter()
                .map(|s| lower_stmt_with(sites, ctx, s))
                .collect::<Result<_, _>>()?,
        ),
        StmtKind::Block(b) => MStmtKind::Block(
            b.stmts
                .iter()
                .map(|s| lower_stmt_with(sites, ctx, s))
                .collect::<Result<_, _>>()?,
        ),
        StmtKind::Pause => MStmtKind::Pause,
        StmtKind::Assert(e) => MStmtKind::Assert(lower_expr(sites.model(), ctx, e)?),
        StmtKind::Magic => MStmtKind::Magic(sites.new_site(ctx, s.pos)?),
        StmtKind::Assign { lhs, rhs } => {
            let var = match resolve(sites.model(), ctx, &lhs.path)? {
                Resolved::Var(v) => v,
                _ => {
                    return Err(TypeError {
                        pos: lhs.path.pos(),
                        msg: format!("`{}` is not assignable", lhs.path.dotted()),
                    }
                    .into())
                }
            };
            MStmtKind::Assign {
                var,
                slice: lhs.slice,
                rhs: lower_expr(sites.model(), ctx, rhs)?,
            }
        }
        StmtKind::Call { target, args } => {
            let task = match resolve(sites.model(), ctx, target)? {
                Resolved::Task(t) => t,
                _ => {
                    return Err(TypeError {
                        pos: target.pos(),
                        msg: format!("`{}` is not a task", target.dotted()),
                    }
                    .into())
                }
            };
            MStmtKind::Call {
                task,
                args: args
                    .iter()
                    .map(|a| lower_expr(sites.model(), ctx, a))
                    .collect::<Result<_, _>>()?,
            }
        }
    };
    Ok(MStmt { kind, pos: s.pos })
}

/// Lowers a type-checked statement in the given context. Magic blocks are
/// rejected.
pub fn lower_stmt(model: &SpecModel, ctx: &Ctx, s: &Stmt) -> Result<MStmt, super::FrontendError> {
    Ok(lower_stmt_with(&mut NoSites(model), ctx, s)?)
}

pub fn lower_expr_in(
    model: &SpecModel,
    ctx: &Ctx,
    e: &Expr,
) -> Result<MExpr, super::FrontendError> {
    Ok(lower_expr(model, ctx, e)?)
}

enum Resolved {
    Var(VarId),
    Param(usize),
    Lit(u32),
    Task(TaskId),
    Instance,
}

fn resolve(model: &SpecModel, ctx: &Ctx, path: &Path) -> Result<Resolved, TypeError> {
    if path.segments.len() == 1 {
        if let Some(t) = ctx.task {
            let task = &model.tasks[t];
            if let Some(i) = task
                .params
                .iter()
                .position(|p| p.name == path.segments[0].name)
            {
                return Ok(match task.params[i].var {
                    Some(v) => Resolved::Var(v),
                    None => Resolved::Param(i),
                });
            }
        }
    }
    let names: Vec<&str> = path.segments.iter().map(|s| s.name.as_str()).collect();
    match model.resolve(ctx.inst, &names) {
        Some(Binding::Var(v)) => Ok(Resolved::Var(v)),
        Some(Binding::Task(t)) => Ok(Resolved::Task(t)),
        Some(Binding::Lit(v)) => Ok(Resolved::Lit(v)),
        Some(Binding::Instance(_)) => Ok(Resolved::Instance),
        None => Err(TypeError {
            pos: path.pos(),
            msg: format!("unknown identifier `{}`", path.dotted()),
        }),
    }
}

fn lower_expr(model: &SpecModel, ctx: &Ctx, e: &Expr) -> Result<MExpr, TypeError> {
    let ty = e.ty.clone().ok_or_else(|| TypeError {
        pos: e.pos,
        msg: "expression is not type-checked".into(),
    })?;
    let kind = match &e.kind {
        ExprKind::Bool(b) => MExprKind::Const(*b as u64),
        ExprKind::Int(v) => MExprKind::Const(*v),
        ExprKind::Nondet => MExprKind::Nondet,
        ExprKind::Path(p) => match resolve(model, ctx, p)? {
            Resolved::Var(v) => MExprKind::Var(v),
            Resolved::Param(i) => MExprKind::Param(i),
            Resolved::Lit(v) => MExprKind::Const(v as u64),
            Resolved::Task(_) | Resolved::Instance => {
                return Err(TypeError {
                    pos: e.pos,
                    msg: format!("`{}` is not a value", p.dotted()),
                })
            }
        },
        ExprKind::Unary(UnOp::Not, a) => MExprKind::Not(Box::new(lower_expr(model, ctx, a)?)),
        ExprKind::Binary(op, a, b) => MExprKind::Bin(
            *op,
            Box::new(lower_expr(model, ctx, a)?),
            Box::new(lower_expr(model, ctx, b)?),
        ),
        ExprKind::Slice(a, hi, lo) => {
            MExprKind::Slice(Box::new(lower_expr(model, ctx, a)?), *hi, *lo)
        }
    };
    Ok(MExpr { kind, ty })
}
