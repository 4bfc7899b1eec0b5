use std::collections::HashMap;

use super::ast::*;
use super::TypeError;

type TResult<T> = Result<T, TypeError>;

fn err<T>(pos: Pos, msg: impl Into<String>) -> TResult<T> {
    Err(TypeError {
        pos,
        msg: msg.into(),
    })
}

#[derive(Clone, Debug)]
pub struct TaskSig {
    pub controllable: bool,
    pub params: Vec<(String, Type)>,
}

/// Names visible at template level, with resolved types.
#[derive(Debug, Default)]
pub struct TemplateInfo {
    pub name: String,
    pub literals: HashMap<String, (Type, u32)>,
    pub enums: HashMap<String, Type>,
    pub vars: HashMap<String, Type>,
    pub tasks: HashMap<String, TaskSig>,
    /// Port and instance names, mapped to their template.
    pub links: HashMap<String, String>,
}

#[derive(Debug, Default)]
pub struct Globals {
    pub templates: HashMap<String, TemplateInfo>,
}

#[derive(Clone, Debug)]
pub enum Entity {
    Var(Type),
    Param(usize, Type),
    Lit(Type, u32),
    Task(String, TaskSig),
    Link(String),
}

impl Globals {
    pub fn build(ast: &Ast) -> TResult<Globals> {
        let mut g = Globals::default();
        for t in &ast.templates {
            if g.templates.contains_key(&t.name.name) {
                return err(t.name.pos, format!("duplicate template `{}`", t.name.name));
            }
            g.templates.insert(
                t.name.name.clone(),
                TemplateInfo {
                    name: t.name.name.clone(),
                    ..Default::default()
                },
            );
        }
        for t in &ast.templates {
            let info = build_template(ast, t)?;
            g.templates.insert(t.name.name.clone(), info);
        }
        Ok(g)
    }

    pub fn template(&self, name: &str) -> &TemplateInfo {
        &self.templates[name]
    }

    /// Resolves a dotted path inside `template`, with `locals` being the
    /// parameters of the enclosing task.
    pub fn resolve(
        &self,
        template: &str,
        locals: &[(String, Type)],
        path: &Path,
    ) -> TResult<Entity> {
        let mut cur = template.to_string();
        let n = path.segments.len();
        for (k, seg) in path.segments.iter().enumerate() {
            let info = self.template(&cur);
            let last = k + 1 == n;
            if k == 0 {
                if let Some(i) = locals.iter().position(|(p, _)| *p == seg.name) {
                    if last {
                        return Ok(Entity::Param(i, locals[i].1.clone()));
                    }
                    return err(seg.pos, format!("`{}` is not an instance", seg.name));
                }
            }
            if let Some(next) = info.links.get(&seg.name) {
                if last {
                    return Ok(Entity::Link(next.clone()));
                }
                cur = next.clone();
                continue;
            }
            if !last {
                return err(
                    seg.pos,
                    format!("`{}` is not an instance or port", seg.name),
                );
            }
            if let Some(t) = info.vars.get(&seg.name) {
                return Ok(Entity::Var(t.clone()));
            }
            if let Some((t, v)) = info.literals.get(&seg.name) {
                return Ok(Entity::Lit(t.clone(), *v));
            }
            if let Some(sig) = info.tasks.get(&seg.name) {
                return Ok(Entity::Task(cur.clone(), sig.clone()));
            }
            return err(seg.pos, format!("unknown identifier `{}`", path.dotted()));
        }
        unreachable!("paths are never empty")
    }
}

fn resolve_type(info: &TemplateInfo, t: &TypeRef) -> TResult<Type> {
    match t {
        TypeRef::Bool => Ok(Type::Bool),
        TypeRef::Uint(n) => Ok(Type::Uint(*n)),
        TypeRef::Named(id) => info
            .enums
            .get(&id.name)
            .cloned()
            .map_or_else(|| err(id.pos, format!("unknown type `{}`", id.name)), Ok),
    }
}

fn check_width(t: &TypeRef, pos: Pos) -> TResult<()> {
    if let TypeRef::Uint(n) = t {
        if *n == 0 || *n > 64 {
            return err(pos, format!("unsupported width uint{n}; must be 1..=64"));
        }
    }
    Ok(())
}

fn build_template(ast: &Ast, t: &TemplateDecl) -> TResult<TemplateInfo> {
    let mut info = TemplateInfo {
        name: t.name.name.clone(),
        ..Default::default()
    };
    let mut names: HashMap<String, Pos> = HashMap::new();
    let mut declare = |id: &Ident| -> TResult<()> {
        if names.insert(id.name.clone(), id.pos).is_some() {
            return err(id.pos, format!("duplicate name `{}`", id.name));
        }
        Ok(())
    };
    for p in &t.ports {
        declare(&p.name)?;
        if ast.template(&p.template.name).is_none() {
            return err(
                p.template.pos,
                format!("unknown template `{}`", p.template.name),
            );
        }
        info.links
            .insert(p.name.name.clone(), p.template.name.clone());
    }
    for item in &t.items {
        if let Item::Enum { name, variants } = item {
            declare(name)?;
            let ty = Type::Enum {
                template: t.name.name.clone(),
                name: name.name.clone(),
                size: variants.len() as u32,
            };
            for (k, v) in variants.iter().enumerate() {
                declare(v)?;
                info.literals.insert(v.name.clone(), (ty.clone(), k as u32));
            }
            info.enums.insert(name.name.clone(), ty);
        }
    }
    for item in &t.items {
        match item {
            Item::Enum { .. } => {}
            Item::Instance { template, name, .. } => {
                declare(name)?;
                if ast.template(&template.name).is_none() {
                    return err(
                        template.pos,
                        format!("unknown template `{}`", template.name),
                    );
                }
                info.links.insert(name.name.clone(), template.name.clone());
            }
            Item::Var { ty, name, .. } => {
                declare(name)?;
                check_width(ty, name.pos)?;
                info.vars
                    .insert(name.name.clone(), resolve_type(&info, ty)?);
            }
            Item::Task {
                name,
                controllable,
                params,
                ..
            } => {
                declare(name)?;
                let mut ps = Vec::new();
                for p in params {
                    check_width(&p.ty, p.name.pos)?;
                    if ps.iter().any(|(n, _)| *n == p.name.name) {
                        return err(p.name.pos, format!("duplicate parameter `{}`", p.name.name));
                    }
                    ps.push((p.name.name.clone(), resolve_type(&info, &p.ty)?));
                }
                info.tasks.insert(
                    name.name.clone(),
                    TaskSig {
                        controllable: *controllable,
                        params: ps,
                    },
                );
            }
            Item::Process { name, .. } | Item::Goal { name, .. } => declare(name)?,
        }
    }
    Ok(info)
}

/// Checks the whole tree and returns a copy with every expression typed.
pub fn typecheck(ast: &Ast) -> TResult<Ast> {
    let g = Globals::build(ast)?;
    let mut out = ast.clone();
    for t in &mut out.templates {
        let tname = t.name.name.clone();
        for item in &mut t.items {
            match item {
                Item::Instance {
                    template,
                    name,
                    args,
                } => {
                    let target = ast.template(&template.name).expect("checked in build");
                    if target.ports.len() != args.len() {
                        return err(
                            name.pos,
                            format!(
                                "instance `{}` of `{}` needs {} port argument(s), got {}",
                                name.name,
                                template.name,
                                target.ports.len(),
                                args.len()
                            ),
                        );
                    }
                    for (a, p) in args.iter().zip(&target.ports) {
                        match g.template(&tname).links.get(&a.name) {
                            Some(tt) if *tt == p.template.name => {}
                            Some(tt) => {
                                return err(
                                    a.pos,
                                    format!(
                                        "port `{}` expects `{}`, got instance of `{tt}`",
                                        p.name.name, p.template.name
                                    ),
                                )
                            }
                            None => return err(a.pos, format!("unknown instance `{}`", a.name)),
                        }
                    }
                }
                Item::Enum { .. } => {}
                Item::Var { name, init, .. } => {
                    if let Some(e) = init {
                        let ty = g.template(&tname).vars[&name.name].clone();
                        check_expr(&g, &tname, &[], e, Some(&ty))?;
                        let constant = match &e.kind {
                            ExprKind::Bool(_) | ExprKind::Int(_) => true,
                            ExprKind::Path(p) => {
                                matches!(g.resolve(&tname, &[], p)?, Entity::Lit(..))
                            }
                            _ => false,
                        };
                        if !constant {
                            return err(e.pos, "initialiser must be a constant");
                        }
                    }
                }
                Item::Process { body, .. } => check_block(&g, &tname, &[], body)?,
                Item::Task { name, body, .. } => {
                    let params = g.template(&tname).tasks[&name.name].params.clone();
                    check_block(&g, &tname, &params, body)?;
                }
                Item::Goal { expr, .. } => {
                    check_expr(&g, &tname, &[], expr, Some(&Type::Bool))?;
                    if contains_nondet(expr) {
                        return err(expr.pos, "`*` is not allowed in a goal");
                    }
                }
            }
        }
    }
    Ok(out)
}

fn contains_nondet(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Nondet => true,
        ExprKind::Unary(_, a) | ExprKind::Slice(a, _, _) => contains_nondet(a),
        ExprKind::Binary(_, a, b) => contains_nondet(a) || contains_nondet(b),
        _ => false,
    }
}

pub fn check_block(g: &Globals, t: &str, locals: &[(String, Type)], b: &mut Block) -> TResult<()> {
    for s in &mut b.stmts {
        check_stmt(g, t, locals, s)?;
    }
    Ok(())
}

pub fn check_stmt(g: &Globals, t: &str, locals: &[(String, Type)], s: &mut Stmt) -> TResult<()> {
    match &mut s.kind {
        StmtKind::If { cond, then, els } => {
            check_expr(g, t, locals, cond, Some(&Type::Bool))?;
            check_stmt(g, t, locals, then)?;
            if let Some(e) = els {
                check_stmt(g, t, locals, e)?;
            }
        }
        StmtKind::Forever(b) | StmtKind::Block(b) => check_block(g, t, locals, b)?,
        StmtKind::Pause | StmtKind::Magic => {}
        StmtKind::Assert(e) => {
            check_expr(g, t, locals, e, Some(&Type::Bool))?;
        }
        StmtKind::Assign { lhs, rhs } => {
            let ty = match g.resolve(t, locals, &lhs.path)? {
                Entity::Var(ty) => ty,
                _ => {
                    return err(
                        lhs.path.pos(),
                        format!("`{}` is not assignable", lhs.path.dotted()),
                    )
                }
            };
            let ty = match lhs.slice {
                None => ty,
                Some((hi, lo)) => slice_type(&ty, hi, lo, lhs.path.pos())?,
            };
            check_expr(g, t, locals, rhs, Some(&ty))?;
        }
        StmtKind::Call { target, args } => {
            let sig = match g.resolve(t, locals, target)? {
                Entity::Task(_, sig) => sig,
                _ => return err(target.pos(), format!("`{}` is not a task", target.dotted())),
            };
            if sig.params.len() != args.len() {
                return err(
                    target.pos(),
                    format!(
                        "`{}` takes {} argument(s), got {}",
                        target.dotted(),
                        sig.params.len(),
                        args.len()
                    ),
                );
            }
            for (a, (_, pty)) in args.iter_mut().zip(&sig.params) {
                check_expr(g, t, locals, a, Some(pty))?;
            }
        }
    }
    Ok(())
}

fn slice_type(ty: &Type, hi: u32, lo: u32, pos: Pos) -> TResult<Type> {
    match ty {
        Type::Uint(n) if hi >= lo && hi < *n => Ok(Type::Uint(hi - lo + 1)),
        Type::Uint(n) => err(pos, format!("slice [{hi}:{lo}] out of range for uint{n}")),
        other => err(pos, format!("cannot slice a value of type {other}")),
    }
}

/// Whether a value of type `from` may be stored into `to`.
pub fn assignable(from: &Type, to: &Type) -> bool {
    match (from, to) {
        (Type::Uint(a), Type::Uint(b)) => a <= b,
        _ => from == to,
    }
}

fn bits_needed(v: u64) -> u32 {
    (64 - v.leading_zeros()).max(1)
}

fn needs_context(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::Int(_) | ExprKind::Nondet)
}

pub fn check_expr(
    g: &Globals,
    t: &str,
    locals: &[(String, Type)],
    e: &mut Expr,
    expected: Option<&Type>,
) -> TResult<Type> {
    let pos = e.pos;
    let ty = match &mut e.kind {
        ExprKind::Bool(_) => Type::Bool,
        ExprKind::Int(v) => match expected {
            Some(Type::Uint(n)) => {
                if bits_needed(*v) > *n {
                    return err(pos, format!("literal {v} does not fit in uint{n}"));
                }
                Type::Uint(*n)
            }
            Some(other) => return err(pos, format!("expected {other}, found integer literal")),
            None => Type::Uint(bits_needed(*v)),
        },
        ExprKind::Nondet => match expected {
            Some(ty) => ty.clone(),
            None => return err(pos, "cannot determine the type of `*`"),
        },
        ExprKind::Path(p) => match g.resolve(t, locals, p)? {
            Entity::Var(ty) | Entity::Param(_, ty) | Entity::Lit(ty, _) => ty,
            Entity::Task(..) => return err(pos, format!("task `{}` used as a value", p.dotted())),
            Entity::Link(_) => {
                return err(pos, format!("instance `{}` used as a value", p.dotted()))
            }
        },
        ExprKind::Unary(UnOp::Not, a) => {
            check_expr(g, t, locals, a, Some(&Type::Bool))?;
            Type::Bool
        }
        ExprKind::Binary(op, a, b) => {
            match op {
                BinOp::And | BinOp::Or => {
                    check_expr(g, t, locals, a, Some(&Type::Bool))?;
                    check_expr(g, t, locals, b, Some(&Type::Bool))?;
                }
                BinOp::Eq | BinOp::Ne => {
                    check_comparands(g, t, locals, a, b, false)?;
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    check_comparands(g, t, locals, a, b, true)?;
                }
            }
            Type::Bool
        }
        ExprKind::Slice(a, hi, lo) => {
            let (hi, lo) = (*hi, *lo);
            let inner = check_expr(g, t, locals, a, None)?;
            slice_type(&inner, hi, lo, pos)?
        }
    };
    if let Some(want) = expected {
        if !assignable(&ty, want) {
            let msg = match (&ty, want) {
                (Type::Uint(a), Type::Uint(b)) => {
                    format!("implicit truncation from uint{a} to uint{b}")
                }
                _ => format!("expected {want}, found {ty}"),
            };
            return err(pos, msg);
        }
    }
    e.ty = Some(ty.clone());
    Ok(ty)
}

fn check_comparands(
    g: &Globals,
    t: &str,
    locals: &[(String, Type)],
    a: &mut Expr,
    b: &mut Expr,
    ordered: bool,
) -> TResult<()> {
    let (ta, tb) = match (needs_context(a), needs_context(b)) {
        (false, _) => {
            let ta = check_expr(g, t, locals, a, None)?;
            let tb = if needs_context(b) {
                check_expr(g, t, locals, b, Some(&ta))?
            } else {
                check_expr(g, t, locals, b, None)?
            };
            (ta, tb)
        }
        (true, false) => {
            let tb = check_expr(g, t, locals, b, None)?;
            let ta = check_expr(g, t, locals, a, Some(&tb))?;
            (ta, tb)
        }
        (true, true) => {
            let width = [&a.kind, &b.kind]
                .iter()
                .filter_map(|k| match k {
                    ExprKind::Int(v) => Some(bits_needed(*v)),
                    _ => None,
                })
                .max();
            let Some(width) = width else {
                return err(a.pos, "cannot determine the type of `*`");
            };
            let ty = Type::Uint(width);
            (
                check_expr(g, t, locals, a, Some(&ty))?,
                check_expr(g, t, locals, b, Some(&ty))?,
            )
        }
    };
    let compatible = match (&ta, &tb) {
        (Type::Uint(_), Type::Uint(_)) => true,
        _ => !ordered && ta == tb,
    };
    if !compatible {
        return err(
            a.pos,
            if ordered {
                format!("ordered comparison needs unsigned operands, found {ta} and {tb}")
            } else {
                format!("cannot compare {ta} with {tb}")
            },
        );
    }
    Ok(())
}
