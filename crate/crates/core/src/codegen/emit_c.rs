//! Translation of a complete controller to a C99 module.
//!
//! Layout of `<module>.h`:
//! * `#define`s for the enum literals the controller uses,
//!   `<TEMPLATE>_<LITERAL>`;
//! * `<module>_callbacks`, a table with one function pointer per task the
//!   controller calls outside its own instances (controllable commands),
//!   named after the task's full name, plus `assertion_failed(line)`;
//! * `<module>_init(table)`, which also resets the controller state;
//! * `<module>_set_<var>` for every environment variable the controller
//!   reads, which the embedding keeps up to date (the mirrored state);
//! * `<module>_get_<var>` for every controller variable;
//! * one handler `<module>_<instance>_<task>` per controller task.

use std::collections::BTreeSet;

use super::{CodegenError, PartialImpl, Result};
use crate::frontend::ast::BinOp;
use crate::frontend::Type;
use crate::interp::mask;
use crate::model::{
    visit_stmts, InstId, MExpr, MExprKind, MStmt, MStmtKind, SpecModel, TaskId, VarId,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CModule {
    pub header_name: String,
    pub header: String,
    pub source_name: String,
    pub source: String,
}

fn ident(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn c_type(ty: &Type) -> &'static str {
    match ty {
        Type::Bool => "bool",
        Type::Enum { .. } => "uint32_t",
        Type::Uint(w) if *w <= 8 => "uint8_t",
        Type::Uint(w) if *w <= 16 => "uint16_t",
        Type::Uint(w) if *w <= 32 => "uint32_t",
        Type::Uint(_) => "uint64_t",
    }
}

/// Whether values of `ty` can exceed their width in the C type.
fn needs_mask(ty: &Type) -> bool {
    match ty {
        Type::Bool => false,
        Type::Uint(w) => !matches!(w, 8 | 16 | 32 | 64),
        Type::Enum { .. } => true,
    }
}

struct Emitter<'a> {
    model: &'a SpecModel,
    module: String,
    ctrl: BTreeSet<InstId>,
}

impl<'a> Emitter<'a> {
    fn is_ctrl_task(&self, t: TaskId) -> bool {
        let task = &self.model.tasks[t];
        !task.controllable && self.ctrl.contains(&task.instance)
    }

    fn own_var(&self, v: VarId) -> bool {
        self.ctrl.contains(&self.model.vars[v].instance)
    }

    fn var_name(&self, v: VarId) -> String {
        ident(&self.model.vars[v].name)
    }

    fn handler_name(&self, t: TaskId) -> String {
        format!("{}_{}", self.module, ident(&self.model.tasks[t].name))
    }

    fn literal(&self, ty: &Type, v: u64) -> String {
        match ty {
            Type::Bool => (if v != 0 { "true" } else { "false" }).to_string(),
            Type::Enum { template, .. } => match self.model.enum_literal(ty, v) {
                Some(l) => format!(
                    "{}_{}",
                    ident(template).to_uppercase(),
                    ident(&l).to_uppercase()
                ),
                None => format!("{v}u"),
            },
            Type::Uint(w) if *w > 32 => format!("{v}ull"),
            Type::Uint(_) => format!("{v}u"),
        }
    }

    fn expr(&self, e: &MExpr) -> Result<String> {
        Ok(match &e.kind {
            MExprKind::Const(v) => self.literal(&e.ty, *v),
            MExprKind::Var(v) => self.var_name(*v),
            MExprKind::Not(a) => format!("!({})", self.expr(a)?),
            MExprKind::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::And => "&&",
                    BinOp::Or => "||",
                    other => other.symbol(),
                };
                format!("({} {sym} {})", self.expr(a)?, self.expr(b)?)
            }
            MExprKind::Slice(a, hi, lo) => {
                format!(
                    "(({} >> {lo}) & 0x{:x}ull)",
                    self.expr(a)?,
                    mask(hi - lo + 1)
                )
            }
            MExprKind::Param(_)
            | MExprKind::Local(_)
            | MExprKind::Nondet
            | MExprKind::Choice(_) => {
                return Err(CodegenError::Unsupported(format!(
                    "expression {:?} in controller code",
                    e.kind
                )))
            }
        })
    }

    fn stmts(&self, body: &[MStmt], depth: usize, out: &mut String) -> Result<()> {
        for s in body {
            self.stmt(s, depth, out)?;
        }
        Ok(())
    }

    fn stmt(&self, s: &MStmt, depth: usize, out: &mut String) -> Result<()> {
        let pad = "    ".repeat(depth);
        match &s.kind {
            MStmtKind::If { cond, then, els } => {
                out.push_str(&format!("{pad}if ({}) {{\n", self.expr(cond)?));
                self.stmts(then, depth + 1, out)?;
                if els.is_empty() {
                    out.push_str(&format!("{pad}}}\n"));
                } else {
                    out.push_str(&format!("{pad}}} else {{\n"));
                    self.stmts(els, depth + 1, out)?;
                    out.push_str(&format!("{pad}}}\n"));
                }
            }
            MStmtKind::Block(b) => self.stmts(b, depth, out)?,
            MStmtKind::Assert(e) => {
                out.push_str(&format!(
                    "{pad}if (!({})) {{\n{pad}    callbacks->assertion_failed({}u);\n{pad}}}\n",
                    self.expr(e)?,
                    s.pos.line
                ));
            }
            MStmtKind::Assign { var, slice, rhs } => {
                let name = self.var_name(*var);
                let ty = &self.model.vars[*var].ty;
                let value = self.expr(rhs)?;
                let line = match slice {
                    None if needs_mask(ty) => {
                        format!(
                            "{name} = ({})({value} & 0x{:x}ull);",
                            c_type(ty),
                            mask(ty.width())
                        )
                    }
                    None => format!("{name} = {value};"),
                    Some((hi, lo)) => {
                        let m = mask(hi - lo + 1);
                        format!(
                            "{name} = ({})(({name} & ~(0x{m:x}ull << {lo})) | (((uint64_t)({value}) & 0x{m:x}ull) << {lo}));",
                            c_type(ty)
                        )
                    }
                };
                out.push_str(&format!("{pad}{line}\n"));
            }
            MStmtKind::Call { task, args } => {
                let a = args
                    .iter()
                    .map(|e| self.expr(e))
                    .collect::<Result<Vec<_>>>()?
                    .join(", ");
                if self.is_ctrl_task(*task) {
                    out.push_str(&format!("{pad}{}({a});\n", self.handler_name(*task)));
                } else {
                    out.push_str(&format!(
                        "{pad}callbacks->{}({a});\n",
                        ident(&self.model.tasks[*task].name)
                    ));
                }
            }
            MStmtKind::Magic(_) => {
                return Err(CodegenError::OpenSites(
                    "magic block in controller code".into(),
                ))
            }
            MStmtKind::Forever(_) | MStmtKind::Pause => {
                return Err(CodegenError::Unsupported(
                    "loops and pauses in controller tasks".into(),
                ))
            }
        }
        Ok(())
    }

    fn params(&self, t: TaskId) -> String {
        let p = &self.model.tasks[t].params;
        if p.is_empty() {
            "void".into()
        } else {
            p.iter()
                .map(|p| format!("{} {}", c_type(&p.ty), ident(&p.name)))
                .collect::<Vec<_>>()
                .join(", ")
        }
    }
}

/// Controller instances: those owning magic blocks in the original text,
/// and instances with event tasks but neither processes nor commands.
fn controller_instances(imp: &PartialImpl, model: &SpecModel) -> BTreeSet<InstId> {
    let templates: BTreeSet<String> = imp.site_refs().into_iter().map(|s| s.template).collect();
    (0..model.instances.len())
        .filter(|&i| {
            let tasks: Vec<_> = model.tasks.iter().filter(|t| t.instance == i).collect();
            let by_site = templates.contains(&model.instances[i].template);
            let by_shape = !tasks.is_empty()
                && tasks.iter().all(|t| !t.controllable)
                && !model.processes.iter().any(|p| p.instance == i);
            by_site || by_shape
        })
        .collect()
}

/// Emits the controller of a complete implementation as `<module>.h` and
/// `<module>.c`.
pub fn emit_c(imp: &PartialImpl, module: &str) -> Result<CModule> {
    let compiled = imp.compile()?;
    let open = compiled.open_sites();
    if !open.is_empty() {
        let names: Vec<String> = open.iter().map(|(r, _)| r.to_string()).collect();
        return Err(CodegenError::OpenSites(names.join(", ")));
    }
    let model = &compiled.model;
    let module = ident(module);
    let em = Emitter {
        model,
        module: module.clone(),
        ctrl: controller_instances(imp, model),
    };
    let handlers: Vec<TaskId> = (0..model.tasks.len())
        .filter(|&t| em.is_ctrl_task(t))
        .collect();

    // Variables and callees referenced by handlers.
    let mut read: BTreeSet<VarId> = BTreeSet::new();
    let mut callees: BTreeSet<TaskId> = BTreeSet::new();
    for &t in &handlers {
        visit_stmts(&model.tasks[t].body, &mut |s| {
            let grab = |e: &MExpr, read: &mut BTreeSet<VarId>| {
                e.visit(&mut |x| {
                    if let MExprKind::Var(v) = x.kind {
                        read.insert(v);
                    }
                })
            };
            match &s.kind {
                MStmtKind::If { cond, .. } => grab(cond, &mut read),
                MStmtKind::Assert(e) => grab(e, &mut read),
                MStmtKind::Assign { var, rhs, .. } => {
                    read.insert(*var);
                    grab(rhs, &mut read);
                }
                MStmtKind::Call { task, args } => {
                    args.iter().for_each(|a| grab(a, &mut read));
                    if !em.is_ctrl_task(*task) {
                        callees.insert(*task);
                    }
                }
                _ => {}
            }
        });
    }
    let own: Vec<VarId> = (0..model.vars.len()).filter(|&v| em.own_var(v)).collect();
    let mirrored: Vec<VarId> = read.iter().copied().filter(|&v| !em.own_var(v)).collect();
    let mut enums: Vec<&Type> = Vec::new();
    for &v in own.iter().chain(&mirrored) {
        let ty = &model.vars[v].ty;
        if matches!(ty, Type::Enum { .. }) && !enums.contains(&ty) {
            enums.push(ty);
        }
    }

    let guard = format!("{}_H", module.to_uppercase());
    let mut h = String::new();
    h.push_str(&format!(
        "/* Controller module `{module}`, generated from a reactive specification. */\n"
    ));
    h.push_str(&format!(
        "#ifndef {guard}\n#define {guard}\n\n#include <stdbool.h>\n#include <stdint.h>\n\n"
    ));
    for ty in &enums {
        if let Type::Enum { size, .. } = ty {
            for k in 0..*size as u64 {
                h.push_str(&format!("#define {} {k}u\n", em.literal(ty, k)));
            }
        }
    }
    if !enums.is_empty() {
        h.push('\n');
    }
    h.push_str(&format!("typedef struct {module}_callbacks {{\n"));
    for &t in &callees {
        let task = &model.tasks[t];
        h.push_str(&format!(
            "    void (*{})({});\n",
            ident(&task.name),
            em.params(t)
        ));
    }
    h.push_str("    void (*assertion_failed)(unsigned line);\n");
    h.push_str(&format!("}} {module}_callbacks;\n\n"));
    h.push_str(&format!(
        "void {module}_init(const {module}_callbacks *table);\n"
    ));
    for &v in &mirrored {
        h.push_str(&format!(
            "void {module}_set_{}({} value);\n",
            em.var_name(v),
            c_type(&model.vars[v].ty)
        ));
    }
    for &v in &own {
        h.push_str(&format!(
            "{} {module}_get_{}(void);\n",
            c_type(&model.vars[v].ty),
            em.var_name(v)
        ));
    }
    for &t in &handlers {
        h.push_str(&format!("void {}({});\n", em.handler_name(t), em.params(t)));
    }
    h.push_str(&format!("\n#endif /* {guard} */\n"));

    let mut c = String::new();
    c.push_str(&format!("#include \"{module}.h\"\n\n"));
    c.push_str(&format!("static const {module}_callbacks *callbacks;\n\n"));
    for &v in own.iter().chain(&mirrored) {
        let d = &model.vars[v];
        c.push_str(&format!("static {} {};\n", c_type(&d.ty), em.var_name(v)));
    }
    c.push_str(&format!(
        "\nvoid {module}_init(const {module}_callbacks *table)\n{{\n    callbacks = table;\n"
    ));
    for &v in own.iter().chain(&mirrored) {
        let d = &model.vars[v];
        c.push_str(&format!(
            "    {} = {};\n",
            em.var_name(v),
            em.literal(&d.ty, d.init.unwrap_or(0))
        ));
    }
    c.push_str("}\n");
    for &v in &mirrored {
        let ty = c_type(&model.vars[v].ty);
        let n = em.var_name(v);
        c.push_str(&format!(
            "\nvoid {module}_set_{n}({ty} value)\n{{\n    {n} = value;\n}}\n"
        ));
    }
    for &v in &own {
        let ty = c_type(&model.vars[v].ty);
        let n = em.var_name(v);
        c.push_str(&format!(
            "\n{ty} {module}_get_{n}(void)\n{{\n    return {n};\n}}\n"
        ));
    }
    for &t in &handlers {
        let task = &model.tasks[t];
        c.push_str(&format!(
            "\nvoid {}({})\n{{\n",
            em.handler_name(t),
            em.params(t)
        ));
        for p in &task.params {
            if let Some(v) = p.var {
                c.push_str(&format!("    {} = {};\n", em.var_name(v), ident(&p.name)));
            }
        }
        let mut body = String::new();
        em.stmts(&task.body, 1, &mut body)?;
        c.push_str(&body);
        c.push_str("}\n");
    }
    Ok(CModule {
        header_name: format!("{module}.h"),
        header: h,
        source_name: format!("{module}.c"),
        source: c,
    })
}
