//! Pretty-printer producing source that parses back to the same tree.

use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "  ";

pub fn print_ast(ast: &Ast) -> String {
    let mut out = String::new();
    for (k, t) in ast.templates.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        print_template(&mut out, t);
    }
    out
}

fn print_template(out: &mut String, t: &TemplateDecl) {
    let _ = write!(out, "template {}", t.name.name);
    if !t.ports.is_empty() {
        let ports: Vec<String> = t
            .ports
            .iter()
            .map(|p| format!("{} {}", p.template.name, p.name.name))
            .collect();
        let _ = write!(out, "({})", ports.join(", "));
    }
    out.push('\n');
    for item in &t.items {
        print_item(out, item);
    }
    out.push_str("endtemplate\n");
}

fn type_ref(t: &TypeRef) -> String {
    match t {
        TypeRef::Bool => "bool".into(),
        TypeRef::Uint(n) => format!("uint{n}"),
        TypeRef::Named(i) => i.name.clone(),
    }
}

fn print_item(out: &mut String, item: &Item) {
    match item {
        Item::Instance {
            template,
            name,
            args,
        } => {
            let args: Vec<&str> = args.iter().map(|a| a.name.as_str()).collect();
            let _ = writeln!(
                out,
                "{INDENT}instance {} {}({});",
                template.name,
                name.name,
                args.join(", ")
            );
        }
        Item::Enum { name, variants } => {
            let vs: Vec<&str> = variants.iter().map(|v| v.name.as_str()).collect();
            let _ = writeln!(
                out,
                "{INDENT}typedef enum {{ {} }} {};",
                vs.join(", "),
                name.name
            );
        }
        Item::Var { ty, name, init } => {
            let _ = write!(out, "{INDENT}{} {}", type_ref(ty), name.name);
            if let Some(e) = init {
                let _ = write!(out, " = {}", print_expr(e));
            }
            out.push_str(";\n");
        }
        Item::Process { name, body } => {
            let _ = write!(out, "{INDENT}process {} ", name.name);
            print_block(out, body, 1);
            out.push_str(";\n");
        }
        Item::Task {
            name,
            controllable,
            params,
            body,
        } => {
            let ps: Vec<String> = params
                .iter()
                .map(|p| format!("{} {}", type_ref(&p.ty), p.name.name))
                .collect();
            let _ = write!(
                out,
                "{INDENT}task {}void {}({}) ",
                if *controllable { "controllable " } else { "" },
                name.name,
                ps.join(", ")
            );
            print_block(out, body, 1);
            out.push_str(";\n");
        }
        Item::Goal { name, expr } => {
            let _ = writeln!(out, "{INDENT}goal {} = {};", name.name, print_expr(expr));
        }
    }
}

fn print_block(out: &mut String, b: &Block, depth: usize) {
    out.push_str("{\n");
    for s in &b.stmts {
        indent(out, depth + 1);
        print_stmt(out, s, depth + 1);
        out.push('\n');
    }
    indent(out, depth);
    out.push('}');
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

/// Prints one statement at the given nesting depth (without a leading
/// indent or trailing newline).
pub fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::If { cond, then, els } => {
            let _ = write!(out, "if ({}) ", print_expr(cond));
            print_stmt(out, then, depth);
            if let Some(e) = els {
                out.push_str(" else ");
                print_stmt(out, e, depth);
            }
        }
        StmtKind::Forever(b) => {
            out.push_str("forever ");
            print_block(out, b, depth);
        }
        StmtKind::Block(b) => print_block(out, b, depth),
        StmtKind::Pause => out.push_str("pause;"),
        StmtKind::Assert(e) => {
            let _ = write!(out, "assert({});", print_expr(e));
        }
        StmtKind::Magic => out.push_str("...;"),
        StmtKind::Assign { lhs, rhs } => {
            out.push_str(&lhs.path.dotted());
            match lhs.slice {
                Some((hi, lo)) if hi == lo => {
                    let _ = write!(out, "[{hi}]");
                }
                Some((hi, lo)) => {
                    let _ = write!(out, "[{hi}:{lo}]");
                }
                None => {}
            }
            let _ = write!(out, " = {};", print_expr(rhs));
        }
        StmtKind::Call { target, args } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            let _ = write!(out, "{}({});", target.dotted(), args.join(", "));
        }
    }
}

pub fn stmt_to_string(s: &Stmt) -> String {
    let mut out = String::new();
    print_stmt(&mut out, s, 0);
    out
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr_into(&mut out, e, 0);
    out
}

fn expr_into(out: &mut String, e: &Expr, min_prec: u8) {
    match &e.kind {
        ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Nondet => out.push('*'),
        ExprKind::Path(p) => out.push_str(&p.dotted()),
        ExprKind::Unary(UnOp::Not, inner) => {
            out.push('!');
            expr_into(out, inner, u8::MAX);
        }
        ExprKind::Binary(op, a, b) => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                out.push('(');
            }
            expr_into(out, a, prec);
            let _ = write!(out, " {} ", op.symbol());
            expr_into(out, b, prec + 1);
            if paren {
                out.push(')');
            }
        }
        ExprKind::Slice(inner, hi, lo) => {
            if matches!(inner.kind, ExprKind::Unary(..)) {
                out.push('(');
                expr_into(out, inner, 0);
                out.push(')');
            } else {
                expr_into(out, inner, u8::MAX);
            }
            if hi == lo {
                let _ = write!(out, "[{hi}]");
            } else {
                let _ = write!(out, "[{hi}:{lo}]");
            }
        }
    }
}
