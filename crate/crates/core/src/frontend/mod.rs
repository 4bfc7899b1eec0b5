//! Lexing, parsing, type checking and flattening of specification sources.

pub mod ast;
pub mod flatten;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod typecheck;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{Ast, Pos, Type};
pub use flatten::flatten;
pub use printer::print_ast;
pub use typecheck::typecheck;

use crate::model::SpecModel;

/// Input files plus the name of the top-level template.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceSpec {
    pub files: Vec<(String, String)>,
    pub entry: String,
}

impl SourceSpec {
    pub fn single(path: impl Into<String>, text: impl Into<String>) -> SourceSpec {
        SourceSpec {
            files: vec![(path.into(), text.into())],
            entry: "main".into(),
        }
    }

    pub fn path_of(&self, pos: Pos) -> &str {
        self.files
            .get(pos.file as usize)
            .map_or("<input>", |(p, _)| p.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}:{}: expected {}, found {found}", pos.line, pos.col, expected.join(" or "))]
pub struct SyntaxError {
    pub pos: Pos,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}:{}: {msg}", pos.line, pos.col)]
pub struct TypeError {
    pub pos: Pos,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}:{}: {msg}", pos.line, pos.col)]
pub struct InstantiationError {
    pub pos: Pos,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("type error: {0}")]
    Type(#[from] TypeError),
    #[error("instantiation error: {0}")]
    Instantiation(#[from] InstantiationError),
    #[error("no source files given")]
    NoFiles,
}

impl FrontendError {
    pub fn pos(&self) -> Pos {
        match self {
            FrontendError::Syntax(e) => e.pos,
            FrontendError::Type(e) => e.pos,
            FrontendError::Instantiation(e) => e.pos,
            FrontendError::NoFiles => Pos::default(),
        }
    }

    pub fn message(&self) -> String {
        match self {
            FrontendError::Syntax(e) => {
                format!("expected {}, found {}", e.expected.join(" or "), e.found)
            }
            FrontendError::Type(e) => e.msg.clone(),
            FrontendError::Instantiation(e) => e.msg.clone(),
            FrontendError::NoFiles => "no source files given".into(),
        }
    }

    pub fn diagnostic(&self, src: &SourceSpec) -> Diagnostic {
        let pos = self.pos();
        Diagnostic {
            severity: Severity::Error,
            file: src.path_of(pos).to_string(),
            line: pos.line,
            col: pos.col,
            message: self.message(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
    Note,
}

/// One machine-readable diagnostic, rendered as
/// `SEVERITY file:line:col message`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
            Severity::Note => "NOTE",
        };
        write!(
            f,
            "{sev} {}:{}:{} {}",
            self.file, self.line, self.col, self.message
        )
    }
}

pub fn parse(src: &SourceSpec) -> Result<Ast, SyntaxError> {
    let mut ast = Ast::default();
    for (k, (_, text)) in src.files.iter().enumerate() {
        ast.templates.extend(parser::parse_file(k as u32, text)?);
    }
    Ok(ast)
}

/// Parses, checks and flattens a specification.
pub fn compile(src: &SourceSpec) -> Result<SpecModel, FrontendError> {
    if src.files.is_empty() {
        return Err(FrontendError::NoFiles);
    }
    let ast = parse(src)?;
    let typed = typecheck(&ast)?;
    let mut model = flatten(&typed, &src.entry)?;
    model.files = src.files.iter().map(|(p, _)| p.clone()).collect();
    Ok(model)
}

fn scope(model: &SpecModel, ctx: &flatten::Ctx) -> (String, Vec<(String, Type)>) {
    let template = model.instances[ctx.inst].template.clone();
    let locals = ctx
        .task
        .map(|t| {
            model.tasks[t]
                .params
                .iter()
                .map(|p| (p.name.clone(), p.ty.clone()))
                .collect()
        })
        .unwrap_or_default();
    (template, locals)
}

/// Parses, checks and lowers statement text written in the scope of `ctx`
/// (for example a controller action typed into the debugger). Positions
/// refer to a pseudo-file numbered after the model's files.
pub fn compile_statements(
    model: &SpecModel,
    ctx: &flatten::Ctx,
    text: &str,
) -> Result<Vec<crate::model::MStmt>, FrontendError> {
    let file = model.files.len() as u32;
    let mut stmts = parser::parse_statements(file, text)?;
    let g = typecheck::Globals::build(&model.ast)?;
    let (template, locals) = scope(model, ctx);
    for s in &mut stmts {
        typecheck::check_stmt(&g, &template, &locals, s)?;
    }
    stmts
        .iter()
        .map(|s| flatten::lower_stmt(model, ctx, s))
        .collect()
}

/// Parses, checks and lowers a Boolean expression in the scope of `ctx`.
pub fn compile_condition(
    model: &SpecModel,
    ctx: &flatten::Ctx,
    text: &str,
) -> Result<crate::model::MExpr, FrontendError> {
    let file = model.files.len() as u32;
    let mut e = parser::parse_expr(file, text)?;
    let g = typecheck::Globals::build(&model.ast)?;
    let (template, locals) = scope(model, ctx);
    typecheck::check_expr(&g, &template, &locals, &mut e, Some(&Type::Bool))?;
    flatten::lower_expr_in(model, ctx, &e)
}
