use serde::{Deserialize, Serialize};

/// Source position: file index, 1-based line and column, and byte offset.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Pos {
    pub file: u32,
    pub line: u32,
    pub col: u32,
    pub offset: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub pos: Pos,
}

impl Ident {
    pub fn new(name: impl Into<String>, pos: Pos) -> Ident {
        Ident {
            name: name.into(),
            pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Ast {
    pub templates: Vec<TemplateDecl>,
}

impl Ast {
    pub fn template(&self, name: &str) -> Option<&TemplateDecl> {
        self.templates.iter().find(|t| t.name.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateDecl {
    pub name: Ident,
    pub ports: Vec<Port>,
    pub items: Vec<Item>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Port {
    pub template: Ident,
    pub name: Ident,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Instance {
        template: Ident,
        name: Ident,
        args: Vec<Ident>,
    },
    Enum {
        name: Ident,
        variants: Vec<Ident>,
    },
    Var {
        ty: TypeRef,
        name: Ident,
        init: Option<Expr>,
    },
    Process {
        name: Ident,
        body: Block,
    },
    Task {
        name: Ident,
        controllable: bool,
        params: Vec<Param>,
        body: Block,
    },
    Goal {
        name: Ident,
        expr: Expr,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeRef {
    Bool,
    Uint(u32),
    Named(Ident),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub ty: TypeRef,
    pub name: Ident,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    If {
        cond: Expr,
        then: Box<Stmt>,
        els: Option<Box<Stmt>>,
    },
    Forever(Block),
    Block(Block),
    Pause,
    Assert(Expr),
    /// The `...` placeholder.
    Magic,
    Assign {
        lhs: LValue,
        rhs: Expr,
    },
    Call {
        target: Path,
        args: Vec<Expr>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub segments: Vec<Ident>,
}

impl Path {
    pub fn pos(&self) -> Pos {
        self.segments[0].pos
    }

    pub fn dotted(&self) -> String {
        self.segments
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>()
            .join(".")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LValue {
    pub path: Path,
    pub slice: Option<(u32, u32)>,
}

/// Resolved type of an expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Bool,
    Uint(u32),
    /// Enumeration declared in `template` under `name`, with `size` values.
    Enum {
        template: String,
        name: String,
        size: u32,
    },
}

impl Type {
    /// Number of Boolean variables needed to store a value of this type.
    pub fn width(&self) -> u32 {
        match self {
            Type::Bool => 1,
            Type::Uint(n) => *n,
            Type::Enum { size, .. } => bits_for(*size),
        }
    }

    /// Number of legal values, saturating at `u64::MAX` for 64-bit ints.
    pub fn cardinality(&self) -> u64 {
        match self {
            Type::Bool => 2,
            Type::Uint(64) => u64::MAX,
            Type::Uint(n) => 1u64 << n,
            Type::Enum { size, .. } => *size as u64,
        }
    }
}

impl std::fmt::Display for Type {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Type::Bool => write!(f, "bool"),
            Type::Uint(n) => write!(f, "uint{n}"),
            Type::Enum { template, name, .. } => write!(f, "{template}.{name}"),
        }
    }
}

/// Minimum number of bits able to distinguish `n` values (at least one).
pub fn bits_for(n: u32) -> u32 {
    let mut w = 0;
    while (1u64 << w) < n as u64 {
        w += 1;
    }
    w.max(1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
    /// Filled in by the type checker.
    pub ty: Option<Type>,
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Expr {
        Expr {
            kind,
            pos,
            ty: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Bool(bool),
    Int(u64),
    /// `*`
    Nondet,
    Path(Path),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `e[hi:lo]`
    Slice(Box<Expr>, u32, u32),
}

/// Clears positions and type annotations so two trees can be compared
/// structurally.
pub trait Normalize {
    fn normalize(&mut self);
}

impl Normalize for Ident {
    fn normalize(&mut self) {
        self.pos = Pos::default();
    }
}

impl Normalize for Path {
    fn normalize(&mut self) {
        self.segments.iter_mut().for_each(Normalize::normalize);
    }
}

impl Normalize for Expr {
    fn normalize(&mut self) {
        self.pos = Pos::default();
        self.ty = None;
        match &mut self.kind {
            ExprKind::Path(p) => p.normalize(),
            ExprKind::Unary(_, e) | ExprKind::Slice(e, _, _) => e.normalize(),
            ExprKind::Binary(_, a, b) => {
                a.normalize();
                b.normalize();
            }
            ExprKind::Bool(_) | ExprKind::Int(_) | ExprKind::Nondet => {}
        }
    }
}

impl Normalize for TypeRef {
    fn normalize(&mut self) {
        if let TypeRef::Named(i) = self {
            i.normalize();
        }
    }
}

impl Normalize for Block {
    fn normalize(&mut self) {
        self.pos = Pos::default();
        self.stmts.iter_mut().for_each(Normalize::normalize);
    }
}

impl Normalize for Stmt {
    fn normalize(&mut self) {
        self.pos = Pos::default();
        match &mut self.kind {
            StmtKind::If { cond, then, els } => {
                cond.normalize();
                then.normalize();
                if let Some(e) = els {
                    e.normalize();
                }
            }
            StmtKind::Forever(b) | StmtKind::Block(b) => b.normalize(),
            StmtKind::Assert(e) => e.normalize(),
            StmtKind::Assign { lhs, rhs } => {
                lhs.path.normalize();
                rhs.normalize();
            }
            StmtKind::Call { target, args } => {
                target.normalize();
                args.iter_mut().for_each(Normalize::normalize);
            }
            StmtKind::Pause | StmtKind::Magic => {}
        }
    }
}

impl Normalize for Item {
    fn normalize(&mut self) {
        match self {
            Item::Instance {
                template,
                name,
                args,
            } => {
                template.normalize();
                name.normalize();
                args.iter_mut().for_each(Normalize::normalize);
            }
            Item::Enum { name, variants } => {
                name.normalize();
                variants.iter_mut().for_each(Normalize::normalize);
            }
            Item::Var { ty, name, init } => {
                ty.normalize();
                name.normalize();
                if let Some(e) = init {
                    e.normalize();
                }
            }
            Item::Process { name, body } => {
                name.normalize();
                body.normalize();
            }
            Item::Task {
                name, params, body, ..
            } => {
                name.normalize();
                for p in params {
                    p.ty.normalize();
                    p.name.normalize();
                }
                body.normalize();
            }
            Item::Goal { name, expr } => {
                name.normalize();
                expr.normalize();
            }
        }
    }
}

impl Normalize for Ast {
    fn normalize(&mut self) {
        for t in &mut self.templates {
            t.pos = Pos::default();
            t.name.normalize();
            for p in &mut t.ports {
                p.template.normalize();
                p.name.normalize();
            }
            t.items.iter_mut().for_each(Normalize::normalize);
        }
    }
}
