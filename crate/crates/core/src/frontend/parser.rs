use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::SyntaxError;

type PResult<T> = Result<T, SyntaxError>;

pub struct Parser {
    toks: Vec<Token>,
    i: usize,
}

/// Parses one source file into its templates.
pub fn parse_file(file: u32, text: &str) -> PResult<Vec<TemplateDecl>> {
    let mut p = Parser::new(file, text)?;
    let mut out = Vec::new();
    while !p.at_eof() {
        if p.eat_punct(";") {
            continue;
        }
        out.push(p.template()?);
    }
    Ok(out)
}

/// Parses a sequence of statements (used for debugger commands and
/// generated code fragments).
pub fn parse_statements(file: u32, text: &str) -> PResult<Vec<Stmt>> {
    let mut p = Parser::new(file, text)?;
    let mut out = Vec::new();
    while !p.at_eof() {
        if p.eat_punct(";") {
            continue;
        }
        out.push(p.stmt()?);
    }
    Ok(out)
}

pub fn parse_expr(file: u32, text: &str) -> PResult<Expr> {
    let mut p = Parser::new(file, text)?;
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.unexpected(&["end of input"]));
    }
    Ok(e)
}

impl Parser {
    fn new(file: u32, text: &str) -> PResult<Parser> {
        Ok(Parser {
            toks: lex(file, text)?,
            i: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> SyntaxError {
        SyntaxError {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(q) if *q == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Pos> {
        if self.is_punct(p) {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&[&format!("`{p}`")]))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<Pos> {
        if self.is_kw(k) {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&[&format!("`{k}`")]))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.bump().pos;
                Ok(Ident { name, pos })
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn int(&mut self) -> PResult<u64> {
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => Err(self.unexpected(&["integer"])),
        }
    }

    fn small_int(&mut self) -> PResult<u32> {
        let pos = self.pos();
        let v = self.int()?;
        u32::try_from(v).map_err(|_| SyntaxError {
            pos,
            expected: vec!["bit index".into()],
            found: format!("integer `{v}`"),
        })
    }

    fn template(&mut self) -> PResult<TemplateDecl> {
        let pos = self.expect_kw("template")?;
        let name = self.ident()?;
        let mut ports = Vec::new();
        if self.eat_punct("(") {
            if !self.is_punct(")") {
                loop {
                    let template = self.ident()?;
                    let name = self.ident()?;
                    ports.push(Port { template, name });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            self.expect_punct(")")?;
        }
        let mut items = Vec::new();
        loop {
            if self.eat_kw("endtemplate") {
                break;
            }
            if self.eat_punct(";") {
                continue;
            }
            items.push(self.item()?);
        }
        Ok(TemplateDecl {
            name,
            ports,
            items,
            pos,
        })
    }

    fn item(&mut self) -> PResult<Item> {
        match self.peek().clone() {
            Tok::Kw("instance") => {
                self.bump();
                let template = self.ident()?;
                let name = self.ident()?;
                let mut args = Vec::new();
                if self.eat_punct("(") {
                    if !self.is_punct(")") {
                        loop {
                            args.push(self.ident()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                }
                self.expect_punct(";")?;
                Ok(Item::Instance {
                    template,
                    name,
                    args,
                })
            }
            Tok::Kw("typedef") => {
                self.bump();
                self.expect_kw("enum")?;
                self.expect_punct("{")?;
                let mut variants = Vec::new();
                loop {
                    variants.push(self.ident()?);
                    if !self.eat_punct(",") || self.is_punct("}") {
                        break;
                    }
                }
                self.expect_punct("}")?;
                let name = self.ident()?;
                self.expect_punct(";")?;
                Ok(Item::Enum { name, variants })
            }
            Tok::Kw("process") => {
                self.bump();
                let name = self.ident()?;
                let body = self.block()?;
                Ok(Item::Process { name, body })
            }
            Tok::Kw("task") => {
                self.bump();
                let controllable = self.eat_kw("controllable");
                self.expect_kw("void")?;
                let name = self.ident()?;
                self.expect_punct("(")?;
                let mut params = Vec::new();
                if !self.is_punct(")") {
                    loop {
                        let ty = self.type_ref()?;
                        let name = self.ident()?;
                        params.push(Param { ty, name });
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.expect_punct(")")?;
                let body = self.block()?;
                Ok(Item::Task {
                    name,
                    controllable,
                    params,
                    body,
                })
            }
            Tok::Kw("goal") => {
                self.bump();
                let name = self.ident()?;
                self.expect_punct("=")?;
                let expr = self.expr()?;
                self.expect_punct(";")?;
                Ok(Item::Goal { name, expr })
            }
            Tok::Kw("bool") | Tok::Ident(_) => {
                let ty = self.type_ref()?;
                let name = self.ident()?;
                let init = if self.eat_punct("=") {
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect_punct(";")?;
                Ok(Item::Var { ty, name, init })
            }
            _ => Err(self.unexpected(&[
                "`instance`",
                "`typedef`",
                "`process`",
                "`task`",
                "`goal`",
                "variable declaration",
                "`endtemplate`",
            ])),
        }
    }

    fn type_ref(&mut self) -> PResult<TypeRef> {
        if self.eat_kw("bool") {
            return Ok(TypeRef::Bool);
        }
        let id = self.ident()?;
        if let Some(n) = id
            .name
            .strip_prefix("uint")
            .and_then(|d| d.parse::<u32>().ok())
        {
            return Ok(TypeRef::Uint(n));
        }
        Ok(TypeRef::Named(id))
    }

    fn block(&mut self) -> PResult<Block> {
        let pos = self.expect_punct("{")?;
        let mut stmts = Vec::new();
        loop {
            if self.eat_punct("}") {
                break;
            }
            if self.eat_punct(";") {
                continue;
            }
            if self.at_eof() {
                return Err(self.unexpected(&["`}`"]));
            }
            stmts.push(self.stmt()?);
        }
        Ok(Block { stmts, pos })
    }

    pub fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Kw("if") => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let then = Box::new(self.stmt()?);
                let els = if self.eat_kw("else") {
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                StmtKind::If { cond, then, els }
            }
            Tok::Kw("forever") => {
                self.bump();
                StmtKind::Forever(self.block()?)
            }
            Tok::Punct("{") => StmtKind::Block(self.block()?),
            Tok::Kw("pause") => {
                self.bump();
                self.expect_punct(";")?;
                StmtKind::Pause
            }
            Tok::Kw("assert") => {
                self.bump();
                self.expect_punct("(")?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                StmtKind::Assert(e)
            }
            Tok::Punct("...") => {
                self.bump();
                self.expect_punct(";")?;
                StmtKind::Magic
            }
            Tok::Ident(_) => {
                let path = self.path()?;
                if self.eat_punct("(") {
                    let mut args = Vec::new();
                    if !self.is_punct(")") {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                    self.expect_punct(";")?;
                    StmtKind::Call { target: path, args }
                } else {
                    let slice = if self.eat_punct("[") {
                        let hi = self.small_int()?;
                        let lo = if self.eat_punct(":") {
                            self.small_int()?
                        } else {
                            hi
                        };
                        self.expect_punct("]")?;
                        Some((hi, lo))
                    } else {
                        None
                    };
                    if !self.is_punct("=") {
                        return Err(self.unexpected(&["`=`", "`(`"]));
                    }
                    self.bump();
                    let rhs = self.expr()?;
                    self.expect_punct(";")?;
                    StmtKind::Assign {
                        lhs: LValue { path, slice },
                        rhs,
                    }
                }
            }
            _ => {
                return Err(self.unexpected(&[
                    "`if`",
                    "`forever`",
                    "`{`",
                    "`pause`",
                    "`assert`",
                    "`...`",
                    "identifier",
                ]))
            }
        };
        Ok(Stmt { kind, pos })
    }

    fn path(&mut self) -> PResult<Path> {
        let mut segments = vec![self.ident()?];
        while self.is_punct(".") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            segments.push(self.ident()?);
        }
        Ok(Path { segments })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::Punct("||") => BinOp::Or,
            Tok::Punct("&&") => BinOp::And,
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            _ => return None,
        };
        Some(op)
    }

    // Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            let pos = lhs.pos;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.is_punct("!") {
            let pos = self.bump().pos;
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), pos));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat_punct("[") {
            let hi = self.small_int()?;
            let lo = if self.eat_punct(":") {
                self.small_int()?
            } else {
                hi
            };
            self.expect_punct("]")?;
            let pos = e.pos;
            e = Expr::new(ExprKind::Slice(Box::new(e), hi, lo), pos);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                ExprKind::Int(v)
            }
            Tok::Kw("true") => {
                self.bump();
                ExprKind::Bool(true)
            }
            Tok::Kw("false") => {
                self.bump();
                ExprKind::Bool(false)
            }
            Tok::Punct("*") => {
                self.bump();
                ExprKind::Nondet
            }
            Tok::Ident(_) => ExprKind::Path(self.path()?),
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                return Ok(Expr { pos, ..e });
            }
            _ => return Err(self.unexpected(&["expression"])),
        };
        Ok(Expr::new(kind, pos))
    }
}
