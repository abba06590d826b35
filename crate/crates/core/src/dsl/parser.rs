//! Lexer and recursive-descent parser for `.dcad` sources.
//!
//! The language is line oriented: each statement ends at a newline, except
//! inside parentheses or brackets where newlines are ignored. Loop bodies are
//! delimited by braces.

use super::ast::*;
use crate::error::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Dot,
    DotDot,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(v) => format!("number `{v}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Dot => "`.`".into(),
            Tok::DotDot => "`..`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    // Newlines inside () and [] are not statement terminators.
    let mut depth = 0i32;

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        let mut advance = 1;
        match c {
            '\n' => {
                if depth == 0 {
                    out.push(Token {
                        tok: Tok::Newline,
                        span,
                    });
                }
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '(' | '[' => {
                depth += 1;
                out.push(Token {
                    tok: if c == '(' { Tok::LParen } else { Tok::LBracket },
                    span,
                });
            }
            ')' | ']' => {
                depth -= 1;
                out.push(Token {
                    tok: if c == ')' { Tok::RParen } else { Tok::RBracket },
                    span,
                });
            }
            '{' => out.push(Token {
                tok: Tok::LBrace,
                span,
            }),
            '}' => out.push(Token {
                tok: Tok::RBrace,
                span,
            }),
            ',' => out.push(Token {
                tok: Tok::Comma,
                span,
            }),
            '=' => out.push(Token { tok: Tok::Eq, span }),
            '+' => out.push(Token {
                tok: Tok::Plus,
                span,
            }),
            '-' => out.push(Token {
                tok: Tok::Minus,
                span,
            }),
            '*' => out.push(Token {
                tok: Tok::Star,
                span,
            }),
            '/' => out.push(Token {
                tok: Tok::Slash,
                span,
            }),
            '.' => {
                if chars.get(i + 1) == Some(&'.') {
                    out.push(Token {
                        tok: Tok::DotDot,
                        span,
                    });
                    advance = 2;
                } else if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    let (v, n) = lex_number(&chars, i, span)?;
                    out.push(Token {
                        tok: Tok::Number(v),
                        span,
                    });
                    advance = n;
                } else {
                    out.push(Token {
                        tok: Tok::Dot,
                        span,
                    });
                }
            }
            c if c.is_ascii_digit() => {
                let (v, n) = lex_number(&chars, i, span)?;
                out.push(Token {
                    tok: Tok::Number(v),
                    span,
                });
                advance = n;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..j].iter().collect()),
                    span,
                });
                advance = j - i;
            }
            other => {
                return Err(SyntaxError::new(
                    span,
                    format!("unexpected character `{other}`"),
                    vec![],
                ));
            }
        }
        i += advance;
        col += advance as u32;
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}

fn lex_number(chars: &[char], start: usize, span: Span) -> Result<(f64, usize), SyntaxError> {
    let mut j = start;
    let digits = |j: &mut usize| {
        while *j < chars.len() && chars[*j].is_ascii_digit() {
            *j += 1;
        }
    };
    digits(&mut j);
    // `0..4` is a range, not a float.
    if j < chars.len()
        && chars[j] == '.'
        && chars.get(j + 1) != Some(&'.')
        && chars.get(j + 1).is_some_and(|c| c.is_ascii_digit())
    {
        j += 1;
        digits(&mut j);
    }
    if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
        let mut k = j + 1;
        if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
            k += 1;
        }
        if k < chars.len() && chars[k].is_ascii_digit() {
            j = k;
            digits(&mut j);
        }
    }
    let text: String = chars[start..j].iter().collect();
    text.parse::<f64>()
        .map(|v| (v, j - start))
        .map_err(|_| SyntaxError::new(span, format!("malformed number `{text}`"), vec![]))
}

/// Parses a `.dcad` source into a [`Program`].
pub fn parse(src: &str) -> Result<Program, SyntaxError> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>, expected: &[&str]) -> SyntaxError {
        SyntaxError::new(
            self.span(),
            message.into(),
            expected.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn unexpected(&self, expected: &[&str]) -> SyntaxError {
        self.error(format!("unexpected {}", self.peek().describe()), expected)
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&[expected]))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Tok::Newline {
            self.bump();
        }
    }

    fn end_of_statement(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof | Tok::RBrace => Ok(()),
            _ => Err(self.unexpected(&["end of line"])),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        loop {
            self.skip_newlines();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "param" => {
                    let span = self.bump().span;
                    let (name, _) = self.ident()?;
                    self.expect(Tok::Eq, "`=`")?;
                    let initial = self.signed_number()?;
                    prog.params.push(ParamDecl {
                        name,
                        initial,
                        span,
                    });
                    self.end_of_statement()?;
                }
                Tok::Ident(kw) if kw == "pragma" => {
                    let span = self.bump().span;
                    let (name, _) = self.ident()?;
                    self.expect(Tok::Eq, "`=`")?;
                    let value = self.signed_number()?;
                    prog.pragmas.push(Pragma { name, value, span });
                    self.end_of_statement()?;
                }
                Tok::RBrace => return Err(self.error("unmatched `}`", &["statement"])),
                _ => {
                    let s = self.statement()?;
                    prog.statements.push(s);
                }
            }
        }
        Ok(prog)
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected(&["number"])),
        }
    }

    fn statement(&mut self) -> PResult<Statement> {
        let span = self.span();
        let (head, _) = match self.peek() {
            Tok::Ident(_) => self.ident()?,
            _ => return Err(self.unexpected(&["statement"])),
        };
        let kind = match head.as_str() {
            "param" | "pragma" => {
                return Err(SyntaxError::new(
                    span,
                    format!("`{head}` is only allowed at the top level"),
                    vec!["statement".into()],
                ))
            }
            "let" => {
                let (name, _) = self.ident()?;
                self.expect(Tok::Eq, "`=`")?;
                let value = self.expr()?;
                StatementKind::Let { name, value }
            }
            "solid" => {
                let (name, _) = self.ident()?;
                self.expect(Tok::Eq, "`=`")?;
                let shape = self.shape()?;
                StatementKind::Solid { name, shape }
            }
            "for" => {
                let (var, _) = self.ident()?;
                match self.ident()? {
                    (kw, _) if kw == "in" => {}
                    (_, s) => {
                        return Err(SyntaxError::new(
                            s,
                            "expected `in`".into(),
                            vec!["`in`".into()],
                        ))
                    }
                }
                let start = self.expr()?;
                self.expect(Tok::DotDot, "`..`")?;
                let end = self.expr()?;
                self.expect(Tok::LBrace, "`{`")?;
                let mut body = Vec::new();
                loop {
                    self.skip_newlines();
                    match self.peek() {
                        Tok::RBrace => {
                            self.bump();
                            break;
                        }
                        Tok::Eof => return Err(self.error("unclosed loop body", &["`}`"])),
                        _ => body.push(self.statement()?),
                    }
                }
                StatementKind::Loop {
                    var,
                    start,
                    end,
                    body,
                }
            }
            "translate" | "rotate" | "scale" | "extrude" | "chamfer" | "clamp" => {
                self.operation(&head, span)?
            }
            other => {
                return Err(SyntaxError::new(
                    span,
                    format!("unknown statement `{other}`"),
                    [
                        "let",
                        "solid",
                        "for",
                        "translate",
                        "rotate",
                        "scale",
                        "extrude",
                        "chamfer",
                        "clamp",
                    ]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                ))
            }
        };
        self.end_of_statement()?;
        Ok(Statement { kind, span })
    }

    fn open_args(&mut self) -> PResult<Span> {
        self.expect(Tok::LParen, "`(`")
    }

    fn comma(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Comma => {
                self.bump();
                Ok(())
            }
            Tok::Eof | Tok::Newline => Err(self.error("unclosed argument list", &["`,`"])),
            _ => Err(self.unexpected(&["`,`"])),
        }
    }

    fn close_args(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            Tok::Eof | Tok::Newline => Err(self.error("unclosed argument list", &["`)`"])),
            Tok::Comma => Err(self.error("too many arguments", &["`)`"])),
            _ => Err(self.unexpected(&["`)`"])),
        }
    }

    /// Parses `n` comma-separated expressions (the opening paren already consumed).
    fn expr_args(&mut self, n: usize) -> PResult<Vec<Expr>> {
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                self.comma()?;
            }
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn shape(&mut self) -> PResult<Shape> {
        let (name, span) = self.ident()?;
        self.open_args()?;
        let shape = match name.as_str() {
            "box" => {
                let [w, h, d] = take3(self.expr_args(3)?);
                Shape::Box { w, h, d }
            }
            "cylinder" => {
                let [r, h, sides] = take3(self.expr_args(3)?);
                Shape::Cylinder { r, h, sides }
            }
            "rect" => {
                let mut a = self.expr_args(2)?.into_iter();
                Shape::Rect {
                    w: a.next().unwrap(),
                    h: a.next().unwrap(),
                }
            }
            other => {
                return Err(SyntaxError::new(
                    span,
                    format!("unknown primitive `{other}`"),
                    vec!["box".into(), "cylinder".into(), "rect".into()],
                ))
            }
        };
        self.close_args()?;
        Ok(shape)
    }

    fn target(&mut self) -> PResult<Target> {
        let (solid, span) = self.ident()?;
        let selection = if *self.peek() == Tok::LBracket {
            self.bump();
            let mut items = Vec::new();
            loop {
                let a = self.expr()?;
                if *self.peek() == Tok::DotDot {
                    self.bump();
                    let b = self.expr()?;
                    items.push(SelectItem::Range(a, b));
                } else {
                    items.push(SelectItem::Index(a));
                }
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RBracket => {
                        self.bump();
                        break;
                    }
                    _ => return Err(self.unexpected(&["`,`", "`]`"])),
                }
            }
            Some(items)
        } else {
            None
        };
        Ok(Target {
            solid,
            selection,
            span,
        })
    }

    fn operation(&mut self, head: &str, span: Span) -> PResult<StatementKind> {
        self.open_args()?;
        let kind = match head {
            "translate" => {
                let target = self.target()?;
                self.comma()?;
                let offset = take3(self.expr_args(3)?);
                StatementKind::Translate { target, offset }
            }
            "rotate" => {
                let target = self.target()?;
                self.comma()?;
                let (ax, ax_span) = self.ident()?;
                let axis = Axis::from_name(&ax).ok_or_else(|| {
                    SyntaxError::new(
                        ax_span,
                        format!("unknown axis `{ax}`"),
                        vec!["x".into(), "y".into(), "z".into()],
                    )
                })?;
                self.comma()?;
                let angle = self.expr()?;
                StatementKind::Rotate {
                    target,
                    axis,
                    angle,
                }
            }
            "scale" => {
                let target = self.target()?;
                self.comma()?;
                let first = self.expr()?;
                let factors = if *self.peek() == Tok::Comma {
                    self.bump();
                    let rest = self.expr_args(2)?;
                    let mut it = rest.into_iter();
                    ScaleFactors::PerAxis([first, it.next().unwrap(), it.next().unwrap()])
                } else {
                    ScaleFactors::Uniform(first)
                };
                StatementKind::Scale { target, factors }
            }
            "extrude" | "chamfer" => {
                let (solid, _) = self.ident()?;
                self.comma()?;
                let mut a = self.expr_args(2)?.into_iter();
                let (idx, amount) = (a.next().unwrap(), a.next().unwrap());
                if head == "extrude" {
                    StatementKind::Extrude {
                        solid,
                        face: idx,
                        length: amount,
                    }
                } else {
                    StatementKind::Chamfer {
                        solid,
                        corner: idx,
                        radius: amount,
                    }
                }
            }
            "clamp" => {
                let [lo, value, hi] = take3(self.expr_args(3)?);
                StatementKind::Clamp { lo, value, hi }
            }
            _ => unreachable!("dispatch covers {head} at {span}"),
        };
        self.close_args()?;
        Ok(kind)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let span = self.bump().span;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let span = self.bump().span;
            let inner = self.unary()?;
            // Negative literals fold so that printing and re-parsing is stable.
            return Ok(match inner.kind {
                ExprKind::Num(v) => Expr::new(ExprKind::Num(-v), span),
                _ => Expr::new(ExprKind::Neg(Box::new(inner)), span),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Num(v), span))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                match self.peek() {
                    Tok::RParen => {
                        self.bump();
                        Ok(e)
                    }
                    Tok::Eof | Tok::Newline => Err(self.error("unclosed parenthesis", &["`)`"])),
                    _ => Err(self.unexpected(&["`)`"])),
                }
            }
            Tok::Ident(name) => {
                self.bump();
                match self.peek() {
                    Tok::LParen => {
                        let func = Func::from_name(&name).ok_or_else(|| {
                            SyntaxError::new(
                                span,
                                format!("unknown function `{name}`"),
                                ["sin", "cos", "sqrt", "exp", "log", "pow"]
                                    .iter()
                                    .map(|s| s.to_string())
                                    .collect(),
                            )
                        })?;
                        self.bump();
                        let args = self.expr_args(func.arity())?;
                        self.close_args()?;
                        Ok(Expr::new(ExprKind::Call(func, args), span))
                    }
                    Tok::LBracket => {
                        self.bump();
                        let index = self.expr()?;
                        self.expect(Tok::RBracket, "`]`")?;
                        self.expect(Tok::Dot, "`.`")?;
                        let (ax, ax_span) = self.ident()?;
                        let axis = Axis::from_name(&ax).ok_or_else(|| {
                            SyntaxError::new(
                                ax_span,
                                format!("unknown axis `{ax}`"),
                                vec!["x".into(), "y".into(), "z".into()],
                            )
                        })?;
                        Ok(Expr::new(
                            ExprKind::VertexCoord {
                                solid: name,
                                index: Box::new(index),
                                axis,
                            },
                            span,
                        ))
                    }
                    _ => Ok(Expr::new(ExprKind::Ident(name), span)),
                }
            }
            Tok::Eof | Tok::Newline => {
                Err(self.error("unexpected end of expression", &["expression"]))
            }
            _ => Err(self.unexpected(&["expression"])),
        }
    }
}

fn take3(v: Vec<Expr>) -> [Expr; 3] {
    let mut it = v.into_iter();
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_param() {
        let p = parse("param w = 1.0").unwrap();
        assert_eq!(p.params.len(), 1);
        assert_eq!(p.statements.len(), 0);
        assert_eq!(p.params[0].initial, 1.0);
    }

    #[test]
    fn minimal_program() {
        let p = parse("param w = 1.0\nsolid b = box(w, 1.0, 1.0)").unwrap();
        assert_eq!(p.params.len(), 1);
        assert_eq!(p.statements.len(), 1);
    }

    #[test]
    fn unclosed_argument_list() {
        let e = parse("solid b = box(").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(
            e.message.contains("unclosed argument list") || e.message.contains("end of expression"),
            "{e}"
        );
        let e = parse("solid b = box(1, 2").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("unclosed argument list"), "{e}");
        assert!(e.expected.contains(&"`,`".to_string()));
    }

    #[test]
    fn ranges_do_not_lex_as_floats() {
        let p = parse("for i in 0..4 {\n let a = i\n}").unwrap();
        match &p.statements[0].kind {
            StatementKind::Loop {
                start, end, body, ..
            } => {
                assert_eq!(start.kind, ExprKind::Num(0.0));
                assert_eq!(end.kind, ExprKind::Num(4.0));
                assert_eq!(body.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vertex_coordinates_and_selections() {
        let p = parse("solid b = box(1,1,1)\ntranslate(b[0, 2..4], b[1].x, 0, -1e-3)").unwrap();
        match &p.statements[1].kind {
            StatementKind::Translate { target, offset } => {
                assert_eq!(target.selection.as_ref().unwrap().len(), 2);
                assert!(matches!(
                    offset[0].kind,
                    ExprKind::VertexCoord { axis: Axis::X, .. }
                ));
                assert_eq!(offset[2].kind, ExprKind::Num(-1e-3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn newlines_inside_parens_are_ignored() {
        let p = parse("solid b = box(\n 1,\n 2,\n 3)\n").unwrap();
        assert_eq!(p.statements.len(), 1);
    }

    #[test]
    fn error_positions() {
        let e = parse("param w = 1\nlet x = w +\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse("param w = 1\nfrobnicate(w)").unwrap_err();
        assert_eq!((e.line, e.col), (2, 1));
        let e = parse("let a = 1 $ 2").unwrap_err();
        assert_eq!(e.col, 11);
    }

    #[test]
    fn param_only_top_level() {
        assert!(parse("for i in 0..2 {\nparam q = 1\n}").is_err());
    }
}
