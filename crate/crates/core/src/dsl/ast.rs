use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based source position.
///
/// Spans never participate in equality, so two trees that differ only in
/// layout compare equal.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub pragmas: Vec<Pragma>,
    pub params: Vec<ParamDecl>,
    pub statements: Vec<Statement>,
}

impl Program {
    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.initial).collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pragma {
    pub name: String,
    pub value: f64,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub initial: f64,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn from_name(s: &str) -> Option<Axis> {
        match s {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Built-in smooth functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Exp,
    Log,
    Pow,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "pow" => Func::Pow,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Num(f64),
    Ident(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    /// `solid[index].axis`
    VertexCoord {
        solid: String,
        index: Box<Expr>,
        axis: Axis,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    pub fn num(v: f64) -> Self {
        Self::new(ExprKind::Num(v), Span::default())
    }

    /// Visits this expression and every sub-expression, parents first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Num(_) | ExprKind::Ident(_) => {}
            ExprKind::Neg(e) => e.walk(f),
            ExprKind::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            ExprKind::VertexCoord { index, .. } => index.walk(f),
        }
    }
}

/// An entry of a vertex selection: a single index or a half-open range.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Index(Expr),
    Range(Expr, Expr),
}

/// The object a transform applies to: a whole solid or a subset of its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub solid: String,
    pub selection: Option<Vec<SelectItem>>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box {
        w: Expr,
        h: Expr,
        d: Expr,
    },
    Cylinder {
        r: Expr,
        h: Expr,
        sides: Expr,
    },
    /// Planar rectangle profile in the XY plane.
    Rect {
        w: Expr,
        h: Expr,
    },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Box { .. } => "box",
            Shape::Cylinder { .. } => "cylinder",
            Shape::Rect { .. } => "rect",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleFactors {
    Uniform(Expr),
    PerAxis([Expr; 3]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub kind: StatementKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatementKind {
    Let {
        name: String,
        value: Expr,
    },
    Solid {
        name: String,
        shape: Shape,
    },
    Translate {
        target: Target,
        offset: [Expr; 3],
    },
    Rotate {
        target: Target,
        axis: Axis,
        angle: Expr,
    },
    Scale {
        target: Target,
        factors: ScaleFactors,
    },
    Extrude {
        solid: String,
        face: Expr,
        length: Expr,
    },
    Chamfer {
        solid: String,
        corner: Expr,
        radius: Expr,
    },
    Clamp {
        lo: Expr,
        value: Expr,
        hi: Expr,
    },
    Loop {
        var: String,
        start: Expr,
        end: Expr,
        body: Vec<Statement>,
    },
}

impl StatementKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            StatementKind::Let { .. } => "let",
            StatementKind::Solid { .. } => "solid",
            StatementKind::Translate { .. } => "translate",
            StatementKind::Rotate { .. } => "rotate",
            StatementKind::Scale { .. } => "scale",
            StatementKind::Extrude { .. } => "extrude",
            StatementKind::Chamfer { .. } => "chamfer",
            StatementKind::Clamp { .. } => "clamp",
            StatementKind::Loop { .. } => "for",
        }
    }
}
