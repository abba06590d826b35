use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::printer::print_expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub line: u32,
    pub col: u32,
}

impl Diagnostic {
    fn error(span: Span, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
            line: span.line,
            col: span.col,
        }
    }

    fn warning(span: Span, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
            line: span.line,
            col: span.col,
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.line, self.col, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

pub const KNOWN_PRAGMAS: &[&str] = &["epsilon"];

/// Checks the static rules of the language. Returns an empty list iff the
/// program is clean; warnings do not block interpretation.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut v = Validator {
        diags: Vec::new(),
        params: HashSet::new(),
        lets: HashSet::new(),
        loop_vars: Vec::new(),
        solids: HashSet::new(),
        positive: positive_clamped(program),
    };
    for pr in &program.pragmas {
        if !KNOWN_PRAGMAS.contains(&pr.name.as_str()) {
            v.diags.push(Diagnostic::error(
                pr.span,
                format!("unknown pragma `{}`", pr.name),
            ));
        } else if !(pr.value.is_finite() && pr.value > 0.0) {
            v.diags.push(Diagnostic::error(
                pr.span,
                format!("pragma `{}` must be a positive number", pr.name),
            ));
        }
    }
    let mut seen = HashMap::new();
    for p in &program.params {
        if seen.insert(p.name.as_str(), p.span).is_some() {
            v.diags.push(Diagnostic::error(
                p.span,
                format!("duplicate parameter `{}`", p.name),
            ));
        }
        if !p.initial.is_finite() {
            v.diags.push(Diagnostic::error(
                p.span,
                format!("initial value of `{}` is not finite", p.name),
            ));
        }
        v.params.insert(p.name.clone());
    }
    for s in &program.statements {
        v.statement(s);
    }
    v.diags
}

/// Canonical text of every expression that some clamp bounds strictly away
/// from zero by a constant.
fn positive_clamped(program: &Program) -> HashSet<String> {
    fn collect(stmts: &[Statement], out: &mut HashSet<String>) {
        for s in stmts {
            match &s.kind {
                StatementKind::Clamp { lo, value, hi } => {
                    let lo_pos = const_value(lo).is_some_and(|x| x > 0.0);
                    let hi_neg = const_value(hi).is_some_and(|x| x < 0.0);
                    if lo_pos || hi_neg {
                        out.insert(print_expr(value));
                    }
                }
                StatementKind::Loop { body, .. } => collect(body, out),
                _ => {}
            }
        }
    }
    let mut out = HashSet::new();
    collect(&program.statements, &mut out);
    out
}

/// Value of an expression made only of literals and smooth functions.
pub fn const_value(e: &Expr) -> Option<f64> {
    Some(match &e.kind {
        ExprKind::Num(v) => *v,
        ExprKind::Neg(a) => -const_value(a)?,
        ExprKind::Binary(op, a, b) => {
            let (a, b) = (const_value(a)?, const_value(b)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            }
        }
        ExprKind::Call(f, args) => {
            let a = const_value(&args[0])?;
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Sqrt => a.sqrt(),
                Func::Exp => a.exp(),
                Func::Log => a.ln(),
                Func::Pow => a.powf(const_value(&args[1])?),
            }
        }
        ExprKind::Ident(_) | ExprKind::VertexCoord { .. } => return None,
    })
    .filter(|v| v.is_finite())
}

struct Validator {
    diags: Vec<Diagnostic>,
    params: HashSet<String>,
    lets: HashSet<String>,
    loop_vars: Vec<String>,
    solids: HashSet<String>,
    positive: HashSet<String>,
}

impl Validator {
    fn statement(&mut self, s: &Statement) {
        match &s.kind {
            StatementKind::Let { name, value } => {
                self.scalar(value);
                if self.params.contains(name) || self.loop_vars.contains(name) {
                    self.diags.push(Diagnostic::error(
                        s.span,
                        format!("`{name}` shadows a parameter or loop variable"),
                    ));
                }
                self.lets.insert(name.clone());
            }
            StatementKind::Solid { name, shape } => {
                match shape {
                    Shape::Box { w, h, d } => [w, h, d].into_iter().for_each(|e| self.scalar(e)),
                    Shape::Rect { w, h } => [w, h].into_iter().for_each(|e| self.scalar(e)),
                    Shape::Cylinder { r, h, sides } => {
                        self.scalar(r);
                        self.scalar(h);
                        if self.index(sides, "cylinder side count must be an integer constant") {
                            if let Some(n) = const_value(sides) {
                                if n < 3.0 {
                                    self.diags.push(Diagnostic::error(
                                        sides.span,
                                        "cylinder needs at least 3 sides",
                                    ));
                                }
                            }
                        }
                    }
                }
                self.solids.insert(name.clone());
            }
            StatementKind::Translate { target, offset } => {
                self.target(target);
                offset.iter().for_each(|e| self.scalar(e));
            }
            StatementKind::Rotate { target, angle, .. } => {
                self.target(target);
                self.scalar(angle);
            }
            StatementKind::Scale { target, factors } => {
                self.target(target);
                match factors {
                    ScaleFactors::Uniform(e) => self.scalar(e),
                    ScaleFactors::PerAxis(es) => es.iter().for_each(|e| self.scalar(e)),
                }
            }
            StatementKind::Extrude {
                solid,
                face,
                length,
            } => {
                self.solid_ref(solid, s.span);
                self.index(face, "face index must be an integer constant");
                self.scalar(length);
            }
            StatementKind::Chamfer {
                solid,
                corner,
                radius,
            } => {
                self.solid_ref(solid, s.span);
                self.index(corner, "corner index must be an integer constant");
                self.scalar(radius);
            }
            StatementKind::Clamp { lo, value, hi } => {
                self.scalar(lo);
                self.scalar(value);
                self.scalar(hi);
            }
            StatementKind::Loop {
                var,
                start,
                end,
                body,
            } => {
                self.index(start, "loop bound must be integer constant");
                self.index(end, "loop bound must be integer constant");
                if self.params.contains(var)
                    || self.lets.contains(var)
                    || self.loop_vars.contains(var)
                {
                    self.diags.push(Diagnostic::error(
                        s.span,
                        format!("loop variable `{var}` shadows another name"),
                    ));
                }
                self.loop_vars.push(var.clone());
                for b in body {
                    self.statement(b);
                }
                self.loop_vars.pop();
            }
        }
    }

    fn solid_ref(&mut self, name: &str, span: Span) {
        if !self.solids.contains(name) {
            self.diags.push(Diagnostic::error(
                span,
                format!("unknown identifier `{name}` (no such solid)"),
            ));
        }
    }

    fn target(&mut self, t: &Target) {
        self.solid_ref(&t.solid, t.span);
        if let Some(items) = &t.selection {
            for it in items {
                match it {
                    SelectItem::Index(e) => {
                        self.index(e, "vertex index must be an integer constant");
                    }
                    SelectItem::Range(a, b) => {
                        self.index(a, "vertex index must be an integer constant");
                        self.index(b, "vertex index must be an integer constant");
                    }
                }
            }
        }
    }

    /// Integer constant: integer literals and loop variables combined with `+ - *`.
    fn index(&mut self, e: &Expr, message: &str) -> bool {
        fn ok(e: &Expr, loop_vars: &[String]) -> bool {
            match &e.kind {
                ExprKind::Num(v) => v.fract() == 0.0 && v.is_finite(),
                ExprKind::Ident(n) => loop_vars.contains(n),
                ExprKind::Neg(a) => ok(a, loop_vars),
                ExprKind::Binary(op, a, b) => {
                    *op != BinOp::Div && ok(a, loop_vars) && ok(b, loop_vars)
                }
                _ => false,
            }
        }
        let good = ok(e, &self.loop_vars);
        if !good {
            self.diags.push(Diagnostic::error(e.span, message));
        }
        good
    }

    fn scalar(&mut self, e: &Expr) {
        let mut pending = Vec::new();
        e.walk(&mut |sub| pending.push(sub));
        for sub in pending {
            match &sub.kind {
                ExprKind::Ident(n) => {
                    if !(self.params.contains(n)
                        || self.lets.contains(n)
                        || self.loop_vars.contains(n))
                    {
                        self.diags.push(Diagnostic::error(
                            sub.span,
                            format!("unknown identifier `{n}`"),
                        ));
                    }
                }
                ExprKind::VertexCoord { solid, index, .. } => {
                    self.solid_ref(solid, sub.span);
                    // `walk` also visits `index` itself; only the constness matters here.
                    let idx = (**index).clone();
                    self.index(&idx, "vertex index must be an integer constant");
                }
                ExprKind::Binary(BinOp::Div, _, den) => {
                    if !self.bounded_away_from_zero(den) {
                        self.diags.push(Diagnostic::warning(
                            sub.span,
                            format!(
                                "division by `{}` which is not clamped away from zero",
                                print_expr(den)
                            ),
                        ));
                    }
                }
                ExprKind::Call(Func::Pow, args) => {
                    let int_exp = const_value(&args[1]).is_some_and(|x| x.fract() == 0.0);
                    let base_pos = const_value(&args[0]).is_some_and(|x| x > 0.0)
                        || self.positive.contains(&print_expr(&args[0]));
                    if !int_exp && !base_pos {
                        self.diags.push(Diagnostic::warning(
                            sub.span,
                            "pow with a non-integer exponent requires a base clamped above zero",
                        ));
                    }
                }
                _ => {}
            }
        }
    }

    fn bounded_away_from_zero(&self, den: &Expr) -> bool {
        if let Some(v) = const_value(den) {
            return v != 0.0;
        }
        if let ExprKind::Ident(n) = &den.kind {
            if self.loop_vars.contains(n) {
                // Loop variables are integers; a zero value is caught at run time.
                return true;
            }
        }
        self.positive.contains(&print_expr(den))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn diags(src: &str) -> Vec<Diagnostic> {
        validate(&parse(src).unwrap())
    }

    #[test]
    fn loop_bound_from_param() {
        let d = diags("param n = 3\nfor i in 0..n {\n let a = i\n}");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "loop bound must be integer constant");
        assert_eq!(d[0].severity, Severity::Error);
    }

    #[test]
    fn unknown_identifier() {
        let d = diags("param w = 1\nsolid b = box(w, h, 1)");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.starts_with("unknown identifier"));
        assert_eq!((d[0].line, d[0].col), (2, 18));
    }

    #[test]
    fn division_needs_clamp() {
        let d = diags("param w = 1\nparam h = 2\nlet r = w / h");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        let d = diags("param w = 1\nparam h = 2\nclamp(0.1, h, 10)\nlet r = w / h");
        assert!(d.is_empty(), "{d:?}");
        assert!(diags("param w = 1\nlet r = w / 4").is_empty());
    }

    #[test]
    fn pow_rules() {
        assert!(diags("param w = 1\nlet a = pow(w, 3)").is_empty());
        assert_eq!(diags("param w = 1\nlet a = pow(w, 0.5)").len(), 1);
        assert!(diags("param w = 1\nclamp(0.01, w, 5)\nlet a = pow(w, 0.5)").is_empty());
    }

    #[test]
    fn duplicate_param_and_shadowing() {
        let d = diags("param w = 1\nparam w = 2\nlet w = 3");
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn index_expressions() {
        let d =
            diags("param w = 1\nsolid b = box(1,1,1)\nlet a = b[w].x\ntranslate(b[0..4], 1, 0, 0)");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("vertex index"));
        assert!(diags(
            "solid b = box(1,1,1)\nfor i in 0..2 {\n translate(b[i * 2 + 1], b[i].x, 0, 0)\n}"
        )
        .is_empty());
    }

    #[test]
    fn deterministic_order() {
        let src = "param n = 3\nfor i in 0..n {\n let a = q\n}\nlet z = 1 / n\nsolid c = cylinder(1, 1, 2)";
        let a = diags(src);
        assert_eq!(a, diags(src));
        assert_eq!(a.len(), 4);
        assert!(a
            .windows(2)
            .all(|w| (w[0].line, w[0].col) <= (w[1].line, w[1].col)));
    }
}
