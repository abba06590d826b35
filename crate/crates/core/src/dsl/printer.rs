//! Canonical pretty-printer. `parse(print(p)) == p` for every parsed program.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for pr in &p.pragmas {
        let _ = writeln!(out, "pragma {} = {}", pr.name, fmt_num(pr.value));
    }
    for d in &p.params {
        let _ = writeln!(out, "param {} = {}", d.name, fmt_num(d.initial));
    }
    for s in &p.statements {
        print_statement(&mut out, s, 0);
    }
    out
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn print_statement(out: &mut String, s: &Statement, indent: usize) {
    let pad = "    ".repeat(indent);
    out.push_str(&pad);
    match &s.kind {
        StatementKind::Let { name, value } => {
            let _ = write!(out, "let {name} = {}", print_expr(value));
        }
        StatementKind::Solid { name, shape } => {
            let args = match shape {
                Shape::Box { w, h, d } => vec![w, h, d],
                Shape::Cylinder { r, h, sides } => vec![r, h, sides],
                Shape::Rect { w, h } => vec![w, h],
            };
            let _ = write!(out, "solid {name} = {}({})", shape.name(), join(&args));
        }
        StatementKind::Translate { target, offset } => {
            let _ = write!(
                out,
                "translate({}, {})",
                print_target(target),
                join(&offset.iter().collect::<Vec<_>>())
            );
        }
        StatementKind::Rotate {
            target,
            axis,
            angle,
        } => {
            let _ = write!(
                out,
                "rotate({}, {}, {})",
                print_target(target),
                axis.name(),
                print_expr(angle)
            );
        }
        StatementKind::Scale { target, factors } => {
            let f = match factors {
                ScaleFactors::Uniform(e) => print_expr(e),
                ScaleFactors::PerAxis(es) => join(&es.iter().collect::<Vec<_>>()),
            };
            let _ = write!(out, "scale({}, {f})", print_target(target));
        }
        StatementKind::Extrude {
            solid,
            face,
            length,
        } => {
            let _ = write!(
                out,
                "extrude({solid}, {}, {})",
                print_expr(face),
                print_expr(length)
            );
        }
        StatementKind::Chamfer {
            solid,
            corner,
            radius,
        } => {
            let _ = write!(
                out,
                "chamfer({solid}, {}, {})",
                print_expr(corner),
                print_expr(radius)
            );
        }
        StatementKind::Clamp { lo, value, hi } => {
            let _ = write!(
                out,
                "clamp({}, {}, {})",
                print_expr(lo),
                print_expr(value),
                print_expr(hi)
            );
        }
        StatementKind::Loop {
            var,
            start,
            end,
            body,
        } => {
            let _ = writeln!(
                out,
                "for {var} in {}..{} {{",
                print_expr(start),
                print_expr(end)
            );
            for b in body {
                print_statement(out, b, indent + 1);
            }
            out.push_str(&pad);
            out.push('}');
        }
    }
    out.push('\n');
}

fn join(es: &[&Expr]) -> String {
    es.iter()
        .map(|e| print_expr(e))
        .collect::<Vec<_>>()
        .join(", ")
}

fn print_target(t: &Target) -> String {
    match &t.selection {
        None => t.solid.clone(),
        Some(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|it| match it {
                    SelectItem::Index(e) => print_expr(e),
                    SelectItem::Range(a, b) => format!("{}..{}", print_expr(a), print_expr(b)),
                })
                .collect();
            format!("{}[{}]", t.solid, parts.join(", "))
        }
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, parent_prec: u8) {
    match &e.kind {
        ExprKind::Num(v) => out.push_str(&fmt_num(*v)),
        ExprKind::Ident(n) => out.push_str(n),
        ExprKind::Neg(inner) => {
            out.push('-');
            // Unary minus binds tighter than any binary operator.
            write_expr(out, inner, 3);
        }
        ExprKind::Binary(op, a, b) => {
            let prec = op.precedence();
            let paren = prec < parent_prec;
            if paren {
                out.push('(');
            }
            write_expr(out, a, prec);
            let _ = write!(out, " {} ", op.symbol());
            // Right operands of equal precedence need parens to keep associativity.
            write_expr(out, b, prec + 1);
            if paren {
                out.push(')');
            }
        }
        ExprKind::Call(f, args) => {
            let _ = write!(out, "{}(", f.name());
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
        ExprKind::VertexCoord { solid, index, axis } => {
            let _ = write!(out, "{solid}[{}].{}", print_expr(index), axis.name());
        }
    }
}
