//! The textual CAD language: syntax tree, parser, printer and static checks.

mod ast;
mod parser;
mod printer;
mod validate;

pub use ast::*;
pub use parser::parse;
pub use printer::{fmt_num, print_expr, print_program};
pub use validate::{const_value, has_errors, validate, Diagnostic, Severity, KNOWN_PRAGMAS};

/// Formats a parameter value for display in program text: at most six
/// decimals, always with a fractional part.
pub fn fmt_param_value(v: f64) -> String {
    let mut s = format!("{:.6}", v);
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.push('0');
    }
    if s == "-0.0" {
        s = "0.0".into();
    }
    s
}

/// Rewrites the literal of every `param NAME = <number>` line whose name
/// appears in `values`, leaving all other text untouched.
pub fn rewrite_params(src: &str, values: &[(String, f64)]) -> String {
    let mut out = String::with_capacity(src.len());
    for (i, line) in src.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&rewrite_line(line, values).unwrap_or_else(|| line.to_string()));
    }
    out
}

fn rewrite_line(line: &str, values: &[(String, f64)]) -> Option<String> {
    let indent_len = line.len() - line.trim_start().len();
    let rest = line[indent_len..].strip_prefix("param")?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let rest_trim = rest.trim_start();
    let name_len = rest_trim
        .find(|c: char| !(c.is_alphanumeric() || c == '_'))
        .unwrap_or(rest_trim.len());
    let name = &rest_trim[..name_len];
    let (_, value) = values.iter().find(|(n, _)| n == name)?;
    let after_name = &rest_trim[name_len..];
    let eq = after_name.find('=')?;
    let after_eq = &after_name[eq + 1..];
    let ws = after_eq.len() - after_eq.trim_start().len();
    let num_part = &after_eq[ws..];
    let num_len = num_part
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(num_part.len());
    let tail = &num_part[num_len..];
    let prefix_len = line.len() - num_part.len();
    Some(format!(
        "{}{}{}",
        &line[..prefix_len],
        fmt_param_value(*value),
        tail
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_value_formatting() {
        assert_eq!(fmt_param_value(3.0), "3.0");
        assert_eq!(fmt_param_value(2.9999999997), "3.0");
        assert_eq!(fmt_param_value(0.125), "0.125");
        assert_eq!(fmt_param_value(-1e-9), "0.0");
        assert_eq!(fmt_param_value(-1.5), "-1.5");
    }

    #[test]
    fn rewrite_keeps_layout() {
        let src =
            "# box\nparam w = 1.0   # width\n  param h=2\nparam wh = 5\nsolid b = box(w, h, 1)\n";
        let out = rewrite_params(src, &[("w".into(), 3.0), ("h".into(), 0.5)]);
        assert_eq!(
            out,
            "# box\nparam w = 3.0   # width\n  param h=0.5\nparam wh = 5\nsolid b = box(w, h, 1)\n"
        );
        let p = parse(&out).unwrap();
        assert_eq!(p.initial_params(), vec![3.0, 0.5, 5.0]);
    }
}
