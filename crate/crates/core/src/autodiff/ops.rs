//! Semantics and local derivatives of the smooth operator set.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Sqrt,
    Exp,
    Log,
    /// `x^n` for a constant integer `n`; defined for any real `x`.
    PowI(i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    /// `a^b` with a real exponent; requires `a > 0`.
    Pow,
}

impl UnaryOp {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Sqrt => {
                if x < 0.0 {
                    f64::NAN
                } else {
                    x.sqrt()
                }
            }
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => {
                if x <= 0.0 {
                    f64::NAN
                } else {
                    x.ln()
                }
            }
            UnaryOp::PowI(n) => x.powi(n),
        }
    }

    /// d(op(x))/dx given the input `x` and the output `y`.
    #[inline]
    pub fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::Neg => -1.0,
            UnaryOp::Sin => x.cos(),
            UnaryOp::Cos => -x.sin(),
            UnaryOp::Sqrt => 0.5 / y,
            UnaryOp::Exp => y,
            UnaryOp::Log => 1.0 / x,
            UnaryOp::PowI(0) => 0.0,
            UnaryOp::PowI(n) => n as f64 * x.powi(n - 1),
        }
    }

    pub fn mnemonic(self) -> String {
        match self {
            UnaryOp::Neg => "neg".into(),
            UnaryOp::Sin => "sin".into(),
            UnaryOp::Cos => "cos".into(),
            UnaryOp::Sqrt => "sqrt".into(),
            UnaryOp::Exp => "exp".into(),
            UnaryOp::Log => "log".into(),
            UnaryOp::PowI(n) => format!("powi.{n}"),
        }
    }
}

impl BinaryOp {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => {
                if a <= 0.0 {
                    f64::NAN
                } else {
                    a.powf(b)
                }
            }
        }
    }

    /// Partial derivatives with respect to both operands.
    #[inline]
    pub fn partials(self, a: f64, b: f64, y: f64) -> (f64, f64) {
        match self {
            BinaryOp::Add => (1.0, 1.0),
            BinaryOp::Sub => (1.0, -1.0),
            BinaryOp::Mul => (b, a),
            BinaryOp::Div => (1.0 / b, -y / b),
            BinaryOp::Pow => (b * y / a, y * a.ln()),
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Mul)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn unary_derivatives_match_finite_differences() {
        let ops = [
            UnaryOp::Neg,
            UnaryOp::Sin,
            UnaryOp::Cos,
            UnaryOp::Sqrt,
            UnaryOp::Exp,
            UnaryOp::Log,
            UnaryOp::PowI(3),
            UnaryOp::PowI(-2),
            UnaryOp::PowI(0),
        ];
        for op in ops {
            let x = 0.7;
            let d = op.deriv(x, op.apply(x));
            assert!((d - fd(|t| op.apply(t), x)).abs() < 1e-7, "{op:?}");
        }
    }

    #[test]
    fn binary_partials_match_finite_differences() {
        for op in [
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Pow,
        ] {
            let (a, b) = (1.3, 0.6);
            let (da, db) = op.partials(a, b, op.apply(a, b));
            assert!((da - fd(|t| op.apply(t, b), a)).abs() < 1e-7, "{op:?}");
            assert!((db - fd(|t| op.apply(a, t), b)).abs() < 1e-7, "{op:?}");
        }
    }

    #[test]
    fn domain_violations_are_nan() {
        assert!(UnaryOp::Sqrt.apply(-1.0).is_nan());
        assert!(UnaryOp::Log.apply(0.0).is_nan());
        assert!(BinaryOp::Pow.apply(-2.0, 0.5).is_nan());
        assert_eq!(UnaryOp::PowI(2).apply(-3.0), 9.0);
    }
}
