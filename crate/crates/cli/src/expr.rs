//! Arithmetic expressions over `t`, `x`, `y` for boundary data and phases.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     = product (("+" | "-") product)*
//! product = unary (("*" | "/") unary)*
//! unary   = "-" unary | power
//! power   = atom ("^" unary)?
//! atom    = number | "pi" | var | func "(" sum ("," sum)* ")" | "(" sum ")"
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x^2 = -(x^2)`.
//! Functions: `sin cos exp abs` take one argument, `min max` two or more.

use std::fmt;

use anyhow::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // Exponent part, e.g. 1e-3.
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(v) => out.push((start, Token::Num(v))),
                Err(_) => bail!("bad number '{text}' at column {}", start + 1),
            }
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Token::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^(),".contains(c) {
            out.push((i, Token::Op(c)));
            i += 1;
        } else {
            bail!("unexpected character '{c}' at column {}", i + 1);
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    vars: &'a [Var],
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn column(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |t| t.0) + 1
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if !self.eat(op) {
            bail!("expected '{op}' at column {}", self.column());
        }
        Ok(())
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op(c @ ('+' | '-'))) => *c,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op(c @ ('*' | '/'))) => *c,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let col = self.column();
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            bail!("unexpected end of expression");
        };
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Node::Num(v)),
            Token::Op('(') => {
                let inner = self.sum()?;
                self.expect(')')?;
                Ok(inner)
            }
            Token::Op(c) => bail!("unexpected '{c}' at column {col}"),
            Token::Ident(name) => {
                let var = match name.as_str() {
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "t" => Some(Var::T),
                    "x" => Some(Var::X),
                    "y" => Some(Var::Y),
                    _ => None,
                };
                if let Some(v) = var {
                    if !self.vars.contains(&v) {
                        bail!("variable '{name}' is not available here (column {col})");
                    }
                    return Ok(Node::Var(v));
                }
                let func = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "abs" => Func::Abs,
                    "min" => Func::Min,
                    "max" => Func::Max,
                    _ => bail!("unknown name '{name}' at column {col}"),
                };
                self.expect('(')?;
                let mut args = vec![self.sum()?];
                while self.eat(',') {
                    args.push(self.sum()?);
                }
                self.expect(')')?;
                let ok = match func {
                    Func::Min | Func::Max => args.len() >= 2,
                    _ => args.len() == 1,
                };
                if !ok {
                    bail!("wrong number of arguments to '{name}' at column {col}");
                }
                Ok(Node::Call(func, args))
            }
        }
    }
}

impl Expr {
    /// Parses `src`, allowing only the listed variables.
    pub fn parse(src: &str, vars: &[Var]) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
            len: src.chars().count(),
        };
        let root = p.sum()?;
        if p.pos != p.tokens.len() {
            bail!("trailing input at column {}", p.column());
        }
        Ok(Expr {
            source: src.to_string(),
            root,
        })
    }

    /// Value of a constant expression.
    pub fn constant(src: &str) -> Result<f64> {
        let v = Expr::parse(src, &[])?.eval(0.0, &[]);
        if !v.is_finite() {
            bail!("'{src}' is not a finite number");
        }
        Ok(v)
    }

    /// Evaluates at time `t` and point `p` (`p[0] = x`, `p[1] = y`).
    pub fn eval(&self, t: f64, p: &[f64]) -> f64 {
        eval(&self.root, t, p)
    }
}

fn eval(node: &Node, t: f64, p: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(Var::T) => t,
        Node::Var(Var::X) => p[0],
        Node::Var(Var::Y) => p[1],
        Node::Neg(a) => -eval(a, t, p),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, t, p), eval(b, t, p));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => {
                    // Integer powers by repeated multiplication keep results exact for
                    // polynomial data.
                    if b.fract() == 0.0 && b.abs() <= 64.0 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
        Node::Call(f, args) => {
            let mut vals = args.iter().map(|a| eval(a, t, p));
            match f {
                Func::Sin => vals.next().unwrap().sin(),
                Func::Cos => vals.next().unwrap().cos(),
                Func::Exp => vals.next().unwrap().exp(),
                Func::Abs => vals.next().unwrap().abs(),
                Func::Min => vals.fold(f64::INFINITY, f64::min),
                Func::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: &[Var] = &[Var::T, Var::X, Var::Y];

    fn ev(src: &str, t: f64, x: f64, y: f64) -> f64 {
        Expr::parse(src, ALL).unwrap().eval(t, &[x, y])
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0, 0.0), 7.0);
        assert_eq!(ev("-x^2", 0.0, 3.0, 0.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("2^-1", 0.0, 0.0, 0.0), 0.5);
        assert_eq!(ev("(x+y)/2 - t", 1.0, 3.0, 5.0), 3.0);
        assert_eq!(ev("8/2/2", 0.0, 0.0, 0.0), 2.0);
    }

    #[test]
    fn functions_and_constants() {
        assert_eq!(ev("max(x, y, t)", 4.0, 1.0, 2.0), 4.0);
        assert_eq!(ev("min(x, -y)", 0.0, 1.0, 2.0), -2.0);
        assert_eq!(ev("abs(-2.5e-1)", 0.0, 0.0, 0.0), 0.25);
        assert!((ev("sin(pi/2) + cos(0) + exp(0)", 0.0, 0.0, 0.0) - 3.0).abs() < 1e-15);
        assert_eq!(Expr::constant("3*pi/4").unwrap(), 3.0 * std::f64::consts::PI / 4.0);
        assert_eq!(Expr::constant("1*pi/2+0.25").unwrap(), std::f64::consts::FRAC_PI_2 + 0.25);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("x +", ALL).is_err());
        assert!(Expr::parse("foo(x)", ALL).is_err());
        assert!(Expr::parse("sin(x, y)", ALL).is_err());
        assert!(Expr::parse("max(x)", ALL).is_err());
        assert!(Expr::parse("(x", ALL).is_err());
        assert!(Expr::parse("x y", ALL).is_err());
        assert!(Expr::parse("y", &[Var::T, Var::X]).is_err());
        assert!(Expr::constant("t").is_err());
        assert!(Expr::constant("1/0").is_err());
        assert!(Expr::parse("2 $ 3", ALL).is_err());
    }
}
