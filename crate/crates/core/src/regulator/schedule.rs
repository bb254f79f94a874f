//! Inner-iteration schedules `k -> t_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many inner rounds to run at outer iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `ceil(-s ln(k + 1) / ln q)`.
    Log { s: f64 },
    /// The same `t` at every iteration.
    Fixed { t: usize },
    /// Arithmetic expression in `k`, e.g. `ceil(5*ln(k+1))`.
    Formula { expr: String },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Log { s: 0.5 }
    }
}

/// `max(floor, ceil(-s ln(k + 1) / ln q))`.
pub fn inner_schedule(k: usize, s: f64, q: f64, floor: usize) -> Result<usize> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::NoCertificate { q });
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("schedule exponent must lie in [0, 1), got {s}")));
    }
    let raw = (-s * ((k + 1) as f64).ln() / q.ln()).ceil();
    Ok(floor.max(to_count(raw)?))
}

fn to_count(v: f64) -> Result<usize> {
    if !v.is_finite() || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::InvalidArgument(format!("schedule produced an invalid round count {v}")));
    }
    Ok(v as usize)
}

/// A schedule ready for evaluation.
#[derive(Debug, Clone)]
pub(crate) enum CompiledSchedule {
    Log { s: f64, q: Option<f64> },
    Fixed(usize),
    Formula(Expr),
}

impl CompiledSchedule {
    pub(crate) fn new(schedule: &Schedule, q: Option<f64>) -> Result<Self> {
        Ok(match schedule {
            Schedule::Log { s } => CompiledSchedule::Log { s: *s, q },
            Schedule::Fixed { t } => CompiledSchedule::Fixed(*t),
            Schedule::Formula { expr } => CompiledSchedule::Formula(parse_formula(expr)?),
        })
    }

    pub(crate) fn rounds(&self, k: usize, floor: usize) -> Result<usize> {
        match self {
            CompiledSchedule::Log { s, q } => {
                let q = q.ok_or_else(|| {
                    Error::InvalidArgument("the contraction schedule needs game constants and a graph".into())
                })?;
                inner_schedule(k, *s, q, floor)
            }
            CompiledSchedule::Fixed(t) => Ok(floor.max(*t)),
            CompiledSchedule::Formula(e) => Ok(floor.max(to_count(e.eval(k as f64).ceil())?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Expr {
    Num(f64),
    K,
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Func {
    Ln,
    Log2,
    Log10,
    Sqrt,
    Exp,
    Ceil,
    Floor,
    Abs,
}

impl Expr {
    pub(crate) fn eval(&self, k: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::K => k,
            Expr::Neg(e) => -e.eval(k),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(k), b.eval(k));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(k);
                match f {
                    Func::Ln => v.ln(),
                    Func::Log2 => v.log2(),
                    Func::Log10 => v.log10(),
                    Func::Sqrt => v.sqrt(),
                    Func::Exp => v.exp(),
                    Func::Ceil => v.ceil(),
                    Func::Floor => v.floor(),
                    Func::Abs => v.abs(),
                }
            }
        }
    }
}

/// Parse an expression in `k` with `+ - * / ^`, parentheses and the
/// functions `ln log log2 log10 sqrt exp ceil floor abs` (`log` is natural).
pub(crate) fn parse_formula(src: &str) -> Result<Expr> {
    let mut p = Parser {
        chars: src.chars().filter(|c| !c.is_whitespace()).collect(),
        pos: 0,
        src,
    };
    let e = p.sum()?;
    if p.pos != p.chars.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::Config(vec![format!("schedule formula {:?}: {what} at offset {}", self.src, self.pos)])
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut e = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            e = Expr::Bin(op, Box::new(e), Box::new(self.product()?));
        }
        Ok(e)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    // right associative, binds tighter than unary minus on its left
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                if name == "k" {
                    return Ok(Expr::K);
                }
                let func = match name.as_str() {
                    "ln" | "log" => Func::Ln,
                    "log2" => Func::Log2,
                    "log10" => Func::Log10,
                    "sqrt" => Func::Sqrt,
                    "exp" => Func::Exp,
                    "ceil" => Func::Ceil,
                    "floor" => Func::Floor,
                    "abs" => Func::Abs,
                    _ => {
                        self.pos = start;
                        return Err(self.error(&format!("unknown identifier {name:?}")));
                    }
                };
                if !self.eat('(') {
                    return Err(self.error("expected '(' after function name"));
                }
                let arg = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            _ => Err(self.error("expected a number, 'k', a function or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.error(&format!("malformed number {text:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contraction_schedule() {
        assert_eq!(inner_schedule(0, 0.5, 0.9, 1).unwrap(), 1);
        assert_eq!(inner_schedule(0, 0.5, 0.9, 0).unwrap(), 0);
        assert_eq!(inner_schedule(99, 0.5, 0.9, 1).unwrap(), 22);
        assert!(inner_schedule(3, 0.5, 1.0, 1).is_err());
        assert!(inner_schedule(3, 1.0, 0.5, 1).is_err());
    }

    #[test]
    fn formula_schedule() {
        let s = CompiledSchedule::new(&Schedule::Formula { expr: "ceil(5*ln(k+1))".into() }, None).unwrap();
        assert_eq!(s.rounds(9, 1).unwrap(), 12);
        assert_eq!(s.rounds(0, 1).unwrap(), 1);
        assert_eq!(s.rounds(0, 0).unwrap(), 0);
        for k in 0..200 {
            let direct = (5.0 * ((k + 1) as f64).ln()).ceil() as usize;
            assert_eq!(s.rounds(k, 0).unwrap(), direct);
        }
    }

    #[test]
    fn formula_grammar() {
        let e = |s: &str, k: f64| parse_formula(s).unwrap().eval(k);
        assert_eq!(e("2^3^2", 0.0), 512.0);
        assert_eq!(e("-2^2", 0.0), -4.0);
        assert_eq!(e("1 + 2 * 3 - 4 / 2", 0.0), 5.0);
        assert_eq!(e("(k+1)*sqrt(k)", 4.0), 10.0);
        assert_eq!(e("1.5e1 + log10(100)", 0.0), 17.0);
        assert_eq!(e("floor(abs(-2.5)) + exp(0) + log2(8)", 0.0), 6.0);
        for bad in ["", "k +", "foo(k)", "ln k", "(k", "1..2", "k)"] {
            assert!(parse_formula(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn schedule_json_forms() {
        let s: Schedule = serde_json::from_str(r#"{"kind":"fixed","t":7}"#).unwrap();
        assert_eq!(s, Schedule::Fixed { t: 7 });
        let s: Schedule = serde_json::from_str(r#"{"kind":"log","s":0.25}"#).unwrap();
        assert_eq!(s, Schedule::Log { s: 0.25 });
        assert!(serde_json::from_str::<Schedule>(r#"{"kind":"fixed","t":7,"x":1}"#).is_err());
    }
}
