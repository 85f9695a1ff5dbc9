//! Normalized DoF `d̄/N` against `M/N` for several interference levels,
//! with `D_0 = M`.

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::dof::{evaluate, format_decimal, rat};

pub const DEFAULT_DT_LIST: &str = "0,M/2,M,3M/2,2M";
pub const CSV_HEADER: &str = "m_over_n,dt_spec,dbar_over_n";
const SIGNIFICANT_DIGITS: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SweepError {
    #[error("cannot parse '{expr}': {reason}")]
    Parse { expr: String, reason: String },
    #[error("N must be at least 2")]
    SmallN,
    #[error("grid must have at least one point")]
    EmptyGrid,
}

/// Linear expression in `M` and `N`, e.g. `3M/2` or `N-M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtExpr {
    pub label: String,
    tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Num(i64),
    M,
    N,
    Op(char),
}

impl DtExpr {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let label = text.trim().to_string();
        let err = |reason: &str| SweepError::Parse { expr: label.clone(), reason: reason.into() };
        let mut tokens = Vec::new();
        let chars: Vec<char> = label.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match c {
                ' ' => {}
                '0'..='9' => {
                    let start = i;
                    while i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
                        i += 1;
                    }
                    let s: String = chars[start..=i].iter().collect();
                    tokens.push(Token::Num(s.parse().map_err(|_| err("number too large"))?));
                }
                'M' | 'm' => tokens.push(Token::M),
                'N' | 'n' => tokens.push(Token::N),
                '+' | '-' | '*' | '/' | '(' | ')' => tokens.push(Token::Op(c)),
                _ => return Err(err(&format!("unexpected character '{c}'"))),
            }
            i += 1;
        }
        if tokens.is_empty() {
            return Err(err("empty expression"));
        }
        let expr = Self { label, tokens };
        // Validate syntax once with arbitrary values.
        expr.eval(&rat(1), &rat(2))?;
        Ok(expr)
    }

    pub fn eval(&self, m: &BigRational, n: &BigRational) -> Result<BigRational, SweepError> {
        let mut p = Parser { tokens: &self.tokens, pos: 0, m, n, label: &self.label };
        let v = p.expr()?;
        if p.pos != self.tokens.len() {
            return Err(p.error("trailing input"));
        }
        Ok(v)
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    m: &'a BigRational,
    n: &'a BigRational,
    label: &'a str,
}

impl Parser<'_> {
    fn error(&self, reason: &str) -> SweepError {
        SweepError::Parse { expr: self.label.to_string(), reason: reason.into() }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn expr(&mut self) -> Result<BigRational, SweepError> {
        let mut v = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            v = if c == '+' { v + rhs } else { v - rhs };
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<BigRational, SweepError> {
        let mut v = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Op('*')) => {
                    self.pos += 1;
                    v *= self.factor()?;
                }
                Some(Token::Op('/')) => {
                    self.pos += 1;
                    let d = self.factor()?;
                    if d.is_zero() {
                        return Err(self.error("division by zero"));
                    }
                    v /= d;
                }
                // Implicit product, as in `3M` or `2(N-M)`.
                Some(Token::M | Token::N | Token::Num(_) | Token::Op('(')) => v *= self.factor()?,
                _ => return Ok(v),
            }
        }
    }

    fn factor(&mut self) -> Result<BigRational, SweepError> {
        let tok = self.peek().cloned().ok_or_else(|| self.error("unexpected end"))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(rat(v)),
            Token::M => Ok(self.m.clone()),
            Token::N => Ok(self.n.clone()),
            Token::Op('-') => Ok(-self.factor()?),
            Token::Op('(') => {
                let v = self.expr()?;
                match self.peek() {
                    Some(Token::Op(')')) => {
                        self.pos += 1;
                        Ok(v)
                    }
                    _ => Err(self.error("missing ')'")),
                }
            }
            Token::Op(c) => Err(self.error(&format!("unexpected '{c}'"))),
        }
    }
}

/// Parses a comma-separated list of expressions.
pub fn parse_dt_list(text: &str) -> Result<Vec<DtExpr>, SweepError> {
    text.split(',').map(DtExpr::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepRow {
    pub m: u32,
    pub m_over_n: String,
    pub dt_spec: String,
    pub dbar_over_n: String,
}

/// `grid` points `M_j = round(j N / grid)`, `j = 1..=grid`, duplicates
/// dropped. Expressions falling outside `[0, 2M]` are skipped.
pub fn sweep(n: u32, grid: u32, dt_list: &[DtExpr]) -> Result<Vec<SweepRow>, SweepError> {
    if n < 2 {
        return Err(SweepError::SmallN);
    }
    if grid == 0 {
        return Err(SweepError::EmptyGrid);
    }
    let mut ms: Vec<u32> = (1..=grid)
        .map(|j| {
            let exact = BigRational::new((j as i64 * n as i64).into(), (grid as i64).into());
            exact.round().to_integer().try_into().expect("fits in u32")
        })
        .filter(|&m: &u32| m >= 1)
        .collect();
    ms.dedup();
    let nr = rat(n.into());
    let mut rows = Vec::new();
    for m in ms {
        let mr = rat(m.into());
        for spec in dt_list {
            let dt = spec.eval(&mr, &nr)?;
            if dt.is_negative() || dt > &mr * rat(2) {
                continue;
            }
            let v = evaluate(&mr, &nr, &mr, &dt);
            rows.push(SweepRow {
                m,
                m_over_n: format_decimal(&(&mr / &nr), SIGNIFICANT_DIGITS),
                dt_spec: spec.label.clone(),
                dbar_over_n: format_decimal(&(v.value / &nr), SIGNIFICANT_DIGITS),
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.m_over_n, r.dt_spec, r.dbar_over_n));
    }
    out
}
