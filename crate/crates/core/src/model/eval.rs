//! Small evaluator used to refresh cached values after fixture edits.
//!
//! Supports arithmetic, `%`, `&`, comparisons, `SUM`, `AVERAGE` and `IF`.
//! Blank operands act as 0 in arithmetic; division by zero yields `#DIV/0!`.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::formula::{self, BinaryOp, Expr, Locale, ParseError, RefSpan, UnaryOp};

use super::{CellAddr, Content, ErrorCode, ExternalCell, Value, Workbook};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unsupported function `{0}`")]
    UnsupportedFunction(String),
    #[error("cycle detected: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(" -> "))]
    CycleDetected(Vec<CellAddr>),
    #[error("formula in {cell} does not parse: {source}")]
    Parse { cell: CellAddr, source: ParseError },
}

/// Computes the value of `addr` from the current contents, ignoring cached
/// values of the formulas it depends on.
pub fn evaluate_cell(wb: &Workbook, addr: &CellAddr) -> Result<Value, EvalError> {
    Evaluator::new(wb).cell(addr)
}

/// Reusable evaluator that memoizes results across calls.
pub struct Evaluator<'a> {
    wb: &'a Workbook,
    memo: HashMap<CellAddr, Value>,
    stack: Vec<CellAddr>,
}

impl<'a> Evaluator<'a> {
    pub fn new(wb: &'a Workbook) -> Self {
        Evaluator { wb, memo: HashMap::new(), stack: Vec::new() }
    }

    pub fn cell(&mut self, addr: &CellAddr) -> Result<Value, EvalError> {
        let Some(sheet) = self.wb.sheet(&addr.sheet) else {
            return Ok(Value::Error(ErrorCode::Ref));
        };
        let addr = CellAddr::at(sheet.name.clone(), addr.pos);
        let text = match sheet.content(addr.pos) {
            Content::Formula { text, .. } => text.clone(),
            other => return Ok(other.value()),
        };
        if let Some(v) = self.memo.get(&addr) {
            return Ok(v.clone());
        }
        if let Some(i) = self.stack.iter().position(|a| *a == addr) {
            let mut path = self.stack[i..].to_vec();
            path.push(addr);
            return Err(EvalError::CycleDetected(path));
        }
        let ast = formula::parse(&text, Locale::Point)
            .map_err(|source| EvalError::Parse { cell: addr.clone(), source })?;
        self.stack.push(addr.clone());
        let result = self.scalar(&ast, &addr.sheet);
        self.stack.pop();
        let v = result?;
        self.memo.insert(addr, v.clone());
        Ok(v)
    }

    fn scalar(&mut self, e: &Expr, home: &str) -> Result<Value, EvalError> {
        Ok(match e {
            Expr::Literal(v) => v.clone(),
            Expr::Paren(inner) => self.scalar(inner, home)?,
            Expr::Ref(span) => self.deref(span, home)?,
            // No implicit intersection.
            Expr::Range(_) => Value::Error(ErrorCode::Value),
            Expr::Unary { op, expr } => {
                let v = self.scalar(expr, home)?;
                match to_number(&v) {
                    Err(e) => Value::Error(e),
                    Ok(n) => match op {
                        UnaryOp::Minus => Value::Number(-n),
                        UnaryOp::Plus => v_or_number(v, n),
                        UnaryOp::Percent => Value::Number(n / 100.0),
                    },
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let a = self.scalar(lhs, home)?;
                let b = self.scalar(rhs, home)?;
                binary(*op, &a, &b)
            }
            Expr::Function { name, args } => self.function(name, args, home)?,
        })
    }

    fn deref(&mut self, span: &RefSpan, home: &str) -> Result<Value, EvalError> {
        if let Some(book) = &span.external_book {
            let key = ExternalCell {
                book: book.clone(),
                sheet: span.sheet.clone().unwrap_or_default(),
                pos: span.start.pos(),
            };
            return Ok(self.wb.external_value(&key).cloned().unwrap_or(Value::Blank));
        }
        let sheet = span.sheet.as_deref().unwrap_or(home);
        self.cell(&CellAddr::at(sheet, span.start.pos()))
    }

    /// Values of every argument, ranges expanded, tagged with whether they
    /// came from a reference (which changes coercion rules).
    fn flatten(&mut self, args: &[Expr], home: &str) -> Result<Vec<(Value, bool)>, EvalError> {
        let mut out = Vec::new();
        for a in args {
            match a {
                Expr::Range(span) => {
                    for pos in span.rect().positions() {
                        let mut cell = span.clone();
                        cell.start.row = pos.row;
                        cell.start.col = pos.col;
                        cell.end = None;
                        out.push((self.deref(&cell, home)?, true));
                    }
                }
                Expr::Ref(span) => out.push((self.deref(span, home)?, true)),
                other => out.push((self.scalar(other, home)?, false)),
            }
        }
        Ok(out)
    }

    fn function(&mut self, name: &str, args: &[Expr], home: &str) -> Result<Value, EvalError> {
        match name {
            "SUM" | "AVERAGE" => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (v, from_ref) in self.flatten(args, home)? {
                    match (&v, from_ref) {
                        (Value::Error(e), _) => return Ok(Value::Error(*e)),
                        (Value::Number(n), _) => {
                            sum += n;
                            count += 1;
                        }
                        // Referenced text, booleans and blanks are skipped.
                        (_, true) => {}
                        (Value::Blank, false) => count += 1,
                        (_, false) => match to_number(&v) {
                            Ok(n) => {
                                sum += n;
                                count += 1;
                            }
                            Err(e) => return Ok(Value::Error(e)),
                        },
                    }
                }
                if name == "SUM" {
                    Ok(finite(sum))
                } else if count == 0 {
                    Ok(Value::Error(ErrorCode::Div0))
                } else {
                    Ok(finite(sum / count as f64))
                }
            }
            "IF" => {
                if !(2..=3).contains(&args.len()) {
                    return Ok(Value::Error(ErrorCode::Value));
                }
                let cond = self.scalar(&args[0], home)?;
                let truth = match to_bool(&cond) {
                    Ok(b) => b,
                    Err(e) => return Ok(Value::Error(e)),
                };
                let branch = if truth { args.get(1) } else { args.get(2) };
                match branch {
                    Some(Expr::Literal(Value::Blank)) => Ok(Value::Number(0.0)),
                    Some(b) => self.scalar(b, home),
                    None => Ok(Value::Bool(false)),
                }
            }
            other => Err(EvalError::UnsupportedFunction(other.to_string())),
        }
    }
}

fn v_or_number(v: Value, n: f64) -> Value {
    match v {
        Value::Blank => Value::Number(n),
        other => other,
    }
}

fn finite(n: f64) -> Value {
    if n.is_finite() {
        Value::Number(n)
    } else {
        Value::Error(ErrorCode::Num)
    }
}

pub(crate) fn to_number(v: &Value) -> Result<f64, ErrorCode> {
    match v {
        Value::Number(n) => Ok(*n),
        Value::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
        Value::Blank => Ok(0.0),
        Value::Text(s) => s.trim().parse::<f64>().ok().filter(|n| n.is_finite()).ok_or(ErrorCode::Value),
        Value::Error(e) => Err(*e),
    }
}

fn to_bool(v: &Value) -> Result<bool, ErrorCode> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) => Ok(*n != 0.0),
        Value::Blank => Ok(false),
        Value::Text(s) if s.eq_ignore_ascii_case("TRUE") => Ok(true),
        Value::Text(s) if s.eq_ignore_ascii_case("FALSE") => Ok(false),
        Value::Text(_) => Err(ErrorCode::Value),
        Value::Error(e) => Err(*e),
    }
}

fn to_text(v: &Value) -> Result<String, ErrorCode> {
    match v {
        Value::Error(e) => Err(*e),
        other => Ok(other.to_string()),
    }
}

fn binary(op: BinaryOp, a: &Value, b: &Value) -> Value {
    if let Value::Error(e) = a {
        return Value::Error(*e);
    }
    if let Value::Error(e) = b {
        return Value::Error(*e);
    }
    match op {
        BinaryOp::Concat => match (to_text(a), to_text(b)) {
            (Ok(x), Ok(y)) => Value::Text(x + &y),
            (Err(e), _) | (_, Err(e)) => Value::Error(e),
        },
        BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
            let ord = compare(a, b);
            Value::Bool(match op {
                BinaryOp::Eq => ord == Ordering::Equal,
                BinaryOp::Ne => ord != Ordering::Equal,
                BinaryOp::Lt => ord == Ordering::Less,
                BinaryOp::Le => ord != Ordering::Greater,
                BinaryOp::Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            })
        }
        _ => {
            let (x, y) = match (to_number(a), to_number(b)) {
                (Ok(x), Ok(y)) => (x, y),
                (Err(e), _) | (_, Err(e)) => return Value::Error(e),
            };
            match op {
                BinaryOp::Add => finite(x + y),
                BinaryOp::Sub => finite(x - y),
                BinaryOp::Mul => finite(x * y),
                BinaryOp::Div if y == 0.0 => Value::Error(ErrorCode::Div0),
                BinaryOp::Div => finite(x / y),
                BinaryOp::Pow if x == 0.0 && y < 0.0 => Value::Error(ErrorCode::Div0),
                _ => finite(x.powf(y)),
            }
        }
    }
}

/// Excel ordering: numbers < text < booleans; blank matches the other side's
/// zero value; text compares case-insensitively.
fn compare(a: &Value, b: &Value) -> Ordering {
    fn rank(v: &Value) -> u8 {
        match v {
            Value::Number(_) | Value::Blank => 0,
            Value::Text(_) => 1,
            _ => 2,
        }
    }
    let a = blank_like(a, b);
    let b = blank_like(b, &a);
    match (&a, &b) {
        (Value::Number(x), Value::Number(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
        (Value::Text(x), Value::Text(y)) => x.to_lowercase().cmp(&y.to_lowercase()),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        _ => rank(&a).cmp(&rank(&b)),
    }
}

fn blank_like(v: &Value, other: &Value) -> Value {
    match (v, other) {
        (Value::Blank, Value::Text(_)) => Value::Text(String::new()),
        (Value::Blank, Value::Bool(_)) => Value::Bool(false),
        (Value::Blank, _) => Value::Number(0.0),
        (v, _) => v.clone(),
    }
}
