use crate::model::Value;

use super::lexer::{tokenize, Tok, Token};
use super::{BinaryOp, Expr, Locale, ParseError, RefSpan, UnaryOp, PREC_PERCENT, PREC_UNARY};

/// Parses formula text (which must start with `=`).
pub fn parse(text: &str, locale: Locale) -> Result<Expr, ParseError> {
    let Some(body) = text.strip_prefix('=') else {
        return Err(ParseError::syntax(0, "`=`"));
    };
    if body.trim().is_empty() {
        return Err(ParseError::EmptyFormula);
    }
    let tokens = tokenize(body, locale).map_err(|e| shift_offset(e, 1))?;
    let mut p = Parser { tokens, at: 0, depth: 0 };
    let expr = p.expr(0).map_err(|e| shift_offset(e, 1))?;
    match &p.peek().tok {
        Tok::Eof => Ok(expr),
        Tok::RParen => Err(ParseError::UnbalancedParens),
        _ => Err(ParseError::syntax(p.peek().offset + 1, "an operator or end of formula")),
    }
}

fn shift_offset(e: ParseError, by: usize) -> ParseError {
    match e {
        ParseError::SyntaxError { offset, expected } => ParseError::SyntaxError { offset: offset + by, expected },
        other => other,
    }
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    depth: usize,
}

const MAX_DEPTH: usize = 512;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::syntax(self.peek().offset, "a shallower expression"));
        }
        let mut lhs = self.prefix()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Op("%") => {
                    if PREC_PERCENT < min_prec {
                        break;
                    }
                    self.next();
                    lhs = Expr::unary(UnaryOp::Percent, lhs);
                    continue;
                }
                Tok::Op(sym) => binary_op(sym).expect("lexer only emits known operators"),
                _ => break,
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.next();
            // Every binary operator is left-associative, `^` included.
            let rhs = self.expr(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        let tok = self.next();
        match tok.tok {
            Tok::Op("-") => Ok(Expr::unary(UnaryOp::Minus, self.expr(PREC_UNARY)?)),
            Tok::Op("+") => Ok(Expr::unary(UnaryOp::Plus, self.expr(PREC_UNARY)?)),
            Tok::Number(n) => Ok(Expr::Literal(Value::Number(n))),
            Tok::Str(s) => Ok(Expr::Literal(Value::Text(s))),
            Tok::Bool(b) => Ok(Expr::Literal(Value::Bool(b))),
            Tok::Error(e) => Ok(Expr::Literal(Value::Error(e))),
            Tok::Cell { book, sheet, cell } => {
                let mut span = RefSpan::cell(cell);
                span.sheet = sheet;
                span.external_book = book;
                if self.peek().tok != Tok::Colon {
                    return Ok(Expr::Ref(span));
                }
                self.next();
                let second = self.next();
                match second.tok {
                    Tok::Cell { book: b2, sheet: s2, cell: end }
                        if s2.is_none() || (s2 == span.sheet && b2 == span.external_book) =>
                    {
                        let mut range = RefSpan::range(cell, end);
                        range.sheet = span.sheet;
                        range.external_book = span.external_book;
                        Ok(Expr::Range(range))
                    }
                    _ => Err(ParseError::syntax(second.offset, "a range end on the same sheet")),
                }
            }
            Tok::Func(name) => {
                if self.next().tok != Tok::LParen {
                    return Err(ParseError::syntax(tok.offset, "`(`"));
                }
                let args = self.args()?;
                Ok(Expr::Function { name, args })
            }
            Tok::LParen => {
                let inner = self.expr(0)?;
                match self.next().tok {
                    Tok::RParen => Ok(Expr::Paren(Box::new(inner))),
                    Tok::Eof => Err(ParseError::UnbalancedParens),
                    _ => Err(ParseError::syntax(tok.offset, "`)`")),
                }
            }
            Tok::Eof => Err(ParseError::syntax(tok.offset, "an operand")),
            Tok::RParen => Err(ParseError::UnbalancedParens),
            _ => Err(ParseError::syntax(tok.offset, "an operand")),
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.peek().tok == Tok::RParen {
            self.next();
            return Ok(args);
        }
        loop {
            if matches!(self.peek().tok, Tok::Sep | Tok::RParen) {
                args.push(Expr::Literal(Value::Blank));
            } else {
                args.push(self.expr(0)?);
            }
            let t = self.next();
            match t.tok {
                Tok::Sep => continue,
                Tok::RParen => return Ok(args),
                Tok::Eof => return Err(ParseError::UnbalancedParens),
                _ => return Err(ParseError::syntax(t.offset, "`,` or `)`")),
            }
        }
    }
}

fn binary_op(sym: &str) -> Option<BinaryOp> {
    Some(match sym {
        "+" => BinaryOp::Add,
        "-" => BinaryOp::Sub,
        "*" => BinaryOp::Mul,
        "/" => BinaryOp::Div,
        "^" => BinaryOp::Pow,
        "&" => BinaryOp::Concat,
        "=" => BinaryOp::Eq,
        "<>" => BinaryOp::Ne,
        "<" => BinaryOp::Lt,
        "<=" => BinaryOp::Le,
        ">" => BinaryOp::Gt,
        ">=" => BinaryOp::Ge,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::super::CellRef;
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s, Locale::Point).unwrap().without_parens()
    }

    fn r(a1: &str) -> Expr {
        let pos = crate::model::parse_a1(a1).unwrap();
        Expr::Ref(RefSpan::cell(CellRef::relative(pos.row, pos.col)))
    }

    #[test]
    fn comma_locale_literal() {
        let ast = parse("=1,5*J3", Locale::Comma).unwrap();
        assert_eq!(ast, Expr::binary(BinaryOp::Mul, Expr::number(1.5), r("J3")));
    }

    #[test]
    fn multiplication_binds_tighter() {
        assert_eq!(
            p("=2+3*4"),
            Expr::binary(BinaryOp::Add, Expr::number(2.0), Expr::binary(BinaryOp::Mul, Expr::number(3.0), Expr::number(4.0)))
        );
    }

    #[test]
    fn negation_binds_tighter_than_power() {
        assert_eq!(
            p("=-2^2"),
            Expr::binary(BinaryOp::Pow, Expr::unary(UnaryOp::Minus, Expr::number(2.0)), Expr::number(2.0))
        );
    }

    #[test]
    fn power_is_left_associative() {
        assert_eq!(
            p("=2^3^2"),
            Expr::binary(BinaryOp::Pow, Expr::binary(BinaryOp::Pow, Expr::number(2.0), Expr::number(3.0)), Expr::number(2.0))
        );
    }

    #[test]
    fn percent_is_postfix() {
        assert_eq!(p("=-A1%"), Expr::unary(UnaryOp::Percent, Expr::unary(UnaryOp::Minus, r("A1"))));
        assert_eq!(p("=50%*2"), Expr::binary(BinaryOp::Mul, Expr::unary(UnaryOp::Percent, Expr::number(50.0)), Expr::number(2.0)));
    }

    #[test]
    fn nested_if_depth() {
        let ast = p("=IF(C4>D4,IF(C4>B4,B4/C4,B4/C4),B4/C4)");
        let Expr::Function { name, args } = &ast else { panic!("not a function") };
        assert_eq!(name, "IF");
        assert_eq!(args.len(), 3);
        assert!(matches!(&args[1], Expr::Function { name, .. } if name == "IF"));
    }

    #[test]
    fn ranges_normalize_and_qualify() {
        let ast = p("=SUM('Sao Paolo'!B9:A2)");
        let Expr::Function { args, .. } = ast else { panic!() };
        let Expr::Range(span) = &args[0] else { panic!() };
        assert_eq!(span.sheet.as_deref(), Some("Sao Paolo"));
        assert_eq!(span.start, CellRef::relative(2, 1));
        assert_eq!(span.end, Some(CellRef::relative(9, 2)));
    }

    #[test]
    fn mixed_absolute_range_corners_swap_flags() {
        let ast = p("=$B2:A$9");
        let Expr::Range(span) = ast else { panic!() };
        assert_eq!(span.start, CellRef { col: 1, row: 2, col_abs: false, row_abs: false });
        assert_eq!(span.end, Some(CellRef { col: 2, row: 9, col_abs: true, row_abs: true }));
    }

    #[test]
    fn omitted_arguments() {
        let ast = p("=IF(A1,,2)");
        let Expr::Function { args, .. } = ast else { panic!() };
        assert_eq!(args[1], Expr::Literal(Value::Blank));
        assert_eq!(p("=NOW()"), Expr::Function { name: "NOW".into(), args: vec![] });
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse("=", Locale::Point), Err(ParseError::EmptyFormula));
        assert_eq!(parse("=  ", Locale::Point), Err(ParseError::EmptyFormula));
        assert_eq!(parse("=(1+2", Locale::Point), Err(ParseError::UnbalancedParens));
        assert_eq!(parse("=1+2)", Locale::Point), Err(ParseError::UnbalancedParens));
        assert_eq!(parse("=SUM(1,2", Locale::Point), Err(ParseError::UnbalancedParens));
        assert!(matches!(parse("1+2", Locale::Point), Err(ParseError::SyntaxError { offset: 0, .. })));
        assert!(matches!(parse("=1+", Locale::Point), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse("=A1 B1", Locale::Point), Err(ParseError::SyntaxError { .. })));
        // 3-D references are outside the grammar.
        assert!(matches!(parse("=SUM(Sheet1:Sheet3!A1)", Locale::Point), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse("=Sheet1!A1:Sheet2!B2", Locale::Point), Err(ParseError::SyntaxError { .. })));
    }

    #[test]
    fn strings_are_opaque() {
        assert_eq!(p("=\"A1 \"\"x\"\"\""), Expr::Literal(Value::Text("A1 \"x\"".into())));
    }
}
