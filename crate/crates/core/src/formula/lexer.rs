use crate::model::{letters_to_col, ErrorCode, MAX_ROW};

use super::{CellRef, Locale, ParseError};

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    Number(f64),
    Str(String),
    Bool(bool),
    Error(ErrorCode),
    /// A cell reference with its optional `[book]` and sheet qualifiers.
    Cell { book: Option<String>, sheet: Option<String>, cell: CellRef },
    /// Identifier directly followed by `(`.
    Func(String),
    Op(&'static str),
    LParen,
    RParen,
    Sep,
    Colon,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Token {
    pub tok: Tok,
    pub offset: usize,
}

// Longest spellings first so prefixes do not shadow them.
const ERROR_SPELLINGS: [&str; 14] = [
    "#DIV/0!", "#DEEL/0!", "#WAARDE!", "#VALUE!", "#GETAL!", "#NAME?", "#NULL!", "#NAAM?", "#LEEG!",
    "#VERW!", "#NUM!", "#REF!", "#N/A", "#N/B",
];

pub(super) fn tokenize(src: &str, locale: Locale) -> Result<Vec<Token>, ParseError> {
    Lexer { src, pos: 0, locale }.run()
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    locale: Locale,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn run(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            let offset = self.pos;
            let Some(c) = self.peek() else {
                out.push(Token { tok: Tok::Eof, offset });
                return Ok(out);
            };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ':' => {
                    self.bump();
                    Tok::Colon
                }
                '"' => self.string()?,
                '#' => self.error_literal()?,
                '\'' | '[' => self.qualified_ref()?,
                c if c == self.locale.separator() => {
                    self.bump();
                    Tok::Sep
                }
                c if c.is_ascii_digit()
                    || (c == self.locale.decimal() && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) =>
                {
                    self.number()?
                }
                '+' | '-' | '*' | '/' | '^' | '&' | '%' | '=' => {
                    self.bump();
                    Tok::Op(match c {
                        '+' => "+",
                        '-' => "-",
                        '*' => "*",
                        '/' => "/",
                        '^' => "^",
                        '&' => "&",
                        '%' => "%",
                        _ => "=",
                    })
                }
                '<' => {
                    self.bump();
                    match self.peek() {
                        Some('=') => {
                            self.bump();
                            Tok::Op("<=")
                        }
                        Some('>') => {
                            self.bump();
                            Tok::Op("<>")
                        }
                        _ => Tok::Op("<"),
                    }
                }
                '>' => {
                    self.bump();
                    if self.peek() == Some('=') {
                        self.bump();
                        Tok::Op(">=")
                    } else {
                        Tok::Op(">")
                    }
                }
                c if c.is_ascii_alphabetic() || c == '_' || c == '$' || c == '\\' => self.word()?,
                _ => return Err(ParseError::syntax(offset, "an operand or operator")),
            };
            out.push(Token { tok, offset });
        }
    }

    fn string(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('"') if self.peek() == Some('"') => {
                    self.bump();
                    s.push('"');
                }
                Some('"') => return Ok(Tok::Str(s)),
                Some(c) => s.push(c),
                None => return Err(ParseError::syntax(start, "closing quote")),
            }
        }
    }

    fn error_literal(&mut self) -> Result<Tok, ParseError> {
        let rest = self.rest();
        for spelling in ERROR_SPELLINGS {
            if rest.len() >= spelling.len()
                && rest.is_char_boundary(spelling.len())
                && rest[..spelling.len()].eq_ignore_ascii_case(spelling)
            {
                self.pos += spelling.len();
                let code = ErrorCode::parse_any(spelling).expect("known spelling");
                return Ok(Tok::Error(code));
            }
        }
        Err(ParseError::syntax(self.pos, "an error literal"))
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        let mut text = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            text.push(c);
            self.bump();
        }
        if self.peek() == Some(self.locale.decimal()) && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            text.push('.');
            while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                text.push(c);
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = self.peek_at(1);
            let digits_at = if matches!(sign, Some('+' | '-')) { 2 } else { 1 };
            if self.peek_at(digits_at).is_some_and(|c| c.is_ascii_digit()) {
                text.push('e');
                self.bump();
                if digits_at == 2 {
                    text.push(self.bump().expect("sign"));
                }
                while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                    text.push(c);
                    self.bump();
                }
            }
        }
        text.parse::<f64>()
            .ok()
            .filter(|n| n.is_finite())
            .map(Tok::Number)
            .ok_or_else(|| ParseError::syntax(start, "a number"))
    }

    /// `'Sheet name'!A1`, `'[Book]Sheet'!A1` or `[Book]Sheet!A1`.
    fn qualified_ref(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        let qualifier = if self.peek() == Some('\'') {
            self.bump();
            let mut name = String::new();
            loop {
                match self.bump() {
                    Some('\'') if self.peek() == Some('\'') => {
                        self.bump();
                        name.push('\'');
                    }
                    Some('\'') => break,
                    Some(c) => name.push(c),
                    None => return Err(ParseError::syntax(start, "closing `'`")),
                }
            }
            name
        } else {
            let mut name = String::new();
            while let Some(c) = self.peek().filter(|&c| c != '!') {
                if c.is_whitespace() || matches!(c, '(' | ')' | '+' | '-' | '*' | '/' | ',' | ';') {
                    break;
                }
                name.push(c);
                self.bump();
            }
            name
        };
        if self.peek() != Some('!') {
            return Err(ParseError::syntax(self.pos, "`!` after sheet name"));
        }
        self.bump();
        let (book, sheet) = split_book(&qualifier).ok_or_else(|| ParseError::syntax(start, "a sheet name"))?;
        let cell_at = self.pos;
        let word = self.take_word();
        let cell = parse_cell_ref(&word).ok_or_else(|| ParseError::syntax(cell_at, "a cell reference"))?;
        Ok(Tok::Cell { book, sheet: Some(sheet), cell })
    }

    fn take_word(&mut self) -> String {
        let mut w = String::new();
        while let Some(c) = self.peek().filter(|&c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '\\')) {
            w.push(c);
            self.bump();
        }
        w
    }

    fn word(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        let word = self.take_word();
        if self.peek() == Some('!') {
            self.bump();
            if word.contains('$') {
                return Err(ParseError::syntax(start, "a sheet name"));
            }
            let cell_at = self.pos;
            let cell_word = self.take_word();
            let cell = parse_cell_ref(&cell_word).ok_or_else(|| ParseError::syntax(cell_at, "a cell reference"))?;
            return Ok(Tok::Cell { book: None, sheet: Some(word), cell });
        }
        let next_non_ws = self.rest().trim_start().chars().next();
        if next_non_ws == Some('(') && !word.contains('$') {
            // Consume whitespace between the name and `(`; the parser expects `(` next.
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            return Ok(Tok::Func(word.to_ascii_uppercase()));
        }
        match word.to_ascii_uppercase().as_str() {
            "TRUE" => return Ok(Tok::Bool(true)),
            "FALSE" => return Ok(Tok::Bool(false)),
            _ => {}
        }
        parse_cell_ref(&word)
            .map(|cell| Tok::Cell { book: None, sheet: None, cell })
            .ok_or_else(|| ParseError::syntax(start, "a cell reference, function or boolean"))
    }
}

/// Splits `[Book]Sheet` into its parts; plain names have no book.
fn split_book(q: &str) -> Option<(Option<String>, String)> {
    if let Some(body) = q.strip_prefix('[') {
        let (book, sheet) = body.split_once(']')?;
        if book.is_empty() || sheet.is_empty() {
            return None;
        }
        Some((Some(book.to_string()), sheet.to_string()))
    } else if q.is_empty() {
        None
    } else {
        Some((None, q.to_string()))
    }
}

/// `$A$1`-style reference without a sheet.
pub(super) fn parse_cell_ref(s: &str) -> Option<CellRef> {
    let mut rest = s;
    let col_abs = rest.starts_with('$');
    if col_abs {
        rest = &rest[1..];
    }
    let letters_end = rest.find(|c: char| !c.is_ascii_alphabetic())?;
    let (letters, tail) = rest.split_at(letters_end);
    let col = letters_to_col(letters)?;
    let row_abs = tail.starts_with('$');
    let digits = if row_abs { &tail[1..] } else { tail };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') || digits.len() > 7 {
        return None;
    }
    let row: u32 = digits.parse().ok()?;
    if row > MAX_ROW {
        return None;
    }
    Some(CellRef { col, row, col_abs, row_abs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str, locale: Locale) -> Vec<Tok> {
        tokenize(s, locale).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn comma_locale_number_and_separator() {
        assert_eq!(
            toks("1,5;2", Locale::Comma),
            vec![Tok::Number(1.5), Tok::Sep, Tok::Number(2.0), Tok::Eof]
        );
        assert_eq!(
            toks("1,5", Locale::Point),
            vec![Tok::Number(1.0), Tok::Sep, Tok::Number(5.0), Tok::Eof]
        );
    }

    #[test]
    fn references() {
        assert_eq!(
            toks("$B$4", Locale::Point)[0],
            Tok::Cell { book: None, sheet: None, cell: CellRef::absolute(4, 2) }
        );
        assert_eq!(
            toks("'Sao Paolo'!A22", Locale::Point)[0],
            Tok::Cell { book: None, sheet: Some("Sao Paolo".into()), cell: CellRef::relative(22, 1) }
        );
        assert_eq!(
            toks("[Budget.xlsx]Q1!A1", Locale::Point)[0],
            Tok::Cell { book: Some("Budget.xlsx".into()), sheet: Some("Q1".into()), cell: CellRef::relative(1, 1) }
        );
        assert_eq!(toks("'[Budget.xlsx]Q1'!A1", Locale::Point), toks("[Budget.xlsx]Q1!A1", Locale::Point));
    }

    #[test]
    fn error_literals_and_words() {
        assert_eq!(toks("#DIV/0!", Locale::Point)[0], Tok::Error(ErrorCode::Div0));
        assert_eq!(toks("#n/a", Locale::Point)[0], Tok::Error(ErrorCode::Na));
        assert_eq!(toks("#NAAM?", Locale::Point)[0], Tok::Error(ErrorCode::Name));
        assert_eq!(toks("sum (", Locale::Point)[0], Tok::Func("SUM".into()));
        assert_eq!(toks("LOG10", Locale::Point)[0], Tok::Cell { book: None, sheet: None, cell: CellRef::relative(10, 8509) });
        assert_eq!(toks("true", Locale::Point)[0], Tok::Bool(true));
        assert!(tokenize("Rate*2", Locale::Point).is_err());
    }

    #[test]
    fn cell_ref_bounds() {
        assert!(parse_cell_ref("XFD1048576").is_some());
        assert!(parse_cell_ref("XFE1").is_none());
        assert!(parse_cell_ref("A1048577").is_none());
        assert!(parse_cell_ref("A0").is_none());
        assert_eq!(parse_cell_ref("A$3"), Some(CellRef { col: 1, row: 3, col_abs: false, row_abs: true }));
    }
}
