//! Tokenizer shared by the matcher and effect grammars.

use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Plus,
    Minus,
    Star,
    Slash,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    LParen,
    RParen,
    Comma,
    Dot,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Plus => "`+`".to_string(),
            Tok::Minus => "`-`".to_string(),
            Tok::Star => "`*`".to_string(),
            Tok::Slash => "`/`".to_string(),
            Tok::EqEq => "`==`".to_string(),
            Tok::NotEq => "`!=`".to_string(),
            Tok::Lt => "`<`".to_string(),
            Tok::Le => "`<=`".to_string(),
            Tok::Gt => "`>`".to_string(),
            Tok::Ge => "`>=`".to_string(),
            Tok::AndAnd => "`&&`".to_string(),
            Tok::OrOr => "`||`".to_string(),
            Tok::Bang => "`!`".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Dot => "`.`".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col: self.col, message: message.into() }
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer::new(src);
    let mut tokens = Vec::new();

    while let Some(b) = lx.peek() {
        if b.is_ascii_whitespace() {
            lx.bump();
            continue;
        }

        let (line, col) = (lx.line, lx.col);
        let tok = match b {
            b'(' => {
                lx.bump();
                Tok::LParen
            }
            b')' => {
                lx.bump();
                Tok::RParen
            }
            b',' => {
                lx.bump();
                Tok::Comma
            }
            b'.' => {
                lx.bump();
                Tok::Dot
            }
            b'+' => {
                lx.bump();
                Tok::Plus
            }
            b'-' => {
                lx.bump();
                Tok::Minus
            }
            b'*' => {
                lx.bump();
                Tok::Star
            }
            b'/' => {
                lx.bump();
                Tok::Slash
            }
            b'=' => {
                if lx.peek2() == Some(b'=') {
                    lx.bump();
                    lx.bump();
                    Tok::EqEq
                } else {
                    return Err(ParseError::UnknownOperator { op: "=".into(), line, col });
                }
            }
            b'!' => {
                lx.bump();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    Tok::NotEq
                } else {
                    Tok::Bang
                }
            }
            b'<' => {
                lx.bump();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            b'>' => {
                lx.bump();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            b'&' => {
                if lx.peek2() == Some(b'&') {
                    lx.bump();
                    lx.bump();
                    Tok::AndAnd
                } else {
                    return Err(ParseError::UnknownOperator { op: "&".into(), line, col });
                }
            }
            b'|' => {
                if lx.peek2() == Some(b'|') {
                    lx.bump();
                    lx.bump();
                    Tok::OrOr
                } else {
                    return Err(ParseError::UnknownOperator { op: "|".into(), line, col });
                }
            }
            b'"' => {
                lx.bump();
                let mut bytes = Vec::new();
                loop {
                    match lx.bump() {
                        None => return Err(lx.error("unterminated string literal")),
                        Some(b'"') => break,
                        Some(b'\\') => match lx.bump() {
                            Some(b'"') => bytes.push(b'"'),
                            Some(b'\\') => bytes.push(b'\\'),
                            Some(b'n') => bytes.push(b'\n'),
                            Some(b't') => bytes.push(b'\t'),
                            Some(b'r') => bytes.push(b'\r'),
                            other => {
                                return Err(lx.error(format!(
                                    "invalid escape sequence `\\{}`",
                                    other.map(char::from).unwrap_or(' ')
                                )))
                            }
                        },
                        Some(c) => bytes.push(c),
                    }
                }
                let s = String::from_utf8(bytes)
                    .map_err(|_| lx.error("invalid UTF-8 in string literal"))?;
                Tok::Str(s)
            }
            b'0'..=b'9' => {
                let start = lx.pos;
                while lx.peek().is_some_and(|c| c.is_ascii_digit()) {
                    lx.bump();
                }
                if lx.peek() == Some(b'.') && lx.peek2().is_some_and(|c| c.is_ascii_digit()) {
                    lx.bump();
                    while lx.peek().is_some_and(|c| c.is_ascii_digit()) {
                        lx.bump();
                    }
                }
                if matches!(lx.peek(), Some(b'e') | Some(b'E')) {
                    let mut ahead = lx.pos + 1;
                    if matches!(lx.src.get(ahead), Some(b'+') | Some(b'-')) {
                        ahead += 1;
                    }
                    if lx.src.get(ahead).is_some_and(|c| c.is_ascii_digit()) {
                        while lx.pos < ahead {
                            lx.bump();
                        }
                        while lx.peek().is_some_and(|c| c.is_ascii_digit()) {
                            lx.bump();
                        }
                    }
                }
                let text = std::str::from_utf8(&lx.src[start..lx.pos]).expect("ascii digits");
                let n: f64 = text
                    .parse()
                    .map_err(|_| lx.error(format!("invalid number literal `{text}`")))?;
                Tok::Num(n)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = lx.pos;
                while lx.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                    lx.bump();
                }
                let text = std::str::from_utf8(&lx.src[start..lx.pos]).expect("ascii ident");
                Tok::Ident(text.to_string())
            }
            other => {
                let op = if other.is_ascii_graphic() {
                    (other as char).to_string()
                } else {
                    format!("\\x{other:02x}")
                };
                return Err(ParseError::UnknownOperator { op, line, col });
            }
        };

        tokens.push(Token { tok, line, col });
    }

    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_matcher_tokens() {
        assert_eq!(
            toks("r.sub == p.sub && !x"),
            vec![
                Tok::Ident("r".into()),
                Tok::Dot,
                Tok::Ident("sub".into()),
                Tok::EqEq,
                Tok::Ident("p".into()),
                Tok::Dot,
                Tok::Ident("sub".into()),
                Tok::AndAnd,
                Tok::Bang,
                Tok::Ident("x".into()),
            ]
        );
    }

    #[test]
    fn single_equals_is_unknown_operator() {
        match tokenize("r.sub = p.sub") {
            Err(ParseError::UnknownOperator { op, .. }) => assert_eq!(op, "="),
            other => panic!("expected UnknownOperator, got {other:?}"),
        }
    }

    #[test]
    fn tracks_line_and_column() {
        let tokens = tokenize("a &&\n  b").unwrap();
        assert_eq!((tokens[2].line, tokens[2].col), (2, 3));
    }

    #[test]
    fn string_escapes_and_unicode() {
        assert_eq!(toks(r#""say \"hi\"""#), vec![Tok::Str("say \"hi\"".into())]);
        assert_eq!(toks("\"héllo\""), vec![Tok::Str("héllo".into())]);
    }

    #[test]
    fn numbers_with_fraction_and_exponent() {
        assert_eq!(toks("1.5e2"), vec![Tok::Num(150.0)]);
        assert_eq!(toks("42"), vec![Tok::Num(42.0)]);
    }
}
