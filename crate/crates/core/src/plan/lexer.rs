use super::PlanError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Eq,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Newline,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Eq => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

/// Splits plan code into tokens. Newlines inside brackets are dropped, the
/// same implicit line joining Python does, so argument lists may wrap.
pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, PlanError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    let mut depth: usize = 0;

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let mut push = |tok: Tok| {
            out.push(Spanned {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        match c {
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '\n' => {
                if depth == 0 {
                    push(Tok::Newline);
                }
                i += 1;
                line += 1;
                col = 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
            }
            '=' | '(' | ')' | '[' | ']' | ',' | '.' => {
                let tok = match c {
                    '=' => Tok::Eq,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    _ => Tok::Dot,
                };
                match tok {
                    Tok::LParen | Tok::LBracket => depth += 1,
                    Tok::RParen | Tok::RBracket => depth = depth.saturating_sub(1),
                    _ => {}
                }
                push(tok);
                i += 1;
                col += 1;
            }
            '\'' | '"' => {
                let quote = c;
                let mut text = String::new();
                i += 1;
                col += 1;
                loop {
                    let Some(&ch) = chars.get(i) else {
                        return Err(PlanError::syntax(line, col, "closing quote"));
                    };
                    match ch {
                        '\n' => return Err(PlanError::syntax(line, col, "closing quote")),
                        '\\' => {
                            let Some(&esc) = chars.get(i + 1) else {
                                return Err(PlanError::syntax(line, col + 1, "escape character"));
                            };
                            let decoded = match esc {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                '\\' | '\'' | '"' => esc,
                                '\n' => {
                                    return Err(PlanError::syntax(line, col + 1, "escape character"))
                                }
                                other => {
                                    // unknown escapes are kept literally, as Python does
                                    text.push('\\');
                                    other
                                }
                            };
                            text.push(decoded);
                            i += 2;
                            col += 2;
                        }
                        ch if ch == quote => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        ch => {
                            text.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                push(Tok::Str(text));
            }
            c if c == '_' || c.is_ascii_alphabetic() => {
                let mut ident = String::new();
                while i < chars.len() && (chars[i] == '_' || chars[i].is_ascii_alphanumeric()) {
                    ident.push(chars[i]);
                    i += 1;
                    col += 1;
                }
                push(Tok::Ident(ident));
            }
            _ => return Err(PlanError::syntax(line, col, "statement")),
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}
