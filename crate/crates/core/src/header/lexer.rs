//! Tokenizer for the Objective-C header subset.
//!
//! Comments are dropped, preprocessor lines are dropped and counted, and
//! every token carries a 1-based (line, column) position.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `@interface`, `@end`, `@property`, ... (name without the `@`).
    At(String),
    Number(String),
    /// String or character literal; contents are irrelevant to the grammar.
    Literal,
    Punct(char),
    /// `...`
    Ellipsis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

impl Token {
    pub fn is_punct(&self, c: char) -> bool {
        self.tok == Tok::Punct(c)
    }

    pub fn is_ident(&self, s: &str) -> bool {
        matches!(&self.tok, Tok::Ident(i) if i == s)
    }

    pub fn is_at(&self, s: &str) -> bool {
        matches!(&self.tok, Tok::At(i) if i == s)
    }

    pub fn describe(&self) -> String {
        match &self.tok {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::At(s) => format!("`@{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Literal => "literal".to_string(),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Ellipsis => "`...`".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub preprocessor_lines: usize,
}

pub fn lex(text: &str) -> Lexed {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Lexed::default();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    let mut at_line_start = true;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
                at_line_start = true;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' && at_line_start {
            out.preprocessor_lines += 1;
            while i < chars.len() && chars[i] != '\n' {
                if chars[i] == '\\' && i + 1 < chars.len() && chars[i + 1] == '\n' {
                    bump!();
                }
                bump!();
            }
            continue;
        }
        at_line_start = false;
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                bump!();
            }
            if i < chars.len() {
                bump!();
                bump!();
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_alphabetic() || c == '_' || c == '$' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                s.push(chars[i]);
                bump!();
            }
            out.tokens.push(Token { tok: Tok::Ident(s), line: tl, column: tc });
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            out.tokens.push(Token { tok: Tok::Number(s), line: tl, column: tc });
        } else if c == '@' {
            bump!();
            if i < chars.len() && chars[i] == '"' {
                skip_literal(&chars, &mut i, &mut line, &mut col, '"');
                out.tokens.push(Token { tok: Tok::Literal, line: tl, column: tc });
            } else {
                let mut s = String::new();
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    s.push(chars[i]);
                    bump!();
                }
                out.tokens.push(Token { tok: Tok::At(s), line: tl, column: tc });
            }
        } else if c == '"' || c == '\'' {
            skip_literal(&chars, &mut i, &mut line, &mut col, c);
            out.tokens.push(Token { tok: Tok::Literal, line: tl, column: tc });
        } else if c == '.' && chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') {
            bump!();
            bump!();
            bump!();
            out.tokens.push(Token { tok: Tok::Ellipsis, line: tl, column: tc });
        } else {
            bump!();
            out.tokens.push(Token { tok: Tok::Punct(c), line: tl, column: tc });
        }
    }
    out
}

fn skip_literal(chars: &[char], i: &mut usize, line: &mut usize, col: &mut usize, quote: char) {
    // opening quote
    *i += 1;
    *col += 1;
    while *i < chars.len() {
        let c = chars[*i];
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
            // unterminated literal ends at the line break
            return;
        }
        *col += 1;
        if c == '\\' && *i < chars.len() && chars[*i] != '\n' {
            *i += 1;
            *col += 1;
        } else if c == quote {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based() {
        let l = lex("- (void)x;\n  @end");
        assert_eq!(l.tokens[0].line, 1);
        assert_eq!(l.tokens[0].column, 1);
        let end = l.tokens.last().unwrap();
        assert!(end.is_at("end"));
        assert_eq!((end.line, end.column), (2, 3));
    }

    #[test]
    fn comments_and_preprocessor_are_skipped() {
        let l = lex("#import <Foo/Foo.h>\n#define X \\\n  1\n// c\n/* multi\nline */ id");
        assert_eq!(l.preprocessor_lines, 2);
        assert_eq!(l.tokens.len(), 1);
        assert_eq!(l.tokens[0].line, 6);
    }

    #[test]
    fn hash_mid_line_is_punct() {
        let l = lex("a # b");
        assert_eq!(l.preprocessor_lines, 0);
        assert!(l.tokens[1].is_punct('#'));
    }

    #[test]
    fn ellipsis_and_literals() {
        let l = lex(r#", ... @"str" 'c'"#);
        assert_eq!(l.tokens[1].tok, Tok::Ellipsis);
        assert_eq!(l.tokens[2].tok, Tok::Literal);
        assert_eq!(l.tokens[3].tok, Tok::Literal);
    }
}
