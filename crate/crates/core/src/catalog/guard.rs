//! Token-level read-only guard for LLM-authored SQL.
//!
//! This is a denylist plus a single-statement check. It does not parse SQL;
//! the engine connection is additionally opened with `query_only` set.

use std::ops::Range;

/// Keywords that may never appear as bare words in an accepted query.
pub const DENIED_KEYWORDS: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "DROP", "ALTER", "ATTACH", "DETACH", "PRAGMA", "CREATE",
    "REPLACE", "VACUUM", "REINDEX",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    /// Single-quoted string literal.
    Str,
    /// Double-quoted or backtick identifier.
    QuotedIdent,
    Number,
    Semicolon,
    OpenParen,
    CloseParen,
    Comma,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

impl Token {
    pub fn text<'a>(&self, sql: &'a str) -> &'a str {
        &sql[self.span.clone()]
    }

    pub fn is_word(&self, sql: &str, word: &str) -> bool {
        self.kind == TokenKind::Word && self.text(sql).eq_ignore_ascii_case(word)
    }
}

/// Splits `sql` into tokens, dropping whitespace and comments.
///
/// Unterminated literals and comments run to the end of input.
pub fn tokenize(sql: &str) -> Vec<Token> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b if b.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
                continue;
            }
            b'\'' | b'"' | b'`' => {
                let quote = b;
                i += 1;
                loop {
                    if i >= bytes.len() {
                        break;
                    }
                    if bytes[i] == quote {
                        // doubled quote is an escaped quote
                        if bytes.get(i + 1) == Some(&quote) {
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    i += 1;
                }
                let kind = if quote == b'\'' { TokenKind::Str } else { TokenKind::QuotedIdent };
                tokens.push(Token { kind, span: start..i });
            }
            b'[' => {
                while i < bytes.len() && bytes[i] != b']' {
                    i += 1;
                }
                i = (i + 1).min(bytes.len());
                tokens.push(Token { kind: TokenKind::QuotedIdent, span: start..i });
            }
            b if b.is_ascii_alphabetic() || b == b'_' || b >= 0x80 => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80)
                {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Word, span: start..i });
            }
            b if b.is_ascii_digit() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Number, span: start..i });
            }
            _ => {
                let kind = match b {
                    b';' => TokenKind::Semicolon,
                    b'(' => TokenKind::OpenParen,
                    b')' => TokenKind::CloseParen,
                    b',' => TokenKind::Comma,
                    _ => TokenKind::Other,
                };
                i += 1;
                tokens.push(Token { kind, span: start..i });
            }
        }
    }
    tokens
}

/// Why a query was refused by [`check_read_only`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GuardViolation {
    #[error("empty query")]
    Empty,
    #[error("only SELECT statements are allowed, found `{0}`")]
    NotSelect(String),
    #[error("keyword `{0}` is not allowed in read-only queries")]
    DeniedKeyword(String),
    #[error("only a single statement is allowed")]
    MultipleStatements,
}

/// Returns the statement text with at most one trailing semicolon removed,
/// or the first violation found.
pub fn check_read_only(sql: &str) -> Result<&str, GuardViolation> {
    let tokens = tokenize(sql);
    let first = tokens.first().ok_or(GuardViolation::Empty)?;
    if !first.is_word(sql, "SELECT") {
        return Err(GuardViolation::NotSelect(first.text(sql).to_string()));
    }
    for (idx, tok) in tokens.iter().enumerate() {
        match tok.kind {
            TokenKind::Word => {
                let word = tok.text(sql);
                if let Some(denied) = DENIED_KEYWORDS.iter().find(|k| word.eq_ignore_ascii_case(k)) {
                    return Err(GuardViolation::DeniedKeyword((*denied).to_string()));
                }
            }
            TokenKind::Semicolon => {
                if tokens[idx + 1..].iter().any(|t| t.kind != TokenKind::Semicolon) {
                    return Err(GuardViolation::MultipleStatements);
                }
                return Ok(sql[..tok.span.start].trim_end());
            }
            _ => {}
        }
    }
    Ok(sql.trim_end())
}

/// True when the query uses the `LIMIT` keyword outside literals.
pub fn uses_limit(sql: &str) -> bool {
    tokenize(sql).iter().any(|t| t.is_word(sql, "LIMIT"))
}

/// Byte range of the projection list of the outermost SELECT: everything
/// between the leading `SELECT` (and an optional `DISTINCT`/`ALL`) and the
/// first `FROM` at parenthesis depth zero.
pub fn projection_span(sql: &str) -> Option<Range<usize>> {
    let tokens = tokenize(sql);
    let first = tokens.first()?;
    if !first.is_word(sql, "SELECT") {
        return None;
    }
    let mut start_tok = 1;
    if tokens
        .get(1)
        .is_some_and(|t| t.is_word(sql, "DISTINCT") || t.is_word(sql, "ALL"))
    {
        start_tok = 2;
    }
    let start = tokens.get(start_tok)?.span.start;
    let mut depth = 0usize;
    for tok in &tokens[start_tok..] {
        match tok.kind {
            TokenKind::OpenParen => depth += 1,
            TokenKind::CloseParen => depth = depth.saturating_sub(1),
            TokenKind::Word if depth == 0 && tok.is_word(sql, "FROM") => {
                return Some(start..tok.span.start);
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_plain_select_with_trailing_semicolon() {
        assert_eq!(check_read_only("SELECT * FROM items;  "), Ok("SELECT * FROM items"));
        assert_eq!(check_read_only("  select title from items"), Ok("  select title from items"));
    }

    #[test]
    fn rejects_writes_and_second_statements() {
        assert!(matches!(check_read_only("DROP TABLE items"), Err(GuardViolation::NotSelect(_))));
        assert_eq!(check_read_only("SELECT 1; DELETE FROM items"), Err(GuardViolation::MultipleStatements));
        assert_eq!(
            check_read_only("SELECT * FROM items WHERE id IN (DELETE FROM items)"),
            Err(GuardViolation::DeniedKeyword("DELETE".into()))
        );
        assert_eq!(check_read_only("SELECT 1; SELECT 2"), Err(GuardViolation::MultipleStatements));
        assert_eq!(
            check_read_only("SELECT * FROM items WHERE 1=1 AND pragma_x"),
            Ok("SELECT * FROM items WHERE 1=1 AND pragma_x")
        );
        assert_eq!(
            check_read_only("select * from items where title in (select title from items) and attach"),
            Err(GuardViolation::DeniedKeyword("ATTACH".into()))
        );
        assert_eq!(check_read_only("   "), Err(GuardViolation::Empty));
    }

    #[test]
    fn keywords_inside_literals_are_ignored() {
        let q = "SELECT title FROM items WHERE description LIKE '%drop; delete%'";
        assert_eq!(check_read_only(q), Ok(q));
        assert!(!uses_limit("SELECT * FROM items WHERE title LIKE '%limit%'"));
        assert!(uses_limit("SELECT * FROM items limit 3"));
    }

    #[test]
    fn comments_cannot_hide_statements() {
        assert_eq!(
            check_read_only("SELECT 1 -- ; DROP TABLE items"),
            Ok("SELECT 1 -- ; DROP TABLE items")
        );
        assert!(check_read_only("SELECT 1 /* x */; DROP TABLE items").is_err());
    }

    #[test]
    fn projection_span_skips_nested_from() {
        let q = "SELECT DISTINCT title, (SELECT 1 FROM items) FROM items WHERE price < 5";
        let span = projection_span(q).unwrap();
        assert_eq!(q[span].trim(), "title, (SELECT 1 FROM items)");
        assert_eq!(projection_span("SELECT 1"), None);
    }
}
