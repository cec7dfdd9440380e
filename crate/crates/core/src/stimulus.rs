//! Java lexing and monospace layout of a method into token-level areas of
//! interest (AOIs).

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the monospace code pane the method is rendered in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodePane {
    pub origin_x_px: f64,
    pub origin_y_px: f64,
    pub cell_w_px: f64,
    pub cell_h_px: f64,
    pub tab_width: usize,
}

impl Default for CodePane {
    fn default() -> Self {
        Self {
            origin_x_px: 64.0,
            origin_y_px: 64.0,
            cell_w_px: 10.0,
            cell_h_px: 21.0,
            tab_width: 4,
        }
    }
}

impl CodePane {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_w_px > 0.0 && self.cell_h_px > 0.0) || self.tab_width == 0 {
            return Err(Error::Parameter(format!(
                "code pane needs positive cell size and tab_width >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    Operator,
    Punctuation,
    Comment,
}

impl TokenKind {
    pub const ALL: [TokenKind; 6] = [
        TokenKind::Identifier,
        TokenKind::Keyword,
        TokenKind::Literal,
        TokenKind::Operator,
        TokenKind::Punctuation,
        TokenKind::Comment,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A lexical token as produced by [`tokenize_java`]. Comments and string
/// literals are single tokens here and may span whitespace or lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexToken {
    pub lexeme: String,
    pub kind: TokenKind,
    pub line: usize,
    /// Character column on `line`.
    pub col_start: usize,
    /// Exclusive character column on `end_line`.
    pub col_end: usize,
    pub end_line: usize,
    pub byte_range: Range<usize>,
}

const KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
];

const WORD_LITERALS: &[&str] = &["true", "false", "null"];

// Longest first so maximal munch is a linear scan.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=", ">=",
    "+=", "-=", "*=", "/=", "&=", "|=", "^=", "%=", "<<", ">>", "=", ">", "<", "!", "~", "?", ":",
    "+", "-", "*", "/", "&", "|", "^", "%",
];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 0;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }
}

/// Lossless, parse-free Java lexer. Every non-whitespace character ends up
/// in exactly one token; unknown characters become one-character
/// punctuation tokens.
pub fn tokenize_java(source: &str) -> Result<Vec<LexToken>> {
    let mut cur = Cursor {
        src: source,
        pos: 0,
        line: 0,
        col: 0,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let (start, line, col) = (cur.pos, cur.line, cur.col);
        let kind = if cur.rest().starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' || cur.rest().starts_with("\r\n") {
                    break;
                }
                cur.bump();
            }
            TokenKind::Comment
        } else if cur.rest().starts_with("/*") {
            cur.bump_n(2);
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump_n(2);
                    break;
                }
                if cur.bump().is_none() {
                    return Err(Error::Lex {
                        line: line + 1,
                        message: "unterminated block comment".into(),
                    });
                }
            }
            TokenKind::Comment
        } else if cur.rest().starts_with("\"\"\"") {
            cur.bump_n(3);
            loop {
                if cur.rest().starts_with("\"\"\"") {
                    cur.bump_n(3);
                    break;
                }
                match cur.bump() {
                    Some('\\') => {
                        cur.bump();
                    }
                    Some(_) => {}
                    None => {
                        return Err(Error::Lex {
                            line: line + 1,
                            message: "unterminated text block".into(),
                        })
                    }
                }
            }
            TokenKind::Literal
        } else if c == '"' || c == '\'' {
            cur.bump();
            loop {
                match cur.bump() {
                    Some('\\') => {
                        if matches!(cur.peek(), Some('\n') | None) {
                            return Err(unterminated_quote(c, line));
                        }
                        cur.bump();
                    }
                    Some(q) if q == c => break,
                    Some('\n') | None => return Err(unterminated_quote(c, line)),
                    Some(_) => {}
                }
            }
            TokenKind::Literal
        } else if c.is_ascii_digit()
            || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit()))
        {
            lex_number(&mut cur);
            TokenKind::Literal
        } else if c.is_alphabetic() || c == '_' || c == '$' {
            while cur
                .peek()
                .is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '$')
            {
                cur.bump();
            }
            let word = &source[start..cur.pos];
            if KEYWORDS.contains(&word) {
                TokenKind::Keyword
            } else if WORD_LITERALS.contains(&word) {
                TokenKind::Literal
            } else {
                TokenKind::Identifier
            }
        } else if let Some(op) = OPERATORS.iter().find(|op| cur.rest().starts_with(**op)) {
            cur.bump_n(op.chars().count());
            if *op == "..." {
                TokenKind::Punctuation
            } else {
                TokenKind::Operator
            }
        } else {
            // separators, plus stray characters ('#', '`', ...) so the lexer
            // stays lossless
            cur.bump();
            TokenKind::Punctuation
        };
        tokens.push(LexToken {
            lexeme: source[start..cur.pos].to_string(),
            kind,
            line,
            col_start: col,
            col_end: cur.col,
            end_line: cur.line,
            byte_range: start..cur.pos,
        });
    }
    Ok(tokens)
}

fn unterminated_quote(quote: char, line: usize) -> Error {
    let what = if quote == '"' {
        "string literal"
    } else {
        "character literal"
    };
    Error::Lex {
        line: line + 1,
        message: format!("unterminated {what}"),
    }
}

fn lex_number(cur: &mut Cursor<'_>) {
    let start = cur.pos;
    let hex = cur.rest().starts_with("0x") || cur.rest().starts_with("0X");
    while let Some(c) = cur.peek() {
        let prev = cur.src[start..cur.pos].chars().last();
        let exponent_sign = (c == '+' || c == '-')
            && match prev {
                Some('e' | 'E') => !hex,
                Some('p' | 'P') => hex,
                _ => false,
            };
        let dot = c == '.' && !cur.src[start..cur.pos].contains('.') && cur.peek_at(1) != Some('.');
        if c.is_ascii_alphanumeric() || c == '_' || dot || exponent_sign {
            cur.bump();
        } else {
            break;
        }
    }
}

/// Axis-aligned pixel rectangle, half-open on the right and bottom edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Offset from the point to the nearest point of the rectangle; zero
    /// inside.
    pub fn offset_from(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = if x < self.x0 {
            self.x0 - x
        } else if x > self.x1 {
            x - self.x1
        } else {
            0.0
        };
        let dy = if y < self.y0 {
            self.y0 - y
        } else if y > self.y1 {
            y - self.y1
        } else {
            0.0
        };
        (dx, dy)
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

/// One area of interest: a whitespace-free, single-line piece of source.
/// Comments and string literals containing whitespace are split into one
/// AOI per word, each keeping the kind of the lexical token it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub lexeme: String,
    pub kind: TokenKind,
    pub line: usize,
    /// Display column after tab expansion.
    pub col_start: usize,
    pub col_end: usize,
    pub bbox: Rect,
    pub byte_range: Range<usize>,
}

impl Token {
    pub fn is_punctuation(&self) -> bool {
        self.kind == TokenKind::Punctuation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusLayout {
    pub method_id: String,
    pub source: String,
    pub tokens: Vec<Token>,
    pub pane: CodePane,
}

impl StimulusLayout {
    /// Lexes `source` and lays it out on `pane`.
    pub fn build(
        method_id: impl Into<String>,
        source: impl Into<String>,
        pane: CodePane,
    ) -> Result<Self> {
        let source = source.into();
        let lexed = tokenize_java(&source)?;
        layout(method_id, source, &lexed, pane)
    }

    pub fn line_count(&self) -> usize {
        self.source.split('\n').count().max(1)
    }

    pub fn contains_lexeme(&self, word: &str) -> bool {
        self.tokens.iter().any(|t| t.lexeme == word)
    }
}

/// Places lexed tokens on the monospace grid. Tabs advance to the next
/// multiple of `pane.tab_width`.
pub fn layout(
    method_id: impl Into<String>,
    source: impl Into<String>,
    lexed: &[LexToken],
    pane: CodePane,
) -> Result<StimulusLayout> {
    pane.validate()?;
    let source = source.into();
    let mut tokens = Vec::with_capacity(lexed.len());
    for lex in lexed {
        // walk the token text, cutting it at whitespace and line breaks
        let mut line = lex.line;
        let mut line_start_byte = source[..lex.byte_range.start]
            .rfind('\n')
            .map_or(0, |i| i + 1);
        let mut piece_start: Option<usize> = None;
        let text = &source[lex.byte_range.clone()];
        let emit =
            |from: usize, to: usize, line: usize, line_start: usize, tokens: &mut Vec<Token>| {
                let col_start = display_column(&source[line_start..from], pane.tab_width);
                let col_end =
                    col_start + display_column_from(&source[from..to], col_start, pane.tab_width);
                tokens.push(Token {
                    lexeme: source[from..to].to_string(),
                    kind: lex.kind,
                    line,
                    col_start,
                    col_end,
                    bbox: Rect {
                        x0: pane.origin_x_px + col_start as f64 * pane.cell_w_px,
                        y0: pane.origin_y_px + line as f64 * pane.cell_h_px,
                        x1: pane.origin_x_px + col_end as f64 * pane.cell_w_px,
                        y1: pane.origin_y_px + (line + 1) as f64 * pane.cell_h_px,
                    },
                    byte_range: from..to,
                });
            };
        for (off, ch) in text.char_indices() {
            let at = lex.byte_range.start + off;
            if ch.is_whitespace() {
                if let Some(s) = piece_start.take() {
                    emit(s, at, line, line_start_byte, &mut tokens);
                }
                if ch == '\n' {
                    line += 1;
                    line_start_byte = at + 1;
                }
            } else if piece_start.is_none() {
                piece_start = Some(at);
            }
        }
        if let Some(s) = piece_start {
            emit(s, lex.byte_range.end, line, line_start_byte, &mut tokens);
        }
    }
    Ok(StimulusLayout {
        method_id: method_id.into(),
        source,
        tokens,
        pane,
    })
}

fn display_column(prefix: &str, tab_width: usize) -> usize {
    display_column_from(prefix, 0, tab_width)
}

/// Width of `text` when it starts at display column `start`.
fn display_column_from(text: &str, start: usize, tab_width: usize) -> usize {
    let mut col = start;
    for c in text.chars() {
        if c == '\t' {
            col = (col / tab_width + 1) * tab_width;
        } else {
            col += 1;
        }
    }
    col - start
}

/// One entry of the method corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSource {
    pub method_id: String,
    pub source: String,
}

pub fn read_methods_jsonl<R: BufRead>(reader: R) -> Result<Vec<MethodSource>> {
    let mut methods = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<method corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        methods
            .push(serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?);
    }
    Ok(methods)
}

pub fn load_methods(path: &Path) -> Result<Vec<MethodSource>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_methods_jsonl(BufReader::new(file))
}

pub fn write_methods_jsonl<W: Write>(mut writer: W, methods: &[MethodSource]) -> Result<()> {
    for m in methods {
        serde_json::to_writer(&mut writer, m)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<method corpus>", e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LayoutDumpRecord<'a> {
    method_id: &'a str,
    index: usize,
    lexeme: &'a str,
    kind: TokenKind,
    line: usize,
    col_start: usize,
    col_end: usize,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

/// One JSON line per AOI, for overlay and debugging tools.
pub fn write_layout_dump<W: Write>(mut writer: W, layouts: &[&StimulusLayout]) -> Result<()> {
    for layout in layouts {
        for (index, t) in layout.tokens.iter().enumerate() {
            let rec = LayoutDumpRecord {
                method_id: &layout.method_id,
                index,
                lexeme: &t.lexeme,
                kind: t.kind,
                line: t.line,
                col_start: t.col_start,
                col_end: t.col_end,
                x0: t.bbox.x0,
                y0: t.bbox.y0,
                x1: t.bbox.x1,
                y1: t.bbox.y1,
            };
            serde_json::to_writer(&mut writer, &rec)?;
            writer
                .write_all(b"\n")
                .map_err(|e| Error::io("<layout dump>", e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenKind::*;

    pub(crate) const NEGATIVE_PARSE: &str = "  public void  testNegativeParseCases() {\n    verbose(\"--->Negative parse tests  START\");\n    for (int i = 0; i < negativeParseTests.length; i++) {\n      parseFilter(negativeParseTests[i], false);\n    }\n    checkDelete(); }";

    fn kinds(src: &str) -> Vec<(String, TokenKind)> {
        tokenize_java(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.lexeme, t.kind))
            .collect()
    }

    fn pairs(items: &[(&str, TokenKind)]) -> Vec<(String, TokenKind)> {
        items.iter().map(|(l, k)| (l.to_string(), *k)).collect()
    }

    #[test]
    fn elementary_statement() {
        assert_eq!(
            kinds("int i = 0;"),
            pairs(&[
                ("int", Keyword),
                ("i", Identifier),
                ("=", Operator),
                ("0", Literal),
                (";", Punctuation)
            ])
        );
    }

    #[test]
    fn method_signature_line() {
        let first_line: Vec<_> = tokenize_java(NEGATIVE_PARSE)
            .unwrap()
            .into_iter()
            .filter(|t| t.line == 0)
            .map(|t| (t.lexeme, t.kind))
            .collect();
        assert_eq!(
            first_line,
            pairs(&[
                ("public", Keyword),
                ("void", Keyword),
                ("testNegativeParseCases", Identifier),
                ("(", Punctuation),
                (")", Punctuation),
                ("{", Punctuation),
            ])
        );
    }

    #[test]
    fn line_comment_is_one_token() {
        assert_eq!(kinds("// x+y"), pairs(&[("// x+y", Comment)]));
    }

    #[test]
    fn multi_char_operators_and_literals() {
        assert_eq!(
            kinds("x >>>= 0x1Fp-3 + 1.5e-3f; s -> 'c' != \"a\\\"b\""),
            pairs(&[
                ("x", Identifier),
                (">>>=", Operator),
                ("0x1Fp-3", Literal),
                ("+", Operator),
                ("1.5e-3f", Literal),
                (";", Punctuation),
                ("s", Identifier),
                ("->", Operator),
                ("'c'", Literal),
                ("!=", Operator),
                ("\"a\\\"b\"", Literal),
            ])
        );
        assert_eq!(
            kinds("a.length; 0xE+1; @Override"),
            pairs(&[
                ("a", Identifier),
                (".", Punctuation),
                ("length", Identifier),
                (";", Punctuation),
                ("0xE", Literal),
                ("+", Operator),
                ("1", Literal),
                (";", Punctuation),
                ("@", Punctuation),
                ("Override", Identifier),
            ])
        );
    }

    #[test]
    fn block_comment_spans_lines() {
        let toks = tokenize_java("/* a\n b */ x").unwrap();
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[0].kind, Comment);
        assert_eq!((toks[0].line, toks[0].end_line, toks[0].col_end), (0, 1, 5));
        assert_eq!((toks[1].line, toks[1].col_start), (1, 6));
    }

    #[test]
    fn unterminated_literals_report_line() {
        for (src, line) in [
            ("int a;\nString s = \"abc;\n", 2),
            ("/* open\n\n", 1),
            ("x\n\n'a", 3),
        ] {
            match tokenize_java(src) {
                Err(Error::Lex { line: l, .. }) => assert_eq!(l, line, "{src:?}"),
                other => panic!("{src:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn layout_bbox_arithmetic() {
        let pane = CodePane {
            origin_x_px: 100.0,
            origin_y_px: 50.0,
            cell_w_px: 10.0,
            cell_h_px: 20.0,
            tab_width: 4,
        };
        let l = StimulusLayout::build("m", "int x;\ny", pane).unwrap();
        assert_eq!(
            l.tokens[0].bbox,
            Rect {
                x0: 100.0,
                y0: 50.0,
                x1: 130.0,
                y1: 70.0
            }
        );
        let y = l.tokens.last().unwrap();
        assert_eq!(y.bbox.y0, 70.0);
    }

    #[test]
    fn tabs_expand_during_layout() {
        let l = StimulusLayout::build("m", "{\n\treturn;\n}", CodePane::default()).unwrap();
        let ret = &l.tokens[1];
        assert_eq!(ret.lexeme, "return");
        assert_eq!((ret.line, ret.col_start, ret.col_end), (1, 4, 10));
        let l = StimulusLayout::build("m", "a\tb", CodePane::default()).unwrap();
        assert_eq!(l.tokens[1].col_start, 4);
    }

    #[test]
    fn string_literal_words_become_separate_aois() {
        let l = StimulusLayout::build("m", NEGATIVE_PARSE, CodePane::default()).unwrap();
        let words: Vec<_> = l
            .tokens
            .iter()
            .filter(|t| t.line == 1)
            .map(|t| t.lexeme.as_str())
            .collect();
        assert_eq!(
            words,
            [
                "verbose",
                "(",
                "\"--->Negative",
                "parse",
                "tests",
                "START\"",
                ")",
                ";"
            ]
        );
        assert!(l
            .tokens
            .iter()
            .all(|t| !t.lexeme.chars().any(char::is_whitespace)));
        assert!(l.tokens[..]
            .windows(2)
            .all(|w| (w[0].line, w[0].col_start) < (w[1].line, w[1].col_start)));
    }
}
