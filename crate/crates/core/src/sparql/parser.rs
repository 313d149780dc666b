//! Lexer and recursive-descent parser for the supported SELECT subset.
//!
//! Grammar:
//!
//! ```text
//! query    := prefix* SELECT DISTINCT? ('*' | var+) WHERE? '{' group '}' [ORDER BY cond] [LIMIT n]
//! prefix   := PREFIX pname-ns <iri>
//! group    := (triples | VALUES var '{' term* '}' | FILTER '(' cmp ('&&' cmp)* ')' | '.')*
//! triples  := term term term (',' term)* (';' term term (',' term)*)*
//! cmp      := operand op term
//! operand  := var | cast '(' var ')'
//! cond     := (ASC | DESC) '(' operand ')' | operand
//! ```
//!
//! The `ns:` prefix and any declared prefixes are stripped so that terms
//! match the bare IRIs stored in the knowledge base.

use std::collections::HashMap;

use super::ast::*;
use super::SparqlError;
use crate::kb::{normalize_datatype, Term};

const FREEBASE_NS: &str = "http://rdf.freebase.com/ns/";

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(String),
    IriRef(String),
    PName(String, String),
    Str(String),
    Number(String),
    Word(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Dot,
    Comma,
    Semicolon,
    Star,
    Caret2,
    LangTag(String),
    Op(CompareOp),
    AndAnd,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Var(v) => format!("'?{v}'"),
            Tok::IriRef(i) => format!("'<{i}>'"),
            Tok::PName(p, l) => format!("'{p}:{l}'"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Number(n) => format!("'{n}'"),
            Tok::Word(w) => format!("'{w}'"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Comma => "','".into(),
            Tok::Semicolon => "';'".into(),
            Tok::Star => "'*'".into(),
            Tok::Caret2 => "'^^'".into(),
            Tok::LangTag(t) => format!("'@{t}'"),
            Tok::Op(op) => format!("'{}'", op.symbol()),
            Tok::AndAnd => "'&&'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    col: usize,
}

fn err(pos: Pos, message: impl Into<String>) -> SparqlError {
    SparqlError::Parse {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    }
}

fn is_pn_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '%')
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.char_indices().peekable(),
            src,
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek_offset(&mut self) -> usize {
        self.chars.peek().map_or(self.src.len(), |&(i, _)| i)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !f(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, Pos)>, SparqlError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let pos = self.pos();
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, pos));
                return Ok(out);
            };
            let tok = match c {
                '{' => {
                    self.bump();
                    Tok::LBrace
                }
                '}' => {
                    self.bump();
                    Tok::RBrace
                }
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                ';' => {
                    self.bump();
                    Tok::Semicolon
                }
                '*' => {
                    self.bump();
                    Tok::Star
                }
                '.' => {
                    self.bump();
                    Tok::Dot
                }
                '?' | '$' => {
                    self.bump();
                    let name = self.take_while(|c| c.is_alphanumeric() || c == '_');
                    if name.is_empty() {
                        return Err(err(pos, "expected a variable name after '?'"));
                    }
                    Tok::Var(name)
                }
                '"' | '\'' => Tok::Str(self.string_literal(pos)?),
                '^' => {
                    self.bump();
                    if self.peek() != Some('^') {
                        return Err(err(pos, "expected '^^'"));
                    }
                    self.bump();
                    Tok::Caret2
                }
                '@' => {
                    self.bump();
                    let tag = self.take_while(|c| c.is_alphanumeric() || c == '-');
                    if tag.is_empty() {
                        return Err(err(pos, "expected a language tag after '@'"));
                    }
                    Tok::LangTag(tag)
                }
                '=' => {
                    self.bump();
                    Tok::Op(CompareOp::Eq)
                }
                '!' => {
                    self.bump();
                    if self.peek() != Some('=') {
                        return Err(err(pos, "unexpected character '!'"));
                    }
                    self.bump();
                    Tok::Op(CompareOp::Ne)
                }
                '>' => {
                    self.bump();
                    if self.peek() == Some('=') {
                        self.bump();
                        Tok::Op(CompareOp::Ge)
                    } else {
                        Tok::Op(CompareOp::Gt)
                    }
                }
                '<' => self.angle(),
                '&' => {
                    self.bump();
                    if self.peek() != Some('&') {
                        return Err(err(pos, "unexpected character '&'"));
                    }
                    self.bump();
                    Tok::AndAnd
                }
                c if c.is_ascii_digit() || c == '-' || c == '+' => self.number(pos)?,
                c if c.is_alphabetic() || c == '_' || c == ':' => self.word_or_pname(),
                other => return Err(err(pos, format!("unexpected character '{other}'"))),
            };
            out.push((tok, pos));
        }
    }

    fn angle(&mut self) -> Tok {
        // '<' opens an IRI when a '>' closes it before any whitespace
        let start = self.peek_offset();
        let rest = &self.src[start + 1..];
        if let Some(end) = rest.find(|c: char| c == '>' || c.is_whitespace()) {
            if rest[end..].starts_with('>') && end > 0 {
                let iri = rest[..end].to_string();
                for _ in 0..end + 2 {
                    self.bump();
                }
                return Tok::IriRef(iri);
            }
        }
        self.bump();
        if self.peek() == Some('=') {
            self.bump();
            Tok::Op(CompareOp::Le)
        } else {
            Tok::Op(CompareOp::Lt)
        }
    }

    fn string_literal(&mut self, pos: Pos) -> Result<String, SparqlError> {
        let quote = self.bump().expect("peeked quote");
        let mut value = String::new();
        loop {
            match self.bump() {
                None => return Err(err(pos, "unterminated string literal")),
                Some(c) if c == quote => return Ok(value),
                Some('\\') => match self.bump() {
                    Some('n') => value.push('\n'),
                    Some('t') => value.push('\t'),
                    Some('r') => value.push('\r'),
                    Some(c @ ('"' | '\'' | '\\')) => value.push(c),
                    Some(c) => return Err(err(self.pos(), format!("invalid escape '\\{c}'"))),
                    None => return Err(err(pos, "unterminated string literal")),
                },
                Some(c) => value.push(c),
            }
        }
    }

    fn number(&mut self, pos: Pos) -> Result<Tok, SparqlError> {
        let mut s = String::new();
        if let Some(c @ ('-' | '+')) = self.peek() {
            s.push(c);
            self.bump();
        }
        let int = self.take_while(|c| c.is_ascii_digit());
        if int.is_empty() {
            return Err(err(pos, format!("unexpected character '{s}'")));
        }
        s.push_str(&int);
        // a '.' is a decimal point only when a digit follows
        let offset = self.peek_offset();
        if self.src[offset..].starts_with('.')
            && self.src[offset + 1..].starts_with(|c: char| c.is_ascii_digit())
        {
            self.bump();
            s.push('.');
            s.push_str(&self.take_while(|c| c.is_ascii_digit()));
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            let offset = self.peek_offset();
            let tail = &self.src[offset + 1..];
            let digits_follow = tail.starts_with(|c: char| c.is_ascii_digit())
                || ((tail.starts_with('-') || tail.starts_with('+'))
                    && tail[1..].starts_with(|c: char| c.is_ascii_digit()));
            if digits_follow {
                self.bump();
                s.push(e);
                if let Some(sign @ ('-' | '+')) = self.peek() {
                    self.bump();
                    s.push(sign);
                }
                s.push_str(&self.take_while(|c| c.is_ascii_digit()));
            }
        }
        Ok(Tok::Number(s))
    }

    fn word_or_pname(&mut self) -> Tok {
        let prefix = self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-');
        if self.peek() != Some(':') {
            return Tok::Word(prefix);
        }
        self.bump();
        let start = self.peek_offset();
        let rest = &self.src[start..];
        let mut len = rest
            .char_indices()
            .find(|&(_, c)| !is_pn_char(c))
            .map_or(rest.len(), |(i, _)| i);
        // a local name never ends with '.'; that dot terminates the triple
        while len > 0 && rest[..len].ends_with('.') {
            len -= 1;
        }
        let local = rest[..len].to_string();
        for _ in local.chars() {
            self.bump();
        }
        Tok::PName(prefix, local)
    }
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    idx: usize,
    prefixes: HashMap<String, String>,
}

pub fn parse_query(text: &str) -> Result<QueryAst, SparqlError> {
    let toks = Lexer::new(text).tokenize()?;
    let mut parser = Parser {
        toks,
        idx: 0,
        prefixes: HashMap::new(),
    };
    parser.query()
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.idx].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn unexpected<T>(&self, expected: &str) -> Result<T, SparqlError> {
        Err(err(
            self.pos(),
            format!("expected {expected}, found {}", self.peek().describe()),
        ))
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SparqlError> {
        if self.is_keyword(kw) {
            self.next();
            Ok(())
        } else {
            self.unexpected(kw)
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SparqlError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            self.unexpected(&tok.describe())
        }
    }

    fn query(&mut self) -> Result<QueryAst, SparqlError> {
        while self.is_keyword("PREFIX") {
            self.next();
            let (tok, pos) = self.next();
            let Tok::PName(prefix, local) = tok else {
                return Err(err(pos, format!("expected a prefix name, found {}", tok.describe())));
            };
            if !local.is_empty() {
                return Err(err(pos, "prefix declaration must end with ':'"));
            }
            let (tok, pos) = self.next();
            let Tok::IriRef(iri) = tok else {
                return Err(err(pos, format!("expected <iri>, found {}", tok.describe())));
            };
            self.prefixes.insert(prefix, iri);
        }
        self.expect_keyword("SELECT")?;
        let distinct = if self.is_keyword("DISTINCT") {
            self.next();
            true
        } else {
            false
        };
        let mut select_vars = Vec::new();
        let mut select_positions = Vec::new();
        let mut star = false;
        if *self.peek() == Tok::Star {
            self.next();
            star = true;
        } else {
            while let Tok::Var(v) = self.peek().clone() {
                select_positions.push(self.pos());
                self.next();
                if !select_vars.contains(&v) {
                    select_vars.push(v);
                }
            }
            if select_vars.is_empty() {
                return self.unexpected("a variable or '*' after SELECT");
            }
        }
        if self.is_keyword("WHERE") {
            self.next();
        }
        self.expect(Tok::LBrace)?;
        let mut ast = QueryAst {
            select_vars,
            distinct,
            patterns: Vec::new(),
            values_blocks: Vec::new(),
            filters: Vec::new(),
            order_by: None,
            limit: None,
        };
        let mut var_positions: HashMap<String, Pos> = HashMap::new();
        self.group(&mut ast, &mut var_positions)?;
        self.expect(Tok::RBrace)?;

        if self.is_keyword("ORDER") {
            self.next();
            self.expect_keyword("BY")?;
            let pos = self.pos();
            let order = self.order_condition()?;
            var_positions.entry(order.operand.variable.clone()).or_insert(pos);
            ast.order_by = Some(order);
        }
        if self.is_keyword("LIMIT") {
            self.next();
            let (tok, pos) = self.next();
            let Tok::Number(n) = tok else {
                return Err(err(pos, format!("expected an integer after LIMIT, found {}", tok.describe())));
            };
            let limit: usize = n
                .parse()
                .map_err(|_| err(pos, format!("invalid LIMIT value {n}")))?;
            if limit == 0 {
                return Err(err(pos, "LIMIT must be positive"));
            }
            ast.limit = Some(limit);
        }
        if *self.peek() != Tok::Eof {
            return self.unexpected("end of query");
        }
        if star {
            ast.select_vars = ast.bound_variables();
            if ast.select_vars.is_empty() {
                return Err(err(Pos { line: 1, col: 1 }, "SELECT * requires at least one variable in WHERE"));
            }
        }
        if let Err(message) = ast.validate() {
            // point at the first mention of the offending variable, if any
            let pos = ast
                .select_vars
                .iter()
                .zip(&select_positions)
                .find(|(v, _)| message.contains(&format!("?{v} ")))
                .map(|(_, p)| *p)
                .or_else(|| {
                    var_positions
                        .iter()
                        .filter(|(v, _)| message.contains(&format!("?{v} ")))
                        .map(|(_, p)| *p)
                        .min_by_key(|p| (p.line, p.col))
                })
                .unwrap_or(Pos { line: 1, col: 1 });
            return Err(err(pos, message));
        }
        Ok(ast)
    }

    fn group(
        &mut self,
        ast: &mut QueryAst,
        var_positions: &mut HashMap<String, Pos>,
    ) -> Result<(), SparqlError> {
        loop {
            match self.peek().clone() {
                Tok::RBrace | Tok::Eof => return Ok(()),
                Tok::Dot => {
                    self.next();
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("VALUES") => {
                    self.next();
                    let (tok, pos) = self.next();
                    let Tok::Var(variable) = tok else {
                        return Err(err(pos, format!("expected a variable after VALUES, found {}", tok.describe())));
                    };
                    var_positions.entry(variable.clone()).or_insert(pos);
                    self.expect(Tok::LBrace)?;
                    let mut values = Vec::new();
                    while *self.peek() != Tok::RBrace {
                        if *self.peek() == Tok::Eof {
                            return self.unexpected("'}'");
                        }
                        values.push(self.ground_term()?);
                    }
                    self.next();
                    ast.values_blocks.push(ValuesBlock { variable, values });
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("FILTER") => {
                    self.next();
                    self.expect(Tok::LParen)?;
                    loop {
                        let pos = self.pos();
                        let lhs = self.operand()?;
                        var_positions.entry(lhs.variable.clone()).or_insert(pos);
                        let (tok, pos) = self.next();
                        let Tok::Op(op) = tok else {
                            return Err(err(pos, format!("expected a comparison operator, found {}", tok.describe())));
                        };
                        let rhs = self.ground_term()?;
                        ast.filters.push(FilterExpr { lhs, op, rhs });
                        if *self.peek() == Tok::AndAnd {
                            self.next();
                            continue;
                        }
                        break;
                    }
                    self.expect(Tok::RParen)?;
                }
                _ => self.triples(ast, var_positions)?,
            }
        }
    }

    fn triples(
        &mut self,
        ast: &mut QueryAst,
        var_positions: &mut HashMap<String, Pos>,
    ) -> Result<(), SparqlError> {
        let subject = self.pattern_term(var_positions, "subject")?;
        loop {
            let pos = self.pos();
            let predicate = self.pattern_term(var_positions, "predicate")?;
            if let PatternTerm::Term(t) = &predicate {
                if t.is_literal() {
                    return Err(err(pos, "predicate must be an IRI or variable"));
                }
            }
            loop {
                let object = self.pattern_term(var_positions, "object")?;
                ast.patterns.push(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                });
                if *self.peek() == Tok::Comma {
                    self.next();
                    continue;
                }
                break;
            }
            if *self.peek() == Tok::Semicolon {
                self.next();
                if matches!(self.peek(), Tok::Dot | Tok::RBrace) {
                    return Ok(());
                }
                continue;
            }
            return Ok(());
        }
    }

    fn pattern_term(
        &mut self,
        var_positions: &mut HashMap<String, Pos>,
        what: &str,
    ) -> Result<PatternTerm, SparqlError> {
        if let Tok::Var(v) = self.peek().clone() {
            var_positions.entry(v.clone()).or_insert(self.pos());
            self.next();
            return Ok(PatternTerm::Var(v));
        }
        match self.peek() {
            Tok::IriRef(_) | Tok::PName(..) | Tok::Str(_) | Tok::Number(_) => {
                Ok(PatternTerm::Term(self.ground_term()?))
            }
            _ => self.unexpected(&format!("a {what} (variable, IRI or literal)")),
        }
    }

    fn operand(&mut self) -> Result<Operand, SparqlError> {
        let (tok, pos) = self.next();
        match tok {
            Tok::Var(variable) => Ok(Operand {
                variable,
                cast: None,
            }),
            Tok::PName(prefix, local) => {
                let name = format!("{prefix}:{local}");
                let cast = Cast::from_function(&name)
                    .ok_or_else(|| err(pos, format!("unsupported function {name}")))?;
                self.expect(Tok::LParen)?;
                let (tok, pos) = self.next();
                let Tok::Var(variable) = tok else {
                    return Err(err(pos, format!("expected a variable inside {name}(...), found {}", tok.describe())));
                };
                self.expect(Tok::RParen)?;
                Ok(Operand {
                    variable,
                    cast: Some(cast),
                })
            }
            other => Err(err(
                pos,
                format!("expected a variable or cast expression, found {}", other.describe()),
            )),
        }
    }

    fn order_condition(&mut self) -> Result<OrderBy, SparqlError> {
        let direction = if self.is_keyword("ASC") {
            Some(Direction::Asc)
        } else if self.is_keyword("DESC") {
            Some(Direction::Desc)
        } else {
            None
        };
        match direction {
            Some(direction) => {
                self.next();
                self.expect(Tok::LParen)?;
                let operand = self.operand()?;
                self.expect(Tok::RParen)?;
                Ok(OrderBy { operand, direction })
            }
            None => Ok(OrderBy {
                operand: self.operand()?,
                direction: Direction::Asc,
            }),
        }
    }

    fn ground_term(&mut self) -> Result<Term, SparqlError> {
        let (tok, pos) = self.next();
        match tok {
            Tok::IriRef(iri) => {
                let local = self.strip_iri(&iri);
                Term::iri(local).map_err(|e| err(pos, e.to_string()))
            }
            Tok::PName(prefix, local) => {
                let value = self.expand_pname(&prefix, &local);
                Term::iri(value).map_err(|e| err(pos, e.to_string()))
            }
            Tok::Str(value) => match self.peek().clone() {
                Tok::Caret2 => {
                    self.next();
                    let (tok, pos) = self.next();
                    let datatype = match tok {
                        Tok::PName(p, l) => format!("{p}:{l}"),
                        Tok::IriRef(i) => normalize_datatype(&i),
                        other => {
                            return Err(err(pos, format!("expected a datatype, found {}", other.describe())))
                        }
                    };
                    Ok(Term::Literal {
                        value,
                        datatype: Some(datatype),
                    })
                }
                Tok::LangTag(_) => {
                    self.next();
                    Ok(Term::literal(value))
                }
                _ => Ok(Term::literal(value)),
            },
            Tok::Number(n) => {
                let datatype = if n.contains(['e', 'E']) {
                    "xsd:double"
                } else if n.contains('.') {
                    "xsd:decimal"
                } else {
                    "xsd:integer"
                };
                Ok(Term::typed_literal(n, datatype))
            }
            other => Err(err(pos, format!("expected an IRI or literal, found {}", other.describe()))),
        }
    }

    fn expand_pname(&self, prefix: &str, local: &str) -> String {
        if prefix == "ns" || self.prefixes.contains_key(prefix) {
            local.to_string()
        } else {
            format!("{prefix}:{local}")
        }
    }

    fn strip_iri(&self, iri: &str) -> String {
        if let Some(local) = iri.strip_prefix(FREEBASE_NS) {
            return local.to_string();
        }
        for base in self.prefixes.values() {
            if let Some(local) = iri.strip_prefix(base.as_str()) {
                if !local.is_empty() {
                    return local.to_string();
                }
            }
        }
        iri.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(v: &str) -> Term {
        Term::iri(v).unwrap()
    }

    #[test]
    fn search_types_sketch() {
        let ast =
            parse_query("SELECT DISTINCT ?x WHERE { ?x ns:type.object.type ns:education.university }")
                .unwrap();
        assert!(ast.distinct);
        assert_eq!(ast.select_vars, ["x"]);
        assert_eq!(ast.patterns.len(), 1);
        assert_eq!(
            ast.patterns[0].object,
            PatternTerm::Term(iri("education.university"))
        );
        assert_eq!(
            ast.patterns[0].predicate,
            PatternTerm::Term(iri("type.object.type"))
        );
    }

    #[test]
    fn college_case_study_query() {
        let q = "SELECT DISTINCT ?college WHERE { VALUES ?e {ns:m.018t67} . ?e ns:people.person.education ?edu . ?edu ns:education.education.institution ?college . ?college ns:organization.organization.date_founded ?d . } ORDER BY DESC(xsd:date(?d)) LIMIT 1";
        let ast = parse_query(q).unwrap();
        assert_eq!(ast.values_blocks.len(), 1);
        assert_eq!(ast.values_blocks[0].values, [iri("m.018t67")]);
        assert_eq!(ast.patterns.len(), 3);
        assert_eq!(
            ast.order_by,
            Some(OrderBy {
                operand: Operand {
                    variable: "d".into(),
                    cast: Some(Cast::Date)
                },
                direction: Direction::Desc
            })
        );
        assert_eq!(ast.limit, Some(1));
    }

    #[test]
    fn unbalanced_brace_names_end_of_input() {
        let e = parse_query("SELECT ?x WHERE {").unwrap_err();
        let msg = e.to_string();
        assert!(msg.starts_with("SPARQL parse error at line 1, col 18:"), "{msg}");
        assert!(msg.contains("end of input"), "{msg}");
    }

    #[test]
    fn error_positions_are_one_based() {
        let e = parse_query("SELECT ?x\nWHERE { ?x ns:p }").unwrap_err();
        assert!(
            e.to_string().starts_with("SPARQL parse error at line 2, col 17:"),
            "{e}"
        );
    }

    #[test]
    fn unbound_select_variable_is_rejected() {
        let e = parse_query("SELECT ?y WHERE { ?x ns:p ?z }").unwrap_err();
        assert_eq!(
            e.to_string(),
            "SPARQL parse error at line 1, col 8: variable ?y in SELECT is not bound in WHERE"
        );
    }

    #[test]
    fn prefixes_literals_and_shorthand() {
        let q = r#"PREFIX ns: <http://rdf.freebase.com/ns/>
            SELECT ?a ?n WHERE {
              ?a ns:type.object.name "Brenda Song"@en ;
                 ns:people.person.height 1.52 , 1.6 .
              ?a <http://rdf.freebase.com/ns/film.actor.film> ?n .
              FILTER (?n != ns:m.1 && xsd:integer(?n) >= "3"^^xsd:integer)
            }"#;
        let ast = parse_query(q).unwrap();
        assert_eq!(ast.patterns.len(), 4);
        assert_eq!(ast.patterns[0].object, PatternTerm::Term(Term::literal("Brenda Song")));
        assert_eq!(
            ast.patterns[1].object,
            PatternTerm::Term(Term::typed_literal("1.52", "xsd:decimal"))
        );
        assert_eq!(ast.patterns[3].predicate, PatternTerm::Term(iri("film.actor.film")));
        assert_eq!(ast.filters.len(), 2);
        assert_eq!(ast.filters[1].lhs.cast, Some(Cast::Integer));
        assert_eq!(ast.filters[1].op, CompareOp::Ge);
    }

    #[test]
    fn trailing_dot_is_not_part_of_local_name() {
        let ast = parse_query("SELECT ?x WHERE { ?x ns:a.b ns:m.1.}").unwrap();
        assert_eq!(ast.patterns[0].object, PatternTerm::Term(iri("m.1")));
    }

    #[test]
    fn limit_must_be_positive() {
        assert!(parse_query("SELECT ?x WHERE { ?x ns:p ?y } LIMIT 0").is_err());
    }

    #[test]
    fn values_only_sketch() {
        let ast = parse_query("SELECT ?e WHERE { VALUES ?e {ns:m.07g8r3} }").unwrap();
        assert!(ast.patterns.is_empty());
        assert_eq!(ast.bound_variables(), ["e"]);
    }

    #[test]
    fn display_round_trips() {
        let q = "SELECT DISTINCT ?c WHERE { VALUES ?e {ns:m.1 ns:m.2} . ?e ns:p.q ?c . ?c ns:r.s \"x \\\"y\\\"\" . FILTER(xsd:date(?c) < \"1900\"^^xsd:date) } ORDER BY ASC(?c) LIMIT 4";
        let ast = parse_query(q).unwrap();
        let again = parse_query(&ast.to_string()).unwrap();
        assert_eq!(ast, again);
    }
}
