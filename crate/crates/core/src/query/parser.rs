//! Parser for the SELECT-FROM-WHERE-GROUP BY subset the planner understands.
//!
//! Grammar (case-insensitive keywords):
//!
//! ```text
//! query      := SELECT items FROM tables [WHERE conj (AND conj)*] [GROUP BY col (, col)*] [;]
//! items      := item (, item)*
//! item       := * | col [AS ident] | agg ( * | col ) [AS ident]
//! tables     := ident [[AS] ident] (, ident [[AS] ident])*
//! conj       := operand op operand
//! operand    := col | number | 'string'
//! op         := = | != | <> | < | <= | > | >= | <=>
//! ```
//!
//! Columns must be qualified when more than one table is listed.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use super::{
    AggFunc, Aggregate, ColumnRef, CmpOp, FilterPredicate, JoinPredicate, Literal, LogicalQuery,
    QueryError, QueryId, SelectItem,
};

/// Capability keywords recognized without any configuration.
pub const DEFAULT_CAPABILITY_TOKENS: &[&str] = &["<=>"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Semi,
    Op(CmpOp),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b',' => {
                out.push(Spanned { tok: Tok::Comma, pos: start });
                i += 1;
            }
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                out.push(Spanned { tok: Tok::Dot, pos: start });
                i += 1;
            }
            b'(' => {
                out.push(Spanned { tok: Tok::LParen, pos: start });
                i += 1;
            }
            b')' => {
                out.push(Spanned { tok: Tok::RParen, pos: start });
                i += 1;
            }
            b'*' => {
                out.push(Spanned { tok: Tok::Star, pos: start });
                i += 1;
            }
            b';' => {
                out.push(Spanned { tok: Tok::Semi, pos: start });
                i += 1;
            }
            b'=' => {
                out.push(Spanned { tok: Tok::Op(CmpOp::Eq), pos: start });
                i += 1;
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                out.push(Spanned { tok: Tok::Op(CmpOp::Ne), pos: start });
                i += 2;
            }
            b'<' => {
                let (op, len) = match (bytes.get(i + 1), bytes.get(i + 2)) {
                    (Some(b'='), Some(b'>')) => (CmpOp::VectorDistance, 3),
                    (Some(b'='), _) => (CmpOp::Le, 2),
                    (Some(b'>'), _) => (CmpOp::Ne, 2),
                    _ => (CmpOp::Lt, 1),
                };
                out.push(Spanned { tok: Tok::Op(op), pos: start });
                i += len;
            }
            b'>' => {
                let (op, len) = if bytes.get(i + 1) == Some(&b'=') {
                    (CmpOp::Ge, 2)
                } else {
                    (CmpOp::Gt, 1)
                };
                out.push(Spanned { tok: Tok::Op(op), pos: start });
                i += len;
            }
            b'\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(QueryError::Parse {
                                pos: start,
                                message: "unterminated string literal".into(),
                            })
                        }
                        Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some(b'\'') => {
                            i += 1;
                            break;
                        }
                        Some(_) => {
                            let ch = text[i..].chars().next().unwrap();
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push(Spanned { tok: Tok::Str(s), pos: start });
            }
            b'0'..=b'9' | b'.' | b'-' => {
                let mut j = i + 1;
                while j < bytes.len()
                    && (bytes[j].is_ascii_digit()
                        || bytes[j] == b'.'
                        || bytes[j] == b'e'
                        || bytes[j] == b'E'
                        || ((bytes[j] == b'-' || bytes[j] == b'+')
                            && matches!(bytes[j - 1], b'e' | b'E')))
                {
                    j += 1;
                }
                let lit = &text[i..j];
                let v: f64 = lit.parse().map_err(|_| QueryError::Parse {
                    pos: start,
                    message: format!("invalid number `{lit}`"),
                })?;
                out.push(Spanned { tok: Tok::Number(v), pos: start });
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push(Spanned { tok: Tok::Ident(text[i..j].to_string()), pos: start });
                i = j;
            }
            _ => {
                return Err(QueryError::Parse {
                    pos: start,
                    message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(out)
}

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "AND", "GROUP", "BY", "AS", "OR", "NOT", "ORDER", "HAVING",
    "LIMIT", "JOIN", "LEFT", "RIGHT", "OUTER", "INNER", "ON", "UNION", "DISTINCT",
];

fn is_kw(tok: &Tok, kw: &str) -> bool {
    matches!(tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
}

fn is_reserved(s: &str) -> bool {
    RESERVED.iter().any(|k| s.eq_ignore_ascii_case(k))
}

/// Raw column reference before alias resolution.
#[derive(Debug, Clone)]
struct RawCol {
    qualifier: Option<String>,
    name: String,
    pos: usize,
}

enum Operand {
    Col(RawCol),
    Lit(Literal),
}

struct Parser<'a> {
    toks: &'a [Spanned],
    i: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|s| &s.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |s| s.pos)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Parse { pos: self.pos(), message: message.into() })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|s| s.tok.clone());
        self.i += 1;
        t
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), QueryError> {
        match self.peek() {
            Some(t) if is_kw(t, kw) => {
                self.i += 1;
                Ok(())
            }
            _ => self.err(format!("expected {kw}")),
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_some_and(|t| is_kw(t, kw)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.to_ascii_lowercase();
                self.i += 1;
                Ok(s)
            }
            Some(Tok::Ident(s)) => {
                let msg = format!("unsupported syntax `{}`", s.to_ascii_uppercase());
                self.err(msg)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn column(&mut self) -> Result<RawCol, QueryError> {
        let pos = self.pos();
        let first = self.ident()?;
        if self.eat(&Tok::Dot) {
            let name = self.ident()?;
            Ok(RawCol { qualifier: Some(first), name, pos })
        } else {
            Ok(RawCol { qualifier: None, name: first, pos })
        }
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        match self.peek() {
            Some(Tok::Number(v)) => {
                let v = *v;
                self.i += 1;
                Ok(Operand::Lit(Literal::Number(v)))
            }
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(Operand::Lit(Literal::Str(s)))
            }
            Some(Tok::LParen) => self.err("unsupported syntax: subquery or parenthesized expression"),
            _ => Ok(Operand::Col(self.column()?)),
        }
    }
}

enum RawItem {
    Star,
    Col(RawCol),
    Agg(AggFunc, Option<RawCol>),
}

fn agg_func(name: &str) -> Option<AggFunc> {
    match name.to_ascii_uppercase().as_str() {
        "COUNT" => Some(AggFunc::Count),
        "SUM" => Some(AggFunc::Sum),
        "AVG" => Some(AggFunc::Avg),
        "MIN" => Some(AggFunc::Min),
        "MAX" => Some(AggFunc::Max),
        _ => None,
    }
}

/// Parses `text` into a [`LogicalQuery`] with `arrival_rate` 0.
pub fn parse_query(text: &str) -> Result<LogicalQuery, QueryError> {
    let toks = lex(text)?;
    let mut p = Parser { toks: &toks, i: 0, end: text.len() };

    p.expect_kw("SELECT")?;
    if p.peek().is_some_and(|t| is_kw(t, "DISTINCT")) {
        return p.err("unsupported syntax `DISTINCT`");
    }
    let mut items = Vec::new();
    loop {
        if p.eat(&Tok::Star) {
            items.push(RawItem::Star);
        } else {
            let is_call = matches!(p.peek(), Some(Tok::Ident(s)) if agg_func(s).is_some())
                && p.toks.get(p.i + 1).map(|s| &s.tok) == Some(&Tok::LParen);
            if is_call {
                let Some(Tok::Ident(name)) = p.bump() else { unreachable!() };
                let func = agg_func(&name).unwrap();
                p.i += 1; // (
                let arg = if p.eat(&Tok::Star) {
                    if func != AggFunc::Count {
                        return p.err("only COUNT accepts *");
                    }
                    None
                } else {
                    Some(p.column()?)
                };
                if !p.eat(&Tok::RParen) {
                    return p.err("expected )");
                }
                items.push(RawItem::Agg(func, arg));
            } else {
                items.push(RawItem::Col(p.column()?));
            }
            if p.eat_kw("AS") {
                p.ident()?;
            }
        }
        if !p.eat(&Tok::Comma) {
            break;
        }
    }

    p.expect_kw("FROM")?;
    let mut tables: Vec<String> = Vec::new();
    let mut aliases: BTreeMap<String, String> = BTreeMap::new();
    loop {
        let pos = p.pos();
        let table = p.ident()?;
        if tables.contains(&table) {
            return Err(QueryError::Parse {
                pos,
                message: format!("table `{table}` listed twice (self-joins unsupported)"),
            });
        }
        let alias = if p.eat_kw("AS") {
            Some(p.ident()?)
        } else if matches!(p.peek(), Some(Tok::Ident(s)) if !is_reserved(s)) {
            Some(p.ident()?)
        } else {
            None
        };
        if let Some(a) = alias {
            if aliases.insert(a.clone(), table.clone()).is_some() {
                return Err(QueryError::Parse { pos, message: format!("duplicate alias `{a}`") });
            }
        }
        tables.push(table);
        if !p.eat(&Tok::Comma) {
            break;
        }
    }

    let resolve = |c: &RawCol| -> Result<ColumnRef, QueryError> {
        let table = match &c.qualifier {
            Some(q) => {
                if let Some(t) = aliases.get(q) {
                    t.clone()
                } else if tables.contains(q) {
                    q.clone()
                } else {
                    return Err(QueryError::Parse {
                        pos: c.pos,
                        message: format!("unknown table or alias `{q}`"),
                    });
                }
            }
            None if tables.len() == 1 => tables[0].clone(),
            None => {
                return Err(QueryError::Parse {
                    pos: c.pos,
                    message: format!("column `{}` must be qualified", c.name),
                })
            }
        };
        Ok(ColumnRef { table, column: c.name.clone() })
    };

    let mut filters = Vec::new();
    let mut joins = Vec::new();
    if p.eat_kw("WHERE") {
        loop {
            let pos = p.pos();
            let lhs = p.operand()?;
            let op = match p.bump() {
                Some(Tok::Op(op)) => op,
                _ => {
                    p.i -= 1;
                    return p.err("expected comparison operator");
                }
            };
            let rhs = p.operand()?;
            match (lhs, rhs) {
                (Operand::Col(c), Operand::Lit(v)) => {
                    filters.push(FilterPredicate { column: resolve(&c)?, op, literal: v })
                }
                (Operand::Lit(v), Operand::Col(c)) => {
                    filters.push(FilterPredicate { column: resolve(&c)?, op: op.flipped(), literal: v })
                }
                (Operand::Col(l), Operand::Col(r)) => {
                    let (l, r) = (resolve(&l)?, resolve(&r)?);
                    if op != CmpOp::Eq {
                        return Err(QueryError::Parse {
                            pos,
                            message: "only equijoins are supported between columns".into(),
                        });
                    }
                    if l.table == r.table {
                        return Err(QueryError::Parse {
                            pos,
                            message: "join predicate must reference two distinct tables".into(),
                        });
                    }
                    joins.push(JoinPredicate { left: l, right: r });
                }
                (Operand::Lit(_), Operand::Lit(_)) => {
                    return Err(QueryError::Parse {
                        pos,
                        message: "predicate compares two literals".into(),
                    })
                }
            }
            if p.eat_kw("AND") {
                continue;
            }
            if p.peek().is_some_and(|t| is_kw(t, "OR")) {
                return p.err("unsupported syntax `OR`");
            }
            break;
        }
    }

    let mut group_by = Vec::new();
    if p.eat_kw("GROUP") {
        p.expect_kw("BY")?;
        loop {
            let c = p.column()?;
            group_by.push(resolve(&c)?);
            if !p.eat(&Tok::Comma) {
                break;
            }
        }
    }
    p.eat(&Tok::Semi);
    if p.peek().is_some() {
        return match p.peek() {
            Some(Tok::Ident(s)) => {
                let msg = format!("unsupported syntax `{}`", s.to_ascii_uppercase());
                p.err(msg)
            }
            _ => p.err("unexpected trailing input"),
        };
    }

    let mut projection = Vec::new();
    let mut aggregates = Vec::new();
    for item in &items {
        match item {
            RawItem::Star => projection.push(SelectItem::Star),
            RawItem::Col(c) => projection.push(SelectItem::Column(resolve(c)?)),
            RawItem::Agg(f, arg) => {
                let column = arg.as_ref().map(&resolve).transpose()?;
                let agg = Aggregate { func: *f, column };
                aggregates.push(agg.clone());
                projection.push(SelectItem::Aggregate(agg));
            }
        }
    }

    let normalized = normalize_tokens(&toks);
    let mut q = LogicalQuery {
        id: query_id_for_normalized(&normalized),
        sql: normalized,
        tables,
        columns: BTreeMap::new(),
        projection,
        filter_predicates: filters,
        join_predicates: joins,
        aggregates,
        group_by,
        capability_tokens: detect_capabilities(text, DEFAULT_CAPABILITY_TOKENS),
        arrival_rate: 0.0,
    };
    q.columns = q.collect_columns();
    Ok(q)
}

/// Keywords present in `text` (outside of string literals).
pub fn detect_capabilities<S: AsRef<str>>(text: &str, keywords: &[S]) -> Vec<String> {
    let stripped = strip_string_literals(text).to_ascii_lowercase();
    keywords
        .iter()
        .map(AsRef::as_ref)
        .filter(|k| {
            let k = k.to_ascii_lowercase();
            if k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                stripped
                    .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .any(|w| w == k)
            } else {
                stripped.contains(&k)
            }
        })
        .map(str::to_string)
        .collect()
}

fn strip_string_literals(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_str = false;
    for ch in text.chars() {
        if ch == '\'' {
            in_str = !in_str;
            out.push(' ');
        } else if !in_str {
            out.push(ch);
        }
    }
    out
}

fn normalize_tokens(toks: &[Spanned]) -> String {
    let mut out = String::new();
    for (i, t) in toks.iter().enumerate() {
        if matches!(t.tok, Tok::Semi) {
            continue;
        }
        let glue = matches!(t.tok, Tok::Dot | Tok::Comma | Tok::RParen)
            || toks.get(i.wrapping_sub(1)).is_some_and(|p| matches!(p.tok, Tok::Dot | Tok::LParen))
            || (matches!(t.tok, Tok::LParen) && i > 0 && matches!(toks[i - 1].tok, Tok::Ident(_)));
        if !out.is_empty() && !glue {
            out.push(' ');
        }
        match &t.tok {
            Tok::Ident(s) if is_reserved(s) || agg_func(s).is_some() => {
                out.push_str(&s.to_ascii_uppercase())
            }
            Tok::Ident(s) => out.push_str(&s.to_ascii_lowercase()),
            Tok::Number(v) => out.push_str(&v.to_string()),
            Tok::Str(s) => {
                out.push('\'');
                out.push_str(&s.replace('\'', "''"));
                out.push('\'');
            }
            Tok::Comma => out.push(','),
            Tok::Dot => out.push('.'),
            Tok::LParen => out.push('('),
            Tok::RParen => out.push(')'),
            Tok::Star => out.push('*'),
            Tok::Semi => {}
            Tok::Op(op) => out.push_str(op.symbol()),
        }
    }
    out
}

/// Whitespace/keyword-case normalization of raw SQL. Falls back to collapsing
/// whitespace when the text does not lex.
pub fn normalize_sql(text: &str) -> String {
    match lex(text) {
        Ok(toks) => normalize_tokens(&toks),
        Err(_) => text.split_whitespace().collect::<Vec<_>>().join(" "),
    }
}

fn query_id_for_normalized(normalized: &str) -> QueryId {
    let digest = Sha256::digest(normalized.as_bytes());
    let mut s = String::with_capacity(17);
    s.push('q');
    for b in &digest[..8] {
        s.push_str(&format!("{b:02x}"));
    }
    QueryId(s)
}

/// Content hash of the normalized query text.
pub fn query_id(text: &str) -> QueryId {
    query_id_for_normalized(&normalize_sql(text))
}

struct Render<'a>(&'a LogicalQuery);

impl fmt::Display for Render<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.0;
        let qualify = q.tables.len() > 1;
        let col = |c: &ColumnRef| {
            if qualify {
                format!("{}.{}", c.table, c.column)
            } else {
                c.column.clone()
            }
        };
        write!(f, "SELECT ")?;
        for (i, item) in q.projection.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match item {
                SelectItem::Star => write!(f, "*")?,
                SelectItem::Column(c) => write!(f, "{}", col(c))?,
                SelectItem::Aggregate(a) => match &a.column {
                    Some(c) => write!(f, "{}({})", a.func.name(), col(c))?,
                    None => write!(f, "{}(*)", a.func.name())?,
                },
            }
        }
        write!(f, " FROM {}", q.tables.join(", "))?;
        let mut conj: Vec<String> = q
            .join_predicates
            .iter()
            .map(|j| format!("{} = {}", col(&j.left), col(&j.right)))
            .collect();
        conj.extend(q.filter_predicates.iter().map(|p| {
            format!("{} {} {}", col(&p.column), p.op.symbol(), p.literal)
        }));
        if !conj.is_empty() {
            write!(f, " WHERE {}", conj.join(" AND "))?;
        }
        if !q.group_by.is_empty() {
            let cols: Vec<String> = q.group_by.iter().map(col).collect();
            write!(f, " GROUP BY {}", cols.join(", "))?;
        }
        Ok(())
    }
}

/// Renders the IR back into SQL accepted by [`parse_query`].
pub fn render_query(q: &LogicalQuery) -> String {
    Render(q).to_string()
}
