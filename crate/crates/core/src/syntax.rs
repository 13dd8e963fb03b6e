//! Formula and rule syntax: abstract syntax trees, the ASCII parser and
//! printer, and structural metrics.
//!
//! The modal language has three box families: `[T]` (truth now and in the
//! next time cluster), `[E]` (truth everywhere in the current cluster) and
//! `[A1]..[Ak]` (truth throughout one agent's block of the cluster).
//! Diamonds `<T> <E> <Ai>` are parser-level sugar for `~[.]~`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Propositional variable index. Formula text uses `p<n>`, rule text `x<n>`;
/// both name the same index space.
pub type VarId = u32;

/// A modal formula. Diamonds are not a variant: they are expanded to
/// negation-box-negation at parse time and re-sugared by the printer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Var(VarId),
    Top,
    Bottom,
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    BoxT(Box<Formula>),
    BoxE(Box<Formula>),
    /// Agent knowledge box; the agent index is 1-based and must stay within
    /// the ambient agent count.
    BoxAgent(u32, Box<Formula>),
}

impl Formula {
    pub fn var(i: VarId) -> Self {
        Formula::Var(i)
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn box_t(f: Formula) -> Self {
        Formula::BoxT(Box::new(f))
    }

    pub fn box_e(f: Formula) -> Self {
        Formula::BoxE(Box::new(f))
    }

    pub fn box_agent(agent: u32, f: Formula) -> Self {
        Formula::BoxAgent(agent, Box::new(f))
    }

    /// `<T> f` as its primitive form `~[T]~f`.
    pub fn diamond_t(f: Formula) -> Self {
        Formula::not(Formula::box_t(Formula::not(f)))
    }

    /// `<E> f` as its primitive form `~[E]~f`.
    pub fn diamond_e(f: Formula) -> Self {
        Formula::not(Formula::box_e(Formula::not(f)))
    }

    /// `<Ai> f` as its primitive form `~[Ai]~f`.
    pub fn diamond_agent(agent: u32, f: Formula) -> Self {
        Formula::not(Formula::box_agent(agent, Formula::not(f)))
    }

    /// Time degree: the number of nested `[T]` boxes along the deepest
    /// branch. `[E]` and agent boxes do not count; they stay within the
    /// current cluster.
    pub fn time_degree(&self) -> u32 {
        match self {
            Formula::Var(_) | Formula::Top | Formula::Bottom => 0,
            Formula::Not(a) => a.time_degree(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.time_degree().max(b.time_degree())
            }
            Formula::BoxE(a) | Formula::BoxAgent(_, a) => a.time_degree(),
            Formula::BoxT(a) => a.time_degree() + 1,
        }
    }

    /// Subformula closure including `self`, deduplicated, in post order
    /// (every subformula precedes any formula containing it).
    pub fn subformulas(&self) -> Vec<&Formula> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, seen: &mut BTreeSet<&'a Formula>, out: &mut Vec<&'a Formula>) {
            if seen.contains(f) {
                return;
            }
            match f {
                Formula::Var(_) | Formula::Top | Formula::Bottom => {}
                Formula::Not(a) | Formula::BoxT(a) | Formula::BoxE(a) | Formula::BoxAgent(_, a) => {
                    walk(a, seen, out)
                }
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, seen, out);
                    walk(b, seen, out);
                }
            }
            if seen.insert(f) {
                out.push(f);
            }
        }
        walk(self, &mut seen, &mut out);
        out
    }

    /// Variable indices occurring in the formula.
    pub fn variables(&self) -> BTreeSet<VarId> {
        let mut vars = BTreeSet::new();
        self.collect_variables(&mut vars);
        vars
    }

    fn collect_variables(&self, vars: &mut BTreeSet<VarId>) {
        match self {
            Formula::Var(i) => {
                vars.insert(*i);
            }
            Formula::Top | Formula::Bottom => {}
            Formula::Not(a) | Formula::BoxT(a) | Formula::BoxE(a) | Formula::BoxAgent(_, a) => {
                a.collect_variables(vars)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_variables(vars);
                b.collect_variables(vars);
            }
        }
    }

    /// Largest agent index mentioned, 0 if none.
    pub fn max_agent(&self) -> u32 {
        match self {
            Formula::Var(_) | Formula::Top | Formula::Bottom => 0,
            Formula::Not(a) | Formula::BoxT(a) | Formula::BoxE(a) => a.max_agent(),
            Formula::BoxAgent(l, a) => (*l).max(a.max_agent()),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.max_agent().max(b.max_agent())
            }
        }
    }

    /// Number of AST nodes.
    pub fn node_count(&self) -> usize {
        match self {
            Formula::Var(_) | Formula::Top | Formula::Bottom => 1,
            Formula::Not(a) | Formula::BoxT(a) | Formula::BoxE(a) | Formula::BoxAgent(_, a) => {
                1 + a.node_count()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }

    /// Canonical text with `p<n>` variables.
    pub fn print(&self) -> String {
        let mut s = String::new();
        print_prec(self, 1, VarStyle::P, &mut s);
        s
    }

    /// Canonical text with `x<n>` variables (rule contexts).
    pub fn print_rule_style(&self) -> String {
        let mut s = String::new();
        print_prec(self, 1, VarStyle::X, &mut s);
        s
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.print())
    }
}

/// An inference rule: nonempty premises over a shared variable space, one
/// conclusion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub premises: Vec<Formula>,
    pub conclusion: Formula,
}

impl Rule {
    pub fn new(premises: Vec<Formula>, conclusion: Formula) -> Self {
        assert!(!premises.is_empty(), "a rule needs at least one premise");
        Rule {
            premises,
            conclusion,
        }
    }

    /// Variables of premises and conclusion combined.
    pub fn variables(&self) -> BTreeSet<VarId> {
        let mut vars = self.conclusion.variables();
        for p in &self.premises {
            vars.append(&mut p.variables());
        }
        vars
    }

    pub fn max_agent(&self) -> u32 {
        self.premises
            .iter()
            .map(Formula::max_agent)
            .fold(self.conclusion.max_agent(), u32::max)
    }

    /// All premises folded into one conjunction (left associated).
    pub fn merged_premise(&self) -> Formula {
        let mut it = self.premises.iter().cloned();
        let first = it.next().expect("premises nonempty");
        it.fold(first, Formula::and)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let premises: Vec<String> = self.premises.iter().map(|p| p.print_rule_style()).collect();
        write!(
            f,
            "{} / {}",
            premises.join(" ; "),
            self.conclusion.print_rule_style()
        )
    }
}

/// A substitution of formulas for variables, total on its declared domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Substitution {
    map: std::collections::BTreeMap<VarId, Formula>,
}

/// Substitution application failed on a variable outside the domain.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("substitution has no mapping for variable {0}")]
pub struct UnmappedVariable(pub VarId);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, var: VarId, f: Formula) -> Self {
        self.map.insert(var, f);
        self
    }

    pub fn insert(&mut self, var: VarId, f: Formula) {
        self.map.insert(var, f);
    }

    pub fn get(&self, var: VarId) -> Option<&Formula> {
        self.map.get(&var)
    }

    /// Identity substitution on the given domain.
    pub fn identity(domain: impl IntoIterator<Item = VarId>) -> Self {
        let mut s = Self::new();
        for v in domain {
            s.insert(v, Formula::Var(v));
        }
        s
    }

    /// Simultaneous replacement of variables. Propositional variables are the
    /// only binders-free atoms, so the replacement is capture-free by
    /// construction.
    pub fn apply(&self, f: &Formula) -> Result<Formula, UnmappedVariable> {
        Ok(match f {
            Formula::Var(i) => self.map.get(i).ok_or(UnmappedVariable(*i))?.clone(),
            Formula::Top => Formula::Top,
            Formula::Bottom => Formula::Bottom,
            Formula::Not(a) => Formula::not(self.apply(a)?),
            Formula::And(a, b) => Formula::and(self.apply(a)?, self.apply(b)?),
            Formula::Or(a, b) => Formula::or(self.apply(a)?, self.apply(b)?),
            Formula::Implies(a, b) => Formula::implies(self.apply(a)?, self.apply(b)?),
            Formula::BoxT(a) => Formula::box_t(self.apply(a)?),
            Formula::BoxE(a) => Formula::box_e(self.apply(a)?),
            Formula::BoxAgent(l, a) => Formula::box_agent(*l, self.apply(a)?),
        })
    }

    pub fn apply_rule(&self, r: &Rule) -> Result<Rule, UnmappedVariable> {
        Ok(Rule {
            premises: r
                .premises
                .iter()
                .map(|p| self.apply(p))
                .collect::<Result<_, _>>()?,
            conclusion: self.apply(&r.conclusion)?,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarStyle {
    P,
    X,
}

// Precedence levels: -> is 1 (lowest, right associative), | is 2, & is 3,
// prefix operators and atoms are 4. A child is parenthesized when its level
// is below the context's minimum.
fn print_prec(f: &Formula, min: u8, style: VarStyle, out: &mut String) {
    let prec = match f {
        Formula::Implies(..) => 1,
        Formula::Or(..) => 2,
        Formula::And(..) => 3,
        _ => 4,
    };
    if prec < min {
        out.push('(');
        print_prec(f, 1, style, out);
        out.push(')');
        return;
    }
    match f {
        Formula::Var(i) => {
            out.push(if style == VarStyle::P { 'p' } else { 'x' });
            out.push_str(&i.to_string());
        }
        Formula::Top => out.push('T'),
        Formula::Bottom => out.push('F'),
        Formula::Not(a) => {
            // Re-sugar ~[.]~ back to a diamond.
            match a.as_ref() {
                Formula::BoxT(b) if matches!(b.as_ref(), Formula::Not(_)) => {
                    let Formula::Not(inner) = b.as_ref() else {
                        unreachable!()
                    };
                    out.push_str("<T> ");
                    print_prec(inner, 4, style, out);
                }
                Formula::BoxE(b) if matches!(b.as_ref(), Formula::Not(_)) => {
                    let Formula::Not(inner) = b.as_ref() else {
                        unreachable!()
                    };
                    out.push_str("<E> ");
                    print_prec(inner, 4, style, out);
                }
                Formula::BoxAgent(l, b) if matches!(b.as_ref(), Formula::Not(_)) => {
                    let Formula::Not(inner) = b.as_ref() else {
                        unreachable!()
                    };
                    out.push_str(&format!("<A{l}> "));
                    print_prec(inner, 4, style, out);
                }
                _ => {
                    out.push('~');
                    print_prec(a, 4, style, out);
                }
            }
        }
        Formula::BoxT(a) => {
            out.push_str("[T] ");
            print_prec(a, 4, style, out);
        }
        Formula::BoxE(a) => {
            out.push_str("[E] ");
            print_prec(a, 4, style, out);
        }
        Formula::BoxAgent(l, a) => {
            out.push_str(&format!("[A{l}] "));
            print_prec(a, 4, style, out);
        }
        Formula::And(a, b) => {
            print_prec(a, 3, style, out);
            out.push_str(" & ");
            print_prec(b, 4, style, out);
        }
        Formula::Or(a, b) => {
            print_prec(a, 2, style, out);
            out.push_str(" | ");
            print_prec(b, 3, style, out);
        }
        Formula::Implies(a, b) => {
            print_prec(a, 2, style, out);
            out.push_str(" -> ");
            print_prec(b, 1, style, out);
        }
    }
}

/// A parsed input: formula or rule, depending on the presence of `/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Formula(Formula),
    Rule(Rule),
}

/// Parse failure with the byte offset of the offending token.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError {
            offset,
            message: message.into(),
        }
    }
}

/// Parse a formula or a rule; `agents` is the ambient agent count and bounds
/// the admissible `[Ai]`/`<Ai>` indices.
pub fn parse(text: &str, agents: u32) -> Result<Parsed, ParseError> {
    let mut p = Parser::new(text, agents)?;
    let first = p.formula()?;
    let mut premises = vec![first];
    loop {
        match p.peek() {
            Some((_, Token::Semicolon)) => {
                p.advance();
                premises.push(p.formula()?);
            }
            Some((_, Token::Slash)) => {
                p.advance();
                let conclusion = p.formula()?;
                p.expect_end()?;
                return Ok(Parsed::Rule(Rule {
                    premises,
                    conclusion,
                }));
            }
            None if premises.len() == 1 => {
                return Ok(Parsed::Formula(premises.pop().unwrap()));
            }
            Some((off, t)) => {
                return Err(ParseError::new(off, format!("unexpected {}", t.describe())));
            }
            None => {
                return Err(ParseError::new(
                    text.len(),
                    "premise list without `/ conclusion`",
                ));
            }
        }
    }
}

/// Parse a single formula; rejects rule syntax.
pub fn parse_formula(text: &str, agents: u32) -> Result<Formula, ParseError> {
    match parse(text, agents)? {
        Parsed::Formula(f) => Ok(f),
        Parsed::Rule(_) => Err(ParseError::new(0, "expected a formula, found a rule")),
    }
}

/// Parse a rule; rejects bare formulas.
pub fn parse_rule(text: &str, agents: u32) -> Result<Rule, ParseError> {
    match parse(text, agents)? {
        Parsed::Rule(r) => Ok(r),
        Parsed::Formula(_) => Err(ParseError::new(
            0,
            "expected a rule (`premises / conclusion`), found a formula",
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Var(VarId),
    Top,
    Bottom,
    Not,
    And,
    Or,
    Implies,
    BoxT,
    BoxE,
    BoxAgent(u32),
    DiamondT,
    DiamondE,
    DiamondAgent(u32),
    LParen,
    RParen,
    Semicolon,
    Slash,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Var(i) => format!("variable p{i}"),
            Token::Top => "`T`".into(),
            Token::Bottom => "`F`".into(),
            Token::Not => "`~`".into(),
            Token::And => "`&`".into(),
            Token::Or => "`|`".into(),
            Token::Implies => "`->`".into(),
            Token::BoxT => "`[T]`".into(),
            Token::BoxE => "`[E]`".into(),
            Token::BoxAgent(l) => format!("`[A{l}]`"),
            Token::DiamondT => "`<T>`".into(),
            Token::DiamondE => "`<E>`".into(),
            Token::DiamondAgent(l) => format!("`<A{l}>`"),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Semicolon => "`;`".into(),
            Token::Slash => "`/`".into(),
        }
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn new(text: &str, agents: u32) -> Result<Self, ParseError> {
        let tokens = lex(text, agents)?;
        Ok(Parser {
            tokens,
            pos: 0,
            end: text.len(),
        })
    }

    fn peek(&self) -> Option<(usize, &Token)> {
        self.tokens.get(self.pos).map(|(o, t)| (*o, t))
    }

    fn advance(&mut self) {
        self.pos += 1;
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some((off, t)) => Err(ParseError::new(
                off,
                format!("unexpected {} after conclusion", t.describe()),
            )),
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if let Some((_, Token::Implies)) = self.peek() {
            self.advance();
            let rhs = self.implies()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while let Some((_, Token::Or)) = self.peek() {
            self.advance();
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while let Some((_, Token::And)) = self.peek() {
            self.advance();
            lhs = Formula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let Some((off, tok)) = self.peek() else {
            return Err(ParseError::new(self.end, "expected a formula"));
        };
        let tok = tok.clone();
        match tok {
            Token::Not => {
                self.advance();
                Ok(Formula::not(self.unary()?))
            }
            Token::BoxT => {
                self.advance();
                Ok(Formula::box_t(self.unary()?))
            }
            Token::BoxE => {
                self.advance();
                Ok(Formula::box_e(self.unary()?))
            }
            Token::BoxAgent(l) => {
                self.advance();
                Ok(Formula::box_agent(l, self.unary()?))
            }
            Token::DiamondT => {
                self.advance();
                Ok(Formula::diamond_t(self.unary()?))
            }
            Token::DiamondE => {
                self.advance();
                Ok(Formula::diamond_e(self.unary()?))
            }
            Token::DiamondAgent(l) => {
                self.advance();
                Ok(Formula::diamond_agent(l, self.unary()?))
            }
            Token::Var(i) => {
                self.advance();
                Ok(Formula::Var(i))
            }
            Token::Top => {
                self.advance();
                Ok(Formula::Top)
            }
            Token::Bottom => {
                self.advance();
                Ok(Formula::Bottom)
            }
            Token::LParen => {
                self.advance();
                let inner = self.formula()?;
                match self.peek() {
                    Some((_, Token::RParen)) => {
                        self.advance();
                        Ok(inner)
                    }
                    Some((off, t)) => Err(ParseError::new(
                        off,
                        format!("expected `)`, found {}", t.describe()),
                    )),
                    None => Err(ParseError::new(self.end, "unclosed `(`")),
                }
            }
            other => Err(ParseError::new(
                off,
                format!("expected a formula, found {}", other.describe()),
            )),
        }
    }
}

fn lex(text: &str, agents: u32) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '~' => {
                tokens.push((i, Token::Not));
                i += 1;
            }
            '&' => {
                tokens.push((i, Token::And));
                i += 1;
            }
            '|' => {
                tokens.push((i, Token::Or));
                i += 1;
            }
            '(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            ';' => {
                tokens.push((i, Token::Semicolon));
                i += 1;
            }
            '/' => {
                tokens.push((i, Token::Slash));
                i += 1;
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push((i, Token::Implies));
                    i += 2;
                } else {
                    return Err(ParseError::new(i, "expected `->`"));
                }
            }
            '[' | '<' => {
                let close = if c == '[' { b']' } else { b'>' };
                let start = i;
                let Some(rel) = bytes[i + 1..].iter().position(|&b| b == close) else {
                    return Err(ParseError::new(
                        start,
                        format!("unclosed `{c}` modal operator"),
                    ));
                };
                let inner = &text[i + 1..i + 1 + rel];
                let tok = match inner {
                    "T" => {
                        if c == '[' {
                            Token::BoxT
                        } else {
                            Token::DiamondT
                        }
                    }
                    "E" => {
                        if c == '[' {
                            Token::BoxE
                        } else {
                            Token::DiamondE
                        }
                    }
                    _ => {
                        let idx = inner
                            .strip_prefix('A')
                            .and_then(|d| d.parse::<u32>().ok())
                            .ok_or_else(|| {
                                ParseError::new(
                                    start,
                                    format!("unknown modal operator `{c}{inner}{}`", close as char),
                                )
                            })?;
                        if idx < 1 || idx > agents {
                            return Err(ParseError::new(
                                start,
                                format!("agent index {idx} outside 1..={agents}"),
                            ));
                        }
                        if c == '[' {
                            Token::BoxAgent(idx)
                        } else {
                            Token::DiamondAgent(idx)
                        }
                    }
                };
                tokens.push((start, tok));
                i += rel + 2;
            }
            'T' => {
                tokens.push((i, Token::Top));
                i += 1;
            }
            'F' => {
                tokens.push((i, Token::Bottom));
                i += 1;
            }
            'p' | 'x' => {
                let start = i;
                i += 1;
                let digits_start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == digits_start {
                    return Err(ParseError::new(
                        start,
                        format!("variable `{c}` needs a numeric index, e.g. `{c}1`"),
                    ));
                }
                let idx: VarId = text[digits_start..i]
                    .parse()
                    .map_err(|_| ParseError::new(start, "variable index out of range"))?;
                tokens.push((start, Token::Var(idx)));
            }
            _ => {
                return Err(ParseError::new(i, format!("unexpected character `{c}`")));
            }
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Formula {
        parse_formula(text, 2).unwrap()
    }

    #[test]
    fn parse_box_implication() {
        assert_eq!(
            p("[T] p1 -> p1"),
            Formula::implies(Formula::box_t(Formula::var(1)), Formula::var(1))
        );
    }

    #[test]
    fn parse_expands_diamonds() {
        assert_eq!(
            p("<E> p1"),
            Formula::not(Formula::box_e(Formula::not(Formula::var(1))))
        );
    }

    #[test]
    fn parse_rule_form() {
        let r = parse_rule("p1 / p2", 1).unwrap();
        assert_eq!(r.premises, vec![Formula::var(1)]);
        assert_eq!(r.conclusion, Formula::var(2));
    }

    #[test]
    fn parse_multi_premise_rule() {
        let r = parse_rule("x1 ; x2 / x1 & x2", 1).unwrap();
        assert_eq!(r.premises.len(), 2);
        assert_eq!(
            r.conclusion,
            Formula::and(Formula::var(1), Formula::var(2))
        );
    }

    #[test]
    fn print_canonical_forms() {
        assert_eq!(
            Formula::implies(Formula::box_t(Formula::var(1)), Formula::var(1)).print(),
            "[T] p1 -> p1"
        );
        assert_eq!(
            Formula::not(Formula::box_e(Formula::not(Formula::var(1)))).print(),
            "<E> p1"
        );
        assert_eq!(Formula::Bottom.print(), "F");
    }

    #[test]
    fn print_respects_precedence() {
        let f = p("(p1 | p2) & ~(p1 -> p2)");
        assert_eq!(f.print(), "(p1 | p2) & ~(p1 -> p2)");
        let g = p("p1 -> p2 -> p1");
        assert_eq!(g.print(), "p1 -> p2 -> p1");
        assert_eq!(g, p("p1 -> (p2 -> p1)"));
    }

    #[test]
    fn rule_prints_with_x_variables() {
        let r = parse_rule("p1 / p2", 1).unwrap();
        assert_eq!(r.to_string(), "x1 / x2");
        assert_eq!(parse_rule(&r.to_string(), 1).unwrap(), r);
    }

    #[test]
    fn agent_bound_checked() {
        let err = parse_formula("[A3] p1", 2).unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.message.contains("agent index 3"));
        assert!(parse_formula("[A2] p1", 2).is_ok());
        assert!(parse_formula("[A1] p1", 0).is_err());
    }

    #[test]
    fn syntax_error_carries_offset() {
        let err = parse_formula("p1 -> *", 1).unwrap_err();
        assert_eq!(err.offset, 6);
    }

    #[test]
    fn time_degree_base_cases() {
        assert_eq!(Formula::var(1).time_degree(), 0);
        assert_eq!(Formula::Top.time_degree(), 0);
        assert_eq!(Formula::Bottom.time_degree(), 0);
        assert_eq!(Formula::box_t(Formula::var(1)).time_degree(), 1);
    }

    #[test]
    fn time_degree_takes_max_over_branches() {
        // [E][T]p has degree 1, [T][T]p degree 2, so the conjunction is 2.
        let f = Formula::and(
            Formula::box_e(Formula::box_t(Formula::var(1))),
            Formula::box_t(Formula::box_t(Formula::var(1))),
        );
        assert_eq!(f.time_degree(), 2);
    }

    #[test]
    fn substitution_examples() {
        let s = Substitution::new().bind(1, Formula::Top);
        let f = Formula::or(Formula::var(1), Formula::not(Formula::var(1)));
        assert_eq!(
            s.apply(&f).unwrap(),
            Formula::or(Formula::Top, Formula::not(Formula::Top))
        );

        let id = Substitution::identity([1, 2]);
        let g = p("[T] p1 -> p2");
        assert_eq!(id.apply(&g).unwrap(), g);

        let swap = Substitution::new().bind(1, Formula::var(2));
        assert_eq!(
            swap.apply(&Formula::box_t(Formula::var(1))).unwrap(),
            Formula::box_t(Formula::var(2))
        );
    }

    #[test]
    fn substitution_unmapped_variable_is_an_error() {
        let s = Substitution::new().bind(1, Formula::Top);
        assert_eq!(s.apply(&Formula::var(2)), Err(UnmappedVariable(2)));
    }

    #[test]
    fn subformula_closure() {
        assert_eq!(Formula::var(1).subformulas().len(), 1);
        let f = Formula::box_t(Formula::var(1));
        let subs = f.subformulas();
        assert_eq!(subs, vec![&Formula::var(1), &f]);
        let g = p("p1 -> p2");
        assert_eq!(g.subformulas().len(), 3);
        // Shared subtrees are reported once.
        let h = p("p1 & p1");
        assert_eq!(h.subformulas().len(), 2);
    }

    #[test]
    fn parse_accepts_x0() {
        let r = parse_rule("x0 & <T>x0 / x0", 1).unwrap();
        assert_eq!(r.conclusion, Formula::var(0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_formula(agents: u32) -> impl Strategy<Value = Formula> {
            let leaf = prop_oneof![
                (0u32..4).prop_map(Formula::Var),
                Just(Formula::Top),
                Just(Formula::Bottom),
            ];
            leaf.prop_recursive(4, 32, 2, move |inner| {
                prop_oneof![
                    inner.clone().prop_map(Formula::not),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
                    inner.clone().prop_map(Formula::box_t),
                    inner.clone().prop_map(Formula::box_e),
                    (1..=agents, inner).prop_map(|(l, a)| Formula::box_agent(l, a)),
                ]
            })
        }

        proptest! {
            #[test]
            fn print_parse_roundtrip(f in arb_formula(2)) {
                let text = f.print();
                let back = parse_formula(&text, 2).unwrap();
                prop_assert_eq!(back, f.clone());
                // The printed form is canonical: printing again is stable.
                prop_assert_eq!(back0_print(&text), text);
            }

            #[test]
            fn time_degree_zero_iff_no_box_t(f in arb_formula(2)) {
                let has_box_t = f
                    .subformulas()
                    .iter()
                    .any(|s| matches!(s, Formula::BoxT(_)));
                prop_assert_eq!(f.time_degree() == 0, !has_box_t);
            }

            #[test]
            fn subformula_count_bounded_by_nodes(f in arb_formula(2)) {
                prop_assert!(f.subformulas().len() <= f.node_count());
            }

            #[test]
            fn substitution_distributes(f in arb_formula(2)) {
                // Replacing every variable commutes with each connective.
                let s = Substitution::new()
                    .bind(0, Formula::box_e(Formula::var(9)))
                    .bind(1, Formula::not(Formula::var(8)))
                    .bind(2, Formula::Top)
                    .bind(3, Formula::var(3));
                let applied = s.apply(&f).unwrap();
                let expect = match &f {
                    Formula::Not(a) => Formula::not(s.apply(a).unwrap()),
                    Formula::And(a, b) =>
                        Formula::and(s.apply(a).unwrap(), s.apply(b).unwrap()),
                    Formula::Or(a, b) =>
                        Formula::or(s.apply(a).unwrap(), s.apply(b).unwrap()),
                    Formula::Implies(a, b) =>
                        Formula::implies(s.apply(a).unwrap(), s.apply(b).unwrap()),
                    Formula::BoxT(a) => Formula::box_t(s.apply(a).unwrap()),
                    Formula::BoxE(a) => Formula::box_e(s.apply(a).unwrap()),
                    Formula::BoxAgent(l, a) => Formula::box_agent(*l, s.apply(a).unwrap()),
                    leaf => s.apply(leaf).unwrap(),
                };
                prop_assert_eq!(applied, expect);
            }
        }

        fn back0_print(text: &str) -> String {
            parse_formula(text, 2).unwrap().print()
        }
    }
}
