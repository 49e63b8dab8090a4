//! Rule text.
//!
//! ```text
//! RULE  := "IF" EXPR "THEN" MODEL
//! EXPR  := GROUP ("AND" GROUP)*
//! GROUP := ATOM | "(" DISJ ")"
//! DISJ  := CONJ ("OR" CONJ)*
//! CONJ  := GROUP ("AND" GROUP)*
//! ATOM  := name ("<=" | ">") number
//!        | name ("IN" | "NOT IN") "{" level ("," level)* "}"
//!        | name "=" level | "TRUE" | "FALSE"
//! MODEL := name "=" coef (("+" | "-") coef "*" name)*
//! ```
//!
//! Names and levels that are keywords or contain whitespace, quotes or any
//! of `(){},*=<>` are double-quoted. Thresholds are written in the shortest
//! form that parses back to the same number; coefficients use four decimals.

use super::{Atom, Expr, Outcome, Relation, Rule};
use crate::error::{Error, Result};

const KEYWORDS: [&str; 8] = ["IF", "THEN", "AND", "OR", "IN", "NOT", "TRUE", "FALSE"];
const SPECIAL: &[char] = &['(', ')', '{', '}', ',', '*', '=', '<', '>', '"', '\\'];

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || KEYWORDS.contains(&s)
        || s == "+"
        || s == "-"
        || s.chars().any(|c| c.is_whitespace() || SPECIAL.contains(&c))
}

pub fn render_name(s: &str) -> String {
    if !needs_quotes(s) {
        return s.to_string();
    }
    let mut out = String::from("\"");
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn render_set(levels: &[String]) -> String {
    let inner: Vec<String> = levels.iter().map(|l| render_name(l)).collect();
    format!("{{{}}}", inner.join(", "))
}

pub fn render_atom(a: &Atom) -> String {
    let f = render_name(&a.feature);
    match &a.relation {
        Relation::Le(v) => format!("{f} <= {v}"),
        Relation::Gt(v) => format!("{f} > {v}"),
        Relation::In(s) => format!("{f} IN {}", render_set(s)),
        Relation::NotIn(s) => format!("{f} NOT IN {}", render_set(s)),
        Relation::Eq(l) => format!("{f} = {}", render_name(l)),
    }
}

pub fn render_expr(e: &Expr) -> String {
    match e {
        Expr::True => "TRUE".into(),
        Expr::False => "FALSE".into(),
        Expr::Atom(a) => render_atom(a),
        Expr::And(xs) if xs.is_empty() => "TRUE".into(),
        Expr::Or(xs) if xs.is_empty() => "FALSE".into(),
        Expr::And(xs) => xs.iter().map(render_expr).collect::<Vec<_>>().join(" AND "),
        Expr::Or(xs) => format!("({})", xs.iter().map(render_expr).collect::<Vec<_>>().join(" OR ")),
    }
}

pub fn render_outcome(o: &Outcome) -> String {
    let mut s = format!("{} = {:.4}", render_name(&o.target), o.intercept);
    for (c, name) in &o.terms {
        let sign = if c.is_sign_negative() { '-' } else { '+' };
        s.push_str(&format!(" {sign} {:.4} * {}", c.abs(), render_name(name)));
    }
    s
}

pub fn render_rule(r: &Rule) -> String {
    format!("IF {} THEN {}", render_expr(&r.condition), render_outcome(&r.outcome))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Star,
    Eq,
    Le,
    Gt,
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let err = |m: String| Error::Invalid(format!("rule text: {m}"));
    let mut out = Vec::new();
    let mut it = s.chars().peekable();
    while let Some(&c) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            '*' => Some(Tok::Star),
            '=' => Some(Tok::Eq),
            '>' => Some(Tok::Gt),
            _ => None,
        };
        if let Some(t) = single {
            it.next();
            out.push(t);
            continue;
        }
        match c {
            '<' => {
                it.next();
                if it.next() != Some('=') {
                    return Err(err("expected `<=`".into()));
                }
                out.push(Tok::Le);
            }
            '"' => {
                it.next();
                let mut w = String::new();
                loop {
                    match it.next() {
                        None => return Err(err("unterminated quoted name".into())),
                        Some('"') => break,
                        Some('\\') => w.push(it.next().ok_or_else(|| err("dangling escape".into()))?),
                        Some(ch) => w.push(ch),
                    }
                }
                out.push(Tok::Quoted(w));
            }
            _ => {
                let mut w = String::new();
                while let Some(&ch) = it.peek() {
                    if ch.is_whitespace() || SPECIAL.contains(&ch) {
                        break;
                    }
                    w.push(ch);
                    it.next();
                }
                out.push(Tok::Word(w));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn err(&self, m: &str) -> Error {
        Error::Invalid(format!("rule text: {m} at token {}", self.pos + 1))
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w == kw)
    }

    fn kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{kw}`")))
        }
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {t:?}")))
        }
    }

    fn name(&mut self) -> Result<String> {
        match self.next() {
            Some(Tok::Quoted(s)) => Ok(s),
            Some(Tok::Word(w)) if !KEYWORDS.contains(&w.as_str()) => Ok(w),
            _ => Err(self.err("expected a name")),
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.next() {
            Some(Tok::Word(w)) => w.parse().map_err(|_| self.err(&format!("bad number `{w}`"))),
            _ => Err(self.err("expected a number")),
        }
    }

    fn conj(&mut self) -> Result<Expr> {
        let mut items = vec![self.group()?];
        while self.is_kw("AND") {
            self.pos += 1;
            items.push(self.group()?);
        }
        Ok(Expr::and(items))
    }

    fn group(&mut self) -> Result<Expr> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let mut items = vec![self.conj()?];
            while self.is_kw("OR") {
                self.pos += 1;
                items.push(self.conj()?);
            }
            self.expect(Tok::RParen)?;
            return Ok(Expr::Or(items));
        }
        self.atom()
    }

    fn set(&mut self) -> Result<Vec<String>> {
        self.expect(Tok::LBrace)?;
        let mut out = vec![self.name()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.name()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr> {
        if self.is_kw("TRUE") {
            self.pos += 1;
            return Ok(Expr::True);
        }
        if self.is_kw("FALSE") {
            self.pos += 1;
            return Ok(Expr::False);
        }
        let feature = self.name()?;
        let relation = match self.next() {
            Some(Tok::Le) => Relation::Le(self.number()?),
            Some(Tok::Gt) => Relation::Gt(self.number()?),
            Some(Tok::Eq) => Relation::Eq(self.name()?),
            Some(Tok::Word(w)) if w == "IN" => Relation::In(self.set()?),
            Some(Tok::Word(w)) if w == "NOT" => {
                self.kw("IN")?;
                Relation::NotIn(self.set()?)
            }
            _ => return Err(self.err("expected a relation")),
        };
        Ok(Expr::Atom(Atom { feature, relation }))
    }

    fn outcome(&mut self) -> Result<Outcome> {
        let target = self.name()?;
        self.expect(Tok::Eq)?;
        let intercept = self.number()?;
        let mut terms = Vec::new();
        while let Some(Tok::Word(w)) = self.peek() {
            let sign = match w.as_str() {
                "+" => 1.0,
                "-" => -1.0,
                _ => break,
            };
            self.pos += 1;
            let c = self.number()?;
            self.expect(Tok::Star)?;
            terms.push((sign * c, self.name()?));
        }
        Ok(Outcome {
            target,
            intercept,
            terms,
        })
    }
}

/// Parses a condition expression.
pub fn parse_expr(s: &str) -> Result<Expr> {
    let mut p = Parser { toks: lex(s)?, pos: 0 };
    let e = p.conj()?;
    if p.pos != p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

/// Parses a full `IF ... THEN ...` rule.
pub fn parse_rule(s: &str) -> Result<Rule> {
    let mut p = Parser { toks: lex(s)?, pos: 0 };
    p.kw("IF")?;
    let condition = p.conj()?;
    p.kw("THEN")?;
    let outcome = p.outcome()?;
    if p.pos != p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(Rule { condition, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_rule() {
        let r = Rule {
            condition: Expr::True,
            outcome: Outcome {
                target: "y".into(),
                intercept: 2.5,
                terms: vec![],
            },
        };
        assert_eq!(render_rule(&r), "IF TRUE THEN y = 2.5000");
        assert_eq!(parse_rule(&render_rule(&r)).unwrap(), r);
    }

    #[test]
    fn printed_leaf_model_style() {
        let o = Outcome {
            target: "spmsq_score_sum".into(),
            intercept: 12.1694,
            terms: vec![(-0.0726, "Female".into()), (-0.0417, "Age".into()), (0.3273, "Elementart_school".into())],
        };
        assert_eq!(
            render_outcome(&o),
            "spmsq_score_sum = 12.1694 - 0.0726 * Female - 0.0417 * Age + 0.3273 * Elementart_school"
        );
    }

    #[test]
    fn disjunction_groups_round_trip() {
        let e = Expr::And(vec![
            Expr::Or(vec![Expr::Atom(Atom::eq("T_1_351", "R_1")), Expr::Atom(Atom::eq("T_1_351", "R_2"))]),
            Expr::Atom(Atom::le("x", -0.25)),
            Expr::Or(vec![
                Expr::And(vec![Expr::Atom(Atom::gt("lone_2", 1.0)), Expr::Atom(Atom::le("work_1", 0.0))]),
                Expr::Atom(Atom::new("g", Relation::NotIn(vec!["a b".into(), "IN".into()]))),
            ]),
        ]);
        let text = render_expr(&e);
        assert_eq!(
            text,
            "(T_1_351 = R_1 OR T_1_351 = R_2) AND x <= -0.25 AND (lone_2 > 1 AND work_1 <= 0 OR g NOT IN {\"a b\", \"IN\"})"
        );
        assert_eq!(parse_expr(&text).unwrap(), e);
    }

    #[test]
    fn thresholds_round_trip_exactly() {
        for v in [0.1 + 0.2, 1e-300, 123456789.125, -7.0e21, 5.0e-324] {
            let e = Expr::Atom(Atom::le("x", v));
            assert_eq!(parse_expr(&render_expr(&e)).unwrap(), e);
        }
    }

    #[test]
    fn garbage_is_rejected() {
        for s in ["x <=", "x < 3", "(x <= 1", "IF x <= 1", "x IN {}", "x <= 1 y"] {
            assert!(parse_expr(s).is_err(), "{s}");
        }
        assert!(parse_rule("IF x <= 1 THEN y = 1 + 2").is_err());
    }
}
