//! Line-oriented text formats.
//!
//! Problem files: `domain <n>`, one or more `sentence <formula>` lines
//! (conjoined), `weight <Pred> <w> <wbar>` lines, `cc <expr>` lines, `#`
//! comments. MLN files: `domain <n>` followed by `<weight|inf> <formula>`
//! lines. Models are serialised one per line as a comma-separated list of
//! true ground atoms; sample streams start with a `# seed=.. problem=..`
//! header.
//!
//! Formula syntax: `~ & | -> <->` with the usual precedence (`->` binds
//! right), `forall x`/`exists y` quantifier chains ending in `:` with
//! maximal scope, counting quantifiers `exists[=k] y`, `exists[<=k] y`,
//! `exists[>=k] y`, cardinality atoms `|P| <op> q`, and only the variables
//! `x` and `y`. Numbers are exact rationals: `7`, `0.2` (= 1/5) or `3/4`.

use crate::logic::{
    CmpOp, CountCmp, Domain, Formula, GroundAtom, Model, Problem, Var, Vocabulary, Weighting,
};
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use sha2::{Digest, Sha256};
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Tilde,
    And,
    Or,
    Arrow,
    Iff,
    EqSym,
    Le,
    Ge,
    Lt,
    Gt,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Tilde => "`~`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Iff => "`<->`".into(),
            Tok::EqSym => "`=`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn parse_err(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col, msg: msg.into() }
}

/// Tokenizes one line; `#` starts a comment.
fn lex(text: &str, line: usize) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let col = i + 1;
        let c = chars[i];
        let mut push = |tok: Tok, len: usize, i: &mut usize| {
            out.push(Spanned { tok, line, col });
            *i += len;
        };
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            '(' => push(Tok::LParen, 1, &mut i),
            ')' => push(Tok::RParen, 1, &mut i),
            '[' => push(Tok::LBracket, 1, &mut i),
            ']' => push(Tok::RBracket, 1, &mut i),
            ',' => push(Tok::Comma, 1, &mut i),
            ':' => push(Tok::Colon, 1, &mut i),
            '~' => push(Tok::Tilde, 1, &mut i),
            '&' => push(Tok::And, 1, &mut i),
            '|' => push(Tok::Or, 1, &mut i),
            '=' => push(Tok::EqSym, 1, &mut i),
            '<' => {
                if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') {
                    push(Tok::Iff, 3, &mut i);
                } else if chars.get(i + 1) == Some(&'=') {
                    push(Tok::Le, 2, &mut i);
                } else {
                    push(Tok::Lt, 1, &mut i);
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    push(Tok::Ge, 2, &mut i);
                } else {
                    push(Tok::Gt, 1, &mut i);
                }
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    push(Tok::Arrow, 2, &mut i);
                } else if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    let tok = lex_number(&chars, &mut i).map_err(|m| parse_err(line, col, m))?;
                    out.push(Spanned { tok, line, col });
                } else {
                    return Err(parse_err(line, col, "unexpected `-`"));
                }
            }
            c if c.is_ascii_digit() => {
                let tok = lex_number(&chars, &mut i).map_err(|m| parse_err(line, col, m))?;
                out.push(Spanned { tok, line, col });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
                {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                out.push(Spanned { tok: Tok::Ident(name), line, col });
            }
            other => return Err(parse_err(line, col, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

/// A lexed number: digits with an optional sign and one `.` or `/` part.
/// Returned as raw text; [`parse_rational`] interprets it.
fn lex_number(chars: &[char], i: &mut usize) -> std::result::Result<Tok, String> {
    let start = *i;
    if chars[*i] == '-' {
        *i += 1;
    }
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > s
    };
    if !digits(i) {
        return Err("expected digits".into());
    }
    if *i < chars.len() && (chars[*i] == '.' || chars[*i] == '/') {
        *i += 1;
        if !digits(i) {
            return Err("expected digits after the separator".into());
        }
    }
    Ok(Tok::Number(chars[start..*i].iter().collect()))
}

/// Parses `7`, `-3`, `0.25` or `3/4` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::InvalidInput(format!("`{s}` is not a number"));
    if let Some((p, q)) = s.split_once('/') {
        let numer = BigInt::from_str(p).map_err(|_| bad())?;
        let denom = BigInt::from_str(q).map_err(|_| bad())?;
        if denom.is_zero() {
            return Err(Error::InvalidInput(format!("`{s}` has a zero denominator")));
        }
        return Ok(BigRational::new(numer, denom));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        // "-0.5" joins to "-05", which keeps the sign through from_str.
        let joined = format!("{whole}{frac}");
        let numer = BigInt::from_str(&joined).map_err(|_| bad())?;
        let denom = num::pow::pow(BigInt::from(10), frac.len());
        return Ok(BigRational::new(numer, denom));
    }
    Ok(BigRational::from(BigInt::from_str(s).map_err(|_| bad())?))
}

pub fn render_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

struct FormulaParser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    line: usize,
    vocab: &'a mut Vocabulary,
    /// In strict mode unknown predicates are an error instead of an
    /// arity-inferred declaration (used for `cc` lines).
    strict: bool,
}

impl<'a> FormulaParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn advance(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(s) => (s.line, s.col),
            None => {
                let col = self.toks.last().map(|s| s.col + 1).unwrap_or(1);
                (self.line, col)
            }
        }
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.here();
        parse_err(line, col, msg)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.advance();
                Ok(())
            }
            Some(t) => Err(self.fail(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.fail(format!("expected {what}"))),
        }
    }

    fn parse_expr(&mut self) -> Result<Formula> {
        let mut f = self.parse_implies()?;
        while self.peek() == Some(&Tok::Iff) {
            self.advance();
            f = f.iff(self.parse_implies()?);
        }
        Ok(f)
    }

    fn parse_implies(&mut self) -> Result<Formula> {
        let lhs = self.parse_or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.advance();
            // Right-associative.
            return Ok(lhs.implies(self.parse_implies()?));
        }
        Ok(lhs)
    }

    fn parse_or(&mut self) -> Result<Formula> {
        let mut f = self.parse_and()?;
        while self.peek() == Some(&Tok::Or) {
            self.advance();
            f = f.or(self.parse_and()?);
        }
        Ok(f)
    }

    fn parse_and(&mut self) -> Result<Formula> {
        let mut f = self.parse_unary()?;
        while self.peek() == Some(&Tok::And) {
            self.advance();
            f = f.and(self.parse_unary()?);
        }
        Ok(f)
    }

    fn parse_unary(&mut self) -> Result<Formula> {
        match self.peek() {
            Some(Tok::Tilde) => {
                self.advance();
                Ok(self.parse_unary()?.not())
            }
            Some(Tok::Ident(s)) if s == "forall" || s == "exists" => self.parse_quantifier(),
            _ => self.parse_primary(),
        }
    }

    fn parse_quantifier(&mut self) -> Result<Formula> {
        let kw = match self.advance() {
            Some(Spanned { tok: Tok::Ident(s), .. }) => s,
            _ => unreachable!("caller peeked a quantifier keyword"),
        };
        let universal = kw == "forall";
        let mut counting: Option<(CountCmp, u32)> = None;
        if self.peek() == Some(&Tok::LBracket) {
            if universal {
                return Err(self.fail("counting quantifiers are existential: use `exists[..]`"));
            }
            self.advance();
            let cmp = match self.advance().map(|s| s.tok) {
                Some(Tok::EqSym) => CountCmp::Eq,
                Some(Tok::Le) => CountCmp::Le,
                Some(Tok::Ge) => CountCmp::Ge,
                _ => return Err(self.fail("expected `=`, `<=` or `>=` in a counting quantifier")),
            };
            let k = match self.advance() {
                Some(Spanned { tok: Tok::Number(s), line, col }) => {
                    u32::from_str(&s).map_err(|_| {
                        parse_err(line, col, "counting bound must be a non-negative integer")
                    })?
                }
                _ => return Err(self.fail("expected a counting bound")),
            };
            self.expect(Tok::RBracket, "`]`")?;
            counting = Some((cmp, k));
        }
        let var = self.parse_var()?;
        let body = match self.peek() {
            Some(Tok::Colon) => {
                self.advance();
                self.parse_expr()?
            }
            Some(Tok::Ident(s)) if s == "forall" || s == "exists" => self.parse_quantifier()?,
            _ => return Err(self.fail("expected `:` or a chained quantifier")),
        };
        Ok(match counting {
            Some((cmp, k)) => Formula::Count { cmp, k, var, body: Box::new(body) },
            None if universal => Formula::forall(var, body),
            None => Formula::exists(var, body),
        })
    }

    fn parse_var(&mut self) -> Result<Var> {
        match self.advance() {
            Some(Spanned { tok: Tok::Ident(s), .. }) if s == "x" => Ok(Var::X),
            Some(Spanned { tok: Tok::Ident(s), .. }) if s == "y" => Ok(Var::Y),
            Some(Spanned { tok: Tok::Ident(s), line, col }) => Err(parse_err(
                line,
                col,
                format!(
                    "variable `{s}` is not available: the two-variable fragment \
                     only has `x` and `y`"
                ),
            )),
            _ => Err(self.fail("expected a variable (`x` or `y`)")),
        }
    }

    fn parse_primary(&mut self) -> Result<Formula> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.advance();
                let f = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Or) => self.parse_card_atom(),
            Some(Tok::Ident(s)) if s == "true" => {
                self.advance();
                Ok(Formula::True)
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.advance();
                Ok(Formula::False)
            }
            Some(Tok::Ident(_)) => self.parse_atom(),
            Some(t) => {
                let d = t.describe();
                Err(self.fail(format!("expected a formula, found {d}")))
            }
            None => Err(self.fail("expected a formula")),
        }
    }

    fn parse_atom(&mut self) -> Result<Formula> {
        let (name, line, col) = match self.advance() {
            Some(Spanned { tok: Tok::Ident(s), line, col }) => (s, line, col),
            _ => unreachable!("caller peeked an identifier"),
        };
        if name.starts_with("__") {
            return Err(parse_err(
                line,
                col,
                format!("`{name}`: names starting with `__` are reserved for generated predicates"),
            ));
        }
        self.expect(Tok::LParen, "`(` after a predicate name")?;
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                if let Some(Tok::Number(_)) = self.peek() {
                    return Err(self.fail("domain constants cannot appear in sentences"));
                }
                args.push(self.parse_var()?);
                if self.peek() == Some(&Tok::Comma) {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        if args.len() > 2 {
            return Err(parse_err(line, col, "predicates take at most two arguments"));
        }
        let pred = if self.strict {
            self.vocab
                .lookup(&name)
                .ok_or_else(|| Error::UnknownPredicate(name.clone()))?
        } else {
            self.vocab.declare(&name, args.len())?
        };
        if self.vocab.arity(pred) != args.len() {
            return Err(Error::ArityMismatch {
                name,
                expected: self.vocab.arity(pred),
                found: args.len(),
            });
        }
        Ok(Formula::atom(pred, &args))
    }

    fn parse_card_atom(&mut self) -> Result<Formula> {
        self.expect(Tok::Or, "`|`")?;
        let name = match self.advance() {
            Some(Spanned { tok: Tok::Ident(s), .. }) => s,
            _ => return Err(self.fail("expected a predicate name inside `|..|`")),
        };
        self.expect(Tok::Or, "`|`")?;
        let op = match self.advance().map(|s| s.tok) {
            Some(Tok::EqSym) => CmpOp::Eq,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Gt) => CmpOp::Gt,
            _ => return Err(self.fail("expected a comparison after `|..|`")),
        };
        let q = match self.advance() {
            Some(Spanned { tok: Tok::Number(s), line, col }) => i64::from_str(&s)
                .map_err(|_| parse_err(line, col, "cardinality bounds must be integers"))?,
            _ => return Err(self.fail("expected an integer bound")),
        };
        let pred = self
            .vocab
            .lookup(&name)
            .ok_or_else(|| Error::UnknownPredicate(name.clone()))?;
        Ok(Formula::Card { pred, op, q })
    }
}

fn parse_token_formula(
    toks: &[Spanned],
    line: usize,
    vocab: &mut Vocabulary,
    strict: bool,
) -> Result<Formula> {
    let mut p = FormulaParser { toks, pos: 0, line, vocab, strict };
    let f = p.parse_expr()?;
    if let Some(s) = p.toks.get(p.pos) {
        return Err(parse_err(
            s.line,
            s.col,
            format!("unexpected trailing {}", s.tok.describe()),
        ));
    }
    Ok(f)
}

/// Parses a single formula, declaring predicates by first use.
pub fn parse_formula(text: &str, vocab: &mut Vocabulary) -> Result<Formula> {
    let toks = lex(text, 1)?;
    parse_token_formula(&toks, 1, vocab, false)
}

/// Parses a cardinality constraint against an existing vocabulary, e.g.
/// `|E| <= 4 & |P| = 2`. Predicates must already be declared.
pub fn parse_constraint(text: &str, vocab: &Vocabulary) -> Result<Formula> {
    let toks = lex(text, 1)?;
    let mut scratch = vocab.clone();
    let f = parse_token_formula(&toks, 1, &mut scratch, true)?;
    crate::logic::check_card_expr(&f)?;
    Ok(f)
}

/// Parses a problem file.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let mut domain: Option<u32> = None;
    let mut sentence_lines: Vec<(usize, Vec<Spanned>)> = Vec::new();
    let mut weight_lines: Vec<(usize, Vec<Spanned>)> = Vec::new();
    let mut cc_lines: Vec<(usize, Vec<Spanned>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = lex(raw, line_no)?;
        let Some(first) = toks.first() else { continue };
        match &first.tok {
            Tok::Ident(s) if s == "domain" => {
                if domain.is_some() {
                    return Err(parse_err(line_no, first.col, "duplicate `domain` line"));
                }
                domain = Some(parse_domain_size(&toks, line_no)?);
            }
            Tok::Ident(s) if s == "sentence" => sentence_lines.push((line_no, toks[1..].to_vec())),
            Tok::Ident(s) if s == "weight" => weight_lines.push((line_no, toks[1..].to_vec())),
            Tok::Ident(s) if s == "cc" => cc_lines.push((line_no, toks[1..].to_vec())),
            _ => {
                return Err(parse_err(
                    line_no,
                    first.col,
                    "expected `domain`, `sentence`, `weight` or `cc`",
                ))
            }
        }
    }
    let domain = Domain::new(
        domain.ok_or_else(|| Error::InvalidInput("missing `domain` line".into()))?,
    )?;
    if sentence_lines.is_empty() {
        return Err(Error::InvalidInput("missing `sentence` line".into()));
    }

    let mut vocab = Vocabulary::new();
    let mut sentences = Vec::new();
    for (line, toks) in &sentence_lines {
        sentences.push(parse_token_formula(toks, *line, &mut vocab, false)?);
    }
    let sentence = Formula::and_all(sentences);

    let mut ccs = Vec::new();
    for (line, toks) in &cc_lines {
        ccs.push(parse_token_formula(toks, *line, &mut vocab, true)?);
    }
    let cardinality = if ccs.is_empty() { None } else { Some(Formula::and_all(ccs)) };

    let mut weighting = Weighting::unit(&vocab);
    for (line, toks) in &weight_lines {
        apply_weight_line(toks, *line, &vocab, &mut weighting)?;
    }

    let problem = Problem { vocab: Arc::new(vocab), sentence, domain, weighting, cardinality };
    problem.validate()?;
    Ok(problem)
}

fn parse_domain_size(toks: &[Spanned], line: usize) -> Result<u32> {
    match toks {
        [_, Spanned { tok: Tok::Number(s), col, .. }] => u32::from_str(s)
            .map_err(|_| parse_err(line, *col, "domain size must be a positive integer")),
        _ => Err(parse_err(line, 1, "expected `domain <n>`")),
    }
}

fn apply_weight_line(
    toks: &[Spanned],
    line: usize,
    vocab: &Vocabulary,
    weighting: &mut Weighting,
) -> Result<()> {
    match toks {
        [Spanned { tok: Tok::Ident(name), .. }, Spanned { tok: Tok::Number(w), .. }, Spanned { tok: Tok::Number(wbar), .. }] =>
        {
            let pred = vocab
                .lookup(name)
                .ok_or_else(|| Error::UnknownPredicate(name.clone()))?;
            let w = parse_rational(w)?;
            let wbar = parse_rational(wbar)?;
            if w.is_negative() || wbar.is_negative() {
                return Err(Error::InvalidInput(format!(
                    "weights for `{name}` must be non-negative"
                )));
            }
            weighting.set(pred, w, wbar);
            Ok(())
        }
        _ => Err(parse_err(line, 1, "expected `weight <Pred> <w> <wbar>`")),
    }
}

/// One rule of an MLN file; `weight: None` marks a hard rule.
#[derive(Debug, Clone)]
pub struct MlnRule {
    pub weight: Option<BigRational>,
    pub formula: Formula,
}

#[derive(Debug, Clone)]
pub struct MlnInput {
    pub vocab: Arc<Vocabulary>,
    pub domain: Domain,
    pub rules: Vec<MlnRule>,
}

/// Parses an MLN file: `domain <n>` plus weighted formula lines. Formulas
/// may have free variables (universally closed by the reduction).
pub fn parse_mln(text: &str) -> Result<MlnInput> {
    let mut vocab = Vocabulary::new();
    let mut domain: Option<u32> = None;
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = lex(raw, line_no)?;
        let Some(first) = toks.first() else { continue };
        match &first.tok {
            Tok::Ident(s) if s == "domain" => {
                if domain.is_some() {
                    return Err(parse_err(line_no, first.col, "duplicate `domain` line"));
                }
                domain = Some(parse_domain_size(&toks, line_no)?);
            }
            Tok::Ident(s) if s == "inf" => {
                let formula = parse_token_formula(&toks[1..], line_no, &mut vocab, false)?;
                rules.push(MlnRule { weight: None, formula });
            }
            Tok::Number(w) => {
                let weight = parse_rational(w)?;
                let formula = parse_token_formula(&toks[1..], line_no, &mut vocab, false)?;
                rules.push(MlnRule { weight: Some(weight), formula });
            }
            _ => {
                return Err(parse_err(
                    line_no,
                    first.col,
                    "expected `domain`, a rule weight, or `inf`",
                ))
            }
        }
    }
    let domain = Domain::new(
        domain.ok_or_else(|| Error::InvalidInput("missing `domain` line".into()))?,
    )?;
    Ok(MlnInput { vocab: Arc::new(vocab), domain, rules })
}

/// Parses one model line ("E(1,2),P(3)"; empty line = empty model).
pub fn parse_model_line(line: &str, vocab: &Arc<Vocabulary>, n: u32) -> Result<Model> {
    let toks = lex(line, 1)?;
    let mut model = Model::new(vocab.clone(), n);
    let mut pos = 0;
    while pos < toks.len() {
        let (name, line_no, col) = match &toks[pos].tok {
            Tok::Ident(s) => (s.clone(), toks[pos].line, toks[pos].col),
            t => return Err(parse_err(toks[pos].line, toks[pos].col, format!(
                "expected a ground atom, found {}",
                t.describe()
            ))),
        };
        pos += 1;
        let pred = vocab.lookup(&name).ok_or(Error::UnknownPredicate(name.clone()))?;
        if toks.get(pos).map(|s| &s.tok) != Some(&Tok::LParen) {
            return Err(parse_err(line_no, col, "expected `(` after the predicate name"));
        }
        pos += 1;
        let mut args: smallvec::SmallVec<[u32; 2]> = smallvec::SmallVec::new();
        while toks.get(pos).map(|s| &s.tok) != Some(&Tok::RParen) {
            match toks.get(pos) {
                Some(Spanned { tok: Tok::Number(s), line, col }) => {
                    let e = u32::from_str(s)
                        .map_err(|_| parse_err(*line, *col, "expected a domain element"))?;
                    if e == 0 || e > n {
                        return Err(Error::InvalidInput(format!(
                            "element {e} outside the domain 1..{n}"
                        )));
                    }
                    args.push(e);
                    pos += 1;
                }
                Some(s) => {
                    return Err(parse_err(s.line, s.col, "expected a domain element"))
                }
                None => return Err(parse_err(line_no, col, "unterminated ground atom")),
            }
            if toks.get(pos).map(|s| &s.tok) == Some(&Tok::Comma) {
                pos += 1;
            }
        }
        pos += 1; // closing paren
        if vocab.arity(pred) != args.len() {
            return Err(Error::ArityMismatch {
                name,
                expected: vocab.arity(pred),
                found: args.len(),
            });
        }
        model.atoms.insert(GroundAtom { pred, args });
        match toks.get(pos).map(|s| &s.tok) {
            Some(Tok::Comma) => pos += 1,
            None => break,
            Some(t) => {
                return Err(parse_err(
                    toks[pos].line,
                    toks[pos].col,
                    format!("expected `,` between atoms, found {}", t.describe()),
                ))
            }
        }
    }
    Ok(model)
}

/// Canonical problem rendering; its hash identifies the instance in sample
/// stream headers.
pub fn render_problem(p: &Problem) -> String {
    let mut out = format!("domain {}\n", p.domain.size);
    out.push_str(&format!("sentence {}\n", p.sentence.display(&p.vocab)));
    for (id, d) in p.vocab.iter() {
        let w = &p.weighting.w[id.0];
        let wbar = &p.weighting.wbar[id.0];
        if !w.is_one() || !wbar.is_one() {
            out.push_str(&format!(
                "weight {} {} {}\n",
                d.name,
                render_rational(w),
                render_rational(wbar)
            ));
        }
    }
    if let Some(cc) = &p.cardinality {
        out.push_str(&format!("cc {}\n", cc.display(&p.vocab)));
    }
    out
}

pub fn problem_hash(p: &Problem) -> String {
    let digest = Sha256::digest(render_problem(p).as_bytes());
    let mut hex = String::with_capacity(16);
    for b in digest.iter().take(8) {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Header line preceding each sample stream.
pub fn run_header(seed: u64, p: &Problem) -> String {
    format!("# seed={seed} problem={}", problem_hash(p))
}
