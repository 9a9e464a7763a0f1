//! First-order syntax over at most two variables, ground structures, and
//! evaluation.
//!
//! A [`Vocabulary`] fixes an ordered list of predicates. [`Formula`] is the
//! shared AST for sentences, quantifier-free matrices and cardinality
//! expressions. Grounding replaces quantifiers by finite conjunctions and
//! disjunctions over a domain `{1, .., n}`; [`Model`] is a total
//! interpretation given by its set of true ground atoms.

use crate::{Error, Result};
use num::bigint::BigUint;
use num::rational::BigRational;
use num::{One, Zero};
use smallvec::SmallVec;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

/// Index of a predicate within its vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredId(pub usize);

/// The two object variables available to formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X,
    Y,
}

impl Var {
    pub fn other(self) -> Var {
        match self {
            Var::X => Var::Y,
            Var::Y => Var::X,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredDecl {
    pub name: String,
    pub arity: usize,
}

/// Ordered predicate declarations. Order is the declaration order and fixes
/// atom numbering everywhere downstream (1-type bits, model indices).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    preds: Vec<PredDecl>,
    by_name: HashMap<String, PredId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    /// Adds a predicate, or returns the existing id when the same
    /// name/arity pair was declared before.
    pub fn declare(&mut self, name: &str, arity: usize) -> Result<PredId> {
        if let Some(&id) = self.by_name.get(name) {
            let d = &self.preds[id.0];
            if d.arity != arity {
                return Err(Error::ArityMismatch {
                    name: name.to_string(),
                    expected: d.arity,
                    found: arity,
                });
            }
            return Ok(id);
        }
        let id = PredId(self.preds.len());
        self.preds.push(PredDecl { name: name.to_string(), arity });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<PredId> {
        self.by_name.get(name).copied()
    }

    pub fn decl(&self, id: PredId) -> &PredDecl {
        &self.preds[id.0]
    }

    pub fn name(&self, id: PredId) -> &str {
        &self.preds[id.0].name
    }

    pub fn arity(&self, id: PredId) -> usize {
        self.preds[id.0].arity
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PredId, &PredDecl)> {
        self.preds.iter().enumerate().map(|(i, d)| (PredId(i), d))
    }

    /// All ground atoms over a domain of size `n`, sorted by predicate name
    /// then argument tuple. This ordering defines the lexicographic model
    /// numbering used by the validation harness.
    pub fn ground_atoms_by_name(&self, n: u32) -> Vec<GroundAtom> {
        let mut ids: Vec<PredId> = (0..self.preds.len()).map(PredId).collect();
        ids.sort_by(|a, b| self.name(*a).cmp(self.name(*b)));
        let mut out = Vec::new();
        for id in ids {
            out.extend(atoms_of_pred(self, id, n));
        }
        out
    }

    /// Total number of ground atoms over a domain of size `n`.
    pub fn ground_atom_count(&self, n: u32) -> u64 {
        self.preds
            .iter()
            .map(|d| (n as u64).pow(d.arity as u32))
            .sum()
    }
}

/// Ground atoms of one predicate in argument order (1-based elements).
pub fn atoms_of_pred(vocab: &Vocabulary, id: PredId, n: u32) -> Vec<GroundAtom> {
    let arity = vocab.arity(id);
    match arity {
        0 => vec![GroundAtom { pred: id, args: SmallVec::new() }],
        1 => (1..=n)
            .map(|e| GroundAtom { pred: id, args: SmallVec::from_slice(&[e]) })
            .collect(),
        2 => {
            let mut v = Vec::with_capacity((n * n) as usize);
            for a in 1..=n {
                for b in 1..=n {
                    v.push(GroundAtom { pred: id, args: SmallVec::from_slice(&[a, b]) });
                }
            }
            v
        }
        _ => unreachable!("arity above 2 is rejected at declaration"),
    }
}

/// Comparison operators for cardinality atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Le,
    Ge,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

/// Counting-quantifier comparison: exactly, at most, at least.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CountCmp {
    Eq,
    Le,
    Ge,
}

/// Formula AST. Quantifiers bind one of the two variables; `Count` is a
/// counting quantifier; `Card` is a cardinality atom `|P| op q` over the
/// number of true ground literals of `P`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom { pred: PredId, args: SmallVec<[Var; 2]> },
    Card { pred: PredId, op: CmpOp, q: i64 },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Forall(Var, Box<Formula>),
    Exists(Var, Box<Formula>),
    Count { cmp: CountCmp, k: u32, var: Var, body: Box<Formula> },
}

impl Formula {
    pub fn atom(pred: PredId, args: &[Var]) -> Formula {
        Formula::Atom { pred, args: SmallVec::from_slice(args) }
    }

    pub fn not(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(other))
    }

    pub fn implies(self, other: Formula) -> Formula {
        Formula::Implies(Box::new(self), Box::new(other))
    }

    pub fn iff(self, other: Formula) -> Formula {
        Formula::Iff(Box::new(self), Box::new(other))
    }

    pub fn forall(var: Var, body: Formula) -> Formula {
        Formula::Forall(var, Box::new(body))
    }

    pub fn exists(var: Var, body: Formula) -> Formula {
        Formula::Exists(var, Box::new(body))
    }

    /// Conjunction of a list; empty list is `True`.
    pub fn and_all(mut fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::True,
            1 => fs.pop().unwrap(),
            _ => {
                let mut it = fs.into_iter();
                let first = it.next().unwrap();
                it.fold(first, |acc, f| acc.and(f))
            }
        }
    }

    /// Disjunction of a list; empty list is `False`.
    pub fn or_all(mut fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::False,
            1 => fs.pop().unwrap(),
            _ => {
                let mut it = fs.into_iter();
                let first = it.next().unwrap();
                it.fold(first, |acc, f| acc.or(f))
            }
        }
    }

    /// Splits nested conjunctions into a flat list.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Free variables of the formula.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        fn walk(f: &Formula, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
            match f {
                Formula::True | Formula::False | Formula::Card { .. } => {}
                Formula::Atom { args, .. } => {
                    for v in args {
                        if !bound.contains(v) {
                            out.insert(*v);
                        }
                    }
                }
                Formula::Not(a) => walk(a, bound, out),
                Formula::And(a, b)
                | Formula::Or(a, b)
                | Formula::Implies(a, b)
                | Formula::Iff(a, b) => {
                    walk(a, bound, out);
                    walk(b, bound, out);
                }
                Formula::Forall(v, a) | Formula::Exists(v, a) => {
                    bound.push(*v);
                    walk(a, bound, out);
                    bound.pop();
                }
                Formula::Count { var, body, .. } => {
                    bound.push(*var);
                    walk(body, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom { .. } | Formula::Card { .. } => true,
            Formula::Not(a) => a.is_quantifier_free(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => a.is_quantifier_free() && b.is_quantifier_free(),
            Formula::Forall(..) | Formula::Exists(..) | Formula::Count { .. } => false,
        }
    }

    pub fn has_counting(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom { .. } | Formula::Card { .. } => false,
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.has_counting(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => a.has_counting() || b.has_counting(),
            Formula::Count { .. } => true,
        }
    }

    pub fn has_card_atom(&self) -> bool {
        match self {
            Formula::Card { .. } => true,
            Formula::True | Formula::False | Formula::Atom { .. } => false,
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.has_card_atom(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => a.has_card_atom() || b.has_card_atom(),
            Formula::Count { body, .. } => body.has_card_atom(),
        }
    }

    /// Predicates occurring anywhere in the formula.
    pub fn predicates(&self) -> BTreeSet<PredId> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |pred, _| {
            out.insert(pred);
        });
        fn cards(f: &Formula, out: &mut BTreeSet<PredId>) {
            match f {
                Formula::Card { pred, .. } => {
                    out.insert(*pred);
                }
                Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => cards(a, out),
                Formula::And(a, b)
                | Formula::Or(a, b)
                | Formula::Implies(a, b)
                | Formula::Iff(a, b) => {
                    cards(a, out);
                    cards(b, out);
                }
                Formula::Count { body, .. } => cards(body, out),
                _ => {}
            }
        }
        cards(self, &mut out);
        out
    }

    fn visit_atoms(&self, f: &mut impl FnMut(PredId, &[Var])) {
        match self {
            Formula::Atom { pred, args } => f(*pred, args),
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.visit_atoms(f),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                a.visit_atoms(f);
                b.visit_atoms(f);
            }
            Formula::Count { body, .. } => body.visit_atoms(f),
            _ => {}
        }
    }

    /// Swaps the roles of `x` and `y` everywhere (bound and free).
    pub fn swap_vars(&self) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Card { pred, op, q } => Formula::Card { pred: *pred, op: *op, q: *q },
            Formula::Atom { pred, args } => Formula::Atom {
                pred: *pred,
                args: args.iter().map(|v| v.other()).collect(),
            },
            Formula::Not(a) => a.swap_vars().not(),
            Formula::And(a, b) => a.swap_vars().and(b.swap_vars()),
            Formula::Or(a, b) => a.swap_vars().or(b.swap_vars()),
            Formula::Implies(a, b) => a.swap_vars().implies(b.swap_vars()),
            Formula::Iff(a, b) => a.swap_vars().iff(b.swap_vars()),
            Formula::Forall(v, a) => Formula::forall(v.other(), a.swap_vars()),
            Formula::Exists(v, a) => Formula::exists(v.other(), a.swap_vars()),
            Formula::Count { cmp, k, var, body } => Formula::Count {
                cmp: *cmp,
                k: *k,
                var: var.other(),
                body: Box::new(body.swap_vars()),
            },
        }
    }

    /// Constant folding for `True`/`False` leaves.
    pub fn simplify(&self) -> Formula {
        match self {
            Formula::Not(a) => match a.simplify() {
                Formula::True => Formula::False,
                Formula::False => Formula::True,
                Formula::Not(inner) => *inner,
                s => s.not(),
            },
            Formula::And(a, b) => match (a.simplify(), b.simplify()) {
                (Formula::False, _) | (_, Formula::False) => Formula::False,
                (Formula::True, s) | (s, Formula::True) => s,
                (sa, sb) => sa.and(sb),
            },
            Formula::Or(a, b) => match (a.simplify(), b.simplify()) {
                (Formula::True, _) | (_, Formula::True) => Formula::True,
                (Formula::False, s) | (s, Formula::False) => s,
                (sa, sb) => sa.or(sb),
            },
            Formula::Implies(a, b) => match (a.simplify(), b.simplify()) {
                (Formula::False, _) => Formula::True,
                (Formula::True, s) => s,
                (_, Formula::True) => Formula::True,
                (sa, Formula::False) => sa.not(),
                (sa, sb) => sa.implies(sb),
            },
            Formula::Iff(a, b) => match (a.simplify(), b.simplify()) {
                (Formula::True, s) | (s, Formula::True) => s,
                (Formula::False, s) | (s, Formula::False) => match s {
                    Formula::Not(inner) => *inner,
                    s => s.not(),
                },
                (sa, sb) => sa.iff(sb),
            },
            Formula::Forall(v, a) => match a.simplify() {
                Formula::True => Formula::True,
                Formula::False => Formula::False,
                s => Formula::forall(*v, s),
            },
            Formula::Exists(v, a) => match a.simplify() {
                Formula::True => Formula::True,
                Formula::False => Formula::False,
                s => Formula::exists(*v, s),
            },
            Formula::Count { cmp, k, var, body } => Formula::Count {
                cmp: *cmp,
                k: *k,
                var: *var,
                body: Box::new(body.simplify()),
            },
            other => other.clone(),
        }
    }

    /// Renders the formula using the text syntax accepted by the parser.
    pub fn display<'a>(&'a self, vocab: &'a Vocabulary) -> FormulaDisplay<'a> {
        FormulaDisplay { formula: self, vocab }
    }
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    vocab: &'a Vocabulary,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(f, self.formula, self.vocab, 0)
    }
}

/// Precedence levels: 0 iff, 1 implies, 2 or, 3 and, 4 unary.
fn write_formula(
    f: &mut fmt::Formatter<'_>,
    formula: &Formula,
    vocab: &Vocabulary,
    prec: u8,
) -> fmt::Result {
    let paren = |f: &mut fmt::Formatter<'_>, level: u8, inner: &dyn Fn(&mut fmt::Formatter<'_>) -> fmt::Result| {
        if prec > level {
            write!(f, "(")?;
            inner(f)?;
            write!(f, ")")
        } else {
            inner(f)
        }
    };
    match formula {
        Formula::True => write!(f, "true"),
        Formula::False => write!(f, "false"),
        Formula::Atom { pred, args } => {
            write!(f, "{}(", vocab.name(*pred))?;
            for (i, v) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", v.name())?;
            }
            write!(f, ")")
        }
        Formula::Card { pred, op, q } => {
            write!(f, "|{}| {} {}", vocab.name(*pred), op.symbol(), q)
        }
        Formula::Not(a) => {
            write!(f, "~")?;
            write_formula(f, a, vocab, 4)
        }
        Formula::And(a, b) => paren(f, 3, &|f| {
            write_formula(f, a, vocab, 3)?;
            write!(f, " & ")?;
            write_formula(f, b, vocab, 4)
        }),
        Formula::Or(a, b) => paren(f, 2, &|f| {
            write_formula(f, a, vocab, 2)?;
            write!(f, " | ")?;
            write_formula(f, b, vocab, 3)
        }),
        Formula::Implies(a, b) => paren(f, 1, &|f| {
            write_formula(f, a, vocab, 2)?;
            write!(f, " -> ")?;
            write_formula(f, b, vocab, 1)
        }),
        Formula::Iff(a, b) => paren(f, 0, &|f| {
            write_formula(f, a, vocab, 1)?;
            write!(f, " <-> ")?;
            write_formula(f, b, vocab, 1)
        }),
        Formula::Forall(v, a) => paren(f, 0, &|f| {
            write!(f, "forall {}: ", v.name())?;
            write_formula(f, a, vocab, 0)
        }),
        Formula::Exists(v, a) => paren(f, 0, &|f| {
            write!(f, "exists {}: ", v.name())?;
            write_formula(f, a, vocab, 0)
        }),
        Formula::Count { cmp, k, var, body } => paren(f, 0, &|f| {
            let sym = match cmp {
                CountCmp::Eq => "=",
                CountCmp::Le => "<=",
                CountCmp::Ge => ">=",
            };
            write!(f, "exists[{}{}] {}: ", sym, k, var.name())?;
            write_formula(f, body, vocab, 0)
        }),
    }
}

/// Domain `{1, .., size}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Domain {
    pub size: u32,
}

impl Domain {
    pub fn new(size: u32) -> Result<Domain> {
        if size == 0 {
            return Err(Error::InvalidInput("domain size must be at least 1".into()));
        }
        Ok(Domain { size })
    }

    pub fn elements(&self) -> impl Iterator<Item = u32> {
        1..=self.size
    }
}

/// Per-predicate weights for true (`w`) and false (`wbar`) ground literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Weighting {
    pub w: Vec<BigRational>,
    pub wbar: Vec<BigRational>,
}

impl Weighting {
    /// Unit weights for every predicate of the vocabulary.
    pub fn unit(vocab: &Vocabulary) -> Weighting {
        Weighting {
            w: vec![BigRational::one(); vocab.len()],
            wbar: vec![BigRational::one(); vocab.len()],
        }
    }

    pub fn set(&mut self, pred: PredId, w: BigRational, wbar: BigRational) {
        self.w[pred.0] = w;
        self.wbar[pred.0] = wbar;
    }

    /// Extends the weight table for newly declared predicates with `(1, 1)`.
    pub fn pad_to(&mut self, len: usize) {
        while self.w.len() < len {
            self.w.push(BigRational::one());
            self.wbar.push(BigRational::one());
        }
    }
}

/// A counting/sampling instance: sentence, domain, weighting, and an
/// optional Boolean combination of cardinality atoms.
#[derive(Debug, Clone)]
pub struct Problem {
    pub vocab: Arc<Vocabulary>,
    pub sentence: Formula,
    pub domain: Domain,
    pub weighting: Weighting,
    pub cardinality: Option<Formula>,
}

impl Problem {
    /// Validates structural invariants: closed sentence, known predicates,
    /// non-negative weights, cardinality expression over cardinality atoms
    /// only.
    pub fn validate(&self) -> Result<()> {
        if !self.sentence.free_vars().is_empty() {
            return Err(Error::InvalidInput("sentence must be closed".into()));
        }
        if self.weighting.w.len() != self.vocab.len() || self.weighting.wbar.len() != self.vocab.len() {
            return Err(Error::Internal("weighting table length mismatch".into()));
        }
        for (w, wbar) in self.weighting.w.iter().zip(&self.weighting.wbar) {
            if w < &BigRational::zero() || wbar < &BigRational::zero() {
                return Err(Error::InvalidInput("weights must be non-negative".into()));
            }
        }
        if let Some(cc) = &self.cardinality {
            check_card_expr(cc)?;
        }
        Ok(())
    }

    pub fn n(&self) -> u32 {
        self.domain.size
    }
}

pub fn check_card_expr(f: &Formula) -> Result<()> {
    match f {
        Formula::True | Formula::False | Formula::Card { .. } => Ok(()),
        Formula::Not(a) => check_card_expr(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            check_card_expr(a)?;
            check_card_expr(b)
        }
        _ => Err(Error::InvalidInput(
            "cardinality constraint may only combine cardinality atoms".into(),
        )),
    }
}

/// A ground atom `P(e1, ..)` with 1-based domain elements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub pred: PredId,
    pub args: SmallVec<[u32; 2]>,
}

impl GroundAtom {
    pub fn nullary(pred: PredId) -> GroundAtom {
        GroundAtom { pred, args: SmallVec::new() }
    }

    pub fn unary(pred: PredId, e: u32) -> GroundAtom {
        GroundAtom { pred, args: SmallVec::from_slice(&[e]) }
    }

    pub fn binary(pred: PredId, a: u32, b: u32) -> GroundAtom {
        GroundAtom { pred, args: SmallVec::from_slice(&[a, b]) }
    }

    pub fn render(&self, vocab: &Vocabulary) -> String {
        let mut s = format!("{}(", vocab.name(self.pred));
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&a.to_string());
        }
        s.push(')');
        s
    }
}

/// Total interpretation over a vocabulary and domain, stored as the set of
/// true ground atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub vocab: Arc<Vocabulary>,
    pub n: u32,
    pub atoms: BTreeSet<GroundAtom>,
}

impl Model {
    pub fn new(vocab: Arc<Vocabulary>, n: u32) -> Model {
        Model { vocab, n, atoms: BTreeSet::new() }
    }

    pub fn holds(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    /// Number of true ground literals of `pred`.
    pub fn count_true(&self, pred: PredId) -> u64 {
        self.atoms.iter().filter(|a| a.pred == pred).count() as u64
    }

    /// Restriction to the predicates of `target` (matched by name).
    /// Predicates of `target` must be a subset of this model's vocabulary.
    pub fn project(&self, target: &Arc<Vocabulary>) -> Model {
        let mut atoms = BTreeSet::new();
        for atom in &self.atoms {
            let name = self.vocab.name(atom.pred);
            if let Some(id) = target.lookup(name) {
                atoms.insert(GroundAtom { pred: id, args: atom.args.clone() });
            }
        }
        Model { vocab: target.clone(), n: self.n, atoms }
    }

    /// Position of this model in the lexicographic enumeration of all
    /// interpretations: ground atoms sorted by (predicate name, args) are
    /// read as a bitstring, most significant bit first.
    pub fn lex_index(&self) -> BigUint {
        let mut idx = BigUint::zero();
        for atom in self.vocab.ground_atoms_by_name(self.n) {
            idx <<= 1u8;
            if self.atoms.contains(&atom) {
                idx += 1u8;
            }
        }
        idx
    }

    /// Canonical single-line rendering: true atoms sorted by predicate name
    /// then arguments, comma-separated.
    pub fn render(&self) -> String {
        let mut items: Vec<(String, &GroundAtom)> = self
            .atoms
            .iter()
            .map(|a| (self.vocab.name(a.pred).to_string(), a))
            .collect();
        items.sort_by(|(na, a), (nb, b)| na.cmp(nb).then_with(|| a.args.cmp(&b.args)));
        items
            .iter()
            .map(|(_, a)| a.render(&self.vocab))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Quantifier-free ground formula over ground atoms. `Card` atoms stay
/// symbolic and are checked against the model at evaluation time.
#[derive(Debug, Clone)]
pub enum GroundFormula {
    Bool(bool),
    Lit(GroundAtom, bool),
    And(Vec<GroundFormula>),
    Or(Vec<GroundFormula>),
    Card { pred: PredId, op: CmpOp, q: i64 },
}

impl GroundFormula {
    pub fn size(&self) -> usize {
        match self {
            GroundFormula::Bool(_) | GroundFormula::Lit(..) | GroundFormula::Card { .. } => 1,
            GroundFormula::And(v) | GroundFormula::Or(v) => {
                1 + v.iter().map(|g| g.size()).sum::<usize>()
            }
        }
    }
}

/// Replaces quantifiers by finite Boolean combinations over `{1, .., n}`.
///
/// Counting quantifiers expand by subset choice: `at least k` becomes a
/// disjunction over k-subsets of witnesses, `exactly k` additionally negates
/// the complement, `at most k` is the negation of `at least k+1`.
pub fn ground(formula: &Formula, n: u32) -> Result<GroundFormula> {
    let mut env: BTreeMap<Var, u32> = BTreeMap::new();
    ground_rec(formula, n, &mut env, true)
}

fn ground_rec(
    formula: &Formula,
    n: u32,
    env: &mut BTreeMap<Var, u32>,
    positive: bool,
) -> Result<GroundFormula> {
    Ok(match formula {
        Formula::True => GroundFormula::Bool(positive),
        Formula::False => GroundFormula::Bool(!positive),
        Formula::Card { pred, op, q } => {
            if positive {
                GroundFormula::Card { pred: *pred, op: *op, q: *q }
            } else {
                negate_card(*pred, *op, *q)
            }
        }
        Formula::Atom { pred, args } => {
            let mut ground_args: SmallVec<[u32; 2]> = SmallVec::new();
            for v in args {
                let e = env.get(v).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("unbound variable `{}` while grounding", v.name()))
                })?;
                ground_args.push(e);
            }
            GroundFormula::Lit(GroundAtom { pred: *pred, args: ground_args }, positive)
        }
        Formula::Not(a) => ground_rec(a, n, env, !positive)?,
        Formula::And(a, b) => {
            let ga = ground_rec(a, n, env, positive)?;
            let gb = ground_rec(b, n, env, positive)?;
            if positive {
                GroundFormula::And(vec![ga, gb])
            } else {
                GroundFormula::Or(vec![ga, gb])
            }
        }
        Formula::Or(a, b) => {
            let ga = ground_rec(a, n, env, positive)?;
            let gb = ground_rec(b, n, env, positive)?;
            if positive {
                GroundFormula::Or(vec![ga, gb])
            } else {
                GroundFormula::And(vec![ga, gb])
            }
        }
        Formula::Implies(a, b) => {
            let ga = ground_rec(a, n, env, !positive)?;
            let gb = ground_rec(b, n, env, positive)?;
            if positive {
                GroundFormula::Or(vec![ga, gb])
            } else {
                GroundFormula::And(vec![ga, gb])
            }
        }
        Formula::Iff(a, b) => {
            // (a & b) | (~a & ~b), negated: (a & ~b) | (~a & b).
            let pp = GroundFormula::And(vec![
                ground_rec(a, n, env, true)?,
                ground_rec(b, n, env, positive)?,
            ]);
            let nn = GroundFormula::And(vec![
                ground_rec(a, n, env, false)?,
                ground_rec(b, n, env, !positive)?,
            ]);
            GroundFormula::Or(vec![pp, nn])
        }
        Formula::Forall(v, a) => {
            let mut parts = Vec::with_capacity(n as usize);
            for e in 1..=n {
                let prev = env.insert(*v, e);
                parts.push(ground_rec(a, n, env, positive)?);
                restore(env, *v, prev);
            }
            if positive {
                GroundFormula::And(parts)
            } else {
                GroundFormula::Or(parts)
            }
        }
        Formula::Exists(v, a) => {
            let mut parts = Vec::with_capacity(n as usize);
            for e in 1..=n {
                let prev = env.insert(*v, e);
                parts.push(ground_rec(a, n, env, positive)?);
                restore(env, *v, prev);
            }
            if positive {
                GroundFormula::Or(parts)
            } else {
                GroundFormula::And(parts)
            }
        }
        Formula::Count { cmp, k, var, body } => {
            let expanded = ground_count(*cmp, *k, *var, body, n, env)?;
            if positive {
                expanded
            } else {
                negate_ground(expanded)
            }
        }
    })
}

fn restore(env: &mut BTreeMap<Var, u32>, v: Var, prev: Option<u32>) {
    match prev {
        Some(e) => {
            env.insert(v, e);
        }
        None => {
            env.remove(&v);
        }
    }
}

fn ground_count(
    cmp: CountCmp,
    k: u32,
    var: Var,
    body: &Formula,
    n: u32,
    env: &mut BTreeMap<Var, u32>,
) -> Result<GroundFormula> {
    match cmp {
        CountCmp::Ge => {
            if k == 0 {
                return Ok(GroundFormula::Bool(true));
            }
            if k > n {
                return Ok(GroundFormula::Bool(false));
            }
            let mut cases = Vec::new();
            for subset in k_subsets(n, k) {
                let mut conj = Vec::with_capacity(k as usize);
                for &e in &subset {
                    let prev = env.insert(var, e);
                    conj.push(ground_rec(body, n, env, true)?);
                    restore(env, var, prev);
                }
                cases.push(GroundFormula::And(conj));
            }
            Ok(GroundFormula::Or(cases))
        }
        CountCmp::Le => {
            let ge = ground_count(CountCmp::Ge, k + 1, var, body, n, env)?;
            Ok(negate_ground(ge))
        }
        CountCmp::Eq => {
            if k > n {
                return Ok(GroundFormula::Bool(false));
            }
            let mut cases = Vec::new();
            for subset in k_subsets(n, k) {
                let mut conj = Vec::with_capacity(n as usize);
                for e in 1..=n {
                    let inside = subset.contains(&e);
                    let prev = env.insert(var, e);
                    conj.push(ground_rec(body, n, env, inside)?);
                    restore(env, var, prev);
                }
                cases.push(GroundFormula::And(conj));
            }
            Ok(GroundFormula::Or(cases))
        }
    }
}

/// All k-subsets of `{1, .., n}` in lexicographic order.
fn k_subsets(n: u32, k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k as usize);
    fn rec(start: u32, n: u32, k: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 0 {
            out.push(current.clone());
            return;
        }
        for e in start..=n.saturating_sub(k - 1) {
            current.push(e);
            rec(e + 1, n, k - 1, current, out);
            current.pop();
        }
    }
    rec(1, n, k, &mut current, &mut out);
    out
}

fn negate_ground(g: GroundFormula) -> GroundFormula {
    match g {
        GroundFormula::Bool(b) => GroundFormula::Bool(!b),
        GroundFormula::Lit(a, pos) => GroundFormula::Lit(a, !pos),
        GroundFormula::And(v) => GroundFormula::Or(v.into_iter().map(negate_ground).collect()),
        GroundFormula::Or(v) => GroundFormula::And(v.into_iter().map(negate_ground).collect()),
        GroundFormula::Card { pred, op, q } => negate_card(pred, op, q),
    }
}

fn negate_card(pred: PredId, op: CmpOp, q: i64) -> GroundFormula {
    let (op, q) = match op {
        CmpOp::Eq => {
            // ~(|P| = q) has no single comparison form; encode as < q or > q.
            return GroundFormula::Or(vec![
                GroundFormula::Card { pred, op: CmpOp::Lt, q },
                GroundFormula::Card { pred, op: CmpOp::Gt, q },
            ]);
        }
        CmpOp::Le => (CmpOp::Gt, q),
        CmpOp::Ge => (CmpOp::Lt, q),
        CmpOp::Lt => (CmpOp::Ge, q),
        CmpOp::Gt => (CmpOp::Le, q),
    };
    GroundFormula::Card { pred, op, q }
}

/// Evaluates a ground formula against a total model.
pub fn evaluate(model: &Model, formula: &GroundFormula) -> Result<bool> {
    Ok(match formula {
        GroundFormula::Bool(b) => *b,
        GroundFormula::Lit(atom, pos) => {
            if atom.pred.0 >= model.vocab.len() {
                return Err(Error::UnknownPredicate(format!("predicate id {}", atom.pred.0)));
            }
            model.holds(atom) == *pos
        }
        GroundFormula::And(parts) => {
            for p in parts {
                if !evaluate(model, p)? {
                    return Ok(false);
                }
            }
            true
        }
        GroundFormula::Or(parts) => {
            for p in parts {
                if evaluate(model, p)? {
                    return Ok(true);
                }
            }
            false
        }
        GroundFormula::Card { pred, op, q } => op.holds(model.count_true(*pred) as i64, *q),
    })
}

/// Direct Tarskian satisfaction: quantifiers range over `{1, .., model.n}`.
/// Independent of [`ground`]; the two are cross-checked in tests.
pub fn satisfies(model: &Model, sentence: &Formula) -> Result<bool> {
    let mut env = BTreeMap::new();
    sat_rec(model, sentence, &mut env)
}

fn sat_rec(model: &Model, f: &Formula, env: &mut BTreeMap<Var, u32>) -> Result<bool> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Card { pred, op, q } => op.holds(model.count_true(*pred) as i64, *q),
        Formula::Atom { pred, args } => {
            let mut ground_args: SmallVec<[u32; 2]> = SmallVec::new();
            for v in args {
                let e = env.get(v).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("unbound variable `{}`", v.name()))
                })?;
                ground_args.push(e);
            }
            model.holds(&GroundAtom { pred: *pred, args: ground_args })
        }
        Formula::Not(a) => !sat_rec(model, a, env)?,
        Formula::And(a, b) => sat_rec(model, a, env)? && sat_rec(model, b, env)?,
        Formula::Or(a, b) => sat_rec(model, a, env)? || sat_rec(model, b, env)?,
        Formula::Implies(a, b) => !sat_rec(model, a, env)? || sat_rec(model, b, env)?,
        Formula::Iff(a, b) => sat_rec(model, a, env)? == sat_rec(model, b, env)?,
        Formula::Forall(v, a) => {
            let mut all = true;
            for e in 1..=model.n {
                let prev = env.insert(*v, e);
                let ok = sat_rec(model, a, env)?;
                restore(env, *v, prev);
                if !ok {
                    all = false;
                    break;
                }
            }
            all
        }
        Formula::Exists(v, a) => {
            let mut any = false;
            for e in 1..=model.n {
                let prev = env.insert(*v, e);
                let ok = sat_rec(model, a, env)?;
                restore(env, *v, prev);
                if ok {
                    any = true;
                    break;
                }
            }
            any
        }
        Formula::Count { cmp, k, var, body } => {
            let mut count = 0u32;
            for e in 1..=model.n {
                let prev = env.insert(*var, e);
                let ok = sat_rec(model, body, env)?;
                restore(env, *var, prev);
                if ok {
                    count += 1;
                }
            }
            match cmp {
                CountCmp::Eq => count == *k,
                CountCmp::Le => count <= *k,
                CountCmp::Ge => count >= *k,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_r() -> (Arc<Vocabulary>, PredId) {
        let mut v = Vocabulary::new();
        let r = v.declare("R", 2).unwrap();
        (Arc::new(v), r)
    }

    #[test]
    fn declare_rejects_arity_conflicts() {
        let mut v = Vocabulary::new();
        v.declare("P", 1).unwrap();
        let err = v.declare("P", 2).unwrap_err();
        assert!(matches!(err, Error::ArityMismatch { .. }));
    }

    #[test]
    fn ground_forall_exists_shapes() {
        let (vocab, r) = vocab_r();
        let f = Formula::forall(
            Var::X,
            Formula::exists(Var::Y, Formula::atom(r, &[Var::X, Var::Y])),
        );
        let g = ground(&f, 2).unwrap();
        // forall over 2 elements of exists over 2 elements: And of two Ors.
        match g {
            GroundFormula::And(parts) => {
                assert_eq!(parts.len(), 2);
                assert!(matches!(parts[0], GroundFormula::Or(_)));
            }
            other => panic!("expected conjunction, got {other:?}"),
        }
        let _ = vocab;
    }

    #[test]
    fn ground_exactly_one_expands_to_subset_cases() {
        let mut v = Vocabulary::new();
        let f_pred = v.declare("f", 2).unwrap();
        let sentence = Formula::forall(
            Var::X,
            Formula::Count {
                cmp: CountCmp::Eq,
                k: 1,
                var: Var::Y,
                body: Box::new(Formula::atom(f_pred, &[Var::X, Var::Y])),
            },
        );
        let g = ground(&sentence, 2).unwrap();
        // Outer And over 2 elements; each an Or over 2 one-element subsets,
        // each subset case an And over positive/negative literals.
        match &g {
            GroundFormula::And(parts) => {
                assert_eq!(parts.len(), 2);
                match &parts[0] {
                    GroundFormula::Or(cases) => {
                        assert_eq!(cases.len(), 2);
                        match &cases[0] {
                            GroundFormula::And(lits) => assert_eq!(lits.len(), 2),
                            other => panic!("expected literal conjunction, got {other:?}"),
                        }
                    }
                    other => panic!("expected subset disjunction, got {other:?}"),
                }
            }
            other => panic!("expected conjunction, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_and_satisfies_agree_on_small_domains() {
        // Cross-check ground+evaluate against the direct satisfaction
        // recursion on every model of a small vocabulary.
        let mut v = Vocabulary::new();
        let e = v.declare("E", 2).unwrap();
        let p = v.declare("P", 1).unwrap();
        let vocab = Arc::new(v);
        let sentences = vec![
            Formula::forall(
                Var::X,
                Formula::exists(Var::Y, Formula::atom(e, &[Var::X, Var::Y])),
            ),
            Formula::forall(
                Var::X,
                Formula::forall(
                    Var::Y,
                    Formula::atom(e, &[Var::X, Var::Y])
                        .implies(Formula::atom(e, &[Var::Y, Var::X])),
                ),
            ),
            Formula::exists(Var::X, Formula::atom(p, &[Var::X]))
                .iff(Formula::forall(Var::X, Formula::atom(e, &[Var::X, Var::X]))),
            Formula::forall(
                Var::X,
                Formula::Count {
                    cmp: CountCmp::Le,
                    k: 1,
                    var: Var::Y,
                    body: Box::new(Formula::atom(e, &[Var::X, Var::Y])),
                },
            ),
        ];
        for n in 1..=2u32 {
            let atoms = vocab.ground_atoms_by_name(n);
            for mask in 0u32..(1 << atoms.len()) {
                let mut m = Model::new(vocab.clone(), n);
                for (i, a) in atoms.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        m.atoms.insert(a.clone());
                    }
                }
                for s in &sentences {
                    let via_ground = evaluate(&m, &ground(s, n).unwrap()).unwrap();
                    let direct = satisfies(&m, s).unwrap();
                    assert_eq!(via_ground, direct, "mismatch on {s:?} model {mask:b}");
                }
            }
        }
    }

    #[test]
    fn lex_index_orders_by_name_then_args() {
        let mut v = Vocabulary::new();
        // Declaration order differs from name order on purpose.
        let q = v.declare("Q", 1).unwrap();
        let a = v.declare("A", 1).unwrap();
        let vocab = Arc::new(v);
        let mut m = Model::new(vocab.clone(), 2);
        // Atom order by name: A(1), A(2), Q(1), Q(2). A(1) is the most
        // significant bit.
        m.atoms.insert(GroundAtom::unary(a, 1));
        assert_eq!(m.lex_index(), BigUint::from(8u32));
        m.atoms.insert(GroundAtom::unary(q, 2));
        assert_eq!(m.lex_index(), BigUint::from(9u32));
    }

    #[test]
    fn model_render_sorts_by_name() {
        let mut v = Vocabulary::new();
        let e = v.declare("E", 2).unwrap();
        let b = v.declare("B", 1).unwrap();
        let vocab = Arc::new(v);
        let mut m = Model::new(vocab, 2);
        m.atoms.insert(GroundAtom::binary(e, 2, 1));
        m.atoms.insert(GroundAtom::binary(e, 1, 2));
        m.atoms.insert(GroundAtom::unary(b, 2));
        assert_eq!(m.render(), "B(2),E(1,2),E(2,1)");
    }

    #[test]
    fn simplify_folds_constants() {
        let f = Formula::True.and(Formula::False.or(Formula::True));
        assert_eq!(f.simplify(), Formula::True);
        let g = Formula::False.implies(Formula::False);
        assert_eq!(g.simplify(), Formula::True);
        let (_, r) = vocab_r();
        let h = Formula::atom(r, &[Var::X, Var::Y]).iff(Formula::False);
        assert_eq!(h.simplify(), Formula::atom(r, &[Var::X, Var::Y]).not());
    }

    #[test]
    fn count_quantifier_direct_semantics() {
        let (vocab, r) = vocab_r();
        let mut m = Model::new(vocab, 3);
        m.atoms.insert(GroundAtom::binary(r, 1, 2));
        m.atoms.insert(GroundAtom::binary(r, 1, 3));
        let exactly = |k| {
            Formula::forall(
                Var::X,
                Formula::Count {
                    cmp: CountCmp::Eq,
                    k,
                    var: Var::Y,
                    body: Box::new(Formula::atom(r, &[Var::X, Var::Y])),
                },
            )
        };
        // Element 1 has two successors but 2 and 3 have none.
        assert!(!satisfies(&m, &exactly(2)).unwrap());
        let some_two = Formula::exists(
            Var::X,
            Formula::Count {
                cmp: CountCmp::Ge,
                k: 2,
                var: Var::Y,
                body: Box::new(Formula::atom(r, &[Var::X, Var::Y])),
            },
        );
        assert!(satisfies(&m, &some_two).unwrap());
    }
}
