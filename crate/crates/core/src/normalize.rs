//! Reductions into the engine's core form.
//!
//! The counting engine works on sentences of the shape
//! `forall x forall y: psi(x,y)` plus existential conjuncts
//! `forall x exists y: R_k(x,y)` and a cardinality constraint. `normalize`
//! rewrites any supported problem into that shape:
//!
//! * closed counting subformulas become cardinality atoms over a
//!   definitional unary predicate,
//! * `exists[<=k]`/`exists[>=k]` are expanded into exact counting,
//! * `forall x exists[=k] y` becomes k disjoint total witness relations
//!   plus `|P| = k*n`, overcounting each model `(k!)^n` times,
//! * remaining nested quantifiers are flattened Scott-style with fresh
//!   definitional predicates,
//! * existential conjunct bodies are replaced by fresh witness predicates.
//!
//! Every step keeps a constant per-model multiplicity, so
//! `wfomc(reduced) = multiplicity * wfomc(original)` and a weight-proportional
//! sample of the reduced problem projects to a weight-proportional sample of
//! the original one.

use crate::logic::{
    CmpOp, CountCmp, Formula, Model, PredId, Problem, Var, Vocabulary, Weighting,
};
use crate::wfomc::CellProblem;
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed};
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

/// Result of normalizing a problem. `reduced` is an ordinary problem (for
/// oracle cross-checks), `cell` the same thing in the engine's terms.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub original: Problem,
    pub reduced: Problem,
    pub cell: CellProblem,
    /// How many reduced models map onto each original model:
    /// `wfomc(reduced) = multiplicity * wfomc(original)`.
    pub multiplicity: BigRational,
    /// Human-readable record of the rewrite stages that fired.
    pub steps: Vec<String>,
}

impl Reduction {
    /// Maps a model of the reduced problem back to the original vocabulary.
    pub fn back_project(&self, model: &Model) -> Model {
        model.project(&self.original.vocab)
    }
}

pub fn normalize(problem: &Problem) -> Result<Reduction> {
    problem.validate()?;
    let mut nz = Normalizer {
        vocab: (*problem.vocab).clone(),
        n: problem.n(),
        psi: Vec::new(),
        existential_bodies: Vec::new(),
        cc_parts: problem.cardinality.iter().cloned().collect(),
        multiplicity: BigRational::one(),
        steps: Vec::new(),
        unary_defs: HashMap::new(),
        next_fresh: 0,
    };
    nz.run(problem.sentence.clone())?;
    nz.finish(problem)
}

struct Normalizer {
    vocab: Vocabulary,
    n: u32,
    /// Quantifier-free matrix conjuncts over (x, y).
    psi: Vec<Formula>,
    /// Bodies of `forall x exists y` conjuncts, before witness extraction.
    existential_bodies: Vec<Formula>,
    cc_parts: Vec<Formula>,
    multiplicity: BigRational,
    steps: Vec<String>,
    /// Cache for closed-counting definitions, so `exists[=0|=1|..] x: phi`
    /// over the same body shares one unary predicate.
    unary_defs: HashMap<Formula, PredId>,
    next_fresh: usize,
}

impl Normalizer {
    fn fresh(&mut self, tag: &str, arity: usize) -> Result<PredId> {
        let name = format!("__{tag}{}", self.next_fresh);
        self.next_fresh += 1;
        self.vocab.declare(&name, arity)
    }

    fn note(&mut self, step: &str) {
        if self.steps.iter().all(|s| s != step) {
            self.steps.push(step.to_string());
        }
    }

    fn run(&mut self, sentence: Formula) -> Result<()> {
        let mut work: VecDeque<Formula> = VecDeque::new();
        work.push_back(sentence);
        while let Some(raw) = work.pop_front() {
            let c = strip(&raw);
            match c {
                Formula::True => continue,
                Formula::False => {
                    self.psi = vec![Formula::False];
                    return Ok(());
                }
                _ => {}
            }
            if let Formula::And(a, b) = c {
                work.push_front(*b);
                work.push_front(*a);
                continue;
            }
            if crate::logic::check_card_expr(&c).is_ok() {
                self.cc_parts.push(c);
                continue;
            }
            if c.has_card_atom() {
                return Err(Error::UnsupportedFragment(
                    "cardinality atoms may only appear as standalone conjuncts".into(),
                ));
            }
            if c.has_counting() {
                if let Some(card) = self.closed_counting(&c, &mut work)? {
                    self.note("closed counting -> cardinality constraint");
                    self.cc_parts.push(card);
                    continue;
                }
                let expanded = strip(&expand_counting(&c, self.n));
                if expanded != c {
                    self.note("counting expansion");
                    work.push_front(expanded);
                    continue;
                }
                self.exact_counting(&c, &mut work)?;
                continue;
            }
            self.scott(c, &mut work)?;
        }
        Ok(())
    }

    /// `exists[cmp k] v: phi(v)` subformulas with no other free variable map
    /// to `|U| cmp k` over a definitional unary `U`. Succeeds only when the
    /// whole conjunct is a Boolean combination of such subformulas.
    fn closed_counting(
        &mut self,
        c: &Formula,
        work: &mut VecDeque<Formula>,
    ) -> Result<Option<Formula>> {
        let mut defs = Vec::new();
        let mapped = self.map_closed_counts(c, &mut defs)?;
        match mapped {
            Some(expr) if crate::logic::check_card_expr(&expr).is_ok() => {
                work.extend(defs);
                Ok(Some(expr))
            }
            _ => Ok(None),
        }
    }

    /// Replaces every closed counting node by a cardinality atom; returns
    /// None as soon as a counting node with two free variables shows up.
    fn map_closed_counts(
        &mut self,
        f: &Formula,
        defs: &mut Vec<Formula>,
    ) -> Result<Option<Formula>> {
        match f {
            Formula::Count { cmp, k, var, body } => {
                if !body.free_vars().iter().all(|v| v == var) {
                    return Ok(None);
                }
                let pred = match body.as_ref() {
                    Formula::Atom { pred, args } if args.as_slice() == [*var] => *pred,
                    _ => match self.unary_defs.get(body.as_ref()) {
                        Some(p) => *p,
                        None => {
                            let p = self.fresh("U", 1)?;
                            self.unary_defs.insert((**body).clone(), p);
                            defs.push(Formula::forall(
                                *var,
                                Formula::atom(p, &[*var]).iff((**body).clone()),
                            ));
                            p
                        }
                    },
                };
                let op = match cmp {
                    CountCmp::Eq => CmpOp::Eq,
                    CountCmp::Le => CmpOp::Le,
                    CountCmp::Ge => CmpOp::Ge,
                };
                Ok(Some(Formula::Card { pred, op, q: i64::from(*k) }))
            }
            Formula::Not(a) => Ok(self.map_closed_counts(a, defs)?.map(Formula::not)),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                let (Some(na), Some(nb)) = (
                    self.map_closed_counts(a, defs)?,
                    self.map_closed_counts(b, defs)?,
                ) else {
                    return Ok(None);
                };
                Ok(Some(match f {
                    Formula::And(..) => na.and(nb),
                    Formula::Or(..) => na.or(nb),
                    Formula::Implies(..) => na.implies(nb),
                    _ => na.iff(nb),
                }))
            }
            other => Ok(Some(other.clone())),
        }
    }

    /// `forall x exists[=k] y: phi(x,y)` becomes k pairwise-disjoint total
    /// witness relations covering a definitional copy `P` of `phi`, plus
    /// `|P| = k*n`. Every original model gains `(k!)^n` witness labelings.
    fn exact_counting(&mut self, c: &Formula, work: &mut VecDeque<Formula>) -> Result<()> {
        let unsupported = || {
            Error::UnsupportedFragment(
                "counting quantifier in this position is beyond the implemented \
                 fragment (general two-variable counting sampling is out of scope)"
                    .into(),
            )
        };
        let Formula::Forall(v, inner) = c else { return Err(unsupported()) };
        let Formula::Count { cmp: CountCmp::Eq, k, var, body } = inner.as_ref() else {
            return Err(unsupported());
        };
        if *var != v.other() || body.has_counting() {
            return Err(unsupported());
        }
        debug_assert!(*k >= 1 && *k <= self.n, "expansion bounds exact counts");
        let oriented = if *v == Var::Y { body.swap_vars() } else { (**body).clone() };
        let xy = [Var::X, Var::Y];
        let p = match &oriented {
            Formula::Atom { pred, args } if args.as_slice() == xy => *pred,
            _ => {
                let p = self.fresh("P", 2)?;
                work.push_back(Formula::forall(
                    Var::X,
                    Formula::forall(Var::Y, Formula::atom(p, &xy).iff(oriented.clone())),
                ));
                p
            }
        };
        let total = i64::from(*k)
            .checked_mul(i64::from(self.n))
            .ok_or_else(|| Error::CapExceeded("counting bound overflows".into()))?;
        self.cc_parts.push(Formula::Card { pred: p, op: CmpOp::Eq, q: total });
        if *k == 1 {
            work.push_back(Formula::forall(Var::X, Formula::exists(Var::Y, Formula::atom(p, &xy))));
            self.note("exact counting -> cardinality constraint");
            return Ok(());
        }
        let rs: Vec<PredId> = (0..*k).map(|_| self.fresh("R", 2)).collect::<Result<_>>()?;
        let cover = Formula::atom(p, &xy).iff(Formula::or_all(
            rs.iter().map(|r| Formula::atom(*r, &xy)).collect(),
        ));
        work.push_back(Formula::forall(Var::X, Formula::forall(Var::Y, cover)));
        for (i, r) in rs.iter().enumerate() {
            work.push_back(Formula::forall(
                Var::X,
                Formula::exists(Var::Y, Formula::atom(*r, &xy)),
            ));
            for s in &rs[i + 1..] {
                work.push_back(Formula::forall(
                    Var::X,
                    Formula::forall(
                        Var::Y,
                        Formula::atom(*r, &xy).and(Formula::atom(*s, &xy)).not(),
                    ),
                ));
            }
        }
        let fact: BigInt = (1..=i64::from(*k)).map(BigInt::from).product();
        self.multiplicity *= BigRational::from(num::pow::pow(fact, self.n as usize));
        self.note("exact counting -> witness partition");
        Ok(())
    }

    /// Scott patterns for a counting-free conjunct; anything deeper gets an
    /// innermost quantified subformula replaced by a definitional predicate.
    fn scott(&mut self, c: Formula, work: &mut VecDeque<Formula>) -> Result<()> {
        if c.is_quantifier_free() {
            // Closed and quantifier-free, so it only has nullary atoms.
            self.psi.push(c);
            return Ok(());
        }
        match &c {
            Formula::Forall(v, body) => match body.as_ref() {
                qf if qf.is_quantifier_free() => {
                    self.psi.push(orient(qf, *v == Var::Y));
                    return Ok(());
                }
                Formula::Forall(u, inner) if *u == v.other() => {
                    if inner.is_quantifier_free() {
                        self.psi.push(orient(inner, *v == Var::Y));
                        return Ok(());
                    }
                    // Distribute over conjunctions before atomizing.
                    if let Formula::And(a, b) = inner.as_ref() {
                        for part in [a, b] {
                            work.push_front(Formula::forall(
                                *v,
                                Formula::forall(*u, (**part).clone()),
                            ));
                        }
                        return Ok(());
                    }
                }
                Formula::Exists(u, inner)
                    if *u == v.other() && inner.is_quantifier_free() =>
                {
                    self.existential_bodies.push(orient(inner, *v == Var::Y));
                    return Ok(());
                }
                Formula::And(a, b) => {
                    for part in [a, b] {
                        work.push_front(Formula::forall(*v, (**part).clone()));
                    }
                    return Ok(());
                }
                _ => {}
            },
            Formula::Exists(v, body) if body.is_quantifier_free() => {
                // A closed existential conjunct: any element may witness it,
                // so it reads as `forall x exists y` with x vacuous.
                self.existential_bodies.push(orient(body, *v == Var::X));
                return Ok(());
            }
            _ => {}
        }
        let (rewritten, axioms) = self.atomize_innermost(&c)?;
        self.note("scott atomization");
        work.push_front(rewritten);
        work.extend(axioms);
        Ok(())
    }

    /// Replaces one innermost quantified subformula `Q v: qf` by a fresh
    /// definitional atom over its free variable (or a nullary atom), and
    /// returns the defining axioms. `A <-> Qv qf` splits into a universal
    /// and an existential-witness axiom, both already in Scott shape.
    fn atomize_innermost(&mut self, c: &Formula) -> Result<(Formula, Vec<Formula>)> {
        let mut axioms = None;
        let rewritten = self.replace_inner(c, &mut axioms)?;
        let axioms = axioms.ok_or_else(|| {
            Error::Internal("atomization found no quantifier to eliminate".into())
        })?;
        Ok((rewritten, axioms))
    }

    fn replace_inner(
        &mut self,
        f: &Formula,
        done: &mut Option<Vec<Formula>>,
    ) -> Result<Formula> {
        if done.is_some() {
            return Ok(f.clone());
        }
        match f {
            Formula::Forall(v, body) | Formula::Exists(v, body)
                if body.is_quantifier_free() =>
            {
                let universal = matches!(f, Formula::Forall(..));
                let qf = (**body).clone();
                let free: Vec<Var> = f.free_vars().into_iter().collect();
                debug_assert!(free.len() <= 1);
                let (atom, close): (Formula, Box<dyn Fn(Formula) -> Formula>) =
                    match free.first() {
                        Some(&u) => {
                            let a = self.fresh("A", 1)?;
                            (Formula::atom(a, &[u]), Box::new(move |g| Formula::forall(u, g)))
                        }
                        None => {
                            let a = self.fresh("A", 0)?;
                            (Formula::atom(a, &[]), Box::new(|g| g))
                        }
                    };
                let (fwd, bwd) = if universal {
                    (
                        close(Formula::forall(*v, atom.clone().implies(qf.clone()))),
                        close(Formula::exists(*v, qf.implies(atom.clone()))),
                    )
                } else {
                    (
                        close(Formula::exists(*v, atom.clone().implies(qf.clone()))),
                        close(Formula::forall(*v, qf.implies(atom.clone()))),
                    )
                };
                *done = Some(vec![fwd, bwd]);
                Ok(atom)
            }
            Formula::Forall(v, body) => {
                Ok(Formula::forall(*v, self.replace_inner(body, done)?))
            }
            Formula::Exists(v, body) => {
                Ok(Formula::exists(*v, self.replace_inner(body, done)?))
            }
            Formula::Not(a) => Ok(self.replace_inner(a, done)?.not()),
            Formula::And(a, b) => {
                let na = self.replace_inner(a, done)?;
                Ok(na.and(self.replace_inner(b, done)?))
            }
            Formula::Or(a, b) => {
                let na = self.replace_inner(a, done)?;
                Ok(na.or(self.replace_inner(b, done)?))
            }
            Formula::Implies(a, b) => {
                let na = self.replace_inner(a, done)?;
                Ok(na.implies(self.replace_inner(b, done)?))
            }
            Formula::Iff(a, b) => {
                let na = self.replace_inner(a, done)?;
                Ok(na.iff(self.replace_inner(b, done)?))
            }
            Formula::Count { .. } => {
                Err(Error::Internal("counting survived into scott flattening".into()))
            }
            leaf => Ok(leaf.clone()),
        }
    }

    fn finish(mut self, problem: &Problem) -> Result<Reduction> {
        // Existential bodies become witness predicates: the engine's
        // obligation k is `forall x exists y: R_k(x,y)`.
        let mut registry: Vec<PredId> = Vec::new();
        let mut bodies = Vec::new();
        for chi in std::mem::take(&mut self.existential_bodies) {
            if bodies.contains(&chi) {
                continue;
            }
            bodies.push(chi.clone());
            match &chi {
                Formula::Atom { pred, args } if args.as_slice() == [Var::X, Var::Y] => {
                    if !registry.contains(pred) {
                        registry.push(*pred);
                    }
                }
                _ => {
                    let r = self.fresh("R", 2)?;
                    self.note("existential witness extraction");
                    self.psi.push(Formula::atom(r, &[Var::X, Var::Y]).iff(chi));
                    registry.push(r);
                }
            }
        }
        if registry.len() > 32 {
            return Err(Error::CapExceeded(format!(
                "{} existential conjuncts exceed the 32 obligation slots",
                registry.len()
            )));
        }

        let matrix = Formula::and_all(std::mem::take(&mut self.psi)).simplify();
        let cardinality = match Formula::and_all(self.cc_parts.clone()).simplify() {
            Formula::True => None,
            cc => Some(cc),
        };
        let vocab = Arc::new(self.vocab);
        let mut weighting = problem.weighting.clone();
        weighting.pad_to(vocab.len());

        let mut conjuncts = Vec::new();
        if matrix != Formula::True {
            conjuncts.push(Formula::forall(Var::X, Formula::forall(Var::Y, matrix.clone())));
        }
        for r in &registry {
            conjuncts.push(Formula::forall(
                Var::X,
                Formula::exists(Var::Y, Formula::atom(*r, &[Var::X, Var::Y])),
            ));
        }
        let reduced = Problem {
            vocab: vocab.clone(),
            sentence: Formula::and_all(conjuncts),
            domain: problem.domain,
            weighting: weighting.clone(),
            cardinality: cardinality.clone(),
        };
        reduced.validate()?;

        let tracked = cardinality
            .as_ref()
            .map(card_predicates)
            .unwrap_or_default();
        let cell = CellProblem { vocab, matrix, registry, weighting, tracked };
        Ok(Reduction {
            original: problem.clone(),
            reduced,
            cell,
            multiplicity: self.multiplicity,
            steps: self.steps,
        })
    }
}

/// Predicates mentioned by cardinality atoms, in first-mention order.
pub fn card_predicates(f: &Formula) -> Vec<PredId> {
    fn walk(f: &Formula, out: &mut Vec<PredId>) {
        match f {
            Formula::Card { pred, .. } => {
                if !out.contains(pred) {
                    out.push(*pred);
                }
            }
            Formula::Not(a) => walk(a, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(f, &mut out);
    out
}

/// Constant folding plus removal of vacuous quantifiers (`exists y` over a
/// body not mentioning y, legal because domains are nonempty).
fn strip(f: &Formula) -> Formula {
    fn drop_vacuous(f: &Formula) -> Formula {
        match f {
            Formula::Forall(v, a) | Formula::Exists(v, a) => {
                let a = drop_vacuous(a);
                if !a.free_vars().contains(v) {
                    return a;
                }
                match f {
                    Formula::Forall(..) => Formula::forall(*v, a),
                    _ => Formula::exists(*v, a),
                }
            }
            Formula::Not(a) => drop_vacuous(a).not(),
            Formula::And(a, b) => drop_vacuous(a).and(drop_vacuous(b)),
            Formula::Or(a, b) => drop_vacuous(a).or(drop_vacuous(b)),
            Formula::Implies(a, b) => drop_vacuous(a).implies(drop_vacuous(b)),
            Formula::Iff(a, b) => drop_vacuous(a).iff(drop_vacuous(b)),
            Formula::Count { cmp, k, var, body } => Formula::Count {
                cmp: *cmp,
                k: *k,
                var: *var,
                body: Box::new(drop_vacuous(body)),
            },
            leaf => leaf.clone(),
        }
    }
    drop_vacuous(&f.simplify()).simplify()
}

/// Swaps x and y when the conjunct was quantified y-first, so the matrix
/// and existential bodies are always written over (x, y).
fn orient(f: &Formula, swap: bool) -> Formula {
    if swap {
        f.swap_vars()
    } else {
        f.clone()
    }
}

/// Rewrites `exists[>=k]`/`exists[<=k]` counting into exact counts and
/// folds out-of-range bounds to constants.
fn expand_counting(f: &Formula, n: u32) -> Formula {
    let eq = |k: u32, var: Var, body: &Formula| -> Formula {
        if k > n {
            Formula::False
        } else if k == 0 {
            Formula::forall(var, expand_counting(body, n).not())
        } else {
            Formula::Count {
                cmp: CountCmp::Eq,
                k,
                var,
                body: Box::new(expand_counting(body, n)),
            }
        }
    };
    match f {
        Formula::Count { cmp: CountCmp::Eq, k, var, body } => eq(*k, *var, body),
        Formula::Count { cmp: CountCmp::Ge, k, var, body } => match *k {
            0 => Formula::True,
            1 => Formula::exists(*var, expand_counting(body, n)),
            k if k > n => Formula::False,
            k => Formula::or_all((0..k).map(|i| eq(i, *var, body)).collect()).not(),
        },
        Formula::Count { cmp: CountCmp::Le, k, var, body } => {
            if *k >= n {
                Formula::True
            } else {
                Formula::or_all((0..=*k).map(|i| eq(i, *var, body)).collect())
            }
        }
        Formula::Not(a) => expand_counting(a, n).not(),
        Formula::And(a, b) => expand_counting(a, n).and(expand_counting(b, n)),
        Formula::Or(a, b) => expand_counting(a, n).or(expand_counting(b, n)),
        Formula::Implies(a, b) => expand_counting(a, n).implies(expand_counting(b, n)),
        Formula::Iff(a, b) => expand_counting(a, n).iff(expand_counting(b, n)),
        Formula::Forall(v, a) => Formula::forall(*v, expand_counting(a, n)),
        Formula::Exists(v, a) => Formula::exists(*v, expand_counting(a, n)),
        leaf => leaf.clone(),
    }
}

/// Maximum relative error when rationalizing MLN rule weights: 1e-12.
pub fn default_exp_tolerance() -> BigRational {
    BigRational::new(BigInt::one(), num::pow::pow(BigInt::from(10), 12))
}

/// Turns an MLN into a weighted problem: each soft rule `(w, phi)` gets a
/// definitional predicate `xi <-> phi` weighted `(exp(w), 1)`, hard rules
/// become plain conjuncts. Rule weights enter through exp, so they are
/// rationalized to `rel_eps`; the total-variation bias this introduces is
/// bounded by (number of groundings) * rel_eps.
pub fn mln_to_wfoms(mln: &crate::textio::MlnInput) -> Result<Problem> {
    mln_to_wfoms_with(mln, &default_exp_tolerance())
}

pub fn mln_to_wfoms_with(
    mln: &crate::textio::MlnInput,
    rel_eps: &BigRational,
) -> Result<Problem> {
    let mut vocab = (*mln.vocab).clone();
    let mut conjuncts = Vec::new();
    let mut soft = Vec::new();
    let close = |f: Formula| -> Formula {
        let mut g = f;
        for v in g.free_vars().into_iter().collect::<Vec<_>>() {
            g = Formula::forall(v, g);
        }
        g
    };
    for (i, rule) in mln.rules.iter().enumerate() {
        match &rule.weight {
            None => conjuncts.push(close(rule.formula.clone())),
            Some(w) => {
                let fv: Vec<Var> = rule.formula.free_vars().into_iter().collect();
                let xi = vocab.declare(&format!("__xi{i}"), fv.len())?;
                let def = Formula::atom(xi, &fv).iff(rule.formula.clone());
                conjuncts.push(close(def));
                soft.push((xi, approx_exp(w, rel_eps)?));
            }
        }
    }
    let mut weighting = Weighting::unit(&vocab);
    for (xi, w) in soft {
        weighting.set(xi, w, BigRational::one());
    }
    let problem = Problem {
        vocab: Arc::new(vocab),
        sentence: Formula::and_all(conjuncts),
        domain: mln.domain,
        weighting,
        cardinality: None,
    };
    problem.validate()?;
    Ok(problem)
}

/// exp(w) as an exact rational within relative error `rel_eps`, with a
/// small denominator.
///
/// Argument reduction `exp(w) = exp(w/2^m)^(2^m)` brings the Taylor series
/// into fast convergence; the exact partial sum is then rounded to the
/// simplest rational in the allowed interval, which keeps denominators near
/// 1/sqrt(rel_eps) instead of the astronomic exact ones.
pub fn approx_exp(w: &BigRational, rel_eps: &BigRational) -> Result<BigRational> {
    if !rel_eps.is_positive() {
        return Err(Error::InvalidInput("exp tolerance must be positive".into()));
    }
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let two = BigRational::from(BigInt::from(2));
    let mut arg = w.clone();
    let mut m = 0usize;
    while arg.abs() > half {
        arg /= &two;
        m += 1;
    }
    // Each squaring doubles relative error; leave half the budget for the
    // final rounding step.
    let taylor_eps = rel_eps / BigRational::from(num::pow::pow(BigInt::from(2), m + 2));
    let mut sum = BigRational::one();
    let mut term = BigRational::one();
    for j in 1..=80u64 {
        term = term * &arg / BigRational::from(BigInt::from(j));
        sum += &term;
        // |arg| <= 1/2, so the tail is bounded by the last term.
        if term.abs() * &two <= sum.abs() * &taylor_eps {
            break;
        }
    }
    for _ in 0..m {
        sum = &sum * &sum;
    }
    let slack = &sum * (rel_eps / &two);
    Ok(simplest_in_interval(&(&sum - &slack), &(&sum + &slack)))
}

/// The rational with the smallest denominator in [lo, hi], 0 < lo <= hi
/// (Stern-Brocot descent).
fn simplest_in_interval(lo: &BigRational, hi: &BigRational) -> BigRational {
    assert!(lo.is_positive() && lo <= hi, "interval must be positive and ordered");
    let ceil_lo = lo.ceil();
    if ceil_lo <= *hi {
        return ceil_lo;
    }
    let floor = lo.floor();
    let rest = simplest_in_interval(
        &(BigRational::one() / (hi - &floor)),
        &(BigRational::one() / (lo - &floor)),
    );
    floor + BigRational::one() / rest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse_mln, parse_problem};
    use crate::wfomc::{brute, BruteOptions};
    use num::{ToPrimitive, Zero};

    fn lifted(problem: &Problem) -> BigRational {
        crate::wfomc::count(problem).unwrap()
    }

    fn int(v: i64) -> BigRational {
        BigRational::from(BigInt::from(v))
    }

    #[test]
    fn functions_reduce_with_multiplicity_one() {
        let p = parse_problem("domain 3\nsentence forall x exists[=1] y: f(x,y)\n").unwrap();
        let red = normalize(&p).unwrap();
        assert!(red.multiplicity.is_one());
        assert_eq!(lifted(&p), int(27));
        assert_eq!(brute::count(&p, &BruteOptions::default()).unwrap(), int(27));
    }

    #[test]
    fn permutations_via_two_exact_counts() {
        let p = parse_problem(
            "domain 4\nsentence (forall x exists[=1] y: f(x,y)) & (forall y exists[=1] x: f(x,y))\n",
        )
        .unwrap();
        assert_eq!(lifted(&p), int(24));
        assert_eq!(brute::count(&p, &BruteOptions::default()).unwrap(), int(24));
    }

    #[test]
    fn two_regular_graphs_carry_witness_multiplicity() {
        let p = parse_problem(
            "domain 5\n\
             sentence forall x exists[=2] y: E(x,y)\n\
             sentence forall x forall y: E(x,y) -> E(y,x)\n\
             sentence forall x: ~E(x,x)\n",
        )
        .unwrap();
        let red = normalize(&p).unwrap();
        assert_eq!(red.multiplicity, int(32), "(2!)^5 witness labelings");
        assert_eq!(lifted(&p), int(12));
    }

    #[test]
    fn scott_flattening_matches_the_oracle() {
        let sentences = [
            "exists x forall y: E(x,y)",
            "~(forall x exists y: E(x,y))",
            "forall x: (exists y: E(x,y)) -> P(x)",
            "(exists x: P(x)) <-> (forall y: Q(y))",
            "forall x: ((forall y: E(x,y)) | P(x))",
        ];
        for s in sentences {
            for n in 1..=3u32 {
                let p = parse_problem(&format!("domain {n}\nsentence {s}\n")).unwrap();
                let oracle = brute::count(&p, &BruteOptions::default()).unwrap();
                assert_eq!(lifted(&p), oracle, "{s} at n={n}");
            }
        }
    }

    #[test]
    fn closed_counting_becomes_a_cardinality_constraint() {
        let p = parse_problem("domain 3\nsentence exists[>=2] x: Red(x)\n").unwrap();
        let red = normalize(&p).unwrap();
        assert!(red.steps.iter().any(|s| s.contains("cardinality")));
        // Subsets of size >= 2 out of 3 elements.
        assert_eq!(lifted(&p), int(4));
        assert_eq!(brute::count(&p, &BruteOptions::default()).unwrap(), int(4));
        // Shared definitional predicate across bounds on the same body.
        let q = parse_problem(
            "domain 4\nsentence (exists[>=1] x: P(x) | Q(x)) & (exists[<=2] x: P(x) | Q(x))\n",
        )
        .unwrap();
        let oracle = brute::count(&q, &BruteOptions::default()).unwrap();
        assert_eq!(lifted(&q), oracle);
    }

    #[test]
    fn unsupported_counting_positions_are_reported() {
        let p = parse_problem("domain 3\nsentence forall x exists[<=1] y: E(x,y)\n").unwrap();
        match normalize(&p) {
            Err(Error::UnsupportedFragment(msg)) => {
                assert!(msg.contains("fragment"), "{msg}")
            }
            other => panic!("expected unsupported-fragment error, got {other:?}"),
        }
    }

    #[test]
    fn reduced_problem_is_equivalent_for_the_oracle() {
        let p = parse_problem(
            "domain 3\nsentence (forall x exists[=1] y: f(x,y)) & (forall y exists[=1] x: f(x,y))\n",
        )
        .unwrap();
        let red = normalize(&p).unwrap();
        let opts = BruteOptions::default();
        let original = brute::count(&p, &opts).unwrap();
        let reduced = brute::count(&red.reduced, &opts).unwrap();
        assert_eq!(reduced, red.multiplicity.clone() * original);
    }

    #[test]
    fn exp_rationalization_is_tight_and_small() {
        let eps = default_exp_tolerance();
        for w in ["0", "1", "-1", "5/2", "-7/3", "4"] {
            let w = crate::textio::parse_rational(w).unwrap();
            let approx = approx_exp(&w, &eps).unwrap();
            let exact = w.to_f64().unwrap().exp();
            let got = approx.to_f64().unwrap();
            assert!(
                (got - exact).abs() <= 1e-9 * exact.abs().max(1.0),
                "exp({w}) ~ {got}, want {exact}"
            );
            assert!(
                approx.denom() < &num::pow::pow(BigInt::from(10), 10),
                "denominator stays small: {}",
                approx.denom()
            );
        }
        assert!(approx_exp(&BigRational::zero(), &eps).unwrap().is_one());
    }

    #[test]
    fn simplest_rational_in_interval() {
        let r = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        assert_eq!(simplest_in_interval(&r(3330, 10000), &r(3337, 10000)), r(1, 3));
        assert_eq!(simplest_in_interval(&r(5, 2), &r(7, 2)), r(3, 1));
        assert_eq!(simplest_in_interval(&r(1, 2), &r(1, 2)), r(1, 2));
    }

    #[test]
    fn mln_reduction_counts_soft_rule_groundings() {
        let mln = parse_mln("domain 2\n1 P(x)\n").unwrap();
        let p = mln_to_wfoms(&mln).unwrap();
        // Partition function: sum over P-subsets of exp(|P|) = (1 + e)^2.
        let e = approx_exp(&BigRational::one(), &default_exp_tolerance()).unwrap();
        let expected = (BigRational::one() + &e) * (BigRational::one() + &e);
        assert_eq!(lifted(&p), expected);
        assert_eq!(
            brute::count(&p, &BruteOptions::default()).unwrap(),
            expected
        );
    }

    #[test]
    fn mln_reduction_handles_hard_and_binary_rules() {
        let mln = parse_mln(
            "domain 3\n2/5 sm(x) & fr(x,y) -> sm(y)\ninf fr(x,y) -> fr(y,x)\n",
        )
        .unwrap();
        let p = mln_to_wfoms(&mln).unwrap();
        let opts = BruteOptions { cap_atoms: 40, ..BruteOptions::default() };
        assert_eq!(lifted(&p), brute::count(&p, &opts).unwrap());
    }
}
