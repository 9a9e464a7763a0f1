//! Ground brute-force oracle.
//!
//! Counts and enumerates models by depth-first search over ground atom
//! assignments, re-simplifying the ground formula after every assignment.
//! Two prunings keep desk-scale instances tractable: a branch dies as soon
//! as the residual formula folds to false, and once it folds to true the
//! remaining free atoms contribute a closed-form factor `(w + wbar)^k`
//! instead of being enumerated (except when models themselves are wanted).
//!
//! Atoms are assigned in subdomain order (all atoms touching only elements
//! `{1..m}` before any atom touching `m+1`), so constraints resolve as early
//! as possible.

use crate::logic::{
    atoms_of_pred, ground, CmpOp, GroundAtom, GroundFormula, Model, Problem,
};
use crate::{Error, Result};
use num::rational::BigRational;
use num::{One, Zero};
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct BruteOptions {
    /// Refuse instances with more ground atoms than this.
    pub cap_atoms: usize,
    /// Refuse to enumerate more models than this.
    pub max_models: usize,
}

impl Default for BruteOptions {
    fn default() -> Self {
        BruteOptions { cap_atoms: 30, max_models: 2_000_000 }
    }
}

/// Weighted model count of the problem (sentence plus cardinality
/// constraint) by exhaustive search.
pub fn count(problem: &Problem, opts: &BruteOptions) -> Result<BigRational> {
    count_with_evidence(problem, &[], opts)
}

/// Weighted model count with some ground atoms fixed in advance.
pub fn count_with_evidence(
    problem: &Problem,
    evidence: &[(GroundAtom, bool)],
    opts: &BruteOptions,
) -> Result<BigRational> {
    let mut oracle = Oracle::new(problem, opts)?;
    let root = oracle.root(evidence)?;
    let mut acc = BigRational::zero();
    oracle.dfs(&root, &mut Sink::Count(&mut acc))?;
    Ok(acc)
}

/// Every model with its weight, in no particular order.
pub fn enumerate(problem: &Problem, opts: &BruteOptions) -> Result<Vec<(Model, BigRational)>> {
    let mut oracle = Oracle::new(problem, opts)?;
    let root = oracle.root(&[])?;
    let mut out = Vec::new();
    let max = opts.max_models;
    oracle.dfs(&root, &mut Sink::Enumerate(&mut out, max))?;
    Ok(out)
}

/// Indexed ground formula; `And`/`Or` children are shared so simplification
/// only reallocates changed paths.
enum CF {
    Bool(bool),
    Lit(u32, bool),
    And(Vec<Rc<CF>>),
    Or(Vec<Rc<CF>>),
    Card { pred: usize, op: CmpOp, q: i64 },
}

enum Sink<'a> {
    Count(&'a mut BigRational),
    Enumerate(&'a mut Vec<(Model, BigRational)>, usize),
}

struct Oracle<'a> {
    problem: &'a Problem,
    atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, u32>,
    atoms_by_pred: Vec<Vec<u32>>,
    pow_w: Vec<Vec<BigRational>>,
    pow_wbar: Vec<Vec<BigRational>>,
    /// Powers of `w + wbar`, the open-atom completion factor.
    pow_free: Vec<Vec<BigRational>>,
    assign: Vec<Option<bool>>,
    /// Per predicate: count of atoms assigned true / still unassigned.
    t: Vec<u64>,
    u: Vec<u64>,
}

impl<'a> Oracle<'a> {
    fn new(problem: &'a Problem, opts: &BruteOptions) -> Result<Oracle<'a>> {
        problem.validate()?;
        let n = problem.n();
        let vocab = &problem.vocab;
        let total = vocab.ground_atom_count(n) as usize;
        if total > opts.cap_atoms {
            return Err(Error::CapExceeded(format!(
                "{total} ground atoms exceed the brute-force cap of {}",
                opts.cap_atoms
            )));
        }
        let mut atoms: Vec<GroundAtom> = Vec::with_capacity(total);
        for (id, _) in vocab.iter() {
            atoms.extend(atoms_of_pred(vocab, id, n));
        }
        atoms.sort_by_key(|a| {
            (a.args.iter().copied().max().unwrap_or(0), a.pred.0, a.args.clone())
        });
        let index: HashMap<GroundAtom, u32> =
            atoms.iter().enumerate().map(|(i, a)| (a.clone(), i as u32)).collect();
        let mut atoms_by_pred = vec![Vec::new(); vocab.len()];
        for (i, a) in atoms.iter().enumerate() {
            atoms_by_pred[a.pred.0].push(i as u32);
        }
        let mut pow_w = Vec::with_capacity(vocab.len());
        let mut pow_wbar = Vec::with_capacity(vocab.len());
        let mut pow_free = Vec::with_capacity(vocab.len());
        for (id, _) in vocab.iter() {
            let np = atoms_by_pred[id.0].len();
            let w = &problem.weighting.w[id.0];
            let wbar = &problem.weighting.wbar[id.0];
            let free = w + wbar;
            pow_w.push(powers(w, np));
            pow_wbar.push(powers(wbar, np));
            pow_free.push(powers(&free, np));
        }
        let u: Vec<u64> = atoms_by_pred.iter().map(|v| v.len() as u64).collect();
        Ok(Oracle {
            problem,
            assign: vec![None; atoms.len()],
            t: vec![0; vocab.len()],
            u,
            atoms,
            index,
            atoms_by_pred,
            pow_w,
            pow_wbar,
            pow_free,
        })
    }

    fn root(&mut self, evidence: &[(GroundAtom, bool)]) -> Result<Rc<CF>> {
        let mut parts = vec![self.compile(&ground(&self.problem.sentence, self.problem.n())?)?];
        if let Some(cc) = &self.problem.cardinality {
            parts.push(self.compile(&ground(cc, self.problem.n())?)?);
        }
        for (atom, value) in evidence {
            let id = *self.index.get(atom).ok_or_else(|| {
                Error::InvalidInput(format!("evidence atom outside the instance: {atom:?}"))
            })?;
            match self.assign[id as usize] {
                Some(prev) if prev != *value => {
                    return Err(Error::InvalidInput("contradictory evidence".into()))
                }
                Some(_) => {}
                None => self.set(id, *value),
            }
        }
        let root = Rc::new(CF::And(parts));
        Ok(self.reduce(&root))
    }

    fn compile(&self, g: &GroundFormula) -> Result<Rc<CF>> {
        Ok(Rc::new(match g {
            GroundFormula::Bool(b) => CF::Bool(*b),
            GroundFormula::Lit(atom, pos) => {
                let id = *self
                    .index
                    .get(atom)
                    .ok_or_else(|| Error::Internal("ground literal outside the atom table".into()))?;
                CF::Lit(id, *pos)
            }
            GroundFormula::And(v) => {
                CF::And(v.iter().map(|c| self.compile(c)).collect::<Result<_>>()?)
            }
            GroundFormula::Or(v) => {
                CF::Or(v.iter().map(|c| self.compile(c)).collect::<Result<_>>()?)
            }
            GroundFormula::Card { pred, op, q } => CF::Card { pred: pred.0, op: *op, q: *q },
        }))
    }

    fn set(&mut self, atom: u32, value: bool) {
        let p = self.atoms[atom as usize].pred.0;
        self.assign[atom as usize] = Some(value);
        self.u[p] -= 1;
        if value {
            self.t[p] += 1;
        }
    }

    fn unset(&mut self, atom: u32, value: bool) {
        let p = self.atoms[atom as usize].pred.0;
        self.assign[atom as usize] = None;
        self.u[p] += 1;
        if value {
            self.t[p] -= 1;
        }
    }

    /// Folds the formula under the current partial assignment. Shared
    /// subtrees that do not change are returned as-is.
    fn reduce(&self, f: &Rc<CF>) -> Rc<CF> {
        match f.as_ref() {
            CF::Bool(_) => f.clone(),
            CF::Lit(a, pos) => match self.assign[*a as usize] {
                Some(v) => Rc::new(CF::Bool(v == *pos)),
                None => f.clone(),
            },
            CF::Card { pred, op, q } => {
                let lo = self.t[*pred] as i64;
                let hi = lo + self.u[*pred] as i64;
                match decide_card(*op, *q, lo, hi) {
                    Some(b) => Rc::new(CF::Bool(b)),
                    None => f.clone(),
                }
            }
            CF::And(children) => {
                let mut out: Vec<Rc<CF>> = Vec::with_capacity(children.len());
                let mut changed = false;
                for c in children {
                    let r = self.reduce(c);
                    match r.as_ref() {
                        CF::Bool(false) => return Rc::new(CF::Bool(false)),
                        CF::Bool(true) => {
                            changed = true;
                        }
                        _ => {
                            if !Rc::ptr_eq(&r, c) {
                                changed = true;
                            }
                            out.push(r);
                        }
                    }
                }
                match (changed, out.len()) {
                    (false, _) => f.clone(),
                    (true, 0) => Rc::new(CF::Bool(true)),
                    (true, 1) => out.pop().unwrap(),
                    (true, _) => Rc::new(CF::And(out)),
                }
            }
            CF::Or(children) => {
                let mut out: Vec<Rc<CF>> = Vec::with_capacity(children.len());
                let mut changed = false;
                for c in children {
                    let r = self.reduce(c);
                    match r.as_ref() {
                        CF::Bool(true) => return Rc::new(CF::Bool(true)),
                        CF::Bool(false) => {
                            changed = true;
                        }
                        _ => {
                            if !Rc::ptr_eq(&r, c) {
                                changed = true;
                            }
                            out.push(r);
                        }
                    }
                }
                match (changed, out.len()) {
                    (false, _) => f.clone(),
                    (true, 0) => Rc::new(CF::Bool(false)),
                    (true, 1) => out.pop().unwrap(),
                    (true, _) => Rc::new(CF::Or(out)),
                }
            }
        }
    }

    fn dfs(&mut self, f: &Rc<CF>, sink: &mut Sink) -> Result<()> {
        match f.as_ref() {
            CF::Bool(false) => Ok(()),
            CF::Bool(true) => self.complete(sink),
            _ => {
                let atom = self.branch_atom(f)?;
                for value in [false, true] {
                    self.set(atom, value);
                    let child = self.reduce(f);
                    self.dfs(&child, sink)?;
                    self.unset(atom, value);
                }
                Ok(())
            }
        }
    }

    /// Smallest free atom the residual formula still depends on; cardinality
    /// atoms depend on every free atom of their predicate.
    fn branch_atom(&self, f: &Rc<CF>) -> Result<u32> {
        let mut best = None;
        self.scan(f, &mut best);
        best.ok_or_else(|| Error::Internal("undetermined formula without free atoms".into()))
    }

    fn scan(&self, f: &CF, best: &mut Option<u32>) {
        match f {
            CF::Bool(_) => {}
            CF::Lit(a, _) => merge(best, *a),
            CF::And(v) | CF::Or(v) => {
                for c in v {
                    self.scan(c, best);
                }
            }
            CF::Card { pred, .. } => {
                if let Some(a) = self.first_unassigned(*pred) {
                    merge(best, a);
                }
            }
        }
    }

    fn first_unassigned(&self, pred: usize) -> Option<u32> {
        self.atoms_by_pred[pred]
            .iter()
            .copied()
            .find(|a| self.assign[*a as usize].is_none())
    }

    fn complete(&mut self, sink: &mut Sink) -> Result<()> {
        match sink {
            Sink::Count(acc) => {
                let mut wgt = BigRational::one();
                for p in 0..self.atoms_by_pred.len() {
                    let np = self.atoms_by_pred[p].len() as u64;
                    let f = (np - self.t[p] - self.u[p]) as usize;
                    wgt *= &self.pow_w[p][self.t[p] as usize];
                    wgt *= &self.pow_wbar[p][f];
                    wgt *= &self.pow_free[p][self.u[p] as usize];
                }
                **acc += wgt;
                Ok(())
            }
            Sink::Enumerate(out, max) => {
                let free: Vec<u32> = (0..self.atoms.len() as u32)
                    .filter(|a| self.assign[*a as usize].is_none())
                    .collect();
                let max = *max;
                self.complete_models(&free, 0, out, max)
            }
        }
    }

    fn complete_models(
        &mut self,
        free: &[u32],
        at: usize,
        out: &mut Vec<(Model, BigRational)>,
        max: usize,
    ) -> Result<()> {
        if at == free.len() {
            if out.len() >= max {
                return Err(Error::CapExceeded(format!(
                    "model enumeration exceeded the cap of {max}"
                )));
            }
            let mut model = Model::new(Arc::clone(&self.problem.vocab), self.problem.n());
            for (i, a) in self.atoms.iter().enumerate() {
                if self.assign[i] == Some(true) {
                    model.atoms.insert(a.clone());
                }
            }
            let mut wgt = BigRational::one();
            for p in 0..self.atoms_by_pred.len() {
                let np = self.atoms_by_pred[p].len() as u64;
                wgt *= &self.pow_w[p][self.t[p] as usize];
                wgt *= &self.pow_wbar[p][(np - self.t[p]) as usize];
            }
            out.push((model, wgt));
            return Ok(());
        }
        for value in [false, true] {
            self.set(free[at], value);
            self.complete_models(free, at + 1, out, max)?;
            self.unset(free[at], value);
        }
        Ok(())
    }
}

fn merge(best: &mut Option<u32>, a: u32) {
    match best {
        Some(b) if *b <= a => {}
        _ => *best = Some(a),
    }
}

/// Whether `count op q` is already decided knowing the final count lies in
/// `[lo, hi]`.
fn decide_card(op: CmpOp, q: i64, lo: i64, hi: i64) -> Option<bool> {
    match op {
        CmpOp::Eq => {
            if q < lo || q > hi {
                Some(false)
            } else if lo == hi {
                Some(true)
            } else {
                None
            }
        }
        CmpOp::Le => {
            if hi <= q {
                Some(true)
            } else if lo > q {
                Some(false)
            } else {
                None
            }
        }
        CmpOp::Lt => decide_card(CmpOp::Le, q - 1, lo, hi),
        CmpOp::Ge => {
            if lo >= q {
                Some(true)
            } else if hi < q {
                Some(false)
            } else {
                None
            }
        }
        CmpOp::Gt => decide_card(CmpOp::Ge, q + 1, lo, hi),
    }
}

fn powers(base: &BigRational, up_to: usize) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(up_to + 1);
    out.push(BigRational::one());
    for i in 0..up_to {
        let next = &out[i] * base;
        out.push(next);
    }
    out
}
