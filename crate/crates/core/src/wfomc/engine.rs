//! Lifted weighted counting over 1-type/2-table configurations.
//!
//! The engine takes a quantifier-free matrix with a registry of existential
//! witness predicates and counts models by summing over cell configurations,
//! where a cell pairs a 1-type with the set of existential obligations the
//! element still has to discharge. Within a configuration the count is
//! assembled by inclusion-exclusion over "refined" cells: a refined cell
//! additionally fixes a subset of obligations that must have *no* witness,
//! signed by the parity of that subset. Pair interactions then factor into
//! powers of per-pair table sums, so a configuration costs polynomially many
//! big-integer operations instead of an exponential model sweep.
//!
//! Weights are scaled to integers (one scaling factor per predicate) and
//! every count is a sparse polynomial whose variables track the number of
//! true ground literals of selected predicates; cardinality constraints are
//! applied at the end by filtering exponent vectors.

use crate::cells::{
    config_space, multinomial, CellType, OneTypeId, TwoTableId, TypeSpace,
};
use crate::logic::{Formula, PredId, Weighting, Vocabulary};
use crate::wfomc::poly::{Exps, Poly};
use crate::{Error, Result};
use dashmap::DashMap;
use num::bigint::{BigInt, BigUint};
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use std::sync::Arc;

/// Input to the engine: a quantifier-free matrix over `x, y`, the witness
/// predicate of each existential obligation, weights, and the predicates
/// whose literal counts are tracked symbolically.
#[derive(Debug, Clone)]
pub struct CellProblem {
    pub vocab: Arc<Vocabulary>,
    pub matrix: Formula,
    pub registry: Vec<PredId>,
    pub weighting: Weighting,
    pub tracked: Vec<PredId>,
}

type RKey = (u32, u32, u32, u32);

/// Per nullary-assignment subengine: the type space under that assignment
/// and all caches for assembled counts.
pub struct SubEngine {
    pub space: TypeSpace,
    pub valid_types: Vec<OneTypeId>,
    /// Weight of the nullary atoms under this assignment, including tracked
    /// exponents.
    pub nullary_weight: Poly,
    type_weight: Vec<Poly>,
    table_weight: Vec<Poly>,
    nvars: usize,
    one: Arc<Poly>,
    coherent: DashMap<(u32, u32), Arc<Vec<TwoTableId>>>,
    r_cache: DashMap<RKey, Arc<Poly>>,
    r_pow_cache: DashMap<(RKey, u32), Arc<Poly>>,
    tw_pow_cache: DashMap<(u32, u32), Arc<Poly>>,
    memo: DashMap<Vec<(CellType, u32)>, Arc<Poly>>,
}

pub struct Engine {
    pub prob: CellProblem,
    pub nullary: Vec<PredId>,
    pub tracked: Vec<PredId>,
    subs: Vec<Option<Arc<SubEngine>>>,
    /// Per-predicate denominator clearing factor; the model weight scale for
    /// domain size `n` is the product of `lcm_p ^ (n ^ arity_p)`.
    lcm: Vec<BigUint>,
    count_memo: DashMap<u32, Arc<Poly>>,
}

impl Engine {
    pub fn new(prob: CellProblem) -> Result<Engine> {
        if !prob.matrix.is_quantifier_free() {
            return Err(Error::Internal("engine needs a quantifier-free matrix".into()));
        }
        let mut tracked: Vec<PredId> = Vec::new();
        for p in &prob.tracked {
            if !tracked.contains(p) {
                tracked.push(*p);
            }
        }
        let nvars = tracked.len();

        let mut lcm = Vec::with_capacity(prob.vocab.len());
        let mut scaled_w = Vec::with_capacity(prob.vocab.len());
        let mut scaled_wbar = Vec::with_capacity(prob.vocab.len());
        for (id, _) in prob.vocab.iter() {
            let w = &prob.weighting.w[id.0];
            let wbar = &prob.weighting.wbar[id.0];
            if w.is_negative() || wbar.is_negative() {
                return Err(Error::InvalidInput("weights must be non-negative".into()));
            }
            let l = w.denom().lcm(wbar.denom());
            scaled_w.push(w.numer() * (&l / w.denom()));
            scaled_wbar.push(wbar.numer() * (&l / wbar.denom()));
            lcm.push(l.to_biguint().expect("lcm of positive denominators"));
        }

        let nullary: Vec<PredId> = prob
            .vocab
            .iter()
            .filter(|(_, d)| d.arity == 0)
            .map(|(id, _)| id)
            .collect();
        if nullary.len() > 12 {
            return Err(Error::CapExceeded(format!(
                "{} nullary predicates exceed the supported assignment space",
                nullary.len()
            )));
        }

        let mut subs = Vec::with_capacity(1 << nullary.len());
        for mask in 0u32..(1u32 << nullary.len()) {
            let matrix = substitute_nullary(&prob.matrix, &nullary, mask).simplify();
            if matches!(matrix, Formula::False) {
                subs.push(None);
                continue;
            }
            let space = TypeSpace::new(&prob.vocab, &matrix, prob.registry.clone())?;
            let valid_types: Vec<OneTypeId> = (0..space.n_types())
                .map(|t| OneTypeId(t as u32))
                .filter(|t| space.valid[t.0 as usize])
                .collect();

            let mut type_weight = Vec::with_capacity(space.n_types());
            for t in 0..space.n_types() {
                let bits = space.one_types[t];
                let mut c = BigInt::one();
                for (i, atom) in space.one_atoms.iter().enumerate() {
                    if bits & (1 << i) != 0 {
                        c *= &scaled_w[atom.pred.0];
                    } else {
                        c *= &scaled_wbar[atom.pred.0];
                    }
                }
                let mut exps = Exps::from_elem(0, nvars);
                for (i, p) in tracked.iter().enumerate() {
                    exps[i] = space.type_pos_count(OneTypeId(t as u32), *p) as u16;
                }
                type_weight.push(Poly::monomial(nvars, exps, c));
            }

            let mut table_weight = Vec::with_capacity(space.n_tables());
            for t in 0..space.n_tables() {
                let bits = space.two_tables[t];
                let mut c = BigInt::one();
                for (j, p) in space.binary_preds.iter().enumerate() {
                    for dir in 0..2 {
                        if bits & (1 << (2 * j + dir)) != 0 {
                            c *= &scaled_w[p.0];
                        } else {
                            c *= &scaled_wbar[p.0];
                        }
                    }
                }
                let mut exps = Exps::from_elem(0, nvars);
                for (i, p) in tracked.iter().enumerate() {
                    exps[i] = space.table_pos_count(TwoTableId(t as u32), *p) as u16;
                }
                table_weight.push(Poly::monomial(nvars, exps, c));
            }

            let mut nc = BigInt::one();
            let mut nexps = Exps::from_elem(0, nvars);
            for (i, p) in nullary.iter().enumerate() {
                let truth = mask & (1 << i) != 0;
                nc *= if truth { &scaled_w[p.0] } else { &scaled_wbar[p.0] };
                if truth {
                    if let Some(pos) = tracked.iter().position(|q| q == p) {
                        nexps[pos] = 1;
                    }
                }
            }

            subs.push(Some(Arc::new(SubEngine {
                space,
                valid_types,
                nullary_weight: Poly::monomial(nvars, nexps, nc),
                type_weight,
                table_weight,
                nvars,
                one: Arc::new(Poly::one(nvars)),
                coherent: DashMap::new(),
                r_cache: DashMap::new(),
                r_pow_cache: DashMap::new(),
                tw_pow_cache: DashMap::new(),
                memo: DashMap::new(),
            })));
        }

        Ok(Engine {
            prob: CellProblem { tracked: tracked.clone(), ..prob },
            nullary,
            tracked,
            subs,
            lcm,
            count_memo: DashMap::new(),
        })
    }

    pub fn nvars(&self) -> usize {
        self.tracked.len()
    }

    pub fn sub(&self, mask: u32) -> Option<&Arc<SubEngine>> {
        self.subs[mask as usize].as_ref()
    }

    pub fn nullary_masks(&self) -> u32 {
        1u32 << self.nullary.len()
    }

    pub fn tracked_index(&self, pred: PredId) -> Result<usize> {
        self.tracked
            .iter()
            .position(|p| *p == pred)
            .ok_or_else(|| Error::Internal("cardinality over an untracked predicate".into()))
    }

    /// Model weight scale at domain size `n`; divide scaled counts by this to
    /// recover rational weights.
    pub fn scale_for(&self, n: u32) -> BigUint {
        let mut s = BigUint::one();
        for (id, d) in self.prob.vocab.iter() {
            let atoms = (n as u64).pow(d.arity as u32) as usize;
            s *= num::pow::pow(self.lcm[id.0].clone(), atoms);
        }
        s
    }

    /// Scaled count over all models, as a polynomial in the tracked literal
    /// counts, summed over nullary assignments.
    pub fn count_poly(&self, n: u32) -> Result<Arc<Poly>> {
        if let Some(p) = self.count_memo.get(&n) {
            return Ok(p.clone());
        }
        if !self.tracked.is_empty() && n > 255 {
            return Err(Error::CapExceeded(
                "tracked literal counts overflow above domain size 255".into(),
            ));
        }
        let mut total = Poly::zero(self.nvars());
        for mask in 0..self.nullary_masks() {
            let sub = match self.sub(mask) {
                Some(s) => s.clone(),
                None => continue,
            };
            let contrib = sub.assembled_poly(n)?;
            total.add_assign(&contrib);
        }
        if total.has_negative_coeff() {
            return Err(Error::Internal("assembled count has a negative coefficient".into()));
        }
        let arc = Arc::new(total);
        self.count_memo.insert(n, arc.clone());
        Ok(arc)
    }

    /// Scaled count, optionally filtered by a Boolean combination of
    /// cardinality atoms over tracked predicates.
    pub fn count_scaled(&self, n: u32, cc: Option<&Formula>) -> Result<BigInt> {
        let poly = self.count_poly(n)?;
        let c = match cc {
            None => poly.total(),
            Some(f) => {
                let mut s = BigInt::zero();
                for (e, coeff) in poly.terms() {
                    if self.cc_matches(e, f)? {
                        s += coeff;
                    }
                }
                s
            }
        };
        if c.is_negative() {
            return Err(Error::Internal("negative model count".into()));
        }
        Ok(c)
    }

    /// Weighted model count as an exact rational.
    pub fn count_rational(&self, n: u32, cc: Option<&Formula>) -> Result<BigRational> {
        let c = self.count_scaled(n, cc)?;
        Ok(BigRational::new(c, BigInt::from(self.scale_for(n))))
    }

    /// Scaled count conditioned on a cell assignment: `cells` gives how many
    /// elements carry each cell. Nullary assignments are summed over.
    pub fn conditioned_scaled(
        &self,
        cells: &[(CellType, u32)],
        cc: Option<&Formula>,
    ) -> Result<BigInt> {
        let mut total = Poly::zero(self.nvars());
        for mask in 0..self.nullary_masks() {
            let sub = match self.sub(mask) {
                Some(s) => s.clone(),
                None => continue,
            };
            let p = sub.conditioned_poly(cells)?;
            total.add_assign(&p.mul(&sub.nullary_weight));
        }
        let c = match cc {
            None => total.total(),
            Some(f) => {
                let mut s = BigInt::zero();
                for (e, coeff) in total.terms() {
                    if self.cc_matches(e, f)? {
                        s += coeff;
                    }
                }
                s
            }
        };
        if c.is_negative() {
            return Err(Error::Internal("negative conditioned count".into()));
        }
        Ok(c)
    }

    /// Evaluates a cardinality expression on one exponent vector.
    pub fn cc_matches(&self, exps: &[u16], cc: &Formula) -> Result<bool> {
        Ok(match cc {
            Formula::True => true,
            Formula::False => false,
            Formula::Card { pred, op, q } => {
                let idx = self.tracked_index(*pred)?;
                op.holds(exps[idx] as i64, *q)
            }
            Formula::Not(a) => !self.cc_matches(exps, a)?,
            Formula::And(a, b) => self.cc_matches(exps, a)? && self.cc_matches(exps, b)?,
            Formula::Or(a, b) => self.cc_matches(exps, a)? || self.cc_matches(exps, b)?,
            Formula::Implies(a, b) => !self.cc_matches(exps, a)? || self.cc_matches(exps, b)?,
            Formula::Iff(a, b) => self.cc_matches(exps, a)? == self.cc_matches(exps, b)?,
            _ => {
                return Err(Error::InvalidInput(
                    "cardinality constraint may only combine cardinality atoms".into(),
                ))
            }
        })
    }
}

impl SubEngine {
    pub fn table_weight(&self, t: TwoTableId) -> &Poly {
        &self.table_weight[t.0 as usize]
    }

    pub fn type_weight(&self, t: OneTypeId) -> &Poly {
        &self.type_weight[t.0 as usize]
    }

    /// Initial cell of a 1-type: the full obligation mask minus reflexively
    /// witnessed obligations.
    pub fn initial_cell(&self, t: OneTypeId) -> CellType {
        CellType { block: self.space.initial_block[t.0 as usize], one_type: t }
    }

    /// Scaled count over all models with this nullary assignment, times the
    /// nullary weight.
    fn assembled_poly(&self, n: u32) -> Result<Poly> {
        let cells: Vec<CellType> = self.valid_types.iter().map(|t| self.initial_cell(*t)).collect();
        let mut total = Poly::zero(self.nvars);
        if cells.is_empty() {
            return Ok(total);
        }
        let mut scratch: Vec<(CellType, u32)> = Vec::with_capacity(cells.len());
        for config in config_space(n, cells.len())? {
            scratch.clear();
            for (cell, &count) in cells.iter().zip(&config.0) {
                if count > 0 {
                    scratch.push((*cell, count));
                }
            }
            scratch.sort_by_key(|(c, _)| *c);
            let conditioned = self.conditioned_poly(&scratch)?;
            if conditioned.is_zero() {
                continue;
            }
            let ways = BigInt::from(multinomial(&config.0));
            total.add_assign(&conditioned.scale(&ways));
        }
        Ok(total.mul(&self.nullary_weight))
    }

    /// Scaled count of structures where each element carries its assigned
    /// cell: its 1-type holds, every pair satisfies the matrix both ways,
    /// and every obligation in an element's block mask has a witness.
    /// Nullary weight not included.
    pub fn conditioned_poly(&self, cells: &[(CellType, u32)]) -> Result<Arc<Poly>> {
        // Canonical key: sorted, merged, no zero counts.
        let mut key: Vec<(CellType, u32)> = Vec::with_capacity(cells.len());
        for &(c, h) in cells {
            if h > 0 {
                key.push((c, h));
            }
        }
        key.sort_by_key(|(c, _)| *c);
        key.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        if let Some(p) = self.memo.get(&key) {
            return Ok(p.clone());
        }
        for (c, _) in &key {
            if !self.space.valid[c.one_type.0 as usize] {
                let zero = Arc::new(Poly::zero(self.nvars));
                self.memo.insert(key, zero.clone());
                return Ok(zero);
            }
        }

        // Refined options per group: which subset of the block has no
        // witness anywhere, inclusion-exclusion signed.
        let groups: Vec<(CellType, u32, Vec<u32>)> = key
            .iter()
            .map(|&(c, h)| (c, h, submasks(c.block)))
            .collect();
        let mut acc = Poly::zero(self.nvars);
        let mut entries: Vec<(u32, u32, u32)> = Vec::new();
        self.refined_rec(&groups, 0, &mut entries, BigUint::one(), &mut acc)?;
        let arc = Arc::new(acc);
        self.memo.insert(key, arc.clone());
        Ok(arc)
    }

    fn refined_rec(
        &self,
        groups: &[(CellType, u32, Vec<u32>)],
        idx: usize,
        entries: &mut Vec<(u32, u32, u32)>,
        ways: BigUint,
        acc: &mut Poly,
    ) -> Result<()> {
        if idx == groups.len() {
            let term = self.refined_term(entries, &ways)?;
            acc.add_assign(&term);
            return Ok(());
        }
        let (cell, count, opts) = &groups[idx];
        for split in config_space(*count, opts.len())? {
            let m = multinomial(&split.0);
            let before = entries.len();
            for (j, &h) in split.0.iter().enumerate() {
                if h > 0 {
                    entries.push((cell.one_type.0, opts[j], h));
                }
            }
            self.refined_rec(groups, idx + 1, entries, &ways * m, acc)?;
            entries.truncate(before);
        }
        Ok(())
    }

    /// One refined-cell profile: `entries` lists `(1-type, avoided
    /// obligations, multiplicity)`.
    fn refined_term(&self, entries: &[(u32, u32, u32)], ways: &BigUint) -> Result<Poly> {
        let parity: u32 = entries.iter().map(|(_, s, h)| s.count_ones() * h).sum();
        let mut c = BigInt::from(ways.clone());
        if parity % 2 == 1 {
            c = -c;
        }
        let mut term = Poly::constant(self.nvars, c);
        for &(t, _, h) in entries {
            term = term.mul(&*self.tw_pow(t, h)?);
            if term.is_zero() {
                return Ok(term);
            }
        }
        for i in 0..entries.len() {
            let (ti, si, hi) = entries[i];
            let diag = (hi as u64 * (hi as u64 - 1) / 2) as u32;
            if diag > 0 {
                term = term.mul(&*self.r_pow((ti, si, ti, si), diag)?);
                if term.is_zero() {
                    return Ok(term);
                }
            }
            for &(tj, sj, hj) in &entries[i + 1..] {
                term = term.mul(&*self.r_pow((ti, si, tj, sj), hi * hj)?);
                if term.is_zero() {
                    return Ok(term);
                }
            }
        }
        Ok(term)
    }

    /// Tables satisfying the matrix both ways between 1-types `a` and `b`.
    pub fn coherent_tables(&self, a: OneTypeId, b: OneTypeId) -> Result<Arc<Vec<TwoTableId>>> {
        let k = (a.0, b.0);
        if let Some(v) = self.coherent.get(&k) {
            return Ok(v.clone());
        }
        let mut out = Vec::new();
        for t in 0..self.space.n_tables() {
            let id = TwoTableId(t as u32);
            if self.space.coherent(id, a, b)? {
                out.push(id);
            }
        }
        let arc = Arc::new(out);
        self.coherent.insert(k, arc.clone());
        Ok(arc)
    }

    /// Sum of table weights between two refined cells: coherent tables that
    /// witness none of the avoided obligations on either side.
    fn r_poly(&self, k: RKey) -> Result<Arc<Poly>> {
        if let Some(p) = self.r_cache.get(&k) {
            return Ok(p.clone());
        }
        let (ta, sa, tb, sb) = k;
        let mut sum = Poly::zero(self.nvars);
        for &t in self.coherent_tables(OneTypeId(ta), OneTypeId(tb))?.iter() {
            let i = t.0 as usize;
            if self.space.witness_xy[i] & sa != 0 || self.space.witness_yx[i] & sb != 0 {
                continue;
            }
            sum.add_assign(&self.table_weight[i]);
        }
        let arc = Arc::new(sum);
        self.r_cache.insert(k, arc.clone());
        Ok(arc)
    }

    fn r_pow(&self, k: RKey, e: u32) -> Result<Arc<Poly>> {
        if e == 0 {
            return Ok(self.one.clone());
        }
        if let Some(p) = self.r_pow_cache.get(&(k, e)) {
            return Ok(p.clone());
        }
        let base = self.r_poly(k)?;
        let (mut at, mut cur) = (1u32, base.clone());
        for back in (2..e).rev() {
            if let Some(p) = self.r_pow_cache.get(&(k, back)) {
                at = back;
                cur = p.clone();
                break;
            }
        }
        while at < e {
            cur = Arc::new(cur.mul(&base));
            at += 1;
            self.r_pow_cache.insert((k, at), cur.clone());
        }
        Ok(cur)
    }

    fn tw_pow(&self, t: u32, e: u32) -> Result<Arc<Poly>> {
        if e == 0 {
            return Ok(self.one.clone());
        }
        if let Some(p) = self.tw_pow_cache.get(&(t, e)) {
            return Ok(p.clone());
        }
        let base = &self.type_weight[t as usize];
        let p = Arc::new(base.pow(e));
        self.tw_pow_cache.insert((t, e), p.clone());
        Ok(p)
    }
}

/// All submasks of `block`, deterministic order, empty mask first.
fn submasks(block: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut s = block;
    loop {
        out.push(s);
        if s == 0 {
            break;
        }
        s = (s - 1) & block;
    }
    out.reverse();
    out
}

/// Replaces nullary atoms by constants according to the assignment mask.
fn substitute_nullary(f: &Formula, nullary: &[PredId], mask: u32) -> Formula {
    match f {
        Formula::Atom { pred, args } if args.is_empty() => {
            match nullary.iter().position(|p| p == pred) {
                Some(i) if mask & (1 << i) != 0 => Formula::True,
                Some(_) => Formula::False,
                None => f.clone(),
            }
        }
        Formula::Not(a) => substitute_nullary(a, nullary, mask).not(),
        Formula::And(a, b) => {
            substitute_nullary(a, nullary, mask).and(substitute_nullary(b, nullary, mask))
        }
        Formula::Or(a, b) => {
            substitute_nullary(a, nullary, mask).or(substitute_nullary(b, nullary, mask))
        }
        Formula::Implies(a, b) => {
            substitute_nullary(a, nullary, mask).implies(substitute_nullary(b, nullary, mask))
        }
        Formula::Iff(a, b) => {
            substitute_nullary(a, nullary, mask).iff(substitute_nullary(b, nullary, mask))
        }
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{CmpOp, Var};

    fn engine_for(
        decls: &[(&str, usize)],
        matrix: Formula,
        registry_names: &[&str],
        weights: &[(&str, i64, i64)],
        tracked_names: &[&str],
    ) -> Engine {
        let mut v = Vocabulary::new();
        for (name, arity) in decls {
            v.declare(name, *arity).unwrap();
        }
        let vocab = Arc::new(v);
        let mut weighting = Weighting::unit(&vocab);
        for (name, w, wbar) in weights {
            let id = vocab.lookup(name).unwrap();
            weighting.set(
                id,
                BigRational::from(BigInt::from(*w)),
                BigRational::from(BigInt::from(*wbar)),
            );
        }
        let registry = registry_names.iter().map(|n| vocab.lookup(n).unwrap()).collect();
        let tracked = tracked_names.iter().map(|n| vocab.lookup(n).unwrap()).collect();
        Engine::new(CellProblem { vocab, matrix, registry, weighting, tracked }).unwrap()
    }

    fn atom(v: &Vocabulary, name: &str, args: &[Var]) -> Formula {
        Formula::atom(v.lookup(name).unwrap(), args)
    }

    #[test]
    fn counts_undirected_graphs() {
        let mut v = Vocabulary::new();
        v.declare("E", 2).unwrap();
        let matrix = atom(&v, "E", &[Var::X, Var::Y])
            .implies(atom(&v, "E", &[Var::Y, Var::X]))
            .and(atom(&v, "E", &[Var::X, Var::X]).not());
        let eng = engine_for(&[("E", 2)], matrix, &[], &[], &[]);
        // 2^binom(n,2) simple graphs.
        assert_eq!(eng.count_scaled(3, None).unwrap(), BigInt::from(8));
        assert_eq!(eng.count_scaled(4, None).unwrap(), BigInt::from(64));
    }

    #[test]
    fn counts_graphs_without_isolated_vertices() {
        let mut v = Vocabulary::new();
        v.declare("E", 2).unwrap();
        let matrix = atom(&v, "E", &[Var::X, Var::Y])
            .implies(atom(&v, "E", &[Var::Y, Var::X]))
            .and(atom(&v, "E", &[Var::X, Var::X]).not());
        // One existential obligation witnessed by E.
        let eng = engine_for(&[("E", 2)], matrix, &["E"], &[], &[]);
        assert_eq!(eng.count_scaled(2, None).unwrap(), BigInt::from(1));
        assert_eq!(eng.count_scaled(3, None).unwrap(), BigInt::from(4));
        // Inclusion-exclusion over isolated vertices: 2^15 - 5*2^10 + 10*2^6
        // - 10*2^3 + 5*2^1 - 1.
        assert_eq!(eng.count_scaled(5, None).unwrap(), BigInt::from(768));
    }

    #[test]
    fn counts_total_relations_and_reflexive_discharge() {
        let mut v = Vocabulary::new();
        v.declare("R", 2).unwrap();
        let eng = engine_for(&[("R", 2)], Formula::True, &["R"], &[], &[]);
        // Rows independently nonempty: (2^n - 1)^n.
        assert_eq!(eng.count_scaled(1, None).unwrap(), BigInt::from(1));
        assert_eq!(eng.count_scaled(2, None).unwrap(), BigInt::from(9));
        assert_eq!(eng.count_scaled(3, None).unwrap(), BigInt::from(343));
    }

    #[test]
    fn weighted_counts_scale_to_integers() {
        let mut v = Vocabulary::new();
        v.declare("R", 2).unwrap();
        let eng = engine_for(&[("R", 2)], Formula::True, &["R"], &[("R", 2, 1)], &[]);
        // Per row: (1+2)^n - 1.
        assert_eq!(eng.count_rational(2, None).unwrap(), BigRational::from(BigInt::from(64)));

        // Fractional weight 1/2: per row (3/2)^n - 1, n = 2 gives (5/4)^2.
        let mut v2 = Vocabulary::new();
        let r = v2.declare("R", 2).unwrap();
        let vocab = Arc::new(v2);
        let mut weighting = Weighting::unit(&vocab);
        weighting.set(r, BigRational::new(BigInt::one(), BigInt::from(2)), BigRational::one());
        let eng = Engine::new(CellProblem {
            vocab,
            matrix: Formula::True,
            registry: vec![r],
            weighting,
            tracked: vec![],
        })
        .unwrap();
        assert_eq!(
            eng.count_rational(2, None).unwrap(),
            BigRational::new(BigInt::from(25), BigInt::from(16))
        );
    }

    #[test]
    fn tracked_predicate_gives_count_polynomial() {
        let mut v = Vocabulary::new();
        let p = v.declare("P", 1).unwrap();
        let vocab = Arc::new(v);
        let eng = Engine::new(CellProblem {
            vocab: vocab.clone(),
            matrix: Formula::True,
            registry: vec![],
            weighting: Weighting::unit(&vocab),
            tracked: vec![p],
        })
        .unwrap();
        let poly = eng.count_poly(3).unwrap();
        // (1 + x)^3.
        let coeffs: Vec<BigInt> =
            (0..=3u16).map(|k| poly.filter_sum(|e| e[0] == k)).collect();
        assert_eq!(coeffs, vec![1.into(), 3.into(), 3.into(), 1.into()]);
        let cc = Formula::Card { pred: p, op: CmpOp::Eq, q: 2 };
        assert_eq!(eng.count_scaled(3, Some(&cc)).unwrap(), BigInt::from(3));
    }

    #[test]
    fn nullary_assignments_split_the_count() {
        let mut v = Vocabulary::new();
        let p = v.declare("P", 1).unwrap();
        let a = v.declare("A", 0).unwrap();
        let vocab = Arc::new(v);
        let matrix = Formula::atom(p, &[Var::X]).implies(Formula::atom(a, &[]));
        let eng = Engine::new(CellProblem {
            vocab: vocab.clone(),
            matrix,
            registry: vec![],
            weighting: Weighting::unit(&vocab),
            tracked: vec![],
        })
        .unwrap();
        // A true: P free (4 models at n=2); A false: P empty (1 model).
        assert_eq!(eng.count_scaled(2, None).unwrap(), BigInt::from(5));
    }

    #[test]
    fn conditioned_counts_respect_blocks() {
        let mut v = Vocabulary::new();
        v.declare("R", 2).unwrap();
        let eng = engine_for(&[("R", 2)], Formula::True, &["R"], &[], &[]);
        let sub = eng.sub(0).unwrap();
        // Type without R(x,x) keeps the obligation, type with it discharges.
        let open = sub.initial_cell(OneTypeId(0));
        assert_eq!(open.block, 1);
        // Two elements, both obliged: every R-subset of the 2 off-diagonal
        // atoms with both rows nonempty given no reflexive atoms: rows are
        // {R(1,2)} and {R(2,1)}, both must be present: 1 structure.
        let c = eng.conditioned_scaled(&[(open, 2)], None).unwrap();
        assert_eq!(c, BigInt::from(1));
    }
}
