//! Weighted first-order model counting: lifted engine and ground oracle.

pub mod brute;
pub mod engine;
pub mod poly;

pub use brute::BruteOptions;
pub use engine::{CellProblem, Engine, SubEngine};
pub use poly::Poly;

use crate::logic::{atoms_of_pred, Model, Problem, Weighting};
use crate::Result;
use num::rational::BigRational;
use num::One;

/// Lifted weighted model count of a problem: normalizes into the engine's
/// core form, counts, and divides out the reduction multiplicity.
pub fn count(problem: &Problem) -> Result<BigRational> {
    let red = crate::normalize::normalize(problem)?;
    let engine = Engine::new(red.cell)?;
    let c = engine.count_rational(problem.n(), red.reduced.cardinality.as_ref())?;
    Ok(c / red.multiplicity)
}

/// Weight of a single model: product over all ground atoms of `w` for true
/// and `wbar` for false literals.
pub fn weight_of(model: &Model, weighting: &Weighting) -> BigRational {
    let mut wgt = BigRational::one();
    for (id, _) in model.vocab.iter() {
        for atom in atoms_of_pred(&model.vocab, id, model.n) {
            if model.holds(&atom) {
                wgt *= &weighting.w[id.0];
            } else {
                wgt *= &weighting.wbar[id.0];
            }
        }
    }
    wgt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{GroundAtom, Vocabulary};
    use num::bigint::BigInt;
    use std::sync::Arc;

    #[test]
    fn model_weight_multiplies_literal_weights() {
        let mut v = Vocabulary::new();
        let p = v.declare("P", 1).unwrap();
        let vocab = Arc::new(v);
        let mut weighting = Weighting::unit(&vocab);
        weighting.set(
            p,
            BigRational::from(BigInt::from(3)),
            BigRational::new(BigInt::from(1), BigInt::from(2)),
        );
        let mut m = Model::new(vocab, 2);
        m.atoms.insert(GroundAtom::unary(p, 1));
        // One true literal (3), one false (1/2).
        assert_eq!(
            weight_of(&m, &weighting),
            BigRational::new(BigInt::from(3), BigInt::from(2))
        );
    }
}
