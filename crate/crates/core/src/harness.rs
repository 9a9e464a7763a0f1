//! Preset catalog and statistical validation.
//!
//! The presets are the standard sampling benchmarks: combinatorial
//! structures encoded directly as sentences, and Markov logic networks
//! routed through the MLN reduction. Validation draws samples, builds an
//! empirical distribution, and compares it against the exactly computed
//! reference with a Kolmogorov-Smirnov test whose rejection threshold
//! comes from the Dvoretzky-Kiefer-Wolfowitz inequality.

use crate::logic::{CmpOp, Formula, Model, Problem, Vocabulary};
use crate::normalize::{mln_to_wfoms, normalize};
use crate::sampler::{RandomSource, Sampler};
use crate::textio::{parse_mln, parse_problem};
use crate::wfomc::{brute, BruteOptions, Engine};
use crate::{Error, Result};
use num::bigint::{BigInt, BigUint};
use num::rational::BigRational;
use num::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub const PRESET_NAMES: [&str; 10] = [
    "two-colored-graphs",
    "no-isolated-vertices",
    "k-regular",
    "functions",
    "functions-no-fixpoint",
    "permutations",
    "derangements",
    "friends-smokers",
    "employment",
    "deskmate",
];

/// Source text of a preset problem over a domain of size `n`: sentence
/// format for the combinatorial presets, MLN rules for the rest. The `k`
/// parameter is only read by `k-regular`.
pub fn preset_text(name: &str, n: u32, k: u32) -> Result<String> {
    let text = match name {
        "two-colored-graphs" => format!(
            "domain {n}\n\
             sentence forall x: ~E(x,x)\n\
             sentence forall x forall y: E(x,y) -> E(y,x)\n\
             sentence forall x: Red(x) | Black(x)\n\
             sentence forall x: ~Red(x) | ~Black(x)\n\
             sentence forall x forall y: E(x,y) -> ~(Red(x) & Red(y)) & ~(Black(x) & Black(y))\n"
        ),
        "no-isolated-vertices" => format!(
            "domain {n}\n\
             sentence forall x: ~E(x,x)\n\
             sentence forall x forall y: E(x,y) -> E(y,x)\n\
             sentence forall x exists y: E(x,y)\n"
        ),
        "k-regular" => format!(
            "domain {n}\n\
             sentence forall x forall y: E(x,y) -> E(y,x)\n\
             sentence forall x: ~E(x,x)\n\
             sentence forall x exists[={k}] y: E(x,y)\n"
        ),
        "functions" => format!("domain {n}\nsentence forall x exists[=1] y: f(x,y)\n"),
        "functions-no-fixpoint" => format!(
            "domain {n}\n\
             sentence forall x exists[=1] y: f(x,y)\n\
             sentence forall x: ~f(x,x)\n"
        ),
        "permutations" => format!(
            "domain {n}\n\
             sentence forall x exists[=1] y: Per(x,y)\n\
             sentence forall y exists[=1] x: Per(x,y)\n"
        ),
        "derangements" => format!(
            "domain {n}\n\
             sentence forall x exists[=1] y: Per(x,y)\n\
             sentence forall y exists[=1] x: Per(x,y)\n\
             sentence forall x: ~Per(x,x)\n"
        ),
        "friends-smokers" => format!(
            "domain {n}\n\
             inf forall x: ~fr(x,x)\n\
             inf forall x forall y: fr(x,y) -> fr(y,x)\n\
             inf forall x exists y: fr(x,y)\n\
             0 sm(x)\n\
             0.2 fr(x,y) & sm(x) -> sm(y)\n"
        ),
        "employment" => format!("domain {n}\n1.3 (exists y: workfor(x,y)) | boss(x)\n"),
        "deskmate" => format!(
            "domain {n}\n\
             inf forall x: ~mate(x,x) & ~fr(x,x)\n\
             inf forall x forall y: mate(x,y) -> mate(y,x)\n\
             inf forall x exists[=1] y: mate(x,y)\n\
             inf forall y exists[=1] x: mate(x,y)\n\
             1 mate(x,y) -> fr(x,y)\n"
        ),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown preset `{other}`; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(text)
}

/// Builds a preset problem over a domain of size `n`.
pub fn preset(name: &str, n: u32, k: u32) -> Result<Problem> {
    load_problem(&preset_text(name, n, k)?)
}

/// Parses either input format: lines starting with a weight or `inf` mark
/// an MLN (routed through the MLN reduction), keyword lines a problem file.
pub fn load_problem(text: &str) -> Result<Problem> {
    Ok(load_input(text)?.0)
}

/// Like [`load_problem`], but for MLN inputs also returns the MLN's own
/// vocabulary. The reduction's auxiliary predicates are determined by the
/// original atoms, so projecting a sampled model onto this vocabulary
/// recovers the MLN structure it encodes.
pub fn load_input(text: &str) -> Result<(Problem, Option<Arc<Vocabulary>>)> {
    let is_mln = text
        .lines()
        .map(str::trim_start)
        .filter(|t| !t.is_empty() && !t.starts_with('#'))
        .any(|t| {
            t.starts_with("inf ") || t.starts_with(|c: char| c.is_ascii_digit() || c == '-')
        });
    if is_mln {
        let mln = parse_mln(text)?;
        let vocab = mln.vocab.clone();
        return Ok((mln_to_wfoms(&mln)?, Some(vocab)));
    }
    Ok((parse_problem(text)?, None))
}

/// Predicates whose count distribution is validated for a preset. Empty
/// means the preset is validated on full models instead (the model space
/// of the MLN presets is too large to enumerate).
pub fn preset_observed(name: &str) -> &'static [&'static str] {
    match name {
        "friends-smokers" => &["fr", "sm"],
        "employment" => &["workfor", "boss"],
        "deskmate" => &["mate", "fr"],
        _ => &[],
    }
}

/// Every model of the problem with its probability, sorted by the
/// lexicographic model index. Masses sum to exactly 1.
pub fn exact_distribution(problem: &Problem) -> Result<Vec<(Model, BigRational)>> {
    let opts = BruteOptions::default();
    let models = brute::enumerate(problem, &opts)?;
    let total: BigRational = models.iter().map(|(_, w)| w).sum();
    if total.is_zero() {
        return Ok(Vec::new());
    }
    let mut out: Vec<(Model, BigRational)> =
        models.into_iter().map(|(m, w)| (m, w / &total)).collect();
    out.sort_by_key(|(m, _)| m.lex_index());
    Ok(out)
}

/// Joint distribution of the number of true ground literals of the named
/// predicates, computed liftedly: the counting engine tracks the observed
/// predicates symbolically and the coefficient sums give the masses.
pub fn count_distribution(
    problem: &Problem,
    observed: &[&str],
) -> Result<Vec<(Vec<u64>, BigRational)>> {
    if observed.is_empty() {
        return Err(Error::InvalidInput("no observed predicates".into()));
    }
    let mut tracked_problem = problem.clone();
    let mut cc = tracked_problem.cardinality.take();
    for name in observed {
        let pred = problem
            .vocab
            .lookup(name)
            .ok_or_else(|| Error::UnknownPredicate(name.to_string()))?;
        // A vacuous bound; its only effect is to register the predicate
        // with the engine's symbolic tracking.
        let atom = Formula::Card { pred, op: CmpOp::Ge, q: 0 };
        cc = Some(match cc {
            None => atom,
            Some(c) => c.and(atom),
        });
    }
    tracked_problem.cardinality = cc;

    let red = normalize(&tracked_problem)?;
    let engine = Engine::new(red.cell.clone())?;
    let poly = engine.count_poly(problem.n())?;
    let positions: Vec<usize> = observed
        .iter()
        .map(|name| {
            let pred = red.reduced.vocab.lookup(name).expect("observed predicate survives");
            engine
                .tracked
                .iter()
                .position(|&p| p == pred)
                .expect("observed predicate is tracked")
        })
        .collect();

    let mut masses: BTreeMap<Vec<u64>, BigInt> = BTreeMap::new();
    let mut total = BigInt::zero();
    for (exps, coeff) in poly.terms() {
        let keep = match &red.reduced.cardinality {
            None => true,
            Some(cc) => engine.cc_matches(exps, cc)?,
        };
        if !keep {
            continue;
        }
        let key: Vec<u64> = positions.iter().map(|&i| u64::from(exps[i])).collect();
        *masses.entry(key).or_insert_with(BigInt::zero) += coeff;
        total += coeff;
    }
    if total.is_zero() || total.is_negative() {
        return Err(Error::Unsatisfiable);
    }
    Ok(masses
        .into_iter()
        .map(|(k, c)| (k, BigRational::new(c, total.clone())))
        .collect())
}

/// KS rejection threshold from the DKW inequality: the sup-deviation of an
/// empirical CDF from the truth exceeds this with probability at most
/// `alpha`. Univariate data admits a tighter constant.
pub fn dkw_bound(n_samples: u64, k: usize, alpha: f64) -> f64 {
    assert!(n_samples >= 1 && k >= 1 && alpha > 0.0 && alpha < 1.0);
    let n = n_samples as f64;
    let factor = if k == 1 { 2.0 } else { k as f64 * (n + 1.0) };
    ((factor / alpha).ln() / (2.0 * n)).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub max_deviation: f64,
    pub bound: f64,
    pub alpha: f64,
    pub rejected: bool,
}

impl KsResult {
    fn from_deviation(max_deviation: f64, n_samples: u64, k: usize, alpha: f64) -> KsResult {
        let bound = dkw_bound(n_samples, k, alpha);
        KsResult { max_deviation, bound, alpha, rejected: max_deviation > bound }
    }
}

/// Univariate KS statistic over a totally ordered outcome space. Both
/// step functions are constant between support points, so the supremum is
/// attained at a support point of either distribution.
pub fn ks_test<K: Ord + Clone>(
    empirical: &BTreeMap<K, u64>,
    n_samples: u64,
    reference: &[(K, BigRational)],
    alpha: f64,
) -> Result<KsResult> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("KS test needs at least one sample".into()));
    }
    let mut keys: BTreeSet<&K> = empirical.keys().collect();
    keys.extend(reference.iter().map(|(k, _)| k));
    let mut ref_sorted: Vec<(&K, f64)> =
        reference.iter().map(|(k, p)| (k, p.to_f64().unwrap_or(0.0))).collect();
    ref_sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut dev: f64 = 0.0;
    let mut emp_cum = 0u64;
    let mut ref_cum = 0.0f64;
    let mut ref_at = 0usize;
    for key in keys {
        emp_cum += empirical.get(key).copied().unwrap_or(0);
        while ref_at < ref_sorted.len() && ref_sorted[ref_at].0 <= key {
            ref_cum += ref_sorted[ref_at].1;
            ref_at += 1;
        }
        let f_n = emp_cum as f64 / n_samples as f64;
        dev = dev.max((f_n - ref_cum).abs());
    }
    Ok(KsResult::from_deviation(dev, n_samples, 1, alpha))
}

/// Multivariate KS statistic for joint count vectors: the CDF is evaluated
/// on the grid spanned by the support coordinates in each dimension.
pub fn ks_test_multivariate(
    empirical: &BTreeMap<Vec<u64>, u64>,
    n_samples: u64,
    reference: &[(Vec<u64>, BigRational)],
    alpha: f64,
) -> Result<KsResult> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("KS test needs at least one sample".into()));
    }
    let k = reference
        .first()
        .map(|(v, _)| v.len())
        .or_else(|| empirical.keys().next().map(|v| v.len()))
        .ok_or_else(|| Error::InvalidInput("empty reference distribution".into()))?;
    if k == 1 {
        let emp: BTreeMap<u64, u64> = empirical.iter().map(|(v, &c)| (v[0], c)).collect();
        let reference: Vec<(u64, BigRational)> =
            reference.iter().map(|(v, p)| (v[0], p.clone())).collect();
        return ks_test(&emp, n_samples, &reference, alpha);
    }
    let mut axes: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); k];
    for key in empirical.keys().chain(reference.iter().map(|(v, _)| v)) {
        for (d, &c) in key.iter().enumerate() {
            axes[d].insert(c);
        }
    }
    let axes: Vec<Vec<u64>> = axes.into_iter().map(|s| s.into_iter().collect()).collect();
    let ref_pts: Vec<(&Vec<u64>, f64)> =
        reference.iter().map(|(v, p)| (v, p.to_f64().unwrap_or(0.0))).collect();
    let mut dev: f64 = 0.0;
    let mut grid = vec![0usize; k];
    loop {
        let corner: Vec<u64> = grid.iter().enumerate().map(|(d, &i)| axes[d][i]).collect();
        let below = |v: &[u64]| v.iter().zip(&corner).all(|(a, b)| a <= b);
        let f_n: u64 = empirical.iter().filter(|(v, _)| below(v)).map(|(_, &c)| c).sum();
        let f_ref: f64 = ref_pts.iter().filter(|(v, _)| below(v)).map(|(_, p)| p).sum();
        dev = dev.max((f_n as f64 / n_samples as f64 - f_ref).abs());
        // Advance the mixed-radix grid index.
        let mut d = 0;
        loop {
            if d == k {
                return Ok(KsResult::from_deviation(dev, n_samples, k, alpha));
            }
            grid[d] += 1;
            if grid[d] < axes[d].len() {
                break;
            }
            grid[d] = 0;
            d += 1;
        }
    }
}

/// Draws `n_samples` models in parallel and tallies lexicographic indices.
/// Per-sample random streams make the result independent of scheduling.
pub fn sample_model_frequencies(
    sampler: &Sampler,
    n_samples: u64,
    seed: u64,
) -> Result<BTreeMap<BigUint, u64>> {
    (0..n_samples)
        .into_par_iter()
        .try_fold(BTreeMap::new, |mut acc: BTreeMap<BigUint, u64>, i| {
            let model = sampler.sample(seed, i)?;
            *acc.entry(model.lex_index()).or_insert(0) += 1;
            Ok(acc)
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            Ok(a)
        })
}

/// Draws `n_samples` models in parallel and tallies the true-literal
/// counts of the observed predicates.
pub fn sample_count_frequencies(
    sampler: &Sampler,
    observed: &[&str],
    n_samples: u64,
    seed: u64,
) -> Result<BTreeMap<Vec<u64>, u64>> {
    let problem = &sampler.reduction().original;
    let preds: Vec<_> = observed
        .iter()
        .map(|name| {
            problem
                .vocab
                .lookup(name)
                .ok_or_else(|| Error::UnknownPredicate(name.to_string()))
        })
        .collect::<Result<_>>()?;
    (0..n_samples)
        .into_par_iter()
        .try_fold(BTreeMap::new, |mut acc: BTreeMap<Vec<u64>, u64>, i| {
            let model = sampler.sample(seed, i)?;
            let key: Vec<u64> = preds.iter().map(|&p| model.count_true(p)).collect();
            *acc.entry(key).or_insert(0) += 1;
            Ok(acc)
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            Ok(a)
        })
}

#[derive(Debug)]
pub struct ValidateReport {
    pub n_samples: u64,
    pub outcomes: usize,
    pub ks: KsResult,
}

/// Samples the problem and KS-tests the model distribution against the
/// enumerated exact distribution (desk scale only).
pub fn validate_models(
    problem: &Problem,
    n_samples: u64,
    seed: u64,
    alpha: f64,
) -> Result<ValidateReport> {
    let exact = exact_distribution(problem)?;
    if exact.is_empty() {
        return Err(Error::Unsatisfiable);
    }
    let reference: Vec<(BigUint, BigRational)> =
        exact.into_iter().map(|(m, p)| (m.lex_index(), p)).collect();
    let sampler = Sampler::new(problem)?;
    let freq = sample_model_frequencies(&sampler, n_samples, seed)?;
    let ks = ks_test(&freq, n_samples, &reference, alpha)?;
    Ok(ValidateReport { n_samples, outcomes: reference.len(), ks })
}

/// Samples the problem and KS-tests the joint count distribution of the
/// observed predicates against the lifted exact computation.
pub fn validate_counts(
    problem: &Problem,
    observed: &[&str],
    n_samples: u64,
    seed: u64,
    alpha: f64,
) -> Result<ValidateReport> {
    let reference = count_distribution(problem, observed)?;
    let sampler = Sampler::new(problem)?;
    let freq = sample_count_frequencies(&sampler, observed, n_samples, seed)?;
    let ks = ks_test_multivariate(&freq, n_samples, &reference, alpha)?;
    Ok(ValidateReport { n_samples, outcomes: reference.len(), ks })
}

/// Deterministic random sentence for oracle cross-checks: a universally
/// quantified random matrix over a small vocabulary, optionally with an
/// existential conjunct, and random small weights.
pub fn random_problem(seed: u64, index: u64, existential: bool, n: u32) -> Result<Problem> {
    let mut rng = RandomSource::for_sample(seed, index);
    let mut text = format!("domain {n}\n");
    let lits = ["P(x)", "P(y)", "Q(x)", "Q(y)", "R(x,y)", "R(y,x)", "R(x,x)"];
    let ops = ["&", "|", "->"];
    let lit = |rng: &mut RandomSource| {
        let l = lits[rng.below(lits.len() as u64) as usize];
        if rng.below(2) == 0 {
            format!("~{l}")
        } else {
            l.to_string()
        }
    };
    let clause = |rng: &mut RandomSource| {
        let a = lit(rng);
        let b = lit(rng);
        let op = ops[rng.below(ops.len() as u64) as usize];
        format!("({a} {op} {b})")
    };
    let c1 = clause(&mut rng);
    let c2 = clause(&mut rng);
    let join = ops[rng.below(ops.len() as u64) as usize];
    text.push_str(&format!("sentence forall x forall y: {c1} {join} {c2}\n"));
    if existential {
        let bodies = ["R(x,y)", "R(x,y) | P(y)", "R(x,y) & Q(y)", "R(y,x)"];
        let body = bodies[rng.below(bodies.len() as u64) as usize];
        text.push_str(&format!("sentence forall x exists y: {body}\n"));
    }
    // Weight lines may only name predicates the sentence mentions.
    match rng.below(4) {
        0 if text.contains("R(") => text.push_str("weight R 2 1\n"),
        1 if text.contains("P(") => text.push_str("weight P 0.5 1\n"),
        2 if text.contains("Q(") => text.push_str("weight Q 3 2\n"),
        _ => {}
    }
    parse_problem(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfomc;
    use num::One;

    fn int(problem: &Problem) -> u64 {
        wfomc::count(problem).unwrap().to_integer().to_u64().unwrap()
    }

    #[test]
    fn preset_counts_match_known_sequences() {
        assert_eq!(int(&preset("functions", 3, 0).unwrap()), 27);
        assert_eq!(int(&preset("functions-no-fixpoint", 4, 0).unwrap()), 81);
        assert_eq!(int(&preset("permutations", 4, 0).unwrap()), 24);
        assert_eq!(int(&preset("derangements", 4, 0).unwrap()), 9);
        assert_eq!(int(&preset("no-isolated-vertices", 3, 0).unwrap()), 4);
        assert_eq!(int(&preset("k-regular", 5, 2).unwrap()), 12);
        assert_eq!(int(&preset("two-colored-graphs", 5, 0).unwrap()), 1442);
    }

    #[test]
    fn unknown_preset_is_reported() {
        assert!(matches!(preset("nope", 3, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn dkw_bounds_match_published_thresholds() {
        assert!((dkw_bound(100_000, 2, 0.05) - 0.0087).abs() < 2e-4);
        assert!((dkw_bound(100_000, 1, 0.05) - 0.0043).abs() < 1e-4);
        assert!(dkw_bound(200_000, 1, 0.05) < dkw_bound(100_000, 1, 0.05));
    }

    #[test]
    fn exact_distribution_is_normalized() {
        let p = preset("no-isolated-vertices", 3, 0).unwrap();
        let dist = exact_distribution(&p).unwrap();
        assert_eq!(dist.len(), 4);
        let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
        for (_, prob) in &dist {
            assert_eq!(*prob, quarter);
        }
        let total: BigRational = dist.iter().map(|(_, p)| p).sum();
        assert!(total.is_one());
    }

    #[test]
    fn weighted_edge_count_distribution() {
        // One undirected edge slot with weight 3 per direction: the edge
        // is present with probability 9/10.
        let p = parse_problem(
            "domain 2\nsentence forall x forall y: (E(x,y) -> E(y,x)) & ~E(x,x)\nweight E 3 1\n",
        )
        .unwrap();
        let dist = count_distribution(&p, &["E"]).unwrap();
        assert_eq!(dist.len(), 2);
        assert_eq!(dist[0], (vec![0], BigRational::new(BigInt::one(), BigInt::from(10))));
        assert_eq!(dist[1], (vec![2], BigRational::new(BigInt::from(9), BigInt::from(10))));
    }

    #[test]
    fn count_distribution_matches_enumeration() {
        let p = preset("friends-smokers", 3, 0).unwrap();
        let lifted = count_distribution(&p, &["fr", "sm"]).unwrap();
        let mut byhand: BTreeMap<Vec<u64>, BigRational> = BTreeMap::new();
        let fr = p.vocab.lookup("fr").unwrap();
        let sm = p.vocab.lookup("sm").unwrap();
        for (model, prob) in exact_distribution(&p).unwrap() {
            let key = vec![model.count_true(fr), model.count_true(sm)];
            *byhand.entry(key).or_insert_with(BigRational::zero) += prob;
        }
        let lifted: BTreeMap<Vec<u64>, BigRational> = lifted.into_iter().collect();
        assert_eq!(lifted, byhand);
    }

    #[test]
    fn ks_accepts_the_exact_sampler_and_rejects_bias() {
        let p = preset("no-isolated-vertices", 3, 0).unwrap();
        let report = validate_models(&p, 4000, 17, 0.05).unwrap();
        assert!(!report.ks.rejected, "deviation {}", report.ks.max_deviation);
        assert_eq!(report.outcomes, 4);

        // A sampler stuck on one outcome must be rejected.
        let exact = exact_distribution(&p).unwrap();
        let reference: Vec<(BigUint, BigRational)> =
            exact.into_iter().map(|(m, pr)| (m.lex_index(), pr)).collect();
        let mut stuck = BTreeMap::new();
        stuck.insert(reference[0].0.clone(), 4000u64);
        let ks = ks_test(&stuck, 4000, &reference, 0.05).unwrap();
        assert!(ks.rejected);
    }

    #[test]
    fn multivariate_ks_detects_dependence_errors() {
        // Reference: two independent fair bits. Empirical: perfectly
        // correlated bits. Marginals agree, the joint CDF differs by 1/4.
        let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
        let reference: Vec<(Vec<u64>, BigRational)> = vec![
            (vec![0, 0], quarter.clone()),
            (vec![0, 1], quarter.clone()),
            (vec![1, 0], quarter.clone()),
            (vec![1, 1], quarter),
        ];
        let mut emp = BTreeMap::new();
        emp.insert(vec![0, 0], 5000u64);
        emp.insert(vec![1, 1], 5000u64);
        let ks = ks_test_multivariate(&emp, 10_000, &reference, 0.05).unwrap();
        assert!((ks.max_deviation - 0.25).abs() < 0.01);
        assert!(ks.rejected);
    }

    #[test]
    fn random_problems_agree_with_the_oracle() {
        for index in 0..6 {
            for &existential in &[false, true] {
                let p = random_problem(3, index + u64::from(existential) * 100, existential, 3)
                    .unwrap();
                let lifted = wfomc::count(&p).unwrap();
                let brute = brute::count(&p, &BruteOptions::default()).unwrap();
                assert_eq!(lifted, brute, "mismatch on generated problem #{index}");
            }
        }
    }
}
