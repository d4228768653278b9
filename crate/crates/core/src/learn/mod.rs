//! Parameter estimation: the expected score over frozen ground counts, its
//! gradients, softmax reparameterization and the generalized EM loop.

mod optimize;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{step_terms, Lohmm, ModelError, SelectionDistribution};
use crate::semantics::{ExpectedCounts, SemanticsError};

pub use optimize::{gem_inner_loop, improve_params, InnerLoopResult, OptimizerConfig};

/// Probabilities below this are treated as zero when scoring counts.
pub const MIN_PROB: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("positive-count transition {0} has zero probability")]
    IncompatibleCounts(String),
}

/// Unconstrained softmax parameters: one group per body (clauses in group
/// order) and one per domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub trans: Vec<Vec<f64>>,
    pub select: Vec<Vec<f64>>,
}

/// Partial derivatives with respect to the induced probabilities, shaped
/// like [`ParamVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGradient {
    pub trans: Vec<Vec<f64>>,
    pub select: Vec<Vec<f64>>,
}

pub fn softmax(beta: &[f64]) -> Vec<f64> {
    let max = beta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = beta.iter().map(|b| (b - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

fn log_floor(p: f64) -> f64 {
    p.max(MIN_PROB).ln()
}

impl ParamVector {
    /// Parameters reproducing the model's current probabilities.
    pub fn from_model(m: &Lohmm) -> ParamVector {
        ParamVector {
            trans: m
                .groups()
                .iter()
                .map(|g| g.clauses.iter().map(|&c| log_floor(m.transitions()[c].prob)).collect())
                .collect(),
            select: m.mu().probs.iter().map(|d| d.iter().map(|&p| log_floor(p)).collect()).collect(),
        }
    }

    /// Independent standard normal draws for every parameter.
    pub fn random<R: Rng + ?Sized>(m: &Lohmm, rng: &mut R) -> ParamVector {
        let mut p = ParamVector::from_model(m);
        for v in p.trans.iter_mut().chain(p.select.iter_mut()).flatten() {
            *v = rng.sample(StandardNormal);
        }
        p
    }

    pub fn trans_lambdas(&self) -> Vec<Vec<f64>> {
        self.trans.iter().map(|g| softmax(g)).collect()
    }

    pub fn selection(&self) -> SelectionDistribution {
        SelectionDistribution { probs: self.select.iter().map(|g| softmax(g)).collect() }
    }

    /// Clause probabilities indexed like [`Lohmm::transitions`].
    pub fn clause_probs(&self, m: &Lohmm) -> Vec<f64> {
        let mut out = vec![0.0; m.num_transitions()];
        for (g, lambdas) in m.groups().iter().zip(self.trans_lambdas()) {
            for (&c, l) in g.clauses.iter().zip(lambdas) {
                out[c] = l;
            }
        }
        out
    }

    /// The model structure with these parameters' induced probabilities.
    pub fn apply(&self, m: &Lohmm) -> Lohmm {
        m.with_probabilities(&self.clause_probs(m), self.selection())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.trans.iter().chain(self.select.iter()).flatten().copied().collect()
    }

    /// Same shape as `self`, filled from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> ParamVector {
        let mut it = flat.iter().copied();
        let mut fill = |groups: &[Vec<f64>]| -> Vec<Vec<f64>> {
            groups.iter().map(|g| g.iter().map(|_| it.next().expect("flat length")).collect()).collect()
        };
        let trans = fill(&self.trans);
        let select = fill(&self.select);
        ParamVector { trans, select }
    }

    /// Lengths of the softmax groups in flattened order.
    pub fn group_sizes(&self) -> Vec<usize> {
        self.trans.iter().chain(self.select.iter()).map(Vec::len).collect()
    }
}

/// Softmax chain rule per group:
/// `dQ/dβ_i = λ_i (dQ/dλ_i − Σ_l λ_l dQ/dλ_l)`.
pub fn chain_to_beta(grad: &LambdaGradient, params: &ParamVector) -> ParamVector {
    let chain = |g: &[f64], beta: &[f64]| -> Vec<f64> {
        let lambda = softmax(beta);
        let mean: f64 = lambda.iter().zip(g).map(|(l, d)| l * d).sum();
        lambda.iter().zip(g).map(|(l, d)| l * (d - mean)).collect()
    };
    ParamVector {
        trans: grad.trans.iter().zip(&params.trans).map(|(g, b)| chain(g, b)).collect(),
        select: grad.select.iter().zip(&params.select).map(|(g, b)| chain(g, b)).collect(),
    }
}

/// One clause's symbolic contribution to a triple's probability.
#[derive(Clone, Debug)]
struct Term {
    clause: usize,
    /// Flattened selection indices, one per selected variable.
    factors: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Entry {
    weight: f64,
    group: usize,
    terms: Vec<Term>,
    label: String,
}

/// The expected score `Q = Σ ec(b,h,o) ln P(h,o|b)` for a fixed structure
/// and fixed counts, compiled to flat clause and selection indices so that
/// evaluation does no symbolic work.
#[derive(Clone, Debug)]
pub struct Objective {
    entries: Vec<Entry>,
    /// `(group, position in group)` of every clause.
    clause_pos: Vec<(usize, usize)>,
    group_sizes: Vec<usize>,
    domain_offsets: Vec<usize>,
    domain_sizes: Vec<usize>,
}

impl Objective {
    /// Fails with [`LearnError::IncompatibleCounts`] if some positive-count
    /// triple cannot be produced by any clause of `m`.
    pub fn new(m: &Lohmm, ec: &ExpectedCounts) -> Result<Objective, LearnError> {
        let sig = m.signature();
        let mut domain_offsets = Vec::with_capacity(sig.domains().len());
        let mut off = 0;
        for d in sig.domains() {
            domain_offsets.push(off);
            off += d.len();
        }
        let mut clause_pos = vec![(0, 0); m.num_transitions()];
        for (gi, g) in m.groups().iter().enumerate() {
            for (k, &c) in g.clauses.iter().enumerate() {
                clause_pos[c] = (gi, k);
            }
        }
        let mut entries = Vec::with_capacity(ec.len());
        for (b, h, o, w) in ec.iter() {
            if w <= 0.0 {
                continue;
            }
            let label = || match o {
                Some(o) => format!("{b} -- {o} --> {h}"),
                None => format!("{b} --> {h}"),
            };
            let terms = match step_terms(m, b, h, o) {
                Ok(t) => t,
                Err(ModelError::NoMatchingBody(_)) | Err(ModelError::AmbiguousBody(_)) => {
                    return Err(LearnError::IncompatibleCounts(label()))
                }
                Err(e) => return Err(e.into()),
            };
            if terms.is_empty() {
                return Err(LearnError::IncompatibleCounts(label()));
            }
            let group = m.group_of(terms[0].clause);
            let terms = terms
                .into_iter()
                .map(|t| Term {
                    clause: t.clause,
                    factors: t.factors.iter().map(|&(d, c)| domain_offsets[d] + c).collect(),
                })
                .collect();
            entries.push(Entry { weight: w, group, terms, label: label() });
        }
        Ok(Objective {
            entries,
            clause_pos,
            group_sizes: m.groups().iter().map(|g| g.clauses.len()).collect(),
            domain_offsets,
            domain_sizes: sig.domains().iter().map(|d| d.len()).collect(),
        })
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    fn flat_probs(&self, params: &ParamVector) -> (Vec<f64>, Vec<f64>) {
        let sel: Vec<Vec<f64>> = params.select.iter().map(|g| softmax(g)).collect();
        self.flat_lambdas(&params.trans_lambdas(), &sel)
    }

    fn flat_lambdas(&self, trans: &[Vec<f64>], select: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let p: Vec<f64> = self.clause_pos.iter().map(|&(g, k)| trans[g][k]).collect();
        let mu: Vec<f64> = select.iter().flatten().copied().collect();
        (p, mu)
    }

    fn entry_prob(e: &Entry, p: &[f64], mu: &[f64]) -> f64 {
        e.terms
            .iter()
            .map(|t| t.factors.iter().fold(p[t.clause], |acc, &f| acc * mu[f]))
            .sum()
    }

    pub fn value(&self, params: &ParamVector) -> Result<f64, LearnError> {
        let (p, mu) = self.flat_probs(params);
        self.value_flat(&p, &mu)
    }

    /// `Q` at arbitrary (not necessarily normalized) probabilities, grouped
    /// like [`ParamVector`].
    pub fn value_lambda(&self, trans: &[Vec<f64>], select: &[Vec<f64>]) -> Result<f64, LearnError> {
        let (p, mu) = self.flat_lambdas(trans, select);
        self.value_flat(&p, &mu)
    }

    fn value_flat(&self, p: &[f64], mu: &[f64]) -> Result<f64, LearnError> {
        let mut q = 0.0;
        for e in &self.entries {
            let prob = Self::entry_prob(e, p, mu);
            if !(prob >= MIN_PROB) {
                return Err(LearnError::IncompatibleCounts(e.label.clone()));
            }
            q += e.weight * prob.ln();
        }
        Ok(q)
    }

    /// `Q` and its partial derivatives with respect to every clause
    /// probability and selection probability.
    pub fn lambda_gradient(&self, params: &ParamVector) -> Result<(f64, LambdaGradient), LearnError> {
        let (p, mu) = self.flat_probs(params);
        self.gradient_flat(&p, &mu)
    }

    /// Like [`Objective::lambda_gradient`] at arbitrary probabilities.
    pub fn lambda_gradient_at(&self, trans: &[Vec<f64>], select: &[Vec<f64>]) -> Result<(f64, LambdaGradient), LearnError> {
        let (p, mu) = self.flat_lambdas(trans, select);
        self.gradient_flat(&p, &mu)
    }

    fn gradient_flat(&self, p: &[f64], mu: &[f64]) -> Result<(f64, LambdaGradient), LearnError> {
        let mut gp = vec![0.0; p.len()];
        let mut gmu = vec![0.0; mu.len()];
        let mut q = 0.0;
        for e in &self.entries {
            let prob = Self::entry_prob(e, p, mu);
            if !(prob >= MIN_PROB) {
                return Err(LearnError::IncompatibleCounts(e.label.clone()));
            }
            q += e.weight * prob.ln();
            let scale = e.weight / prob;
            for t in &e.terms {
                let sel: f64 = t.factors.iter().map(|&f| mu[f]).product();
                gp[t.clause] += scale * sel;
                for (j, &fj) in t.factors.iter().enumerate() {
                    let others: f64 = t
                        .factors
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != j)
                        .map(|(_, &f)| mu[f])
                        .product();
                    gmu[fj] += scale * p[t.clause] * others;
                }
            }
        }
        let mut trans: Vec<Vec<f64>> = self.group_sizes.iter().map(|&n| vec![0.0; n]).collect();
        for (c, &(g, k)) in self.clause_pos.iter().enumerate() {
            trans[g][k] = gp[c];
        }
        let select = self
            .domain_offsets
            .iter()
            .zip(&self.domain_sizes)
            .map(|(&o, &n)| gmu[o..o + n].to_vec())
            .collect();
        Ok((q, LambdaGradient { trans, select }))
    }

    /// `Q` and its gradient in softmax parameter space.
    pub fn beta_gradient(&self, params: &ParamVector) -> Result<(f64, ParamVector), LearnError> {
        let (q, g) = self.lambda_gradient(params)?;
        Ok((q, chain_to_beta(&g, params)))
    }

    /// Expected number of draws from each softmax group, in flattened
    /// group order; used to scale ascent directions.
    pub fn group_masses(&self) -> Vec<f64> {
        let mut trans = vec![0.0; self.group_sizes.len()];
        let mut select = vec![0.0; self.domain_sizes.len()];
        for e in &self.entries {
            trans[e.group] += e.weight;
            if let Some(t) = e.terms.first() {
                for &f in &t.factors {
                    let d = self.domain_offsets.partition_point(|&o| o <= f) - 1;
                    select[d] += e.weight;
                }
            }
        }
        trans.into_iter().chain(select).collect()
    }
}

/// `Q` of structure `m` under `params` for counts `ec`.
pub fn expected_score(m: &Lohmm, params: &ParamVector, ec: &ExpectedCounts) -> Result<f64, LearnError> {
    Objective::new(m, ec)?.value(params)
}

/// `dQ/dλ` for every clause, grouped by body.
pub fn grad_transition(m: &Lohmm, params: &ParamVector, ec: &ExpectedCounts) -> Result<Vec<Vec<f64>>, LearnError> {
    Ok(Objective::new(m, ec)?.lambda_gradient(params)?.1.trans)
}

/// `dQ/dλ` for every selection probability, grouped by domain.
pub fn grad_selection(m: &Lohmm, params: &ParamVector, ec: &ExpectedCounts) -> Result<Vec<Vec<f64>>, LearnError> {
    Ok(Objective::new(m, ec)?.lambda_gradient(params)?.1.select)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_atom;
    use crate::model::{ground_step_prob, load_model};
    use crate::semantics::{expected_counts, parse_corpus, ExpectedCounts};
    use proptest::prelude::*;

    fn fixture(name: &str) -> Lohmm {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        load_model(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    fn atom(s: &str) -> crate::logic::Atom {
        parse_atom(s).unwrap()
    }

    /// One fully ground body `s(a)` with three clauses.
    const GROUND: &str = "domain d = a, b, c .\n\
        state s/1 : d .\n\
        obs o/1 : d .\n\
        trans 1.0 : start --> s(_) .\n\
        trans 0.2 : s(a) -- o(a) --> s(a) .\n\
        trans 0.3 : s(a) -- o(b) --> s(a) .\n\
        trans 0.5 : s(a) -- o(c) --> s(a) .\n\
        trans 1.0 : s(X) -- o(X) --> s(a) .\n";

    fn ground_counts(c: [f64; 3]) -> ExpectedCounts {
        let mut ec = ExpectedCounts::default();
        for (k, n) in ["a", "b", "c"].iter().zip(c) {
            ec.table.insert((atom("s(a)"), atom("s(a)"), Some(atom(&format!("o({k})")))), n);
        }
        ec
    }

    #[test]
    fn deterministic_score() {
        let m = load_model(GROUND).unwrap();
        let p = ParamVector::from_model(&m);
        let q = expected_score(&m, &p, &ground_counts([3.0, 1.0, 2.0])).unwrap();
        let want = 3.0 * 0.2f64.ln() + 0.3f64.ln() + 2.0 * 0.5f64.ln();
        assert!((q - want).abs() < 1e-12);
        assert_eq!(expected_score(&m, &p, &ExpectedCounts::default()).unwrap(), 0.0);
    }

    #[test]
    fn score_matches_step_probabilities() {
        let m = fixture("fig1b.lohmm");
        let data = parse_corpus("emacs(lohmm), latex(lohmm), ls\nls, emacs(f1), emacs(f1)\n").unwrap();
        let ec = expected_counts(&m, &data).unwrap();
        let q = expected_score(&m, &ParamVector::from_model(&m), &ec).unwrap();
        let oracle: f64 = ec.iter().map(|(b, h, o, w)| w * ground_step_prob(&m, b, h, o).unwrap().ln()).sum();
        assert!((q - oracle).abs() < 1e-9 * oracle.abs());
    }

    #[test]
    fn single_clause_gradients() {
        let m = load_model(GROUND).unwrap();
        let p = ParamVector::from_model(&m);
        let g = grad_transition(&m, &p, &ground_counts([3.0, 0.0, 0.0])).unwrap();
        let gi = m.groups().iter().position(|g| g.body == atom("s(a)")).unwrap();
        assert!((g[gi][0] - 3.0 / 0.2).abs() < 1e-9);
        assert_eq!(g[gi][1], 0.0);

        // one free head variable: s(X) --> s(_) with only s(b) observed
        let text = "domain d = a, b .\nstate s/1 : d .\nobs o/0 .\n\
            select d : a 0.25, b 0.75 .\n\
            trans 1.0 : start --> s(_) .\ntrans 1.0 : s(X) -- o --> s(_) .\n";
        let m = load_model(text).unwrap();
        let mut ec = ExpectedCounts::default();
        ec.table.insert((atom("s(a)"), atom("s(a)"), Some(atom("o"))), 4.0);
        let g = grad_selection(&m, &ParamVector::from_model(&m), &ec).unwrap();
        assert!((g[0][0] - 4.0 / 0.25).abs() < 1e-9);
        assert_eq!(g[0][1], 0.0);
    }

    #[test]
    fn chain_rule_examples() {
        let params = ParamVector { trans: vec![vec![0.0, 0.0]], select: vec![vec![1.0, 1.0, 1.0]] };
        let g = LambdaGradient { trans: vec![vec![2.0, 0.0]], select: vec![vec![5.0, 5.0, 5.0]] };
        let b = chain_to_beta(&g, &params);
        assert!((b.trans[0][0] - 0.5).abs() < 1e-15 && (b.trans[0][1] + 0.5).abs() < 1e-15);
        assert!(b.select[0].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn incompatible_counts() {
        let m = load_model(GROUND).unwrap();
        let mut ec = ExpectedCounts::default();
        ec.table.insert((atom("s(b)"), atom("s(b)"), Some(atom("o(b)"))), 1.0);
        assert!(matches!(
            expected_score(&m, &ParamVector::from_model(&m), &ec),
            Err(LearnError::IncompatibleCounts(_))
        ));
    }

    #[test]
    fn converges_to_relative_frequencies() {
        let m = load_model(GROUND).unwrap();
        let ec = ground_counts([5.0, 3.0, 12.0]);
        let cfg = OptimizerConfig { max_iterations: 500, restarts: 1, tolerance: 0.0, ..Default::default() };
        let (p, _) = improve_params(&m, &ec, &ParamVector::from_model(&m), &cfg).unwrap();
        let gi = m.groups().iter().position(|g| g.body == atom("s(a)")).unwrap();
        let lambda = softmax(&p.trans[gi]);
        for (l, want) in lambda.iter().zip([0.25, 0.15, 0.6]) {
            assert!((l - want).abs() < 1e-3, "{lambda:?}");
        }
    }

    #[test]
    fn stationary_start_is_kept() {
        let m = load_model(GROUND).unwrap();
        let ec = ground_counts([2.0, 3.0, 5.0]);
        let start = ParamVector::from_model(&m);
        let q0 = expected_score(&m, &start, &ec).unwrap();
        let (p, q) = improve_params(&m, &ec, &start, &OptimizerConfig::default()).unwrap();
        assert!((q - q0).abs() < 1e-9);
        let gi = m.groups().iter().position(|g| g.body == atom("s(a)")).unwrap();
        for (a, b) in softmax(&p.trans[gi]).iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn improve_never_decreases() {
        let m = fixture("fig1b.lohmm");
        let data = parse_corpus("emacs(lohmm), latex(lohmm), ls\nls, emacs(f1), emacs(f1)\nlatex(hmm1)\n").unwrap();
        let ec = expected_counts(&m, &data).unwrap();
        let start = ParamVector::from_model(&m);
        let q0 = expected_score(&m, &start, &ec).unwrap();
        let (p, q) = improve_params(&m, &ec, &start, &OptimizerConfig::default()).unwrap();
        assert!(q >= q0);
        assert!((expected_score(&m, &p, &ec).unwrap() - q).abs() < 1e-9);
        let ll0 = ec.loglik;
        let ll1 = crate::semantics::corpus_log_likelihood(&p.apply(&m), &data).unwrap();
        assert!(ll1 >= ll0 - 1e-9);
    }

    #[test]
    fn inner_loop() {
        let m = fixture("fig1b.lohmm");
        let data = parse_corpus("emacs(lohmm), latex(lohmm), ls\nls, emacs(f1), emacs(f1)\nlatex(hmm1), ls\n").unwrap();
        let p0 = ParamVector::from_model(&m);
        let cfg = OptimizerConfig::default();
        let r = gem_inner_loop(&m, &p0, &data, 0, &cfg).unwrap();
        assert_eq!(r.params, p0);
        assert_eq!(r.history.len(), 1);
        let r = gem_inner_loop(&m, &p0, &data, 8, &cfg).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", r.history);
        }
        assert!(r.loglik > r.history[0]);
        let check = expected_counts(&r.params.apply(&m), &data).unwrap();
        assert_eq!(check, r.ec);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(beta in prop::collection::vec(-5.0..5.0f64, 1..6), k in -10.0..10.0f64) {
            let a = softmax(&beta);
            let shifted: Vec<f64> = beta.iter().map(|b| b + k).collect();
            let b = softmax(&shifted);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn score_ignores_table_order(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let m = load_model(GROUND).unwrap();
            let ec = ground_counts([1.5, 2.5, 0.5]);
            let mut items: Vec<_> = ec.table.clone().into_iter().collect();
            items.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p = ParamVector::from_model(&m);
            let q1 = expected_score(&m, &p, &ec).unwrap();
            let q2: f64 = items.iter().map(|((b, h, o), w)| w * ground_step_prob(&m, b, h, o.as_ref()).unwrap().ln()).sum();
            prop_assert!((q1 - q2).abs() < 1e-12);
        }
    }
}
