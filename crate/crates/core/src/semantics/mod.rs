//! Generative semantics: sampling, exact likelihoods over the reachable
//! ground trellis, expected transition counts, and classification.

mod forward;

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use crate::logic::{for_each_grounding, Atom, LogicError, Parser, PredKind, Signature, Substitution, Term, Tok, VarGen, START};
use crate::model::{Lohmm, ModelError};

pub use forward::{Edge, GroundTrellis, StepCache};

/// An observation sequence.
pub type Sequence = Vec<Atom>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error("sequence {0} has zero probability under the model")]
    ZeroLikelihoodSequence(usize),
    #[error("every class assigns zero probability to the sequence")]
    AllZeroLikelihood,
    #[error("class priors must be non-negative and sum to 1 (got {0})")]
    BadPriors(f64),
}

/// Parses a corpus: one sequence per line, atoms separated by `,`. Blank
/// lines and `#` comments are skipped. Returns `(line number, sequence)`.
pub fn parse_corpus_lines(text: &str) -> Result<Vec<(usize, Sequence)>, SemanticsError> {
    let gen = VarGen::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |e: LogicError| SemanticsError::Corpus { line: i + 1, message: e.to_string() };
        let mut p = Parser::new(line, &gen).map_err(err)?;
        if p.at_eof() {
            continue;
        }
        let mut seq = vec![p.atom().map_err(err)?];
        while *p.peek() == Tok::Comma {
            p.next();
            seq.push(p.atom().map_err(err)?);
        }
        if !p.at_eof() {
            return Err(err(p.error(format!("expected `,`, found {}", p.peek().describe()))));
        }
        if let Some(a) = seq.iter().find(|a| !a.is_ground()) {
            return Err(SemanticsError::Corpus { line: i + 1, message: format!("{a} is not ground") });
        }
        out.push((i + 1, seq));
    }
    Ok(out)
}

pub fn parse_corpus(text: &str) -> Result<Vec<Sequence>, SemanticsError> {
    Ok(parse_corpus_lines(text)?.into_iter().map(|(_, s)| s).collect())
}

pub fn format_sequence(seq: &[Atom]) -> String {
    seq.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

/// Checks that every atom is a declared observation with in-domain
/// constants.
pub fn check_sequence(sig: &Signature, seq: &[Atom]) -> Result<(), LogicError> {
    for a in seq {
        let decl = sig.decl_of(a)?;
        if decl.kind != PredKind::Obs {
            return Err(LogicError::UndeclaredPredicate(format!("{}/{} is not an observation", a.predicate, a.arity())));
        }
        sig.check_atom(a)?;
    }
    Ok(())
}

/// Expected ground transition counts `ec(b, h, o)` summed over a corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpectedCounts {
    pub table: BTreeMap<(Atom, Atom, Option<Atom>), f64>,
    pub total_sequences: usize,
    /// Total log-likelihood of the corpus under the model that produced
    /// the counts.
    pub loglik: f64,
}

impl ExpectedCounts {
    pub fn get(&self, b: &Atom, h: &Atom, o: Option<&Atom>) -> f64 {
        self.table.get(&(b.clone(), h.clone(), o.cloned())).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.table.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, &Atom, Option<&Atom>, f64)> {
        self.table.iter().map(|((b, h, o), &w)| (b, h, o.as_ref(), w))
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &ExpectedCounts) {
        for (k, w) in &other.table {
            *self.table.entry(k.clone()).or_insert(0.0) += w;
        }
        self.total_sequences += other.total_sequences;
        self.loglik += other.loglik;
    }
}

/// `ln P(obs | m)`; negative infinity for sequences the model cannot
/// produce.
pub fn log_likelihood(m: &Lohmm, obs: &[Atom]) -> Result<f64, SemanticsError> {
    let mut cache = StepCache::new(m);
    Ok(GroundTrellis::build(&mut cache, obs)?.log_likelihood())
}

/// Per-sequence log-likelihoods, in corpus order.
pub fn log_likelihoods(m: &Lohmm, data: &[Sequence]) -> Result<Vec<f64>, SemanticsError> {
    data.par_iter()
        .map_init(
            || StepCache::new(m),
            |cache, seq| Ok(GroundTrellis::build(cache, seq)?.log_likelihood()),
        )
        .collect()
}

/// Sum of per-sequence log-likelihoods.
pub fn corpus_log_likelihood(m: &Lohmm, data: &[Sequence]) -> Result<f64, SemanticsError> {
    Ok(log_likelihoods(m, data)?.into_iter().sum())
}

/// Forward-backward expected counts over a corpus. Per-sequence tables are
/// computed in parallel and merged in corpus order, so results do not
/// depend on the thread count.
pub fn expected_counts(m: &Lohmm, data: &[Sequence]) -> Result<ExpectedCounts, SemanticsError> {
    let parts: Vec<Result<ExpectedCounts, SemanticsError>> = data
        .par_iter()
        .enumerate()
        .map_init(
            || StepCache::new(m),
            |cache, (i, seq)| {
                let trellis = GroundTrellis::build(cache, seq)?;
                if !trellis.is_possible() {
                    return Err(SemanticsError::ZeroLikelihoodSequence(i));
                }
                let mut ec = ExpectedCounts { total_sequences: 1, loglik: trellis.log_likelihood(), ..Default::default() };
                trellis.accumulate(&mut ec.table);
                Ok(ec)
            },
        )
        .collect();
    let mut total = ExpectedCounts::default();
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

/// Draws a hidden path of `len + 2` states (starting at `start`) and the
/// `len` observations emitted along it.
pub fn sample<R: Rng + ?Sized>(m: &Lohmm, len: usize, rng: &mut R) -> Result<(Sequence, Sequence), ModelError> {
    let mut hidden = vec![Atom::nullary(START)];
    let mut obs = Vec::with_capacity(len);
    for _ in 0..=len {
        let b = hidden.last().expect("non-empty path");
        let g = m.most_specific_group(b)?;
        let group = &m.groups()[g];
        let weights: Vec<f64> = group.clauses.iter().map(|&c| m.transitions()[c].prob).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| ModelError::Malformed {
            clause: group.body.to_string(),
            message: e.to_string(),
        })?;
        let c = group.clauses[pick.sample(rng)];
        let t = &m.transitions()[c];
        let doms = m.clause_var_domains(c);
        let theta_b = crate::logic::subsumes(&t.body, b).expect("routed body subsumes state");
        let head = t.head.apply(&theta_b);
        let theta_h = select(m, &head, doms, rng);
        let h = head.apply(&theta_h);
        if let Some(o) = &t.obs {
            let o = o.apply(&theta_b).apply(&theta_h);
            let theta_o = select(m, &o, doms, rng);
            obs.push(o.apply(&theta_o));
        }
        hidden.push(h);
    }
    Ok((hidden, obs))
}

/// Draws a constant for every variable of `a` from its domain's
/// selection distribution.
fn select<R: Rng + ?Sized>(
    m: &Lohmm,
    a: &Atom,
    doms: &BTreeMap<crate::logic::Sym, usize>,
    rng: &mut R,
) -> Substitution {
    let mut theta = Substitution::new();
    for v in a.vars() {
        let d = doms[&v];
        let probs = &m.mu().probs[d];
        let i = WeightedIndex::new(probs).expect("selection distribution has positive mass").sample(rng);
        theta.insert(v, Term::Const(m.signature().domain(d).constants[i].clone()));
    }
    theta
}

/// A class model with its prior, for plug-in classification.
#[derive(Clone, Debug)]
pub struct ClassModel {
    pub name: String,
    pub model: Lohmm,
    pub prior: f64,
}

/// `ln P(seq | class) + ln prior` for each class, in input order.
pub fn class_scores(classes: &[ClassModel], seq: &[Atom]) -> Result<Vec<f64>, SemanticsError> {
    classes
        .iter()
        .map(|c| Ok(log_likelihood(&c.model, seq)? + c.prior.ln()))
        .collect()
}

/// Index of the class maximizing log-likelihood plus log prior; ties go to
/// the class whose name sorts first.
pub fn classify(classes: &[ClassModel], seq: &[Atom]) -> Result<usize, SemanticsError> {
    check_priors(classes)?;
    let scores = class_scores(classes, seq)?;
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| classes[a].name.cmp(&classes[b].name));
    let mut best: Option<usize> = None;
    for i in order {
        if scores[i] == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| scores[i] > scores[b]) {
            best = Some(i);
        }
    }
    best.ok_or(SemanticsError::AllZeroLikelihood)
}

pub fn check_priors(classes: &[ClassModel]) -> Result<(), SemanticsError> {
    let sum: f64 = classes.iter().map(|c| c.prior).sum();
    if classes.iter().any(|c| !(c.prior >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SemanticsError::BadPriors(sum));
    }
    Ok(())
}

/// Ground instances of every declared observation predicate.
pub fn observation_alphabet(sig: &Signature) -> Vec<Atom> {
    let mut out = Vec::new();
    for decl in sig.obs_predicates() {
        let a = sig.most_general(decl, "X");
        let doms = sig.var_domains(&a).expect("declared predicate");
        for_each_grounding(&a.vars(), &doms, sig, &mut |theta| out.push(a.apply(theta)));
    }
    out
}
