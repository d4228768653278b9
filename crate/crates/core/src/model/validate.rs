use std::collections::BTreeSet;
use std::fmt;

use super::{Lohmm, NORMALIZATION_TOLERANCE};
use crate::logic::{
    for_each_grounding, is_variant, subsumes, unify, Atom, PredKind, Signature, VarGen,
};

/// A broken model invariant, named by the body, domain or ground state
/// where it fails.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Clause probabilities of one body do not sum to one.
    Normalization { body: String, sum: f64 },
    /// A selection distribution does not sum to one or has negative mass.
    Selection { domain: String, sum: f64 },
    /// A clause probability outside `[0, 1]`.
    Probability { clause: String, prob: f64 },
    /// A ground state with several incomparable most specific bodies.
    WellFoundedness { state: String },
    /// A ground state that no body subsumes.
    Coverage { state: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Normalization { body, sum } => {
                write!(f, "NormalizationViolation({body}): transition probabilities sum to {sum}")
            }
            Violation::Selection { domain, sum } => {
                write!(f, "SelectionViolation({domain}): selection probabilities sum to {sum}")
            }
            Violation::Probability { clause, prob } => {
                write!(f, "ProbabilityViolation({clause}): {prob} is not in [0, 1]")
            }
            Violation::WellFoundedness { state } => {
                write!(f, "WellFoundednessViolation({state}): no unique most specific body")
            }
            Violation::Coverage { state } => {
                write!(f, "CoverageViolation({state}): no body subsumes this state")
            }
        }
    }
}

pub(super) fn validate(m: &Lohmm) -> Vec<Violation> {
    let mut out = Vec::new();
    let sig = m.signature();
    for t in m.transitions() {
        if !(0.0..=1.0).contains(&t.prob) {
            out.push(Violation::Probability { clause: super::clause_text(t), prob: t.prob });
        }
    }
    for g in m.groups() {
        let sum: f64 = g.clauses.iter().map(|&c| m.transitions()[c].prob).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            out.push(Violation::Normalization { body: super::named_text(&g.body), sum });
        }
    }
    for (d, probs) in sig.domains().iter().zip(&m.mu().probs) {
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || probs.iter().any(|&p| p < 0.0) {
            out.push(Violation::Selection { domain: d.name.to_string(), sum });
        }
    }
    let bodies: Vec<Atom> = m.bodies().into_iter().cloned().collect();
    if m.start_group().is_none() {
        out.push(Violation::Coverage { state: crate::logic::START.to_string() });
    }
    for decl in sig.state_predicates() {
        let general = sig.most_general(decl, "X");
        if bodies.iter().any(|b| is_variant(b, &general)) {
            continue;
        }
        let doms = sig.var_domains(&general).expect("declared predicate");
        for_each_grounding(&general.vars(), &doms, sig, &mut |theta| {
            let s = general.apply(theta);
            if !bodies.iter().any(|b| subsumes(b, &s).is_some()) {
                out.push(Violation::Coverage { state: s.to_string() });
            }
        });
    }
    let mut states = BTreeSet::new();
    for c in wellfoundedness_conflicts(&bodies, sig) {
        for s in c.states {
            if states.insert(s.to_string()) {
                out.push(Violation::WellFoundedness { state: s.to_string() });
            }
        }
    }
    out
}

/// Two incomparable bodies whose common instances lack a unique most
/// specific body.
#[derive(Clone, Debug, PartialEq)]
pub struct Conflict {
    pub first: Atom,
    pub second: Atom,
    /// Most general common instance of the two bodies.
    pub glb: Atom,
    /// Ground instances of `glb` with no unique most specific body.
    pub states: Vec<Atom>,
}

/// Finds every ground state without a unique most specific body.
///
/// A state can only be ambiguous if two incomparable minimal bodies both
/// subsume it, and then it is an instance of their most general common
/// instance, which cannot itself be a body. Only those instances are
/// enumerated.
pub fn wellfoundedness_conflicts(bodies: &[Atom], sig: &Signature) -> Vec<Conflict> {
    let gen = VarGen::new();
    let mut out = Vec::new();
    for (i, a) in bodies.iter().enumerate() {
        for b in &bodies[i + 1..] {
            if a.predicate != b.predicate || a.arity() != b.arity() {
                continue;
            }
            if subsumes(a, b).is_some() || subsumes(b, a).is_some() {
                continue;
            }
            let b_apart = b.freshen(&gen);
            let Some(mgu) = unify(a, &b_apart) else { continue };
            let glb = a.apply(&mgu);
            if bodies.iter().any(|x| is_variant(x, &glb)) {
                continue;
            }
            let Ok(doms) = sig.var_domains(&glb) else { continue };
            if sig.decl_of(&glb).map(|d| d.kind != PredKind::State).unwrap_or(true) {
                continue;
            }
            let mut states = Vec::new();
            for_each_grounding(&glb.vars(), &doms, sig, &mut |theta| {
                let s = glb.apply(theta);
                if !has_unique_minimum(bodies, &s) {
                    states.push(s);
                }
            });
            if !states.is_empty() {
                out.push(Conflict { first: a.clone(), second: b.clone(), glb, states });
            }
        }
    }
    out
}

fn has_unique_minimum(bodies: &[Atom], s: &Atom) -> bool {
    let cands: Vec<&Atom> = bodies.iter().filter(|b| subsumes(b, s).is_some()).collect();
    let minimal = cands
        .iter()
        .filter(|c| cands.iter().all(|d| subsumes(d, c).is_some()))
        .count();
    minimal == 1
}
