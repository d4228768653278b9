//! Ground one-step semantics: selection probabilities, matching transitions
//! and composite step probabilities `P(h, o | b)`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use super::{constant_index, Lohmm, ModelError};
use crate::logic::{for_each_grounding, subsumes, Atom, Signature, Substitution, Sym};

/// Selection probability `μ(ground | abstract)`: the product over the
/// variables bound when matching `abstract` to `ground` of the domain
/// probability of the chosen constant. Repeated variables count once.
pub fn mu_prob(m: &Lohmm, abstract_atom: &Atom, ground: &Atom) -> Result<f64, ModelError> {
    let theta = subsumes(abstract_atom, ground).ok_or_else(|| ModelError::NotAnInstance {
        abstract_atom: abstract_atom.to_string(),
        ground: ground.to_string(),
    })?;
    let doms = m.signature().var_domains(abstract_atom)?;
    let mut p = 1.0;
    for (v, t) in theta.iter() {
        let d = doms[v];
        let c = constant_index(m.signature(), d, t).ok_or_else(|| {
            ModelError::Logic(crate::logic::LogicError::DomainMismatch {
                constant: t.to_string(),
                domain: m.signature().domain(d).name.to_string(),
            })
        })?;
        p *= m.mu().prob(d, c);
    }
    Ok(p)
}

/// Transitions of the most specific body for ground state `b`, each with
/// the substitution matching its body to `b`.
pub fn matching_transitions(m: &Lohmm, b: &Atom) -> Result<Vec<(usize, Substitution)>, ModelError> {
    let g = m.most_specific_group(b)?;
    let body = &m.groups()[g].body;
    let theta = subsumes(body, b).expect("group body subsumes the routed state");
    Ok(m.groups()[g].clauses.iter().map(|&c| (c, theta.clone())).collect())
}

/// Composite probability of moving from ground `b` to ground `h` while
/// emitting `o` (`None` only out of `start`).
pub fn ground_step_prob(m: &Lohmm, b: &Atom, h: &Atom, o: Option<&Atom>) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (c, theta_b) in matching_transitions(m, b)? {
        let t = &m.transitions()[c];
        let head = t.head.apply(&theta_b);
        let Some(theta_h) = subsumes(&head, h) else { continue };
        let Ok(mu_h) = mu_prob(m, &head, h) else { continue };
        let mu_o = match (&t.obs, o) {
            (None, None) => 1.0,
            (Some(obs), Some(o)) => {
                let obs = obs.apply(&theta_b).apply(&theta_h);
                match mu_prob(m, &obs, o) {
                    Ok(p) => p,
                    Err(_) => continue,
                }
            }
            _ => continue,
        };
        total += t.prob * mu_h * mu_o;
    }
    Ok(total)
}

/// One clause's contribution to `P(h, o | b)` in symbolic form: the clause
/// probability times one selection factor per μ-selected variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StepTerm {
    pub clause: usize,
    /// `(domain, constant)` pairs, one per selected variable.
    pub factors: Vec<(usize, usize)>,
}

/// The non-zero clause contributions to `P(h, o | b)`. Variables bound by
/// matching the body are not selected and contribute no factor.
pub fn step_terms(m: &Lohmm, b: &Atom, h: &Atom, o: Option<&Atom>) -> Result<Vec<StepTerm>, ModelError> {
    let mut out = Vec::new();
    for (c, theta_b) in matching_transitions(m, b)? {
        let t = &m.transitions()[c];
        let doms = m.clause_var_domains(c);
        let head = t.head.apply(&theta_b);
        let Some(theta_h) = subsumes(&head, h) else { continue };
        let mut factors = Vec::new();
        if !push_factors(m.signature(), doms, &theta_h, &mut factors) {
            continue;
        }
        match (&t.obs, o) {
            (None, None) => {}
            (Some(obs), Some(o)) => {
                let obs = obs.apply(&theta_b).apply(&theta_h);
                let Some(theta_o) = subsumes(&obs, o) else { continue };
                if !push_factors(m.signature(), doms, &theta_o, &mut factors) {
                    continue;
                }
            }
            _ => continue,
        }
        out.push(StepTerm { clause: c, factors });
    }
    Ok(out)
}

fn push_factors(
    sig: &Signature,
    doms: &BTreeMap<Sym, usize>,
    theta: &Substitution,
    out: &mut Vec<(usize, usize)>,
) -> bool {
    for (v, t) in theta.iter() {
        let d = doms[v];
        match constant_index(sig, d, t) {
            Some(c) => out.push((d, c)),
            None => return false,
        }
    }
    true
}

/// Ground heads `h` with possibly non-zero `P(h, o | b)`.
pub fn successors_emitting(m: &Lohmm, b: &Atom, o: Option<&Atom>) -> Result<Vec<Atom>, ModelError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (c, theta_b) in matching_transitions(m, b)? {
        let t = &m.transitions()[c];
        let doms = m.clause_var_domains(c);
        let mut head = t.head.apply(&theta_b);
        match (&t.obs, o) {
            (None, None) => {}
            (Some(obs), Some(o)) => {
                let obs = obs.apply(&theta_b);
                let Some(theta_o) = subsumes(&obs, o) else { continue };
                head = head.apply(&theta_o);
            }
            _ => continue,
        }
        let vars = head.vars();
        for_each_grounding(&vars, doms, m.signature(), &mut |theta| {
            let h = head.apply(theta);
            if seen.insert(h.clone()) {
                out.push(h);
            }
        });
    }
    Ok(out)
}

/// All ground `(h, o)` pairs reachable in one step from `b`.
pub fn successor_pairs(m: &Lohmm, b: &Atom) -> Result<Vec<(Atom, Option<Atom>)>, ModelError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (c, theta_b) in matching_transitions(m, b)? {
        let t = &m.transitions()[c];
        let doms = m.clause_var_domains(c);
        let head = t.head.apply(&theta_b);
        let obs = t.obs.as_ref().map(|o| o.apply(&theta_b));
        for_each_grounding(&head.vars(), doms, m.signature(), &mut |theta_h| {
            let h = head.apply(theta_h);
            match &obs {
                None => {
                    if seen.insert((h.clone(), None)) {
                        out.push((h, None));
                    }
                }
                Some(obs) => {
                    let obs = obs.apply(theta_h);
                    for_each_grounding(&obs.vars(), doms, m.signature(), &mut |theta_o| {
                        let key = (h.clone(), Some(obs.apply(theta_o)));
                        if seen.insert(key.clone()) {
                            out.push(key);
                        }
                    });
                }
            }
        });
    }
    Ok(out)
}

/// Ground states reachable from `start`, in breadth-first order, stopping
/// after `limit` states.
pub fn reachable_states(m: &Lohmm, limit: usize) -> Result<Vec<Atom>, ModelError> {
    let start = Atom::nullary(crate::logic::START);
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::from([start.clone()]);
    seen.insert(start);
    while let Some(s) = queue.pop_front() {
        order.push(s.clone());
        if order.len() >= limit {
            break;
        }
        for (h, _) in successor_pairs(m, &s)? {
            if seen.insert(h.clone()) {
                queue.push_back(h);
            }
        }
    }
    Ok(order)
}
