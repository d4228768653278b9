//! The specialization operator and its coverage and well-foundedness
//! repairs.

use std::collections::{BTreeMap, HashSet};

use crate::logic::{is_variant, subsumes, Atom, Signature, Substitution, Sym, Term, VarGen};
use crate::model::{wellfoundedness_conflicts, AbstractTransition, Lohmm};

/// Rounds of glb insertion before a candidate is given up.
const MAX_REPAIR_ROUNDS: usize = 16;

/// Variable-to-domain map of a clause, or `None` if it is ill-typed.
fn clause_domains(cl: &AbstractTransition, sig: &Signature) -> Option<BTreeMap<Sym, usize>> {
    let mut doms = BTreeMap::new();
    for a in std::iter::once(&cl.body).chain(cl.obs.iter()).chain(std::iter::once(&cl.head)) {
        sig.extend_var_domains(a, &mut doms).ok()?;
    }
    Some(doms)
}

/// All single-step specializations of `cl`: each variable bound to each
/// constant of its domain, then each same-domain pair of variables
/// unified (the later one is replaced by the earlier one). Variables are
/// taken in order of first occurrence in body, observation, head.
pub fn minimal_specializations(cl: &AbstractTransition, sig: &Signature) -> Vec<Substitution> {
    let Some(doms) = clause_domains(cl, sig) else { return Vec::new() };
    let vars = cl.vars();
    let mut out = Vec::new();
    for v in &vars {
        for c in &sig.domain(doms[v]).constants {
            out.push(Substitution::from_pairs([(v.clone(), Term::Const(c.clone()))]));
        }
    }
    for (i, a) in vars.iter().enumerate() {
        for b in &vars[i + 1..] {
            if doms[a] == doms[b] {
                out.push(Substitution::from_pairs([(b.clone(), Term::Var(a.clone()))]));
            }
        }
    }
    out
}

/// Key identifying a transition set up to clause order and renaming.
pub fn structure_key(delta: &[AbstractTransition]) -> String {
    let mut keys: Vec<String> = delta.iter().map(|t| t.shape_key()).collect();
    keys.sort();
    keys.join(" ; ")
}

/// The parent group whose body is the most specific one subsuming
/// `body`, if unique.
fn parent_group(parent: &Lohmm, body: &Atom) -> Option<usize> {
    let cands: Vec<usize> = (0..parent.groups().len())
        .filter(|&g| subsumes(&parent.groups()[g].body, body).is_some())
        .collect();
    let minimal: Vec<usize> = cands
        .iter()
        .copied()
        .filter(|&c| cands.iter().all(|&d| subsumes(&parent.groups()[d].body, &parent.groups()[c].body).is_some()))
        .collect();
    match minimal.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

/// Adds a group for the new body `body`: the clauses of the parent group
/// that handled its states, instantiated to `body`, with their
/// probabilities. Returns the indices of the added clauses.
fn add_body_group(parent: &Lohmm, body: &Atom, delta: &mut Vec<AbstractTransition>, gen: &VarGen) -> Option<Vec<usize>> {
    let g = parent_group(parent, body)?;
    let mut added = Vec::new();
    for &c in &parent.groups()[g].clauses {
        let t = &parent.transitions()[c];
        let fresh = gen.renaming(&t.vars());
        let renamed = AbstractTransition {
            prob: t.prob,
            body: t.body.rename(&fresh),
            obs: t.obs.as_ref().map(|o| o.rename(&fresh)),
            head: t.head.rename(&fresh),
        };
        let theta = subsumes(&renamed.body, body)?;
        added.push(delta.len());
        delta.push(renamed.apply(&theta));
    }
    Some(added)
}

fn group_members(delta: &[AbstractTransition], body: &Atom) -> Vec<usize> {
    (0..delta.len()).filter(|&i| is_variant(&delta[i].body, body)).collect()
}

/// Inserts `cl` into the group of its body, giving it `1 / (n + 1)` and
/// rescaling the others. Returns false if the group already has a clause
/// of the same shape.
fn insert_rescaled(delta: &mut Vec<AbstractTransition>, mut cl: AbstractTransition) -> bool {
    let members = group_members(delta, &cl.body);
    if members.iter().any(|&i| delta[i].same_shape(&cl)) {
        return false;
    }
    let n = members.len() as f64;
    for &i in &members {
        delta[i].prob *= n / (n + 1.0);
    }
    cl.prob = 1.0 / (n + 1.0);
    delta.push(cl);
    true
}

/// The neighbor obtained by adding `cl · theta` for clause `ci`, with
/// repairs, or `None` if it duplicates an existing clause or cannot be
/// repaired.
pub fn specialize(parent: &Lohmm, ci: usize, theta: &Substitution) -> Option<Lohmm> {
    let gen = VarGen::new();
    let cl = &parent.transitions()[ci];
    let mut new = cl.apply(theta);
    let mut delta = parent.transitions().to_vec();
    if is_variant(&new.body, &cl.body) {
        let g = parent.group_of(ci);
        if parent.groups()[g].clauses.iter().any(|&c| parent.transitions()[c].same_shape(&new)) {
            return None;
        }
        delta[ci].prob /= 2.0;
        new.prob = delta[ci].prob;
        delta.push(new);
    } else if parent.bodies().iter().any(|b| is_variant(b, &new.body)) {
        if !insert_rescaled(&mut delta, new) {
            return None;
        }
    } else {
        let added = add_body_group(parent, &new.body, &mut delta, &gen)?;
        if !added.iter().any(|&i| delta[i].same_shape(&new)) {
            insert_rescaled(&mut delta, new);
        }
        repair_wellfoundedness(parent, &mut delta, &gen)?;
    }
    let m = Lohmm::new(parent.shared_signature(), parent.mu().clone(), delta).ok()?;
    if m.validate().is_empty() {
        Some(m)
    } else {
        None
    }
}

/// Adds greatest-lower-bound bodies until every ground state has a unique
/// most specific body.
fn repair_wellfoundedness(parent: &Lohmm, delta: &mut Vec<AbstractTransition>, gen: &VarGen) -> Option<()> {
    for _ in 0..MAX_REPAIR_ROUNDS {
        let mut bodies: Vec<Atom> = Vec::new();
        for t in delta.iter() {
            if !bodies.iter().any(|b| is_variant(b, &t.body)) {
                bodies.push(t.body.clone());
            }
        }
        let conflicts = wellfoundedness_conflicts(&bodies, parent.signature());
        if conflicts.is_empty() {
            return Some(());
        }
        let mut added: Vec<Atom> = Vec::new();
        for c in conflicts {
            if added.iter().any(|a| is_variant(a, &c.glb)) {
                continue;
            }
            add_body_group(parent, &c.glb, delta, gen)?;
            added.push(c.glb);
        }
    }
    None
}

/// Neighbors of `m` under single-clause specialization, deduplicated by
/// structure, with the number of candidates dropped because they repeat an
/// existing clause or could not be repaired.
pub fn refine_counted(m: &Lohmm) -> (Vec<Lohmm>, usize) {
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(structure_key(m.transitions()));
    let mut out = Vec::new();
    let mut dropped = 0;
    for ci in 0..m.num_transitions() {
        for theta in minimal_specializations(&m.transitions()[ci], m.signature()) {
            match specialize(m, ci, &theta) {
                Some(n) => {
                    if seen.insert(structure_key(n.transitions())) {
                        out.push(n);
                    }
                }
                None => dropped += 1,
            }
        }
    }
    (out, dropped)
}

/// Neighbors of `m`: one specialized clause plus any repairs, each
/// passing validation. Order follows clause index, then substitution
/// order.
pub fn refine(m: &Lohmm) -> Vec<Lohmm> {
    refine_counted(m).0
}
