//! Most general unifiers and one-way matching on atoms.

use std::collections::BTreeMap;

use super::term::{Atom, Substitution, Sym, Term};

/// Most general unifier of two atoms, with occurs check.
///
/// The result is idempotent, so a single simultaneous application suffices.
pub fn unify(a: &Atom, b: &Atom) -> Option<Substitution> {
    if a.predicate != b.predicate || a.arity() != b.arity() {
        return None;
    }
    let mut env: BTreeMap<Sym, Term> = BTreeMap::new();
    for (x, y) in a.args.iter().zip(&b.args) {
        unify_terms(x, y, &mut env)?;
    }
    let resolved = env
        .keys()
        .map(|v| (v.clone(), resolve(&Term::Var(v.clone()), &env)))
        .collect::<Vec<_>>();
    Some(Substitution::from_pairs(resolved))
}

pub fn unify_terms_mgu(a: &Term, b: &Term) -> Option<Substitution> {
    let mut env = BTreeMap::new();
    unify_terms(a, b, &mut env)?;
    let resolved = env
        .keys()
        .map(|v| (v.clone(), resolve(&Term::Var(v.clone()), &env)))
        .collect::<Vec<_>>();
    Some(Substitution::from_pairs(resolved))
}

fn walk<'a>(mut t: &'a Term, env: &'a BTreeMap<Sym, Term>) -> &'a Term {
    while let Term::Var(v) = t {
        match env.get(v) {
            Some(next) => t = next,
            None => break,
        }
    }
    t
}

fn resolve(t: &Term, env: &BTreeMap<Sym, Term>) -> Term {
    match walk(t, env) {
        Term::Compound(f, args) => {
            Term::Compound(f.clone(), args.iter().map(|a| resolve(a, env)).collect())
        }
        other => other.clone(),
    }
}

fn occurs(v: &str, t: &Term, env: &BTreeMap<Sym, Term>) -> bool {
    match walk(t, env) {
        Term::Var(w) => &**w == v,
        Term::Const(_) => false,
        Term::Compound(_, args) => args.iter().any(|a| occurs(v, a, env)),
    }
}

fn unify_terms(a: &Term, b: &Term, env: &mut BTreeMap<Sym, Term>) -> Option<()> {
    let a = walk(a, env).clone();
    let b = walk(b, env).clone();
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => Some(()),
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if occurs(x, t, env) {
                return None;
            }
            env.insert(x.clone(), t.clone());
            Some(())
        }
        (Term::Const(c), Term::Const(d)) => (c == d).then_some(()),
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            if f != g || xs.len() != ys.len() {
                return None;
            }
            for (x, y) in xs.iter().zip(ys) {
                unify_terms(x, y, env)?;
            }
            Some(())
        }
        _ => None,
    }
}

/// One-way matching: a substitution over the variables of `general` only,
/// such that `general` under it equals `specific`.
///
/// Variables of `specific` are treated as constants.
pub fn subsumes(general: &Atom, specific: &Atom) -> Option<Substitution> {
    if general.predicate != specific.predicate || general.arity() != specific.arity() {
        return None;
    }
    let mut env: BTreeMap<Sym, Term> = BTreeMap::new();
    for (g, s) in general.args.iter().zip(&specific.args) {
        match_term(g, s, &mut env)?;
    }
    env.retain(|v, t| !matches!(t, Term::Var(w) if w == v));
    Some(Substitution::from_pairs(env))
}

pub(crate) fn match_term(g: &Term, s: &Term, env: &mut BTreeMap<Sym, Term>) -> Option<()> {
    match g {
        Term::Var(v) => match env.get(v) {
            Some(bound) => (bound == s).then_some(()),
            None => {
                env.insert(v.clone(), s.clone());
                Some(())
            }
        },
        Term::Const(c) => matches!(s, Term::Const(d) if c == d).then_some(()),
        Term::Compound(f, xs) => match s {
            Term::Compound(g2, ys) if f == g2 && xs.len() == ys.len() => {
                for (x, y) in xs.iter().zip(ys) {
                    match_term(x, y, env)?;
                }
                Some(())
            }
            _ => None,
        },
    }
}

/// True when the two atoms are equal up to a bijective variable renaming.
pub fn is_variant(a: &Atom, b: &Atom) -> bool {
    match (subsumes(a, b), subsumes(b, a)) {
        (Some(ab), Some(_)) => ab.iter().all(|(_, t)| t.is_var()) && {
            let mut targets: Vec<&Term> = ab.iter().map(|(_, t)| t).collect();
            targets.sort();
            targets.windows(2).all(|w| w[0] != w[1])
        },
        _ => false,
    }
}

/// Strictly more specific: `general` subsumes `specific` but not vice versa.
pub fn strictly_subsumes(general: &Atom, specific: &Atom) -> bool {
    subsumes(general, specific).is_some() && subsumes(specific, general).is_none()
}
