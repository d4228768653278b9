//! First-order syntax: typed terms and atoms, substitutions, unification,
//! subsumption, grounding and text I/O.

mod parse;
mod signature;
mod term;
mod unify;

pub use parse::{parse_atom, parse_atom_list, tokenize, Parser, Tok, Token};
pub use signature::{ground_instances, Domain, PredDecl, PredKind, Signature, START};
pub(crate) use signature::for_each_grounding;
pub use term::{format_atom, Atom, Substitution, Sym, Term, VarGen};
pub(crate) use term::printable_names;
pub use unify::{is_variant, strictly_subsumes, subsumes, unify, unify_terms_mgu};

/// Apply a substitution to an atom.
pub fn apply(a: &Atom, theta: &Substitution) -> Atom {
    a.apply(theta)
}

/// Rename all variables of `a` apart.
pub fn freshen(a: &Atom, gen: &VarGen) -> Atom {
    a.freshen(gen)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogicError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared predicate {0}")]
    UndeclaredPredicate(String),
    #[error("variable {var} occupies positions of different domains ({first} vs {second})")]
    SharedVariableConflict { var: String, first: String, second: String },
    #[error("constant {constant} is not in domain {domain}")]
    DomainMismatch { constant: String, domain: String },
    #[error("domain {0} is empty")]
    EmptyDomain(String),
    #[error("duplicate constant {constant} in domain {domain}")]
    DuplicateConstant { domain: String, constant: String },
    #[error("unknown domain {0}")]
    UnknownDomain(String),
    #[error("duplicate declaration: {0}")]
    DuplicateDeclaration(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn user_sig() -> Signature {
        let mut sig = Signature::new();
        sig.add_domain("d", &["a", "b", "c"]).unwrap();
        sig.add_predicate(PredKind::State, "p", &["d", "d", "d"]).unwrap();
        sig
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        prop_oneof![
            prop::sample::select(vec!["X", "Y", "Z"]).prop_map(Term::var),
            prop::sample::select(vec!["a", "b", "c"]).prop_map(Term::constant),
        ]
    }

    fn arb_atom() -> impl Strategy<Value = Atom> {
        prop::collection::vec(arb_term(), 3).prop_map(|args| Atom::new("p", args))
    }

    fn arb_nested() -> impl Strategy<Value = Term> {
        arb_term().prop_recursive(3, 12, 2, |inner| {
            prop::collection::vec(inner, 1..3).prop_map(|args| Term::compound("f", args))
        })
    }

    proptest! {
        #[test]
        fn unifier_equalizes(a in arb_atom(), b in arb_atom()) {
            let b = b.freshen(VarGen::global());
            if let Some(u) = unify(&a, &b) {
                prop_assert!(u.is_idempotent());
                prop_assert_eq!(a.apply(&u), b.apply(&u));
            }
        }

        #[test]
        fn unifier_equalizes_nested(x in arb_nested(), y in arb_nested()) {
            let a = Atom::new("q", vec![x]);
            let b = Atom::new("q", vec![y]);
            if let Some(u) = unify(&a, &b) {
                prop_assert!(u.is_idempotent());
                prop_assert_eq!(a.apply(&u), b.apply(&u));
            }
        }

        #[test]
        fn subsumption_implies_ground_inclusion(g in arb_atom(), s in arb_atom()) {
            let sig = user_sig();
            if subsumes(&g, &s).is_some() {
                let general = ground_instances(&g, &sig).unwrap();
                for x in ground_instances(&s, &sig).unwrap() {
                    prop_assert!(general.contains(&x));
                }
            }
        }

        #[test]
        fn subsumption_reflexive_and_transitive(a in arb_atom(), b in arb_atom(), c in arb_atom()) {
            prop_assert!(subsumes(&a, &a).is_some());
            let b = b.freshen(VarGen::global());
            let c = c.freshen(VarGen::global());
            if subsumes(&a, &b).is_some() && subsumes(&b, &c).is_some() {
                prop_assert!(subsumes(&a, &c).is_some());
            }
        }

        #[test]
        fn format_parse_round_trip(a in arb_atom()) {
            let back = parse_atom(&format_atom(&a)).unwrap();
            prop_assert!(is_variant(&a, &back));
        }

        #[test]
        fn freshen_preserves_shape(a in arb_atom()) {
            let f = freshen(&a, VarGen::global());
            prop_assert!(is_variant(&a, &f));
            for v in f.vars() {
                prop_assert!(!a.vars().contains(&v));
            }
        }
    }

    #[test]
    fn freshen_examples() {
        let gen = VarGen::new();
        let a = parse_atom("emacs(F, U)").unwrap();
        let f = freshen(&a, &gen);
        assert_eq!(f.vars().len(), 2);
        assert!(f.vars().iter().all(|v| !a.vars().contains(v)));
        assert_eq!(freshen(&parse_atom("ls").unwrap(), &gen), parse_atom("ls").unwrap());
        let p = freshen(&parse_atom("p(X, X)").unwrap(), &gen);
        assert_eq!(p.args[0], p.args[1]);
        assert!(p.args[0].is_var());
    }
}
