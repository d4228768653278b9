//! Logical HMM representation: abstract transitions, selection distribution,
//! conflict resolution by most specific body, and composite step
//! probabilities over ground atoms.

mod io;
mod step;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::logic::{printable_names, Atom, LogicError, PredKind, Signature, Sym, Term};

pub use io::{load_model, load_model_file, parse_model, save_model};
pub use step::{
    ground_step_prob, matching_transitions, mu_prob, reachable_states, step_terms,
    successor_pairs, successors_emitting, StepTerm,
};
pub use validate::{wellfoundedness_conflicts, Conflict, Violation};

/// Sum tolerance for probability groups.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("malformed transition {clause}: {message}")]
    Malformed { clause: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("model is invalid:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),
    #[error("no body subsumes ground state {0}")]
    NoMatchingBody(String),
    #[error("ground state {0} has no unique most specific body")]
    AmbiguousBody(String),
    #[error("{ground} is not an instance of {abstract_atom}")]
    NotAnInstance { abstract_atom: String, ground: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

/// A probability-labelled clause `p : body -- obs --> head`.
///
/// `obs` is `None` exactly for transitions out of `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractTransition {
    pub prob: f64,
    pub body: Atom,
    pub obs: Option<Atom>,
    pub head: Atom,
}

impl AbstractTransition {
    pub fn new(prob: f64, body: Atom, obs: Option<Atom>, head: Atom) -> Self {
        AbstractTransition { prob, body, obs, head }
    }

    /// Variables in order of first occurrence: body, then obs, then head.
    pub fn vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.body.collect_vars(&mut out);
        if let Some(o) = &self.obs {
            o.collect_vars(&mut out);
        }
        self.head.collect_vars(&mut out);
        out
    }

    pub fn apply(&self, theta: &crate::logic::Substitution) -> AbstractTransition {
        AbstractTransition {
            prob: self.prob,
            body: self.body.apply(theta),
            obs: self.obs.as_ref().map(|o| o.apply(theta)),
            head: self.head.apply(theta),
        }
    }

    /// Renames variables to a canonical scheme so that clauses equal up to
    /// renaming compare equal, and bodies that are variants become identical.
    pub fn canonical(&self) -> AbstractTransition {
        let map: BTreeMap<Sym, Sym> = self
            .vars()
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, Sym::from(format!("_C{i}"))))
            .collect();
        AbstractTransition {
            prob: self.prob,
            body: self.body.rename(&map),
            obs: self.obs.as_ref().map(|o| o.rename(&map)),
            head: self.head.rename(&map),
        }
    }

    /// True when both clauses are the same up to renaming, ignoring `prob`.
    pub fn same_shape(&self, other: &AbstractTransition) -> bool {
        let a = self.canonical();
        let b = other.canonical();
        a.body == b.body && a.obs == b.obs && a.head == b.head
    }

    pub fn shape_key(&self) -> String {
        clause_text(&self.canonical())
    }

    fn fmt_clause(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut atoms = vec![&self.body];
        if let Some(o) = &self.obs {
            atoms.push(o);
        }
        atoms.push(&self.head);
        let names = printable_names(&atoms);
        self.body.fmt_with(f, Some(&names))?;
        if let Some(o) = &self.obs {
            f.write_str(" -- ")?;
            o.fmt_with(f, Some(&names))?;
        }
        f.write_str(" --> ")?;
        self.head.fmt_with(f, Some(&names))
    }
}

impl fmt::Display for AbstractTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : ", self.prob)?;
        self.fmt_clause(f)
    }
}

/// Clause text without the probability label.
pub fn clause_text(t: &AbstractTransition) -> String {
    struct Shape<'a>(&'a AbstractTransition);
    impl fmt::Display for Shape<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            self.0.fmt_clause(f)
        }
    }
    Shape(t).to_string()
}

/// One categorical distribution per declared domain, indexed like
/// [`Signature::domains`].
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionDistribution {
    pub probs: Vec<Vec<f64>>,
}

impl SelectionDistribution {
    pub fn uniform(sig: &Signature) -> Self {
        SelectionDistribution {
            probs: sig.domains().iter().map(|d| vec![1.0 / d.len() as f64; d.len()]).collect(),
        }
    }

    pub fn prob(&self, domain: usize, constant: usize) -> f64 {
        self.probs[domain][constant]
    }
}

/// Clauses sharing one body atom.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyGroup {
    pub body: Atom,
    pub clauses: Vec<usize>,
}

/// A logical hidden Markov model: signature, selection distribution and
/// transition set, with clauses grouped by body.
#[derive(Clone, Debug)]
pub struct Lohmm {
    sig: Arc<Signature>,
    mu: SelectionDistribution,
    delta: Vec<AbstractTransition>,
    groups: Vec<BodyGroup>,
    clause_group: Vec<usize>,
    var_domains: Vec<BTreeMap<Sym, usize>>,
}

impl Lohmm {
    /// Builds a model after structural and typing checks. Semantic
    /// constraints (normalization, well-foundedness, coverage) are reported
    /// by [`Lohmm::validate`].
    pub fn new(
        sig: Arc<Signature>,
        mu: SelectionDistribution,
        delta: Vec<AbstractTransition>,
    ) -> Result<Lohmm, ModelError> {
        if mu.probs.len() != sig.domains().len()
            || mu.probs.iter().zip(sig.domains()).any(|(p, d)| p.len() != d.len())
        {
            return Err(ModelError::Malformed {
                clause: "select".into(),
                message: "selection distribution does not match the signature's domains".into(),
            });
        }
        let mut canon = Vec::with_capacity(delta.len());
        for t in &delta {
            check_clause(&sig, t)?;
            canon.push(t.canonical());
        }
        let var_domains = canon
            .iter()
            .map(|t| check_clause(&sig, t))
            .collect::<Result<Vec<_>, _>>()?;
        let mut groups: Vec<BodyGroup> = Vec::new();
        let mut clause_group = Vec::with_capacity(canon.len());
        for (i, t) in canon.iter().enumerate() {
            match groups.iter().position(|g| g.body == t.body) {
                Some(g) => {
                    groups[g].clauses.push(i);
                    clause_group.push(g);
                }
                None => {
                    clause_group.push(groups.len());
                    groups.push(BodyGroup { body: t.body.clone(), clauses: vec![i] });
                }
            }
        }
        Ok(Lohmm { sig, mu, delta: canon, groups, clause_group, var_domains })
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn shared_signature(&self) -> Arc<Signature> {
        self.sig.clone()
    }

    pub fn mu(&self) -> &SelectionDistribution {
        &self.mu
    }

    pub fn transitions(&self) -> &[AbstractTransition] {
        &self.delta
    }

    pub fn groups(&self) -> &[BodyGroup] {
        &self.groups
    }

    /// The ordered set of distinct bodies.
    pub fn bodies(&self) -> Vec<&Atom> {
        self.groups.iter().map(|g| &g.body).collect()
    }

    pub fn group_of(&self, clause: usize) -> usize {
        self.clause_group[clause]
    }

    pub fn clause_var_domains(&self, clause: usize) -> &BTreeMap<Sym, usize> {
        &self.var_domains[clause]
    }

    pub fn num_transitions(&self) -> usize {
        self.delta.len()
    }

    /// Same structure with new clause probabilities (indexed like
    /// [`Lohmm::transitions`]) and selection distribution.
    pub fn with_probabilities(&self, trans: &[f64], mu: SelectionDistribution) -> Lohmm {
        assert_eq!(trans.len(), self.delta.len());
        let mut m = self.clone();
        for (t, &p) in m.delta.iter_mut().zip(trans) {
            t.prob = p;
        }
        m.mu = mu;
        m
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate::validate(self)
    }

    /// Index of the group whose body is the unique most specific body
    /// subsuming `state`.
    pub fn most_specific_group(&self, state: &Atom) -> Result<usize, ModelError> {
        let candidates: Vec<usize> = self
            .groups
            .iter()
            .enumerate()
            .filter(|(_, g)| crate::logic::subsumes(&g.body, state).is_some())
            .map(|(i, _)| i)
            .collect();
        if candidates.is_empty() {
            return Err(ModelError::NoMatchingBody(state.to_string()));
        }
        let minimal: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&c| {
                candidates.iter().all(|&d| {
                    d == c || crate::logic::subsumes(&self.groups[d].body, &self.groups[c].body).is_some()
                })
            })
            .collect();
        match minimal.as_slice() {
            [one] => Ok(*one),
            _ => Err(ModelError::AmbiguousBody(state.to_string())),
        }
    }

    /// The unique most specific body subsuming `state`.
    pub fn most_specific_body(&self, state: &Atom) -> Result<&Atom, ModelError> {
        self.most_specific_group(state).map(|g| &self.groups[g].body)
    }

    pub fn start_group(&self) -> Option<usize> {
        self.groups.iter().position(|g| Signature::is_start(&g.body))
    }
}

/// Returns the clause's variable-to-domain map after checking kinds,
/// typing and the start/observation rule.
fn check_clause(sig: &Signature, t: &AbstractTransition) -> Result<BTreeMap<Sym, usize>, ModelError> {
    let malformed = |message: &str| ModelError::Malformed {
        clause: t.to_string(),
        message: message.to_string(),
    };
    if !t.prob.is_finite() {
        return Err(malformed("probability is not finite"));
    }
    let is_start = Signature::is_start(&t.body);
    for (atom, want) in [(&t.body, PredKind::State), (&t.head, PredKind::State)] {
        let decl = sig.decl_of(atom)?;
        if decl.kind != want {
            return Err(malformed(&format!("{} is not a state predicate", atom.predicate)));
        }
    }
    if Signature::is_start(&t.head) {
        return Err(malformed("start cannot be entered"));
    }
    match (&t.obs, is_start) {
        (None, true) => {}
        (Some(_), true) => return Err(malformed("transitions out of start emit no observation")),
        (None, false) => return Err(malformed("missing observation")),
        (Some(o), false) => {
            if sig.decl_of(o)?.kind != PredKind::Obs {
                return Err(malformed(&format!("{} is not an observation predicate", o.predicate)));
            }
        }
    }
    let mut doms = BTreeMap::new();
    for a in std::iter::once(&t.body).chain(t.obs.iter()).chain(std::iter::once(&t.head)) {
        sig.check_atom(a)?;
        sig.extend_var_domains(a, &mut doms)?;
    }
    Ok(doms)
}

/// Atom text with every variable named, including singletons.
pub(crate) fn named_text(a: &Atom) -> String {
    struct Named<'a>(&'a Atom);
    impl fmt::Display for Named<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let names = printable_names(&[self.0, self.0]);
            self.0.fmt_with(f, Some(&names))
        }
    }
    Named(a).to_string()
}

/// Ground constant at a position, if the term is one.
pub(crate) fn constant_index(sig: &Signature, domain: usize, t: &Term) -> Option<usize> {
    match t {
        Term::Const(c) => sig.domain(domain).position(c),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_atom, ground_instances};

    fn fixture(name: &str) -> String {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(path).unwrap()
    }

    fn atom(s: &str) -> Atom {
        parse_atom(s).unwrap()
    }

    const SIG: &str = "domain file = lohmm, readme, f1 .\n\
        domain user = tex, prog .\n\
        state emacs/2 : file, user .\n\
        obs emacs/1 : file .\n";

    #[test]
    fn fixtures_validate() {
        for f in ["fig1a.lohmm", "fig1b.lohmm", "fig3-init.lohmm", "composite.lohmm"] {
            let m = load_model(&fixture(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
            assert!(m.validate().is_empty());
        }
    }

    #[test]
    fn normalization_violation() {
        let m = parse_model(&fixture("broken-normalization.lohmm")).unwrap();
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::Normalization { body, .. } if body == "emacs(A, B)"));
        assert!(v[0].to_string().starts_with("NormalizationViolation(emacs(A, B))"));
        assert!(matches!(load_model(&fixture("broken-normalization.lohmm")), Err(ModelError::Validation(_))));
    }

    #[test]
    fn wellfoundedness_violation() {
        let text = format!(
            "{SIG}trans 1.0 : start --> emacs(_, _) .\n\
             trans 1.0 : emacs(F, U) -- emacs(F) --> emacs(F, U) .\n\
             trans 1.0 : emacs(lohmm, U) -- emacs(lohmm) --> emacs(lohmm, U) .\n\
             trans 1.0 : emacs(F, tex) -- emacs(F) --> emacs(F, tex) .\n"
        );
        let m = parse_model(&text).unwrap();
        assert_eq!(m.validate(), vec![Violation::WellFoundedness { state: "emacs(lohmm, tex)".into() }]);
        assert!(matches!(
            m.most_specific_body(&atom("emacs(lohmm, tex)")),
            Err(ModelError::AmbiguousBody(_))
        ));
        let fixed = format!("{text}trans 1.0 : emacs(lohmm, tex) -- emacs(lohmm) --> emacs(lohmm, tex) .\n");
        assert!(parse_model(&fixed).unwrap().validate().is_empty());
    }

    #[test]
    fn coverage_violation() {
        let text = format!(
            "{SIG}trans 1.0 : start --> emacs(_, tex) .\n\
             trans 1.0 : emacs(F, tex) -- emacs(F) --> emacs(F, tex) .\n"
        );
        let v = parse_model(&text).unwrap().validate();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| matches!(x, Violation::Coverage { .. })));
    }

    #[test]
    fn most_specific_body_examples() {
        let m = load_model(&fixture("fig1a.lohmm")).unwrap();
        let b = m.most_specific_body(&atom("emacs(hmm1, tex)")).unwrap();
        assert!(crate::logic::is_variant(b, &atom("emacs(F, tex)")));
        let b = m.most_specific_body(&atom("emacs(hmm1, prog)")).unwrap();
        assert!(crate::logic::is_variant(b, &atom("emacs(F, U)")));
        let b = m.most_specific_body(&atom("latex(lohmm, prog)")).unwrap();
        assert!(crate::logic::is_variant(b, &atom("latex(lohmm, U)")));

        let text = format!(
            "{SIG}trans 1.0 : start --> emacs(_, _) .\n\
             trans 1.0 : emacs(F, U) -- emacs(F) --> emacs(F, U) .\n\
             trans 1.0 : emacs(f1, prog) -- emacs(f1) --> emacs(f1, prog) .\n"
        );
        let m = load_model(&text).unwrap();
        assert_eq!(m.most_specific_body(&atom("emacs(f1, prog)")).unwrap(), &atom("emacs(f1, prog)"));
        assert!(matches!(
            m.most_specific_body(&atom("ls(tex)")),
            Err(ModelError::NoMatchingBody(_))
        ));
    }

    #[test]
    fn start_transitions() {
        let m = load_model(&fixture("fig1a.lohmm")).unwrap();
        let mt = matching_transitions(&m, &Atom::nullary(crate::logic::START)).unwrap();
        let probs: Vec<f64> = mt.iter().map(|(c, _)| m.transitions()[*c].prob).collect();
        assert_eq!(probs, vec![0.7, 0.3]);
        let tex: f64 = ["lohmm", "hmm1", "readme", "f1"]
            .iter()
            .map(|f| {
                ground_step_prob(&m, &Atom::nullary("start"), &atom(&format!("emacs({f}, tex)")), None).unwrap()
            })
            .sum();
        assert!((tex - 0.7).abs() < 1e-12);
    }

    #[test]
    fn selection_examples() {
        let m = load_model(&fixture("composite.lohmm")).unwrap();
        let p = mu_prob(&m, &atom("s(f(Z))"), &atom("s(f(3))")).unwrap();
        assert!((p - 0.2).abs() < 1e-15);
        let p = mu_prob(&m, &atom("o(1, Y, 3)"), &atom("o(1, 2, 3)")).unwrap();
        assert!((p - 0.05).abs() < 1e-15);
        assert_eq!(mu_prob(&m, &atom("o(1, 2, 3)"), &atom("o(1, 2, 3)")).unwrap(), 1.0);
        // repeated variables are selected once
        let p = mu_prob(&m, &atom("o(X, X, 2)"), &atom("o(3, 3, 2)")).unwrap();
        assert!((p - 0.2).abs() < 1e-15);
        assert!(mu_prob(&m, &atom("s(X)"), &atom("s(9)")).is_err());
    }

    #[test]
    fn composite_step_probability() {
        let m = load_model(&fixture("composite.lohmm")).unwrap();
        let p = ground_step_prob(&m, &atom("s(1)"), &atom("s(f(3))"), Some(&atom("o(1, 2, 3)"))).unwrap();
        assert!((p - 0.5 * 0.2 * 0.05).abs() < 1e-15, "{p}");
        let p = ground_step_prob(&m, &atom("s(1)"), &atom("s(3)"), Some(&atom("o(1, 2, 3)"))).unwrap();
        assert!((p - 0.5 * 0.2 * 0.05).abs() < 1e-15, "{p}");
        let p = ground_step_prob(&m, &atom("s(1)"), &atom("s(f(2))"), Some(&atom("o(1, 2, 3)"))).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn ground_single_clause() {
        let text = format!(
            "{SIG}trans 1.0 : start --> emacs(_, _) .\n\
             trans 1.0 : emacs(F, U) -- emacs(F) --> emacs(F, U) .\n\
             trans 0.6 : emacs(f1, tex) -- emacs(f1) --> emacs(lohmm, prog) .\n\
             trans 0.4 : emacs(f1, tex) -- emacs(f1) --> emacs(f1, tex) .\n"
        );
        let m = load_model(&text).unwrap();
        let p = ground_step_prob(&m, &atom("emacs(f1, tex)"), &atom("emacs(lohmm, prog)"), Some(&atom("emacs(f1)")))
            .unwrap();
        assert!((p - 0.6).abs() < 1e-15);
    }

    fn assert_normalized(m: &Lohmm, limit: usize) {
        for b in reachable_states(m, limit).unwrap() {
            let mut total = 0.0;
            for (h, o) in successor_pairs(m, &b).unwrap() {
                total += ground_step_prob(m, &b, &h, o.as_ref()).unwrap();
            }
            assert!((total - 1.0).abs() < 1e-8, "{b}: {total}");
        }
    }

    #[test]
    fn step_probabilities_normalize() {
        for f in ["fig1a.lohmm", "fig1b.lohmm", "fig3-init.lohmm", "composite.lohmm"] {
            assert_normalized(&load_model(&fixture(f)).unwrap(), 200);
        }
    }

    #[test]
    fn successor_pairs_are_complete() {
        // Exhaustive check over the Herbrand base: no pair outside the
        // enumerated successors has mass.
        let m = load_model(&fixture("fig1a.lohmm")).unwrap();
        let sig = m.signature();
        let mut heads = Vec::new();
        for d in sig.state_predicates() {
            heads.extend(ground_instances(&sig.most_general(d, "X"), sig).unwrap());
        }
        let mut obs = Vec::new();
        for d in sig.obs_predicates() {
            obs.extend(ground_instances(&sig.most_general(d, "X"), sig).unwrap());
        }
        for b in &heads {
            let mut total = 0.0;
            for h in &heads {
                for o in &obs {
                    total += ground_step_prob(&m, b, h, Some(o)).unwrap();
                }
            }
            assert!((total - 1.0).abs() < 1e-8, "{b}: {total}");
        }
    }

    #[test]
    fn most_specific_body_stable_under_unrelated_bodies() {
        let m = load_model(&fixture("fig1a.lohmm")).unwrap();
        let mut text = fixture("fig1a.lohmm");
        text.push_str("trans 1.0 : latex(readme, prog) -- latex(readme) --> ls(prog) .\n");
        let m2 = load_model(&text).unwrap();
        for s in ["emacs(hmm1, tex)", "latex(lohmm, tex)", "latex(f1, prog)", "ls(tex)"] {
            assert_eq!(m.most_specific_body(&atom(s)).unwrap(), m2.most_specific_body(&atom(s)).unwrap());
        }
    }

    #[test]
    fn renaming_invariance() {
        let a = load_model(&fixture("fig1a.lohmm")).unwrap();
        let renamed = fixture("fig1a.lohmm").replace("(F,", "(Qq,").replace("(F)", "(Qq)").replace("U)", "Zz)");
        let b = load_model(&renamed).unwrap();
        for s in reachable_states(&a, 50).unwrap() {
            for (h, o) in successor_pairs(&a, &s).unwrap() {
                let pa = ground_step_prob(&a, &s, &h, o.as_ref()).unwrap();
                let pb = ground_step_prob(&b, &s, &h, o.as_ref()).unwrap();
                assert_eq!(pa, pb);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        for f in ["fig1a.lohmm", "fig1b.lohmm", "fig3-init.lohmm", "composite.lohmm"] {
            let once = save_model(&load_model(&fixture(f)).unwrap());
            let twice = save_model(&load_model(&once).unwrap());
            assert_eq!(once, twice, "{f}");
        }
    }

    #[test]
    fn file_errors() {
        let dup = "domain d = a, b, a .\n";
        match parse_model(dup) {
            Err(ModelError::Syntax { line: 1, column: 18, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_model("domain d = a b ."), Err(ModelError::Syntax { .. })));
        assert!(matches!(
            parse_model("domain d = a .\nstate p/1 : d .\ntrans 1.0 : start --> q(_) ."),
            Err(ModelError::Logic(LogicError::UndeclaredPredicate(_)))
        ));
        assert!(matches!(
            parse_model("domain d = a .\nstate p/1 : d .\ntrans 1.0 : p(X) --> p(X) ."),
            Err(ModelError::Malformed { .. })
        ));
    }

    #[test]
    fn missing_select_is_uniform() {
        let m = load_model(&fixture("fig1b.lohmm")).unwrap();
        assert_eq!(m.mu().probs, vec![vec![0.25; 4], vec![0.5; 2]]);
    }

    #[test]
    fn near_normalized_groups_are_rescaled() {
        let text = format!(
            "{SIG}trans 1.0 : start --> emacs(_, _) .\n\
             trans 0.5000000001 : emacs(F, U) -- emacs(F) --> emacs(F, U) .\n\
             trans 0.5 : emacs(F, U) -- emacs(F) --> emacs(_, U) .\n"
        );
        let m = load_model(&text).unwrap();
        let s: f64 = m.transitions()[1..].iter().map(|t| t.prob).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
