//! Structure learning: penalized scoring, the fully general starting
//! hypothesis, the refinement operator, and structural EM search.

mod refine;
mod search;

use std::fmt;
use std::sync::Arc;

use crate::learn::{LearnError, OptimizerConfig};
use crate::logic::{Atom, Signature, Term, VarGen, START};
use crate::model::{AbstractTransition, Lohmm, SelectionDistribution};
use crate::semantics::{corpus_log_likelihood, Sequence};

pub use refine::{minimal_specializations, refine, refine_counted, specialize, structure_key};
pub use search::{evaluate_neighbor, naive_evaluate_neighbor, naive_greedy, sagem, SearchResult};

/// Penalized log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub loglik: f64,
    pub penalty: f64,
    pub total: f64,
}

impl Score {
    pub fn new(loglik: f64, num_transitions: usize, num_sequences: usize) -> Score {
        let penalty = penalty(num_transitions, num_sequences);
        Score { loglik, penalty, total: loglik - penalty }
    }
}

/// `|Δ| ln(m) / 2`; zero when there is at most one data case.
pub fn penalty(num_transitions: usize, num_sequences: usize) -> f64 {
    if num_sequences <= 1 {
        return 0.0;
    }
    num_transitions as f64 * (num_sequences as f64).ln() / 2.0
}

/// Scores `m` with its current parameters on `data`.
pub fn score(m: &Lohmm, data: &[Sequence]) -> Result<Score, LearnError> {
    let ll = corpus_log_likelihood(m, data)?;
    Ok(Score::new(ll, m.num_transitions(), data.len()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    /// Hypotheses kept per outer iteration; 1 is greedy search.
    pub beam_width: usize,
    /// M-steps per inner generalized EM loop.
    pub l_max: usize,
    pub optimizer: OptimizerConfig,
    pub max_outer_iterations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_width: 1,
            l_max: 10,
            optimizer: OptimizerConfig::default(),
            max_outer_iterations: 50,
            seed: 0,
        }
    }
}

/// One outer iteration of structure search.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub transitions: usize,
    pub bodies: usize,
    pub loglik: f64,
    pub penalty: f64,
    pub total: f64,
    pub wall_ms: u128,
    pub neighbors_evaluated: usize,
    pub neighbors_discarded: usize,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iteration={} transitions={} bodies={} loglik={} penalty={} total={} wall_ms={} neighbors_evaluated={} neighbors_discarded={}",
            self.iteration,
            self.transitions,
            self.bodies,
            self.loglik,
            self.penalty,
            self.total,
            self.wall_ms,
            self.neighbors_evaluated,
            self.neighbors_discarded
        )
    }
}

/// The fully connected model over `sig`: one body per state predicate
/// plus `start`, and from each body one transition per pair of maximally
/// general head and observation atoms, all with fresh variables. Clause
/// and selection probabilities are uniform.
pub fn initial_hypothesis(sig: Arc<Signature>) -> Lohmm {
    let gen = VarGen::new();
    let general = |decl| {
        let a: Atom = sig.most_general(decl, "V");
        a.rename(&gen.renaming(&a.vars()))
    };
    let heads: Vec<_> = sig.state_predicates().collect();
    let obs: Vec<_> = sig.obs_predicates().collect();
    let mut delta = Vec::new();
    let start = Atom::nullary(START);
    for h in &heads {
        delta.push(AbstractTransition::new(1.0 / heads.len() as f64, start.clone(), None, general(h)));
    }
    let n = (heads.len() * obs.len()) as f64;
    for b in &heads {
        let body = general(b);
        for h in &heads {
            for o in &obs {
                delta.push(AbstractTransition::new(1.0 / n, body.clone(), Some(general(o)), general(h)));
            }
        }
    }
    let mu = SelectionDistribution::uniform(&sig);
    Lohmm::new(sig, mu, delta).expect("most general atoms are well typed")
}

/// True when `a` is not a variant of the fully general atom of its
/// predicate, i.e. some argument is a constant or a repeated variable.
pub fn is_specialized(a: &Atom) -> bool {
    let mut seen = Vec::new();
    for t in &a.args {
        match t {
            Term::Var(v) if !seen.contains(v) => seen.push(v.clone()),
            _ => return true,
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{expected_score, ParamVector};
    use crate::logic::{is_variant, parse_atom, PredKind};
    use crate::model::{load_model, parse_model};
    use crate::semantics::{expected_counts, log_likelihood, parse_corpus, sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture(name: &str) -> Lohmm {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        load_model(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    fn atom(s: &str) -> Atom {
        parse_atom(s).unwrap()
    }

    fn has_body(m: &Lohmm, b: &str) -> bool {
        m.bodies().iter().any(|x| is_variant(x, &atom(b)))
    }

    const TOY: &str = "domain d = a, b .\n\
        state s/1 : d .\n\
        obs o/1 : d .\n\
        select d : a 0.5, b 0.5 .\n\
        trans 1.0 : start --> s(_) .\n\
        trans 0.85 : s(X) -- o(X) --> s(X) .\n\
        trans 0.15 : s(X) -- o(X) --> s(_) .\n";

    fn toy_data(n: usize, len: usize, seed: u64) -> Vec<Sequence> {
        let m = load_model(TOY).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample(&m, len, &mut rng).unwrap().1).collect()
    }

    #[test]
    fn penalty_examples() {
        assert!((penalty(4, 100) - 2.0 * 100f64.ln()).abs() < 1e-12);
        assert!((penalty(4, 100) - 9.2103).abs() < 1e-4);
        assert_eq!(penalty(17, 1), 0.0);
        let s = Score::new(-10.0, 4, 100);
        assert_eq!(s.total, s.loglik - s.penalty);
        assert!(Score::new(-10.0, 5, 100).total < s.total);
    }

    #[test]
    fn initial_hypotheses() {
        let m = initial_hypothesis(fixture("fig1a.lohmm").shared_signature());
        assert_eq!(m.groups().len(), 4);
        for b in ["start", "emacs(F, U)", "latex(F, U)", "ls(U)"] {
            assert!(has_body(&m, b), "{b}");
        }
        assert_eq!(m.num_transitions(), 3 + 3 * 3 * 3);
        assert!(m.validate().is_empty());

        let m = initial_hypothesis(fixture("fig3-init.lohmm").shared_signature());
        assert_eq!(m.groups().len(), 2);
        assert!(has_body(&m, "hid(A, B, C)"));
        assert!(m.validate().is_empty());
    }

    #[test]
    fn specializations() {
        let m = fixture("fig1b.lohmm");
        let sig = m.signature();
        let cl = m
            .transitions()
            .iter()
            .find(|t| t.body.predicate.as_ref() == "latex" && t.head.predicate.as_ref() == "ls")
            .unwrap();
        let subs = minimal_specializations(cl, sig);
        let u = cl.body.args[1].clone();
        let Term::Var(u) = u else { panic!() };
        assert!(subs.iter().any(|s| s.get(&u) == Some(&Term::constant("tex"))));
        // vars F (file), U (user): 4 + 2 bindings, no shareable pairs
        assert_eq!(subs.len(), 6);

        let ground = parse_model("domain d = a .\nstate s/1 : d .\nobs o/0 .\ntrans 1.0 : s(a) -- o --> s(a) .\n").unwrap();
        assert!(minimal_specializations(&ground.transitions()[0], ground.signature()).is_empty());

        // two file variables share a domain: 4 + 2 + 4 bindings plus one pair
        let cl = m
            .transitions()
            .iter()
            .find(|t| t.body.predicate.as_ref() == "emacs" && t.head.predicate.as_ref() == "emacs")
            .unwrap();
        assert_eq!(minimal_specializations(cl, sig).len(), 4 + 2 + 4 + 1);
    }

    #[test]
    fn specialization_count_is_sum_of_domain_sizes() {
        let mut sig = Signature::new();
        sig.add_domain("a", &["x", "y"]).unwrap();
        sig.add_domain("b", &["p", "q", "r"]).unwrap();
        sig.add_domain("c", &["u"]).unwrap();
        sig.add_predicate(PredKind::State, "s", &["a", "b", "c"]).unwrap();
        sig.add_predicate(PredKind::Obs, "o", &[]).unwrap();
        let cl = AbstractTransition::new(1.0, atom("s(X, Y, Z)"), Some(atom("o")), atom("s(X, Y, Z)"));
        let subs = minimal_specializations(&cl, &sig);
        let mut brute = 0;
        for v in cl.vars() {
            let doms = sig.var_domains(&cl.body).unwrap();
            brute += sig.domain(doms[&v]).len();
        }
        assert_eq!(subs.len(), brute);
        assert_eq!(brute, 6);
    }

    #[test]
    fn refinement_repairs_wellfoundedness() {
        let base = fixture("fig1b.lohmm");
        let (ci, cl) = base
            .transitions()
            .iter()
            .enumerate()
            .find(|(_, t)| t.body.predicate.as_ref() == "latex" && t.head.predicate.as_ref() == "ls")
            .unwrap();
        let Term::Var(u) = cl.body.args[1].clone() else { panic!() };
        let with_tex = specialize(&base, ci, &crate::logic::Substitution::from_pairs([(u, Term::constant("tex"))])).unwrap();
        assert!(has_body(&with_tex, "latex(F, tex)"));

        let (ci, cl) = with_tex
            .transitions()
            .iter()
            .enumerate()
            .find(|(_, t)| is_variant(&t.body, &atom("latex(F, U)")))
            .unwrap();
        let Term::Var(f) = cl.body.args[0].clone() else { panic!() };
        let n = specialize(&with_tex, ci, &crate::logic::Substitution::from_pairs([(f, Term::constant("lohmm"))])).unwrap();
        assert!(has_body(&n, "latex(lohmm, U)"));
        assert!(has_body(&n, "latex(lohmm, tex)"));
        assert!(n.validate().is_empty());
    }

    #[test]
    fn neighbors_are_valid_and_cover() {
        let m = fixture("fig1b.lohmm");
        let data = parse_corpus(
            "emacs(lohmm), latex(lohmm), ls\nls, emacs(f1), emacs(f1)\nlatex(hmm1), ls, latex(readme)\n",
        )
        .unwrap();
        let (neighbors, _) = refine_counted(&m);
        assert!(!neighbors.is_empty());
        for nb in &neighbors {
            assert!(nb.validate().is_empty());
            for s in &data {
                assert!(log_likelihood(nb, s).unwrap().is_finite());
            }
        }
        let again = refine(&m);
        assert_eq!(
            neighbors.iter().map(|n| structure_key(n.transitions())).collect::<Vec<_>>(),
            again.iter().map(|n| structure_key(n.transitions())).collect::<Vec<_>>()
        );
    }

    #[test]
    fn head_specialization_adds_no_body() {
        let m = fixture("fig1b.lohmm");
        let (ci, cl) = m
            .transitions()
            .iter()
            .enumerate()
            .find(|(_, t)| t.body.predicate.as_ref() == "emacs" && t.head.predicate.as_ref() == "latex")
            .unwrap();
        let Term::Var(g) = cl.head.args[0].clone() else { panic!() };
        let n = specialize(&m, ci, &crate::logic::Substitution::from_pairs([(g, Term::constant("f1"))])).unwrap();
        assert_eq!(n.groups().len(), m.groups().len());
        assert_eq!(n.num_transitions(), m.num_transitions() + 1);
    }

    #[test]
    fn evaluate_neighbor_examples() {
        let m = fixture("fig1b.lohmm");
        let data = toy_corpus_fig1a(30, 8, 4);
        let ec = expected_counts(&m, &data).unwrap();
        let p = ParamVector::from_model(&m);
        let q = expected_score(&m, &p, &ec).unwrap();
        let cfg = OptimizerConfig { restarts: 1, max_iterations: 0, ..Default::default() };
        let (_, q0) = evaluate_neighbor(&m, &ec, &cfg).unwrap();
        assert!((q0 - q).abs() < 1e-9 * q.abs());
        let cfg = OptimizerConfig::default();
        let (_, q2) = evaluate_neighbor(&m, &ec, &cfg).unwrap();
        assert!(q2 >= q);

        // a neighbor that cannot produce a positive-count triple
        let narrow = parse_model(&std::fs::read_to_string(format!("{}/fixtures/fig1b.lohmm", env!("CARGO_MANIFEST_DIR"))).unwrap()
            .replace("emacs(F, U) -- emacs(F) --> ls(U)", "emacs(F, U) -- emacs(F) --> ls(tex)")).unwrap();
        let has_prog = ec.iter().any(|(b, h, _, _)| b.predicate.as_ref() == "emacs" && *h == atom("ls(prog)"));
        assert!(has_prog);
        assert!(matches!(evaluate_neighbor(&narrow, &ec, &cfg), Err(LearnError::IncompatibleCounts(_))));
    }

    fn toy_corpus_fig1a(n: usize, len: usize, seed: u64) -> Vec<Sequence> {
        let m = fixture("fig1a.lohmm");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample(&m, len, &mut rng).unwrap().1).collect()
    }

    #[test]
    fn sagem_recovers_toy_structure() {
        let data = toy_data(60, 10, 1);
        // observations reveal the state; only the dynamics are unknown
        let m0 = load_model(&TOY.replace(
            "trans 0.85 : s(X) -- o(X) --> s(X) .\n",
            "",
        ).replace("0.15 : s(X) -- o(X) --> s(_)", "1.0 : s(X) -- o(X) --> s(_)")).unwrap();
        let cfg = SearchConfig { seed: 3, ..Default::default() };
        let init = sagem(&data, &m0, &SearchConfig { max_outer_iterations: 0, ..cfg.clone() }).unwrap();
        assert_eq!(init.trace.len(), 1);
        assert_eq!(structure_key(init.model.transitions()), structure_key(m0.transitions()));
        let r = sagem(&data, &m0, &cfg).unwrap();
        assert!(r.score.total > init.score.total, "{} vs {}", r.score.total, init.score.total);
        for w in r.trace.windows(2) {
            assert!(w[1].loglik >= w[0].loglik - 1e-6);
            assert!(w[1].total >= w[0].total);
        }
        assert!(r.model.validate().is_empty());
        let stay = AbstractTransition::new(1.0, atom("s(X)"), Some(atom("o(X)")), atom("s(X)"));
        assert!(r.model.transitions().iter().any(|t| t.same_shape(&stay)));
        let naive = naive_greedy(&data, &m0, &SearchConfig { max_outer_iterations: 3, ..cfg }).unwrap();
        assert!(naive.score.total > init.score.total);
    }

    #[test]
    fn empty_data_is_degenerate() {
        let m0 = initial_hypothesis(load_model(TOY).unwrap().shared_signature());
        let r = naive_greedy(&[], &m0, &SearchConfig::default()).unwrap();
        assert_eq!(r.trace.len(), 1);
        let r = sagem(&[], &m0, &SearchConfig::default()).unwrap();
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn specialized_atoms() {
        assert!(!is_specialized(&atom("emacs(F, U)")));
        assert!(is_specialized(&atom("emacs(lohmm, U)")));
        assert!(is_specialized(&atom("p(X, X)")));
    }
}
