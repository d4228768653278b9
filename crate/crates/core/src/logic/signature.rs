use std::collections::{BTreeMap, HashMap};

use super::term::{Atom, Substitution, Sym, Term};
use super::LogicError;

/// Name of the reserved initial state predicate.
pub const START: &str = "start";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    pub name: Sym,
    pub constants: Vec<Sym>,
    index: HashMap<Sym, usize>,
}

impl Domain {
    pub fn new(name: &str, constants: Vec<Sym>) -> Result<Domain, LogicError> {
        if constants.is_empty() {
            return Err(LogicError::EmptyDomain(name.to_string()));
        }
        let mut index = HashMap::with_capacity(constants.len());
        for (i, c) in constants.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(LogicError::DuplicateConstant {
                    domain: name.to_string(),
                    constant: c.to_string(),
                });
            }
        }
        Ok(Domain { name: name.into(), constants, index })
    }

    pub fn len(&self) -> usize {
        self.constants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constants.is_empty()
    }

    pub fn position(&self, constant: &str) -> Option<usize> {
        self.index.get(constant).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PredKind {
    State,
    Obs,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredDecl {
    pub name: Sym,
    pub kind: PredKind,
    /// Domain index per argument position.
    pub domains: Vec<usize>,
}

impl PredDecl {
    pub fn arity(&self) -> usize {
        self.domains.len()
    }
}

/// Typed alphabet: finite domains plus state and observation predicates.
///
/// Declaration order is preserved; it fixes the order of parameters and of
/// generated clauses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    domains: Vec<Domain>,
    domain_index: HashMap<Sym, usize>,
    preds: Vec<PredDecl>,
    pred_index: HashMap<(Sym, usize), usize>,
}

impl Default for Signature {
    fn default() -> Self {
        Self::new()
    }
}

impl Signature {
    /// An empty signature holding only `start/0`.
    pub fn new() -> Signature {
        let mut sig = Signature {
            domains: Vec::new(),
            domain_index: HashMap::new(),
            preds: Vec::new(),
            pred_index: HashMap::new(),
        };
        sig.preds.push(PredDecl { name: START.into(), kind: PredKind::State, domains: vec![] });
        sig.pred_index.insert((START.into(), 0), 0);
        sig
    }

    pub fn add_domain(&mut self, name: &str, constants: &[&str]) -> Result<usize, LogicError> {
        self.push_domain(Domain::new(name, constants.iter().map(|c| Sym::from(*c)).collect())?)
    }

    pub fn push_domain(&mut self, domain: Domain) -> Result<usize, LogicError> {
        if self.domain_index.contains_key(&domain.name) {
            return Err(LogicError::DuplicateDeclaration(format!("domain {}", domain.name)));
        }
        let idx = self.domains.len();
        self.domain_index.insert(domain.name.clone(), idx);
        self.domains.push(domain);
        Ok(idx)
    }

    pub fn add_predicate(
        &mut self,
        kind: PredKind,
        name: &str,
        domains: &[&str],
    ) -> Result<(), LogicError> {
        let key: (Sym, usize) = (name.into(), domains.len());
        if name == START && domains.is_empty() {
            if kind == PredKind::State {
                return Ok(());
            }
            return Err(LogicError::DuplicateDeclaration("start/0 is a reserved state".into()));
        }
        if self.pred_index.contains_key(&key) {
            return Err(LogicError::DuplicateDeclaration(format!("{}/{}", name, domains.len())));
        }
        let idx = domains
            .iter()
            .map(|d| self.domain_index.get(*d).copied().ok_or_else(|| LogicError::UnknownDomain(d.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        self.pred_index.insert(key, self.preds.len());
        self.preds.push(PredDecl { name: name.into(), kind, domains: idx });
        Ok(())
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, idx: usize) -> &Domain {
        &self.domains[idx]
    }

    pub fn domain_by_name(&self, name: &str) -> Option<usize> {
        self.domain_index.get(name).copied()
    }

    pub fn predicates(&self) -> &[PredDecl] {
        &self.preds
    }

    pub fn state_predicates(&self) -> impl Iterator<Item = &PredDecl> {
        self.preds.iter().filter(|p| p.kind == PredKind::State && &*p.name != START)
    }

    pub fn obs_predicates(&self) -> impl Iterator<Item = &PredDecl> {
        self.preds.iter().filter(|p| p.kind == PredKind::Obs)
    }

    pub fn predicate(&self, name: &str, arity: usize) -> Option<&PredDecl> {
        self.pred_index.get(&(Sym::from(name), arity)).map(|&i| &self.preds[i])
    }

    pub fn decl_of(&self, a: &Atom) -> Result<&PredDecl, LogicError> {
        self.predicate(&a.predicate, a.arity())
            .ok_or_else(|| LogicError::UndeclaredPredicate(format!("{}/{}", a.predicate, a.arity())))
    }

    pub fn is_start(a: &Atom) -> bool {
        &*a.predicate == START && a.args.is_empty()
    }

    /// Domain of every variable of `a`, keyed by the top-level argument
    /// position it occupies. Variables nested in compound terms take the
    /// domain of the enclosing position.
    pub fn var_domains(&self, a: &Atom) -> Result<BTreeMap<Sym, usize>, LogicError> {
        let mut out = BTreeMap::new();
        self.extend_var_domains(a, &mut out)?;
        Ok(out)
    }

    pub(crate) fn extend_var_domains(
        &self,
        a: &Atom,
        out: &mut BTreeMap<Sym, usize>,
    ) -> Result<(), LogicError> {
        let decl = self.decl_of(a)?;
        for (pos, arg) in a.args.iter().enumerate() {
            let d = decl.domains[pos];
            let mut vars = Vec::new();
            arg.collect_vars(&mut vars);
            for v in vars {
                match out.get(&v) {
                    Some(&prev) if prev != d => {
                        return Err(LogicError::SharedVariableConflict {
                            var: v.to_string(),
                            first: self.domains[prev].name.to_string(),
                            second: self.domains[d].name.to_string(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        out.insert(v, d);
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks predicate declaration and that constants at top-level
    /// positions belong to their declared domain.
    pub fn check_atom(&self, a: &Atom) -> Result<(), LogicError> {
        let decl = self.decl_of(a)?;
        for (pos, arg) in a.args.iter().enumerate() {
            if let Term::Const(c) = arg {
                let dom = &self.domains[decl.domains[pos]];
                if dom.position(c).is_none() {
                    return Err(LogicError::DomainMismatch {
                        constant: c.to_string(),
                        domain: dom.name.to_string(),
                    });
                }
            }
        }
        self.var_domains(a).map(|_| ())
    }

    /// Maximally general atom `r(X1, ..., Xm)` with fresh variables.
    pub fn most_general(&self, decl: &PredDecl, prefix: &str) -> Atom {
        Atom {
            predicate: decl.name.clone(),
            args: (0..decl.arity()).map(|i| Term::Var(format!("{prefix}{}", i + 1).into())).collect(),
        }
    }
}

/// All ground instances of `a`, each variable ranging over the domain of the
/// argument position it occupies.
pub fn ground_instances(a: &Atom, sig: &Signature) -> Result<Vec<Atom>, LogicError> {
    let doms = sig.var_domains(a)?;
    let vars = a.vars();
    let mut out = Vec::new();
    for_each_grounding(&vars, &doms, sig, &mut |theta| {
        out.push(a.apply(theta));
    });
    Ok(out)
}

/// Calls `f` once per assignment of `vars` to constants of their domains,
/// in lexicographic order of (variable order, domain order).
pub(crate) fn for_each_grounding(
    vars: &[Sym],
    doms: &BTreeMap<Sym, usize>,
    sig: &Signature,
    f: &mut dyn FnMut(&Substitution),
) {
    let sizes: Vec<usize> = vars.iter().map(|v| sig.domain(doms[v]).len()).collect();
    let mut idx = vec![0usize; vars.len()];
    loop {
        let theta = Substitution::from_pairs(
            vars.iter()
                .zip(&idx)
                .map(|(v, &i)| (v.clone(), Term::Const(sig.domain(doms[v]).constants[i].clone()))),
        );
        f(&theta);
        let mut k = vars.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}
