use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Interned-ish symbol. Cheap to clone and shareable across threads.
pub type Sym = Arc<str>;

/// A first-order term.
///
/// Constants are kept distinct from zero-arity compounds so that every term
/// has exactly one canonical representation.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Var(Sym),
    Const(Sym),
    Compound(Sym, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.into())
    }

    pub fn constant(name: &str) -> Term {
        Term::Const(name.into())
    }

    /// Builds a compound term; an empty argument list yields a constant.
    pub fn compound(functor: &str, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::Const(functor.into())
        } else {
            Term::Compound(functor.into(), args)
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) => true,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn contains_var(&self, v: &str) -> bool {
        match self {
            Term::Var(name) => &**name == v,
            Term::Const(_) => false,
            Term::Compound(_, args) => args.iter().any(|a| a.contains_var(v)),
        }
    }

    /// Pushes the variables of this term in order of first occurrence.
    pub fn collect_vars(&self, out: &mut Vec<Sym>) {
        match self {
            Term::Var(name) => {
                if !out.iter().any(|v| v == name) {
                    out.push(name.clone());
                }
            }
            Term::Const(_) => {}
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    fn count_vars(&self, counts: &mut BTreeMap<Sym, usize>) {
        match self {
            Term::Var(name) => *counts.entry(name.clone()).or_default() += 1,
            Term::Const(_) => {}
            Term::Compound(_, args) => args.iter().for_each(|a| a.count_vars(counts)),
        }
    }

    pub fn apply(&self, theta: &Substitution) -> Term {
        match self {
            Term::Var(name) => theta.get(name).cloned().unwrap_or_else(|| self.clone()),
            Term::Const(_) => self.clone(),
            Term::Compound(f, args) => {
                Term::Compound(f.clone(), args.iter().map(|a| a.apply(theta)).collect())
            }
        }
    }

    pub fn rename(&self, map: &BTreeMap<Sym, Sym>) -> Term {
        match self {
            Term::Var(name) => Term::Var(map.get(name).cloned().unwrap_or_else(|| name.clone())),
            Term::Const(_) => self.clone(),
            Term::Compound(f, args) => {
                Term::Compound(f.clone(), args.iter().map(|a| a.rename(map)).collect())
            }
        }
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, names: Option<&BTreeMap<Sym, String>>) -> fmt::Result {
        match self {
            Term::Var(name) => match names.and_then(|n| n.get(name)) {
                Some(printed) => f.write_str(printed),
                None => f.write_str(name),
            },
            Term::Const(name) => f.write_str(name),
            Term::Compound(functor, args) => {
                write!(f, "{functor}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt_with(f, names)?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, None)
    }
}

/// Predicate symbol applied to a tuple of terms.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Atom {
    pub predicate: Sym,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: &str, args: Vec<Term>) -> Atom {
        Atom { predicate: predicate.into(), args }
    }

    pub fn nullary(predicate: &str) -> Atom {
        Atom::new(predicate, Vec::new())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn has_compound(&self) -> bool {
        self.args.iter().any(|a| matches!(a, Term::Compound(..)))
    }

    pub fn vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut Vec<Sym>) {
        self.args.iter().for_each(|a| a.collect_vars(out));
    }

    pub(crate) fn count_vars(&self, counts: &mut BTreeMap<Sym, usize>) {
        self.args.iter().for_each(|a| a.count_vars(counts));
    }

    pub fn apply(&self, theta: &Substitution) -> Atom {
        if theta.is_empty() {
            return self.clone();
        }
        Atom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|a| a.apply(theta)).collect(),
        }
    }

    pub fn rename(&self, map: &BTreeMap<Sym, Sym>) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|a| a.rename(map)).collect(),
        }
    }

    /// Variables are renamed apart using `gen`; sharing is preserved.
    pub fn freshen(&self, gen: &VarGen) -> Atom {
        let map = gen.renaming(&self.vars());
        self.rename(&map)
    }

    /// Index of the top-level argument in which `var` first occurs.
    pub fn first_position_of(&self, var: &str) -> Option<usize> {
        self.args.iter().position(|a| a.contains_var(var))
    }

    pub(crate) fn fmt_with(
        &self,
        f: &mut fmt::Formatter<'_>,
        names: Option<&BTreeMap<Sym, String>>,
    ) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            a.fmt_with(f, names)?;
        }
        f.write_str(")")
    }
}

/// Prints atoms with readable variable names: singletons become `_`, shared
/// variables keep user-style names or receive fresh letters.
pub(crate) fn printable_names(atoms: &[&Atom]) -> BTreeMap<Sym, String> {
    let mut counts = BTreeMap::new();
    let mut order = Vec::new();
    for a in atoms {
        a.count_vars(&mut counts);
        a.collect_vars(&mut order);
    }
    let mut names = BTreeMap::new();
    let mut taken: Vec<String> = Vec::new();
    for v in &order {
        if counts[v] > 1 && !v.starts_with('_') && !taken.iter().any(|t| **t == **v) {
            taken.push(v.to_string());
            names.insert(v.clone(), v.to_string());
        }
    }
    let mut next = 0usize;
    for v in &order {
        if counts[v] == 1 {
            names.insert(v.clone(), "_".to_string());
        } else if !names.contains_key(v) {
            let name = loop {
                let candidate = letter_name(next);
                next += 1;
                if !taken.contains(&candidate) && !order.iter().any(|o| **o == *candidate) {
                    break candidate;
                }
            };
            taken.push(name.clone());
            names.insert(v.clone(), name);
        }
    }
    names
}

fn letter_name(i: usize) -> String {
    let letter = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", i / 26)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = printable_names(&[self]);
        self.fmt_with(f, Some(&names))
    }
}

/// Textual form of an atom; the inverse of [`crate::logic::parse_atom`] up to
/// variable renaming.
pub fn format_atom(a: &Atom) -> String {
    a.to_string()
}

/// Simultaneous replacement of variables by terms.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Substitution {
    bindings: BTreeMap<Sym, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Term)>,
        S: Into<Sym>,
    {
        Substitution { bindings: pairs.into_iter().map(|(v, t)| (v.into(), t)).collect() }
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.bindings.get(var)
    }

    pub fn insert(&mut self, var: Sym, term: Term) {
        self.bindings.insert(var, term);
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, &Term)> {
        self.bindings.iter()
    }

    pub fn is_idempotent(&self) -> bool {
        self.bindings.values().all(|t| self.bindings.keys().all(|v| !t.contains_var(v)))
    }

    /// `self` followed by `other`: x(self∘other) = (x self) other.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        let mut bindings: BTreeMap<Sym, Term> = self
            .bindings
            .iter()
            .map(|(v, t)| (v.clone(), t.apply(other)))
            .filter(|(v, t)| !matches!(t, Term::Var(n) if n == v))
            .collect();
        for (v, t) in &other.bindings {
            bindings.entry(v.clone()).or_insert_with(|| t.clone());
        }
        Substitution { bindings }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}/{t}")?;
        }
        f.write_str("}")
    }
}

/// Source of globally fresh variable names. Safe to share between threads.
#[derive(Debug, Default)]
pub struct VarGen {
    next: AtomicU64,
}

impl VarGen {
    pub const fn new() -> Self {
        VarGen { next: AtomicU64::new(0) }
    }

    /// Process-wide generator.
    pub fn global() -> &'static VarGen {
        static GLOBAL: VarGen = VarGen::new();
        &GLOBAL
    }

    /// Fresh names start with `_G`, which the parser never hands out for a
    /// named variable.
    pub fn fresh(&self) -> Sym {
        let n = self.next.fetch_add(1, Ordering::Relaxed);
        format!("_G{n}").into()
    }

    pub fn renaming(&self, vars: &[Sym]) -> BTreeMap<Sym, Sym> {
        vars.iter().map(|v| (v.clone(), self.fresh())).collect()
    }
}
