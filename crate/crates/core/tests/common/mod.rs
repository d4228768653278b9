//! Shared helpers for integration tests: fixture loading, a random model
//! generator and brute-force oracles over hidden paths.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lohmm::logic::{ground_instances, Atom, Signature, START};
use lohmm::model::{ground_step_prob, load_model, Lohmm};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Lohmm {
    load_model(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

fn weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

struct Pred {
    name: &'static str,
    domains: Vec<&'static str>,
}

struct ClauseGen<'a> {
    consts: &'a BTreeMap<&'static str, Vec<String>>,
    vars: Vec<(String, &'static str)>,
}

impl ClauseGen<'_> {
    fn fresh(&mut self, dom: &'static str) -> String {
        let v = format!("V{}", self.vars.len());
        self.vars.push((v.clone(), dom));
        v
    }

    /// An argument of domain `dom`: an existing variable, a constant or a
    /// fresh variable.
    fn arg<R: Rng>(&mut self, rng: &mut R, dom: &'static str) -> String {
        let existing: Vec<String> = self.vars.iter().filter(|(_, d)| *d == dom).map(|(v, _)| v.clone()).collect();
        let r: f64 = rng.random();
        if r < 0.4 && !existing.is_empty() {
            existing.choose(rng).unwrap().clone()
        } else if r < 0.65 {
            self.consts[dom].choose(rng).unwrap().clone()
        } else {
            self.fresh(dom)
        }
    }

    fn atom<R: Rng>(&mut self, rng: &mut R, p: &Pred) -> String {
        if p.domains.is_empty() {
            return p.name.to_string();
        }
        let args: Vec<String> = p.domains.iter().map(|d| self.arg(rng, d)).collect();
        format!("{}({})", p.name, args.join(", "))
    }
}

/// A random valid model with at most nine ground states: one or two state
/// predicates, each with a fully general body and possibly one more
/// specific body, one to three clauses per body.
pub fn random_model<R: Rng>(rng: &mut R) -> Lohmm {
    loop {
        if let Ok(m) = load_model(&random_model_text(rng)) {
            return m;
        }
    }
}

pub fn random_model_text<R: Rng>(rng: &mut R) -> String {
    let nd = rng.random_range(2..=3);
    let mut consts: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    consts.insert("d", (0..nd).map(|i| format!("d{i}")).collect());
    consts.insert("e", vec!["e0".into(), "e1".into()]);
    let mut states = vec![Pred { name: "s", domains: vec!["d"] }];
    if rng.random_bool(0.5) {
        states.push(Pred { name: "t", domains: vec!["d", "e"] });
    }
    let mut obs = vec![Pred { name: "o", domains: vec!["d"] }];
    if rng.random_bool(0.5) {
        obs.push(Pred { name: "q", domains: vec![] });
    }
    if rng.random_bool(0.5) {
        obs.push(Pred { name: "r", domains: vec!["e"] });
    }

    let mut text = String::new();
    for (d, cs) in &consts {
        text.push_str(&format!("domain {d} = {} .\n", cs.join(", ")));
    }
    for p in &states {
        text.push_str(&format!("state {}/{} : {} .\n", p.name, p.domains.len(), p.domains.join(", ")));
    }
    for p in &obs {
        if p.domains.is_empty() {
            text.push_str(&format!("obs {}/0 .\n", p.name));
        } else {
            text.push_str(&format!("obs {}/{} : {} .\n", p.name, p.domains.len(), p.domains.join(", ")));
        }
    }
    for (d, cs) in &consts {
        let w = weights(rng, cs.len());
        let entries: Vec<String> = cs.iter().zip(&w).map(|(c, p)| format!("{c} {p}")).collect();
        text.push_str(&format!("select {d} : {} .\n", entries.join(", ")));
    }

    let mut clauses: Vec<(String, Option<String>, String)> = Vec::new();
    let nstart = rng.random_range(1..=2);
    for _ in 0..nstart {
        let mut g = ClauseGen { consts: &consts, vars: Vec::new() };
        let hp = states.choose(rng).unwrap();
        let h = g.atom(rng, hp);
        clauses.push(("start".into(), None, h));
    }
    for p in &states {
        let general: Vec<String> = p.domains.iter().enumerate().map(|(i, _)| format!("B{i}")).collect();
        let mut bodies = vec![(format!("{}({})", p.name, general.join(", ")), general.clone())];
        if rng.random_bool(0.5) {
            // one more specific body; a chain of bodies is always well founded
            let args: Vec<String> = p
                .domains
                .iter()
                .enumerate()
                .map(|(i, d)| if i == 0 || rng.random_bool(0.5) { consts[d].choose(rng).unwrap().clone() } else { format!("B{i}") })
                .collect();
            bodies.push((format!("{}({})", p.name, args.join(", ")), args));
        }
        for (body, args) in bodies {
            let k = rng.random_range(1..=3);
            for _ in 0..k {
                let mut g = ClauseGen { consts: &consts, vars: Vec::new() };
                for (a, d) in args.iter().zip(&p.domains) {
                    if a.starts_with('B') {
                        g.vars.push((a.clone(), d));
                    }
                }
                let hp = states.choose(rng).unwrap();
                let h = g.atom(rng, hp);
                let op = obs.choose(rng).unwrap();
                let o = g.atom(rng, op);
                clauses.push((body.clone(), Some(o), h));
            }
        }
    }
    clauses.dedup();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in clauses.iter().enumerate() {
        groups.entry(c.0.clone()).or_default().push(i);
    }
    let mut probs = vec![0.0; clauses.len()];
    for members in groups.values() {
        for (i, w) in members.iter().zip(weights(rng, members.len())) {
            probs[*i] = w;
        }
    }
    for ((b, o, h), p) in clauses.iter().zip(probs) {
        match o {
            Some(o) => text.push_str(&format!("trans {p} : {b} -- {o} --> {h} .\n")),
            None => text.push_str(&format!("trans {p} : {b} --> {h} .\n")),
        }
    }
    text
}

/// Every ground instance of the declared state predicates, `start` excluded.
pub fn herbrand_states(sig: &Signature) -> Vec<Atom> {
    sig.state_predicates()
        .flat_map(|d| ground_instances(&sig.most_general(d, "X"), sig).unwrap())
        .collect()
}

pub fn herbrand_observations(sig: &Signature) -> Vec<Atom> {
    sig.obs_predicates()
        .flat_map(|d| ground_instances(&sig.most_general(d, "X"), sig).unwrap())
        .collect()
}

/// All hidden paths `start, h1, .., h(T+1)` with nonzero joint probability
/// of path and observations, by enumeration over the Herbrand base.
pub fn enumerate_paths(m: &Lohmm, obs: &[Atom]) -> Vec<(Vec<Atom>, f64)> {
    let states = herbrand_states(m.signature());
    let mut paths = vec![(vec![Atom::nullary(START)], 1.0)];
    for t in 0..=obs.len() {
        let o = if t == 0 { None } else { Some(&obs[t - 1]) };
        let mut next = Vec::new();
        for (path, p) in &paths {
            let b = path.last().unwrap();
            for h in &states {
                let q = ground_step_prob(m, b, h, o).unwrap_or(0.0);
                if q > 0.0 {
                    let mut np = path.clone();
                    np.push(h.clone());
                    next.push((np, p * q));
                }
            }
        }
        paths = next;
    }
    paths
}

pub type Triple = (Atom, Atom, Option<Atom>);

/// Probability of `obs` and the posterior expected count of each ground
/// transition, from the path enumeration.
pub fn enumeration_posterior(m: &Lohmm, obs: &[Atom]) -> (f64, BTreeMap<Triple, f64>) {
    let paths = enumerate_paths(m, obs);
    let total: f64 = paths.iter().map(|(_, p)| p).sum();
    let mut counts = BTreeMap::new();
    for (path, p) in &paths {
        for t in 0..path.len() - 1 {
            let o = if t == 0 { None } else { Some(obs[t - 1].clone()) };
            *counts.entry((path[t].clone(), path[t + 1].clone(), o)).or_insert(0.0) += p / total;
        }
    }
    (total, counts)
}
