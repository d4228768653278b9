//! Scaled forward-backward over the reachable ground-state trellis.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use crate::logic::{Atom, START};
use crate::model::{ground_step_prob, successors_emitting, Lohmm, ModelError};

type Successors = Rc<[(Atom, f64)]>;

/// Memoized one-step successor lists `(h, P(h, o | b))` keyed by `(b, o)`.
///
/// A cache is tied to one model; sharing it across the sequences of a
/// corpus avoids recomputing steps that recur.
pub struct StepCache<'m> {
    model: &'m Lohmm,
    table: HashMap<(Atom, Option<Atom>), Successors>,
}

impl<'m> StepCache<'m> {
    pub fn new(model: &'m Lohmm) -> Self {
        StepCache { model, table: HashMap::new() }
    }

    pub fn model(&self) -> &'m Lohmm {
        self.model
    }

    /// Successors of `b` emitting `o` with positive probability.
    pub fn successors(&mut self, b: &Atom, o: Option<&Atom>) -> Result<Successors, ModelError> {
        let key = (b.clone(), o.cloned());
        if let Some(s) = self.table.get(&key) {
            return Ok(s.clone());
        }
        let mut out = Vec::new();
        for h in successors_emitting(self.model, b, o)? {
            let p = ground_step_prob(self.model, b, &h, o)?;
            if p > 0.0 {
                out.push((h, p));
            }
        }
        let s: Successors = out.into();
        self.table.insert(key, s.clone());
        Ok(s)
    }
}

/// One weighted edge between consecutive trellis layers.
#[derive(Clone, Debug)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub prob: f64,
}

/// Forward and backward masses over the ground states reachable at each
/// step of one observation sequence.
///
/// Layer 0 holds `start`; layer `t + 1` is entered by emitting `obs[t - 1]`
/// (layer 1 is entered silently). Masses are scaled so each forward layer
/// sums to one; `scale[t]` is the normalizer of layer `t`.
#[derive(Clone, Debug)]
pub struct GroundTrellis {
    pub obs: Vec<Atom>,
    pub states: Vec<Vec<Atom>>,
    /// `edges[t]` connects layer `t` to layer `t + 1`.
    pub edges: Vec<Vec<Edge>>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub scale: Vec<f64>,
}

impl GroundTrellis {
    /// Runs the forward pass, and the backward pass when the sequence has
    /// positive probability.
    pub fn build(cache: &mut StepCache<'_>, obs: &[Atom]) -> Result<GroundTrellis, ModelError> {
        let mut states = vec![vec![Atom::nullary(START)]];
        let mut alpha = vec![vec![1.0]];
        let mut scale = vec![1.0];
        let mut edges = Vec::with_capacity(obs.len() + 1);
        for t in 0..=obs.len() {
            let o = if t == 0 { None } else { Some(&obs[t - 1]) };
            let mut index: HashMap<Atom, usize> = HashMap::new();
            let mut next_states = Vec::new();
            let mut next_alpha: Vec<f64> = Vec::new();
            let mut layer = Vec::new();
            for (i, b) in states[t].iter().enumerate() {
                let a = alpha[t][i];
                if a == 0.0 {
                    continue;
                }
                for (h, p) in cache.successors(b, o)?.iter() {
                    let j = *index.entry(h.clone()).or_insert_with(|| {
                        next_states.push(h.clone());
                        next_alpha.push(0.0);
                        next_states.len() - 1
                    });
                    next_alpha[j] += a * p;
                    layer.push(Edge { from: i, to: j, prob: *p });
                }
            }
            let c: f64 = next_alpha.iter().sum();
            if c > 0.0 {
                next_alpha.iter_mut().for_each(|x| *x /= c);
            }
            states.push(next_states);
            alpha.push(next_alpha);
            scale.push(c);
            edges.push(layer);
            if c == 0.0 {
                break;
            }
        }
        let mut trellis = GroundTrellis { obs: obs.to_vec(), states, edges, alpha, beta: Vec::new(), scale };
        if trellis.is_possible() {
            trellis.backward();
        }
        Ok(trellis)
    }

    fn backward(&mut self) {
        let n = self.states.len();
        let mut beta: Vec<Vec<f64>> = self.states.iter().map(|s| vec![0.0; s.len()]).collect();
        beta[n - 1].iter_mut().for_each(|x| *x = 1.0);
        for t in (0..n - 1).rev() {
            let c = self.scale[t + 1];
            for e in &self.edges[t] {
                beta[t][e.from] += e.prob * beta[t + 1][e.to] / c;
            }
        }
        self.beta = beta;
    }

    pub fn is_possible(&self) -> bool {
        self.scale.iter().all(|&c| c > 0.0) && self.scale.len() == self.obs.len() + 2
    }

    /// `ln P(obs)`, or negative infinity for impossible sequences.
    pub fn log_likelihood(&self) -> f64 {
        if !self.is_possible() {
            return f64::NEG_INFINITY;
        }
        self.scale.iter().map(|c| c.ln()).sum()
    }

    /// Posterior mass of each edge of step `t`, in edge order.
    pub fn edge_posteriors(&self, t: usize) -> impl Iterator<Item = (&Edge, f64)> + '_ {
        let c = self.scale[t + 1];
        self.edges[t]
            .iter()
            .map(move |e| (e, self.alpha[t][e.from] * e.prob * self.beta[t + 1][e.to] / c))
    }

    /// Adds this sequence's posterior transition counts to `table`.
    pub fn accumulate(&self, table: &mut BTreeMap<(Atom, Atom, Option<Atom>), f64>) {
        for t in 0..self.edges.len() {
            let o = if t == 0 { None } else { Some(self.obs[t - 1].clone()) };
            for (e, w) in self.edge_posteriors(t) {
                if w > 0.0 {
                    let key = (self.states[t][e.from].clone(), self.states[t + 1][e.to].clone(), o.clone());
                    *table.entry(key).or_insert(0.0) += w;
                }
            }
        }
    }
}
