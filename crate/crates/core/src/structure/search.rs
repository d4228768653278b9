//! Structural EM over frozen expected counts, with beam search, and the
//! naive greedy baseline that re-runs EM for every neighbor.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;

use super::{penalty, refine_counted, structure_key, Score, SearchConfig, TraceRecord};
use crate::learn::{expected_score, gem_inner_loop, improve_params, LearnError, OptimizerConfig, ParamVector};
use crate::model::Lohmm;
use crate::semantics::{ExpectedCounts, Sequence};

#[derive(Clone, Debug)]
pub struct SearchResult {
    /// Learned structure carrying the learned probabilities.
    pub model: Lohmm,
    pub params: ParamVector,
    pub score: Score,
    pub trace: Vec<TraceRecord>,
}

/// A structure with estimated parameters and the counts of its last
/// E-step.
#[derive(Clone, Debug)]
struct Hypothesis {
    model: Lohmm,
    params: ParamVector,
    ec: ExpectedCounts,
    loglik: f64,
    score: Score,
}

fn derive_seed(base: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut x = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9) ^ c.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x = x.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    x ^ (x >> 29)
}

fn with_seed(cfg: &OptimizerConfig, seed: u64) -> OptimizerConfig {
    OptimizerConfig { seed, ..cfg.clone() }
}

fn margin(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

fn estimate(structure: &Lohmm, start: &ParamVector, data: &[Sequence], cfg: &SearchConfig, seed: u64) -> Result<Hypothesis, LearnError> {
    let r = gem_inner_loop(structure, start, data, cfg.l_max, &with_seed(&cfg.optimizer, seed))?;
    let model = r.params.apply(structure);
    let score = Score::new(r.loglik, model.num_transitions(), data.len());
    Ok(Hypothesis { model, params: r.params, ec: r.ec, loglik: r.loglik, score })
}

fn record(iteration: usize, h: &Hypothesis, started: Instant, evaluated: usize, discarded: usize) -> TraceRecord {
    TraceRecord {
        iteration,
        transitions: h.model.num_transitions(),
        bodies: h.model.groups().len(),
        loglik: h.score.loglik,
        penalty: h.score.penalty,
        total: h.score.total,
        wall_ms: started.elapsed().as_millis(),
        neighbors_evaluated: evaluated,
        neighbors_discarded: discarded,
    }
}

fn finish(best: Hypothesis, trace: Vec<TraceRecord>) -> SearchResult {
    SearchResult { model: best.model, params: best.params, score: best.score, trace }
}

/// Improves a neighbor's parameters against counts frozen under the
/// current model, warm-starting from the neighbor's own probabilities.
/// Cost depends on the size of the count table only.
pub fn evaluate_neighbor(neighbor: &Lohmm, ec: &ExpectedCounts, cfg: &OptimizerConfig) -> Result<(ParamVector, f64), LearnError> {
    improve_params(neighbor, ec, &ParamVector::from_model(neighbor), cfg)
}

/// Full generalized EM for a neighbor on the data itself.
pub fn naive_evaluate_neighbor(neighbor: &Lohmm, data: &[Sequence], cfg: &SearchConfig) -> Result<(ParamVector, Score), LearnError> {
    let h = estimate(neighbor, &ParamVector::from_model(neighbor), data, cfg, cfg.optimizer.seed)?;
    Ok((h.params, h.score))
}

struct Candidate {
    estimate: f64,
    clauses: usize,
    order: usize,
    structure: Lohmm,
    params: ParamVector,
    /// Already estimated on data (a surviving beam member).
    done: Option<Hypothesis>,
}

/// Structural generalized EM: alternate inner EM on the data with a
/// structure step that scores every refinement on frozen expected counts
/// by `Q` minus penalty, keeping the best `beam_width` hypotheses. Stops
/// when no neighbor's estimated penalized score beats the best current
/// hypothesis.
pub fn sagem(data: &[Sequence], m0: &Lohmm, cfg: &SearchConfig) -> Result<SearchResult, LearnError> {
    let started = Instant::now();
    let n = data.len();
    let first = estimate(m0, &ParamVector::from_model(m0), data, cfg, derive_seed(cfg.seed, 0, 0, 0))?;
    let mut trace = vec![record(0, &first, started, 0, 0)];
    let mut visited: HashSet<String> = HashSet::from([structure_key(first.model.transitions())]);
    let mut best = first.clone();
    let mut beam = vec![first];
    for k in 1..=cfg.max_outer_iterations {
        let iter_start = Instant::now();
        let mut candidates = Vec::new();
        let mut evaluated = 0;
        let mut discarded = 0;
        for (bi, h) in beam.iter().enumerate() {
            let q_h = expected_score(&h.model, &h.params, &h.ec)?;
            let (neighbors, dropped) = refine_counted(&h.model);
            discarded += dropped;
            let fresh: Vec<Lohmm> = neighbors
                .into_iter()
                .filter(|nb| !visited.contains(&structure_key(nb.transitions())))
                .collect();
            let results: Vec<_> = fresh
                .par_iter()
                .enumerate()
                .map(|(ni, nb)| {
                    let seed = derive_seed(cfg.seed, k as u64, bi as u64, ni as u64 + 1);
                    evaluate_neighbor(nb, &h.ec, &with_seed(&cfg.optimizer, seed))
                })
                .collect();
            for (nb, r) in fresh.into_iter().zip(results) {
                match r {
                    Ok((params, q)) => {
                        evaluated += 1;
                        let estimate = h.loglik + (q - q_h) - penalty(nb.num_transitions(), n);
                        candidates.push(Candidate {
                            estimate,
                            clauses: nb.num_transitions(),
                            order: candidates.len(),
                            structure: nb,
                            params,
                            done: None,
                        });
                    }
                    Err(LearnError::IncompatibleCounts(msg)) => {
                        log::debug!("discarding neighbor: {msg}");
                        discarded += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let best_neighbor = candidates.iter().map(|c| c.estimate).fold(f64::NEG_INFINITY, f64::max);
        if !(best_neighbor > best.score.total + margin(best.score.total)) {
            log::info!("search converged after {} structure steps", k - 1);
            break;
        }
        for h in beam.drain(..) {
            candidates.push(Candidate {
                estimate: h.score.total,
                clauses: h.model.num_transitions(),
                order: usize::MAX,
                structure: h.model.clone(),
                params: h.params.clone(),
                done: Some(h),
            });
        }
        candidates.sort_by(|a, b| {
            b.estimate
                .total_cmp(&a.estimate)
                .then(a.clauses.cmp(&b.clauses))
                .then(a.order.cmp(&b.order))
        });
        candidates.truncate(cfg.beam_width.max(1));
        for (ci, c) in candidates.into_iter().enumerate() {
            let h = match c.done {
                Some(h) => h,
                None => {
                    visited.insert(structure_key(c.structure.transitions()));
                    estimate(&c.structure, &c.params, data, cfg, derive_seed(cfg.seed, k as u64, u64::MAX, ci as u64))?
                }
            };
            if h.score.total > best.score.total {
                best = h.clone();
            }
            beam.push(h);
        }
        let rec = record(k, &best, iter_start, evaluated, discarded);
        log::info!("{rec}");
        trace.push(rec);
    }
    Ok(finish(best, trace))
}

/// Greedy search that runs full generalized EM on the data for every
/// neighbor and keeps the best penalized score.
pub fn naive_greedy(data: &[Sequence], m0: &Lohmm, cfg: &SearchConfig) -> Result<SearchResult, LearnError> {
    let started = Instant::now();
    let mut current = estimate(m0, &ParamVector::from_model(m0), data, cfg, derive_seed(cfg.seed, 0, 0, 0))?;
    let mut trace = vec![record(0, &current, started, 0, 0)];
    for k in 1..=cfg.max_outer_iterations {
        let iter_start = Instant::now();
        let (neighbors, mut discarded) = refine_counted(&current.model);
        let results: Vec<_> = neighbors
            .par_iter()
            .enumerate()
            .map(|(ni, nb)| estimate(nb, &ParamVector::from_model(nb), data, cfg, derive_seed(cfg.seed, k as u64, 0, ni as u64 + 1)))
            .collect();
        let mut evaluated = 0;
        let mut winner: Option<Hypothesis> = None;
        for r in results {
            match r {
                Ok(h) => {
                    evaluated += 1;
                    let better = match &winner {
                        None => true,
                        Some(w) => {
                            h.score.total > w.score.total
                                || (h.score.total == w.score.total && h.model.num_transitions() < w.model.num_transitions())
                        }
                    };
                    if better {
                        winner = Some(h);
                    }
                }
                Err(LearnError::Semantics(_)) | Err(LearnError::IncompatibleCounts(_)) => discarded += 1,
                Err(e) => return Err(e),
            }
        }
        match winner {
            Some(w) if w.score.total > current.score.total + margin(current.score.total) => current = w,
            _ => break,
        }
        let rec = record(k, &current, iter_start, evaluated, discarded);
        log::info!("{rec}");
        trace.push(rec);
    }
    Ok(finish(current, trace))
}
