//! Gradient ascent M-step with backtracking and restarts, and the inner
//! generalized EM loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LearnError, Objective, ParamVector};
use crate::model::Lohmm;
use crate::semantics::{expected_counts, ExpectedCounts, Sequence};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    /// Gradient steps per run.
    pub max_iterations: usize,
    /// Runs per M-step; the first is warm-started.
    pub restarts: usize,
    /// Relative change in `Q` (M-step) or log-likelihood (inner loop)
    /// below which iteration stops.
    pub tolerance: f64,
    pub initial_step: f64,
    /// Step halvings before a run gives up.
    pub max_halvings: usize,
    /// Sufficient-increase constant of the line search.
    pub armijo: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 10,
            restarts: 5,
            tolerance: 1e-6,
            initial_step: 1.0,
            max_halvings: 30,
            armijo: 1e-4,
            seed: 0,
        }
    }
}

fn converged(old: f64, new: f64, tol: f64) -> bool {
    (new - old).abs() <= tol * old.abs().max(1e-12)
}

/// One ascent run from `start`. Each accepted step increases `Q`.
fn ascend(obj: &Objective, start: ParamVector, cfg: &OptimizerConfig, masses: &[f64]) -> Result<(ParamVector, f64), LearnError> {
    let sizes = start.group_sizes();
    let mut x = start.flatten();
    let mut params = start;
    let (mut q, mut grad) = obj.beta_gradient(&params)?;
    let mut step = cfg.initial_step;
    for it in 0..cfg.max_iterations {
        let g = grad.flatten();
        let mut dir = Vec::with_capacity(g.len());
        let mut k = 0;
        for (&n, &mass) in sizes.iter().zip(masses) {
            let s = 1.0 / mass.max(1.0);
            dir.extend(g[k..k + n].iter().map(|v| v * s));
            k += n;
        }
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        if slope <= 0.0 {
            break;
        }
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let tp = params.with_flat(&trial);
            if let Ok(tq) = obj.value(&tp) {
                if tq >= q + cfg.armijo * step * slope {
                    accepted = Some((trial, tp, tq));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, tp, tq)) = accepted else { break };
        log::debug!("ascent iteration={it} q={tq} step={step}");
        let done = converged(q, tq, cfg.tolerance);
        x = trial;
        params = tp;
        q = tq;
        step = (step * 2.0).min(cfg.initial_step * 64.0);
        if done {
            break;
        }
        grad = obj.beta_gradient(&params)?.1;
    }
    Ok((params, q))
}

/// Improves `Q` over the structure of `m` for fixed counts: the best of a
/// warm-started run and `restarts - 1` runs from random parameters. The
/// result never scores below `start`.
pub fn improve_params(
    m: &Lohmm,
    ec: &ExpectedCounts,
    start: &ParamVector,
    cfg: &OptimizerConfig,
) -> Result<(ParamVector, f64), LearnError> {
    let obj = Objective::new(m, ec)?;
    improve_objective(&obj, m, start, cfg)
}

pub(crate) fn improve_objective(
    obj: &Objective,
    m: &Lohmm,
    start: &ParamVector,
    cfg: &OptimizerConfig,
) -> Result<(ParamVector, f64), LearnError> {
    let masses = obj.group_masses();
    let mut best = ascend(obj, start.clone(), cfg, &masses)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 1..cfg.restarts.max(1) {
        let init = ParamVector::random(m, &mut rng);
        if let Ok(run) = ascend(obj, init, cfg, &masses) {
            if run.1 > best.1 {
                best = run;
            }
        }
    }
    Ok(best)
}

/// Outcome of the inner generalized EM loop.
#[derive(Clone, Debug)]
pub struct InnerLoopResult {
    pub params: ParamVector,
    /// Counts from the final E-step, computed under `params`.
    pub ec: ExpectedCounts,
    pub loglik: f64,
    /// Training log-likelihood after each E-step.
    pub history: Vec<f64>,
}

/// Alternates E-steps and improving M-steps until the relative change in
/// training log-likelihood drops below tolerance or `l_max` M-steps ran.
pub fn gem_inner_loop(
    m: &Lohmm,
    params0: &ParamVector,
    data: &[Sequence],
    l_max: usize,
    cfg: &OptimizerConfig,
) -> Result<InnerLoopResult, LearnError> {
    let mut params = params0.clone();
    let mut history = Vec::new();
    let mut l = 0;
    loop {
        let ec = expected_counts(&params.apply(m), data)?;
        let ll = ec.loglik;
        let stop = l == l_max || history.last().is_some_and(|&prev| converged(prev, ll, cfg.tolerance));
        history.push(ll);
        log::debug!("inner iteration={l} loglik={ll}");
        if stop {
            return Ok(InnerLoopResult { params, ec, loglik: ll, history });
        }
        let mut step_cfg = cfg.clone();
        step_cfg.seed = cfg.seed.wrapping_add(l as u64);
        params = improve_params(m, &ec, &params, &step_cfg)?.0;
        l += 1;
    }
}
