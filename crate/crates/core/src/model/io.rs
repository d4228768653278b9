//! Model file reader and writer.
//!
//! ```text
//! domain file = lohmm, readme .
//! state emacs/2 : file, user .
//! obs ls/0 .
//! select file : lohmm 0.5, readme 0.5 .
//! trans 0.7 : start --> emacs(_, tex) .
//! trans 0.6 : emacs(F, tex) -- emacs(F) --> latex(F, tex) .
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{AbstractTransition, Lohmm, ModelError, SelectionDistribution, NORMALIZATION_TOLERANCE};
use crate::logic::{LogicError, Parser, PredKind, Signature, Tok, VarGen, START};

/// Below this deviation a sum is treated as exactly one and left alone.
const RENORMALIZE_FLOOR: f64 = 1e-12;

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
    (line, col)
}

fn syntax(text: &str, offset: usize, message: impl Into<String>) -> ModelError {
    let (line, column) = line_col(text, offset);
    ModelError::Syntax { line, column, message: message.into() }
}

fn lift(text: &str, e: LogicError) -> ModelError {
    match e {
        LogicError::Syntax { offset, message } => syntax(text, offset, message),
        other => ModelError::Logic(other),
    }
}

/// Parses a model file without checking semantic invariants. A file with
/// no `trans` statements yields a model with an empty transition set, which
/// is how bare signatures are read.
pub fn parse_model(text: &str) -> Result<Lohmm, ModelError> {
    let gen = VarGen::new();
    let mut p = Parser::new(text, &gen).map_err(|e| lift(text, e))?;
    let mut sig = Signature::new();
    let mut selects: Vec<(usize, Vec<(String, f64, usize)>)> = Vec::new();
    let mut trans = Vec::new();
    while !p.at_eof() {
        let at = p.offset();
        let keyword = p.word().map_err(|e| lift(text, e))?;
        match keyword.as_str() {
            "domain" => {
                let name = p.word().map_err(|e| lift(text, e))?;
                p.expect(Tok::Eq).map_err(|e| lift(text, e))?;
                let mut consts = vec![(p.offset(), p.word().map_err(|e| lift(text, e))?)];
                while *p.peek() == Tok::Comma {
                    p.next();
                    consts.push((p.offset(), p.word().map_err(|e| lift(text, e))?));
                }
                for (i, (off, c)) in consts.iter().enumerate() {
                    if consts[..i].iter().any(|(_, d)| d == c) {
                        return Err(syntax(text, *off, format!("duplicate constant `{c}` in domain `{name}`")));
                    }
                }
                let names: Vec<&str> = consts.iter().map(|(_, c)| c.as_str()).collect();
                sig.add_domain(&name, &names).map_err(|e| match e {
                    LogicError::DuplicateDeclaration(m) => syntax(text, at, format!("duplicate declaration: {m}")),
                    other => ModelError::Logic(other),
                })?;
            }
            "state" | "obs" => {
                let kind = if keyword == "state" { PredKind::State } else { PredKind::Obs };
                let name = p.word().map_err(|e| lift(text, e))?;
                p.expect(Tok::Slash).map_err(|e| lift(text, e))?;
                let arity = p.integer().map_err(|e| lift(text, e))?;
                let mut doms = Vec::new();
                if arity > 0 {
                    p.expect(Tok::Colon).map_err(|e| lift(text, e))?;
                    doms.push(p.word().map_err(|e| lift(text, e))?);
                    while *p.peek() == Tok::Comma {
                        p.next();
                        doms.push(p.word().map_err(|e| lift(text, e))?);
                    }
                }
                if doms.len() != arity {
                    return Err(syntax(text, at, format!("{name}/{arity} lists {} domains", doms.len())));
                }
                let doms: Vec<&str> = doms.iter().map(String::as_str).collect();
                sig.add_predicate(kind, &name, &doms).map_err(|e| match e {
                    LogicError::DuplicateDeclaration(m) => syntax(text, at, format!("duplicate declaration: {m}")),
                    other => ModelError::Logic(other),
                })?;
            }
            "select" => {
                let name = p.word().map_err(|e| lift(text, e))?;
                let d = sig
                    .domain_by_name(&name)
                    .ok_or_else(|| ModelError::Logic(LogicError::UnknownDomain(name.clone())))?;
                if selects.iter().any(|(e, _)| *e == d) {
                    return Err(syntax(text, at, format!("duplicate select block for `{name}`")));
                }
                p.expect(Tok::Colon).map_err(|e| lift(text, e))?;
                let mut entries = Vec::new();
                loop {
                    let off = p.offset();
                    let c = p.word().map_err(|e| lift(text, e))?;
                    let v = p.number().map_err(|e| lift(text, e))?;
                    entries.push((c, v, off));
                    if *p.peek() != Tok::Comma {
                        break;
                    }
                    p.next();
                }
                selects.push((d, entries));
            }
            "trans" => {
                p.reset_scope();
                let prob = p.number().map_err(|e| lift(text, e))?;
                p.expect(Tok::Colon).map_err(|e| lift(text, e))?;
                let body = p.atom().map_err(|e| lift(text, e))?;
                let obs = if *p.peek() == Tok::Dash {
                    p.next();
                    Some(p.atom().map_err(|e| lift(text, e))?)
                } else {
                    None
                };
                p.expect(Tok::Arrow).map_err(|e| lift(text, e))?;
                let head = p.atom().map_err(|e| lift(text, e))?;
                trans.push(AbstractTransition::new(prob, body, obs, head));
            }
            other => return Err(syntax(text, at, format!("unknown statement `{other}`"))),
        }
        p.expect(Tok::Dot).map_err(|e| lift(text, e))?;
    }

    let mut mu = SelectionDistribution::uniform(&sig);
    for (d, entries) in selects {
        let dom = sig.domain(d);
        let mut probs = vec![0.0; dom.len()];
        let mut seen = vec![false; dom.len()];
        for (c, v, off) in entries {
            let i = dom.position(&c).ok_or_else(|| {
                ModelError::Logic(LogicError::DomainMismatch { constant: c.clone(), domain: dom.name.to_string() })
            })?;
            if seen[i] {
                return Err(syntax(text, off, format!("duplicate constant `{c}` in select block")));
            }
            seen[i] = true;
            probs[i] = v;
        }
        mu.probs[d] = probs;
    }
    Lohmm::new(Arc::new(sig), mu, trans)
}

/// Parses, renormalizes near-normalized groups and validates.
pub fn load_model(text: &str) -> Result<Lohmm, ModelError> {
    let m = renormalize(&parse_model(text)?);
    let violations = m.validate();
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(ModelError::Validation(violations))
    }
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<Lohmm, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io { path: path.display().to_string(), message: e.to_string() })?;
    load_model(&text)
}

/// Rescales groups whose sum is within tolerance of one but not exact.
fn renormalize(m: &Lohmm) -> Lohmm {
    let near = |s: f64| {
        let d = (s - 1.0).abs();
        d > RENORMALIZE_FLOOR && d <= NORMALIZATION_TOLERANCE
    };
    let mut trans: Vec<f64> = m.transitions().iter().map(|t| t.prob).collect();
    for g in m.groups() {
        let sum: f64 = g.clauses.iter().map(|&c| trans[c]).sum();
        if near(sum) {
            for &c in &g.clauses {
                trans[c] /= sum;
            }
        }
    }
    let mut mu = m.mu().clone();
    for probs in &mut mu.probs {
        let sum: f64 = probs.iter().sum();
        if near(sum) {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
    }
    m.with_probabilities(&trans, mu)
}

/// Serializes a model in the file format read by [`load_model`].
pub fn save_model(m: &Lohmm) -> String {
    let sig = m.signature();
    let mut out = String::new();
    for d in sig.domains() {
        let consts: Vec<&str> = d.constants.iter().map(|c| c.as_ref()).collect();
        let _ = writeln!(out, "domain {} = {} .", d.name, consts.join(", "));
    }
    for kind in [PredKind::State, PredKind::Obs] {
        for decl in sig.predicates().iter().filter(|p| p.kind == kind && &*p.name != START) {
            let word = if kind == PredKind::State { "state" } else { "obs" };
            let _ = write!(out, "{word} {}/{}", decl.name, decl.arity());
            if decl.arity() > 0 {
                let names: Vec<&str> = decl.domains.iter().map(|&d| sig.domain(d).name.as_ref()).collect();
                let _ = write!(out, " : {}", names.join(", "));
            }
            out.push_str(" .\n");
        }
    }
    for (d, probs) in sig.domains().iter().zip(&m.mu().probs) {
        let entries: Vec<String> =
            d.constants.iter().zip(probs).map(|(c, p)| format!("{c} {}", fmt_prob(*p))).collect();
        let _ = writeln!(out, "select {} : {} .", d.name, entries.join(", "));
    }
    for t in m.transitions() {
        let _ = writeln!(out, "trans {} : {} .", fmt_prob(t.prob), super::clause_text(t));
    }
    out
}

/// Shortest round-tripping decimal, always with a fractional part so the
/// tokenizer reads it as a number.
fn fmt_prob(p: f64) -> String {
    let s = format!("{p}");
    if s.contains('.') { s } else { format!("{s}.0") }
}
