//! Shell-log ingestion: sessions of whitespace-separated commands become
//! observation sequences plus a signature declaring what was seen.

use std::collections::BTreeSet;

use crate::logic::{Atom, Term, START};
use crate::semantics::Sequence;

/// Name of the hidden state predicate in generated signatures.
const STATE_PREFIX: &str = "hid";

/// Maps a shell token to an identifier: every character outside
/// `[A-Za-z0-9_]` becomes `_`, and an `x` is prefixed unless the result
/// starts with a lowercase letter.
pub fn sanitize(token: &str) -> String {
    let mut s: String = token
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if !s.starts_with(|c: char| c.is_ascii_lowercase()) {
        s.insert(0, 'x');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub corpus: Vec<Sequence>,
    /// Signature in model-file syntax, without transitions.
    pub signature: String,
    /// Blocks that contained no commands.
    pub empty_sessions: usize,
}

/// Splits `text` into blank-line-separated sessions and turns each command
/// line `c a1 .. an` into the atom `c(a1, .., ak)` with `k = min(n, max_args)`.
/// Lines starting with `#` are ignored.
pub fn ingest_shell(text: &str, max_args: usize) -> Ingested {
    let mut corpus = Vec::new();
    let mut empty_sessions = 0;
    let mut session: Vec<Atom> = Vec::new();
    let mut in_block = false;
    let mut flush = |session: &mut Vec<Atom>, in_block: &mut bool| {
        if *in_block {
            if session.is_empty() {
                log::warn!("skipping empty session");
                empty_sessions += 1;
            } else {
                corpus.push(std::mem::take(session));
            }
        }
        *in_block = false;
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            flush(&mut session, &mut in_block);
            continue;
        }
        in_block = true;
        if line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace();
        let Some(cmd) = words.next() else { continue };
        let mut name = sanitize(cmd);
        let args: Vec<Term> = words.take(max_args).map(|w| Term::constant(&sanitize(w))).collect();
        if name == START && args.is_empty() {
            name.push('_');
        }
        session.push(Atom::new(&name, args));
    }
    flush(&mut session, &mut in_block);
    let signature = signature_for(&corpus);
    Ingested { corpus, signature, empty_sessions }
}

fn signature_for(corpus: &[Sequence]) -> String {
    let mut preds: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut args: BTreeSet<String> = BTreeSet::new();
    for a in corpus.iter().flatten() {
        preds.insert((a.predicate.to_string(), a.arity()));
        for t in &a.args {
            args.insert(t.to_string());
        }
    }
    let cmds: BTreeSet<&str> = preds.iter().map(|(n, _)| n.as_str()).collect();
    let mut state = STATE_PREFIX.to_string();
    while preds.contains(&(state.clone(), 1)) {
        state.push('_');
    }
    let mut out = String::new();
    if cmds.is_empty() {
        out.push_str("domain cmd = none .\n");
    } else {
        out.push_str(&format!("domain cmd = {} .\n", cmds.iter().copied().collect::<Vec<_>>().join(", ")));
    }
    if !args.is_empty() {
        out.push_str(&format!("domain arg = {} .\n", args.into_iter().collect::<Vec<_>>().join(", ")));
    }
    out.push_str(&format!("state {state}/1 : cmd .\n"));
    for (name, arity) in &preds {
        if *arity == 0 {
            out.push_str(&format!("obs {name}/0 .\n"));
        } else {
            out.push_str(&format!("obs {name}/{arity} : {} .\n", vec!["arg"; *arity].join(", ")));
        }
    }
    out
}
