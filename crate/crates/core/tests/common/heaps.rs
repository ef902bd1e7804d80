//! Seeded chains of list cells and segments that abstraction can fold.
//!
//! A chain starts at program variable `x` and links units of one list kind
//! through existential joints. It ends at nil, at program variable `z`, or at
//! a further existential. `x != z` is added at random so that some folds
//! have their acyclicity premise and some do not.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapeck::abstraction::Abstraction;
use shapeck::formula::{normalize, parse_heap, SymbolicHeap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Sll,
    Dll,
    Nll,
}

/// One random chain, or `None` if it normalizes to false.
pub fn chain(rng: &mut ChaCha8Rng) -> Option<SymbolicHeap> {
    let kind = match rng.gen_range(0..3) {
        0 => Kind::Sll,
        1 => Kind::Dll,
        _ => Kind::Nll,
    };
    // Nested chains stay shorter: each nested cell widens the entailment search.
    let units = rng.gen_range(2..=if kind == Kind::Nll { 3 } else { 4 });
    let end = match rng.gen_range(0..3) {
        0 => "nil".to_string(),
        1 => "z".to_string(),
        _ => "t".to_string(),
    };
    let mut exists: Vec<String> = Vec::new();
    let mut atoms: Vec<String> = Vec::new();
    // Names of the chain's nodes: x, e1, e2, ..., end.
    let mut nodes = vec!["x".to_string()];
    for i in 1..units {
        nodes.push(format!("e{i}"));
    }
    nodes.push(end.clone());
    exists.extend(nodes[1..units].iter().cloned());
    if end == "t" {
        exists.push("t".into());
    }
    let mut prev = "nil".to_string();
    for i in 0..units {
        let (src, dst) = (&nodes[i], &nodes[i + 1]);
        let cell = rng.gen_bool(0.6);
        match kind {
            Kind::Sll => {
                if cell {
                    atoms.push(format!("{src} -> (next: {dst})"));
                } else {
                    atoms.push(format!("ls({}+; {src}, {dst})", rng.gen_range(0..=2)));
                }
            }
            Kind::Dll => {
                if cell {
                    atoms.push(format!("{src} -> (next: {dst}, prev: {prev})"));
                    prev = src.clone();
                } else {
                    // The segment's last cell is named so the next unit can point back to it.
                    let last = format!("l{i}");
                    exists.push(last.clone());
                    atoms.push(format!("dls({}+; {src}, {last}, {prev}, {dst})", rng.gen_range(1..=2)));
                    prev = last;
                }
            }
            Kind::Nll => {
                if cell {
                    let w = format!("w{i}");
                    exists.push(w.clone());
                    atoms.push(format!("{src} -> (next: {dst}, nested: {w})"));
                    atoms.push(format!("ls({}+; {w}, nil)", rng.gen_range(0..=2)));
                } else {
                    atoms.push(format!("nls({}+; {src}, {dst}, nil)", rng.gen_range(1..=2)));
                }
            }
        }
    }
    if rng.gen_bool(0.25) {
        atoms.push("y -> (next: nil)".into());
    }
    let pure = if end == "z" && rng.gen_bool(0.7) { "x != z & " } else { "" };
    let src = format!("E {} . {pure}{}", exists.join(" "), atoms.join(" * "));
    let h = parse_heap(&src).unwrap_or_else(|e| panic!("{src}: {e}"));
    normalize(&h).ok()
}

/// The first `n` chains drawn from `seed` that admit at least one fold.
pub fn foldable(seed: u64, n: usize) -> Vec<SymbolicHeap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let abs = Abstraction::default();
    let none = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        if let Some(h) = chain(&mut rng) {
            if abs.fold_once(&h, &none).is_some() {
                out.push(h);
            }
        }
    }
    out
}
