//! Coercion of raw decoder trees into well-formed prosodic trees.
//!
//! The decoder only guarantees nesting. Levels are fixed bottom-up, PW then
//! PPH then IPH. For each level:
//!
//! 1. a span carrying the level strictly inside a span of the level below
//!    hands the label up to that enclosing span;
//! 2. among nested spans of the same level the outermost keeps the label;
//! 3. every uncovered unit (a character for PW, a span of the level below
//!    otherwise) is covered. For PW, runs of uncovered characters become new
//!    PWs, split wherever an existing span starts or ends. Above PW, the
//!    label goes to the widest ancestor-or-self of the uncovered span that
//!    holds no span of that level; when that is the root, `(0, n)` is
//!    promoted.

use std::collections::BTreeMap;

use super::label::{GeneralizedLabel, ProsodicLevel};
use super::tree::{LabeledSpan, ProsodicTree};

type Extents = BTreeMap<(usize, usize), GeneralizedLabel>;

fn strictly_inside(inner: (usize, usize), outer: (usize, usize)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1 && inner != outer
}

fn inside(inner: (usize, usize), outer: (usize, usize)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1
}

fn carrying(extents: &Extents, level: ProsodicLevel) -> Vec<(usize, usize)> {
    extents
        .iter()
        .filter(|(_, l)| l.contains(level))
        .map(|(e, _)| *e)
        .collect()
}

fn add_level(extents: &mut Extents, extent: (usize, usize), level: ProsodicLevel) {
    let label = extents.entry(extent).or_default();
    *label = label.with(level);
}

fn remove_level(extents: &mut Extents, extent: (usize, usize), level: ProsodicLevel) {
    if let Some(label) = extents.get_mut(&extent) {
        *label = label.without(level);
        if label.is_dummy() {
            extents.remove(&extent);
        }
    }
}

/// Keeps in-range, non-dummy spans, merges duplicate extents and drops any
/// span that crosses a longer one.
fn clean(tree: &ProsodicTree) -> Extents {
    let n = tree.sentence_len();
    let mut merged: Extents = BTreeMap::new();
    for s in tree.spans() {
        if s.start < s.end && s.end <= n && !s.label.is_dummy() {
            let label = merged.entry((s.start, s.end)).or_default();
            *label = label.union(s.label);
        }
    }
    let mut by_len: Vec<((usize, usize), GeneralizedLabel)> = merged.into_iter().collect();
    by_len.sort_by_key(|((i, j), _)| (std::cmp::Reverse(j - i), *i));
    let mut kept: Extents = BTreeMap::new();
    for ((i, j), label) in by_len {
        let crosses = kept
            .keys()
            .any(|&(a, b)| (a < i && i < b && b < j) || (i < a && a < j && j < b));
        if !crosses {
            kept.insert((i, j), label);
        }
    }
    kept
}

/// Coerces a nested set of labeled spans into a tree that passes
/// [`validate_tree`](super::validate_tree). Valid trees come back unchanged.
pub fn repair_tree(tree: &ProsodicTree) -> ProsodicTree {
    let n = tree.sentence_len();
    if n == 0 {
        return ProsodicTree::new(0, Vec::new());
    }
    let mut extents = clean(tree);
    let mut below: Option<ProsodicLevel> = None;
    for level in ProsodicLevel::ALL {
        if let Some(lower) = below {
            hand_up(&mut extents, level, lower);
        }
        keep_outermost(&mut extents, level);
        match below {
            None => fill_words(&mut extents, n),
            Some(lower) => fill_level(&mut extents, level, lower, n),
        }
        below = Some(level);
    }
    let spans = extents
        .into_iter()
        .map(|((i, j), label)| LabeledSpan::new(i, j, label))
        .collect();
    ProsodicTree::new(n, spans)
}

fn hand_up(extents: &mut Extents, level: ProsodicLevel, lower: ProsodicLevel) {
    let lower_spans = carrying(extents, lower);
    for e in carrying(extents, level) {
        if let Some(&p) = lower_spans.iter().find(|&&p| strictly_inside(e, p)) {
            remove_level(extents, e, level);
            add_level(extents, p, level);
        }
    }
}

fn keep_outermost(extents: &mut Extents, level: ProsodicLevel) {
    let spans = carrying(extents, level);
    for &e in &spans {
        if spans.iter().any(|&f| strictly_inside(e, f)) {
            remove_level(extents, e, level);
        }
    }
}

fn fill_words(extents: &mut Extents, n: usize) {
    let mut covered = vec![false; n];
    let mut cut = vec![false; n + 1];
    for (&(i, j), label) in extents.iter() {
        cut[i] = true;
        cut[j] = true;
        if label.contains(ProsodicLevel::Pw) {
            covered[i..j].iter_mut().for_each(|c| *c = true);
        }
    }
    let mut new_words = Vec::new();
    let mut run_start: Option<usize> = None;
    for k in 0..=n {
        if let Some(s) = run_start {
            if k == n || covered[k] || cut[k] {
                new_words.push((s, k));
                run_start = None;
            }
        }
        if k < n && !covered[k] && run_start.is_none() {
            run_start = Some(k);
        }
    }
    for w in new_words {
        add_level(extents, w, ProsodicLevel::Pw);
    }
}

fn fill_level(extents: &mut Extents, level: ProsodicLevel, lower: ProsodicLevel, n: usize) {
    let level_spans = carrying(extents, level);
    let mut targets = Vec::new();
    for p in carrying(extents, lower) {
        if level_spans.iter().any(|&q| inside(p, q)) {
            continue;
        }
        // ancestors-or-self form a chain, so the widest level-free one wins
        let target = extents
            .keys()
            .copied()
            .chain(std::iter::once((0, n)))
            .filter(|&a| inside(p, a))
            .filter(|&a| !level_spans.iter().any(|&q| inside(q, a)))
            .max_by_key(|&(i, j)| j - i)
            .unwrap_or(p);
        targets.push(target);
    }
    for t in targets {
        add_level(extents, t, level);
    }
}
