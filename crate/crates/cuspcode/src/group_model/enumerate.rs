use super::{GroupModel, Word};
use crate::boundary_geometry::MobiusMap;
use crate::error::{Error, Result};
use std::collections::HashSet;

/// Letter order used everywhere: g1, g1^-1, g2, g2^-1, ...
pub(crate) fn letter_order(g: &GroupModel) -> Vec<i32> {
    (1..=g.generators.len() as i32).flat_map(|l| [l, -l]).collect()
}

/// Depth-first walk over reduced words in lexicographic letter order.
///
/// `visit` sees every word (prefixes first) and returns whether to descend below it. Words whose
/// map was already produced by an earlier word are skipped unless the group is declared free.
pub fn walk<F>(g: &GroupModel, max_depth: usize, mut visit: F) -> Result<usize>
where
    F: FnMut(&Word, &MobiusMap) -> Result<bool>,
{
    let letters = letter_order(g);
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut count = 0usize;
    let id = MobiusMap::identity(g.dim);
    if !g.free {
        seen.insert(id.canonical_key());
    }
    let mut word = Word::identity();
    count += 1;
    if !visit(&word, &id)? || max_depth == 0 {
        return Ok(count);
    }
    // explicit stack of (map at this depth, next letter index to try)
    let mut stack: Vec<(MobiusMap, usize)> = vec![(id, 0)];
    while let Some((map, next)) = stack.last_mut() {
        if *next >= letters.len() {
            stack.pop();
            word.0.pop();
            continue;
        }
        let l = letters[*next];
        *next += 1;
        if word.0.last() == Some(&-l) {
            continue;
        }
        let m = map.compose_unchecked(g.letter(l));
        if !g.free && !seen.insert(m.canonical_key()) {
            continue;
        }
        word.0.push(l);
        count += 1;
        if count > g.max_elements {
            return Err(Error::Budget(count, g.max_elements));
        }
        let descend = visit(&word, &m)?;
        if descend && word.len() < max_depth {
            stack.push((m, 0));
        } else {
            word.0.pop();
        }
    }
    Ok(count)
}

/// All reduced words of length <= depth with their maps, deduplicated by canonical form.
pub fn enumerate_words(g: &GroupModel, depth: usize) -> Result<Vec<(Word, MobiusMap)>> {
    let mut out = vec![];
    let mut keys: HashSet<Vec<i64>> = HashSet::new();
    walk(g, depth, |w, m| {
        if keys.insert(m.canonical_key()) {
            out.push((w.clone(), *m));
        }
        Ok(true)
    })?;
    Ok(out)
}
