use super::branch::{sup_deriv, BranchFamily, BranchSystem, RayTail, RayWords};
use crate::boundary_geometry::MobiusMap;
use crate::error::{Error, Result};
use crate::group_model::Word;
use serde::{Deserialize, Serialize};

/// First-return system on one chart, with the bookkeeping of what the cap and floor dropped.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Induced {
    pub system: BranchSystem,
    /// factor chain (family, member) of each induced family; a trailing ray keeps its first index
    pub chains: Vec<Vec<(usize, i64)>>,
    /// unreturned[l-1]: sum of sup|g'|^delta over excursions of length l that have not returned
    pub unreturned: Vec<f64>,
    /// mass of compositions pruned by the floor
    pub pruned_mass: f64,
}

struct Prefix {
    map: MobiusMap,
    word: Option<Word>,
    chain: Vec<(usize, i64)>,
    chart: usize,
}

fn concat_word(a: &Option<Word>, b: Option<Word>) -> Option<Word> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.concat(&b)),
        _ => None,
    }
}

/// Charts from which `base` cannot be reached along family edges (source -> target).
fn unreturning(sys: &BranchSystem, base: usize) -> Option<usize> {
    let n = sys.domains.len();
    let mut back = vec![false; n];
    back[base] = true;
    loop {
        let mut changed = false;
        for f in &sys.families {
            if back[f.target()] && !back[f.source()] {
                back[f.source()] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // charts reachable from base
    let mut seen = vec![false; n];
    seen[base] = true;
    let mut stack = vec![base];
    while let Some(c) = stack.pop() {
        for f in sys.families.iter().filter(|f| f.source() == c) {
            if !seen[f.target()] {
                seen[f.target()] = true;
                stack.push(f.target());
            }
        }
    }
    (0..n).find(|&c| seen[c] && !back[c])
}

/// Composes branches along excursions base -> other charts -> base, up to `cap` factors.
///
/// Families starting and ending at `base` pass through unchanged; a ray in the final position
/// stays a ray with its prefix folded into P; earlier rays are expanded member by member while
/// the composed sup derivative stays above `floor`.
pub fn induce_first_return(sys: &BranchSystem, base: usize, cap: usize, floor: f64, delta: f64) -> Result<Induced> {
    if base >= sys.domains.len() {
        return Err(Error::Invalid(format!("no chart {base}")));
    }
    if cap == 0 {
        return Err(Error::Invalid("excursion cap must be positive".into()));
    }
    if !sys.families.iter().any(|f| f.source() == base && f.target() == base) && sys.domains.len() == 1 {
        return Err(Error::Irreducible(base));
    }
    if let Some(c) = unreturning(sys, base) {
        return Err(Error::Irreducible(c));
    }
    let dim = sys.dim;
    let mut out = vec![];
    let mut chains = vec![];
    let mut unreturned = vec![0.0; cap];
    let mut pruned = 0.0;
    let mut frontier = vec![Prefix { map: MobiusMap::identity(dim), word: Some(Word::identity()), chain: vec![], chart: base }];
    for depth in 1..=cap {
        let mut next = vec![];
        for pre in &frontier {
            for (fi, f) in sys.families.iter().enumerate() {
                if f.source() != pre.chart {
                    continue;
                }
                let tgt = f.target();
                let tdom = &sys.domains[tgt];
                match f {
                    BranchFamily::Ray { name, words, p, step, q, n0, .. } if tgt == base => {
                        if pre.chain.is_empty() {
                            out.push(f.clone());
                        } else {
                            let rw = words.as_ref().and_then(|w| {
                                pre.word.as_ref().map(|pw| RayWords {
                                    prefix: pw.concat(&w.prefix),
                                    step: w.step.clone(),
                                    suffix: w.suffix.clone(),
                                })
                            });
                            out.push(BranchFamily::Ray {
                                name: format!("{}|{name}", chain_name(sys, &pre.chain)),
                                words: rw,
                                p: pre.map.compose_unchecked(p),
                                step: *step,
                                q: *q,
                                n0: *n0,
                                source: base,
                                target: base,
                            });
                        }
                        let mut ch = pre.chain.clone();
                        ch.push((fi, *n0));
                        chains.push(ch);
                    }
                    BranchFamily::Single { map, word, .. } => {
                        let m = pre.map.compose_unchecked(map);
                        let sup = sup_deriv(&m, tdom);
                        let mut ch = pre.chain.clone();
                        ch.push((fi, 0));
                        let w = concat_word(&pre.word, word.clone());
                        if sup < floor {
                            pruned += sup.powf(delta);
                        } else if tgt == base {
                            out.push(BranchFamily::Single {
                                name: chain_name(sys, &ch),
                                word: w,
                                map: m,
                                source: base,
                                target: base,
                            });
                            chains.push(ch);
                        } else {
                            unreturned[depth - 1] += sup.powf(delta);
                            next.push(Prefix { map: m, word: w, chain: ch, chart: tgt });
                        }
                    }
                    BranchFamily::Ray { n0, .. } => {
                        // middle position: explicit members until the composed sup decays
                        let mut n = *n0;
                        let mut prev = f64::INFINITY;
                        loop {
                            let m = pre.map.compose_unchecked(&f.member(n));
                            let sup = sup_deriv(&m, tdom);
                            if sup < floor && sup <= prev && n > n0 + 1 {
                                let pre_sup = sup_deriv(&pre.map, &sys.domains[pre.chart]);
                                let rest = sys.tail_sup_sum(&RayTail { family: fi, n_start: n }, delta);
                                pruned += pre_sup.powf(delta) * rest;
                                break;
                            }
                            if sup >= floor {
                                let mut ch = pre.chain.clone();
                                ch.push((fi, n));
                                unreturned[depth - 1] += sup.powf(delta);
                                next.push(Prefix {
                                    map: m,
                                    word: concat_word(&pre.word, f.member_word(n)),
                                    chain: ch,
                                    chart: tgt,
                                });
                            } else {
                                pruned += sup.powf(delta);
                            }
                            prev = sup;
                            n += 1;
                            if n - n0 > 1_000_000 {
                                return Err(Error::Invalid(format!("ray {} does not decay", f.name())));
                            }
                        }
                    }
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    let truncated = sys.truncated_mass + pruned + unreturned.last().copied().unwrap_or(0.0);
    let system = BranchSystem {
        dim,
        domains: sys.domains.clone(),
        families: out,
        truncated_mass: truncated,
    };
    system.validate()?;
    Ok(Induced { system, chains, unreturned, pruned_mass: pruned })
}

fn chain_name(sys: &BranchSystem, chain: &[(usize, i64)]) -> String {
    chain
        .iter()
        .map(|(fi, n)| sys.families[*fi].member_name(*n))
        .collect::<Vec<_>>()
        .join("|")
}
