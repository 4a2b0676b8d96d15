//! Trajectories, symbolic itineraries, cylinder sets and Monte Carlo checks of the Markov
//! property.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{forward_image, transition_matrix_of, BandedKernel};
use crate::error::{Error, Result};
use crate::maps::{InversePiece, MapKind, MarkovMap};

/// Samples drawn from one random stream.
pub const SAMPLE_BLOCK: usize = 4096;

/// Cells `j_k` of `Tᵏ(x₀)` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Itinerary {
    pub x0: f64,
    pub cells: Vec<i64>,
}

pub fn itinerary(map: &MarkovMap, x0: f64, n: usize) -> Itinerary {
    let part = map.partition();
    let mut x = x0;
    let mut cells = Vec::with_capacity(n + 1);
    cells.push(part.cell_of(x));
    for _ in 0..n {
        x = map.evaluate(x);
        cells.push(part.cell_of(x));
    }
    Itinerary { x0, cells }
}

/// Points of `I_{j₀}` whose first iterates visit `I_{j₁}, …, I_{j_{n−1}}` in turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub word: Vec<i64>,
    pub left: f64,
    pub right: f64,
}

impl Cylinder {
    pub fn len(&self) -> f64 {
        self.right - self.left
    }

    pub fn is_empty(&self) -> bool {
        self.right <= self.left
    }

    pub fn contains(&self, x: f64) -> bool {
        self.left <= x && x <= self.right
    }
}

/// Inverse pieces along an admissible word, `(j_k → j_{k+1})` for each `k`.
fn word_pieces(map: &MarkovMap, word: &[i64]) -> Result<Vec<InversePiece>> {
    word.windows(2)
        .enumerate()
        .map(|(i, w)| {
            map.piece(w[0], w[1]).ok_or_else(|| Error::Inadmissible { word: word.to_vec(), position: i })
        })
        .collect()
}

/// Cylinder of `word`, obtained by pulling the last cell back through the inverse pieces.
pub fn cylinder(map: &MarkovMap, word: &[i64]) -> Result<Cylinder> {
    let last = *word.last().ok_or_else(|| Error::Invalid("empty word".into()))?;
    let part = map.partition();
    let pieces = word_pieces(map, word)?;
    let (mut lo, mut hi) = (part.left(last), part.right(last));
    for p in pieces.iter().rev() {
        let (a, len) = (part.left(p.cell), part.len(p.cell));
        let (u, v) = (p.value((lo - a) / len), p.value((hi - a) / len));
        (lo, hi) = (u.min(v), u.max(v));
    }
    Ok(Cylinder { word: word.to_vec(), left: lo, right: hi })
}

/// `Tᵏ` of a cylinder: the cylinder of the word with its first `k` letters removed, so that
/// `k = len − 1` gives the whole last cell.
pub fn image_of_cylinder(map: &MarkovMap, cyl: &Cylinder, k: usize) -> Result<(f64, f64)> {
    if k >= cyl.word.len() {
        return Err(Error::Invalid(format!("word of length {} has no {k}-th image", cyl.word.len())));
    }
    let c = cylinder(map, &cyl.word[k..])?;
    Ok((c.left, c.right))
}

/// `max |(Tⁿ)'| / min |(Tⁿ)'|` over `samples` points of the cylinder of `word`.
pub fn cylinder_distortion(map: &MarkovMap, word: &[i64], samples: usize) -> Result<f64> {
    let pieces = word_pieces(map, word)?;
    let part = map.partition();
    let last = *word.last().ok_or_else(|| Error::Invalid("empty word".into()))?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for y in part.interior_grid(last, samples) {
        let mut x = y;
        let mut d = 1.0;
        for p in pieces.iter().rev() {
            let (a, len) = (part.left(p.cell), part.len(p.cell));
            let t = (x - a) / len;
            d *= p.slope_t(t) / len;
            x = p.value(t);
        }
        lo = lo.min(d.abs());
        hi = hi.max(d.abs());
    }
    // (Tⁿ)' = 1/Φ', so the ratio is the same
    Ok(hi / lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    /// `(n, largest ratio over the words of length n + 1)`.
    pub per_n: Vec<(usize, f64)>,
    pub max_ratio: f64,
    /// `exp(η c₂ λ/(λ−1))`.
    pub bound: f64,
    pub words: usize,
}

/// Distortion ratios of all admissible words from `start` of lengths `2..=n_max + 1`, at most
/// `max_words` per length (depth-first order).
pub fn distortion_sweep(
    map: &MarkovMap,
    start: i64,
    n_max: usize,
    max_words: usize,
    samples: usize,
) -> Result<DistortionReport> {
    let bound = map.distortion_log_bound()?.exp();
    let mut per_n = Vec::new();
    let mut words = 0;
    for n in 1..=n_max {
        let mut list = Vec::new();
        let mut stack = vec![vec![start]];
        while let Some(w) = stack.pop() {
            if list.len() >= max_words {
                break;
            }
            if w.len() == n + 1 {
                list.push(w);
                continue;
            }
            let last = *w.last().unwrap();
            let mut next: Vec<i64> =
                map.branches_of(last).iter().flat_map(|b| b.pieces.iter().map(|p| p.cell)).collect();
            next.reverse();
            for k in next {
                let mut v = w.clone();
                v.push(k);
                stack.push(v);
            }
        }
        let ratios: Vec<f64> =
            list.par_iter().map(|w| cylinder_distortion(map, w, samples)).collect::<Result<_>>()?;
        words += ratios.len();
        per_n.push((n, ratios.iter().copied().fold(1.0, f64::max)));
    }
    let max_ratio = per_n.iter().map(|p| p.1).fold(1.0, f64::max);
    Ok(DistortionReport { per_n, max_ratio, bound, words })
}

/// Cells of `Tⁿ⁺¹A ∩ TⁿA` on the transition graph; on unit cells this is its measure.
pub fn image_overlap_measure(kernel: &BandedKernel, cells: &BTreeSet<i64>, n: usize) -> usize {
    let mut now = cells.clone();
    for _ in 0..n {
        now = forward_image(kernel, &now);
    }
    let next = forward_image(kernel, &now);
    now.intersection(&next).count()
}

fn kernel_of(map: &MarkovMap) -> Result<BandedKernel> {
    match map.kind() {
        MapKind::RandomWalk { kernel } => Ok(kernel.clone()),
        _ => {
            let (lo, hi) = map.exceptional_range();
            transition_matrix_of(map, if lo > hi { (0, 0) } else { (lo, hi) })
        }
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// Runs `per_sample` on `samples` uniform points of `I_{j₀}`, sharded into fixed blocks with
/// one random stream each.
fn sample_blocks<T: Send>(
    map: &MarkovMap,
    j0: i64,
    samples: usize,
    seed: u64,
    per_block: impl Fn(&mut dyn Iterator<Item = f64>) -> T + Sync,
) -> Vec<T> {
    let part = map.partition();
    let (a, len) = (part.left(j0), part.len(j0));
    let blocks = samples.div_ceil(SAMPLE_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = SAMPLE_BLOCK.min(samples - b * SAMPLE_BLOCK);
            let mut rng = block_rng(seed, b);
            let mut xs = (0..count).map(move |_| a + len * rng.random::<f64>());
            per_block(&mut xs)
        })
        .collect()
}

/// One tested transition `j → k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEntry {
    pub from: i64,
    pub to: i64,
    pub count: u64,
    pub row_count: u64,
    pub empirical: f64,
    pub expected: f64,
    /// `sqrt(p(1−p)/row_count)`.
    pub sigma: f64,
    pub deviation: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTestReport {
    pub seed: u64,
    pub samples: usize,
    pub horizon: usize,
    pub start: i64,
    pub min_count: u64,
    /// Entries of rows visited at least `min_count` times.
    pub entries: Vec<TransitionEntry>,
    /// Transitions observed from rows below `min_count`, not tested.
    pub untested_transitions: u64,
    pub max_deviation: f64,
    /// Largest `deviation / sigma` over entries with `sigma > 0`.
    pub max_z: f64,
    pub all_within: bool,
}

impl MarkovTestReport {
    /// Empirical table as CSV (header plus one line per entry).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("from,to,count,row_count,empirical,expected,sigma,deviation,within\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{:e},{:e},{:e},{:e},{}\n",
                e.from, e.to, e.count, e.row_count, e.empirical, e.expected, e.sigma, e.deviation, e.within
            ));
        }
        s
    }
}

/// Pooled empirical transition frequencies `j_k → j_{k+1}` of orbits started uniformly in
/// `I_{j₀}`, compared entrywise with the transition matrix at three binomial standard errors.
pub fn markov_property_test(
    map: &MarkovMap,
    j0: i64,
    samples: usize,
    horizon: usize,
    seed: u64,
    min_count: u64,
) -> Result<MarkovTestReport> {
    let kernel = kernel_of(map)?;
    let part = map.partition();
    let blocks = sample_blocks(map, j0, samples, seed, |xs| {
        let mut counts: BTreeMap<(i64, i64), u64> = BTreeMap::new();
        for x0 in xs {
            let mut x = x0;
            let mut j = part.cell_of(x);
            for _ in 0..horizon {
                x = map.evaluate(x);
                let k = part.cell_of(x);
                *counts.entry((j, k)).or_default() += 1;
                j = k;
            }
        }
        counts
    });
    let mut counts: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for b in blocks {
        for (key, c) in b {
            *counts.entry(key).or_default() += c;
        }
    }
    let mut rows: BTreeMap<i64, u64> = BTreeMap::new();
    for (&(j, _), &c) in &counts {
        *rows.entry(j).or_default() += c;
    }
    let mut entries = Vec::new();
    let mut untested = 0;
    for (&j, &total) in &rows {
        if total < min_count {
            untested += total;
            continue;
        }
        let mut targets: BTreeSet<i64> = kernel.successors(j).collect();
        targets.extend(counts.range((j, i64::MIN)..=(j, i64::MAX)).map(|(&(_, k), _)| k));
        for k in targets {
            let count = counts.get(&(j, k)).copied().unwrap_or(0);
            let empirical = count as f64 / total as f64;
            let expected = kernel.p(j, k);
            let sigma = (expected * (1.0 - expected) / total as f64).sqrt();
            let deviation = (empirical - expected).abs();
            let within = if sigma > 0.0 { deviation <= 3.0 * sigma } else { deviation == 0.0 };
            entries.push(TransitionEntry {
                from: j,
                to: k,
                count,
                row_count: total,
                empirical,
                expected,
                sigma,
                deviation,
                within,
            });
        }
    }
    let max_deviation = entries.iter().map(|e| e.deviation).fold(0.0, f64::max);
    let max_z = entries
        .iter()
        .filter(|e| e.sigma > 0.0)
        .map(|e| e.deviation / e.sigma)
        .fold(0.0, f64::max);
    let all_within = entries.iter().all(|e| e.within);
    Ok(MarkovTestReport {
        seed,
        samples,
        horizon,
        start: j0,
        min_count,
        entries,
        untested_transitions: untested,
        max_deviation,
        max_z,
        all_within,
    })
}

/// Finite-horizon classification of orbits: a proxy for the asymptotic sets `X±`.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeReport {
    pub seed: u64,
    pub samples: usize,
    pub horizon: usize,
    pub radius: f64,
    /// Visited `[−R, R]` during the second half of the horizon (or `n = 0`).
    pub returned: f64,
    /// Otherwise, ended above `R`.
    pub escaped_plus: f64,
    /// Otherwise, ended below `−R`.
    pub escaped_minus: f64,
}

pub fn escape_diagnostics(
    map: &MarkovMap,
    j0: i64,
    samples: usize,
    horizon: usize,
    radius: f64,
    seed: u64,
) -> Result<EscapeReport> {
    if samples == 0 {
        return Err(Error::Invalid("no samples".into()));
    }
    let tallies = sample_blocks(map, j0, samples, seed, |xs| {
        let mut t = [0u64; 3];
        for x0 in xs {
            let mut x = x0;
            let mut back = horizon == 0;
            for k in 1..=horizon {
                x = map.evaluate(x);
                if 2 * k >= horizon && x.abs() <= radius {
                    back = true;
                }
            }
            let slot = if back {
                0
            } else if x > 0.0 {
                1
            } else {
                2
            };
            t[slot] += 1;
        }
        t
    });
    let mut t = [0u64; 3];
    for b in tallies {
        for i in 0..3 {
            t[i] += b[i];
        }
    }
    let n = samples as f64;
    Ok(EscapeReport {
        seed,
        samples,
        horizon,
        radius,
        returned: t[0] as f64 / n,
        escaped_plus: t[1] as f64 / n,
        escaped_minus: t[2] as f64 / n,
    })
}
