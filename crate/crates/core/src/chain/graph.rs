//! Structural properties of the transition graph on ℤ (edges `j → k` with `p_{jk} > 0`).

use std::collections::{BTreeSet, VecDeque};

use num_integer::Integer;

use super::kernel::BandedKernel;

/// Finite directed graph on the cells `lo..=hi`.
struct WindowGraph {
    lo: i64,
    adj: Vec<Vec<usize>>,
}

impl WindowGraph {
    fn new(lo: i64, hi: i64) -> Self {
        Self { lo, adj: vec![Vec::new(); (hi - lo + 1) as usize] }
    }

    fn idx(&self, j: i64) -> usize {
        (j - self.lo) as usize
    }

    fn contains(&self, j: i64) -> bool {
        j >= self.lo && ((j - self.lo) as usize) < self.adj.len()
    }

    fn add(&mut self, j: i64, k: i64) {
        let (a, b) = (self.idx(j), self.idx(k));
        if !self.adj[a].contains(&b) {
            self.adj[a].push(b);
        }
    }

    fn reversed(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.adj.len()];
        for (u, out) in self.adj.iter().enumerate() {
            for &v in out {
                rev[v].push(u);
            }
        }
        rev
    }
}

fn reach(adj: &[Vec<usize>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Strongly connected components (Kosaraju), as lists of vertex indices.
fn components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        // iterative post-order
        let mut stack = vec![(s, 0usize)];
        seen[s] = true;
        while let Some((u, i)) = stack.pop() {
            if i < adj[u].len() {
                stack.push((u, i + 1));
                let v = adj[u][i];
                if !seen[v] {
                    seen[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
            }
        }
    }
    let mut rev = vec![Vec::new(); n];
    for (u, out) in adj.iter().enumerate() {
        for &v in out {
            rev[v].push(u);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut i = 0;
        while i < members.len() {
            let u = members[i];
            i += 1;
            for &v in &rev[u] {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    members.push(v);
                }
            }
        }
        out.push(members);
    }
    out
}

/// Greatest common divisor of cycle lengths inside one component, or `None` if it has no cycle.
fn component_period(adj: &[Vec<usize>], members: &[usize]) -> Option<u64> {
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    let mut level = std::collections::BTreeMap::new();
    level.insert(members[0], 0i64);
    let mut queue = VecDeque::from([members[0]]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if inside.contains(&v) && !level.contains_key(&v) {
                level.insert(v, level[&u] + 1);
                queue.push_back(v);
            }
        }
    }
    let mut g = 0u64;
    let mut has_edge = false;
    for &u in members {
        for &v in &adj[u] {
            if inside.contains(&v) {
                has_edge = true;
                g = g.gcd(&(level[&u] + 1 - level[&v]).unsigned_abs());
            }
        }
    }
    has_edge.then_some(g)
}

/// Whether the walk on ℤ can reach every cell from every cell.
///
/// The bulk must step in both directions. Beyond the exceptional rows the bulk connects all
/// cells of a residue class modulo the gcd `g` of its steps, so cells far out on one side are
/// represented by one deep cell per residue, and the finite graph is tested for strong
/// connectivity.
pub fn is_irreducible(kernel: &BandedKernel) -> bool {
    let steps = kernel.bulk_steps();
    if !(steps.iter().any(|&d| d < 0) && steps.iter().any(|&d| d > 0)) {
        return false;
    }
    let g = steps.iter().fold(0i64, |acc, d| acc.gcd(d));
    let w = kernel.band() as i64;
    let (elo, ehi) = kernel.exceptional_range();
    let margin = 3 * w + g;
    let (lo, hi) = (elo - margin, ehi + margin);
    let mut graph = WindowGraph::new(lo, hi);
    // deep cells: every cell within the band of them has a bulk row
    let right_deep = |k: i64| -> i64 {
        let first = ehi + 2 * w + 1;
        first + (k - first).rem_euclid(g)
    };
    let left_deep = |k: i64| -> i64 {
        let last = elo - 2 * w - 1;
        last - (last - k).rem_euclid(g)
    };
    for j in lo..=hi {
        for k in kernel.successors(j) {
            let k = if k > hi {
                right_deep(k)
            } else if k < lo {
                left_deep(k)
            } else {
                k
            };
            graph.add(j, k);
        }
    }
    for j in ehi + 2 * w + 1..=hi {
        for k in [j - g, j + g] {
            if k > ehi + 2 * w && graph.contains(k) {
                graph.add(j, k);
            }
        }
    }
    for j in lo..elo - 2 * w {
        for k in [j - g, j + g] {
            if k < elo - 2 * w && graph.contains(k) {
                graph.add(j, k);
            }
        }
    }
    let root = graph.idx(elo);
    reach(&graph.adj, root).iter().all(|&b| b) && reach(&graph.reversed(), root).iter().all(|&b| b)
}

/// Periods of the communicating classes met near the exceptional rows.
///
/// Computed by cycle-length gcd on a window wide enough to hold every bulk cycle; classes cut
/// by the window edge are ignored.
pub fn class_periods(kernel: &BandedKernel) -> Vec<u64> {
    let w = kernel.band() as i64;
    let (elo, ehi) = kernel.exceptional_range();
    let margin = 6 * w + 4;
    let (lo, hi) = (elo - margin, ehi + margin);
    let mut graph = WindowGraph::new(lo, hi);
    for j in lo..=hi {
        for k in kernel.successors(j) {
            if graph.contains(k) {
                graph.add(j, k);
            }
        }
    }
    let (ilo, ihi) = (graph.idx(elo - margin + 2 * w + 1), graph.idx(ehi + margin - 2 * w - 1));
    components(&graph.adj)
        .iter()
        .filter(|c| c.iter().any(|&u| u >= ilo && u <= ihi))
        .filter_map(|c| component_period(&graph.adj, c))
        .collect()
}

/// Every class met near the exceptional rows has period 1.
pub fn is_aperiodic(kernel: &BandedKernel) -> bool {
    class_periods(kernel).iter().all(|&p| p == 1)
}

/// Cells reachable in one step from `cells`.
pub fn forward_image(kernel: &BandedKernel, cells: &BTreeSet<i64>) -> BTreeSet<i64> {
    cells.iter().flat_map(|&j| kernel.successors(j)).collect()
}

/// Cells reachable in exactly `n` steps from `cells`.
pub fn forward_image_n(kernel: &BandedKernel, cells: &BTreeSet<i64>, n: usize) -> BTreeSet<i64> {
    (0..n).fold(cells.clone(), |acc, _| forward_image(kernel, &acc))
}

/// Cells `j` some of whose `n`-step successors lie in `lo..=hi` (outer), and all of whose do
/// (inner). Together they bracket `T⁻ⁿ V` for `V = I_lo ∪ … ∪ I_hi`.
pub fn preimage_bracket(
    kernel: &BandedKernel,
    lo: i64,
    hi: i64,
    n: usize,
) -> (BTreeSet<i64>, BTreeSet<i64>) {
    let w = kernel.band() as i64;
    let mut outer: BTreeSet<i64> = (lo..=hi).collect();
    let mut inner = outer.clone();
    for m in 1..=n as i64 {
        let range = lo - m * w..=hi + m * w;
        outer = range
            .clone()
            .filter(|&j| kernel.successors(j).any(|k| outer.contains(&k)))
            .collect();
        inner = range.filter(|&j| kernel.successors(j).all(|k| inner.contains(&k))).collect();
    }
    (inner, outer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Prob;
    use std::collections::BTreeMap;

    #[test]
    fn known_kernels() {
        let defect = BandedKernel::five_point_defect();
        assert!(is_irreducible(&defect));
        assert!(is_aperiodic(&defect));
        let ssrw = BandedKernel::simple_symmetric();
        assert!(is_irreducible(&ssrw));
        assert!(!is_aperiodic(&ssrw));
        assert_eq!(class_periods(&ssrw), vec![2]);
        let lazy = BandedKernel::homogeneous(1, vec![Prob::ratio(1, 3); 3]).unwrap();
        assert!(is_irreducible(&lazy) && is_aperiodic(&lazy));
    }

    #[test]
    fn absorbing_cell_is_reducible() {
        let half = Prob::ratio(1, 2);
        let k = BandedKernel::new(
            1,
            vec![half, Prob::zero(), half],
            BTreeMap::from([(0, vec![Prob::zero(), Prob::ratio(1, 1), Prob::zero()])]),
        )
        .unwrap();
        assert!(!is_irreducible(&k));
    }

    #[test]
    fn one_sided_bulk_is_reducible() {
        let k = BandedKernel::homogeneous(1, vec![Prob::zero(), Prob::ratio(1, 2), Prob::ratio(1, 2)])
            .unwrap();
        assert!(!is_irreducible(&k));
        assert!(is_aperiodic(&k));
    }

    #[test]
    fn defect_bridges_parity_classes() {
        // steps ±2 split ℤ into two classes unless a row crosses parity
        let q = Prob::ratio(1, 2);
        let z = Prob::zero();
        let bulk = vec![q, z, z, z, q];
        let split = BandedKernel::homogeneous(2, bulk.clone()).unwrap();
        assert!(!is_irreducible(&split));
        let bridged = BandedKernel::new(
            2,
            bulk,
            BTreeMap::from([
                (0, vec![Prob::ratio(1, 4), Prob::ratio(1, 4), z, Prob::ratio(1, 4), Prob::ratio(1, 4)]),
                (1, vec![Prob::ratio(1, 4), Prob::ratio(1, 4), z, z, q]),
            ]),
        )
        .unwrap();
        assert!(is_irreducible(&bridged));
    }

    #[test]
    fn bracket_of_window() {
        let k = BandedKernel::five_point_defect();
        let (inner, outer) = preimage_bracket(&k, 0, 99, 5);
        assert!((10..=89).all(|j| inner.contains(&j)));
        assert!(outer.iter().all(|&j| (-10..=109).contains(&j)));
    }
}
