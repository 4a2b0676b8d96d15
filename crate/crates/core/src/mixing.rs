//! Global-local and global-global mixing functionals and their diagnostics.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::chain::{graph::preimage_bracket, transition_matrix_of, BandedKernel, StateVector};
use crate::error::{Error, Result};
use crate::maps::{InversePiece, MapKind, MarkovMap};
use crate::observables::{window_average, Family, Observable};
use crate::quad::Gauss;
use crate::transfer::{correlate, Density};

/// Largest number of map evaluations a single window value may cost.
pub const EVALUATION_BUDGET: u128 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Glm1,
    Glm2,
    Ggm1,
    Ggm2,
}

impl Functional {
    pub fn id(&self) -> &'static str {
        match self {
            Functional::Glm1 => "GLM1",
            Functional::Glm2 => "GLM2",
            Functional::Ggm1 => "GGM1",
            Functional::Ggm2 => "GGM2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Decays,
    NoDecay,
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingPoint {
    /// `Leb(V)`, or 0 for global-local correlations.
    pub size: f64,
    /// Left end of `V`.
    pub start: f64,
    pub n: usize,
    pub value: Complex64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub functional: Functional,
    pub target: Complex64,
    pub points: Vec<MixingPoint>,
    pub verdict: Verdict,
    /// Smallest residual met.
    pub infimum: f64,
    /// First `n` from which every residual stays below the threshold.
    pub first_below: Option<usize>,
    /// `(n, sup over windows)`.
    pub profile_n: Vec<(usize, f64)>,
    /// `(Leb(V), sup over n)`.
    pub profile_size: Vec<(f64, f64)>,
    /// `(M, sup over Leb(V) ≥ M-th size and n ≥ M-th time)`.
    pub joint_sup: Vec<(f64, f64)>,
}

impl MixingReport {
    /// Whether the last profile value is at most `ratio` times the first.
    pub fn decays_along(profile: &[f64], ratio: f64) -> bool {
        match (profile.first(), profile.last()) {
            (Some(a), Some(b)) => *b <= ratio * a,
            _ => false,
        }
    }

    pub fn decays_in_n(&self, ratio: f64) -> bool {
        Self::decays_along(&self.profile_n.iter().map(|p| p.1).collect::<Vec<_>>(), ratio)
    }

    pub fn decays_in_size(&self, ratio: f64) -> bool {
        Self::decays_along(&self.profile_size.iter().map(|p| p.1).collect::<Vec<_>>(), ratio)
    }
}

/// Limit against which global-local correlations are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmTarget {
    Zero,
    /// `ave(F)·Leb(g)` with the average taken over the given family.
    AveTimesMass(Family),
}

/// Correlations `c_n = Leb((F∘Tⁿ) g)` against their expected limit.
///
/// The verdict is [`Verdict::Decays`] when the residual stays at or below `threshold` from
/// some `n ≤ n_max` on.
pub fn glm_report(
    map: &MarkovMap,
    f: &Observable,
    g: &Density,
    n_max: usize,
    target: GlmTarget,
    threshold: f64,
) -> Result<MixingReport> {
    let (functional, target) = match target {
        GlmTarget::Zero => (Functional::Glm1, Complex64::new(0.0, 0.0)),
        GlmTarget::AveTimesMass(family) => (Functional::Glm2, f.ave(family)? * g.integral()),
    };
    let c = correlate(map, f, g, n_max)?;
    let points: Vec<MixingPoint> = c
        .iter()
        .enumerate()
        .map(|(n, v)| MixingPoint { size: 0.0, start: 0.0, n, value: *v, residual: (v - target).norm() })
        .collect();
    let infimum = points.iter().map(|p| p.residual).fold(f64::INFINITY, f64::min);
    let first_below = points
        .iter()
        .rposition(|p| p.residual > threshold)
        .map_or(Some(0), |i| (i + 1 < points.len()).then_some(i + 1));
    let verdict = if first_below.is_some() { Verdict::Decays } else { Verdict::NoDecay };
    let profile_n = points.iter().map(|p| (p.n, p.residual)).collect();
    Ok(MixingReport {
        functional,
        target,
        points,
        verdict,
        infimum,
        first_below,
        profile_n,
        profile_size: Vec::new(),
        joint_sup: Vec::new(),
    })
}

/// Quadrature for `∫_V (F∘Tⁿ) G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GgmQuadrature {
    /// Midpoint rule with forward iteration of every node.
    Midpoint { nodes_per_cell: usize },
    /// Exact change of variables on every `n`-cylinder: `∫_{I_{j_n}} F(y) G(Φ(y)) |Φ'(y)| dy`
    /// with `Φ` the composed inverse pieces, integrated by Gauss–Legendre.
    Cylinder { gauss_order: usize },
}

impl Default for GgmQuadrature {
    fn default() -> Self {
        GgmQuadrature::Midpoint { nodes_per_cell: 64 }
    }
}

fn cylinder_count(map: &MarkovMap, n: usize) -> u128 {
    (map.params().j_hat.max(1) as u128).saturating_pow(n as u32)
}

fn check_budget(map: &MarkovMap, cells: u128, n: usize, quad: GgmQuadrature) -> Result<()> {
    let needed = match quad {
        GgmQuadrature::Midpoint { nodes_per_cell } => cells * nodes_per_cell as u128 * n.max(1) as u128,
        GgmQuadrature::Cylinder { gauss_order } => cells
            .saturating_mul(cylinder_count(map, n))
            .saturating_mul(gauss_order as u128 * n.max(1) as u128),
    };
    if needed > EVALUATION_BUDGET {
        return Err(Error::Budget { needed, budget: EVALUATION_BUDGET });
    }
    Ok(())
}

/// `x = Φ(y)` and `|Φ'(y)|` for the composed inverse pieces of a cylinder.
fn pull_back_chain(map: &MarkovMap, chain: &[InversePiece], y: f64) -> (f64, f64) {
    let part = map.partition();
    let mut x = y;
    let mut d = 1.0;
    for p in chain.iter().rev() {
        let (a, len) = (part.left(p.cell), part.len(p.cell));
        let t = (x - a) / len;
        d *= p.slope_t(t) / len;
        x = p.value(t);
    }
    (x, d.abs())
}

fn cylinder_sum(
    map: &MarkovMap,
    f: &Observable,
    g: &Observable,
    cell: i64,
    depth: usize,
    chain: &mut Vec<InversePiece>,
    gauss: &Gauss,
) -> Complex64 {
    if depth == 0 {
        let part = map.partition();
        return gauss.integrate(part.left(cell), part.right(cell), |y| {
            let (x, d) = pull_back_chain(map, chain, y);
            f.eval(y) * g.eval(x) * d
        });
    }
    let mut s = Complex64::new(0.0, 0.0);
    for b in map.branches_of(cell) {
        for p in b.pieces {
            let next = p.cell;
            chain.push(p);
            s += cylinder_sum(map, f, g, next, depth - 1, chain, gauss);
            chain.pop();
        }
    }
    s
}

/// `∫_{I_j} (F∘Tⁿ) G`.
pub fn ggm_cell_integral(
    map: &MarkovMap,
    f: &Observable,
    g: &Observable,
    j: i64,
    n: usize,
    quad: GgmQuadrature,
) -> Complex64 {
    let part = map.partition();
    match quad {
        GgmQuadrature::Midpoint { nodes_per_cell } => {
            let (a, len) = (part.left(j), part.len(j));
            let h = len / nodes_per_cell as f64;
            (0..nodes_per_cell)
                .map(|i| {
                    let x = a + (i as f64 + 0.5) * h;
                    f.eval(map.iterate(x, n)) * g.eval(x) * h
                })
                .sum()
        }
        GgmQuadrature::Cylinder { gauss_order } => {
            let gauss = Gauss::new(gauss_order);
            let mut chain = Vec::with_capacity(n);
            cylinder_sum(map, f, g, j, n, &mut chain, &gauss)
        }
    }
}

/// `Leb_V((F∘Tⁿ) G)` for the cell-aligned window `V = I_lo ∪ … ∪ I_hi`.
pub fn ggm_window_value(
    map: &MarkovMap,
    f: &Observable,
    g: &Observable,
    window: (i64, i64),
    n: usize,
    quad: GgmQuadrature,
) -> Result<Complex64> {
    let (lo, hi) = window;
    if hi < lo {
        return Err(Error::EmptyWindow { lo: lo as f64, hi: hi as f64 });
    }
    check_budget(map, (hi - lo + 1) as u128, n, quad)?;
    let parts: Vec<Complex64> =
        (lo..=hi).into_par_iter().map(|j| ggm_cell_integral(map, f, g, j, n, quad)).collect();
    let part = map.partition();
    let leb = part.right(hi) - part.left(lo);
    Ok(parts.into_iter().sum::<Complex64>() / leb)
}

/// Window placement used by [`ggm_joint_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// `V = I_{−⌊M/2⌋} ∪ … ∪ I_{M−1−⌊M/2⌋}`.
    Centered,
    /// `V = I_s ∪ … ∪ I_{s+M−1}` for each listed start `s`.
    Starts(Vec<i64>),
}

/// `|Leb_V((F∘Tⁿ)G) − ave(F) ave(G)|` over window sizes (in cells) and times.
///
/// `ratio` is the decay threshold: the verdict is [`Verdict::Decays`] when the last joint
/// supremum is at most `ratio` times the first.
#[allow(clippy::too_many_arguments)]
pub fn ggm_joint_sweep(
    map: &MarkovMap,
    f: &Observable,
    g: &Observable,
    family: Family,
    sizes: &[usize],
    placement: &Placement,
    n_list: &[usize],
    quad: GgmQuadrature,
    ratio: f64,
) -> Result<MixingReport> {
    let target = f.ave(family)? * g.ave(family)?;
    let part = map.partition();
    let mut jobs = Vec::new();
    for &m in sizes {
        let starts = match placement {
            Placement::Centered => vec![-(m as i64 / 2)],
            Placement::Starts(s) => s.clone(),
        };
        for s in starts {
            for &n in n_list {
                jobs.push((m, s, n));
            }
        }
    }
    let mut points = Vec::with_capacity(jobs.len());
    for (m, s, n) in jobs {
        let w = (s, s + m as i64 - 1);
        let value = ggm_window_value(map, f, g, w, n, quad)?;
        points.push(MixingPoint {
            size: part.right(w.1) - part.left(w.0),
            start: part.left(w.0),
            n,
            value,
            residual: (value - target).norm(),
        });
    }
    let sup = |pred: &dyn Fn(&MixingPoint) -> bool| {
        points.iter().filter(|p| pred(p)).map(|p| p.residual).fold(0.0, f64::max)
    };
    let mut ns: Vec<usize> = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut lens: Vec<f64> = points.iter().map(|p| p.size).collect();
    lens.sort_by(f64::total_cmp);
    lens.dedup();
    let profile_n: Vec<(usize, f64)> = ns.iter().map(|&n| (n, sup(&|p| p.n == n))).collect();
    let profile_size: Vec<(f64, f64)> = lens.iter().map(|&l| (l, sup(&|p| p.size == l))).collect();
    let joint_sup: Vec<(f64, f64)> = lens
        .iter()
        .zip(&ns)
        .map(|(&l, &n)| (l, sup(&|p| p.size >= l && p.n >= n)))
        .collect();
    let infimum = points.iter().map(|p| p.residual).fold(f64::INFINITY, f64::min);
    let verdict = if MixingReport::decays_along(&joint_sup.iter().map(|p| p.1).collect::<Vec<_>>(), ratio) {
        Verdict::Decays
    } else {
        Verdict::NoDecay
    };
    Ok(MixingReport {
        functional: Functional::Ggm2,
        target,
        points,
        verdict,
        infimum,
        first_below: None,
        profile_n,
        profile_size,
        joint_sup,
    })
}

/// `Σ_{j=k}^{ℓ} e^{ia(β+γ)j} / (ℓ−k+1)`.
pub fn quasiperiodic_prefactor(phase: f64, k: i64, l: i64) -> Complex64 {
    let s: Complex64 = (k..=l).map(|j| Complex64::from_polar(1.0, phase * j as f64)).sum();
    s / (l - k + 1) as f64
}

/// Both sides of the factorization of `Leb_V((F∘Tⁿ)G)` for `a`-quasiperiodic `F`, `G` on a
/// quasi-lift and `V = I_k ∪ … ∪ I_ℓ` (one cell per period).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factorization {
    pub window_value: Complex64,
    pub prefactor: Complex64,
    /// `Leb((F∘Tⁿ) g)` with `g = a⁻¹ G 1_{[0,a]}`.
    pub local: Complex64,
    pub residual: f64,
}

pub fn factorization_check(
    map: &MarkovMap,
    f: &Observable,
    g: &Observable,
    window: (i64, i64),
    n: usize,
    quad: GgmQuadrature,
) -> Result<Factorization> {
    let phase = match (f, g) {
        (
            Observable::Quasiperiodic { beta, period: pf, .. },
            Observable::Quasiperiodic { beta: gamma, period: pg, .. },
        ) if (pf - pg).abs() < 1e-15 && (pf - map.period()).abs() < 1e-15 => pf * (beta + gamma),
        _ => {
            return Err(Error::Invalid(
                "factorization needs quasiperiodic observables with the map's period".into(),
            ))
        }
    };
    if map.kind() != &MapKind::QuasiLift || map.partition().cells_per_period() != 1 {
        return Err(Error::Variant("factorization needs a quasi-lift with one cell per period".into()));
    }
    let window_value = ggm_window_value(map, f, g, window, n, quad)?;
    let local = ggm_window_value(map, f, g, (0, 0), n, quad)?;
    let prefactor = quasiperiodic_prefactor(phase, window.0, window.1);
    Ok(Factorization {
        window_value,
        prefactor,
        local,
        residual: (window_value - prefactor * local).norm(),
    })
}

/// Preimage of a window and the resulting bound on `|ave(F∘Tⁿ) − ave(F)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariancePoint {
    pub window: (i64, i64),
    pub n: usize,
    /// Cells contained in `T⁻ⁿV`.
    pub inner: BTreeSet<i64>,
    /// Cells meeting `T⁻ⁿV`.
    pub outer: BTreeSet<i64>,
    /// `I_{k+nK} ∪ … ∪ I_{ℓ−nK} ⊂ T⁻ⁿV ⊂ I_{k−nK} ∪ … ∪ I_{ℓ+nK}` with `K` the largest jump.
    pub sandwich_holds: bool,
    /// `Leb(T⁻ⁿV △ V)`: exact for random-walk maps, an upper bound from the cell bracket otherwise.
    pub symmetric_difference: f64,
    pub symmetric_difference_exact: bool,
    /// `(4n(Ĵ−1) + 2) c₂`.
    pub bound: f64,
    /// `(4nK + 2) c₂`.
    pub jump_bound: f64,
    /// `|Leb_V(F∘Tⁿ) − Leb_V(F)|`, when an observable was given.
    pub average_shift: Option<f64>,
    /// `‖F‖∞ Leb(T⁻ⁿV △ V) / Leb(V)`.
    pub margin: f64,
}

impl InvariancePoint {
    pub fn holds(&self, quad_tol: f64) -> bool {
        self.sandwich_holds
            && self.symmetric_difference <= self.bound + 1e-12
            && self.average_shift.is_none_or(|s| s <= self.margin + quad_tol)
    }
}

/// `P(X_n ∈ V | X_0 = j)` for `j` in the `n`-step hull of `V`, by backward iteration.
fn hitting_probabilities(kernel: &BandedKernel, lo: i64, hi: i64, n: usize) -> (i64, Vec<f64>) {
    let w = kernel.band() as i64;
    let (a, b) = (lo - n as i64 * w, hi + n as i64 * w);
    let mut u: Vec<f64> = (a..=b).map(|j| (lo <= j && j <= hi) as u8 as f64).collect();
    for _ in 0..n {
        u = (a..=b)
            .map(|j| {
                kernel
                    .successors(j)
                    .filter(|k| *k >= a && *k <= b)
                    .map(|k| kernel.p(j, k) * u[(k - a) as usize])
                    .sum()
            })
            .collect();
    }
    (a, u)
}

/// Checks the preimage sandwich, the symmetric-difference bound and the invariance of window
/// averages under `Tⁿ` for each window and time.
pub fn ave_invariance_check(
    map: &MarkovMap,
    f: Option<&Observable>,
    windows: &[(i64, i64)],
    n_list: &[usize],
    quad: GgmQuadrature,
) -> Result<Vec<InvariancePoint>> {
    let part = map.partition();
    let kernel = match map.kind() {
        MapKind::RandomWalk { kernel } => kernel.clone(),
        _ => {
            let (elo, ehi) = map.exceptional_range();
            let win = if elo > ehi { (0, 0) } else { (elo, ehi) };
            transition_matrix_of(map, win)?
        }
    };
    let exact = matches!(map.kind(), MapKind::RandomWalk { .. });
    let params = map.params();
    let k = params.jump;
    let one = Observable::constant(1.0);
    let mut out = Vec::new();
    for &(lo, hi) in windows {
        let leb = part.right(hi) - part.left(lo);
        for &n in n_list {
            let (inner, outer) = preimage_bracket(&kernel, lo, hi, n);
            let nk = n as i64 * k;
            let sandwich_holds = (lo + nk..=hi - nk).all(|j| inner.contains(&j))
                && outer.iter().all(|&j| j >= lo - nk && j <= hi + nk);
            let symmetric_difference = if exact {
                let (a, u) = hitting_probabilities(&kernel, lo, hi, n);
                u.iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let j = a + i as i64;
                        let inside = lo <= j && j <= hi;
                        part.len(j) * if inside { 1.0 - p } else { *p }
                    })
                    .sum()
            } else {
                let span = lo.min(*outer.first().unwrap_or(&lo))..=hi.max(*outer.last().unwrap_or(&hi));
                span.filter(|j| {
                    let in_v = lo <= *j && *j <= hi;
                    !((in_v && inner.contains(j)) || (!in_v && !outer.contains(j)))
                })
                .map(|j| part.len(j))
                .sum()
            };
            let c2 = params.c2;
            let bound = (4.0 * n as f64 * (params.j_hat - 1) as f64 + 2.0) * c2;
            let jump_bound = (4.0 * n as f64 * k as f64 + 2.0) * c2;
            let (average_shift, sup) = match f {
                Some(f) => {
                    let moved = ggm_window_value(map, f, &one, (lo, hi), n, quad)?;
                    let direct = window_average(f, part.left(lo), part.right(hi))?;
                    (Some((moved - direct).norm()), f.sup_norm())
                }
                None => (None, 0.0),
            };
            out.push(InvariancePoint {
                window: (lo, hi),
                n,
                inner,
                outer,
                sandwich_holds,
                symmetric_difference,
                symmetric_difference_exact: exact,
                bound,
                jump_bound,
                average_shift,
                margin: sup * symmetric_difference / leb,
            });
        }
    }
    Ok(out)
}

/// Horizontal-slice decomposition of `Σ_j f_j π_j` for a symmetric decreasing `π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicingReport {
    pub ell: usize,
    /// `Σ_j f_j π_j` with `f_j = ∫_{I_j} (F − ave′(F))`.
    pub direct: Complex64,
    /// `Σ_{k<ℓ} (π_k − π_{k+1}) Σ_{|j|≤k} f_j`.
    pub s_ell: Complex64,
    /// The remaining slices `k ≥ ℓ`.
    pub s_tail: Complex64,
    /// `|S_ℓ + S′_ℓ − direct|`.
    pub decomposition_error: f64,
    /// `‖F − ave′(F)‖∞ Σ_{|j|<ℓ} π_j`, with the sup norm bounded by `‖F‖∞ + |ave′(F)|`.
    pub s_ell_bound: f64,
    /// `sup_{k≥ℓ} |avg_{[−k,k]}| · Σ_{k≥ℓ} (π_k − π_{k+1})(2k+1)`.
    pub s_tail_bound: f64,
    pub bounds_hold: bool,
}

/// Decomposes the correlation of a global observable with `g_π` into slices, on unit cells.
pub fn slicing_decomposition(pi: &StateVector, f: &Observable, ell: usize) -> Result<SlicingReport> {
    if !pi.is_symmetric_decreasing() {
        return Err(Error::State("slicing needs a symmetric decreasing vector".into()));
    }
    let centre = f.ave(Family::CenteredWindows)?;
    let (a, b) = pi.window();
    let r = a.abs().max(b.abs());
    let fj = |j: i64| f.integrate(j as f64, (j + 1) as f64) - centre;
    let direct: Complex64 = (-r..=r).map(|j| fj(j) * pi.get(j)).sum();
    let mut partial = fj(0);
    let mut s_ell = Complex64::new(0.0, 0.0);
    let mut s_tail = Complex64::new(0.0, 0.0);
    let mut tail_mass = 0.0;
    let mut tail_avg = 0.0_f64;
    for k in 0..=r {
        if k > 0 {
            partial += fj(k) + fj(-k);
        }
        let slice = pi.get(k) - pi.get(k + 1);
        if (k as usize) < ell {
            s_ell += partial * slice;
        } else {
            s_tail += partial * slice;
            tail_mass += slice * (2 * k + 1) as f64;
            tail_avg = tail_avg.max(partial.norm() / (2 * k + 1) as f64);
        }
    }
    let s_ell_bound = (f.sup_norm() + centre.norm())
        * (-(ell as i64) + 1..ell as i64).map(|j| pi.get(j)).sum::<f64>();
    let s_tail_bound = tail_avg * tail_mass;
    let decomposition_error = (s_ell + s_tail - direct).norm();
    let slack = 1e-12;
    Ok(SlicingReport {
        ell,
        direct,
        s_ell,
        s_tail,
        decomposition_error,
        s_ell_bound,
        s_tail_bound,
        bounds_hold: s_ell.norm() <= s_ell_bound + slack && s_tail.norm() <= s_tail_bound + slack,
    })
}
