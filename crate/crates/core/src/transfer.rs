//! Perron–Frobenius evolution of densities and the pairing `∫ F·Pⁿg`.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::chain::{StateVector, Weights};
use crate::error::{Error, Result};
use crate::maps::{MapKind, MarkovMap, Partition};
use crate::observables::Observable;
use crate::quad::{simpson_weight, Gauss};

/// Density `Σ_i c_i g_{π_i}` with `g_π = Σ_j π_j 1_{I_j}`.
///
/// A single component with coefficient 1 is an ordinary probability density; signed
/// combinations give the zero-mass densities used for global-local mixing with `Leb(g) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellwiseDensity {
    components: Vec<(f64, StateVector)>,
}

/// `g_π`.
pub fn make_g_pi(pi: StateVector) -> CellwiseDensity {
    CellwiseDensity { components: vec![(1.0, pi)] }
}

fn ratio_to_f64(n: &BigUint, d: &BigUint) -> f64 {
    let shift = d.bits().saturating_sub(1000);
    let (n, d) = (n >> shift, d >> shift);
    n.to_f64().unwrap_or(f64::INFINITY) / d.to_f64().unwrap_or(f64::INFINITY)
}

/// `Σ_j π_j f_j`. For exact vectors the weights sharing one value of `f_j` are summed exactly
/// before conversion, so indicator pairings are exact up to a single rounding.
fn pair_state(pi: &StateVector, f: &dyn Fn(i64) -> Complex64) -> Complex64 {
    let (a, _) = pi.window();
    match pi.weights() {
        Weights::Exact { numer, denom } => {
            let mut groups: BTreeMap<(u64, u64), (Complex64, BigUint)> = BTreeMap::new();
            for (i, n) in numer.iter().enumerate() {
                if n.is_zero() {
                    continue;
                }
                let v = f(a + i as i64);
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let e = groups.entry((v.re.to_bits(), v.im.to_bits())).or_insert((v, BigUint::zero()));
                e.1 += n;
            }
            groups.values().map(|(v, n)| v * ratio_to_f64(n, denom)).sum()
        }
        Weights::Float(w) => w.iter().enumerate().map(|(i, p)| f(a + i as i64) * *p).sum(),
    }
}

impl CellwiseDensity {
    /// `Σ c_i g_{π_i}`.
    pub fn combination(components: Vec<(f64, StateVector)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::State("empty combination".into()));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, StateVector)] {
        &self.components
    }

    /// The underlying vector of a single-component density.
    pub fn state(&self) -> Option<&StateVector> {
        match self.components.as_slice() {
            [(c, pi)] if *c == 1.0 => Some(pi),
            _ => None,
        }
    }

    /// Density value on `I_j`.
    pub fn value(&self, j: i64) -> f64 {
        self.components.iter().map(|(c, pi)| c * pi.get(j)).sum()
    }

    /// Smallest cell range holding the support.
    pub fn window(&self) -> (i64, i64) {
        self.components.iter().fold((i64::MAX, i64::MIN), |(lo, hi), (_, pi)| {
            let (a, b) = pi.window();
            (lo.min(a), hi.max(b))
        })
    }

    /// `∫ g = Σ_j g_j |I_j|` on unit cells.
    pub fn integral(&self) -> f64 {
        self.components.iter().map(|(c, pi)| c * pi.mass()).sum()
    }

    /// `Σ_j g_j f_j`.
    pub fn pair(&self, f: &dyn Fn(i64) -> Complex64) -> Complex64 {
        self.components.iter().map(|(c, pi)| *c * pair_state(pi, f)).sum()
    }

    fn step(&self, kernel: &crate::chain::BandedKernel) -> Self {
        Self { components: self.components.iter().map(|(c, pi)| (*c, pi.step(kernel))).collect() }
    }
}

/// `P g_π = g_{πP}` on a random-walk map (exact for rational kernels).
pub fn pf_step_cellwise(g: &CellwiseDensity, map: &MarkovMap) -> Result<CellwiseDensity> {
    match map.kind() {
        MapKind::RandomWalk { kernel } => Ok(g.step(kernel)),
        other => Err(Error::Variant(format!(
            "cellwise evolution needs a random-walk map, got a {}",
            other.name()
        ))),
    }
}

/// Density sampled at `m + 1` equispaced nodes of every cell in `lo..=hi`, linearly
/// interpolated in between and zero outside. Neighbouring cells keep separate end nodes,
/// so jumps at breakpoints are represented exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    partition: Partition,
    lo: i64,
    hi: i64,
    m: usize,
    values: Vec<f64>,
}

impl GridDensity {
    /// Samples `f(j, x)` at the nodes `x` of each cell `j`.
    pub fn from_cell_fn(
        partition: &Partition,
        lo: i64,
        hi: i64,
        m: usize,
        f: impl Fn(i64, f64) -> f64,
    ) -> Result<Self> {
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::Invalid(format!("nodes per cell must be even and ≥ 2, got {m}")));
        }
        if hi < lo {
            return Err(Error::EmptyWindow { lo: lo as f64, hi: hi as f64 });
        }
        let mut values = Vec::with_capacity((hi - lo + 1) as usize * (m + 1));
        for j in lo..=hi {
            let (a, len) = (partition.left(j), partition.len(j));
            for i in 0..=m {
                values.push(f(j, a + len * i as f64 / m as f64));
            }
        }
        Ok(Self { partition: partition.clone(), lo, hi, m, values })
    }

    pub fn from_fn(
        partition: &Partition,
        lo: i64,
        hi: i64,
        m: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        Self::from_cell_fn(partition, lo, hi, m, |_, x| f(x))
    }

    /// Samples a cellwise density (constant on each cell).
    pub fn from_cellwise(g: &CellwiseDensity, partition: &Partition, m: usize) -> Result<Self> {
        let (lo, hi) = g.window();
        Self::from_cell_fn(partition, lo, hi, m, |j, _| g.value(j))
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.m
    }

    /// Node values of cell `j` (zeros outside the window).
    pub fn cell_values(&self, j: i64) -> &[f64] {
        if j < self.lo || j > self.hi {
            return &[];
        }
        let s = (j - self.lo) as usize * (self.m + 1);
        &self.values[s..s + self.m + 1]
    }

    /// Node positions of cell `j`.
    pub fn cell_nodes(&self, j: i64) -> impl Iterator<Item = f64> + '_ {
        let (a, len, m) = (self.partition.left(j), self.partition.len(j), self.m);
        (0..=m).map(move |i| a + len * i as f64 / m as f64)
    }

    /// Interpolated value of the restriction to cell `j`, with `x` clamped into the cell.
    pub fn value_in_cell(&self, j: i64, x: f64) -> f64 {
        let v = self.cell_values(j);
        if v.is_empty() {
            return 0.0;
        }
        let t = ((x - self.partition.left(j)) / self.partition.len(j)).clamp(0.0, 1.0) * self.m as f64;
        let i = (t.floor() as usize).min(self.m - 1);
        let s = t - i as f64;
        v[i] * (1.0 - s) + v[i + 1] * s
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.value_in_cell(self.partition.cell_of(x), x)
    }

    /// Composite Simpson integral.
    pub fn integral(&self) -> f64 {
        (self.lo..=self.hi)
            .map(|j| {
                let h = self.partition.len(j) / self.m as f64;
                self.cell_values(j)
                    .iter()
                    .enumerate()
                    .map(|(i, v)| simpson_weight(i, self.m, h) * v)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `∫ F g` by composite Simpson; `F` is sampled just inside each cell at the end nodes so
    /// that cellwise observables pair with the cell they belong to.
    pub fn pair(&self, f: &Observable) -> Complex64 {
        (self.lo..=self.hi)
            .map(|j| {
                let (a, len) = (self.partition.left(j), self.partition.len(j));
                let h = len / self.m as f64;
                let eps = 1e-12 * len;
                self.cell_values(j)
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let x = (a + h * i as f64).clamp(a + eps, a + len - eps);
                        f.eval(x) * (simpson_weight(i, self.m, h) * v)
                    })
                    .sum::<Complex64>()
            })
            .sum()
    }
}

/// `(Pg)(y) = Σ g(φ(y)) |φ'(y)|` at every node of the window grown by the map's jump.
/// Preimages are evaluated on their own home cell, so one-sided limits are used at breakpoints.
pub fn pf_step_grid(g: &GridDensity, map: &MarkovMap) -> Result<GridDensity> {
    if g.partition != *map.partition() {
        return Err(Error::Invalid("density grid and map use different partitions".into()));
    }
    let w = map.params().jump;
    let (lo, hi) = (g.lo - w, g.hi + w);
    let m = g.m;
    let part = map.partition();
    let cells: Vec<Vec<f64>> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let pieces: Vec<_> = map
                .pieces_onto(k)
                .into_iter()
                .filter(|(j, _)| *j >= g.lo && *j <= g.hi)
                .collect();
            let len = part.len(k);
            (0..=m)
                .map(|i| {
                    let t = i as f64 / m as f64;
                    pieces
                        .iter()
                        .map(|(j, p)| g.value_in_cell(*j, p.value(t)) * (p.slope_t(t) / len).abs())
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(GridDensity { partition: part.clone(), lo, hi, m, values: cells.concat() })
}

/// Compactly supported density in one of the two representations.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Cellwise(CellwiseDensity),
    Grid(GridDensity),
}

impl Density {
    pub fn integral(&self) -> f64 {
        match self {
            Density::Cellwise(g) => g.integral(),
            Density::Grid(g) => g.integral(),
        }
    }

    pub fn step(&self, map: &MarkovMap) -> Result<Density> {
        match self {
            Density::Cellwise(g) => pf_step_cellwise(g, map).map(Density::Cellwise),
            Density::Grid(g) => pf_step_grid(g, map).map(Density::Grid),
        }
    }

    /// `∫ F g`; exact cell sums `Σ g_j f_j` for cellwise densities.
    pub fn pair(&self, map: &MarkovMap, f: &Observable) -> Complex64 {
        match self {
            Density::Cellwise(g) => {
                let part = map.partition();
                g.pair(&|j| f.integrate(part.left(j), part.right(j)))
            }
            Density::Grid(g) => g.pair(f),
        }
    }
}

/// `c_n = ∫ F·Pⁿg` for `n = 0..=n_max`.
pub fn correlate(
    map: &MarkovMap,
    f: &Observable,
    g: &Density,
    n_max: usize,
) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut cur = g.clone();
    for n in 0..=n_max {
        out.push(cur.pair(map, f));
        if n < n_max {
            cur = cur.step(map)?;
        }
    }
    Ok(out)
}

/// `|∫ (F∘T) g − ∫ F (Pg)|`.
///
/// The left side is Gauss–Legendre quadrature on the pieces where both `g` (linear between its
/// nodes) and the branch of `T` are smooth; the right side pairs `F` with [`pf_step_grid`].
pub fn duality_residual(map: &MarkovMap, f: &Observable, g: &GridDensity, gauss_order: usize) -> Result<f64> {
    let gauss = Gauss::new(gauss_order);
    let part = map.partition();
    let lhs: Complex64 = (g.lo..=g.hi)
        .into_par_iter()
        .map(|j| {
            let (a, b) = (part.left(j), part.right(j));
            let mut cuts: Vec<f64> = g.cell_nodes(j).collect();
            for br in map.branches_of(j) {
                for p in &br.pieces {
                    let (u, v) = p.range();
                    cuts.extend([u, v].into_iter().filter(|x| *x > a && *x < b));
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts.windows(2)
                .filter(|c| c[1] > c[0])
                .map(|c| gauss.integrate(c[0], c[1], |x| f.eval(map.evaluate(x)) * g.value_in_cell(j, x)))
                .sum::<Complex64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let rhs = pf_step_grid(g, map)?.pair(f);
    Ok((lhs - rhs).norm())
}
