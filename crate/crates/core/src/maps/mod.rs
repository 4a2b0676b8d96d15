//! Markov maps of the real line defined through their inverse branches.

pub mod branch;
mod build;
pub mod partition;

use std::collections::BTreeMap;

use num_rational::Rational64;

pub use branch::{Branch, Bump, BumpTerm, InversePiece};
pub use build::{
    build_finite_modification, build_quasi_lift, build_random_walk_map, doubling_quasi_lift,
    nonlinear_quasi_lift,
    MEASURE_TOL,
};
pub use partition::Partition;

use crate::chain::BandedKernel;
use crate::error::{Error, Result};

/// Which of the three constructions produced a map.
#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    QuasiLift,
    FiniteModification {
        base: Box<MarkovMap>,
        /// Perturbation sizes indexed by the home cell of the perturbed branch.
        deltas: BTreeMap<i64, Rational64>,
        bump: Bump,
        k_prime: i64,
    },
    RandomWalk { kernel: BandedKernel },
}

impl MapKind {
    pub fn name(&self) -> &'static str {
        match self {
            MapKind::QuasiLift => "quasi-lift",
            MapKind::FiniteModification { .. } => "finite-modification",
            MapKind::RandomWalk { .. } => "random-walk",
        }
    }
}

/// Constants of the axioms, measured from the branch data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams {
    /// `1 / sup |φ'|`, so that `|T'| ≥ λ` everywhere.
    pub lambda: f64,
    /// `sup |φ''| / φ'^2`, the bound on `|T''/T'|`.
    pub eta: f64,
    /// Largest number of cells covered by one branch image.
    pub j_hat: i64,
    /// Largest `|k − j|` over image cells `k` of branches of cell `j`.
    pub jump: i64,
    pub c1: f64,
    pub c2: f64,
}

/// A uniformly expanding Markov map of ℝ.
///
/// Branches of bulk cells are stored for one period of the partition and translated on demand;
/// cells whose branches differ from the translated ones are stored explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMap {
    partition: Partition,
    bulk: Vec<Vec<Branch>>,
    exceptional: BTreeMap<i64, Vec<Branch>>,
    kind: MapKind,
    params: MapParams,
}

/// Residual of the Lebesgue-preservation identity `Σ |φ'_j| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub max_residual: f64,
    /// `(cell, max residual on that cell)`.
    pub per_cell: Vec<(i64, f64)>,
}

/// Result of pulling a point back through one inverse piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimage {
    pub home: i64,
    pub x: f64,
    /// `φ'(y)` (signed).
    pub slope: f64,
}

const PARAM_SAMPLES: usize = 4096;

impl MarkovMap {
    pub(crate) fn assemble(
        partition: Partition,
        bulk: Vec<Vec<Branch>>,
        exceptional: BTreeMap<i64, Vec<Branch>>,
        kind: MapKind,
    ) -> Result<Self> {
        if bulk.len() != partition.cells_per_period() {
            return Err(Error::Invalid(format!(
                "need branches for {} cells per period, got {}",
                partition.cells_per_period(),
                bulk.len()
            )));
        }
        let mut map = Self {
            partition,
            bulk,
            exceptional,
            kind,
            params: MapParams { lambda: 0.0, eta: 0.0, j_hat: 0, jump: 0, c1: 0.0, c2: 0.0 },
        };
        map.params = map.measure_params()?;
        Ok(map)
    }

    fn measure_params(&self) -> Result<MapParams> {
        let mut sup_slope = 0.0_f64;
        let mut eta = 0.0_f64;
        let mut j_hat = 0;
        let mut jump = 0;
        let all = self.bulk.iter().flatten().chain(self.exceptional.values().flatten());
        for b in all {
            j_hat = j_hat.max(b.image_width());
            let (k1, k2) = b.image();
            jump = jump.max((b.home - k1).abs()).max((k2 - b.home).abs());
            for p in &b.pieces {
                let len = self.partition.len(p.cell);
                if p.is_affine() {
                    sup_slope = sup_slope.max(((p.end - p.start) / len).abs());
                    continue;
                }
                for i in 0..=PARAM_SAMPLES {
                    let t = i as f64 / PARAM_SAMPLES as f64;
                    let d1 = p.slope_t(t) / len;
                    let d2 = p.curvature_t(t) / (len * len);
                    sup_slope = sup_slope.max(d1.abs());
                    eta = eta.max(d2.abs() / (d1 * d1));
                }
            }
        }
        let lambda = 1.0 / sup_slope;
        if !(lambda > 1.0) {
            return Err(Error::NotExpanding(lambda));
        }
        Ok(MapParams {
            lambda,
            eta,
            j_hat,
            jump,
            c1: self.partition.c1(),
            c2: self.partition.c2(),
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    /// Translation period `a` of the bulk.
    pub fn period(&self) -> f64 {
        self.partition.period()
    }

    /// Cells whose branches are stored explicitly.
    pub fn exceptional_cells(&self) -> Vec<i64> {
        self.exceptional.keys().copied().collect()
    }

    /// Smallest cell range containing every exceptional cell, or `(0, -1)` when there is none.
    pub fn exceptional_range(&self) -> (i64, i64) {
        match (self.exceptional.keys().next(), self.exceptional.keys().next_back()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => (0, -1),
        }
    }

    pub fn is_affine(&self) -> bool {
        self.bulk.iter().flatten().chain(self.exceptional.values().flatten()).all(Branch::is_affine)
    }

    /// Stored branches of `j`, plus the cell and length shift translating them onto `j`.
    fn local(&self, j: i64) -> (&[Branch], i64, f64) {
        if let Some(b) = self.exceptional.get(&j) {
            return (b, 0, 0.0);
        }
        let p = self.partition.cells_per_period() as i64;
        let q = j.div_euclid(p);
        let r = j.rem_euclid(p) as usize;
        (&self.bulk[r], q * p, q as f64 * self.partition.period())
    }

    /// Branches of cell `j` in absolute coordinates.
    pub fn branches_of(&self, j: i64) -> Vec<Branch> {
        let (b, cells, len) = self.local(j);
        if cells == 0 {
            b.to_vec()
        } else {
            b.iter().map(|b| b.shifted(cells, len)).collect()
        }
    }

    /// Inverse pieces mapping onto cell `k`, as `(home, piece)` in absolute coordinates.
    pub fn pieces_onto(&self, k: i64) -> Vec<(i64, InversePiece)> {
        let w = self.params.jump;
        let mut out = Vec::new();
        for j in k - w..=k + w {
            for b in self.branches_of(j) {
                if let Some(p) = b.piece_for(k) {
                    out.push((j, p.clone()));
                }
            }
        }
        out
    }

    /// Inverse piece from home cell `j` onto cell `k`, if `p_{jk} > 0`.
    pub fn piece(&self, j: i64, k: i64) -> Option<InversePiece> {
        self.branches_of(j).into_iter().find_map(|b| b.piece_for(k).cloned())
    }

    /// Forward image `T(x)`; breakpoints and cut points belong to the interval on their right.
    pub fn evaluate(&self, x: f64) -> f64 {
        let j = self.partition.cell_of(x);
        let (branches, cells, shift) = self.local(j);
        let xl = x - shift;
        let branch = branches
            .iter()
            .find(|b| xl >= b.domain.0 && xl < b.domain.1)
            .or_else(|| branches.iter().rev().find(|b| xl >= b.domain.0))
            .unwrap_or(&branches[0]);
        let piece = branch.locate(xl);
        let t = piece.solve(xl);
        let k = piece.cell + cells;
        self.partition.left(k) + t * self.partition.len(k)
    }

    /// `T(x)` together with `T'(x)`.
    pub fn evaluate_with_derivative(&self, x: f64) -> (f64, f64) {
        let j = self.partition.cell_of(x);
        let (branches, cells, shift) = self.local(j);
        let xl = x - shift;
        let branch = branches
            .iter()
            .find(|b| xl >= b.domain.0 && xl < b.domain.1)
            .or_else(|| branches.iter().rev().find(|b| xl >= b.domain.0))
            .unwrap_or(&branches[0]);
        let piece = branch.locate(xl);
        let t = piece.solve(xl);
        let k = piece.cell + cells;
        let len = self.partition.len(k);
        (self.partition.left(k) + t * len, len / piece.slope_t(t))
    }

    /// `Tⁿ(x)`.
    pub fn iterate(&self, x: f64, n: usize) -> f64 {
        (0..n).fold(x, |y, _| self.evaluate(y))
    }

    /// Pulls `y ∈ I_k` back through a piece onto `k`.
    pub fn pull_back(&self, home: i64, piece: &InversePiece, y: f64) -> Preimage {
        let (a, len) = (self.partition.left(piece.cell), self.partition.len(piece.cell));
        let t = (y - a) / len;
        Preimage { home, x: piece.value(t), slope: piece.slope_t(t) / len }
    }

    /// All preimages of `y`.
    pub fn preimages(&self, y: f64) -> Vec<Preimage> {
        let k = self.partition.cell_of(y);
        self.pieces_onto(k).iter().map(|(j, p)| self.pull_back(*j, p, y)).collect()
    }

    /// Max over a grid of `|Σ |φ'_j(x)| − 1|`, per cell of `window`.
    pub fn check_measure_preservation(
        &self,
        grid_points_per_cell: usize,
        window: (i64, i64),
    ) -> MeasureReport {
        let per_cell: Vec<(i64, f64)> = (window.0..=window.1)
            .map(|k| {
                let pieces = self.pieces_onto(k);
                let worst = self
                    .partition
                    .interior_grid(k, grid_points_per_cell)
                    .map(|y| {
                        let s: f64 =
                            pieces.iter().map(|(j, p)| self.pull_back(*j, p, y).slope.abs()).sum();
                        (s - 1.0).abs()
                    })
                    .fold(0.0, f64::max);
                (k, worst)
            })
            .collect();
        let max_residual = per_cell.iter().map(|c| c.1).fold(0.0, f64::max);
        MeasureReport { max_residual, per_cell }
    }

    /// `Σ_{y ∈ T⁻¹x} 1/|T'(y)|`.
    pub fn preimage_mass(&self, x: f64) -> f64 {
        self.preimages(x).iter().map(|p| p.slope.abs()).sum()
    }

    /// For a finite modification, max over a grid of `check_window()` of the difference
    /// between its preimage mass and that of the base map. `None` for other variants.
    pub fn modification_residual(&self, grid_points_per_cell: usize) -> Option<f64> {
        let MapKind::FiniteModification { base, .. } = &self.kind else {
            return None;
        };
        let (lo, hi) = self.check_window();
        let worst = (lo..=hi)
            .flat_map(|k| self.partition.interior_grid(k, grid_points_per_cell))
            .map(|x| (self.preimage_mass(x) - base.preimage_mass(x)).abs())
            .fold(0.0, f64::max);
        Some(worst)
    }

    /// Cells on which the map must be checked: all exceptional cells plus a band on either side.
    pub fn check_window(&self) -> (i64, i64) {
        let (lo, hi) = self.exceptional_range();
        let w = self.params.jump.max(1);
        let p = self.partition.cells_per_period() as i64;
        if lo > hi {
            (-w, p - 1 + w)
        } else {
            (lo.min(0) - 2 * w, hi.max(p - 1) + 2 * w)
        }
    }

    /// `log D = η c₂ λ/(λ−1)`, the bounded-distortion constant.
    pub fn distortion_log_bound(&self) -> Result<f64> {
        distortion_log_bound(self.params.lambda, self.params.eta, self.params.c2)
    }
}

/// `log D = η c₂ λ/(λ−1)`.
pub fn distortion_log_bound(lambda: f64, eta: f64, c2: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(Error::NotExpanding(lambda));
    }
    if eta < 0.0 || !c2.is_finite() {
        return Err(Error::Invalid("eta must be non-negative and c2 finite".into()));
    }
    if lambda.is_infinite() {
        return Ok(eta * c2);
    }
    Ok(eta * c2 * lambda / (lambda - 1.0))
}
