//! Banded stochastic matrices on ℤ and exact evolution of probability vectors.

pub mod graph;
mod kernel;
mod state;

use std::collections::BTreeMap;

pub use graph::{class_periods, forward_image, forward_image_n, is_aperiodic, is_irreducible};
pub use kernel::{is_doubly_stochastic, BandedKernel, ColumnSums, Prob, FLOAT_SUM_TOL};
pub use state::{check_symmetric_decreasing, evolve, step, StateVector, Weights};

use crate::error::{Error, Result};
use crate::maps::{MapKind, MarkovMap};

/// Transition matrix `p_{jk} = Leb(T⁻¹ I_k | I_j)` of a map on a partition with one cell per period.
///
/// Random-walk maps return their defining (exact) kernel, other maps go through
/// [`transition_matrix_from_geometry`].
pub fn transition_matrix_of(map: &MarkovMap, window: (i64, i64)) -> Result<BandedKernel> {
    if let MapKind::RandomWalk { kernel } = map.kind() {
        return Ok(kernel.clone());
    }
    transition_matrix_from_geometry(map, window)
}

/// Entries read from the endpoint values of the inverse pieces,
/// `|φ_j(a_{k+1}) − φ_j(a_k)| / |I_j|`. `window` must contain every exceptional cell of the map.
pub fn transition_matrix_from_geometry(map: &MarkovMap, window: (i64, i64)) -> Result<BandedKernel> {
    let part = map.partition();
    if part.cells_per_period() != 1 {
        return Err(Error::Invalid(
            "transition kernels are only built for partitions with one cell per period".into(),
        ));
    }
    let exc = map.exceptional_cells();
    if let Some(j) = exc.iter().find(|&&j| j < window.0 || j > window.1) {
        return Err(Error::Invalid(format!("window {window:?} misses exceptional cell {j}")));
    }
    let w = map.params().jump;
    let row = |j: i64| -> Vec<Prob> {
        let mut r = vec![Prob::Approx(0.0); (2 * w + 1) as usize];
        for b in map.branches_of(j) {
            for p in &b.pieces {
                r[(p.cell - j + w) as usize] = Prob::Approx((p.end - p.start).abs() / part.len(j));
            }
        }
        r
    };
    let exceptional: BTreeMap<i64, Vec<Prob>> = exc.iter().map(|&j| (j, row(j))).collect();
    let bulk_cell = exc.last().map_or(0, |j| j + 1);
    BandedKernel::new(w as usize, row(bulk_cell), exceptional)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{build_random_walk_map, doubling_quasi_lift};

    #[test]
    fn random_walk_round_trip() {
        let k = BandedKernel::five_point_defect();
        let map = build_random_walk_map(&k).unwrap();
        assert_eq!(transition_matrix_of(&map, (-3, 3)).unwrap(), k);
        let g = transition_matrix_from_geometry(&map, (-3, 3)).unwrap();
        for j in -4..=4 {
            for d in -2..=2 {
                assert!((g.p(j, j + d) - k.p(j, j + d)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn doubling_stencil() {
        let k = transition_matrix_of(&doubling_quasi_lift(), (0, 0)).unwrap();
        assert_eq!(k.band(), 1);
        let s: Vec<f64> = k.stencil().iter().map(Prob::value).collect();
        assert_eq!(s, vec![0.0, 0.5, 0.5]);
    }
}
