use std::collections::BTreeMap;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

use super::{Branch, BumpTerm, InversePiece, MapKind, MarkovMap, Partition};
use crate::chain::{BandedKernel, Prob};
use crate::error::{Error, Result};
use crate::maps::Bump;

/// Tolerance on `|Σ |φ'_j| − 1|` accepted by the builders.
pub const MEASURE_TOL: f64 = 1e-10;

const MEASURE_GRID: usize = 256;

/// Translation-invariant map from the branches of one period of the partition.
///
/// `branches` holds exactly one branch per cell `0..p` of the period.
pub fn build_quasi_lift(partition: Partition, branches: Vec<Branch>) -> Result<MarkovMap> {
    let p = partition.cells_per_period();
    let mut bulk: Vec<Vec<Branch>> = vec![Vec::new(); p];
    for b in branches {
        if b.home < 0 || b.home >= p as i64 {
            return Err(Error::Branch {
                home: b.home,
                reason: format!("fundamental branches must have home cells in 0..{p}"),
            });
        }
        check_image(&b)?;
        b.validate(&partition)?;
        let slot = &mut bulk[b.home as usize];
        if !slot.is_empty() {
            return Err(Error::Branch { home: b.home, reason: "more than one branch".into() });
        }
        slot.push(b);
    }
    if let Some(j) = bulk.iter().position(Vec::is_empty) {
        return Err(Error::Branch { home: j as i64, reason: "missing branch".into() });
    }
    let map = MarkovMap::assemble(partition, bulk, BTreeMap::new(), MapKind::QuasiLift)?;
    require_measure_preserving(&map)?;
    Ok(map)
}

/// `T(x) = 2x − j` on `[j, j+1]`.
pub fn doubling_quasi_lift() -> MarkovMap {
    let part = Partition::uniform(1.0).expect("unit cells");
    let b = Branch::from_affine_inverse(&part, 0, (0, 1), 0.5, 0.0).expect("doubling branch");
    build_quasi_lift(part, vec![b]).expect("doubling map is valid")
}

/// Doubling quasi-lift whose inverse pieces onto `I_0` and `I_1` carry `+δψ` and `−δψ`,
/// so the slopes onto each cell still sum to one.
pub fn nonlinear_quasi_lift(delta: f64, bump: Bump) -> Result<MarkovMap> {
    let part = Partition::uniform(1.0)?;
    let mut b = Branch::from_affine_inverse(&part, 0, (0, 1), 0.5, 0.0)?;
    b.pieces[0].bumps.push(BumpTerm { delta, bump });
    b.pieces[1].bumps.push(BumpTerm { delta: -delta, bump });
    build_quasi_lift(part, vec![b])
}

fn check_image(b: &Branch) -> Result<()> {
    let (k1, k2) = b.image();
    if !(k1 <= b.home && b.home <= k2) || k2 - k1 + 1 < 2 {
        return Err(Error::ImageRange { home: b.home, k1, k2 });
    }
    Ok(())
}

fn require_measure_preserving(map: &MarkovMap) -> Result<()> {
    let report = map.check_measure_preservation(MEASURE_GRID, map.check_window());
    if report.max_residual > MEASURE_TOL {
        return Err(Error::NotMeasurePreserving { residual: report.max_residual });
    }
    Ok(())
}

fn is_dyadic(r: &Rational64) -> bool {
    let d = *r.denom();
    d > 0 && d & (d - 1) == 0
}

/// Perturbs the inverse branches of `base` whose images contain `I_0` by `δ_j ψ` on `I_0`.
///
/// `deltas` is keyed by the home cell of each such branch; the keys must be exactly that set
/// and `Σ sign(φ'_{0j}) δ_j` must vanish.
pub fn build_finite_modification(
    base: &MarkovMap,
    deltas: &BTreeMap<i64, Rational64>,
    bump: Bump,
) -> Result<MarkovMap> {
    if base.kind() != &MapKind::QuasiLift {
        return Err(Error::Variant(format!(
            "finite modifications need a quasi-lift base, got {}",
            base.kind().name()
        )));
    }
    let w = base.params().jump;
    let mut touching = Vec::new();
    for j in -w..=w {
        for b in base.branches_of(j) {
            if b.piece_for(0).is_some() {
                touching.push((j, b));
            }
        }
    }
    let expected: Vec<i64> = touching.iter().map(|(j, _)| *j).collect();
    let got: Vec<i64> = deltas.keys().copied().collect();
    if expected != got {
        return Err(Error::PerturbationSet { expected, got });
    }
    if let Some(bad) = deltas.values().find(|d| !is_dyadic(d)) {
        return Err(Error::NotDyadic(bad.to_string()));
    }
    let sum = touching.iter().fold(Rational64::zero(), |acc, (j, b)| {
        let d = deltas[j];
        if b.increasing() {
            acc + d
        } else {
            acc - d
        }
    });
    if !sum.is_zero() {
        return Err(Error::PerturbationSum { sum: sum.to_string() });
    }

    let mut exceptional = BTreeMap::new();
    for (j, mut b) in touching {
        let d = deltas[&j];
        if d.is_zero() {
            continue;
        }
        let delta = d.to_f64().expect("dyadic rationals convert exactly");
        let first = b.pieces[0].cell;
        b.pieces[(0 - first) as usize].bumps.push(BumpTerm { delta, bump });
        b.validate(base.partition())?;
        exceptional.insert(j, vec![b]);
    }
    let k_prime = deltas.keys().map(|j| j.abs()).max().unwrap_or(0);
    let kind = MapKind::FiniteModification {
        base: Box::new(base.clone()),
        deltas: deltas.clone(),
        bump,
        k_prime,
    };
    let map = MarkovMap::assemble(
        base.partition().clone(),
        base_bulk(base),
        exceptional,
        kind,
    )?;
    require_measure_preserving(&map)?;
    Ok(map)
}

fn base_bulk(base: &MarkovMap) -> Vec<Vec<Branch>> {
    (0..base.partition().cells_per_period() as i64).map(|j| base.branches_of(j)).collect()
}

/// Map on unit cells whose branch of `I_j` sends consecutive subintervals `I'_{jk}` of length
/// `p_{jk}` affinely and increasingly onto `I_k`. Zero entries are skipped, so a row with
/// interior zeros yields several branches.
pub fn build_random_walk_map(kernel: &BandedKernel) -> Result<MarkovMap> {
    let partition = Partition::uniform(1.0)?;
    let w = kernel.band() as i64;
    let bulk = vec![row_branches(0, kernel.stencil(), w)];
    let exceptional = kernel
        .exceptional_rows()
        .iter()
        .map(|(&j, row)| (j, row_branches(j, row, w)))
        .collect();
    MarkovMap::assemble(partition, bulk, exceptional, MapKind::RandomWalk { kernel: kernel.clone() })
}

fn row_branches(j: i64, row: &[Prob], w: i64) -> Vec<Branch> {
    let exact = row.iter().all(Prob::is_exact);
    let last = row.iter().rposition(Prob::is_positive);
    let mut cum_exact = Rational64::zero();
    let mut cum = 0.0_f64;
    let mut branches = Vec::new();
    let mut current: Vec<InversePiece> = Vec::new();
    for (i, p) in row.iter().enumerate() {
        let k = j - w + i as i64;
        let lo = j as f64 + cum;
        if exact {
            cum_exact += p.exact().expect("exact row");
            cum = cum_exact.to_f64().expect("small rational");
        } else {
            cum += p.value();
        }
        if !p.is_positive() {
            if !current.is_empty() {
                branches.push(close_branch(j, std::mem::take(&mut current)));
            }
            continue;
        }
        // absorb rounding of approximate rows into the last piece
        let hi = if Some(i) == last { (j + 1) as f64 } else { j as f64 + cum };
        current.push(InversePiece::affine(k, lo, hi));
    }
    if !current.is_empty() {
        branches.push(close_branch(j, current));
    }
    branches
}

fn close_branch(home: i64, pieces: Vec<InversePiece>) -> Branch {
    let domain = (pieces[0].start, pieces[pieces.len() - 1].end);
    Branch { home, domain, pieces }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nonlinear_quasi_lift(delta: f64) -> Result<MarkovMap> {
        super::nonlinear_quasi_lift(delta, Bump::default())
    }

    #[test]
    fn doubling_evaluates() {
        let t = doubling_quasi_lift();
        assert!((t.evaluate(0.3) - 0.6).abs() < 1e-15);
        assert!((t.evaluate(0.75) - 1.5).abs() < 1e-15);
        assert!((t.evaluate(-0.25) - 0.5).abs() < 1e-15);
        assert_eq!(t.params().j_hat, 2);
        assert!((t.params().lambda - 2.0).abs() < 1e-15);
        assert_eq!(t.params().eta, 0.0);
    }

    #[test]
    fn single_cell_image_rejected() {
        let part = Partition::uniform(1.0).unwrap();
        let b = Branch::from_affine_inverse(&part, 0, (0, 0), 1.0, 0.0).unwrap();
        assert!(matches!(build_quasi_lift(part, vec![b]), Err(Error::ImageRange { .. })));
    }

    #[test]
    fn unbalanced_quasi_lift_rejected() {
        let part = Partition::uniform(1.0).unwrap();
        let mut b = Branch::from_affine_inverse(&part, 0, (0, 1), 0.5, 0.0).unwrap();
        b.pieces[0].bumps.push(BumpTerm { delta: 0.02, bump: Bump::default() });
        assert!(matches!(
            build_quasi_lift(part, vec![b]),
            Err(Error::NotMeasurePreserving { .. })
        ));
    }

    #[test]
    fn nonlinear_quasi_lift_round_trip() {
        let t = nonlinear_quasi_lift(0.02).unwrap();
        assert!(t.params().eta > 0.0);
        for i in 0..200 {
            let x = -3.0 + i as f64 * 0.0371;
            let y = t.evaluate(x);
            let back = t.preimages(y);
            assert!(back.iter().any(|p| (p.x - x).abs() < 1e-12), "x={x}");
        }
        let report = t.check_measure_preservation(10_000, (-2, 2));
        assert!(report.max_residual < 1e-12);
    }

    #[test]
    fn large_bump_breaks_monotonicity() {
        assert!(matches!(nonlinear_quasi_lift(0.3), Err(Error::MonotonicityLost { .. })));
    }

    #[test]
    fn finite_modification_checks() {
        let base = doubling_quasi_lift();
        let fm = |a: (i64, i64), b: (i64, i64)| {
            let d: BTreeMap<i64, Rational64> =
                [(-1, Rational64::new(a.0, a.1)), (0, Rational64::new(b.0, b.1))].into();
            build_finite_modification(&base, &d, Bump::default())
        };
        fm((1, 128), (-1, 128)).unwrap();
        assert!(matches!(fm((1, 128), (1, 128)), Err(Error::PerturbationSum { .. })));
        assert!(matches!(fm((1, 100), (-1, 100)), Err(Error::NotDyadic(_))));
        let only: BTreeMap<i64, Rational64> = [(0, Rational64::zero())].into();
        assert!(matches!(
            build_finite_modification(&base, &only, Bump::default()),
            Err(Error::PerturbationSet { .. })
        ));
        let zero = fm((0, 1), (0, 1)).unwrap();
        for i in 0..100 {
            let x = -2.0 + i as f64 * 0.043;
            assert_eq!(zero.evaluate(x), base.evaluate(x));
        }
    }
}
