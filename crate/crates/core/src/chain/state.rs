use num_bigint::{BigInt, BigUint};
use num_rational::{BigRational, Rational64};
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use super::kernel::BandedKernel;
use crate::error::{Error, Result};

/// Probability weights on consecutive cells.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// `π_j = numer[j − start] / denom`, never reduced.
    Exact { numer: Vec<BigUint>, denom: BigUint },
    Float(Vec<f64>),
}

/// Finitely supported probability vector `π` on ℤ.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    start: i64,
    weights: Weights,
}

/// Cells processed per parallel task in [`StateVector::step`].
const STEP_CHUNK: usize = 64;

fn big_to_f64(n: &BigUint, d: &BigUint) -> f64 {
    // keep both under f64 range while preserving the ratio to full precision
    let shift = d.bits().saturating_sub(1000);
    let (n, d) = (n >> shift, d >> shift);
    n.to_f64().unwrap_or(f64::INFINITY) / d.to_f64().unwrap_or(f64::INFINITY)
}

impl StateVector {
    /// `π = δ_j`.
    pub fn delta(j: i64) -> Self {
        Self {
            start: j,
            weights: Weights::Exact { numer: vec![BigUint::from(1u32)], denom: BigUint::from(1u32) },
        }
    }

    pub fn from_rationals(start: i64, values: &[Rational64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::State("empty vector".into()));
        }
        if values.iter().any(|v| *v.numer() < 0) {
            return Err(Error::State("negative weight".into()));
        }
        let sum: Rational64 = values.iter().sum();
        if sum != Rational64::from_integer(1) {
            return Err(Error::State(format!("weights sum to {sum}")));
        }
        let denom = values.iter().fold(1i64, |acc, v| num_integer::lcm(acc, *v.denom()));
        let numer = values
            .iter()
            .map(|v| BigUint::from((v.numer() * (denom / v.denom())) as u64))
            .collect();
        Ok(Self { start, weights: Weights::Exact { numer, denom: BigUint::from(denom as u64) } })
    }

    pub fn from_floats(start: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::State("empty vector".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::State("negative or NaN weight".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::State(format!("weights sum to {sum}")));
        }
        Ok(Self { start, weights: Weights::Float(values) })
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn len(&self) -> usize {
        match &self.weights {
            Weights::Exact { numer, .. } => numer.len(),
            Weights::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell range `[jmin, jmax]` holding the stored weights.
    pub fn window(&self) -> (i64, i64) {
        (self.start, self.start + self.len() as i64 - 1)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.weights, Weights::Exact { .. })
    }

    fn index(&self, j: i64) -> Option<usize> {
        let i = j - self.start;
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }

    /// `π_j` (zero outside the window).
    pub fn get(&self, j: i64) -> f64 {
        match (&self.weights, self.index(j)) {
            (_, None) => 0.0,
            (Weights::Exact { numer, denom }, Some(i)) => big_to_f64(&numer[i], denom),
            (Weights::Float(v), Some(i)) => v[i],
        }
    }

    /// Exact `π_j`, when the vector is exact.
    pub fn get_exact(&self, j: i64) -> Option<BigRational> {
        match &self.weights {
            Weights::Exact { numer, denom } => {
                let n = self.index(j).map_or_else(BigUint::zero, |i| numer[i].clone());
                Some(BigRational::new(BigInt::from(n), BigInt::from(denom.clone())))
            }
            Weights::Float(_) => None,
        }
    }

    /// `(j, π_j)` for every stored cell.
    pub fn values(&self) -> Vec<(i64, f64)> {
        (0..self.len()).map(|i| self.start + i as i64).map(|j| (j, self.get(j))).collect()
    }

    pub fn mass(&self) -> f64 {
        match &self.weights {
            Weights::Exact { numer, denom } => big_to_f64(&numer.iter().sum(), denom),
            Weights::Float(v) => v.iter().sum(),
        }
    }

    /// `Σ π_j == 1` in exact arithmetic (false for floating-point vectors).
    pub fn mass_is_exactly_one(&self) -> bool {
        match &self.weights {
            Weights::Exact { numer, denom } => &numer.iter().sum::<BigUint>() == denom,
            Weights::Float(_) => false,
        }
    }

    /// Sum of `π_j` over `lo ≤ j ≤ hi`, exactly when possible.
    pub fn partial_sum(&self, lo: i64, hi: i64) -> f64 {
        let (a, b) = self.window();
        let (lo, hi) = (lo.max(a), hi.min(b));
        if lo > hi {
            return 0.0;
        }
        let (i, k) = (self.index(lo).unwrap(), self.index(hi).unwrap());
        match &self.weights {
            Weights::Exact { numer, denom } => big_to_f64(&numer[i..=k].iter().sum(), denom),
            Weights::Float(v) => v[i..=k].iter().sum(),
        }
    }

    /// `πP`: `(πP)_k = Σ_j π_j p_{jk}`. The window grows by the band on each side.
    pub fn step(&self, kernel: &BandedKernel) -> StateVector {
        let w = kernel.band() as i64;
        let (a, b) = self.window();
        let start = a - w;
        let len = (b - a + 1 + 2 * w) as usize;
        match (&self.weights, kernel.common_denominator()) {
            (Weights::Exact { numer, denom }, Some(d)) => {
                let to_int = |row: &[super::Prob]| -> Vec<u64> {
                    row.iter()
                        .map(|p| {
                            let r = p.exact().expect("exact kernel");
                            (r.numer() * (d / r.denom())) as u64
                        })
                        .collect()
                };
                let bulk = to_int(kernel.stencil());
                let (elo, ehi) = kernel.exceptional_range();
                let rows: Vec<Vec<u64>> = (elo..=ehi).map(|j| to_int(kernel.row(j))).collect();
                let int_entry = |j: i64, k: i64| -> u64 {
                    let row = if j >= elo && j <= ehi { &rows[(j - elo) as usize] } else { &bulk };
                    row[(k - j + w) as usize]
                };
                let mut out = vec![BigUint::zero(); len];
                out.par_chunks_mut(STEP_CHUNK).enumerate().for_each(|(c, chunk)| {
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        let k = start + (c * STEP_CHUNK + i) as i64;
                        for j in (k - w).max(a)..=(k + w).min(b) {
                            let m = int_entry(j, k);
                            if m != 0 {
                                *slot += &numer[(j - a) as usize] * m;
                            }
                        }
                    }
                });
                StateVector {
                    start,
                    weights: Weights::Exact { numer: out, denom: denom * (d as u64) },
                }
            }
            _ => {
                let src: Vec<f64> = (a..=b).map(|j| self.get(j)).collect();
                let mut out = vec![0.0; len];
                out.par_chunks_mut(STEP_CHUNK).enumerate().for_each(|(c, chunk)| {
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        let k = start + (c * STEP_CHUNK + i) as i64;
                        for j in (k - w).max(a)..=(k + w).min(b) {
                            *slot += src[(j - a) as usize] * kernel.p(j, k);
                        }
                    }
                });
                StateVector { start, weights: Weights::Float(out) }
            }
        }
    }

    /// `πPⁿ`.
    pub fn evolve(&self, kernel: &BandedKernel, n: usize) -> StateVector {
        let mut s = self.clone();
        for _ in 0..n {
            s = s.step(kernel);
        }
        s
    }

    /// Weights on the symmetric window `[−r, r]` with `r` covering the support.
    fn symmetric_radius(&self) -> i64 {
        let (a, b) = self.window();
        a.abs().max(b.abs())
    }

    /// `π_j = π_{−j}` for all `j` and `π_k ≥ π_{k+1}` for all `k ≥ 0`, compared exactly.
    pub fn is_symmetric_decreasing(&self) -> bool {
        let r = self.symmetric_radius();
        match &self.weights {
            Weights::Exact { numer, .. } => {
                let zero = BigUint::zero();
                let at = |j: i64| self.index(j).map_or(&zero, |i| &numer[i]);
                (1..=r).all(|j| at(j) == at(-j)) && (0..=r).all(|k| at(k) >= at(k + 1))
            }
            Weights::Float(_) => {
                (1..=r).all(|j| self.get(j) == self.get(-j))
                    && (0..=r).all(|k| self.get(k) >= self.get(k + 1))
            }
        }
    }
}

/// `πP`.
pub fn step(pi: &StateVector, kernel: &BandedKernel) -> StateVector {
    pi.step(kernel)
}

/// `πPⁿ`.
pub fn evolve(pi: &StateVector, kernel: &BandedKernel, n: usize) -> StateVector {
    pi.evolve(kernel, n)
}

/// Symmetric about 0 and non-increasing on ℕ.
pub fn check_symmetric_decreasing(pi: &StateVector) -> bool {
    pi.is_symmetric_decreasing()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defect_kernel_first_step() {
        let k = BandedKernel::five_point_defect();
        let p1 = StateVector::delta(0).step(&k);
        assert_eq!(p1.window(), (-2, 2));
        let expect = [1, 1, 5, 1, 1];
        for (j, e) in (-2..=2).zip(expect) {
            assert_eq!(p1.get_exact(j).unwrap(), BigRational::new(e.into(), 9.into()));
        }
        assert!(p1.is_symmetric_decreasing());
    }

    #[test]
    fn simple_walk_two_steps() {
        let k = BandedKernel::simple_symmetric();
        let p2 = StateVector::delta(0).evolve(&k, 2);
        assert_eq!(p2.get(-2), 0.25);
        assert_eq!(p2.get(0), 0.5);
        assert_eq!(p2.get(2), 0.25);
        assert_eq!(p2.get(1), 0.0);
        assert!(p2.mass_is_exactly_one());
    }

    #[test]
    fn symmetric_decreasing_examples() {
        assert!(StateVector::delta(0).is_symmetric_decreasing());
        let asym = StateVector::from_floats(-1, vec![0.2, 0.3, 0.5]).unwrap();
        assert!(!asym.is_symmetric_decreasing());
        let r = |n, d| Rational64::new(n, d);
        let ok = StateVector::from_rationals(-2, &[r(1, 9), r(1, 9), r(5, 9), r(1, 9), r(1, 9)])
            .unwrap();
        assert!(ok.is_symmetric_decreasing());
        assert!(StateVector::from_rationals(0, &[r(1, 2)]).is_err());
    }

    #[test]
    fn float_and_exact_agree() {
        let k = BandedKernel::five_point_defect();
        let exact = StateVector::delta(0).evolve(&k, 30);
        let float = StateVector::from_floats(0, vec![1.0]).unwrap().evolve(&k, 30);
        for j in -60..=60 {
            assert!((exact.get(j) - float.get(j)).abs() < 1e-15);
        }
        assert!(exact.mass_is_exactly_one());
        assert!((float.mass() - 1.0).abs() < 1e-13);
    }
}
