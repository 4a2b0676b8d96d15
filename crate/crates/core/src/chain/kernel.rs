use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Tolerance on row and column sums of floating-point kernels.
pub const FLOAT_SUM_TOL: f64 = 1e-12;

/// A transition probability, exact when it comes from a rational definition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prob {
    Exact(Rational64),
    Approx(f64),
}

impl Prob {
    pub fn zero() -> Self {
        Prob::Exact(Rational64::zero())
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Prob::Exact(Rational64::new(n, d))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Prob::Exact(_))
    }

    pub fn exact(&self) -> Option<Rational64> {
        match self {
            Prob::Exact(r) => Some(*r),
            Prob::Approx(_) => None,
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Prob::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Prob::Approx(v) => *v,
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_positive(),
            Prob::Approx(v) => *v > 0.0,
        }
    }

    fn is_negative(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_negative(),
            Prob::Approx(v) => *v < 0.0 || v.is_nan(),
        }
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prob::Exact(r) => write!(f, "{r}"),
            Prob::Approx(v) => write!(f, "{v}"),
        }
    }
}

/// Parses `"5/9"`, `"0.25"`, `"1"` exactly; decimals become the rational they spell.
impl FromStr for Prob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("invalid probability `{s}`"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Prob::Exact(Rational64::new(n, d)));
        }
        if s.contains(['e', 'E']) {
            return s.parse::<f64>().map(Prob::Approx).map_err(|_| bad());
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        if !digits.chars().all(|c| c.is_ascii_digit()) || frac.len() > 18 {
            return Err(bad());
        }
        let n: i64 = digits.parse().map_err(|_| bad())?;
        let d = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let r = Rational64::new(n, d);
        Ok(Prob::Exact(if neg { -r } else { r }))
    }
}

/// Stochastic matrix on ℤ, null outside the band `|k − j| ≤ w`, equal to a shifted stencil
/// except on finitely many exceptional rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedKernel {
    band: usize,
    /// Entries at offsets `−w..=w`.
    stencil: Vec<Prob>,
    exceptional: BTreeMap<i64, Vec<Prob>>,
}

fn check_row(row: i64, entries: &[Prob], band: usize) -> Result<()> {
    let fail = |reason: String| Err(Error::KernelRow { row, reason });
    if entries.len() != 2 * band + 1 {
        return fail(format!("expected {} entries, got {}", 2 * band + 1, entries.len()));
    }
    if let Some(p) = entries.iter().find(|p| p.is_negative()) {
        return fail(format!("negative entry {p}"));
    }
    if entries.iter().all(Prob::is_exact) {
        let sum: Rational64 = entries.iter().filter_map(Prob::exact).sum();
        if !sum.is_one() {
            return fail(format!("row sums to {sum}"));
        }
    } else {
        let sum: f64 = entries.iter().map(Prob::value).sum();
        if (sum - 1.0).abs() > FLOAT_SUM_TOL {
            return fail(format!("row sums to {sum}"));
        }
    }
    Ok(())
}

impl BandedKernel {
    pub fn new(
        band: usize,
        stencil: Vec<Prob>,
        exceptional: BTreeMap<i64, Vec<Prob>>,
    ) -> Result<Self> {
        check_row(i64::MAX, &stencil, band).map_err(|e| match e {
            Error::KernelRow { reason, .. } => Error::Kernel(format!("bulk stencil: {reason}")),
            other => other,
        })?;
        for (&j, row) in &exceptional {
            check_row(j, row, band)?;
        }
        Ok(Self { band, stencil, exceptional })
    }

    /// Translation-invariant kernel with the given stencil.
    pub fn homogeneous(band: usize, stencil: Vec<Prob>) -> Result<Self> {
        Self::new(band, stencil, BTreeMap::new())
    }

    /// Five-point kernel with stencil `(1,2,3,2,1)/9` and a defect at cells −1, 0, 1:
    /// rows `(1,2,5,1,0)/9`, `(1,1,5,1,1)/9`, `(0,1,5,2,1)/9`.
    pub fn five_point_defect() -> Self {
        let ninths = |v: [i64; 5]| v.iter().map(|&n| Prob::ratio(n, 9)).collect::<Vec<_>>();
        let exceptional = BTreeMap::from([
            (-1, ninths([1, 2, 5, 1, 0])),
            (0, ninths([1, 1, 5, 1, 1])),
            (1, ninths([0, 1, 5, 2, 1])),
        ]);
        Self::new(2, ninths([1, 2, 3, 2, 1]), exceptional).expect("valid kernel")
    }

    /// Simple symmetric random walk, `p_{j,j±1} = 1/2`.
    pub fn simple_symmetric() -> Self {
        Self::homogeneous(1, vec![Prob::ratio(1, 2), Prob::zero(), Prob::ratio(1, 2)])
            .expect("valid kernel")
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn stencil(&self) -> &[Prob] {
        &self.stencil
    }

    pub fn exceptional_rows(&self) -> &BTreeMap<i64, Vec<Prob>> {
        &self.exceptional
    }

    /// `k′ = max |j|` over exceptional rows (0 when there are none).
    pub fn k_prime(&self) -> i64 {
        self.exceptional.keys().map(|j| j.abs()).max().unwrap_or(0)
    }

    /// Smallest range holding all exceptional rows; `(0, 0)` for a homogeneous kernel.
    pub fn exceptional_range(&self) -> (i64, i64) {
        match (self.exceptional.keys().next(), self.exceptional.keys().next_back()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => (0, 0),
        }
    }

    pub fn row(&self, j: i64) -> &[Prob] {
        self.exceptional.get(&j).map_or(&self.stencil, Vec::as_slice)
    }

    pub fn entry(&self, j: i64, k: i64) -> Prob {
        let w = self.band as i64;
        let d = k - j;
        if d.abs() > w {
            return Prob::zero();
        }
        self.row(j)[(d + w) as usize]
    }

    pub fn p(&self, j: i64, k: i64) -> f64 {
        self.entry(j, k).value()
    }

    pub fn is_exact(&self) -> bool {
        self.stencil.iter().chain(self.exceptional.values().flatten()).all(Prob::is_exact)
    }

    /// Cells `k` with `p_{jk} > 0`.
    pub fn successors(&self, j: i64) -> impl Iterator<Item = i64> + '_ {
        let w = self.band as i64;
        self.row(j)
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_positive())
            .map(move |(i, _)| j - w + i as i64)
    }

    /// Least common denominator of all entries, for exact kernels.
    pub fn common_denominator(&self) -> Option<i64> {
        if !self.is_exact() {
            return None;
        }
        Some(
            self.stencil
                .iter()
                .chain(self.exceptional.values().flatten())
                .filter_map(Prob::exact)
                .fold(1i64, |acc, r| acc.lcm(r.denom())),
        )
    }

    /// Mean and variance of one bulk step.
    pub fn stencil_moments(&self) -> (f64, f64) {
        let w = self.band as i64;
        let mean: f64 = self.stencil.iter().enumerate().map(|(i, p)| (i as i64 - w) as f64 * p.value()).sum();
        let var = self
            .stencil
            .iter()
            .enumerate()
            .map(|(i, p)| ((i as i64 - w) as f64 - mean).powi(2) * p.value())
            .sum();
        (mean, var)
    }

    /// Offsets `d` with positive bulk entry.
    pub fn bulk_steps(&self) -> Vec<i64> {
        let w = self.band as i64;
        self.stencil
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_positive())
            .map(|(i, _)| i as i64 - w)
            .collect()
    }
}

/// Column sums of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSums {
    pub doubly_stochastic: bool,
    pub max_residual: f64,
    /// Whether sums were computed in exact arithmetic (then `max_residual` is exact too).
    pub exact: bool,
    /// Sums for the columns touched by exceptional rows.
    pub columns: Vec<(i64, f64)>,
    /// Common sum of all other columns (the stencil sum).
    pub bulk: f64,
}

/// Column sums over all of ℤ: columns away from the exceptional rows receive the whole stencil.
pub fn is_doubly_stochastic(kernel: &BandedKernel) -> ColumnSums {
    let w = kernel.band() as i64;
    let (lo, hi) = kernel.exceptional_range();
    let cols = lo - w..=hi + w;
    if kernel.common_denominator().is_some() {
        let bulk: Rational64 = kernel.stencil().iter().filter_map(Prob::exact).sum();
        let mut worst = (bulk - Rational64::one()).abs();
        let mut columns = Vec::new();
        for k in cols {
            let s: Rational64 = (k - w..=k + w).filter_map(|j| kernel.entry(j, k).exact()).sum();
            worst = worst.max((s - Rational64::one()).abs());
            columns.push((k, s.to_f64().unwrap_or(f64::NAN)));
        }
        ColumnSums {
            doubly_stochastic: worst.is_zero(),
            max_residual: worst.to_f64().unwrap_or(f64::NAN),
            exact: true,
            columns,
            bulk: bulk.to_f64().unwrap_or(f64::NAN),
        }
    } else {
        let bulk: f64 = kernel.stencil().iter().map(Prob::value).sum();
        let mut worst = (bulk - 1.0).abs();
        let mut columns = Vec::new();
        for k in cols {
            let s: f64 = (k - w..=k + w).map(|j| kernel.p(j, k)).sum();
            worst = worst.max((s - 1.0).abs());
            columns.push((k, s));
        }
        ColumnSums {
            doubly_stochastic: worst <= FLOAT_SUM_TOL,
            max_residual: worst,
            exact: false,
            columns,
            bulk,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_probabilities() {
        assert_eq!("5/9".parse::<Prob>().unwrap(), Prob::ratio(5, 9));
        assert_eq!("0.25".parse::<Prob>().unwrap(), Prob::ratio(1, 4));
        assert_eq!("1".parse::<Prob>().unwrap(), Prob::ratio(1, 1));
        assert_eq!(".2".parse::<Prob>().unwrap(), Prob::ratio(1, 5));
        assert!("abc".parse::<Prob>().is_err());
        assert!("1/0".parse::<Prob>().is_err());
    }

    #[test]
    fn defect_kernel_is_doubly_stochastic() {
        let k = BandedKernel::five_point_defect();
        assert_eq!(k.common_denominator(), Some(9));
        assert_eq!(k.entry(0, 0), Prob::ratio(5, 9));
        assert_eq!(k.entry(5, 5), Prob::ratio(3, 9));
        assert_eq!(k.entry(5, 8), Prob::zero());
        let c = is_doubly_stochastic(&k);
        assert!(c.doubly_stochastic && c.exact);
        assert_eq!(c.max_residual, 0.0);
        let (mean, var) = k.stencil_moments();
        assert!(mean.abs() < 1e-15);
        assert!((var - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_stencil_is_doubly_stochastic() {
        let k = BandedKernel::homogeneous(1, vec![Prob::zero(), Prob::ratio(3, 5), Prob::ratio(2, 5)])
            .unwrap();
        assert!(is_doubly_stochastic(&k).doubly_stochastic);
    }

    #[test]
    fn deficient_column_reported() {
        let tenth = |n| Prob::ratio(n, 10);
        // row 0 keeps 0.4 on its own cell and sends 0.6 to the right
        let k = BandedKernel::new(
            1,
            vec![Prob::zero(), Prob::ratio(1, 2), Prob::ratio(1, 2)],
            BTreeMap::from([(0, vec![Prob::zero(), tenth(4), tenth(6)])]),
        )
        .unwrap();
        let c = is_doubly_stochastic(&k);
        assert!(!c.doubly_stochastic);
        assert!((c.max_residual - 0.1).abs() < 1e-15);
        let col0 = c.columns.iter().find(|(k, _)| *k == 0).unwrap().1;
        assert!((col0 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = BandedKernel::homogeneous(1, vec![Prob::ratio(1, 2), Prob::zero(), Prob::ratio(1, 3)]);
        assert!(matches!(bad, Err(Error::Kernel(_))));
        let neg = BandedKernel::new(
            1,
            vec![Prob::ratio(1, 2), Prob::zero(), Prob::ratio(1, 2)],
            BTreeMap::from([(3, vec![Prob::ratio(-1, 2), Prob::ratio(1, 1), Prob::ratio(1, 2)])]),
        );
        assert!(matches!(neg, Err(Error::KernelRow { row: 3, .. })));
    }
}
