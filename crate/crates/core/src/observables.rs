//! Bounded global observables, their window averages and infinite-volume averages.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::Partition;

/// Periodic factor of a quasiperiodic observable, as a function of `x mod a`.
#[derive(Debug, Clone, PartialEq)]
pub enum Base {
    One,
    /// `cos(2π h x / a)`.
    Cosine { harmonic: u32 },
    /// Indicator of `[lo·a, hi·a)` within each period, `0 ≤ lo < hi ≤ 1`.
    Step { lo: f64, hi: f64 },
}

/// Generator `j ↦ b_j` of a cellwise-constant observable `Σ b_j 1_{I_j}`.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceRule {
    /// `b_j = 1` on even cells.
    Even,
    /// `b_j = 1` on odd cells.
    Odd,
    /// `b_j = pattern[j mod len]`.
    Pattern(Vec<f64>),
    /// `{b_{2k}, b_{2k+1}} = {0, 1}`, ordered by the Thue–Morse sequence: not periodic, but
    /// with a periodic Cesàro limit.
    ThueMorsePairs,
    /// `b_j = 1` for `lo ≤ j ≤ hi`.
    Cells { lo: i64, hi: i64 },
}

/// Window family over which infinite-volume averages are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Unions of consecutive cells `I_k ∪ … ∪ I_ℓ`.
    CellUnions,
    /// Centered intervals `[−r, r]`.
    CenteredWindows,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Constant(Complex64),
    /// `e^{iβx} b(x mod a)`, so that `F(x + a) = e^{iaβ} F(x)`.
    Quasiperiodic { beta: f64, period: f64, base: Base },
    CellSequence { partition: Partition, rule: SequenceRule },
    /// `Θ(x) = 1` for `x ≥ 0`, else 0.
    Heaviside,
    Indicator { lo: f64, hi: f64 },
    Combination(Vec<(Complex64, Observable)>),
    /// `(1/k) Σ_{j<k} F(x + j a)`.
    Cesaro { inner: Box<Observable>, period: f64, k: usize },
}

fn thue_morse(k: i64) -> u32 {
    let n = if k >= 0 { k as u64 } else { !(k as u64) };
    n.count_ones() & 1
}

impl SequenceRule {
    pub fn value(&self, j: i64) -> f64 {
        match self {
            SequenceRule::Even => (j.rem_euclid(2) == 0) as u8 as f64,
            SequenceRule::Odd => (j.rem_euclid(2) == 1) as u8 as f64,
            SequenceRule::Pattern(p) => p[j.rem_euclid(p.len() as i64) as usize],
            SequenceRule::ThueMorsePairs => {
                let t = thue_morse(j.div_euclid(2)) as f64;
                if j.rem_euclid(2) == 0 {
                    t
                } else {
                    1.0 - t
                }
            }
            SequenceRule::Cells { lo, hi } => (*lo <= j && j <= *hi) as u8 as f64,
        }
    }

    fn sup(&self) -> f64 {
        match self {
            SequenceRule::Pattern(p) => p.iter().fold(0.0, |m, v| m.max(v.abs())),
            _ => 1.0,
        }
    }

    fn period(&self) -> Option<i64> {
        match self {
            SequenceRule::Even | SequenceRule::Odd => Some(2),
            SequenceRule::Pattern(p) => Some(p.len() as i64),
            SequenceRule::ThueMorsePairs | SequenceRule::Cells { .. } => None,
        }
    }
}

/// `∫_u^v e^{iβx} dx`.
pub fn exp_integral(beta: f64, u: f64, v: f64) -> Complex64 {
    if beta == 0.0 {
        return Complex64::new(v - u, 0.0);
    }
    let theta = beta * (v - u);
    let half = (0.5 * theta).sin();
    // e^{iθ} − 1 without cancellation
    let em1 = Complex64::new(-2.0 * half * half, theta.sin());
    Complex64::from_polar(1.0, beta * u) * em1 / Complex64::new(0.0, beta)
}

fn overlap(a: f64, b: f64, u: f64, v: f64) -> (f64, f64) {
    (a.max(u), b.min(v))
}

fn is_multiple_of_two_pi(x: f64) -> bool {
    let r = x / std::f64::consts::TAU;
    (r - r.round()).abs() < 1e-9
}

impl Observable {
    /// `E_γ(x) = e^{iγx}`.
    pub fn wave(gamma: f64) -> Self {
        Observable::Quasiperiodic { beta: gamma, period: 1.0, base: Base::One }
    }

    pub fn constant(c: f64) -> Self {
        Observable::Constant(Complex64::new(c, 0.0))
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::Quasiperiodic { beta, period, base } => {
                let b = match base {
                    Base::One => 1.0,
                    Base::Cosine { harmonic } => {
                        (std::f64::consts::TAU * *harmonic as f64 * x / period).cos()
                    }
                    Base::Step { lo, hi } => {
                        let f = x.rem_euclid(*period) / period;
                        (*lo <= f && f < *hi) as u8 as f64
                    }
                };
                Complex64::from_polar(b, beta * x)
            }
            Observable::CellSequence { partition, rule } => {
                Complex64::new(rule.value(partition.cell_of(x)), 0.0)
            }
            Observable::Heaviside => Complex64::new((x >= 0.0) as u8 as f64, 0.0),
            Observable::Indicator { lo, hi } => Complex64::new((*lo <= x && x < *hi) as u8 as f64, 0.0),
            Observable::Combination(terms) => terms.iter().map(|(c, f)| c * f.eval(x)).sum(),
            Observable::Cesaro { inner, period, k } => {
                (0..*k).map(|j| inner.eval(x + j as f64 * period)).sum::<Complex64>() / *k as f64
            }
        }
    }

    /// `∫_u^v F dx` in closed form.
    pub fn integrate(&self, u: f64, v: f64) -> Complex64 {
        if v <= u {
            return Complex64::new(0.0, 0.0);
        }
        match self {
            Observable::Constant(c) => c * (v - u),
            Observable::Quasiperiodic { beta, period, base } => match base {
                Base::One => exp_integral(*beta, u, v),
                Base::Cosine { harmonic } => {
                    let kappa = std::f64::consts::TAU * *harmonic as f64 / period;
                    0.5 * (exp_integral(beta + kappa, u, v) + exp_integral(beta - kappa, u, v))
                }
                Base::Step { lo, hi } => {
                    let (m0, m1) = ((u / period).floor() as i64 - 1, (v / period).ceil() as i64);
                    (m0..=m1)
                        .map(|m| {
                            let base = m as f64 * period;
                            let (a, b) = overlap(base + lo * period, base + hi * period, u, v);
                            if b > a {
                                exp_integral(*beta, a, b)
                            } else {
                                Complex64::new(0.0, 0.0)
                            }
                        })
                        .sum()
                }
            },
            Observable::CellSequence { partition, rule } => {
                let (mut j0, mut j1) = (partition.cell_of(u), partition.cell_of(v));
                if let SequenceRule::Cells { lo, hi } = rule {
                    j0 = j0.max(*lo);
                    j1 = j1.min(*hi);
                }
                let mut s = 0.0;
                for j in j0..=j1 {
                    let b = rule.value(j);
                    if b != 0.0 {
                        let (a, c) = overlap(partition.left(j), partition.right(j), u, v);
                        if c > a {
                            s += b * (c - a);
                        }
                    }
                }
                Complex64::new(s, 0.0)
            }
            Observable::Heaviside => Complex64::new((v - u.max(0.0)).max(0.0), 0.0),
            Observable::Indicator { lo, hi } => {
                let (a, b) = overlap(*lo, *hi, u, v);
                Complex64::new((b - a).max(0.0), 0.0)
            }
            Observable::Combination(terms) => terms.iter().map(|(c, f)| c * f.integrate(u, v)).sum(),
            Observable::Cesaro { inner, period, k } => {
                (0..*k)
                    .map(|j| inner.integrate(u + j as f64 * period, v + j as f64 * period))
                    .sum::<Complex64>()
                    / *k as f64
            }
        }
    }

    /// Upper bound on `‖F‖∞` (exact for every variant except combinations).
    pub fn sup_norm(&self) -> f64 {
        match self {
            Observable::Constant(c) => c.norm(),
            Observable::Quasiperiodic { .. } => 1.0,
            Observable::CellSequence { rule, .. } => rule.sup(),
            Observable::Heaviside | Observable::Indicator { .. } => 1.0,
            Observable::Combination(terms) => terms.iter().map(|(c, f)| c.norm() * f.sup_norm()).sum(),
            Observable::Cesaro { inner, .. } => inner.sup_norm(),
        }
    }

    /// `max |F|` over `count` equispaced points of `[lo, hi]`.
    pub fn sampled_sup(&self, lo: f64, hi: f64, count: usize) -> f64 {
        (0..count)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / count as f64)
            .map(|x| self.eval(x).norm())
            .fold(0.0, f64::max)
    }

    /// Whether `F` is constant on every cell of `partition`.
    pub fn is_cellwise(&self, partition: &Partition) -> bool {
        match self {
            Observable::Constant(_) | Observable::Heaviside => {
                partition.cell_of(0.0) == 0 && partition.left(0) == 0.0
            }
            Observable::CellSequence { partition: p, .. } => p == partition,
            Observable::Combination(terms) => terms.iter().all(|(_, f)| f.is_cellwise(partition)),
            _ => false,
        }
    }

    /// Infinite-volume average over `family`, when it exists.
    pub fn ave(&self, family: Family) -> Result<Complex64> {
        match self {
            Observable::Constant(c) => Ok(*c),
            Observable::Quasiperiodic { beta, period, .. } => {
                if is_multiple_of_two_pi(beta * period) {
                    Ok(self.integrate(0.0, *period) / *period)
                } else {
                    Ok(Complex64::new(0.0, 0.0))
                }
            }
            Observable::CellSequence { partition, rule } => match rule {
                SequenceRule::Cells { .. } => Ok(Complex64::new(0.0, 0.0)),
                SequenceRule::ThueMorsePairs => {
                    if partition.cells_per_period() <= 2 {
                        Ok(Complex64::new(0.5, 0.0))
                    } else {
                        Err(Error::AveUnavailable(
                            "pair sequence on a partition with more than two cells per period".into(),
                        ))
                    }
                }
                _ => {
                    let q = rule.period().expect("periodic rule");
                    let n = num_integer::lcm(q, partition.cells_per_period() as i64);
                    let (mut num, mut den) = (0.0, 0.0);
                    for j in 0..n {
                        num += rule.value(j) * partition.len(j);
                        den += partition.len(j);
                    }
                    Ok(Complex64::new(num / den, 0.0))
                }
            },
            Observable::Heaviside => match family {
                Family::CenteredWindows => Ok(Complex64::new(0.5, 0.0)),
                Family::CellUnions => Err(Error::AveUnavailable(
                    "the Heaviside function has no uniform average over cell unions".into(),
                )),
            },
            Observable::Indicator { .. } => Ok(Complex64::new(0.0, 0.0)),
            Observable::Combination(terms) => {
                terms.iter().map(|(c, f)| f.ave(family).map(|a| c * a)).sum()
            }
            Observable::Cesaro { inner, .. } => inner.ave(family),
        }
    }
}

/// `𝒜_k F = k⁻¹ Σ_{j<k} F∘τʲ` with `τ(x) = x + a`.
pub fn cesaro_average(f: &Observable, period: f64, k: usize) -> Observable {
    Observable::Cesaro { inner: Box::new(f.clone()), period, k: k.max(1) }
}

/// `Leb(V)⁻¹ ∫_V F` for `V = [lo, hi]`.
pub fn window_average(f: &Observable, lo: f64, hi: f64) -> Result<Complex64> {
    if !(hi > lo) {
        return Err(Error::EmptyWindow { lo, hi });
    }
    Ok(f.integrate(lo, hi) / (hi - lo))
}

/// `f_j = ∫_{I_j} F` for `lo ≤ j ≤ hi`.
pub fn cell_integrals(f: &Observable, partition: &Partition, lo: i64, hi: i64) -> Vec<Complex64> {
    (lo..=hi).map(|j| f.integrate(partition.left(j), partition.right(j))).collect()
}

/// Window averages at one size.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeSweep {
    /// Window length `Leb(V)`.
    pub size: f64,
    pub mean: Complex64,
    /// Max over window placements of `|Leb_V(F) − reference|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveEstimate {
    pub family: Family,
    pub sizes: Vec<SizeSweep>,
    /// Mean window average at the largest size.
    pub estimate: Complex64,
    /// Value deviations are measured against: the closed-form average when it exists,
    /// otherwise `estimate`.
    pub reference: Complex64,
    /// Deviation at the largest size.
    pub uniformity_residual: f64,
    /// Whether the residual is within the tolerance.
    pub uniform: bool,
}

/// Placements of a window of `M` cells, as multiples of `M` plus small cell shifts.
pub const DEFAULT_OFFSETS: [f64; 9] = [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0];

/// Sweeps window averages over sizes and placements.
///
/// For [`Family::CellUnions`] `sizes` are cell counts `M` and each window `I_k ∪ … ∪ I_{k+M−1}`
/// starts at `k = round(o·M) + s` for `o` in `offsets` and `s ∈ {0, 1, 3}`. For
/// [`Family::CenteredWindows`] `sizes` are radii `r` of `[−r, r]`.
pub fn ave_estimate(
    f: &Observable,
    family: Family,
    partition: &Partition,
    sizes: &[usize],
    offsets: &[f64],
    tol: f64,
) -> Result<AveEstimate> {
    if sizes.is_empty() {
        return Err(Error::Invalid("no window sizes".into()));
    }
    let mut raw: Vec<(f64, Vec<Complex64>)> = Vec::new();
    for &m in sizes {
        match family {
            Family::CellUnions => {
                let mut avgs = Vec::new();
                for o in offsets {
                    for s in [0, 1, 3] {
                        let k = (o * m as f64).round() as i64 + s;
                        let (lo, hi) = (partition.left(k), partition.left(k + m as i64));
                        avgs.push(window_average(f, lo, hi)?);
                    }
                }
                let len = partition.left(m as i64) - partition.left(0);
                raw.push((len, avgs));
            }
            Family::CenteredWindows => {
                let r = m as f64;
                raw.push((2.0 * r, vec![window_average(f, -r, r)?]));
            }
        }
    }
    let mean = |v: &[Complex64]| v.iter().sum::<Complex64>() / v.len() as f64;
    let estimate = mean(&raw.last().unwrap().1);
    let reference = f.ave(family).unwrap_or(estimate);
    let sizes: Vec<SizeSweep> = raw
        .iter()
        .map(|(size, avgs)| SizeSweep {
            size: *size,
            mean: mean(avgs),
            deviation: avgs.iter().map(|a| (a - reference).norm()).fold(0.0, f64::max),
        })
        .collect();
    let uniformity_residual = sizes.last().unwrap().deviation;
    Ok(AveEstimate {
        family,
        sizes,
        estimate,
        reference,
        uniformity_residual,
        uniform: uniformity_residual <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit() -> Partition {
        Partition::uniform(1.0).unwrap()
    }

    #[test]
    fn closed_form_integrals() {
        let e = Observable::wave(2.0 * PI);
        assert!(window_average(&e, 3.0, 7.0).unwrap().norm() < 1e-14);
        let gamma = 0.7;
        let f = cell_integrals(&Observable::wave(gamma), &unit(), -1, 1);
        for (i, j) in (-1..=1).enumerate() {
            let j = j as f64;
            let expect = (Complex64::from_polar(1.0, gamma * (j + 1.0))
                - Complex64::from_polar(1.0, gamma * j))
                / Complex64::new(0.0, gamma);
            assert!((f[i] - expect).norm() < 1e-14);
        }
        let theta = cell_integrals(&Observable::Heaviside, &unit(), -2, 2);
        assert_eq!(theta.iter().map(|c| c.re).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(window_average(&Observable::Heaviside, -5.0, 5.0).unwrap().re, 0.5);
        let alt = Observable::CellSequence { partition: unit(), rule: SequenceRule::Odd };
        assert_eq!(window_average(&alt, 4.0, 14.0).unwrap().re, 0.5);
        assert!(window_average(&alt, 1.0, 1.0).is_err());
    }

    #[test]
    fn step_base_integral_matches_pointwise_sum() {
        let f = Observable::Quasiperiodic {
            beta: 0.3,
            period: 1.5,
            base: Base::Step { lo: 0.2, hi: 0.7 },
        };
        let (u, v) = (-2.3, 4.1);
        let n = 200_000;
        let h = (v - u) / n as f64;
        let riemann: Complex64 = (0..n).map(|i| f.eval(u + (i as f64 + 0.5) * h) * h).sum();
        assert!((riemann - f.integrate(u, v)).norm() < 1e-4);
    }

    #[test]
    fn averages() {
        assert!(Observable::wave(1.0).ave(Family::CellUnions).unwrap().norm() == 0.0);
        assert_eq!(Observable::wave(0.0).ave(Family::CellUnions).unwrap().re, 1.0);
        assert!(Observable::Heaviside.ave(Family::CellUnions).is_err());
        assert_eq!(Observable::Heaviside.ave(Family::CenteredWindows).unwrap().re, 0.5);
        let cos = Observable::Quasiperiodic {
            beta: 2.0 * PI,
            period: 1.0,
            base: Base::Cosine { harmonic: 1 },
        };
        // e^{2πix} cos(2πx) has mean 1/2
        assert!((cos.ave(Family::CellUnions).unwrap() - Complex64::new(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn heaviside_is_not_uniform_over_cell_unions() {
        let est = ave_estimate(
            &Observable::Heaviside,
            Family::CellUnions,
            &unit(),
            &[16, 64, 256],
            &DEFAULT_OFFSETS,
            0.05,
        )
        .unwrap();
        assert!(!est.uniform);
        assert!(est.uniformity_residual > 0.4);
        let centered = ave_estimate(
            &Observable::Heaviside,
            Family::CenteredWindows,
            &unit(),
            &[16, 64, 256],
            &[0.0],
            0.05,
        )
        .unwrap();
        assert!(centered.uniform);
        assert_eq!(centered.estimate.re, 0.5);
    }

    #[test]
    fn wave_deviation_bound() {
        let gamma = 0.9;
        let est = ave_estimate(
            &Observable::wave(gamma),
            Family::CellUnions,
            &unit(),
            &[8, 32, 128, 512],
            &DEFAULT_OFFSETS,
            0.05,
        )
        .unwrap();
        for s in &est.sizes {
            assert!(s.deviation <= 2.0 / (gamma * s.size) + 1e-12);
        }
        assert!(est.uniform);
    }

    #[test]
    fn cesaro_of_wave() {
        let beta = 1.1;
        for k in [1, 5, 40] {
            let a = cesaro_average(&Observable::wave(beta), 1.0, k);
            let geo: Complex64 = (0..k).map(|j| Complex64::from_polar(1.0, beta * j as f64)).sum();
            assert!((a.sampled_sup(0.0, 1.0, 64) - geo.norm() / k as f64).abs() < 1e-12);
        }
        let periodic = Observable::wave(2.0 * PI);
        let a = cesaro_average(&periodic, 1.0, 7);
        assert!((a.eval(0.3) - periodic.eval(0.3)).norm() < 1e-12);
    }

    #[test]
    fn thue_morse_pairs() {
        let r = SequenceRule::ThueMorsePairs;
        for k in -50..50 {
            assert_eq!(r.value(2 * k) + r.value(2 * k + 1), 1.0);
        }
        let f = Observable::CellSequence { partition: unit(), rule: r };
        assert_eq!(f.ave(Family::CellUnions).unwrap().re, 0.5);
    }
}
