use crate::error::{Error, Result};
use crate::maps::partition::Partition;

/// Polynomial bump `ψ(t) = 4^m (t(1−t))^m` on `[0, 1]`, zero outside, peak value 1.
///
/// For `m ≥ 3` the bump is C² on ℝ: `ψ`, `ψ'` and `ψ''` vanish at both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bump {
    power: u32,
}

impl Default for Bump {
    fn default() -> Self {
        Self { power: 3 }
    }
}

impl Bump {
    pub fn polynomial(power: u32) -> Result<Self> {
        if power < 3 {
            return Err(Error::Invalid(format!("bump power {power} < 3 is not C2")));
        }
        Ok(Self { power })
    }

    /// Parses ids of the form `poly3`, `poly4`, ….
    pub fn from_id(id: &str) -> Result<Self> {
        id.strip_prefix("poly")
            .and_then(|m| m.parse::<u32>().ok())
            .ok_or_else(|| Error::Parse(format!("unknown bump id `{id}`")))
            .and_then(Self::polynomial)
    }

    pub fn id(&self) -> String {
        format!("poly{}", self.power)
    }

    fn scale(&self) -> f64 {
        4f64.powi(self.power as i32)
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        self.scale() * (t * (1.0 - t)).powi(self.power as i32)
    }

    /// `dψ/dt`.
    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let m = self.power as i32;
        let u = t * (1.0 - t);
        self.scale() * m as f64 * u.powi(m - 1) * (1.0 - 2.0 * t)
    }

    /// `d²ψ/dt²`.
    pub fn second_derivative(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let m = self.power as i32;
        let u = t * (1.0 - t);
        let s = 1.0 - 2.0 * t;
        self.scale() * m as f64 * ((m - 1) as f64 * u.powi(m - 2) * s * s - 2.0 * u.powi(m - 1))
    }
}

/// One additive perturbation `δ·ψ` of an inverse piece; `δ` is a length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpTerm {
    pub delta: f64,
    pub bump: Bump,
}

/// Restriction of an inverse branch `φ` to one image cell `I_k`.
///
/// In the local coordinate `t = (y − a_k)/|I_k|`,
/// `φ = start + (end − start)·t + Σ δ_i ψ_i(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InversePiece {
    pub cell: i64,
    pub start: f64,
    pub end: f64,
    pub bumps: Vec<BumpTerm>,
}

const SOLVE_TOL: f64 = 1e-13;
const SOLVE_MAX_ITER: usize = 200;

impl InversePiece {
    pub fn affine(cell: i64, start: f64, end: f64) -> Self {
        Self { cell, start, end, bumps: Vec::new() }
    }

    pub fn is_affine(&self) -> bool {
        self.bumps.iter().all(|b| b.delta == 0.0)
    }

    pub fn increasing(&self) -> bool {
        self.end > self.start
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut v = self.start + (self.end - self.start) * t;
        for b in &self.bumps {
            v += b.delta * b.bump.value(t);
        }
        v
    }

    /// `dφ/dt`; divide by `|I_k|` for `φ'(y)`.
    pub fn slope_t(&self, t: f64) -> f64 {
        let mut v = self.end - self.start;
        for b in &self.bumps {
            v += b.delta * b.bump.derivative(t);
        }
        v
    }

    /// `d²φ/dt²`; divide by `|I_k|²` for `φ''(y)`.
    pub fn curvature_t(&self, t: f64) -> f64 {
        self.bumps.iter().map(|b| b.delta * b.bump.second_derivative(t)).sum()
    }

    /// Lower and upper ends of the piece's range in the domain.
    pub fn range(&self) -> (f64, f64) {
        (self.start.min(self.end), self.start.max(self.end))
    }

    /// Solves `φ(t) = x` for `t ∈ [0, 1]` (bracketed bisection refined by Newton).
    pub fn solve(&self, x: f64) -> f64 {
        let span = self.end - self.start;
        let t_lin = ((x - self.start) / span).clamp(0.0, 1.0);
        if self.is_affine() {
            return t_lin;
        }
        let sign = span.signum();
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut t = t_lin;
        for _ in 0..SOLVE_MAX_ITER {
            let r = self.value(t) - x;
            if r.abs() <= SOLVE_TOL {
                return t;
            }
            if r * sign > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let d = self.slope_t(t);
            let newton = t - r / d;
            t = if d != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON {
                return t;
            }
        }
        t
    }
}

/// A monotone piece of `T`: a subinterval `domain` of the home cell mapped bijectively
/// onto consecutive cells, described through its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub home: i64,
    pub domain: (f64, f64),
    pub pieces: Vec<InversePiece>,
}

impl Branch {
    /// First and last image cells.
    pub fn image(&self) -> (i64, i64) {
        (self.pieces[0].cell, self.pieces[self.pieces.len() - 1].cell)
    }

    pub fn image_width(&self) -> i64 {
        self.pieces.len() as i64
    }

    pub fn increasing(&self) -> bool {
        self.pieces[0].increasing()
    }

    pub fn is_affine(&self) -> bool {
        self.pieces.iter().all(InversePiece::is_affine)
    }

    pub fn piece_for(&self, cell: i64) -> Option<&InversePiece> {
        let first = self.pieces[0].cell;
        let idx = cell - first;
        if idx < 0 {
            return None;
        }
        self.pieces.get(idx as usize)
    }

    /// Piece whose range contains `x` under the right-interval convention.
    pub fn locate(&self, x: f64) -> &InversePiece {
        for p in &self.pieces {
            let (lo, hi) = p.range();
            if x >= lo && x < hi {
                return p;
            }
        }
        // x at (or rounded past) the ends of the domain
        let first = &self.pieces[0];
        let last = &self.pieces[self.pieces.len() - 1];
        let d_first = (x - first.start).abs().min((x - first.end).abs());
        let d_last = (x - last.start).abs().min((x - last.end).abs());
        if d_first <= d_last {
            first
        } else {
            last
        }
    }

    /// Copy translated by `cells` cell indices and `length` in space.
    pub fn shifted(&self, cells: i64, length: f64) -> Branch {
        Branch {
            home: self.home + cells,
            domain: (self.domain.0 + length, self.domain.1 + length),
            pieces: self
                .pieces
                .iter()
                .map(|p| InversePiece {
                    cell: p.cell + cells,
                    start: p.start + length,
                    end: p.end + length,
                    bumps: p.bumps.clone(),
                })
                .collect(),
        }
    }

    /// Affine branch from an inverse `φ₀(y) = slope·y + offset` over image cells `k1..=k2`.
    pub fn from_affine_inverse(
        partition: &Partition,
        home: i64,
        image: (i64, i64),
        slope: f64,
        offset: f64,
    ) -> Result<Branch> {
        let (k1, k2) = image;
        if k2 < k1 {
            return Err(Error::Branch { home, reason: format!("empty image range [{k1}, {k2}]") });
        }
        let pieces: Vec<InversePiece> = (k1..=k2)
            .map(|k| {
                InversePiece::affine(
                    k,
                    slope * partition.left(k) + offset,
                    slope * partition.right(k) + offset,
                )
            })
            .collect();
        let lo = pieces[0].start.min(pieces[pieces.len() - 1].end);
        let hi = pieces[0].start.max(pieces[pieces.len() - 1].end);
        Ok(Branch { home, domain: (lo, hi), pieces })
    }

    /// Structural checks: contiguous image cells, continuity, orientation,
    /// domain inside the home cell, strict monotonicity on a sample grid.
    pub fn validate(&self, partition: &Partition) -> Result<()> {
        let home = self.home;
        let fail = |reason: String| Err(Error::Branch { home, reason });
        if self.pieces.is_empty() {
            return fail("no inverse pieces".into());
        }
        let inc = self.increasing();
        let scale = partition.c2().max(1.0) * (1.0 + self.domain.0.abs().max(self.domain.1.abs()));
        let tol = 1e-12 * scale;
        for w in self.pieces.windows(2) {
            if w[1].cell != w[0].cell + 1 {
                return fail("image cells are not consecutive".into());
            }
            if (w[1].start - w[0].end).abs() > tol {
                return fail(format!("inverse is discontinuous at a_{}", w[1].cell));
            }
        }
        if self.pieces.iter().any(|p| p.increasing() != inc || p.start == p.end) {
            return fail("inverse pieces have inconsistent orientation".into());
        }
        let (first, last) = (&self.pieces[0], &self.pieces[self.pieces.len() - 1]);
        let (lo, hi) = if inc { (first.start, last.end) } else { (last.end, first.start) };
        if (lo - self.domain.0).abs() > tol || (hi - self.domain.1).abs() > tol {
            return fail("inverse does not map the image onto the domain".into());
        }
        let (a, b) = (partition.left(home), partition.right(home));
        if self.domain.0 < a - tol || self.domain.1 > b + tol || self.domain.0 >= self.domain.1 {
            return fail(format!(
                "domain [{}, {}] not inside cell [{a}, {b}]",
                self.domain.0, self.domain.1
            ));
        }
        for p in &self.pieces {
            if p.is_affine() {
                continue;
            }
            let sign = (p.end - p.start).signum();
            for i in 0..=512 {
                let t = i as f64 / 512.0;
                if p.slope_t(t) * sign <= 0.0 {
                    return Err(Error::MonotonicityLost { home });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_vanishes_at_ends() {
        let b = Bump::default();
        for t in [0.0, 1.0] {
            assert_eq!(b.value(t), 0.0);
            assert_eq!(b.derivative(t), 0.0);
            assert_eq!(b.second_derivative(t), 0.0);
        }
        assert!((b.value(0.5) - 1.0).abs() < 1e-15);
        assert!(b.value(1e-3) >= 0.0);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = Bump::polynomial(4).unwrap();
        let h = 1e-6;
        for i in 1..20 {
            let t = i as f64 / 20.0;
            let fd1 = (b.value(t + h) - b.value(t - h)) / (2.0 * h);
            let fd2 = (b.derivative(t + h) - b.derivative(t - h)) / (2.0 * h);
            assert!((fd1 - b.derivative(t)).abs() < 1e-6, "t={t}");
            assert!((fd2 - b.second_derivative(t)).abs() < 1e-5, "t={t}");
        }
    }

    #[test]
    fn bump_ids() {
        assert_eq!(Bump::from_id("poly3").unwrap(), Bump::default());
        assert!(Bump::from_id("poly2").is_err());
        assert!(Bump::from_id("gauss").is_err());
    }

    #[test]
    fn solve_inverts_perturbed_piece() {
        let p = InversePiece {
            cell: 0,
            start: 0.0,
            end: 0.5,
            bumps: vec![BumpTerm { delta: 0.02, bump: Bump::default() }],
        };
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let x = p.value(t);
            let s = p.solve(x);
            assert!((p.value(s) - x).abs() <= 1e-13);
            assert!((s - t).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_branch_covers_domain() {
        let part = Partition::uniform(1.0).unwrap();
        let b = Branch::from_affine_inverse(&part, 0, (0, 1), 0.5, 0.0).unwrap();
        assert_eq!(b.domain, (0.0, 1.0));
        b.validate(&part).unwrap();
        let dec = Branch::from_affine_inverse(&part, 0, (0, 1), -0.5, 1.0).unwrap();
        assert!(!dec.increasing());
        dec.validate(&part).unwrap();
        assert_eq!(dec.locate(1.0).cell, 0);
        assert_eq!(dec.locate(0.25).cell, 1);
    }
}
