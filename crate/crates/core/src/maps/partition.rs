use crate::error::{Error, Result};

/// Partition of the real line into cells `I_j = [a_j, a_{j+1}]`, `j ∈ ℤ`.
///
/// Breakpoints are stored for one period (`p` cells of total length `L`)
/// and extended by `a_{j+p} = a_j + L`. A uniform partition is the case `p = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    origin: f64,
    /// Offsets of the breakpoints of one period relative to `origin`; first is 0, last is `L`.
    offsets: Vec<f64>,
    uniform: bool,
}

impl Partition {
    /// Cells `[a·j, a·(j+1)]`.
    pub fn uniform(length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Partition(format!("cell length {length} must be positive")));
        }
        Ok(Self { origin: 0.0, offsets: vec![0.0, length], uniform: true })
    }

    /// Breakpoints `b_0 < b_1 < … < b_p` of one period, extended periodically with period `b_p - b_0`.
    /// Cell 0 is `[b_0, b_1]`.
    pub fn periodic(breakpoints: &[f64]) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Partition("need at least two breakpoints".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Partition("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Partition("breakpoints must be strictly increasing".into()));
        }
        let origin = breakpoints[0];
        let offsets: Vec<f64> = breakpoints.iter().map(|b| b - origin).collect();
        let uniform = offsets.len() == 2;
        Ok(Self { origin, offsets, uniform })
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Number of cells per period.
    pub fn cells_per_period(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Length of one period, the shift of the translation `τ`.
    pub fn period(&self) -> f64 {
        *self.offsets.last().unwrap()
    }

    /// Left endpoint `a_j`.
    pub fn left(&self, j: i64) -> f64 {
        let p = self.cells_per_period() as i64;
        let q = j.div_euclid(p);
        let r = j.rem_euclid(p) as usize;
        if self.uniform {
            self.origin + (j as f64) * self.offsets[1]
        } else {
            self.origin + (q as f64) * self.period() + self.offsets[r]
        }
    }

    pub fn right(&self, j: i64) -> f64 {
        self.left(j + 1)
    }

    /// `|I_j|`.
    pub fn len(&self, j: i64) -> f64 {
        let p = self.cells_per_period() as i64;
        let r = j.rem_euclid(p) as usize;
        self.offsets[r + 1] - self.offsets[r]
    }

    /// Smallest cell length `c1`.
    pub fn c1(&self) -> f64 {
        self.offsets.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Largest cell length `c2`.
    pub fn c2(&self) -> f64 {
        self.offsets.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index `j` with `a_j ≤ x < a_{j+1}` (breakpoints belong to the cell on the right).
    pub fn cell_of(&self, x: f64) -> i64 {
        let guess = if self.uniform {
            ((x - self.origin) / self.offsets[1]).floor() as i64
        } else {
            let period = self.period();
            let q = ((x - self.origin) / period).floor();
            let rel = x - self.origin - q * period;
            let r = self.offsets.partition_point(|&o| o <= rel).saturating_sub(1);
            let r = r.min(self.cells_per_period() - 1);
            (q as i64) * self.cells_per_period() as i64 + r as i64
        };
        let mut j = guess;
        while x < self.left(j) {
            j -= 1;
        }
        while x >= self.left(j + 1) {
            j += 1;
        }
        j
    }

    /// Checks `c1 ≤ a_{j+1} − a_j ≤ c2` for the declared constants, on one period
    /// (which covers the whole periodic extension).
    pub fn check_spacing(&self, c1: f64, c2: f64) -> Result<()> {
        let (lo, hi) = (self.c1(), self.c2());
        if lo < c1 || hi > c2 {
            return Err(Error::Partition(format!(
                "cell lengths span [{lo}, {hi}], outside declared [{c1}, {c2}]"
            )));
        }
        Ok(())
    }

    /// Interior sample points of cell `j`: `a_j + (i + 1/2)|I_j|/count`.
    pub fn interior_grid(&self, j: i64, count: usize) -> impl Iterator<Item = f64> + '_ {
        let (a, len) = (self.left(j), self.len(j));
        (0..count).map(move |i| a + (i as f64 + 0.5) * len / count as f64)
    }
}
