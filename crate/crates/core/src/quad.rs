//! Fixed quadrature rules.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;

/// Gauss–Legendre rule with nodes cached on `[−1, 1]`.
#[derive(Debug, Clone)]
pub struct Gauss {
    pairs: Vec<(f64, f64)>,
}

impl Gauss {
    pub fn new(order: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).unwrap());
        Self { pairs: rule.as_node_weight_pairs().to_vec() }
    }

    pub fn order(&self) -> usize {
        self.pairs.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn nodes(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.pairs.iter().map(move |&(x, w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, mut f: F) -> Complex64 {
        self.nodes(a, b).map(|(x, w)| f(x) * w).sum()
    }
}

/// Composite Simpson weight of node `i` among `m + 1` equispaced nodes (`m` even), spacing `h`.
pub fn simpson_weight(i: usize, m: usize, h: f64) -> f64 {
    let c = if i == 0 || i == m {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    };
    c * h / 3.0
}
