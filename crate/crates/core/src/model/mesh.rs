//! Uniform Q1 grid on the unit square.
//!
//! Nodes are numbered row by row, `id = j * n + i`, with `i` along x₁ and `j`
//! along x₂. The top row (x₂ = 1) is the last one, so the free dofs of a model
//! with a Dirichlet top edge are exactly the first `n (n - 1)` node ids.

use serde::{Deserialize, Serialize};

/// Gauss–Legendre rules mapped to [0, 1]: (point, weight).
pub(crate) const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

pub(crate) const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 0.277_777_777_777_777_8),
    (0.5, 0.444_444_444_444_444_4),
    (0.887_298_334_620_741_7, 0.277_777_777_777_777_8),
];

pub(crate) const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_9),
    (0.330_009_478_207_571_9, 0.326_072_577_431_273_1),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_9),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformGrid {
    /// Nodes per side.
    pub n: usize,
}

impl UniformGrid {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn n_elements_per_side(&self) -> usize {
        self.n - 1
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = (node % self.n, node / self.n);
        [i as f64 * self.h(), j as f64 * self.h()]
    }

    /// Counter-clockwise node ids of element `(ei, ej)` starting at its lower-left corner.
    pub fn element_nodes(&self, ei: usize, ej: usize) -> [usize; 4] {
        [
            self.node(ei, ej),
            self.node(ei + 1, ej),
            self.node(ei + 1, ej + 1),
            self.node(ei, ej + 1),
        ]
    }

    pub fn element_origin(&self, ei: usize, ej: usize) -> [f64; 2] {
        [ei as f64 * self.h(), ej as f64 * self.h()]
    }

    /// Index range of elements whose closure meets `[lo, hi]` along one axis.
    pub fn element_span(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let ne = self.n_elements_per_side();
        let h = self.h();
        let first = ((lo / h).floor().max(0.0) as usize).min(ne);
        let last = ((hi / h).ceil().max(0.0) as usize).min(ne);
        first..last
    }
}

/// Bilinear shape functions on the reference square [0, 1]².
pub(crate) fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

pub(crate) fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

/// `∫ ∇φ_a·∇φ_b dx` over the part `[xi0, xi1] × [eta0, eta1]` of one element.
///
/// Under the affine map of a square element the Jacobian factors cancel, so
/// the physical integral equals the reference one. The integrand is at most
/// quadratic per direction, hence the two-point rule is exact.
pub(crate) fn stiffness_block(xi: (f64, f64), eta: (f64, f64)) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    let (lx, ly) = (xi.1 - xi.0, eta.1 - eta.0);
    if lx <= 0.0 || ly <= 0.0 {
        return k;
    }
    for &(px, wx) in &GAUSS2 {
        for &(py, wy) in &GAUSS2 {
            let g = shape_grad(xi.0 + lx * px, eta.0 + ly * py);
            let w = wx * wy * lx * ly;
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
    }
    k
}

/// `∫ φ_a φ_b dx` over a full element of size `h`.
pub(crate) fn mass_block(h: f64) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for &(px, wx) in &GAUSS2 {
        for &(py, wy) in &GAUSS2 {
            let s = shape(px, py);
            let w = wx * wy * h * h;
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += w * s[a] * s[b];
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let k = stiffness_block((0.0, 1.0), (0.0, 1.0));
        for row in k {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
        assert!((k[0][0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn split_stiffness_adds_up() {
        let full = stiffness_block((0.0, 1.0), (0.0, 1.0));
        let lo = stiffness_block((0.0, 1.0), (0.0, 0.3));
        let hi = stiffness_block((0.0, 1.0), (0.3, 1.0));
        for a in 0..4 {
            for b in 0..4 {
                assert!((full[a][b] - lo[a][b] - hi[a][b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_sums_to_area() {
        let m = mass_block(0.25);
        let total: f64 = m.iter().flatten().sum();
        assert!((total - 0.0625).abs() < 1e-15);
    }
}
