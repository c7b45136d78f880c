//! Thermal block: steady heat conduction on the unit square with piecewise
//! constant conductivity, a Legendre-parameterized flux on the bottom edge,
//! zero temperature on the top edge and insulated sides.

use nalgebra::DMatrix;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use super::mesh::{mass_block, stiffness_block, UniformGrid, GAUSS3};
use super::{Coefficient, HyperParameterDomain, Model};
use crate::error::{Error, Result};

/// Legendre polynomial of degree `degree` at `t`, by Bonnet's recursion.
pub fn legendre(degree: usize, t: f64) -> f64 {
    match degree {
        0 => 1.0,
        1 => t,
        _ => {
            let (mut p0, mut p1) = (1.0, t);
            for k in 1..degree {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` belonging to one subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub subdomain: usize,
}

impl Region {
    fn area(&self) -> f64 {
        (self.x[1] - self.x[0]).max(0.0) * (self.y[1] - self.y[0]).max(0.0)
    }

    fn overlap(&self, other: &Region) -> f64 {
        let w = self.x[1].min(other.x[1]) - self.x[0].max(other.x[0]);
        let h = self.y[1].min(other.y[1]) - self.y[0].max(other.y[0]);
        w.max(0.0) * h.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// Ω₁ = (0,1)×(0,1/3) touching the inflow edge, then Ω₂, Ω₃ stacked upwards.
    HorizontalStrips,
    /// Three vertical columns, each touching the inflow edge.
    VerticalStrips,
}

/// Disjoint cover of Ω by rectangles, each tagged with a subdomain index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainLayout {
    pub n_subdomains: usize,
    pub regions: Vec<Region>,
}

impl SubdomainLayout {
    pub fn from_kind(kind: LayoutKind) -> Self {
        let third = 1.0 / 3.0;
        let cuts = [0.0, third, 2.0 * third, 1.0];
        let regions = (0..3)
            .map(|s| match kind {
                LayoutKind::HorizontalStrips => Region {
                    x: [0.0, 1.0],
                    y: [cuts[s], cuts[s + 1]],
                    subdomain: s,
                },
                LayoutKind::VerticalStrips => Region {
                    x: [cuts[s], cuts[s + 1]],
                    y: [0.0, 1.0],
                    subdomain: s,
                },
            })
            .collect();
        Self { n_subdomains: 3, regions }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("subdomain layout: {msg}")));
        for r in &self.regions {
            if r.subdomain >= self.n_subdomains {
                return bad("region refers to an unknown subdomain");
            }
            if r.x[0] < 0.0 || r.x[1] > 1.0 || r.y[0] < 0.0 || r.y[1] > 1.0 || r.area() <= 0.0 {
                return bad("regions must be nondegenerate and inside the unit square");
            }
        }
        for (i, a) in self.regions.iter().enumerate() {
            for b in &self.regions[i + 1..] {
                if a.overlap(b) > 1e-14 {
                    return bad("regions overlap");
                }
            }
        }
        let total: f64 = self.regions.iter().map(Region::area).sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad("regions do not cover the unit square");
        }
        for s in 0..self.n_subdomains {
            if !self.regions.iter().any(|r| r.subdomain == s) {
                return bad("every subdomain needs at least one region");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalBlockConfig {
    /// Nodes per side of the grid.
    pub mesh_n: usize,
    pub layout: SubdomainLayout,
    /// Subdomain whose conductivity is pinned to 1; `None` frees all of them.
    pub fixed_subdomain: Option<usize>,
    /// Loads use Legendre degrees `0..=max_legendre_degree`.
    pub max_legendre_degree: usize,
    pub hyper_lower: f64,
    pub hyper_upper: f64,
}

impl Default for ThermalBlockConfig {
    fn default() -> Self {
        Self {
            mesh_n: 65,
            layout: SubdomainLayout::from_kind(LayoutKind::HorizontalStrips),
            fixed_subdomain: Some(2),
            max_legendre_degree: 3,
            hyper_lower: 0.1,
            hyper_upper: 10.0,
        }
    }
}

/// Column-compressed pattern of the 9-point Q1 stencil on the free dofs.
fn stencil_pattern(grid: UniformGrid, n_dof: usize) -> (Vec<usize>, Vec<usize>) {
    let n = grid.n;
    let mut offsets = Vec::with_capacity(n_dof + 1);
    let mut rows = Vec::with_capacity(9 * n_dof);
    offsets.push(0);
    for col in 0..n_dof {
        let (i, j) = ((col % n) as isize, (col / n) as isize);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (ii, jj) = (i + di, j + dj);
                if ii >= 0 && ii < n as isize && jj >= 0 && ((jj * n as isize + ii) as usize) < n_dof {
                    rows.push((jj * n as isize + ii) as usize);
                }
            }
        }
        offsets.push(rows.len());
    }
    (offsets, rows)
}

fn entry_index(offsets: &[usize], rows: &[usize], row: usize, col: usize) -> usize {
    let span = &rows[offsets[col]..offsets[col + 1]];
    offsets[col] + span.binary_search(&row).expect("entry inside the stencil")
}

/// Assembles the thermal block into an affine [`Model`].
///
/// Conductivity interfaces need not align with element edges: each element's
/// stiffness is integrated exactly over its intersection with every region.
pub fn assemble_thermal_block(config: &ThermalBlockConfig) -> Result<Model> {
    if config.mesh_n < 3 {
        return Err(Error::InvalidInput(format!(
            "mesh_n = {} is too coarse, need at least 3 nodes per side",
            config.mesh_n
        )));
    }
    config.layout.validate()?;
    let n_sub = config.layout.n_subdomains;
    if let Some(fixed) = config.fixed_subdomain {
        if fixed >= n_sub {
            return Err(Error::InvalidInput("fixed subdomain index out of range".into()));
        }
    }

    let grid = UniformGrid::new(config.mesh_n);
    let n = grid.n;
    let n_dof = n * (n - 1);
    let h = grid.h();
    let (offsets, rows) = stencil_pattern(grid, n_dof);
    let nnz = rows.len();

    let mut stiffness_vals = vec![vec![0.0; nnz]; n_sub];
    let mut gram_vals = vec![0.0; nnz];
    let mass = mass_block(h);
    let full = stiffness_block((0.0, 1.0), (0.0, 1.0));

    let ne = grid.n_elements_per_side();
    for ej in 0..ne {
        for ei in 0..ne {
            let nodes = grid.element_nodes(ei, ej);
            let [x0, y0] = grid.element_origin(ei, ej);
            let to_ref = |v: f64, o: f64| ((v - o) / h).clamp(0.0, 1.0);
            let mut local = vec![[[0.0; 4]; 4]; n_sub];
            for r in &config.layout.regions {
                let xi = (to_ref(r.x[0], x0), to_ref(r.x[1], x0));
                let eta = (to_ref(r.y[0], y0), to_ref(r.y[1], y0));
                let k = stiffness_block(xi, eta);
                for a in 0..4 {
                    for b in 0..4 {
                        local[r.subdomain][a][b] += k[a][b];
                    }
                }
            }
            for a in 0..4 {
                if nodes[a] >= n_dof {
                    continue;
                }
                for b in 0..4 {
                    if nodes[b] >= n_dof {
                        continue;
                    }
                    let idx = entry_index(&offsets, &rows, nodes[a], nodes[b]);
                    for (q, vals) in stiffness_vals.iter_mut().enumerate() {
                        vals[idx] += local[q][a][b];
                    }
                    gram_vals[idx] += mass[a][b] + full[a][b];
                }
            }
        }
    }

    let to_csc = |values: Vec<f64>| {
        CscMatrix::try_from_csc_data(n_dof, n_dof, offsets.clone(), rows.clone(), values)
            .expect("valid stencil pattern")
    };
    let stiffness: Vec<_> = stiffness_vals.into_iter().map(to_csc).collect();
    let gram_x = to_csc(gram_vals);

    let n_params = config.max_legendre_degree + 1;
    let mut loads = DMatrix::zeros(n_dof, n_params);
    for ei in 0..ne {
        let (left, right) = (grid.node(ei, 0), grid.node(ei + 1, 0));
        let x0 = ei as f64 * h;
        for &(s, w) in &GAUSS3 {
            let t = 2.0 * (x0 + h * s) - 1.0;
            for deg in 0..n_params {
                let p = legendre(deg, t) * w * h;
                loads[(left, deg)] += p * (1.0 - s);
                loads[(right, deg)] += p * s;
            }
        }
    }

    let mut free = 0;
    let coefficients = (0..n_sub)
        .map(|s| {
            if config.fixed_subdomain == Some(s) {
                Coefficient::Fixed(1.0)
            } else {
                free += 1;
                Coefficient::Free(free - 1)
            }
        })
        .collect();
    if free == 0 {
        return Err(Error::InvalidInput("at least one conductivity must be free".into()));
    }
    let domain = HyperParameterDomain::uniform(free, config.hyper_lower, config.hyper_upper)?;
    let dirichlet_nodes = (n_dof..grid.n_nodes()).collect();
    Model::from_parts(grid, stiffness, coefficients, loads, gram_x, domain, dirichlet_nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn config(mesh_n: usize) -> ThermalBlockConfig {
        ThermalBlockConfig { mesh_n, ..Default::default() }
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.7), 1.0);
        assert_eq!(legendre(1, -1.0), -1.0);
        // p₃(t) = (5t³ − 3t)/2
        assert!((legendre(3, 0.5) - (5.0 * 0.125 - 3.0 * 0.5) / 2.0).abs() < 1e-15);
        assert!((legendre(3, 0.5) + 0.4375).abs() < 1e-15);
        for k in 0..6 {
            assert!((legendre(k, 1.0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn components_sum_to_laplacian() {
        let model = assemble_thermal_block(&config(3)).unwrap();
        assert_eq!(model.stiffness_components().len(), 3);
        // Laplacian on a single full layout region
        let one = ThermalBlockConfig {
            mesh_n: 3,
            layout: SubdomainLayout {
                n_subdomains: 1,
                regions: vec![Region { x: [0.0, 1.0], y: [0.0, 1.0], subdomain: 0 }],
            },
            fixed_subdomain: None,
            ..Default::default()
        };
        let lap = assemble_thermal_block(&one).unwrap();
        let sum = model.operator(&[1.0, 1.0]);
        for (a, b) in sum.values().iter().zip(lap.stiffness_components()[0].values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_reproduction() {
        let model = assemble_thermal_block(&config(9)).unwrap();
        let theta = [0.3, 7.0];
        let a = model.operator(&theta);
        let coeffs = model.coefficient_values(&theta);
        assert_eq!(coeffs, vec![0.3, 7.0, 1.0]);
        for (k, &v) in a.values().iter().enumerate() {
            let manual: f64 = model
                .stiffness_components()
                .iter()
                .zip(&coeffs)
                .map(|(aq, c)| c * aq.values()[k])
                .sum();
            assert!((v - manual).abs() <= 1e-15 * manual.abs().max(1.0));
        }
    }

    #[test]
    fn load_sums() {
        let model = assemble_thermal_block(&config(17)).unwrap();
        let b = model.loads();
        assert_eq!(b.ncols(), 4);
        assert!((b.column(0).sum() - 1.0).abs() < 1e-14);
        // odd polynomial over the symmetric edge
        assert!(b.column(1).sum().abs() < 1e-14);
        assert!(b.column(3).sum().abs() < 1e-14);
        // ∫ p₂ over [-1,1] is zero too
        assert!(b.column(2).sum().abs() < 1e-14);
    }

    #[test]
    fn rejects_coarse_mesh_and_bad_layout() {
        assert!(assemble_thermal_block(&config(2)).is_err());
        let mut c = config(9);
        c.layout.regions.pop();
        assert!(assemble_thermal_block(&c).is_err());
        let mut c = config(9);
        c.fixed_subdomain = Some(5);
        assert!(assemble_thermal_block(&c).is_err());
    }

    #[test]
    fn zero_parameter_gives_zero_state_and_linearity() {
        let model = assemble_thermal_block(&config(9)).unwrap();
        let u0 = model.solve_forward(&[2.0, 0.5], &[0.0; 4]).unwrap();
        assert_eq!(u0.coeffs.norm(), 0.0);
        let m = [0.3, -1.0, 0.2, 0.7];
        let m2: Vec<f64> = m.iter().map(|v| 2.0 * v).collect();
        let u = model.solve_forward(&[2.0, 0.5], &m).unwrap();
        let u2 = model.solve_forward(&[2.0, 0.5], &m2).unwrap();
        assert!((&u2.coeffs - &u.coeffs * 2.0).norm() <= 1e-14 * u2.coeffs.norm());
    }

    #[test]
    fn state_matrix_matches_solves() {
        let model = assemble_thermal_block(&config(9)).unwrap();
        let theta = [0.2, 3.0];
        let u = model.parameter_to_state(&theta).unwrap();
        assert_eq!(u.shape(), (model.n_dof(), 4));
        let m = [1.0, -0.5, 0.25, 2.0];
        let direct = model.solve_forward(&theta, &m).unwrap();
        let via = &u * DVector::from_column_slice(&m);
        assert!((via - direct.coeffs).norm() < 1e-12);
    }

    #[test]
    fn out_of_domain_theta_rejected() {
        let model = assemble_thermal_block(&config(5)).unwrap();
        assert!(model.solve_forward(&[0.01, 1.0], &[1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(model.solve_forward(&[1.0, 1.0], &[1.0, 0.0]).is_err());
    }
}
