//! Continuous piecewise-linear finite elements with homogeneous Dirichlet conditions.
//!
//! Degrees of freedom are the interior vertices of the mesh in increasing vertex order;
//! boundary values are eliminated. Functions living on different (compatible) meshes are
//! combined by interpolating them onto a common refinement, which is exact for P1.

use std::sync::Arc;

use crate::linalg::{cg_solve, SparseSym};
use crate::mesh::{signed_area, TriMesh};
use crate::quadrature::QuadRule;
use crate::Error;

/// Relative CG tolerance for mass-matrix solves (projections, discrete Laplacian).
pub const MASS_SOLVE_TOL: f64 = 1e-13;

/// The double-well nonlinearity `F(v) = v^3 - v`.
#[inline]
pub fn nonlinearity(v: f64) -> f64 {
    v * v * v - v
}

/// `F'(v) = 3 v^2 - 1`.
#[inline]
pub fn nonlinearity_derivative(v: f64) -> f64 {
    3.0 * v * v - 1.0
}

/// P1 space on a mesh.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<TriMesh>,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
}

impl FeSpace {
    /// Space with homogeneous Dirichlet conditions: one dof per interior vertex.
    pub fn new(mesh: Arc<TriMesh>) -> Arc<Self> {
        Self::build(mesh, false)
    }

    /// Space with one dof per vertex (no boundary elimination).
    pub fn unconstrained(mesh: Arc<TriMesh>) -> Arc<Self> {
        Self::build(mesh, true)
    }

    fn build(mesh: Arc<TriMesh>, keep_boundary: bool) -> Arc<Self> {
        let mut dof_of_vertex = vec![None; mesh.n_vertices()];
        let mut vertex_of_dof = Vec::new();
        for (v, slot) in dof_of_vertex.iter_mut().enumerate() {
            if keep_boundary || !mesh.is_boundary_vertex(v) {
                *slot = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        Arc::new(Self {
            mesh,
            dof_of_vertex,
            vertex_of_dof,
        })
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.dof_of_vertex[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    fn cell_dofs(&self, c: usize) -> [Option<usize>; 3] {
        self.mesh.cells()[c].map(|v| self.dof_of_vertex[v])
    }
}

/// A P1 function: one coefficient per dof of its space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self, Error> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::LengthMismatch {
                expected: space.n_dofs(),
                got: coeffs.len(),
            });
        }
        Ok(Self { space, coeffs })
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.n_dofs();
        Self {
            space,
            coeffs: vec![0.0; n],
        }
    }

    /// Nodal interpolant of `f` (boundary values dropped in a Dirichlet space).
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let coeffs = (0..space.n_dofs())
            .map(|d| f(space.mesh.coords()[space.vertex(d)]))
            .collect();
        Self { space, coeffs }
    }

    /// From values at every mesh vertex; values at eliminated vertices are ignored.
    pub fn from_nodal(space: Arc<FeSpace>, nodal: &[f64]) -> Self {
        let coeffs = (0..space.n_dofs())
            .map(|d| nodal[space.vertex(d)])
            .collect();
        Self { space, coeffs }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.space.mesh
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Values at every mesh vertex (zero on eliminated boundary vertices).
    pub fn nodal_values(&self) -> Vec<f64> {
        self.space
            .dof_of_vertex
            .iter()
            .map(|d| d.map_or(0.0, |d| self.coeffs[d]))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|v| v * s).collect(),
        }
    }
}

/// Barycentric coordinates of `x` in triangle `tri`.
pub fn barycentric(tri: &[[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let det = (tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
        - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1]);
    let l1 = ((x[0] - tri[0][0]) * (tri[2][1] - tri[0][1])
        - (tri[2][0] - tri[0][0]) * (x[1] - tri[0][1]))
        / det;
    let l2 = ((tri[1][0] - tri[0][0]) * (x[1] - tri[0][1])
        - (x[0] - tri[0][0]) * (tri[1][1] - tri[0][1]))
        / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Gradients of the three barycentric basis functions of `tri`.
pub fn basis_gradients(tri: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let two_a = 2.0 * signed_area(tri);
    let mut g = [[0.0; 2]; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
        *gi = [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a];
    }
    g
}

/// Local stiffness matrix `K_ij = int grad(phi_i) . grad(phi_j)`.
pub fn local_stiffness(tri: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let g = basis_gradients(tri);
    let area = signed_area(tri);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Local mass matrix `M_ij = int phi_i phi_j = |T| (1 + delta_ij) / 12`.
pub fn local_mass(tri: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = signed_area(tri);
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

/// Evaluates a P1 function given by its nodal values on cell `c` at barycentric point `l`.
#[inline]
pub fn eval_p1(mesh: &TriMesh, nodal: &[f64], c: usize, l: [f64; 3]) -> f64 {
    let v = mesh.cells()[c];
    l[0] * nodal[v[0]] + l[1] * nodal[v[1]] + l[2] * nodal[v[2]]
}

/// Constant gradient of a P1 function on cell `c`.
pub fn cell_gradient(mesh: &TriMesh, nodal: &[f64], c: usize) -> [f64; 2] {
    let g = basis_gradients(&mesh.cell_coords(c));
    let v = mesh.cells()[c];
    let mut out = [0.0; 2];
    for k in 0..3 {
        out[0] += nodal[v[k]] * g[k][0];
        out[1] += nodal[v[k]] * g[k][1];
    }
    out
}

/// Normal-derivative jump magnitude of a P1 function across each edge (zero on the boundary).
pub fn edge_jumps(mesh: &TriMesh, nodal: &[f64]) -> Vec<f64> {
    let grads: Vec<[f64; 2]> = (0..mesh.n_cells())
        .map(|c| cell_gradient(mesh, nodal, c))
        .collect();
    edge_jumps_from_gradients(mesh, &grads)
}

pub(crate) fn edge_jumps_from_gradients(mesh: &TriMesh, grads: &[[f64; 2]]) -> Vec<f64> {
    mesh.edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            if edge.boundary {
                return 0.0;
            }
            let [a, b] = edge.verts;
            let (pa, pb) = (mesh.coords()[a], mesh.coords()[b]);
            let len = mesh.edge_length(e);
            let n = [(pb[1] - pa[1]) / len, (pa[0] - pb[0]) / len];
            let (g0, g1) = (grads[edge.cells[0]], grads[edge.cells[1]]);
            ((g0[0] - g1[0]) * n[0] + (g0[1] - g1[1]) * n[1]).abs()
        })
        .collect()
}

fn assemble_local(
    space: &FeSpace,
    mut local: impl FnMut(usize, &[[f64; 2]; 3]) -> [[f64; 3]; 3],
) -> SparseSym {
    let mesh = &space.mesh;
    let mut t = Vec::with_capacity(9 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let k = local(c, &mesh.cell_coords(c));
        let dofs = space.cell_dofs(c);
        for i in 0..3 {
            let Some(di) = dofs[i] else { continue };
            for j in 0..3 {
                if let Some(dj) = dofs[j] {
                    t.push((di, dj, k[i][j]));
                }
            }
        }
    }
    SparseSym::from_triplets(space.n_dofs(), t)
}

pub fn assemble_stiffness(space: &FeSpace) -> SparseSym {
    assemble_local(space, |_, tri| local_stiffness(tri))
}

pub fn assemble_mass(space: &FeSpace) -> SparseSym {
    assemble_local(space, |_, tri| local_mass(tri))
}

/// `(M_w)_ij = int w phi_i phi_j` with `w(cell, barycentric, x)` integrated by `rule`.
pub fn assemble_weighted_mass(
    space: &FeSpace,
    weight: impl Fn(usize, [f64; 3], [f64; 2]) -> f64,
    rule: &QuadRule,
) -> SparseSym {
    assemble_local(space, |c, tri| {
        let area = signed_area(tri);
        let mut m = [[0.0; 3]; 3];
        for (x, l, w) in rule.mapped(tri) {
            let wq = w * area * weight(c, l, x);
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += wq * l[i] * l[j];
                }
            }
        }
        m
    })
}

/// Weighted mass with weight `F'(u)` for a P1 function `u` (degree-4 rule, exact).
pub fn assemble_linearized_mass(u: &FeFunction) -> SparseSym {
    let nodal = u.nodal_values();
    let mesh = u.mesh().clone();
    assemble_weighted_mass(
        u.space(),
        |c, l, _| nonlinearity_derivative(eval_p1(&mesh, &nodal, c, l)),
        &QuadRule::degree4(),
    )
}

/// Sums `f(cell, barycentric, x) * weight * area` over all cells.
pub fn integrate(
    mesh: &TriMesh,
    rule: &QuadRule,
    f: impl Fn(usize, [f64; 3], [f64; 2]) -> f64,
) -> f64 {
    (0..mesh.n_cells())
        .map(|c| {
            let tri = mesh.cell_coords(c);
            let area = signed_area(&tri);
            rule.mapped(&tri)
                .map(|(x, l, w)| w * f(c, l, x))
                .sum::<f64>()
                * area
        })
        .sum()
}

/// Exponent selector for [`norm_lp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lp {
    L2,
    L4,
    L6,
    Inf,
}

impl Lp {
    pub fn exponent(self) -> Option<i32> {
        match self {
            Lp::L2 => Some(2),
            Lp::L4 => Some(4),
            Lp::L6 => Some(6),
            Lp::Inf => None,
        }
    }
}

/// Quadrature approximation of the L_p norm of `f(cell, barycentric, x)`. For `Lp::Inf`
/// the maximum is taken over quadrature points and cell vertices.
pub fn norm_lp(
    mesh: &TriMesh,
    p: Lp,
    rule: &QuadRule,
    f: impl Fn(usize, [f64; 3], [f64; 2]) -> f64,
) -> f64 {
    match p.exponent() {
        Some(q) => integrate(mesh, rule, |c, l, x| f(c, l, x).abs().powi(q)).powf(1.0 / q as f64),
        None => {
            let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            (0..mesh.n_cells())
                .map(|c| {
                    let tri = mesh.cell_coords(c);
                    let at_quad = rule.mapped(&tri).map(|(x, l, _)| f(c, l, x).abs());
                    let at_corner = corners
                        .iter()
                        .enumerate()
                        .map(|(k, l)| f(c, *l, tri[k]).abs());
                    at_quad.chain(at_corner).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        }
    }
}

/// L_p norm of a pointwise field.
pub fn norm_lp_field(mesh: &TriMesh, p: Lp, rule: &QuadRule, f: impl Fn([f64; 2]) -> f64) -> f64 {
    norm_lp(mesh, p, rule, |_, _, x| f(x))
}

/// Load vector `b_i = int f phi_i` for the dofs of `space`, integrating over the cells of
/// `fine` (a refinement of the space's mesh) with `f(fine_cell, barycentric, x)`.
pub fn load_vector_on(
    space: &FeSpace,
    fine: &TriMesh,
    rule: &QuadRule,
    f: impl Fn(usize, [f64; 3], [f64; 2]) -> f64,
) -> Result<Vec<f64>, Error> {
    let coarse = space.mesh();
    let same = fine.same_cells(coarse);
    let anc = fine.ancestor_map(coarse)?;
    let mut b = vec![0.0; space.n_dofs()];
    for c in 0..fine.n_cells() {
        let tri = fine.cell_coords(c);
        let area = signed_area(&tri);
        let tc = anc[c];
        let ttri = coarse.cell_coords(tc);
        let dofs = space.cell_dofs(tc);
        for (x, l, w) in rule.mapped(&tri) {
            let lc = if same { l } else { barycentric(&ttri, x) };
            let fw = f(c, l, x) * w * area;
            for k in 0..3 {
                if let Some(d) = dofs[k] {
                    b[d] += fw * lc[k];
                }
            }
        }
    }
    Ok(b)
}

/// Load vector of a pointwise field on the space's own mesh.
pub fn load_vector(space: &FeSpace, rule: &QuadRule, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    load_vector_on(space, space.mesh(), rule, |_, _, x| f(x)).expect("a mesh refines itself")
}

/// L2 projection onto `target` of a pointwise field.
pub fn l2_project(
    target: &Arc<FeSpace>,
    rule: &QuadRule,
    f: impl Fn([f64; 2]) -> f64,
) -> Result<FeFunction, Error> {
    let b = load_vector(target, rule, f);
    solve_mass(target, &b)
}

fn solve_mass(target: &Arc<FeSpace>, b: &[f64]) -> Result<FeFunction, Error> {
    let m = assemble_mass(target);
    let x = cg_solve(&m, b, MASS_SOLVE_TOL, None)?;
    FeFunction::new(target.clone(), x)
}

/// Discrete Laplacian `Delta_h v = -M^{-1} A v`, so `(-Delta_h v, X) = (grad v, grad X)`.
pub fn discrete_laplacian(v: &FeFunction) -> Result<FeFunction, Error> {
    let a = assemble_stiffness(v.space());
    let rhs: Vec<f64> = a.matvec(v.coeffs()).into_iter().map(|x| -x).collect();
    solve_mass(v.space(), &rhs)
}

/// Nodal values of `f` at the vertices of `fine`, which must refine `f`'s mesh (exact for P1).
pub fn interpolate_to(f: &FeFunction, fine: &TriMesh) -> Result<Vec<f64>, Error> {
    let coarse = f.mesh();
    let nodal = f.nodal_values();
    if fine.same_cells(coarse) {
        return Ok(nodal);
    }
    let anc = fine.ancestor_map(coarse)?;
    let mut out = vec![f64::NAN; fine.n_vertices()];
    for c in 0..fine.n_cells() {
        let tc = anc[c];
        let ttri = coarse.cell_coords(tc);
        for &v in &fine.cells()[c] {
            if !out[v].is_nan() {
                continue;
            }
            out[v] = match coarse.local_vertex(fine.vertex_ids()[v]) {
                Some(cv) => nodal[cv],
                None => eval_p1(coarse, &nodal, tc, barycentric(&ttri, fine.coords()[v])),
            };
        }
    }
    Ok(out)
}

/// Moves `f` into `target`: exact nodal interpolation when the target mesh refines the
/// source mesh, otherwise interpolation onto the common refinement followed by L2
/// projection onto the target.
pub fn transfer(f: &FeFunction, target: &Arc<FeSpace>) -> Result<FeFunction, Error> {
    let src = f.mesh();
    let dst = target.mesh();
    if dst.is_refinement_of(src) {
        let nodal = interpolate_to(f, dst)?;
        return Ok(FeFunction::from_nodal(target.clone(), &nodal));
    }
    let fine = src.join(dst)?;
    let nodal = interpolate_to(f, &fine)?;
    let b = load_vector_on(target, &fine, &QuadRule::degree2(), |c, l, _| {
        eval_p1(&fine, &nodal, c, l)
    })?;
    solve_mass(target, &b)
}

/// `1/2 |grad u|^2 + (4 eps^2)^{-1} |u^2 - 1|^2` (degree-4 rule, exact for P1).
pub fn ginzburg_landau_energy(u: &FeFunction, epsilon: f64) -> f64 {
    let a = assemble_stiffness(u.space());
    let nodal = u.nodal_values();
    let mesh = u.mesh();
    let potential = integrate(mesh, &QuadRule::degree4(), |c, l, _| {
        let v = eval_p1(mesh, &nodal, c, l);
        (v * v - 1.0).powi(2)
    });
    0.5 * a.bilinear(u.coeffs(), u.coeffs()) + potential / (4.0 * epsilon * epsilon)
}
