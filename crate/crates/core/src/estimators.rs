//! Computable a posteriori quantities: residual estimators of the elliptic
//! reconstruction error θ, slab time terms, stability coefficients, and their
//! aggregation into the conditional error bounds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fem::{
    assemble_mass, discrete_laplacian, edge_jumps, eval_p1, interpolate_to, l2_project,
    nonlinearity, FeFunction, FeSpace,
};
use crate::linalg::cg_solve;
use crate::mesh::{Rect, TriMesh};
use crate::quadrature::{GaussLegendre, QuadRule};
use crate::spectral::{principal_eigenvalue, SpectralOptions, SpectralSample};
use crate::time_stepper::{
    nonlinear_load, ModelParams, SlabFeedback, SlabObserver, SpaceField, SpaceTimeField, TimeSlab,
};
use crate::Error;

/// Number of Gauss points per slab for time integrals.
pub const TIME_GAUSS_POINTS: usize = 4;

/// Largest mesh size entering the logarithmic factor of the L∞ estimator.
pub const LOG_CLAMP: f64 = 0.5;

/// Generic constants of the estimates. Derived constants are always recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    /// Poincaré–Friedrichs constant.
    pub c_pf: f64,
    /// Gagliardo–Nirenberg–Ladyzhenskaya constant.
    pub c_tilde: f64,
    /// Scott–Zhang interpolation constant.
    pub c_sz: f64,
    /// Elliptic regularity constant.
    pub c_omega: f64,
    /// Relative inflation of the discrete eigenvalue.
    pub safety: f64,
}

impl ConstantsConfig {
    /// Defaults for a convex rectangle: `C_PF = diam/π`, all others one.
    pub fn for_domain(domain: &Rect) -> Self {
        Self {
            c_pf: domain.diameter() / std::f64::consts::PI,
            c_tilde: 1.0,
            c_sz: 1.0,
            c_omega: 1.0,
            safety: crate::spectral::DEFAULT_SAFETY,
        }
    }

    pub fn unit() -> Self {
        Self {
            c_pf: 1.0,
            c_tilde: 1.0,
            c_sz: 1.0,
            c_omega: 1.0,
            safety: crate::spectral::DEFAULT_SAFETY,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let named = [
            ("c_pf", self.c_pf),
            ("c_tilde", self.c_tilde),
            ("c_sz", self.c_sz),
            ("c_omega", self.c_omega),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.safety >= 0.0 && self.safety.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "safety must be non-negative, got {}",
                self.safety
            )));
        }
        Ok(())
    }

    pub fn c0(&self) -> f64 {
        (self.c_pf * self.c_tilde.powi(2) + 1.0) / 2.0
    }

    pub fn c1(&self) -> f64 {
        9.0 + 9.0 * self.c_pf * self.c_tilde.powi(2)
            + 6f64.powi(4) * 121.0 * self.c_pf.powi(2) * self.c_tilde.powi(4)
    }

    pub fn c2(&self) -> f64 {
        2.0 * 3f64.powi(7) * self.c_pf.powi(2) * self.c_tilde.powi(4)
    }

    pub fn c0_tilde(&self) -> f64 {
        (self.c_pf.sqrt() * self.c_tilde.powi(2) + 1.0) / 2.0
    }

    pub fn c1_tilde(&self) -> f64 {
        9.0 + 9.0 * self.c_pf.sqrt() * self.c_tilde.powi(2)
            + 6f64.powi(4) * 121.0 * self.c_pf * self.c_tilde.powi(4)
    }

    pub fn c2_tilde(&self) -> f64 {
        3f64.powi(7) * self.c_pf * self.c_tilde.powi(4)
    }

    fn spatial_scale(&self) -> f64 {
        self.c_omega * self.c_sz
    }
}

/// Space dimension selecting the two- or three-dimensional formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Dimension {
    #[default]
    Two,
    Three,
}

impl Dimension {
    pub fn value(self) -> f64 {
        match self {
            Dimension::Two => 2.0,
            Dimension::Three => 3.0,
        }
    }

    /// Power of ε on the right-hand side of the smallness condition on `η_d`.
    pub fn condition_exponent(self) -> f64 {
        match self {
            Dimension::Two => 1.5,
            Dimension::Three => 3.5,
        }
    }

    pub fn from_int(d: i64) -> Option<Self> {
        match d {
            2 => Some(Dimension::Two),
            3 => Some(Dimension::Three),
            _ => None,
        }
    }
}

/// Residual `g_h^n` of the elliptic reconstruction: a P1 part, `-ε^{-2} F(U^n)` and `f(·, t_n)`.
#[derive(Clone)]
pub struct ResidualField {
    linear: FeFunction,
    state: FeFunction,
    reaction: f64,
    forcing: SpaceTimeField,
    t: f64,
}

impl ResidualField {
    /// `g^n = (U^{n-1} - U^n)/k_n - ε^{-2} F(U^n) + f^n` for `n ≥ 1`.
    pub fn for_step(
        prev: &FeFunction,
        cur: &FeFunction,
        k: f64,
        t: f64,
        params: &ModelParams,
    ) -> Result<Self, Error> {
        let mesh = Arc::new(cur.mesh().join(prev.mesh())?);
        let a = interpolate_to(prev, &mesh)?;
        let b = interpolate_to(cur, &mesh)?;
        let nodal: Vec<f64> = a.iter().zip(&b).map(|(p, c)| (p - c) / k).collect();
        Ok(Self {
            linear: FeFunction::from_nodal(FeSpace::unconstrained(mesh), &nodal),
            state: cur.clone(),
            reaction: -params.reaction_coefficient(),
            forcing: params.forcing.clone(),
            t,
        })
    }

    /// `g^0 = -Δ_h U^0 - ε^{-2}(F(U^0) - P F(U^0)) - P f^0 + f^0`.
    pub fn for_initial(u0: &FeFunction, params: &ModelParams) -> Result<Self, Error> {
        let space = u0.space();
        let r = params.reaction_coefficient();
        let lap = discrete_laplacian(u0)?;
        let pf = {
            let m = assemble_mass(space);
            cg_solve(&m, &nonlinear_load(u0), crate::fem::MASS_SOLVE_TOL, None)?
        };
        let forcing = params.forcing.clone();
        let pforce = l2_project(space, &QuadRule::degree6(), |x| forcing(x, 0.0))?;
        let coeffs: Vec<f64> = (0..space.n_dofs())
            .map(|i| -lap.coeffs()[i] + r * pf[i] - pforce.coeffs()[i])
            .collect();
        let nodal = FeFunction::new(space.clone(), coeffs)?.nodal_values();
        Ok(Self {
            linear: FeFunction::from_nodal(FeSpace::unconstrained(u0.mesh().clone()), &nodal),
            state: u0.clone(),
            reaction: -r,
            forcing: params.forcing.clone(),
            t: 0.0,
        })
    }

    /// The load `f` of an elliptic problem `-Δu = f` solved by `u`.
    pub fn load(u: &FeFunction, f: SpaceField) -> Self {
        let mesh = u.mesh().clone();
        Self {
            linear: FeFunction::zero(FeSpace::unconstrained(mesh)),
            state: u.clone(),
            reaction: 0.0,
            forcing: Arc::new(move |x, _| f(x)),
            t: 0.0,
        }
    }

    /// Mesh on which the P1 part lives.
    pub fn mesh(&self) -> &Arc<TriMesh> {
        self.linear.mesh()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Evaluation data on `mesh`, which must refine [`Self::mesh`].
    pub fn sample(&self, mesh: &Arc<TriMesh>) -> Result<SampledResidual, Error> {
        Ok(SampledResidual {
            mesh: mesh.clone(),
            linear: interpolate_to(&self.linear, mesh)?,
            state: interpolate_to(&self.state, mesh)?,
            reaction: self.reaction,
            forcing: self.forcing.clone(),
            t: self.t,
        })
    }
}

/// A [`ResidualField`] resolved on a particular refinement.
pub struct SampledResidual {
    mesh: Arc<TriMesh>,
    linear: Vec<f64>,
    state: Vec<f64>,
    reaction: f64,
    forcing: SpaceTimeField,
    t: f64,
}

impl SampledResidual {
    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    #[inline]
    pub fn eval(&self, c: usize, l: [f64; 3], x: [f64; 2]) -> f64 {
        let lin = eval_p1(&self.mesh, &self.linear, c, l);
        let cubic = if self.reaction != 0.0 {
            self.reaction * nonlinearity(eval_p1(&self.mesh, &self.state, c, l))
        } else {
            0.0
        };
        lin + cubic + (self.forcing)(x, self.t)
    }
}

/// `(ln(1/h))^2` with `h` clamped to at most [`LOG_CLAMP`].
pub fn log_factor(h: f64) -> f64 {
    (1.0 / h.min(LOG_CLAMP)).ln().powi(2)
}

/// Residual estimators of θ at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialEstimates {
    /// `E(·; L_p)` for `p = 2, 4, 6`.
    pub lp: [f64; 3],
    pub inf: f64,
    /// Energy-norm residual estimator.
    pub h1: f64,
    /// Per-cell contributions to `E(·; L_2)^2` (element term plus half of each edge term).
    pub indicators: Vec<f64>,
}

/// Unweighted per-cell and per-edge residual data.
struct ResidualSums {
    h: Vec<f64>,
    /// `∫_τ |g|^p` for `p = 2, 4, 6`.
    elem: [Vec<f64>; 3],
    elem_sup: Vec<f64>,
    jumps: Vec<f64>,
    edge_h: Vec<f64>,
    edge_len: Vec<f64>,
}

fn residual_sums(u: &FeFunction, g: &ResidualField) -> Result<ResidualSums, Error> {
    let mesh = u.mesh();
    let fine = g.mesh().clone();
    let sampled = g.sample(&fine)?;
    let anc = fine.ancestor_map(mesh)?;
    let (h, _) = mesh.mesh_size();
    let nc = mesh.n_cells();
    let mut elem = [vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]];
    let mut elem_sup = vec![0.0f64; nc];
    let rule = QuadRule::degree10();
    let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for c in 0..fine.n_cells() {
        let tri = fine.cell_coords(c);
        let area = fine.cell_area(c);
        let t = anc[c];
        let mut s = [0.0; 3];
        let mut sup = 0.0f64;
        for (x, l, w) in rule.mapped(&tri) {
            let g2 = sampled.eval(c, l, x).powi(2);
            s[0] += w * g2;
            s[1] += w * g2 * g2;
            s[2] += w * g2 * g2 * g2;
            sup = sup.max(g2);
        }
        for (k, l) in corners.iter().enumerate() {
            sup = sup.max(sampled.eval(c, *l, tri[k]).powi(2));
        }
        for q in 0..3 {
            elem[q][t] += s[q] * area;
        }
        elem_sup[t] = elem_sup[t].max(sup.sqrt());
    }
    let jumps = edge_jumps(mesh, &u.nodal_values());
    let edge_h = mesh
        .edges()
        .iter()
        .map(|e| {
            if e.boundary {
                h[e.cells[0]]
            } else {
                h[e.cells[0]].max(h[e.cells[1]])
            }
        })
        .collect();
    let edge_len = (0..mesh.edges().len())
        .map(|e| mesh.edge_length(e))
        .collect();
    Ok(ResidualSums {
        h,
        elem,
        elem_sup,
        jumps,
        edge_h,
        edge_len,
    })
}

impl ResidualSums {
    fn lp_sum(&self, q: usize) -> f64 {
        let p = [2, 4, 6][q];
        let elem: f64 = self
            .h
            .iter()
            .zip(&self.elem[q])
            .map(|(h, e)| h.powi(2 * p) * e)
            .sum();
        let edges: f64 = self
            .jumps
            .iter()
            .zip(&self.edge_h)
            .zip(&self.edge_len)
            .map(|((j, h), len)| h.powi(p + 1) * j.powi(p) * len)
            .sum();
        elem + edges
    }
}

/// All residual estimators of θ^n = ω^n - U^n for the state `u` with residual `g`.
pub fn spatial_estimates(
    u: &FeFunction,
    g: &ResidualField,
    c: &ConstantsConfig,
) -> Result<SpatialEstimates, Error> {
    let sums = residual_sums(u, g)?;
    let mesh = u.mesh();
    let scale = c.spatial_scale();
    let lp = [0, 1, 2].map(|q| scale * sums.lp_sum(q).powf(1.0 / [2.0, 4.0, 6.0][q]));

    let h_min = sums.h.iter().copied().fold(f64::INFINITY, f64::min);
    let elem_inf = sums
        .h
        .iter()
        .zip(&sums.elem_sup)
        .map(|(h, s)| h * h * s)
        .fold(0.0, f64::max);
    let edge_inf = sums
        .jumps
        .iter()
        .zip(&sums.edge_h)
        .map(|(j, h)| h * j)
        .fold(0.0, f64::max);
    let inf = scale * log_factor(h_min) * (elem_inf + edge_inf);

    let h1_elem: f64 = sums
        .h
        .iter()
        .zip(&sums.elem[0])
        .map(|(h, e)| h * h * e)
        .sum();
    let h1_edge: f64 = sums
        .jumps
        .iter()
        .zip(&sums.edge_h)
        .zip(&sums.edge_len)
        .map(|((j, h), len)| h * j * j * len)
        .sum();
    let h1 = c.c_sz * (h1_elem + h1_edge).sqrt();

    let mut indicators: Vec<f64> = sums
        .h
        .iter()
        .zip(&sums.elem[0])
        .map(|(h, e)| h.powi(4) * e)
        .collect();
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.boundary {
            continue;
        }
        let term = sums.edge_h[e].powi(3) * sums.jumps[e].powi(2) * sums.edge_len[e];
        indicators[edge.cells[0]] += 0.5 * term;
        indicators[edge.cells[1]] += 0.5 * term;
    }
    Ok(SpatialEstimates {
        lp,
        inf,
        h1,
        indicators,
    })
}

/// `E(U, g; L_p)` for `p ∈ {2, 4, 6}` together with per-cell contributions to its p-th power.
pub fn spatial_estimator(
    u: &FeFunction,
    g: &ResidualField,
    p: u32,
    c: &ConstantsConfig,
) -> Result<(f64, Vec<f64>), Error> {
    let q = match p {
        2 => 0,
        4 => 1,
        6 => 2,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "estimator exponent must be 2, 4 or 6, got {p}"
            )))
        }
    };
    let sums = residual_sums(u, g)?;
    let pi = p as i32;
    let mut ind: Vec<f64> = sums
        .h
        .iter()
        .zip(&sums.elem[q])
        .map(|(h, e)| h.powi(2 * pi) * e)
        .collect();
    for (e, edge) in u.mesh().edges().iter().enumerate() {
        if !edge.boundary {
            let term = sums.edge_h[e].powi(pi + 1) * sums.jumps[e].powi(pi) * sums.edge_len[e];
            ind[edge.cells[0]] += 0.5 * term;
            ind[edge.cells[1]] += 0.5 * term;
        }
    }
    Ok((c.spatial_scale() * sums.lp_sum(q).powf(1.0 / p as f64), ind))
}

/// Pointwise estimator `C ℓ_h (max_τ h²‖g‖_{L∞(τ)} + max_e h |⟦∇U⟧|)`.
pub fn spatial_estimator_inf(
    u: &FeFunction,
    g: &ResidualField,
    c: &ConstantsConfig,
) -> Result<f64, Error> {
    Ok(spatial_estimates(u, g, c)?.inf)
}

/// `Ê(U_{h,t}, g_{h,t}; L_p)` for `p = 2, 4` on the common refinement of both meshes.
pub fn mesh_change_estimator(
    prev: &FeFunction,
    cur: &FeFunction,
    g_prev: &ResidualField,
    g_cur: &ResidualField,
    k: f64,
    c: &ConstantsConfig,
) -> Result<[f64; 2], Error> {
    let join = Arc::new(cur.mesh().join(prev.mesh())?);
    let fine = Arc::new(TriMesh::join_all([
        &*join,
        &**g_prev.mesh(),
        &**g_cur.mesh(),
    ])?);
    let (h_cur, _) = cur.mesh().mesh_size();
    let (h_prev, _) = prev.mesh().mesh_size();
    let anc_cur = join.ancestor_map(cur.mesh())?;
    let anc_prev = join.ancestor_map(prev.mesh())?;
    let h_hat: Vec<f64> = (0..join.n_cells())
        .map(|t| h_cur[anc_cur[t]].max(h_prev[anc_prev[t]]))
        .collect();

    let a = g_prev.sample(&fine)?;
    let b = g_cur.sample(&fine)?;
    let anc = fine.ancestor_map(&join)?;
    let rule = QuadRule::degree10();
    let mut sums = [0.0; 2];
    for cell in 0..fine.n_cells() {
        let tri = fine.cell_coords(cell);
        let area = fine.cell_area(cell);
        let h = h_hat[anc[cell]];
        let mut s = [0.0; 2];
        for (x, l, w) in rule.mapped(&tri) {
            let d2 = ((b.eval(cell, l, x) - a.eval(cell, l, x)) / k).powi(2);
            s[0] += w * d2;
            s[1] += w * d2 * d2;
        }
        sums[0] += h.powi(4) * s[0] * area;
        sums[1] += h.powi(8) * s[1] * area;
    }

    let up = interpolate_to(prev, &join)?;
    let uc = interpolate_to(cur, &join)?;
    let du: Vec<f64> = uc.iter().zip(&up).map(|(c, p)| (c - p) / k).collect();
    let jumps = edge_jumps(&join, &du);
    for (e, edge) in join.edges().iter().enumerate() {
        if edge.boundary {
            continue;
        }
        let h = h_hat[edge.cells[0]].max(h_hat[edge.cells[1]]);
        let len = join.edge_length(e);
        sums[0] += h.powi(3) * jumps[e].powi(2) * len;
        sums[1] += h.powi(5) * jumps[e].powi(4) * len;
    }
    let scale = c.spatial_scale();
    Ok([scale * sums[0].sqrt(), scale * sums[1].powf(0.25)])
}

/// Affine-in-time bound `ℓ_{n-1}(t) a + ℓ_n(t) b` on `‖θ(t)‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaBound {
    pub a: f64,
    pub b: f64,
}

impl ThetaBound {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    /// Value at the relative position `s ∈ [0, 1]` of the slab.
    pub fn at(&self, s: f64) -> f64 {
        (1.0 - s) * self.a + s * self.b
    }

    /// `∫_{J_n} (ℓ_{n-1} a + ℓ_n b)^q dt = k Σ_j a^{q-j} b^j / (q + 1)`.
    pub fn power_integral(&self, q: i32, k: f64) -> f64 {
        k * (0..=q)
            .map(|j| self.a.powi(q - j) * self.b.powi(j))
            .sum::<f64>()
            / (q + 1) as f64
    }
}

/// `theta_norm_bound`: the affine bound from endpoint estimators.
pub fn theta_norm_bound(e_prev: f64, e_cur: f64) -> ThetaBound {
    ThetaBound::new(e_prev, e_cur)
}

/// `ℒ_1 = ‖∂U^n - ∂U^{n-1}‖² + ε^{-4}‖F(U^n) - F(U^{n-1})‖² + ‖f^n - f^{n-1}‖²`, with
/// `∂U^{n-1}` built from `prevprev` and step `k_prev` (pass `prevprev = prev` for n = 1).
/// `reaction` is the coefficient of `F` in the scheme (`ε^{-2}` or zero).
#[allow(clippy::too_many_arguments)]
pub fn time_term_l1(
    prevprev: &FeFunction,
    prev: &FeFunction,
    cur: &FeFunction,
    k_prev: f64,
    k: f64,
    t_prev: f64,
    t: f64,
    reaction: f64,
    forcing: &SpaceTimeField,
) -> Result<f64, Error> {
    let mesh = TriMesh::join_all([&**cur.mesh(), &**prev.mesh(), &**prevprev.mesh()])?;
    let u2 = interpolate_to(prevprev, &mesh)?;
    let u1 = interpolate_to(prev, &mesh)?;
    let u0 = interpolate_to(cur, &mesh)?;
    let diff: Vec<f64> = (0..mesh.n_vertices())
        .map(|v| (u0[v] - u1[v]) / k - (u1[v] - u2[v]) / k_prev)
        .collect();
    let r2 = reaction * reaction;
    Ok(crate::fem::integrate(
        &mesh,
        &QuadRule::degree10(),
        |c, l, x| {
            let d = eval_p1(&mesh, &diff, c, l);
            let fd = if r2 != 0.0 {
                nonlinearity(eval_p1(&mesh, &u0, c, l)) - nonlinearity(eval_p1(&mesh, &u1, c, l))
            } else {
                0.0
            };
            let ff = forcing(x, t) - forcing(x, t_prev);
            d * d + r2 * fd * fd + ff * ff
        },
    ))
}

/// `∫_{J_n} ℒ_2 dt = ∫ ‖f^n - f(t)‖² + ε^{-4}‖F(U_h(t)) - F(U^n)‖² dt` by `n_gauss`-point
/// Gauss–Legendre quadrature in time.
pub fn time_integral_l2(
    prev: &FeFunction,
    cur: &FeFunction,
    t_prev: f64,
    t: f64,
    reaction: f64,
    forcing: &SpaceTimeField,
    n_gauss: usize,
) -> Result<f64, Error> {
    let mesh = cur.mesh().join(prev.mesh())?;
    let u1 = interpolate_to(prev, &mesh)?;
    let u0 = interpolate_to(cur, &mesh)?;
    let r2 = reaction * reaction;
    let rule = QuadRule::degree10();
    let gauss = GaussLegendre::new(n_gauss);
    Ok(gauss.integrate(t_prev, t, |s| {
        let theta = (s - t_prev) / (t - t_prev);
        crate::fem::integrate(&mesh, &rule, |c, l, x| {
            let a = eval_p1(&mesh, &u1, c, l);
            let b = eval_p1(&mesh, &u0, c, l);
            let uh = (1.0 - theta) * a + theta * b;
            let fd = if r2 != 0.0 {
                nonlinearity(uh) - nonlinearity(b)
            } else {
                0.0
            };
            let ff = forcing(x, t) - forcing(x, s);
            ff * ff + r2 * fd * fd
        })
    }))
}

/// `sup |F'(v)|` for `v ∈ [lo, hi]`.
pub fn fprime_sup_on_interval(lo: f64, hi: f64) -> f64 {
    let ends = (3.0 * lo * lo - 1.0).abs().max((3.0 * hi * hi - 1.0).abs());
    if lo <= 0.0 && hi >= 0.0 {
        ends.max(1.0)
    } else {
        ends
    }
}

/// `‖F'(U_h)‖_{L∞}` over a slab: per cell of the common refinement the values of `U_h`
/// lie in the hull of the six endpoint nodal values.
pub fn fprime_sup(prev: &FeFunction, cur: &FeFunction) -> Result<f64, Error> {
    let mesh = cur.mesh().join(prev.mesh())?;
    let a = interpolate_to(prev, &mesh)?;
    let b = interpolate_to(cur, &mesh)?;
    Ok(mesh
        .cells()
        .iter()
        .map(|cell| {
            let vals = cell.iter().flat_map(|&v| [a[v], b[v]]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            fprime_sup_on_interval(lo, hi)
        })
        .fold(0.0, f64::max))
}

/// Sup-norms over a slab feeding the stability coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SupNorms {
    pub theta: f64,
    pub u: f64,
    pub fprime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Stability {
    /// `max{16 β, γ}`.
    pub fn b(&self) -> f64 {
        (16.0 * self.beta).max(self.gamma)
    }
}

/// `α, β, γ` (`d = 2`) or `α, β̃, γ̃` (`d = 3`).
pub fn stability_coefficients(
    s: &SupNorms,
    eps: f64,
    c: &ConstantsConfig,
    d: Dimension,
) -> Stability {
    let (th, u, fp) = (s.theta, s.u, s.fprime);
    let ct4 = c.c_tilde.powi(4);
    let alpha = fp * fp + u * u + 7.0;
    match d {
        Dimension::Two => {
            let beta = c.c2() * eps.powi(4) / 16.0 * (th.powi(4) + u.powi(4))
                + 2.0 * eps * eps * u.powi(4)
                + 2.0 * c.c_pf.powi(2) * ct4 * fp * fp
                + 11.0 * eps.powi(6) * (fp.powi(4) + u.powi(4) + 6.0);
            let gamma = 2.0 * ct4 * (c.c_pf.powi(2) * fp * fp + 36.0 * (th * th + u * u));
            Stability { alpha, beta, gamma }
        }
        Dimension::Three => {
            let beta = c.c2_tilde() * eps.powi(8) / 16.0 * (th.powi(4) + u.powi(4))
                + 2.0 * eps.powi(6) * u.powi(4)
                + 2.0 * c.c_pf * ct4 * eps * eps * fp.powi(4)
                + 11.0 * eps.powi(10) * (fp.powi(4) + u.powi(4) + 6.0);
            let gamma = 324.0 * c.c_pf * ct4 * (th.powi(4) + u.powi(4));
            Stability { alpha, beta, gamma }
        }
    }
}

/// `∫_{J_n} Θ_1 dt` with `‖θ_t‖_{L_p} ≤ Ê_p` constant on the slab.
pub fn theta1_integral(k: f64, mesh_change: [f64; 2], c: &ConstantsConfig) -> f64 {
    k * (0.5 * mesh_change[0].powi(2) + 2.75 * c.c_pf.powi(4) * mesh_change[1].powi(4))
}

/// `∫_{J_n} Θ_2 dt` (`Θ̃_2` for `d = 3`) from the affine θ bounds in `L_2, L_4, L_6`.
pub fn theta2_integral(
    k: f64,
    u_inf: f64,
    bounds: [ThetaBound; 3],
    eps: f64,
    c: &ConstantsConfig,
    d: Dimension,
) -> f64 {
    let (c0, c1) = match d {
        Dimension::Two => (c.c0(), c.c1()),
        Dimension::Three => (c.c0_tilde(), c.c1_tilde()),
    };
    ((c0 + 396.0 * u_inf * u_inf) * bounds[0].power_integral(2, k)
        + 0.5 * c1 * bounds[1].power_integral(4, k)
        + c0 * bounds[2].power_integral(6, k))
        / eps.powi(4)
}

/// `k · max{4, α + 2Λ(1 - ε²) + d}`.
pub fn d_contribution(k: f64, alpha: f64, lambda_bound: f64, eps: f64, d: Dimension) -> f64 {
    k * (alpha + 2.0 * lambda_bound * (1.0 - eps * eps) + d.value()).max(4.0)
}

/// `E_d = exp(Σ D)`; the flag is set when the exponential overflows.
pub fn exponential_factor(d_contribs: &[f64]) -> (f64, bool) {
    let e = d_contribs.iter().sum::<f64>().exp();
    (e, !e.is_finite())
}

/// `(Σ contributions)^{1/4}`.
pub fn eta_d(initial: (f64, f64), contributions: &[f64]) -> f64 {
    (initial.0 + initial.1 + contributions.iter().sum::<f64>())
        .max(0.0)
        .powf(0.25)
}

/// Bounds on `½‖ρ(0)‖²` and `(C_PF²/2)‖ρ(0)‖⁴_{L_4}`.
pub fn initial_condition_terms(
    proj_l2: f64,
    proj_l4: f64,
    theta0: [f64; 2],
    c: &ConstantsConfig,
) -> (f64, f64) {
    (
        proj_l2.powi(2) + theta0[0].powi(2),
        4.0 * c.c_pf.powi(2) * (proj_l4.powi(4) + theta0[1].powi(4)),
    )
}

/// `‖u_0 - U^0‖_{L_2}` and `‖u_0 - U^0‖_{L_4}` (degree-10 rule).
pub fn initial_projection_errors(u0: &FeFunction, params: &ModelParams) -> (f64, f64) {
    let mesh = u0.mesh();
    let nodal = u0.nodal_values();
    let rule = QuadRule::degree10();
    let (mut s2, mut s4) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let tri = mesh.cell_coords(c);
        let area = mesh.cell_area(c);
        for (x, l, w) in rule.mapped(&tri) {
            let e2 = ((params.u0)(x) - eval_p1(mesh, &nodal, c, l)).powi(2);
            s2 += w * area * e2;
            s4 += w * area * e2 * e2;
        }
    }
    (s2.sqrt(), s4.powf(0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// `η_d ≤ (16 (T + 1) B̄ E_d²)^{-1/4} ε^q` with `q = Dimension::condition_exponent`.
pub fn condition_check(
    eta: f64,
    b_bar: f64,
    e_d: f64,
    t_final: f64,
    eps: f64,
    d: Dimension,
) -> Condition {
    let denom = 16.0 * (t_final + 1.0) * b_bar * e_d * e_d;
    let rhs = if denom.is_finite() {
        denom.powf(-0.25) * eps.powf(d.condition_exponent())
    } else {
        0.0
    };
    Condition {
        lhs: eta,
        rhs,
        satisfied: eta <= rhs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalBounds {
    pub l4l4: f64,
    pub l2h1: f64,
    pub linf_l2: f64,
}

/// θ-norm terms entering the final bounds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThetaNorms {
    pub l4l4: f64,
    pub l2h1: f64,
    pub linf_l2: f64,
}

fn times_or_zero(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// `‖u - U_h‖_{L_4(L_4)} ≤ 2η((d-1)E)^{1/4} + ‖θ‖`, `‖u - U_h‖_{L_2(H^1)} ≤ 2√2 ε^{-1} η² E^{1/2} + ‖θ‖`,
/// `‖u - U_h‖_{L∞(L_2)} ≤ 2√2 η² E^{1/2} + ‖θ‖`.
pub fn final_bounds(eta: f64, e_d: f64, eps: f64, d: Dimension, theta: &ThetaNorms) -> FinalBounds {
    let s8 = 8f64.sqrt();
    FinalBounds {
        l4l4: times_or_zero(2.0 * eta, ((d.value() - 1.0) * e_d).powf(0.25)) + theta.l4l4,
        l2h1: times_or_zero(s8 * eta * eta / eps, e_d.sqrt()) + theta.l2h1,
        linf_l2: times_or_zero(s8 * eta * eta, e_d.sqrt()) + theta.linf_l2,
    }
}

/// Per-slab measurements from which [`SlabEstimates`] is assembled.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlabInputs {
    pub n: usize,
    pub t_prev: f64,
    pub t: f64,
    pub l1: f64,
    pub int_l2: f64,
    /// `E(·; L_p)`, `p = 2, 4, 6`, at `t_{n-1}` and `t_n`.
    pub e_prev: [f64; 3],
    pub e_cur: [f64; 3],
    pub e_inf_prev: f64,
    pub e_inf_cur: f64,
    pub h1_prev: f64,
    pub h1_cur: f64,
    /// `Ê(·; L_2)`, `Ê(·; L_4)`.
    pub mesh_change: [f64; 2],
    pub u_inf: f64,
    pub fprime_inf: f64,
    pub lambda_cur: f64,
    pub lambda_bound_prev: f64,
    pub lambda_bound_cur: f64,
    pub newton_residual: f64,
}

impl SlabInputs {
    pub fn k(&self) -> f64 {
        self.t - self.t_prev
    }
}

/// Estimator contributions of one slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabEstimates {
    pub inputs: SlabInputs,
    pub int_theta1: f64,
    pub int_theta2: f64,
    pub alpha_sup: f64,
    pub beta_sup: f64,
    pub gamma_sup: f64,
    pub d_contrib: f64,
    pub eta4_contrib: f64,
}

impl SlabEstimates {
    pub fn assemble(inputs: SlabInputs, eps: f64, c: &ConstantsConfig, d: Dimension) -> Self {
        let k = inputs.k();
        let sup = SupNorms {
            theta: inputs.e_inf_prev.max(inputs.e_inf_cur),
            u: inputs.u_inf,
            fprime: inputs.fprime_inf,
        };
        let stab = stability_coefficients(&sup, eps, c, d);
        let bounds = [0, 1, 2].map(|q| ThetaBound::new(inputs.e_prev[q], inputs.e_cur[q]));
        let int_theta1 = theta1_integral(k, inputs.mesh_change, c);
        let int_theta2 = theta2_integral(k, inputs.u_inf, bounds, eps, c, d);
        let c0 = match d {
            Dimension::Two => c.c0(),
            Dimension::Three => c.c0_tilde(),
        };
        let eta4_contrib = int_theta1 + int_theta2 + c0 * (k * inputs.l1 + inputs.int_l2);
        let lambda_sup = inputs.lambda_bound_prev.max(inputs.lambda_bound_cur);
        let d_contrib = d_contribution(k, stab.alpha, lambda_sup, eps, d);
        Self {
            inputs,
            int_theta1,
            int_theta2,
            alpha_sup: stab.alpha,
            beta_sup: stab.beta,
            gamma_sup: stab.gamma,
            d_contrib,
            eta4_contrib,
        }
    }

    pub fn b_sup(&self) -> f64 {
        (16.0 * self.beta_sup).max(self.gamma_sup)
    }
}

/// Aggregated estimator output of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dimension: Dimension,
    pub epsilon: f64,
    pub final_time: f64,
    pub constants: ConstantsConfig,
    pub initial_terms: (f64, f64),
    pub initial_e2: f64,
    pub slabs: Vec<SlabEstimates>,
    pub eta: f64,
    pub e_d: f64,
    pub vacuous: bool,
    pub b_bar: f64,
    pub condition: Condition,
    pub theta: ThetaNorms,
    pub bounds: FinalBounds,
    pub lambda_integral: f64,
    pub fitted_m: f64,
}

impl RunReport {
    pub fn aggregate(
        eps: f64,
        final_time: f64,
        constants: ConstantsConfig,
        d: Dimension,
        initial_terms: (f64, f64),
        initial_e2: f64,
        slabs: Vec<SlabEstimates>,
    ) -> Self {
        let contribs: Vec<f64> = slabs.iter().map(|s| s.eta4_contrib).collect();
        let eta = eta_d(initial_terms, &contribs);
        let dc: Vec<f64> = slabs.iter().map(|s| s.d_contrib).collect();
        let (e_d, vacuous) = exponential_factor(&dc);
        let b_bar = slabs.iter().map(SlabEstimates::b_sup).fold(0.0, f64::max);
        let condition = condition_check(eta, b_bar, e_d, final_time, eps, d);
        let theta = ThetaNorms {
            l4l4: slabs
                .iter()
                .map(|s| {
                    ThetaBound::new(s.inputs.e_prev[1], s.inputs.e_cur[1])
                        .power_integral(4, s.inputs.k())
                })
                .sum::<f64>()
                .powf(0.25),
            l2h1: slabs
                .iter()
                .map(|s| {
                    ThetaBound::new(s.inputs.h1_prev, s.inputs.h1_cur)
                        .power_integral(2, s.inputs.k())
                })
                .sum::<f64>()
                .sqrt(),
            linf_l2: slabs
                .iter()
                .map(|s| s.inputs.e_cur[0])
                .fold(initial_e2, f64::max),
        };
        let bounds = final_bounds(eta, e_d, eps, d, &theta);
        let lambda_integral: f64 = slabs
            .iter()
            .map(|s| {
                s.inputs.k()
                    * s.inputs
                        .lambda_bound_prev
                        .max(s.inputs.lambda_bound_cur)
                        .max(0.0)
            })
            .sum();
        Self {
            dimension: d,
            epsilon: eps,
            final_time,
            constants,
            initial_terms,
            initial_e2,
            slabs,
            eta,
            e_d,
            vacuous,
            b_bar,
            condition,
            theta,
            bounds,
            lambda_integral,
            fitted_m: crate::spectral::fitted_exponent(lambda_integral, eps),
        }
    }

    /// Cumulative `η⁴` after each slab.
    pub fn eta4_cumulative(&self) -> Vec<f64> {
        let mut acc = self.initial_terms.0 + self.initial_terms.1;
        self.slabs
            .iter()
            .map(|s| {
                acc += s.eta4_contrib;
                acc
            })
            .collect()
    }

    /// Cumulative `∫ D` after each slab.
    pub fn d_cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.slabs
            .iter()
            .map(|s| {
                acc += s.d_contrib;
                acc
            })
            .collect()
    }
}

/// Options of the estimator pipeline.
#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    pub constants: ConstantsConfig,
    pub dimension: Dimension,
    pub spectral: SpectralOptions,
}

impl EstimatorOptions {
    pub fn new(constants: ConstantsConfig) -> Self {
        Self {
            spectral: SpectralOptions {
                safety: constants.safety,
                ..Default::default()
            },
            constants,
            dimension: Dimension::Two,
        }
    }
}

/// Everything remembered about one time level.
#[derive(Clone)]
struct Level {
    t: f64,
    k: f64,
    u: FeFunction,
    g: ResidualField,
    spatial: SpatialEstimates,
    spectral: SpectralSample,
    eigvec: FeFunction,
}

/// Sequential estimator: fed the states `U^0, U^1, …` in order.
pub struct Estimator {
    params: ModelParams,
    opts: EstimatorOptions,
    initial_terms: (f64, f64),
    before_last: Option<FeFunction>,
    last: Option<Level>,
    initial_e2: f64,
    slabs: Vec<SlabEstimates>,
}

impl Estimator {
    pub fn new(params: ModelParams, opts: EstimatorOptions) -> Result<Self, Error> {
        opts.constants.validate()?;
        Ok(Self {
            params,
            opts,
            initial_terms: (0.0, 0.0),
            before_last: None,
            last: None,
            initial_e2: 0.0,
            slabs: Vec::new(),
        })
    }

    pub fn slabs(&self) -> &[SlabEstimates] {
        &self.slabs
    }

    fn level(
        &self,
        t: f64,
        k: f64,
        u: &FeFunction,
        g: ResidualField,
        warm: Option<&FeFunction>,
    ) -> Result<Level, Error> {
        let spatial = spatial_estimates(u, &g, &self.opts.constants)?;
        let (spectral, eigvec) =
            principal_eigenvalue(u, t, self.params.epsilon, &self.opts.spectral, warm)?;
        Ok(Level {
            t,
            k,
            u: u.clone(),
            g,
            spatial,
            spectral,
            eigvec,
        })
    }

    pub fn push_initial(&mut self, u0: &FeFunction) -> Result<(), Error> {
        let g = ResidualField::for_initial(u0, &self.params)?;
        let level = self.level(0.0, 0.0, u0, g, None)?;
        let (l2, l4) = initial_projection_errors(u0, &self.params);
        self.initial_terms = initial_condition_terms(
            l2,
            l4,
            [level.spatial.lp[0], level.spatial.lp[1]],
            &self.opts.constants,
        );
        self.initial_e2 = level.spatial.lp[0];
        self.before_last = None;
        self.last = Some(level);
        self.slabs.clear();
        Ok(())
    }

    /// Adds `U^n` at time `t` and returns the estimates of slab `n` with its per-cell indicators.
    pub fn push_state(
        &mut self,
        t: f64,
        u: &FeFunction,
        newton_residual: f64,
    ) -> Result<(&SlabEstimates, Vec<f64>), Error> {
        let last = self
            .last
            .take()
            .ok_or_else(|| Error::InvalidParameter("initial state must be pushed first".into()))?;
        let k = t - last.t;
        if !(k > 0.0) {
            self.last = Some(last);
            return Err(Error::InvalidParameter(format!(
                "time levels must increase, got step {k}"
            )));
        }
        let params = &self.params;
        let c = &self.opts.constants;
        let d = self.opts.dimension;
        let r = params.reaction_coefficient();

        let g = ResidualField::for_step(&last.u, u, k, t, params)?;
        let level = self.level(t, k, u, g, Some(&last.eigvec))?;
        let prevprev = self.before_last.as_ref().unwrap_or(&last.u);
        let k_prev = if last.k > 0.0 { last.k } else { k };
        let l1 = time_term_l1(
            prevprev,
            &last.u,
            u,
            k_prev,
            k,
            last.t,
            t,
            r,
            &params.forcing,
        )?;
        let int_l2 =
            time_integral_l2(&last.u, u, last.t, t, r, &params.forcing, TIME_GAUSS_POINTS)?;
        let mesh_change = mesh_change_estimator(&last.u, u, &last.g, &level.g, k, c)?;
        let inputs = SlabInputs {
            n: self.slabs.len() + 1,
            t_prev: last.t,
            t,
            l1,
            int_l2,
            e_prev: last.spatial.lp,
            e_cur: level.spatial.lp,
            e_inf_prev: last.spatial.inf,
            e_inf_cur: level.spatial.inf,
            h1_prev: last.spatial.h1,
            h1_cur: level.spatial.h1,
            mesh_change,
            u_inf: last.u.max_abs().max(u.max_abs()),
            fprime_inf: fprime_sup(&last.u, u)?,
            lambda_cur: level.spectral.lambda,
            lambda_bound_prev: last.spectral.lambda_bound,
            lambda_bound_cur: level.spectral.lambda_bound,
            newton_residual,
        };
        let indicators = level.spatial.indicators.clone();
        self.slabs
            .push(SlabEstimates::assemble(inputs, params.epsilon, c, d));
        self.before_last = Some(last.u);
        self.last = Some(level);
        Ok((self.slabs.last().expect("just pushed"), indicators))
    }

    pub fn report(&self) -> RunReport {
        RunReport::aggregate(
            self.params.epsilon,
            self.params.final_time,
            self.opts.constants,
            self.opts.dimension,
            self.initial_terms,
            self.initial_e2,
            self.slabs.clone(),
        )
    }
}

impl SlabObserver for Estimator {
    fn initial(&mut self, u0: &FeFunction) -> Result<(), Error> {
        self.push_initial(u0)
    }

    fn slab(&mut self, slab: &TimeSlab) -> Result<SlabFeedback, Error> {
        let (est, indicators) = self.push_state(slab.t, &slab.cur, slab.newton_residual)?;
        let time_term = est.inputs.k() * est.inputs.l1;
        Ok(SlabFeedback {
            indicators: Some(indicators),
            time_term: Some(time_term),
        })
    }
}
