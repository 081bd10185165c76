//! Backward Euler / P1 scheme for `u_t - Δu + ε^{-2} F(u) = f` with damped Newton solves.

use std::fmt;
use std::sync::Arc;

use crate::fem::{
    assemble_linearized_mass, assemble_mass, assemble_stiffness, eval_p1, interpolate_to,
    l2_project, load_vector, load_vector_on, nonlinearity, transfer, FeFunction, FeSpace,
};
use crate::linalg::{cg_solve, norm2, SolverError, SparseSym, CG_TOL};
use crate::mesh::{doerfler_mark, Rect, TriMesh};
use crate::quadrature::QuadRule;
use crate::Error;

pub type SpaceField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type SpaceTimeField = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Which reaction term enters the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reaction {
    #[default]
    AllenCahn,
    /// Drops `ε^{-2} F(u)`, leaving the heat equation.
    Disabled,
}

#[derive(Clone)]
pub struct ModelParams {
    pub epsilon: f64,
    pub final_time: f64,
    pub domain: Rect,
    pub u0: SpaceField,
    pub forcing: SpaceTimeField,
    pub reaction: Reaction,
}

impl fmt::Debug for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelParams")
            .field("epsilon", &self.epsilon)
            .field("final_time", &self.final_time)
            .field("domain", &self.domain)
            .field("reaction", &self.reaction)
            .finish_non_exhaustive()
    }
}

impl ModelParams {
    pub fn new(
        epsilon: f64,
        final_time: f64,
        domain: Rect,
        u0: SpaceField,
        forcing: SpaceTimeField,
    ) -> Result<Self, Error> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        Ok(Self {
            epsilon,
            final_time,
            domain,
            u0,
            forcing,
            reaction: Reaction::AllenCahn,
        })
    }

    pub fn with_reaction(mut self, reaction: Reaction) -> Self {
        self.reaction = reaction;
        self
    }

    /// Coefficient in front of `F(u)` in the scheme.
    pub fn reaction_coefficient(&self) -> f64 {
        match self.reaction {
            Reaction::AllenCahn => 1.0 / (self.epsilon * self.epsilon),
            Reaction::Disabled => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Relative reduction of the residual norm.
    pub tol: f64,
    /// Residual norms below this are accepted outright.
    pub abs_tol: f64,
    pub maxit: usize,
    /// Smallest line-search step before giving up.
    pub damping_floor: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            abs_tol: 1e-14,
            maxit: 50,
            damping_floor: 1.0 / 1024.0,
        }
    }
}

/// Residual and Jacobian oracles for [`newton_solve`].
pub trait NewtonProblem {
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    /// Solves `J(x) dx = r`.
    fn solve_jacobian(&self, x: &[f64], r: &[f64]) -> Result<Vec<f64>, SolverError>;
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
    /// Residual norm after every accepted step.
    pub history: Vec<f64>,
}

/// Damped Newton iteration with a halving line search on the residual norm.
pub fn newton_solve(
    problem: &impl NewtonProblem,
    x0: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, SolverError> {
    let mut x = x0;
    let mut r = problem.residual(&x);
    let r0 = norm2(&r);
    let mut rnorm = r0;
    let target = (opts.tol * r0).max(opts.abs_tol);
    let mut history = Vec::new();
    for it in 0..=opts.maxit {
        if rnorm <= target {
            return Ok(NewtonOutcome {
                x,
                iterations: it,
                initial_residual: r0,
                residual: rnorm,
                history,
            });
        }
        if it == opts.maxit {
            break;
        }
        let dx = problem.solve_jacobian(&x, &r)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi - step * di).collect();
            let rt = problem.residual(&trial);
            let nt = norm2(&rt);
            if nt < rnorm {
                x = trial;
                r = rt;
                rnorm = nt;
                break;
            }
            step *= 0.5;
            if step < opts.damping_floor {
                return Err(SolverError::DampingFloor { residual: rnorm });
            }
        }
        history.push(rnorm);
    }
    Err(SolverError::NewtonNotConverged {
        iterations: opts.maxit,
        residual: rnorm,
    })
}

/// `N_i = ∫ F(u) φ_i` (degree-4 rule, exact for P1 `u`).
pub fn nonlinear_load(u: &FeFunction) -> Vec<f64> {
    let nodal = u.nodal_values();
    let mesh = u.mesh().clone();
    load_vector_on(u.space(), &mesh, &QuadRule::degree4(), |c, l, _| {
        nonlinearity(eval_p1(&mesh, &nodal, c, l))
    })
    .expect("a mesh refines itself")
}

/// Load `(f(·, t), φ_i)` with the degree-6 rule.
pub fn forcing_load(space: &FeSpace, forcing: &SpaceTimeField, t: f64) -> Vec<f64> {
    load_vector(space, &QuadRule::degree6(), |x| forcing(x, t))
}

/// Nonlinear system of one backward Euler step on a fixed space.
pub struct StepSystem {
    space: Arc<FeSpace>,
    mass: SparseSym,
    stiffness: SparseSym,
    inv_k: f64,
    reaction: f64,
    /// `(U^{n-1}, φ_i)/k + (f^n, φ_i)`.
    rhs: Vec<f64>,
}

impl StepSystem {
    pub fn new(
        prev: &FeFunction,
        space: &Arc<FeSpace>,
        k: f64,
        t: f64,
        params: &ModelParams,
    ) -> Result<Self, Error> {
        let mass = assemble_mass(space);
        let stiffness = assemble_stiffness(space);
        let prev_mesh = prev.mesh().clone();
        let cur_mesh = space.mesh();
        let prev_load = if cur_mesh.same_cells(&prev_mesh) {
            mass.matvec(&transfer(prev, space)?.into_coeffs())
        } else {
            let fine = cur_mesh.join(&prev_mesh)?;
            let nodal = interpolate_to(prev, &fine)?;
            load_vector_on(space, &fine, &QuadRule::degree2(), |c, l, _| {
                eval_p1(&fine, &nodal, c, l)
            })?
        };
        let f_load = forcing_load(space, &params.forcing, t);
        let rhs = prev_load
            .iter()
            .zip(&f_load)
            .map(|(p, f)| p / k + f)
            .collect();
        Ok(Self {
            space: space.clone(),
            mass,
            stiffness,
            inv_k: 1.0 / k,
            reaction: params.reaction_coefficient(),
            rhs,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    fn function(&self, x: &[f64]) -> FeFunction {
        FeFunction::new(self.space.clone(), x.to_vec()).expect("iterate has the space dimension")
    }
}

impl NewtonProblem for StepSystem {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mx = self.mass.matvec(x);
        let ax = self.stiffness.matvec(x);
        let nl = if self.reaction != 0.0 {
            nonlinear_load(&self.function(x))
        } else {
            vec![0.0; x.len()]
        };
        (0..x.len())
            .map(|i| mx[i] * self.inv_k + ax[i] + self.reaction * nl[i] - self.rhs[i])
            .collect()
    }

    fn solve_jacobian(&self, x: &[f64], r: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut jac = self.mass.lin_comb(self.inv_k, &self.stiffness, 1.0);
        if self.reaction != 0.0 {
            let mw = assemble_linearized_mass(&self.function(x));
            jac = jac.lin_comb(1.0, &mw, self.reaction);
        }
        cg_solve(&jac, r, CG_TOL, None)
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: FeFunction,
    pub newton_iterations: usize,
    pub residual: f64,
}

/// One backward Euler step from `prev` onto `space`; the Newton initial guess is `prev`
/// transferred to `space`.
pub fn backward_euler_step(
    prev: &FeFunction,
    space: &Arc<FeSpace>,
    k: f64,
    t: f64,
    params: &ModelParams,
    opts: &NewtonOptions,
) -> Result<StepOutcome, Error> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {k}"
        )));
    }
    let system = StepSystem::new(prev, space, k, t, params)?;
    let guess = transfer(prev, space)?.into_coeffs();
    let out = newton_solve(&system, guess, opts)?;
    Ok(StepOutcome {
        state: FeFunction::new(space.clone(), out.x)?,
        newton_iterations: out.iterations,
        residual: out.residual,
    })
}

/// `U^0`: L2 projection of `u0` (degree-6 rule).
pub fn initial_state(params: &ModelParams, space: &Arc<FeSpace>) -> Result<FeFunction, Error> {
    l2_project(space, &QuadRule::degree6(), |x| (params.u0)(x))
}

/// Time-step and mesh policy for [`run_simulation`].
#[derive(Debug, Clone)]
pub struct Discretization {
    pub initial_mesh: Arc<TriMesh>,
    pub time_step: f64,
    pub newton: NewtonOptions,
    pub adapt: AdaptPolicy,
}

#[derive(Debug, Clone, Default)]
pub struct AdaptPolicy {
    /// Dörfler fraction for spatial refinement between steps.
    pub marking_fraction: Option<f64>,
    /// Cells are not refined beyond this many bisections from the macro mesh.
    pub max_generation: u32,
    /// Tolerance for the slab time term `k_n L_1`; halve above it, double below a tenth.
    pub time_tolerance: Option<f64>,
    pub min_time_step: f64,
    pub max_time_step: f64,
}

/// A completed step: `U^{n-1}` on the previous space and `U^n` on the current one.
#[derive(Debug, Clone)]
pub struct TimeSlab {
    pub n: usize,
    pub t_prev: f64,
    pub t: f64,
    pub prev: FeFunction,
    pub cur: FeFunction,
    pub newton_iterations: usize,
    pub newton_residual: f64,
}

impl TimeSlab {
    pub fn k(&self) -> f64 {
        self.t - self.t_prev
    }
}

/// What an observer returns after each slab to steer adaptivity.
#[derive(Debug, Clone, Default)]
pub struct SlabFeedback {
    /// One indicator per cell of the current mesh.
    pub indicators: Option<Vec<f64>>,
    /// `k_n L_1` for the step-size heuristic.
    pub time_term: Option<f64>,
}

/// Receives the initial state and every completed slab.
pub trait SlabObserver {
    fn initial(&mut self, u0: &FeFunction) -> Result<(), Error>;
    fn slab(&mut self, slab: &TimeSlab) -> Result<SlabFeedback, Error>;
}

impl SlabObserver for () {
    fn initial(&mut self, _: &FeFunction) -> Result<(), Error> {
        Ok(())
    }

    fn slab(&mut self, _: &TimeSlab) -> Result<SlabFeedback, Error> {
        Ok(SlabFeedback::default())
    }
}

/// Recorded states `(t_n, U^n)` for `n = 0..=N`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FeFunction>,
    pub newton_iterations: Vec<usize>,
    pub newton_residuals: Vec<f64>,
}

impl Trajectory {
    pub fn n_slabs(&self) -> usize {
        self.states.len() - 1
    }
}

/// Advances the scheme to the final time, calling `observer` after each step.
pub fn run_simulation(
    params: &ModelParams,
    disc: &Discretization,
    observer: &mut impl SlabObserver,
) -> Result<Trajectory, Error> {
    if !(disc.time_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {}",
            disc.time_step
        )));
    }
    let t_end = params.final_time;
    let space0 = FeSpace::new(disc.initial_mesh.clone());
    let u0 = initial_state(params, &space0)?;
    observer.initial(&u0)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![u0],
        newton_iterations: vec![0],
        newton_residuals: vec![0.0],
    };
    let mut space = space0;
    let mut k = disc.time_step;
    let mut t = 0.0;
    let mut n = 0;
    // Relative slack so that accumulated round-off does not create a sliver slab.
    while t < t_end * (1.0 - 1e-12) {
        n += 1;
        let remaining = t_end - t;
        let k_n = if k >= remaining * (1.0 - 1e-9) {
            remaining
        } else {
            k
        };
        let t_new = if k_n == remaining { t_end } else { t + k_n };
        let prev = traj.states.last().expect("initial state recorded");
        let step = backward_euler_step(prev, &space, k_n, t_new, params, &disc.newton)?;
        let slab = TimeSlab {
            n,
            t_prev: t,
            t: t_new,
            prev: prev.clone(),
            cur: step.state.clone(),
            newton_iterations: step.newton_iterations,
            newton_residual: step.residual,
        };
        log::debug!(
            "step {n}: t = {t_new:.6}, k = {k_n:.3e}, newton {} its, residual {:.2e}",
            step.newton_iterations,
            step.residual
        );
        let feedback = observer.slab(&slab)?;
        traj.times.push(t_new);
        traj.states.push(step.state);
        traj.newton_iterations.push(step.newton_iterations);
        traj.newton_residuals.push(step.residual);
        t = t_new;

        if let (Some(theta), Some(ind)) =
            (disc.adapt.marking_fraction, feedback.indicators.as_ref())
        {
            let mesh = space.mesh();
            let gens = mesh.generations();
            let marked: Vec<usize> = doerfler_mark(ind, theta)
                .into_iter()
                .filter(|&c| gens[c] < disc.adapt.max_generation)
                .collect();
            if !marked.is_empty() {
                space = FeSpace::new(Arc::new(mesh.bisect(&marked)?));
            }
        }
        if let (Some(tol), Some(term)) = (disc.adapt.time_tolerance, feedback.time_term) {
            if term > tol {
                k = (0.5 * k).max(disc.adapt.min_time_step);
            } else if term < 0.1 * tol {
                k = (2.0 * k).min(disc.adapt.max_time_step);
            }
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{ginzburg_landau_energy, norm_lp_field, Lp};
    use std::f64::consts::PI;

    fn params(
        eps: f64,
        t: f64,
        u0: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    ) -> ModelParams {
        ModelParams::new(eps, t, Rect::UNIT, Arc::new(u0), Arc::new(|_, _| 0.0)).unwrap()
    }

    fn disc(n: usize, k: f64) -> Discretization {
        Discretization {
            initial_mesh: Arc::new(TriMesh::unit_square(n)),
            time_step: k,
            newton: NewtonOptions::default(),
            adapt: AdaptPolicy::default(),
        }
    }

    struct Scalar {
        inv_k: f64,
        b: f64,
    }

    impl NewtonProblem for Scalar {
        fn residual(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0].powi(3) + self.inv_k * x[0] - self.b]
        }

        fn solve_jacobian(&self, x: &[f64], r: &[f64]) -> Result<Vec<f64>, SolverError> {
            Ok(vec![r[0] / (3.0 * x[0] * x[0] + self.inv_k)])
        }
    }

    #[test]
    fn scalar_newton_converges_quickly() {
        let p = Scalar {
            inv_k: 10.0,
            b: 3.0,
        };
        let opts = NewtonOptions {
            tol: 1e-12,
            abs_tol: 0.0,
            ..Default::default()
        };
        let out = newton_solve(&p, vec![0.0], &opts).unwrap();
        assert!(out.iterations <= 8);
        let x = out.x[0];
        assert!((x.powi(3) + 10.0 * x - 3.0).abs() < 1e-12 * 3.0);
        assert!(out.history.windows(2).all(|w| w[1] < w[0]));
        // Starting at the solution only performs the convergence check.
        let exact = Scalar {
            inv_k: 10.0,
            b: 11.0,
        };
        let again = newton_solve(&exact, vec![1.0], &NewtonOptions::default()).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let p = params(0.1, 0.01, |_| 0.0);
        let traj = run_simulation(&p, &disc(4, 0.005), &mut ()).unwrap();
        assert_eq!(traj.n_slabs(), 2);
        assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn slab_count_is_ceil_of_t_over_k() {
        let p = params(0.5, 0.1, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        assert_eq!(
            run_simulation(&p, &disc(4, 0.03), &mut ())
                .unwrap()
                .n_slabs(),
            4
        );
        assert_eq!(
            run_simulation(&p, &disc(4, 0.025), &mut ())
                .unwrap()
                .n_slabs(),
            4
        );
        let traj = run_simulation(&p, &disc(4, 0.03), &mut ()).unwrap();
        assert_eq!(*traj.times.last().unwrap(), 0.1);
    }

    #[test]
    fn single_newton_step_from_zero_matches_linear_solve() {
        let eps = 0.5;
        let k = 0.01;
        let c = 2.0;
        let p = ModelParams::new(
            eps,
            k,
            Rect::UNIT,
            Arc::new(|_| 0.0),
            Arc::new(move |_, _| c),
        )
        .unwrap();
        let space = FeSpace::new(Arc::new(TriMesh::unit_square(6)));
        let zero = FeFunction::zero(space.clone());
        let system = StepSystem::new(&zero, &space, k, k, &p).unwrap();
        let r = system.residual(zero.coeffs());
        let dx = system.solve_jacobian(zero.coeffs(), &r).unwrap();
        let newton_x: Vec<f64> = dx.iter().map(|d| -d).collect();

        let m = assemble_mass(&space);
        let a = assemble_stiffness(&space);
        let jac = m
            .lin_comb(1.0 / k, &a, 1.0)
            .lin_comb(1.0, &m, -1.0 / (eps * eps));
        let load = load_vector(&space, &QuadRule::degree6(), |_| c);
        let direct = cg_solve(&jac, &load, 1e-12, None).unwrap();
        for (a, b) in newton_x.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9 * direct.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }

    #[test]
    fn scheme_residual_small_after_step() {
        let p = params(0.2, 0.01, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let space = FeSpace::new(Arc::new(TriMesh::unit_square(8)));
        let u0 = initial_state(&p, &space).unwrap();
        let step =
            backward_euler_step(&u0, &space, 0.005, 0.005, &p, &NewtonOptions::default()).unwrap();
        let system = StepSystem::new(&u0, &space, 0.005, 0.005, &p).unwrap();
        let r = system.residual(step.state.coeffs());
        let scale = norm2(&system.rhs);
        assert!(norm2(&r) <= 1e-8 * scale);
    }

    #[test]
    fn heat_limit_decays_like_the_first_mode() {
        let p = params(1.0, 0.05, |x| (PI * x[0]).sin() * (PI * x[1]).sin())
            .with_reaction(Reaction::Disabled);
        let traj = run_simulation(&p, &disc(16, 0.05 / 32.0), &mut ()).unwrap();
        let last = traj.states.last().unwrap();
        let mesh = last.mesh();
        let centre = mesh
            .coords()
            .iter()
            .position(|p| (p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let value = last.nodal_values()[centre.unwrap()];
        let exact = (-2.0 * PI * PI * 0.05f64).exp();
        assert!((value - exact).abs() < 0.03, "{value} vs {exact}");
    }

    #[test]
    fn energy_decreases_for_small_steps() {
        let eps = 0.15;
        let p = params(eps, 0.02, |x| {
            ((0.3 - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt()) / (2f64.sqrt() * 0.15))
                .tanh()
        });
        let traj = run_simulation(&p, &disc(16, eps * eps / 4.0), &mut ()).unwrap();
        let energies: Vec<f64> = traj
            .states
            .iter()
            .map(|s| ginzburg_landau_energy(s, eps))
            .collect();
        assert!(
            energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)),
            "{energies:?}"
        );
    }

    #[test]
    fn initial_state_examples() {
        let space = FeSpace::new(Arc::new(TriMesh::unit_square(8)));
        assert_eq!(
            initial_state(&params(0.1, 1.0, |_| 0.0), &space)
                .unwrap()
                .max_abs(),
            0.0
        );
        let p1 =
            FeFunction::interpolate(space.clone(), |x| x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]));
        let nodal = p1.nodal_values();
        let mesh = space.mesh().clone();
        let vals = Arc::new((mesh.clone(), nodal));
        let p = params(0.1, 1.0, move |x| {
            let (m, nd) = &*vals;
            let c = (0..m.n_cells())
                .find(|&c| {
                    let l = crate::fem::barycentric(&m.cell_coords(c), x);
                    l.iter().all(|&v| v >= -1e-12)
                })
                .unwrap();
            eval_p1(m, nd, c, crate::fem::barycentric(&m.cell_coords(c), x))
        });
        let u = initial_state(&p, &space).unwrap();
        for (a, b) in u.coeffs().iter().zip(p1.coeffs()) {
            assert!((a - b).abs() < 1e-10);
        }
        let eps = 0.1;
        let circle = move |x: [f64; 2]| {
            ((0.25 - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt()) / (2f64.sqrt() * eps))
                .tanh()
        };
        let u = initial_state(&params(eps, 1.0, circle), &space).unwrap();
        let nodal = u.nodal_values();
        let mesh = space.mesh().clone();
        let rule = QuadRule::degree10();
        let proj =
            crate::fem::norm_lp(&mesh, Lp::L2, &rule, |c, l, _| eval_p1(&mesh, &nodal, c, l));
        assert!(proj <= norm_lp_field(&mesh, Lp::L2, &rule, circle) + 1e-12);
    }

    #[test]
    fn adaptive_run_refines_and_reruns_identically() {
        let p = params(0.2, 0.02, |x| ((0.3 - (x[0] - 0.5).abs()) / 0.28).tanh());
        let mut d = disc(4, 0.005);
        d.adapt = AdaptPolicy {
            marking_fraction: Some(0.5),
            max_generation: 6,
            ..Default::default()
        };
        struct Indicators;
        impl SlabObserver for Indicators {
            fn initial(&mut self, _: &FeFunction) -> Result<(), Error> {
                Ok(())
            }
            fn slab(&mut self, s: &TimeSlab) -> Result<SlabFeedback, Error> {
                let mesh = s.cur.mesh();
                let ind = (0..mesh.n_cells())
                    .map(|c| {
                        let tri = mesh.cell_coords(c);
                        (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0
                    })
                    .collect();
                Ok(SlabFeedback {
                    indicators: Some(ind),
                    time_term: None,
                })
            }
        }
        let a = run_simulation(&p, &d, &mut Indicators).unwrap();
        let b = run_simulation(&p, &d, &mut Indicators).unwrap();
        assert!(a.states.last().unwrap().mesh().n_cells() > 32);
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x.coeffs(), y.coeffs());
        }
    }
}
