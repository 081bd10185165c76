//! Builds model data and discretizations from a [`RunConfig`], including the built-in presets.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::estimators::{Dimension, EstimatorOptions};
use crate::expr::{Bindings, Expr};
use crate::mesh::{Rect, TriMesh};
use crate::time_stepper::{
    AdaptPolicy, Discretization, ModelParams, NewtonOptions, Reaction, SpaceField, SpaceTimeField,
};
use crate::Error;

/// `e^{-t} sin(πξ) sin(πη)` in coordinates `ξ, η ∈ [0, 1]` of the rectangle.
pub fn smooth_solution(domain: Rect) -> impl Fn([f64; 2], f64) -> f64 + Send + Sync + Clone {
    move |x, t| {
        let xi = (x[0] - domain.x0) / domain.width();
        let eta = (x[1] - domain.y0) / domain.height();
        (-t).exp() * (PI * xi).sin() * (PI * eta).sin()
    }
}

/// Forcing for which [`smooth_solution`] solves the equation with reaction coefficient `r`.
pub fn smooth_forcing(domain: Rect, r: f64) -> impl Fn([f64; 2], f64) -> f64 + Send + Sync + Clone {
    let u = smooth_solution(domain);
    let lap = PI * PI * (domain.width().powi(-2) + domain.height().powi(-2));
    move |x, t| {
        let v = u(x, t);
        (lap - 1.0) * v + r * (v * v * v - v)
    }
}

/// `tanh((r0 - |x - c|) / (√2 ε))` for a circle centred in the domain.
pub fn circle_profile(domain: Rect, eps: f64) -> impl Fn([f64; 2]) -> f64 + Send + Sync + Clone {
    let c = [0.5 * (domain.x0 + domain.x1), 0.5 * (domain.y0 + domain.y1)];
    let r0 = 0.25 * domain.width().min(domain.height());
    move |x| ((r0 - (x[0] - c[0]).hypot(x[1] - c[1])) / (SQRT_2 * eps)).tanh()
}

/// Two discs joined by a thin neck, as a tanh profile of an approximate signed distance.
pub fn dumbbell_profile(domain: Rect, eps: f64) -> impl Fn([f64; 2]) -> f64 + Send + Sync + Clone {
    let s = domain.width().min(domain.height());
    let yc = 0.5 * (domain.y0 + domain.y1);
    let c1 = [domain.x0 + 0.3 * domain.width(), yc];
    let c2 = [domain.x0 + 0.7 * domain.width(), yc];
    let r = 0.15 * s;
    let neck = 0.04 * s;
    let xm = 0.5 * (c1[0] + c2[0]);
    let half_len = 0.5 * (c2[0] - c1[0]);
    move |x| {
        let d1 = r - (x[0] - c1[0]).hypot(x[1] - c1[1]);
        let d2 = r - (x[0] - c2[0]).hypot(x[1] - c2[1]);
        let dn = (neck - (x[1] - yc).abs()).min(half_len - (x[0] - xm).abs());
        (d1.max(d2).max(dn) / (SQRT_2 * eps)).tanh()
    }
}

/// Piecewise linear interpolant of seeded noise in `[-δ, δ]` on an `nx × ny` grid,
/// zero on the boundary.
pub fn random_field(
    domain: Rect,
    nx: usize,
    ny: usize,
    delta: f64,
    seed: u64,
) -> impl Fn([f64; 2]) -> f64 + Send + Sync + Clone {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 1..ny {
        for i in 1..nx {
            values[j * (nx + 1) + i] = if delta > 0.0 {
                rng.gen_range(-delta..=delta)
            } else {
                0.0
            };
        }
    }
    let values = Arc::new(values);
    move |x| {
        let xi = ((x[0] - domain.x0) / domain.width() * nx as f64).clamp(0.0, nx as f64);
        let eta = ((x[1] - domain.y0) / domain.height() * ny as f64).clamp(0.0, ny as f64);
        let i = (xi.floor() as usize).min(nx - 1);
        let j = (eta.floor() as usize).min(ny - 1);
        let (a, b) = (xi - i as f64, eta - j as f64);
        let v = |di: usize, dj: usize| values[(j + dj) * (nx + 1) + i + di];
        let (v00, v10, v01, v11) = (v(0, 0), v(1, 0), v(0, 1), v(1, 1));
        if a >= b {
            v00 + a * (v10 - v00) + b * (v11 - v10)
        } else {
            v00 + b * (v01 - v00) + a * (v11 - v01)
        }
    }
}

/// Macro mesh of the configuration, before uniform refinement.
pub fn macro_mesh(cfg: &RunConfig) -> Result<TriMesh, Error> {
    Ok(TriMesh::build_macro(
        cfg.rect(),
        cfg.mesh.nx as usize,
        cfg.mesh.ny as usize,
    )?)
}

/// Macro mesh refined uniformly; two bisection rounds halve the mesh size.
pub fn initial_mesh(cfg: &RunConfig) -> Result<TriMesh, Error> {
    Ok(macro_mesh(cfg)?.refine_uniform(2 * cfg.mesh.refinements as usize))
}

pub fn reaction(cfg: &RunConfig) -> Reaction {
    if cfg.model.heat_only {
        Reaction::Disabled
    } else {
        Reaction::AllenCahn
    }
}

pub fn initial_field(cfg: &RunConfig) -> Result<SpaceField, Error> {
    let domain = cfg.rect();
    let eps = cfg.model.epsilon;
    Ok(match cfg.model.initial.as_str() {
        "smooth" => {
            let u = smooth_solution(domain);
            Arc::new(move |x| u(x, 0.0))
        }
        "circle" => Arc::new(circle_profile(domain, eps)),
        "dumbbell" => Arc::new(dumbbell_profile(domain, eps)),
        "random" => {
            let scale = 1usize << cfg.mesh.refinements;
            Arc::new(random_field(
                domain,
                cfg.mesh.nx as usize * scale,
                cfg.mesh.ny as usize * scale,
                cfg.model.noise_amplitude,
                cfg.model.seed,
            ))
        }
        "zero" => Arc::new(|_| 0.0),
        text => {
            let e = Expr::parse(text)?;
            Arc::new(move |x| {
                e.eval(&Bindings {
                    x: x[0],
                    y: x[1],
                    t: 0.0,
                    eps,
                })
            })
        }
    })
}

pub fn forcing_field(cfg: &RunConfig) -> Result<SpaceTimeField, Error> {
    let eps = cfg.model.epsilon;
    let r = match reaction(cfg) {
        Reaction::AllenCahn => 1.0 / (eps * eps),
        Reaction::Disabled => 0.0,
    };
    Ok(match cfg.model.forcing.as_str() {
        "smooth" => Arc::new(smooth_forcing(cfg.rect(), r)),
        "zero" => Arc::new(|_, _| 0.0),
        text => {
            let e = Expr::parse(text)?;
            Arc::new(move |x, t| {
                e.eval(&Bindings {
                    x: x[0],
                    y: x[1],
                    t,
                    eps,
                })
            })
        }
    })
}

pub fn model_params(cfg: &RunConfig) -> Result<ModelParams, Error> {
    Ok(ModelParams::new(
        cfg.model.epsilon,
        cfg.time.final_time,
        cfg.rect(),
        initial_field(cfg)?,
        forcing_field(cfg)?,
    )?
    .with_reaction(reaction(cfg)))
}

pub fn newton_options(cfg: &RunConfig) -> NewtonOptions {
    NewtonOptions {
        tol: cfg.solver.newton_tol,
        abs_tol: cfg.solver.newton_abs_tol,
        maxit: cfg.solver.newton_maxit as usize,
        ..Default::default()
    }
}

pub fn discretization(cfg: &RunConfig) -> Result<Discretization, Error> {
    let t = &cfg.time;
    Ok(Discretization {
        initial_mesh: Arc::new(initial_mesh(cfg)?),
        time_step: t.step,
        newton: newton_options(cfg),
        adapt: AdaptPolicy {
            marking_fraction: cfg.adapt.enabled.then_some(cfg.adapt.marking_fraction),
            max_generation: cfg.adapt.max_generation,
            time_tolerance: t.adaptive.then_some(t.tolerance),
            min_time_step: t.min_step,
            max_time_step: t.max_step,
        },
    })
}

pub fn estimator_options(cfg: &RunConfig) -> EstimatorOptions {
    let mut opts = EstimatorOptions::new(cfg.constants_config());
    opts.dimension = if cfg.constants.dimension == 3 {
        Dimension::Three
    } else {
        Dimension::Two
    };
    opts
}
