//! Subcommands behind the `acfe` executable.
//!
//! A run directory holds `config.toml`, `report.csv`, `fields_NNNN.vtk` and
//! `checkpoints/slab_NNNN.txt` with the list of written checkpoints in
//! `checkpoints/index.txt`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{parse_config, RunConfig};
use crate::estimators::{spatial_estimates, ConstantsConfig, Estimator, ResidualField, RunReport};
use crate::fem::{assemble_stiffness, eval_p1, load_vector, norm_lp, FeFunction, FeSpace, Lp};
use crate::linalg::cg_solve;
use crate::mesh::TriMesh;
use crate::quadrature::QuadRule;
use crate::report::{render_eigen_csv, render_report, SPECTRAL_LABEL};
use crate::setup;
use crate::spectral::{principal_eigenvalue, SpectralOptions};
use crate::time_stepper::{run_simulation, SlabFeedback, SlabObserver, TimeSlab};
use crate::Error;
use toml::de::{DeTable, DeValue};

/// Overrides `[output] directory` when set.
pub const OUTPUT_DIR_ENV: &str = "ACFE_OUTPUT_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_ESTIMATOR: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Expr(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Mesh(_) | Error::Solver(_) | Error::LengthMismatch { .. } => EXIT_SOLVER,
        Error::Estimator(_) | Error::Checkpoint { .. } => EXIT_ESTIMATOR,
        Error::Io { .. } => EXIT_IO,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(io_err(path))
}

fn estimator_err(e: Error) -> Error {
    match e {
        Error::Estimator(_) => e,
        other => Error::Estimator(Box::new(other)),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, Error> {
    Ok(parse_config(&read(path)?)?)
}

/// Output directory of a run, honouring [`OUTPUT_DIR_ENV`].
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(&cfg.output.directory),
    }
}

pub fn checkpoint_name(n: usize) -> String {
    format!("slab_{n:04}.txt")
}

struct RunObserver<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    estimator: Estimator,
    index: Vec<String>,
    initialized: bool,
}

impl RunObserver<'_> {
    fn record(
        &mut self,
        u: &FeFunction,
        n: usize,
        t: f64,
        iterations: usize,
        residual: f64,
    ) -> Result<(), Error> {
        if self.cfg.output.checkpoints {
            let cp = Checkpoint::from_state(
                u,
                self.cfg.mesh.nx as usize,
                self.cfg.mesh.ny as usize,
                n,
                t,
                iterations,
                residual,
            );
            let name = checkpoint_name(n);
            write(&self.dir.join("checkpoints").join(&name), &cp.to_string())?;
            self.index.push(name);
            let mut index = self.index.join("\n");
            index.push('\n');
            write(&self.dir.join("checkpoints").join("index.txt"), &index)?;
        }
        if self.cfg.output.vtk {
            let text = crate::vtk::function_to_vtk(u, &format!("acfe slab {n} t = {t:e}"));
            write(&self.dir.join(format!("fields_{n:04}.vtk")), &text)?;
        }
        Ok(())
    }
}

impl SlabObserver for RunObserver<'_> {
    fn initial(&mut self, u0: &FeFunction) -> Result<(), Error> {
        self.estimator.push_initial(u0).map_err(estimator_err)?;
        self.initialized = true;
        self.record(u0, 0, 0.0, 0, 0.0)
    }

    fn slab(&mut self, slab: &TimeSlab) -> Result<SlabFeedback, Error> {
        let feedback = self.estimator.slab(slab).map_err(estimator_err)?;
        self.record(
            &slab.cur,
            slab.n,
            slab.t,
            slab.newton_iterations,
            slab.newton_residual,
        )?;
        Ok(feedback)
    }
}

/// Simulates, estimates and writes every output into `dir`. On failure the
/// outputs of completed slabs are kept and `report.csv` covers them.
pub fn cmd_run(cfg: &RunConfig, dir: &Path) -> Result<RunReport, Error> {
    fs::create_dir_all(dir.join("checkpoints")).map_err(io_err(dir))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let params = setup::model_params(cfg)?;
    let disc = setup::discretization(cfg)?;
    let estimator = Estimator::new(params.clone(), setup::estimator_options(cfg))?;
    let mut obs = RunObserver {
        cfg,
        dir,
        estimator,
        index: Vec::new(),
        initialized: false,
    };
    let result = run_simulation(&params, &disc, &mut obs);
    let report = obs.estimator.report();
    if obs.initialized {
        write(&dir.join("report.csv"), &render_report(&report))?;
    }
    result.map(|_| report)
}

/// Applies a constants override: a file with a `[constants]` section whose keys replace
/// those of `cfg`.
pub fn apply_constants_override(path: &Path, cfg: &RunConfig) -> Result<RunConfig, Error> {
    let text = read(path)?;
    let parsed = parse_config(&text)?.constants;
    let keys: Vec<String> = match DeTable::parse(&text) {
        Ok(doc) => match doc.get_ref().get("constants").map(|v| v.get_ref()) {
            Some(DeValue::Table(t)) => t.keys().map(|k| k.get_ref().to_string()).collect(),
            _ => Vec::new(),
        },
        Err(_) => Vec::new(),
    };
    let mut merged = cfg.clone();
    let c = &mut merged.constants;
    for key in &keys {
        match key.as_str() {
            "c_pf" => c.c_pf = parsed.c_pf,
            "c_tilde" => c.c_tilde = parsed.c_tilde,
            "c_sz" => c.c_sz = parsed.c_sz,
            "c_omega" => c.c_omega = parsed.c_omega,
            "dimension" => c.dimension = parsed.dimension,
            "safety" => c.safety = parsed.safety,
            _ => {}
        }
    }
    merged.constants_config().validate()?;
    Ok(merged)
}

/// Loads every checkpoint listed in `dir/checkpoints/index.txt` into one refinement forest.
pub fn load_checkpoints(dir: &Path) -> Result<Vec<(Checkpoint, FeFunction)>, Error> {
    let cdir = dir.join("checkpoints");
    let index_path = cdir.join("index.txt");
    let index = match fs::read_to_string(&index_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::Checkpoint {
                path: index_path,
                source: CheckpointError::Missing,
            })
        }
        Err(e) => return Err(io_err(&index_path)(e)),
    };
    let mut base: Option<TriMesh> = None;
    let mut out = Vec::new();
    for name in index.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let path = cdir.join(name);
        let cp_err = |source| Error::Checkpoint {
            path: path.clone(),
            source,
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(cp_err(CheckpointError::Missing))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let cp = Checkpoint::parse(&text).map_err(cp_err)?;
        if base.is_none() {
            base = Some(cp.base_mesh().map_err(cp_err)?);
        }
        let u = cp
            .to_state(base.as_ref().expect("set above"))
            .map_err(cp_err)?;
        out.push((cp, u));
    }
    if out.is_empty() {
        return Err(Error::Checkpoint {
            path: index_path,
            source: CheckpointError::Missing,
        });
    }
    Ok(out)
}

/// Re-evaluates the estimator stack over recorded states, writing `report_estimate.csv`.
pub fn cmd_estimate(dir: &Path, constants: Option<&Path>) -> Result<RunReport, Error> {
    let mut cfg = load_config(&dir.join("config.toml"))?;
    if let Some(path) = constants {
        cfg = apply_constants_override(path, &cfg)?;
    }
    let opts = setup::estimator_options(&cfg);
    let params = setup::model_params(&cfg)?;
    let states = load_checkpoints(dir)?;
    let mut est = Estimator::new(params, opts)?;
    let (first, rest) = states.split_first().expect("non-empty");
    est.push_initial(&first.1).map_err(estimator_err)?;
    for (cp, u) in rest {
        est.push_state(cp.time, u, cp.newton_residual)
            .map_err(estimator_err)?;
    }
    let report = est.report();
    write(&dir.join("report_estimate.csv"), &render_report(&report))?;
    Ok(report)
}

/// Principal eigenvalue of a checkpointed state as CSV. Without `epsilon`, the value is
/// taken from the `config.toml` of the run directory holding the checkpoint.
pub fn cmd_eigen(state: &Path, epsilon: Option<f64>, safety: Option<f64>) -> Result<String, Error> {
    let cfg = match epsilon {
        Some(_) => None,
        None => {
            let dir = state
                .parent()
                .and_then(Path::parent)
                .unwrap_or(Path::new("."));
            Some(load_config(&dir.join("config.toml"))?)
        }
    };
    let eps = epsilon
        .or(cfg.as_ref().map(|c| c.model.epsilon))
        .expect("one source");
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let safety = safety
        .or(cfg.as_ref().map(|c| c.constants.safety))
        .unwrap_or(crate::spectral::DEFAULT_SAFETY);
    if !(safety >= 0.0 && safety.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "safety must be non-negative, got {safety}"
        )));
    }
    let cp_err = |source| Error::Checkpoint {
        path: state.to_path_buf(),
        source,
    };
    let cp = Checkpoint::parse(&read(state)?).map_err(cp_err)?;
    let u = cp
        .to_state(&cp.base_mesh().map_err(cp_err)?)
        .map_err(cp_err)?;
    let opts = SpectralOptions {
        safety,
        ..Default::default()
    };
    let (sample, _) = principal_eigenvalue(&u, cp.time, eps, &opts, None)?;
    Ok(render_eigen_csv(&[sample]))
}

/// One refinement level of the Poisson benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub error_l2: f64,
    pub estimator_l2: f64,
    pub estimator_linf: f64,
    pub effectivity: f64,
    pub rate_error: Option<f64>,
    pub rate_estimator: Option<f64>,
}

/// `-Δu = 2π² sin(πx) sin(πy)` on the unit square with `u = sin(πx) sin(πy)`, on
/// `levels` uniform meshes starting from a 4×4 macro grid.
pub fn cmd_poisson_bench(
    levels: usize,
    constants: &ConstantsConfig,
) -> Result<Vec<BenchRow>, Error> {
    use std::f64::consts::PI;
    if levels == 0 {
        return Err(Error::InvalidParameter("levels must be at least 1".into()));
    }
    constants.validate()?;
    let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let f = move |x: [f64; 2]| 2.0 * PI * PI * exact(x);
    let mut rows: Vec<BenchRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let mesh = Arc::new(TriMesh::unit_square(4 << level));
        let space = FeSpace::new(mesh.clone());
        let a = assemble_stiffness(&space);
        let b = load_vector(&space, &QuadRule::degree6(), f);
        let coeffs = cg_solve(&a, &b, 1e-13, None)?;
        let u = FeFunction::new(space, coeffs)?;
        let nodal = u.nodal_values();
        let error_l2 = norm_lp(&mesh, Lp::L2, &QuadRule::degree10(), |c, l, x| {
            exact(x) - eval_p1(&mesh, &nodal, c, l)
        });
        let g = ResidualField::load(&u, Arc::new(f));
        let est = spatial_estimates(&u, &g, constants)?;
        let rate = |prev: f64, cur: f64| (prev / cur).log2();
        let prev = rows.last();
        rows.push(BenchRow {
            level,
            h: mesh.mesh_size().1,
            dofs: u.space().n_dofs(),
            error_l2,
            estimator_l2: est.lp[0],
            estimator_linf: est.inf,
            effectivity: est.lp[0] / error_l2,
            rate_error: prev.map(|p| rate(p.error_l2, error_l2)),
            rate_estimator: prev.map(|p| rate(p.estimator_l2, est.lp[0])),
        });
    }
    Ok(rows)
}

pub fn render_bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("level,h,dofs,error_L2,E_L2,E_Linf,effectivity,rate_error,rate_E\n");
    let opt = |r: Option<f64>| r.map(|v| format!("{v:.4}")).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{},{:e},{:e},{:e},{:.4},{},{}\n",
            r.level,
            r.h,
            r.dofs,
            r.error_l2,
            r.estimator_l2,
            r.estimator_linf,
            r.effectivity,
            opt(r.rate_error),
            opt(r.rate_estimator)
        ));
    }
    out
}

/// Final-bound block printed after `run` and `estimate`.
pub fn format_summary(r: &RunReport) -> String {
    let verdict = if r.condition.satisfied {
        "satisfied"
    } else {
        "NOT satisfied"
    };
    let mut s = String::new();
    s.push_str(&format!("slabs               {}\n", r.slabs.len()));
    s.push_str(&format!("eta_d               {:.6e}\n", r.eta));
    s.push_str(&format!(
        "E_d                 {:.6e}{}\n",
        r.e_d,
        if r.vacuous {
            " (overflow, bounds vacuous)"
        } else {
            ""
        }
    ));
    s.push_str(&format!("B_bar               {:.6e}\n", r.b_bar));
    s.push_str(&format!(
        "condition           {:.6e} <= {:.6e}: {verdict}\n",
        r.condition.lhs, r.condition.rhs
    ));
    s.push_str(&format!("||e||_L4(L4)    <=  {:.6e}\n", r.bounds.l4l4));
    s.push_str(&format!("||e||_L2(H1)    <=  {:.6e}\n", r.bounds.l2h1));
    s.push_str(&format!("||e||_Linf(L2)  <=  {:.6e}\n", r.bounds.linf_l2));
    s.push_str(&format!(
        "int (Lambda_h)+     {:.6e} (fitted m = {:.4})\n",
        r.lambda_integral, r.fitted_m
    ));
    s.push_str(&format!("spectral input      {SPECTRAL_LABEL}\n"));
    let c = &r.constants;
    s.push_str(&format!(
        "constants           C_PF={:e} c_tilde={:e} C_SZ={:e} C_Omega={:e} safety={:e}\n",
        c.c_pf, c.c_tilde, c.c_sz, c.c_omega, c.safety
    ));
    s
}
