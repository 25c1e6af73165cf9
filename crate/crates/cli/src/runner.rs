//! Turns a validated [`RunConfig`] into solver calls and output files.

use std::path::PathBuf;
use std::sync::Arc;

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use surfns::galerkin::{galerkin_basis, galerkin_run};
use surfns::helmholtz::{project_general, project_weighted};
use surfns::nssolver::{Force, ImexSolver, NsConfig};
use surfns::random::FieldSampler;
use surfns::surfcalc::run_identity_suite;
use surfns::thinfilm::thinfilm_sweep;
use surfns::{Error, Result, SurfaceGrid, Vec3, WeightField};

use crate::config::{Command, RunConfig, Surface};
use crate::expr::{build_velocity, Expr};
use crate::output::{run_id, write_csv, write_json, write_snsf};

/// Residuals both below this count as converged in refinement checks.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;
pub const MIN_SHRINK: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

pub fn build_grid(cfg: &RunConfig) -> Result<SurfaceGrid> {
    match cfg.surface {
        Surface::Sphere => SurfaceGrid::sphere(cfg.radius, cfg.bandlimit),
        Surface::Torus => SurfaceGrid::torus(cfg.major, cfg.minor, cfg.n_theta, cfg.n_phi),
    }
}

fn refined(cfg: &RunConfig) -> Result<SurfaceGrid> {
    match cfg.surface {
        Surface::Sphere => SurfaceGrid::sphere(cfg.radius, 2 * cfg.bandlimit),
        Surface::Torus => SurfaceGrid::torus(cfg.major, cfg.minor, 2 * cfg.n_theta, 2 * cfg.n_phi),
    }
}

fn expr(src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(Error::Config)
}

fn weight(grid: &SurfaceGrid, src: &str) -> Result<WeightField> {
    WeightField::from_field(grid.scalar(expr(src)?.sample_scalar(grid)?)?)
}

fn force(grid: &SurfaceGrid, src: &str) -> Result<Force> {
    let e = expr(src)?;
    if e.uses_time() {
        let nodes = grid.nodes.clone();
        let proj = grid.proj.clone();
        // evaluated before the run so that bad expressions fail early
        e.sample_vector(grid, 0.0)?;
        let f = move |t: f64| -> Vec<Vec3> {
            nodes.iter().zip(&proj).map(|(p, m)| m * e.vector_at(p, t).unwrap_or_else(|_| Vec3::zeros())).collect()
        };
        return Ok(Force::Timed(Arc::new(f)));
    }
    let v = grid.project_tangent(&e.sample_vector(grid, 0.0)?);
    if v.iter().all(|x| *x == Vec3::zeros()) {
        Ok(Force::Zero)
    } else {
        Ok(Force::Steady(v))
    }
}

fn ns_config(grid: &SurfaceGrid, cfg: &RunConfig) -> Result<NsConfig> {
    let g = weight(grid, &cfg.g_expr)?;
    let v0 = build_velocity(grid, &cfg.v0, cfg.seed)?;
    let mut n = NsConfig::new(g, v0, cfg.nu, cfg.dt, cfg.t_final);
    n.gamma0 = cfg.gamma0;
    n.gamma1 = cfg.gamma1;
    n.force = force(grid, &cfg.f_expr)?;
    n.nonlinear = cfg.nonlinear;
    n.dealias = cfg.dealias;
    n.snapshot_every = cfg.snapshot_every;
    Ok(n)
}

struct Sink {
    dir: PathBuf,
    stem: String,
    files: Vec<PathBuf>,
}

impl Sink {
    fn path(&mut self, ext: &str) -> PathBuf {
        let p = self.dir.join(format!("{}.{ext}", self.stem));
        self.files.push(p.clone());
        p
    }
}

/// Execute `cfg`, writing `<command>-<run id>.{csv,json[,snsf]}` under
/// `cfg.out`. Gate failures are reported after all files are written.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let id = run_id(cfg);
    std::fs::create_dir_all(&cfg.out)?;
    let mut sink = Sink { dir: cfg.out.clone(), stem: format!("{}-{id}", cfg.command.name()), files: Vec::new() };
    let grid = build_grid(cfg)?;
    info!("{} on {} (resolution {}), run id {id}", cfg.command.name(), grid.backend_name(), grid.resolution());
    let (mut summary, failure) = match cfg.command {
        Command::Verify => verify(cfg, &grid, &mut sink)?,
        Command::Solve => solve(cfg, &grid, &mut sink)?,
        Command::Galerkin => galerkin(cfg, &grid, &mut sink)?,
        Command::Helmholtz => helmholtz(cfg, &grid, &mut sink)?,
        Command::Thinfilm => thinfilm(cfg, &grid, &mut sink)?,
    };
    summary["run_id"] = json!(id);
    summary["command"] = json!(cfg.command.name());
    summary["config"] = json!(cfg.hashed_text());
    summary["pass"] = json!(failure.is_none());
    let p = sink.path("json");
    write_json(&p, &summary)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(RunOutcome { run_id: id, files: sink.files, summary }),
    }
}

type Step = Result<(Value, Option<Error>)>;

fn first_failure(checks: Vec<(bool, String, f64)>) -> Option<Error> {
    let failed: Vec<&(bool, String, f64)> = checks.iter().filter(|c| !c.0).collect();
    let worst = failed.first()?;
    let what = failed.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join("; ");
    Some(Error::Consistency { what, defect: worst.2 })
}

#[derive(Serialize)]
struct IdentityRow {
    identity: String,
    backend: String,
    resolution: usize,
    residual_max: f64,
    residual_l2: f64,
    seed: u64,
}

fn verify(cfg: &RunConfig, grid: &SurfaceGrid, sink: &mut Sink) -> Step {
    let coarse = run_identity_suite(grid, cfg.seed)?;
    let fine = if cfg.refine { Some(run_identity_suite(&refined(cfg)?, cfg.seed)?) } else { None };
    let rows: Vec<IdentityRow> = coarse
        .iter()
        .chain(fine.iter().flatten())
        .map(|r| IdentityRow {
            identity: r.identity.clone(),
            backend: r.backend.clone(),
            resolution: r.resolution,
            residual_max: r.residual_max,
            residual_l2: r.residual_l2,
            seed: r.seed,
        })
        .collect();
    let p = sink.path("csv");
    write_csv(&p, &rows)?;
    let mut checks = Vec::new();
    let mut table = Vec::new();
    for (k, r) in coarse.iter().enumerate() {
        let mut entry = json!({ "identity": r.identity, "residual_max": r.residual_max });
        if grid.is_sphere() {
            checks.push((r.residual_max <= 1e-8, format!("{} residual {:e} above 1e-8", r.identity, r.residual_max), r.residual_max));
        }
        if let Some(f) = &fine {
            let fr = f[k].residual_max;
            let shrink = r.residual_max / fr;
            let ok = shrink >= MIN_SHRINK || (r.residual_max < ROUNDOFF_FLOOR && fr < ROUNDOFF_FLOOR);
            entry["refined_residual_max"] = json!(fr);
            entry["shrink"] = json!(shrink);
            if !grid.is_sphere() {
                checks.push((ok, format!("{} shrinks only {shrink:.2}x", r.identity), shrink));
            }
        }
        table.push(entry);
    }
    let max = coarse.iter().fold(0.0f64, |m, r| m.max(r.residual_max));
    Ok((json!({ "backend": grid.backend_name(), "resolution": grid.resolution(), "max_residual": max, "identities": table }), first_failure(checks)))
}

fn solve(cfg: &RunConfig, grid: &SurfaceGrid, sink: &mut Sink) -> Step {
    let ncfg = ns_config(grid, cfg)?;
    let solver = ImexSolver::new(grid, ncfg)?;
    let traj = solver.run()?;
    let p = sink.path("csv");
    write_csv(&p, &traj.diagnostics)?;
    let first = &traj.snapshots[0];
    let last = traj.last();
    let data: Vec<f64> = last.v.iter().zip(&last.q).flat_map(|(v, q)| [v.x, v.y, v.z, *q]).collect();
    let p = sink.path("snsf");
    write_snsf(&p, 4, &data)?;
    let diff: Vec<Vec3> = last.v.iter().zip(&first.v).map(|(a, b)| a - b).collect();
    let v0n = grid.l2_vector(&first.v);
    let maxof = |f: fn(&surfns::nssolver::StepDiagnostics) -> f64| traj.diagnostics.iter().map(f).fold(0.0f64, f64::max);
    let d0 = &traj.diagnostics[0];
    let dl = traj.diagnostics.last().expect("nonempty");
    Ok((
        json!({
            "steps": solver.config().n_steps(),
            "retained_degree": solver.retained_degree(),
            "t_final": last.t,
            "energy_initial": d0.energy,
            "energy_final": dl.energy,
            "relative_velocity_change": if v0n > 0.0 { grid.l2_vector(&diff) / v0n } else { 0.0 },
            "max_energy_defect": maxof(|d| d.energy_defect),
            "max_div_defect": maxof(|d| d.div_defect),
            "max_pressure_defect": maxof(|d| d.pressure_defect),
            "snsf_layout": "vx,vy,vz,q",
        }),
        None,
    ))
}

#[derive(Serialize)]
struct GalerkinRow {
    t: f64,
    energy: f64,
}

fn galerkin(cfg: &RunConfig, grid: &SurfaceGrid, sink: &mut Sink) -> Step {
    let ncfg = ns_config(grid, cfg)?;
    let basis = galerkin_basis(grid, ncfg.nu, ncfg.gamma(), &ncfg.g, cfg.k)?;
    let traj = galerkin_run(grid, &ncfg, &basis)?;
    let rows: Vec<GalerkinRow> = traj
        .times
        .iter()
        .zip(&traj.coefficients)
        .map(|(t, c)| GalerkinRow { t: *t, energy: 0.5 * c.iter().map(|x| x * x).sum::<f64>() })
        .collect();
    let p = sink.path("csv");
    write_csv(&p, &rows)?;
    let v = basis.field(traj.coefficients.last().expect("nonempty"));
    let data: Vec<f64> = v.iter().flat_map(|x| [x.x, x.y, x.z]).collect();
    let p = sink.path("snsf");
    write_snsf(&p, 3, &data)?;
    Ok((
        json!({
            "k": basis.len(),
            "eigenvalues": basis.eigenvalues,
            "gram_defect": basis.gram_defect,
            "energy_constant": traj.energy_constant,
            "snsf_layout": "vx,vy,vz",
        }),
        None,
    ))
}

#[derive(Serialize)]
struct ProjectionRow {
    sample: usize,
    idempotence: f64,
    orthogonality: f64,
    divergence_defect: f64,
    iterations: usize,
}

fn helmholtz(cfg: &RunConfig, grid: &SurfaceGrid, sink: &mut Sink) -> Step {
    let g = weight(grid, &cfg.g_expr)?;
    let mut sampler = FieldSampler::new(grid, cfg.seed, surfns::random::DEFAULT_DEGREE);
    let mut rows = Vec::with_capacity(cfg.samples);
    for sample in 0..cfg.samples {
        let v = sampler.tangent();
        let d = project_weighted(grid, &v, &g)?;
        let once = grid.tangent(d.solenoidal.values().to_vec())?;
        let d2 = project_weighted(grid, &once, &g)?;
        let idem = d2.solenoidal.values().iter().zip(once.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        rows.push(ProjectionRow {
            sample,
            idempotence: idem,
            orthogonality: d.diagnostics.orthogonality_defect,
            divergence_defect: d.diagnostics.divergence_defect,
            iterations: d.diagnostics.iterations,
        });
    }
    let p = sink.path("csv");
    write_csv(&p, &rows)?;
    // v = grad p + p H n has the exact potential p
    let pfield = sampler.scalar();
    let gp = grid.grad_raw(pfield.values());
    let v: Vec<Vec3> = (0..grid.len())
        .map(|i| gp[i] + grid.normals[i] * (pfield.values()[i] * grid.mean_curvature[i]))
        .collect();
    let d = project_general(grid, &grid.ambient(v)?)?;
    let recovery = d.potential.values().iter().zip(pfield.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let tol = grid.tolerance().max(1e-9);
    let worst = |f: fn(&ProjectionRow) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    let (wi, wo) = (worst(|r| r.idempotence), worst(|r| r.orthogonality));
    let checks = vec![
        (wi <= tol, format!("idempotence defect {wi:e} above {tol:e}"), wi),
        (wo <= tol, format!("orthogonality defect {wo:e} above {tol:e}"), wo),
        (recovery <= tol, format!("general potential recovery error {recovery:e} above {tol:e}"), recovery),
    ];
    Ok((
        json!({
            "samples": cfg.samples,
            "weight_min": g.lower_bound(),
            "max_idempotence": wi,
            "max_orthogonality": wo,
            "max_divergence_defect": worst(|r| r.divergence_defect),
            "general_recovery_error": recovery,
            "tolerance": tol,
        }),
        first_failure(checks),
    ))
}

fn thinfilm(cfg: &RunConfig, grid: &SurfaceGrid, sink: &mut Sink) -> Step {
    let g0 = grid.scalar(expr(&cfg.g0_expr)?.sample_scalar(grid)?)?;
    let g1 = grid.scalar(expr(&cfg.g1_expr)?.sample_scalar(grid)?)?;
    let sweep = thinfilm_sweep(grid, &g0, &g1, &cfg.epsilons, cfg.nr, cfg.seed)?;
    let p = sink.path("csv");
    write_csv(&p, &sweep.rows)?;
    let s = &sweep.summary;
    let tol = grid.tolerance().max(1e-8);
    let mut checks = vec![
        (s.ave_der_max <= tol, format!("average derivative residual {:e} above {tol:e}", s.ave_der_max), s.ave_der_max),
        (s.comp_n.slope >= 1.9 && s.comp_n.r2 >= 0.98, format!("boundary normal slope {:.3} (R2 {:.4})", s.comp_n.slope, s.comp_n.r2), s.comp_n.slope),
        (s.ave_n_ratio_max <= 10.0, format!("normal average ratio {:.3} above 10", s.ave_n_ratio_max), s.ave_n_ratio_max),
        (s.ext_div.slope >= 1.4, format!("extension divergence slope {:.3} below 1.4", s.ext_div.slope), s.ext_div.slope),
    ];
    for f in &s.ave_n {
        checks.push(((f.slope - 1.0).abs() <= 0.1 && f.r2 >= 0.98, format!("normal average slope {:.3} (R2 {:.4})", f.slope, f.r2), f.slope));
    }
    let summary = serde_json::to_value(s).map_err(|e| Error::Io(e.into()))?;
    Ok((summary, first_failure(checks)))
}
