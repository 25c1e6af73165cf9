use surfns::nssolver::{nonlinear_term, Force, ImexSolver, NsConfig};
use surfns::random::FieldSampler;
use surfns::surfcalc::viscous_term;
use surfns::{Error, Mat3, SurfaceGrid, TangentField, Vec3, WeightField};

fn weight(grid: &SurfaceGrid) -> WeightField {
    WeightField::new(grid.scalar_from_fn(|y| 1.0 + 0.15 * (3.0 * y.z * y.z - 1.0)), 0.5).unwrap()
}

fn rel_diff(grid: &SurfaceGrid, a: &[Vec3], b: &[Vec3]) -> f64 {
    let d: Vec<Vec3> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    grid.l2_vector(&d) / grid.l2_vector(b)
}

fn manufactured_drift(bandlimit: usize) -> f64 {
    let grid = SurfaceGrid::sphere(1.0, bandlimit).unwrap();
    let g = weight(&grid);
    let (nu, gamma) = (0.05, 0.2);
    let psi = grid.scalar_from_fn(|y| y.z + 0.5 * y.x * y.y);
    let gv = g.values();
    let dpsi = grid.grad_raw(psi.values());
    let vstar = grid.tangent((0..grid.len()).map(|i| grid.normals[i].cross(&dpsi[i]) / gv[i]).collect()).unwrap();

    // force making vstar a steady solution with zero pressure
    let adv = nonlinear_term(&grid, &vstar, None).unwrap();
    let visc = viscous_term(&grid, &g, &vstar).unwrap();
    let dg = grid.grad_raw(gv);
    let f: Vec<Vec3> = (0..grid.len())
        .map(|i| {
            let v = vstar.values()[i];
            let elastic = visc.values()[i] - dg[i] * (v.dot(&dg[i]) / gv[i]);
            adv.values()[i] - elastic * (2.0 * nu / gv[i]) + v * (gamma / gv[i])
        })
        .collect();
    let f = grid.project_tangent(&f);

    let mut cfg = NsConfig::new(g.clone(), vstar.clone(), nu, 2e-3, 0.2);
    cfg.gamma0 = gamma;
    cfg.force = Force::Steady(f);
    let traj = ImexSolver::new(&grid, cfg).unwrap().run().unwrap();
    assert!(traj.diagnostics.iter().all(|d| d.div_defect < 1e-9));
    rel_diff(&grid, &traj.last().v, vstar.values())
}

#[test]
fn manufactured_steady_state_with_variable_weight() {
    let e: Vec<f64> = [16, 24, 32].iter().map(|&l| manufactured_drift(l)).collect();
    assert!(e[2] < e[1] && e[1] < e[0] && e[2] < 1e-9, "{e:?}");
}

fn permutation(grid: &SurfaceGrid, r: &Mat3) -> Vec<usize> {
    grid.nodes
        .iter()
        .map(|y| {
            let ry = r * y;
            let (k, d) = grid
                .nodes
                .iter()
                .enumerate()
                .map(|(k, z)| (k, (z - ry).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d < 1e-12, "rotation does not map the grid to itself");
            k
        })
        .collect()
}

fn rotate(grid: &SurfaceGrid, perm: &[usize], r: &Mat3, v: &[Vec3]) -> TangentField {
    let mut out = vec![Vec3::zeros(); v.len()];
    for (j, &k) in perm.iter().enumerate() {
        out[k] = r * v[j];
    }
    grid.tangent(out).unwrap()
}

#[test]
fn solver_commutes_with_grid_rotations() {
    let grid = SurfaceGrid::sphere(1.0, 16).unwrap();
    let one = WeightField::from_field(grid.scalar(vec![1.0; grid.len()]).unwrap()).unwrap();
    let v0 = FieldSampler::new(&grid, 11, 6).tangent();
    let nlon = 2 * 16 + 2;
    let a = 2.0 * std::f64::consts::PI * 3.0 / nlon as f64;
    let rz = Mat3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0);
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let run = |v: TangentField| {
        let cfg = NsConfig::new(one.clone(), v, 0.05, 5e-3, 0.05);
        ImexSolver::new(&grid, cfg).unwrap().run().unwrap().last().v.clone()
    };
    let base = run(v0.clone());
    for r in [rz, rx] {
        let perm = permutation(&grid, &r);
        let moved = run(rotate(&grid, &perm, &r, v0.values()));
        let expect = rotate(&grid, &perm, &r, &base);
        let err = rel_diff(&grid, &moved, expect.values());
        assert!(err < 1e-10, "{err}");
    }
}

#[test]
fn mismatched_grids_are_rejected() {
    let a = SurfaceGrid::sphere(1.0, 8).unwrap();
    let b = SurfaceGrid::sphere(1.0, 8).unwrap();
    let g = WeightField::from_field(b.scalar(vec![1.0; b.len()]).unwrap()).unwrap();
    let v = a.tangent_from_fn(|y| Vec3::z().cross(y));
    assert!(matches!(viscous_term(&a, &g, &v), Err(Error::GridMismatch { .. })));
    let cfg = NsConfig::new(g, v, 0.1, 1e-3, 0.1);
    assert!(ImexSolver::new(&a, cfg).is_err());
}

#[test]
fn invalid_parameters_are_all_reported() {
    let grid = SurfaceGrid::sphere(1.0, 8).unwrap();
    let g = WeightField::from_field(grid.scalar(vec![1.0; grid.len()]).unwrap()).unwrap();
    let v = grid.tangent_from_fn(|y| Vec3::z().cross(y));
    let mut cfg = NsConfig::new(g, v, -1.0, 0.0, 1.0);
    cfg.gamma1 = -0.5;
    let msg = match ImexSolver::new(&grid, cfg) {
        Err(Error::Config(m)) => m,
        Err(e) => panic!("expected a config error, got {e}"),
        Ok(_) => panic!("invalid parameters accepted"),
    };
    assert!(msg.contains("nu > 0") && msg.contains("friction") && msg.contains("time step"), "{msg}");
}
