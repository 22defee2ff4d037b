//! The obstacle-problem solver: computes the largest potential V below the
//! data potential U with `(Delta_h + k^2) V >= -1` inside the working disk,
//! by projected successive over-relaxation on the discrete linear
//! complementarity system.  Derives the swept measure `nu = -(Delta_h+k^2)V`,
//! the non-contact set omega, the saturated set, the iterated-sweep identity
//! and the quadrature-domain construction pipeline.

use crate::error::{HqdError, Result};
use crate::kernel::{r_max, FundamentalSolution, HelmholtzParams};
use crate::measures::{
    add_dirac_potential, nonzero_cells, Grid2, KernelTable, Mask, Measure, ScalarField,
};
use rayon::prelude::*;
use serde::Serialize;

/// Density level above which a node counts as saturated.
const CONTACT_DENSITY_TOL: f64 = 1e-6;

/// Sweeps between convergence checks.
const CHECK_EVERY: usize = 8;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolverConfig {
    /// Over-relaxation factor in (1, 2).
    pub omega_relax: f64,
    /// Complementarity residual target, scaled by max(1, max|U|).
    pub tol: f64,
    /// Sweep cap.
    pub max_iters: usize,
    /// Non-contact threshold for omega extraction, scaled by max|U|.
    pub contact_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            omega_relax: 1.9,
            tol: 1e-10,
            max_iters: 200_000,
            contact_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.omega_relax > 1.0 && self.omega_relax < 2.0) {
            return Err(HqdError::Precondition(format!(
                "omega_relax must lie in (1, 2), got {}",
                self.omega_relax
            )));
        }
        if !(self.tol > 0.0) || !(self.contact_tol > 0.0) || self.max_iters == 0 {
            return Err(HqdError::Precondition(
                "tol, contact_tol must be positive and max_iters nonzero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct BalayageResult {
    /// Solved potential, equal to the obstacle outside the working disk.
    pub v: ScalarField,
    /// The obstacle U (data potential); at nodes carrying an exact point
    /// mass the stored value omits the infinite self-term and the node index
    /// is listed in `dirac_nodes`.
    pub u: ScalarField,
    /// Swept density nu = -(Delta_h + k^2) V; zero on the outermost ring.
    pub nu: ScalarField,
    /// Non-contact set.
    pub omega: Mask,
    /// Saturated set (density within CONTACT_DENSITY_TOL of one), opened by
    /// one cell and re-unioned with omega.
    pub saturated: Mask,
    /// Disk-interior nodes (|x| < R(n,k)).
    pub interior: Mask,
    /// Nodes within 3h of the disk boundary or outside it; nu is meaningless
    /// there and invariant checks mask it out.
    pub collar: Mask,
    pub dirac_nodes: Vec<usize>,
    pub iterations: usize,
    pub final_residual: f64,
    /// Resolved absolute tolerances.
    pub tol_abs: f64,
    pub contact_tol_abs: f64,
}

/// Red/black checkerboard storage: nodes with (i+j) even live in the red
/// plane.  One relaxation color pass reads only the other plane, so passes
/// parallelize over rows with results independent of thread count.
struct Planes {
    nx: usize,
    ny: usize,
    w: usize,
    red: Vec<f64>,
    black: Vec<f64>,
}

impl Planes {
    fn from_full(grid: &Grid2, full: &[f64]) -> Planes {
        let (nx, ny) = (grid.nx, grid.ny);
        let w = nx.div_ceil(2);
        let mut red = vec![0.0; w * ny];
        let mut black = vec![0.0; w * ny];
        for j in 0..ny {
            for i in 0..nx {
                let v = full[j * nx + i];
                if (i + j) % 2 == 0 {
                    red[j * w + i / 2] = v;
                } else {
                    black[j * w + i / 2] = v;
                }
            }
        }
        Planes {
            nx,
            ny,
            w,
            red,
            black,
        }
    }

    fn to_full(&self, _grid: &Grid2) -> Vec<f64> {
        let mut full = vec![0.0; self.nx * self.ny];
        for j in 0..self.ny {
            for i in 0..self.nx {
                let v = if (i + j) % 2 == 0 {
                    self.red[j * self.w + i / 2]
                } else {
                    self.black[j * self.w + i / 2]
                };
                full[j * self.nx + i] = v;
            }
        }
        full
    }
}

/// Per-row span of plane columns whose nodes are strict disk-interior.
/// Rows of a disk are contiguous in i, hence in plane columns.
struct Spans {
    red: Vec<(usize, usize)>,
    black: Vec<(usize, usize)>,
}

fn build_spans(grid: &Grid2, rr: f64) -> (Mask, Spans) {
    let interior = Mask::from_fn(*grid, |p| (p[0] * p[0] + p[1] * p[1]).sqrt() < rr);
    let w = grid.nx.div_ceil(2);
    let mut spans = Spans {
        red: vec![(0, 0); grid.ny],
        black: vec![(0, 0); grid.ny],
    };
    for j in 0..grid.ny {
        for (color, rows) in [(0usize, &mut spans.red), (1usize, &mut spans.black)] {
            let mut start = w;
            let mut end = 0;
            for c in 0..w {
                let i = 2 * c + ((j + color) % 2);
                if i >= grid.nx {
                    break;
                }
                if interior.inside[j * grid.nx + i] {
                    if start == w {
                        start = c;
                    }
                    end = c + 1;
                }
            }
            rows[j] = if start == w { (0, 0) } else { (start, end) };
        }
    }
    (interior, spans)
}

/// Right-hand side f of (Delta_h + k^2) v = -f: either the constant one
/// (obstacle problem) or a density plane (linear lifts).
#[derive(Clone, Copy)]
enum Rhs<'a> {
    One,
    Plane { plane: &'a [f64], w: usize },
}

impl Rhs<'_> {
    #[inline]
    fn at(&self, j: usize, c: usize) -> f64 {
        match self {
            Rhs::One => 1.0,
            Rhs::Plane { plane, w } => plane[j * w + c],
        }
    }
}

/// One over-relaxed color pass.  `color` 0 updates red from black, 1 the
/// reverse.  When `obstacle` is given the update projects onto v <= obstacle.
fn sweep_color(
    v: &mut Planes,
    obstacle: Option<&Planes>,
    rhs: Rhs<'_>,
    spans: &Spans,
    color: usize,
    omega: f64,
    h2: f64,
    k2h2: f64,
) {
    let w = v.w;
    let ny = v.ny;
    let diag = 4.0 - k2h2;
    let (dst, src) = if color == 0 {
        (&mut v.red, &v.black)
    } else {
        (&mut v.black, &v.red)
    };
    let spans_row = if color == 0 { &spans.red } else { &spans.black };
    let obs_plane = obstacle.map(|o| if color == 0 { &o.red } else { &o.black });

    dst.par_chunks_mut(w)
        .enumerate()
        .skip(1)
        .take(ny.saturating_sub(2))
        .for_each(|(j, dst_row)| {
            let (start, end) = spans_row[j];
            if start >= end {
                return;
            }
            let mid = &src[j * w..(j + 1) * w];
            let up = &src[(j - 1) * w..j * w];
            let dn = &src[(j + 1) * w..(j + 2) * w];
            // Horizontal neighbors of the node at plane column c sit at
            // plane columns (c-1, c) when (j+color) is even, (c, c+1) when
            // odd; vertical neighbors share the column index.
            let shift = (j + color) % 2;
            if let Some(obs) = obs_plane {
                let obs_row = &obs[j * w..(j + 1) * w];
                for c in start..end {
                    let horiz = if shift == 0 {
                        mid[c - 1] + mid[c]
                    } else {
                        mid[c] + mid[c + 1]
                    };
                    let s = horiz + up[c] + dn[c];
                    let gs = (s + h2 * rhs.at(j, c)) / diag;
                    let cur = dst_row[c];
                    dst_row[c] = (cur + omega * (gs - cur)).min(obs_row[c]);
                }
            } else {
                for c in start..end {
                    let horiz = if shift == 0 {
                        mid[c - 1] + mid[c]
                    } else {
                        mid[c] + mid[c + 1]
                    };
                    let s = horiz + up[c] + dn[c];
                    let gs = (s + h2 * rhs.at(j, c)) / diag;
                    let cur = dst_row[c];
                    dst_row[c] = cur + omega * (gs - cur);
                }
            }
        });
}

/// Max over interior nodes of |min((Delta_h+k^2)v + f, obstacle - v)|
/// (complementarity residual), or of |(Delta_h+k^2)v + f| when unconstrained.
fn residual(
    v: &Planes,
    obstacle: Option<&Planes>,
    rhs_red: Rhs<'_>,
    rhs_black: Rhs<'_>,
    spans: &Spans,
    h2: f64,
    k2h2: f64,
) -> f64 {
    let w = v.w;
    let ny = v.ny;
    let diag = 4.0 - k2h2;
    let mut worst = 0.0_f64;
    for color in 0..2 {
        let (dst, src) = if color == 0 {
            (&v.red, &v.black)
        } else {
            (&v.black, &v.red)
        };
        let spans_row = if color == 0 { &spans.red } else { &spans.black };
        let obs_plane = obstacle.map(|o| if color == 0 { &o.red } else { &o.black });
        let rhs = if color == 0 { rhs_red } else { rhs_black };
        let color_worst = (1..ny - 1)
            .into_par_iter()
            .map(|j| {
                let (start, end) = spans_row[j];
                let mut m = 0.0_f64;
                if start >= end {
                    return m;
                }
                let row = &dst[j * w..(j + 1) * w];
                let mid = &src[j * w..(j + 1) * w];
                let up = &src[(j - 1) * w..j * w];
                let dn = &src[(j + 1) * w..(j + 2) * w];
                let shift = (j + color) % 2;
                for c in start..end {
                    let horiz = if shift == 0 {
                        mid[c - 1] + mid[c]
                    } else {
                        mid[c] + mid[c + 1]
                    };
                    let s = horiz + up[c] + dn[c];
                    let a = (s - diag * row[c]) / h2 + rhs.at(j, c);
                    let r = match obs_plane {
                        Some(obs) => a.min(obs[j * w + c] - row[c]),
                        None => a,
                    };
                    m = m.max(r.abs());
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(color_worst);
    }
    worst
}

/// Geometry shared by the solves on one grid.
struct DiskSetup {
    rr: f64,
    interior: Mask,
    collar: Mask,
    spans: Spans,
    h2: f64,
    k2h2: f64,
}

fn disk_setup(grid: &Grid2, params: HelmholtzParams) -> Result<DiskSetup> {
    let rr = r_max(params);
    for c in grid.center {
        if c.abs() + rr > grid.half_extent * (1.0 + 1e-12) {
            return Err(HqdError::Precondition(format!(
                "grid does not cover the closed disk of radius {rr}"
            )));
        }
    }
    let (interior, spans) = build_spans(grid, rr);
    let h = grid.h();
    let collar = Mask::from_fn(*grid, |p| {
        (p[0] * p[0] + p[1] * p[1]).sqrt() >= rr - 3.0 * h
    });
    Ok(DiskSetup {
        rr,
        interior,
        collar,
        spans,
        h2: h * h,
        k2h2: params.k * params.k * h * h,
    })
}

/// Solves (Delta_h + k^2) u = -rho at disk-interior nodes with the given
/// Dirichlet values elsewhere (u enters pre-filled with them; interior
/// entries are the initial guess).  Near-optimal relaxation for the linear
/// problem; tolerance in density units.
fn linear_lift(
    u: &mut Vec<f64>,
    rho: &[f64],
    grid: &Grid2,
    setup: &DiskSetup,
    tol: f64,
    max_iters: usize,
) -> Result<usize> {
    let mut planes = Planes::from_full(grid, u);
    let rho_planes = Planes::from_full(grid, rho);
    let n = grid.nx as f64;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / n).sin());
    let rhs_r = Rhs::Plane {
        plane: &rho_planes.red,
        w: rho_planes.w,
    };
    let rhs_b = Rhs::Plane {
        plane: &rho_planes.black,
        w: rho_planes.w,
    };
    let mut iters = 0;
    loop {
        for _ in 0..CHECK_EVERY {
            sweep_color(&mut planes, None, rhs_r, &setup.spans, 0, omega, setup.h2, setup.k2h2);
            sweep_color(&mut planes, None, rhs_b, &setup.spans, 1, omega, setup.h2, setup.k2h2);
            iters += 1;
        }
        let res = residual(&planes, None, rhs_r, rhs_b, &setup.spans, setup.h2, setup.k2h2);
        if res <= tol {
            break;
        }
        if iters >= max_iters {
            return Err(HqdError::NonConvergence {
                iterations: iters,
                residual: res,
            });
        }
    }
    *u = planes.to_full(grid);
    Ok(iters)
}

/// Assembles the obstacle: exact kernel sums for point masses plus the
/// discretely lifted potential of the density part (kernel quadrature as
/// Dirichlet data outside the disk, 5-point solve inside, so that
/// -(Delta_h+k^2)U reproduces the density exactly at interior nodes).
fn assemble_obstacle(
    measure: &Measure,
    grid: &Grid2,
    params: HelmholtzParams,
    setup: &DiskSetup,
) -> Result<(ScalarField, Vec<usize>)> {
    let fs = FundamentalSolution::new(params, setup.rr)?;
    let mut u = ScalarField::zeros(*grid);
    let mut dirac_nodes = Vec::new();

    for d in &measure.diracs {
        if let Some((i, j)) = grid.nearest_node(d.point) {
            let p = grid.node(i, j);
            if p == d.point {
                dirac_nodes.push(grid.idx(i, j));
            }
        }
    }
    add_dirac_potential(&mut u, &measure.diracs, &fs);

    if let Some(rho) = &measure.density {
        if rho.grid != *grid {
            return Err(HqdError::Precondition(
                "density measure must live on the solver grid".into(),
            ));
        }
        let cells = nonzero_cells(rho);
        if !cells.is_empty() {
            // Kernel quadrature on the pinned (non-interior) nodes only.
            let table = KernelTable::build(&fs, grid);
            let mut u_den = vec![0.0; grid.len()];
            let interior = &setup.interior.inside;
            u_den
                .par_chunks_mut(grid.nx)
                .enumerate()
                .for_each(|(j, row)| {
                    for (i, slot) in row.iter_mut().enumerate() {
                        if interior[j * grid.nx + i] {
                            continue;
                        }
                        let mut acc = 0.0;
                        for &(si, sj, v) in &cells {
                            acc +=
                                v * table.get(si as isize - i as isize, sj as isize - j as isize);
                        }
                        *slot = acc;
                    }
                });
            let lift_tol = 1e-10 * rho.max_abs().max(1.0);
            linear_lift(&mut u_den, &rho.values, grid, setup, lift_tol, 200_000)?;
            for (a, b) in u.values.iter_mut().zip(&u_den) {
                *a += *b;
            }
        }
    }
    Ok((u, dirac_nodes))
}

/// Extracts the non-contact and saturated masks from a solved state.
/// Point-mass nodes always count as non-contact.  The saturated mask is
/// opened by one cell to drop speckle, then re-unioned with omega so the
/// inclusion omega subset saturated holds verbatim.
pub fn extract_sets(
    result: &BalayageResult,
    u_mu: &ScalarField,
    cfg: &SolverConfig,
) -> (Mask, Mask) {
    let contact_tol = cfg.contact_tol * u_mu.max_abs();
    extract_sets_raw(
        &result.v,
        u_mu,
        &result.dirac_nodes,
        &result.interior,
        &result.nu,
        contact_tol,
    )
}

fn extract_sets_raw(
    v: &ScalarField,
    u: &ScalarField,
    dirac_nodes: &[usize],
    interior: &Mask,
    nu: &ScalarField,
    contact_tol: f64,
) -> (Mask, Mask) {
    let grid = v.grid;
    let mut omega = Mask::empty(grid);
    for idx in 0..grid.len() {
        omega.inside[idx] = interior.inside[idx] && u.values[idx] - v.values[idx] > contact_tol;
    }
    for &idx in dirac_nodes {
        omega.inside[idx] = interior.inside[idx];
    }
    let mut saturated = Mask::empty(grid);
    for idx in 0..grid.len() {
        saturated.inside[idx] = interior.inside[idx] && nu.values[idx] > 1.0 - CONTACT_DENSITY_TOL;
    }
    let saturated = saturated.opened().union(&omega);
    (omega, saturated)
}

/// Core solve: projected SOR on the complementarity system
///   (Delta_h + k^2) V >= -1,  V <= U,  ((Delta_h+k^2)V + 1)(U - V) = 0
/// at disk-interior nodes, V = U elsewhere.
pub fn solve_obstacle(
    measure: &Measure,
    grid: Grid2,
    params: HelmholtzParams,
    cfg: &SolverConfig,
) -> Result<BalayageResult> {
    if params.n != 2 {
        return Err(HqdError::Precondition(
            "the grid solver is two-dimensional".into(),
        ));
    }
    cfg.validate()?;
    measure.validate()?;
    let setup = disk_setup(&grid, params)?;
    let h = grid.h();
    if measure.support_radius() > setup.rr - 4.0 * h {
        return Err(HqdError::Precondition(format!(
            "measure support must stay 4h = {} inside the disk of radius {}",
            4.0 * h,
            setup.rr
        )));
    }

    let (u, dirac_nodes) = assemble_obstacle(measure, &grid, params, &setup)?;
    let u_scale = u.max_abs();
    let tol_abs = cfg.tol * u_scale.max(1.0);
    let contact_tol_abs = cfg.contact_tol * u_scale;

    // Obstacle planes carry +inf at point-mass nodes: the projection there
    // never binds, matching the convention that point sources are never
    // active constraints.
    let mut obstacle_full = u.values.clone();
    for &idx in &dirac_nodes {
        obstacle_full[idx] = f64::INFINITY;
    }
    let obstacle = Planes::from_full(&grid, &obstacle_full);
    let mut v_planes = Planes::from_full(&grid, &obstacle_full);
    // Finite start everywhere, including point-mass nodes.
    for (dst, src) in [
        (&mut v_planes.red, &obstacle.red),
        (&mut v_planes.black, &obstacle.black),
    ] {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = if s.is_finite() { *s } else { u_scale };
        }
    }

    let mut iterations = 0;
    let final_residual;
    loop {
        for _ in 0..CHECK_EVERY {
            sweep_color(
                &mut v_planes,
                Some(&obstacle),
                Rhs::One,
                &setup.spans,
                0,
                cfg.omega_relax,
                setup.h2,
                setup.k2h2,
            );
            sweep_color(
                &mut v_planes,
                Some(&obstacle),
                Rhs::One,
                &setup.spans,
                1,
                cfg.omega_relax,
                setup.h2,
                setup.k2h2,
            );
            iterations += 1;
        }
        let res = residual(
            &v_planes,
            Some(&obstacle),
            Rhs::One,
            Rhs::One,
            &setup.spans,
            setup.h2,
            setup.k2h2,
        );
        if res <= tol_abs {
            final_residual = res;
            break;
        }
        if iterations >= cfg.max_iters {
            return Err(HqdError::NonConvergence {
                iterations,
                residual: res,
            });
        }
    }

    let v = ScalarField {
        grid,
        values: v_planes.to_full(&grid),
    };
    let nu = discrete_nu(&v, params);
    let (omega, saturated) = extract_sets_raw(
        &v,
        &u,
        &dirac_nodes,
        &setup.interior,
        &nu,
        contact_tol_abs,
    );
    Ok(BalayageResult {
        v,
        u,
        nu,
        omega,
        saturated,
        interior: setup.interior,
        collar: setup.collar,
        dirac_nodes,
        iterations,
        final_residual,
        tol_abs,
        contact_tol_abs,
    })
}

/// nu = -(Delta_h + k^2) V, zero on the outermost node ring.
fn discrete_nu(v: &ScalarField, params: HelmholtzParams) -> ScalarField {
    let grid = v.grid;
    let h2 = grid.h() * grid.h();
    let k2 = params.k * params.k;
    let mut nu = ScalarField::zeros(grid);
    let vals = &v.values;
    let nx = grid.nx;
    for j in 1..grid.ny - 1 {
        for i in 1..nx - 1 {
            let idx = j * nx + i;
            let lap = (vals[idx - 1] + vals[idx + 1] + vals[idx - nx] + vals[idx + nx]
                - 4.0 * vals[idx])
                / h2;
            nu.values[idx] = -(lap + k2 * vals[idx]);
        }
    }
    nu
}

/// Discrete perimeter of a mask: count of inside/outside 4-neighbor edges
/// times the spacing.
pub fn mask_perimeter(mask: &Mask) -> f64 {
    let grid = mask.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    let mut edges = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            if !mask.inside[j * nx + i] {
                continue;
            }
            let mut check = |ii: isize, jj: isize| {
                if ii < 0 || jj < 0 || ii as usize >= nx || jj as usize >= ny {
                    edges += 1;
                } else if !mask.inside[jj as usize * nx + ii as usize] {
                    edges += 1;
                }
            };
            check(i as isize - 1, j as isize);
            check(i as isize + 1, j as isize);
            check(i as isize, j as isize - 1);
            check(i as isize, j as isize + 1);
        }
    }
    edges as f64 * grid.h()
}

#[derive(Debug, Serialize)]
pub struct IteratedReport {
    /// sup |V_{mu1+mu2} - V_{Bal(mu1)+mu2}| over all nodes.
    pub sup_diff: f64,
    /// max |U^{mu1+mu2}| for scaling the bound.
    pub u_scale: f64,
    /// Area of the symmetric difference between omega(mu1+mu2) and
    /// omega(mu1) union omega(Bal(mu1)+mu2).
    pub omega_symdiff_area: f64,
    /// Discrete perimeter of omega(mu1+mu2).
    pub omega_perimeter: f64,
    pub grid_h: f64,
}

/// Runs both sides of Bal(mu1 + mu2) = Bal(Bal(mu1) + mu2) and reports the
/// disagreement.  Bal(mu1) enters the second solve through its structure
/// decomposition: density one on the saturated set, the original mu1 off it.
pub fn iterated_balayage_compare(
    mu1: &Measure,
    mu2: &Measure,
    grid: Grid2,
    params: HelmholtzParams,
    cfg: &SolverConfig,
) -> Result<IteratedReport> {
    let r1 = solve_obstacle(mu1, grid, params, cfg)?;

    // nu1 = chi_D * 1 + chi_{D^c} * mu1 with D the saturated set.
    let mut density = ScalarField::zeros(grid);
    let zero_rho;
    let rho1 = match &mu1.density {
        Some(r) => r,
        None => {
            zero_rho = ScalarField::zeros(grid);
            &zero_rho
        }
    };
    for idx in 0..grid.len() {
        density.values[idx] = if r1.saturated.inside[idx] {
            1.0
        } else {
            rho1.values[idx]
        };
    }
    let mut nu1_diracs = Vec::new();
    for d in &mu1.diracs {
        let inside = grid
            .nearest_node(d.point)
            .map(|(i, j)| r1.saturated.inside[grid.idx(i, j)])
            .unwrap_or(false);
        if !inside {
            nu1_diracs.push(*d);
        }
    }
    let nu1 = Measure {
        diracs: nu1_diracs,
        density: Some(density),
    };

    let sum_a = mu1.sum(mu2)?;
    let sum_b = nu1.sum(mu2)?;
    let ra = solve_obstacle(&sum_a, grid, params, cfg)?;
    let rb = solve_obstacle(&sum_b, grid, params, cfg)?;

    let sup_diff = ra
        .v
        .values
        .iter()
        .zip(&rb.v.values)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let union = r1.omega.union(&rb.omega);
    Ok(IteratedReport {
        sup_diff,
        u_scale: ra.u.max_abs(),
        omega_symdiff_area: ra.omega.symmetric_difference_area(&union),
        omega_perimeter: mask_perimeter(&ra.omega),
        grid_h: grid.h(),
    })
}

#[derive(Debug, Serialize)]
pub struct PipelineChecks {
    pub ball_4eps_included: bool,
    pub connected: bool,
    pub domain_area: f64,
    pub source_mass: f64,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub result: BalayageResult,
    /// The constructed quadrature domain D = omega(mu * h_delta).
    pub domain: Mask,
    pub mollified: Measure,
    pub checks: PipelineChecks,
}

/// The construction pipeline: mollify mu over B_{2 eps}, sweep the result,
/// take D = omega.  Validates the support inclusion B_{4 eps} in D,
/// 4-connectivity of D, and the w = 1 sub-solution mass bound
/// m(D) >= mu(R^2); failures name the broken inequality (all three express
/// the admissibility range `0 < k < c_n / mass^{1/n}` of the construction).
pub fn quadrature_domain_pipeline(
    mu: &Measure,
    params: HelmholtzParams,
    epsilon: f64,
    grid: Grid2,
    cfg: &SolverConfig,
) -> Result<PipelineOutcome> {
    if !(epsilon > 0.0) {
        return Err(HqdError::Precondition("epsilon must be positive".into()));
    }
    if mu.support_radius() > epsilon {
        return Err(HqdError::Precondition(format!(
            "measure support must lie in the ball of radius epsilon = {epsilon}"
        )));
    }
    let delta = 2.0 * epsilon;
    let mollified = crate::measures::mollify(mu, params, delta, grid)?;
    let result = solve_obstacle(&mollified, grid, params, cfg)?;
    let domain = result.omega.clone();

    let mut ball_ok = true;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.node(i, j);
            if (p[0] * p[0] + p[1] * p[1]).sqrt() <= 4.0 * epsilon
                && !domain.inside[grid.idx(i, j)]
            {
                ball_ok = false;
            }
        }
    }
    let connected = domain.connected_components() == 1;
    let checks = PipelineChecks {
        ball_4eps_included: ball_ok,
        connected,
        domain_area: domain.area(),
        source_mass: mu.total_mass(),
    };
    if !ball_ok {
        return Err(HqdError::AdmissibilityFailure(
            "support inclusion B_{4eps} in omega(mu*h) failed; (k, mass, eps) outside the \
             admissible k-range"
                .into(),
        ));
    }
    if !connected {
        return Err(HqdError::AdmissibilityFailure(
            "omega(mu*h) is not connected; (k, mass, eps) outside the admissible k-range".into(),
        ));
    }
    if checks.domain_area < checks.source_mass {
        return Err(HqdError::AdmissibilityFailure(format!(
            "m(D) = {} < mu(R^2) = {}; sub-solution mass bound failed (k-range)",
            checks.domain_area, checks.source_mass
        )));
    }
    Ok(PipelineOutcome {
        result,
        domain,
        mollified,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::mvt_constant;
    use crate::measures::Dirac;
    use crate::specialfn::{bessel, BesselKind, BesselOrder};

    fn p2() -> HelmholtzParams {
        HelmholtzParams::new(2, 1.0).unwrap()
    }

    fn lemma_ball_measure(grid: Grid2, r_in: f64, r_out: f64) -> (Measure, f64) {
        // kappa = c(2,k,r_out)/c(2,k,r_in) = (r_out J_1(r_out)) / (r_in J_1(r_in)).
        let j_out = bessel(BesselKind::J, BesselOrder::ONE, r_out).unwrap();
        let j_in = bessel(BesselKind::J, BesselOrder::ONE, r_in).unwrap();
        let kappa = (r_out * j_out) / (r_in * j_in);
        let rho = ScalarField::from_fn(grid, |p| {
            if (p[0] * p[0] + p[1] * p[1]).sqrt() <= r_in {
                kappa
            } else {
                0.0
            }
        });
        (Measure::from_density(rho).unwrap(), kappa)
    }

    #[test]
    fn zero_measure_solves_to_zero() {
        let params = p2();
        let grid = Grid2::centered(r_max(params), 65).unwrap();
        let res =
            solve_obstacle(&Measure::default(), grid, params, &SolverConfig::default()).unwrap();
        assert!(res.v.max_abs() <= 1e-12);
        assert_eq!(res.omega.count(), 0);
        assert!(res.nu.max_abs() <= 1e-9);
    }

    #[test]
    fn lemma_ball_sweep_reconstructs_disk() {
        let params = p2();
        let grid = Grid2::centered(r_max(params), 129).unwrap();
        let (mu, kappa) = lemma_ball_measure(grid, 0.3, 0.6);
        assert!((kappa - 3.866_009_657_682_331_7).abs() < 1e-12);
        let res = solve_obstacle(&mu, grid, params, &SolverConfig::default()).unwrap();
        let disk = Mask::disk(grid, [0.0, 0.0], 0.6);
        let rel = res.omega.symmetric_difference_area(&disk) / disk.area();
        assert!(rel <= 0.08, "omega misses B_0.6: relative symdiff {rel}");
        assert!(res.omega.is_subset_of(&res.saturated));
    }

    #[test]
    fn dirac_ball_reconstruction() {
        // mu = c(2,1,0.8) delta_0 sweeps out to the disk of radius 0.8.
        let params = p2();
        let grid = Grid2::centered(r_max(params), 129).unwrap();
        let mass = mvt_constant(params, 0.8);
        let mu = Measure::from_diracs(vec![Dirac {
            point: [0.0, 0.0],
            weight: mass,
        }])
        .unwrap();
        let res = solve_obstacle(&mu, grid, params, &SolverConfig::default()).unwrap();
        let disk = Mask::disk(grid, [0.0, 0.0], 0.8);
        let rel = res.omega.symmetric_difference_area(&disk) / disk.area();
        assert!(rel <= 0.08, "omega misses B_0.8: relative symdiff {rel}");
    }

    #[test]
    fn structure_inequalities_hold() {
        let params = p2();
        let grid = Grid2::centered(r_max(params), 129).unwrap();
        let (mu, _) = lemma_ball_measure(grid, 0.3, 0.6);
        let res = solve_obstacle(&mu, grid, params, &SolverConfig::default()).unwrap();
        let rho = mu.density.as_ref().unwrap();
        // The off-D comparison skips the free-boundary transition band where
        // the discrete nu interpolates between mu and one.
        let d_band = res.saturated.dilated().dilated();
        for idx in 0..grid.len() {
            if !res.interior.inside[idx] || res.collar.inside[idx] {
                continue;
            }
            let nu = res.nu.values[idx];
            assert!(nu <= 1.0 + 1e-6, "nu = {nu} exceeds one at {idx}");
            assert!(
                rho.values[idx].min(1.0) - 1e-6 <= nu,
                "nu = {nu} below min(mu,1) = {} at {idx}",
                rho.values[idx].min(1.0)
            );
            if res.omega.inside[idx] {
                assert!((nu - 1.0).abs() <= 1e-6, "nu = {nu} off one inside omega");
            }
            if !d_band.inside[idx] {
                assert!(
                    (nu - rho.values[idx]).abs() <= 1e-6,
                    "nu = {nu} != mu = {} off D at {idx}",
                    rho.values[idx]
                );
            }
        }
        // V <= U with 1e-13 slack, and equality off the disk.
        for idx in 0..grid.len() {
            assert!(res.v.values[idx] <= res.u.values[idx] + 1e-13);
            if !res.interior.inside[idx] {
                assert_eq!(res.v.values[idx], res.u.values[idx]);
            }
        }
        // Mass inequality m(omega) >= mass - perimeter h.
        let mass = mu.total_mass();
        assert!(res.omega.area() >= mass - mask_perimeter(&res.omega) * grid.h());
    }

    #[test]
    fn iterated_sweep_idempotent_for_zero_second_measure() {
        let params = p2();
        let grid = Grid2::centered(r_max(params), 97).unwrap();
        let (mu1, _) = lemma_ball_measure(grid, 0.3, 0.6);
        let report = iterated_balayage_compare(
            &mu1,
            &Measure::default(),
            grid,
            params,
            &SolverConfig::default(),
        )
        .unwrap();
        // Both runs sweep the same mass distribution up to the discrete
        // free-boundary staircase.
        assert!(
            report.sup_diff <= 2e-3 * report.u_scale,
            "sup diff {} vs scale {}",
            report.sup_diff,
            report.u_scale
        );
    }

    #[test]
    fn pipeline_constructs_disk_from_point_mass() {
        let params = p2();
        let grid = Grid2::centered(r_max(params), 129).unwrap();
        let mass = mvt_constant(params, 0.8);
        let mu = Measure::from_diracs(vec![Dirac {
            point: [0.0, 0.0],
            weight: mass,
        }])
        .unwrap();
        let out =
            quadrature_domain_pipeline(&mu, params, 0.1, grid, &SolverConfig::default()).unwrap();
        assert!(out.checks.ball_4eps_included);
        assert!(out.checks.connected);
        let r_rec = out.domain.equivalent_radius();
        assert!(
            (r_rec - 0.8).abs() <= 2.0 * grid.h(),
            "recovered radius {r_rec}"
        );
    }

    #[test]
    fn pipeline_rejects_oversized_epsilon() {
        // Tiny mass with a large smearing radius: the 4 eps ball cannot fit
        // inside the swept domain.
        let params = p2();
        let grid = Grid2::centered(r_max(params), 129).unwrap();
        let mu = Measure::from_diracs(vec![Dirac {
            point: [0.0, 0.0],
            weight: 0.05,
        }])
        .unwrap();
        let err = quadrature_domain_pipeline(&mu, params, 0.2, grid, &SolverConfig::default())
            .unwrap_err();
        assert!(matches!(err, HqdError::AdmissibilityFailure(_)));
    }

    #[test]
    fn solver_is_thread_count_independent() {
        let params = p2();
        let grid = Grid2::centered(r_max(params), 97).unwrap();
        let (mu, _) = lemma_ball_measure(grid, 0.3, 0.6);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| solve_obstacle(&mu, grid, params, &SolverConfig::default()).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.iterations, b.iterations);
        assert!(a
            .v
            .values
            .iter()
            .zip(&b.v.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn support_margin_precondition() {
        let params = p2();
        let grid = Grid2::centered(r_max(params), 65).unwrap();
        let mu = Measure::from_diracs(vec![Dirac {
            point: [r_max(params) - 0.01, 0.0],
            weight: 1.0,
        }])
        .unwrap();
        assert!(matches!(
            solve_obstacle(&mu, grid, params, &SolverConfig::default()),
            Err(HqdError::Precondition(_))
        ));
    }
}
