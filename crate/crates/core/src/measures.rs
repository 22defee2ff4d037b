//! Source measures (weighted point masses plus an optional grid density),
//! uniform grids, scalar fields, boolean masks, and evaluation of the
//! potential `Phi * mu` on a grid.

use crate::error::{HqdError, Result};
use crate::kernel::{mollifier_density, FundamentalSolution, HelmholtzParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Uniform square-celled grid.  Node (i, j) sits at
/// `center + (-half_extent + i h, -half_extent + j h)` with
/// `h = 2 half_extent / (nx - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub center: [f64; 2],
    pub half_extent: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2 {
    pub fn new(center: [f64; 2], half_extent: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx != ny {
            return Err(HqdError::Precondition(format!(
                "square cells require nx == ny, got {nx} x {ny}"
            )));
        }
        if nx < 2 || !(half_extent > 0.0) {
            return Err(HqdError::Precondition(format!(
                "grid needs nx >= 2 and half_extent > 0, got nx={nx}, he={half_extent}"
            )));
        }
        Ok(Grid2 {
            center,
            half_extent,
            nx,
            ny,
        })
    }

    /// Centered at the origin, `n` nodes per side.
    pub fn centered(half_extent: f64, n: usize) -> Result<Self> {
        Grid2::new([0.0, 0.0], half_extent, n, n)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_extent / (self.nx - 1) as f64
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h * h
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [
            self.center[0] - self.half_extent + i as f64 * h,
            self.center[1] - self.half_extent + j as f64 * h,
        ]
    }

    /// Nearest node index to a point, if the point is inside the grid box.
    pub fn nearest_node(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let h = self.h();
        let fi = (p[0] - self.center[0] + self.half_extent) / h;
        let fj = (p[1] - self.center[1] + self.half_extent) / h;
        let i = fi.round() as isize;
        let j = fj.round() as isize;
        if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
            None
        } else {
            Some((i as usize, j as usize))
        }
    }
}

/// Real values on every node of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid2,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.node(i, j)));
            }
        }
        ScalarField { grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn validate_finite(&self) -> Result<()> {
        if self.values.len() != self.grid.len() {
            return Err(HqdError::Precondition(format!(
                "field length {} does not match grid {}x{}",
                self.values.len(),
                self.grid.nx,
                self.grid.ny
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(HqdError::Precondition(
                "field contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// Boolean per-node mask on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub grid: Grid2,
    pub inside: Vec<bool>,
}

impl Mask {
    pub fn from_fn(grid: Grid2, f: impl Fn([f64; 2]) -> bool) -> Self {
        let mut inside = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                inside.push(f(grid.node(i, j)));
            }
        }
        Mask { grid, inside }
    }

    pub fn empty(grid: Grid2) -> Self {
        Mask {
            grid,
            inside: vec![false; grid.len()],
        }
    }

    pub fn disk(grid: Grid2, center: [f64; 2], radius: f64) -> Self {
        Mask::from_fn(grid, |p| {
            ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() <= radius
        })
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|b| **b).count()
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    pub fn symmetric_difference_area(&self, other: &Mask) -> f64 {
        assert_eq!(self.grid, other.grid);
        let n = self
            .inside
            .iter()
            .zip(&other.inside)
            .filter(|(a, b)| a != b)
            .count();
        n as f64 * self.grid.cell_area()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.inside
            .iter()
            .zip(&other.inside)
            .all(|(a, b)| !*a || *b)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!(self.grid, other.grid);
        Mask {
            grid: self.grid,
            inside: self
                .inside
                .iter()
                .zip(&other.inside)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    pub fn centroid(&self) -> [f64; 2] {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut n = 0usize;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                if self.inside[self.grid.idx(i, j)] {
                    let p = self.grid.node(i, j);
                    cx += p[0];
                    cy += p[1];
                    n += 1;
                }
            }
        }
        if n == 0 {
            self.grid.center
        } else {
            [cx / n as f64, cy / n as f64]
        }
    }

    /// Radius of the disk with the same area.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area() / PI).sqrt()
    }

    fn morph(&self, erode: bool) -> Mask {
        // 4-neighborhood erosion or dilation; the grid edge counts as outside.
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut out = vec![false; self.inside.len()];
        for j in 0..ny {
            for i in 0..nx {
                let at = |ii: isize, jj: isize| -> bool {
                    if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                        false
                    } else {
                        self.inside[self.grid.idx(ii as usize, jj as usize)]
                    }
                };
                let (ii, jj) = (i as isize, j as isize);
                let nbh = [
                    at(ii, jj),
                    at(ii - 1, jj),
                    at(ii + 1, jj),
                    at(ii, jj - 1),
                    at(ii, jj + 1),
                ];
                out[self.grid.idx(i, j)] = if erode {
                    nbh.iter().all(|b| *b)
                } else {
                    nbh.iter().any(|b| *b)
                };
            }
        }
        Mask {
            grid: self.grid,
            inside: out,
        }
    }

    pub fn eroded(&self) -> Mask {
        self.morph(true)
    }

    pub fn dilated(&self) -> Mask {
        self.morph(false)
    }

    /// Morphological opening by one cell (erosion then dilation).
    pub fn opened(&self) -> Mask {
        self.eroded().dilated()
    }

    /// Number of 4-connected components among inside nodes.
    pub fn connected_components(&self) -> usize {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut seen = vec![false; self.inside.len()];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..self.inside.len() {
            if !self.inside[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let i = idx % nx;
                let j = idx / nx;
                let mut push = |ii: isize, jj: isize| {
                    if ii >= 0 && jj >= 0 && (ii as usize) < nx && (jj as usize) < ny {
                        let nb = jj as usize * nx + ii as usize;
                        if self.inside[nb] && !seen[nb] {
                            seen[nb] = true;
                            stack.push(nb);
                        }
                    }
                };
                push(i as isize - 1, j as isize);
                push(i as isize + 1, j as isize);
                push(i as isize, j as isize - 1);
                push(i as isize, j as isize + 1);
            }
        }
        components
    }
}

/// A weighted point mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dirac {
    pub point: [f64; 2],
    pub weight: f64,
}

/// Finite non-negative measure: point masses plus an optional grid density.
#[derive(Clone, Debug, Default)]
pub struct Measure {
    pub diracs: Vec<Dirac>,
    pub density: Option<ScalarField>,
}

impl Measure {
    pub fn from_diracs(diracs: Vec<Dirac>) -> Result<Self> {
        let m = Measure {
            diracs,
            density: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_density(density: ScalarField) -> Result<Self> {
        let m = Measure {
            diracs: Vec::new(),
            density: Some(density),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.diracs {
            if !(d.weight > 0.0) || !d.weight.is_finite() {
                return Err(HqdError::Precondition(format!(
                    "dirac weight must be positive and finite, got {}",
                    d.weight
                )));
            }
            if !d.point.iter().all(|c| c.is_finite()) {
                return Err(HqdError::Precondition("dirac point not finite".into()));
            }
        }
        if let Some(rho) = &self.density {
            rho.validate_finite()?;
            if rho.values.iter().any(|v| *v < 0.0) {
                return Err(HqdError::Precondition(
                    "density values must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Sum of the two measures.  Densities must live on the same grid.
    pub fn sum(&self, other: &Measure) -> Result<Measure> {
        let mut diracs = self.diracs.clone();
        diracs.extend_from_slice(&other.diracs);
        let density = match (&self.density, &other.density) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (Some(a), Some(b)) => {
                if a.grid != b.grid {
                    return Err(HqdError::Precondition(
                        "cannot add densities on different grids".into(),
                    ));
                }
                let mut v = a.clone();
                for (x, y) in v.values.iter_mut().zip(&b.values) {
                    *x += *y;
                }
                Some(v)
            }
        };
        Ok(Measure { diracs, density })
    }

    /// mu(R^2): dirac weights plus density integrated by the midpoint rule.
    pub fn total_mass(&self) -> f64 {
        let mut mass: f64 = self.diracs.iter().map(|d| d.weight).sum();
        if let Some(rho) = &self.density {
            let cell = rho.grid.cell_area();
            mass += rho.values.iter().sum::<f64>() * cell;
        }
        mass
    }

    /// Largest distance from the origin over the support (diracs and
    /// nonzero density cells); zero measure gives 0.
    pub fn support_radius(&self) -> f64 {
        let mut r: f64 = 0.0;
        for d in &self.diracs {
            r = r.max((d.point[0].powi(2) + d.point[1].powi(2)).sqrt());
        }
        if let Some(rho) = &self.density {
            for j in 0..rho.grid.ny {
                for i in 0..rho.grid.nx {
                    if rho.values[rho.grid.idx(i, j)] > 0.0 {
                        let p = rho.grid.node(i, j);
                        r = r.max((p[0].powi(2) + p[1].powi(2)).sqrt());
                    }
                }
            }
        }
        r
    }
}

/// Free-standing alias matching the operation name.
pub fn total_mass(measure: &Measure) -> f64 {
    measure.total_mass()
}

/// Analytic integral of ln|y| over the square cell [-h/2, h/2]^2.
pub(crate) fn log_cell_integral(h: f64) -> f64 {
    let a = 0.5 * h;
    2.0 * a * a * (2.0 * a.ln() + std::f64::consts::LN_2 - 3.0 + PI / 2.0)
}

/// Integral of the kernel over the cell containing its singularity:
/// split Phi = -(ln r)/(2 pi) + smooth, integrate the log analytically and
/// the remainder by the midpoint value at the singularity.
pub(crate) fn singular_cell_integral(fs: &FundamentalSolution, h: f64) -> f64 {
    -log_cell_integral(h) / (2.0 * PI) + fs.log_remainder_at_zero() * h * h
}

/// Offset table K[(di,dj)] = integral of Phi over the cell at lattice offset
/// (di, dj) from the target node, for same-grid density convolution.
pub(crate) struct KernelTable {
    n: usize,
    values: Vec<f64>,
}

impl KernelTable {
    pub(crate) fn build(fs: &FundamentalSolution, grid: &Grid2) -> KernelTable {
        let n = grid.nx;
        let h = grid.h();
        let cell = h * h;
        let mut values = vec![0.0; n * n];
        values[0] = singular_cell_integral(fs, h);
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|dj| {
                let mut row = vec![0.0; n];
                for (di, slot) in row.iter_mut().enumerate() {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let r = h * ((di * di + dj * dj) as f64).sqrt();
                    *slot = fs.value(r) * cell;
                }
                row
            })
            .collect();
        for (dj, row) in rows.into_iter().enumerate() {
            for (di, v) in row.into_iter().enumerate() {
                if di != 0 || dj != 0 {
                    values[dj * n + di] = v;
                }
            }
        }
        KernelTable { n, values }
    }

    #[inline]
    pub(crate) fn get(&self, di: isize, dj: isize) -> f64 {
        self.values[dj.unsigned_abs() * self.n + di.unsigned_abs()]
    }
}

/// Nonzero density cells in deterministic (row-major) order.
pub(crate) fn nonzero_cells(rho: &ScalarField) -> Vec<(usize, usize, f64)> {
    let mut cells = Vec::new();
    for j in 0..rho.grid.ny {
        for i in 0..rho.grid.nx {
            let v = rho.values[rho.grid.idx(i, j)];
            if v != 0.0 {
                cells.push((i, j, v));
            }
        }
    }
    cells
}

/// Potential U(x) = sum_j w_j Phi(|x - a_j|) + integral of Phi(|x-y|) rho(y) dy
/// on the nodes of `grid`.  A point mass sitting exactly on a node skips its
/// own (infinite) self-term; `solve`-side code treats such nodes separately.
pub fn potential(
    measure: &Measure,
    grid: Grid2,
    params: HelmholtzParams,
    radius: f64,
) -> Result<ScalarField> {
    if params.n != 2 {
        return Err(HqdError::Precondition(
            "grid potentials are implemented for n = 2 only".into(),
        ));
    }
    measure.validate()?;
    let fs = FundamentalSolution::new(params, radius)?;
    for d in &measure.diracs {
        let r = (d.point[0].powi(2) + d.point[1].powi(2)).sqrt();
        if r >= radius {
            return Err(HqdError::SupportViolation(format!(
                "dirac at ({}, {}) lies outside the ball of radius {radius}",
                d.point[0], d.point[1]
            )));
        }
    }

    let mut out = ScalarField::zeros(grid);
    add_dirac_potential(&mut out, &measure.diracs, &fs);
    if let Some(rho) = &measure.density {
        add_density_potential(&mut out, rho, &fs)?;
    }
    Ok(out)
}

/// Adds the point-mass part of the potential; exact-hit self-terms are
/// skipped (the value stored is the finite remainder).
pub(crate) fn add_dirac_potential(out: &mut ScalarField, diracs: &[Dirac], fs: &FundamentalSolution) {
    if diracs.is_empty() {
        return;
    }
    let grid = out.grid;
    out.values
        .par_chunks_mut(grid.nx)
        .enumerate()
        .for_each(|(j, row)| {
            for (i, slot) in row.iter_mut().enumerate() {
                let p = grid.node(i, j);
                let mut acc = 0.0;
                for d in diracs {
                    let r = ((p[0] - d.point[0]).powi(2) + (p[1] - d.point[1]).powi(2)).sqrt();
                    if r > 0.0 {
                        acc += d.weight * fs.value(r);
                    }
                }
                *slot += acc;
            }
        });
}

pub(crate) fn add_density_potential(
    out: &mut ScalarField,
    rho: &ScalarField,
    fs: &FundamentalSolution,
) -> Result<()> {
    let grid = out.grid;
    let cells = nonzero_cells(rho);
    if cells.is_empty() {
        return Ok(());
    }
    if rho.grid == grid {
        // Same lattice: all distances live on the offset table.
        let table = KernelTable::build(fs, &grid);
        out.values
            .par_chunks_mut(grid.nx)
            .enumerate()
            .for_each(|(j, row)| {
                for (i, slot) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for &(si, sj, v) in &cells {
                        acc += v * table.get(si as isize - i as isize, sj as isize - j as isize);
                    }
                    *slot += acc;
                }
            });
        Ok(())
    } else {
        let h_s = rho.grid.h();
        let cell = rho.grid.cell_area();
        let singular = singular_cell_integral(fs, h_s);
        out.values
            .par_chunks_mut(grid.nx)
            .enumerate()
            .for_each(|(j, row)| {
                for (i, slot) in row.iter_mut().enumerate() {
                    let p = grid.node(i, j);
                    let mut acc = 0.0;
                    for &(si, sj, v) in &cells {
                        let q = rho.grid.node(si, sj);
                        let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                        acc += if r < 1e-12 * h_s {
                            v * singular
                        } else {
                            v * fs.value(r) * cell
                        };
                    }
                    *slot += acc;
                }
            });
        Ok(())
    }
}

/// mu * h_delta as a pure grid density: node value mu(B_delta(x)) / c(n,k,delta).
/// Dirac contributions count by exact disk membership, density contributions
/// by cell-center membership.
pub fn mollify(
    measure: &Measure,
    params: HelmholtzParams,
    delta: f64,
    grid: Grid2,
) -> Result<Measure> {
    measure.validate()?;
    let inv_c = mollifier_density(params, delta)?;
    let cells = measure.density.as_ref().map(nonzero_cells).unwrap_or_default();
    let src_grid = measure.density.as_ref().map(|d| d.grid);
    let src_cell_area = src_grid.map(|g| g.cell_area()).unwrap_or(0.0);

    let mut out = ScalarField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.node(i, j);
            let mut mass = 0.0;
            for d in &measure.diracs {
                let r2 = (p[0] - d.point[0]).powi(2) + (p[1] - d.point[1]).powi(2);
                if r2 < delta * delta {
                    mass += d.weight;
                }
            }
            for &(si, sj, v) in &cells {
                let q = src_grid.unwrap().node(si, sj);
                let r2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                if r2 < delta * delta {
                    mass += v * src_cell_area;
                }
            }
            out.values[grid.idx(i, j)] = mass * inv_c;
        }
    }
    Measure::from_density(out)
}
