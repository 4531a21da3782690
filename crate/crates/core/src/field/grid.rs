use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Domain description accepted by [`build_grid`].
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    /// `n` cells on `[0, length]`.
    Interval { n: usize, length: f64 },
    /// `nx * ny` cells on `[0, lx] x [0, ly]`.
    Rectangle { nx: usize, ny: usize, lx: f64, ly: f64 },
    /// Row-major `nx * ny` mask (`mask[i + nx * j]`) with isotropic spacing `h`.
    Masked {
        nx: usize,
        ny: usize,
        h: f64,
        mask: Vec<bool>,
        label: String,
    },
}

impl DomainSpec {
    pub fn interval(n: usize, length: f64) -> Self {
        DomainSpec::Interval { n, length }
    }

    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        DomainSpec::Rectangle { nx, ny, lx, ly }
    }

    /// Square of side `length` with the upper-right quadrant removed.
    pub fn l_shape(n: usize, length: f64) -> Self {
        let half = n / 2;
        let mask = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx % n, idx / n);
                !(i >= half && j >= half)
            })
            .collect();
        DomainSpec::Masked {
            nx: n,
            ny: n,
            h: length / n as f64,
            mask,
            label: "lshape".into(),
        }
    }

    /// Cells of an `n x n` box of side `length` whose centers fall inside the
    /// inscribed disc.
    pub fn disc(n: usize, length: f64) -> Self {
        let h = length / n as f64;
        let c = 0.5 * length;
        let mask = (0..n * n)
            .map(|idx| {
                let x = ((idx % n) as f64 + 0.5) * h - c;
                let y = ((idx / n) as f64 + 0.5) * h - c;
                x * x + y * y <= c * c
            })
            .collect();
        DomainSpec::Masked {
            nx: n,
            ny: n,
            h,
            mask,
            label: "disc".into(),
        }
    }
}

/// Which side of a cell along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }

    fn slot(self) -> usize {
        match self {
            Side::Minus => 0,
            Side::Plus => 1,
        }
    }
}

/// A boundary face of an interior cell. Corner cells appear once per
/// boundary face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCell {
    pub cell: usize,
    pub axis: usize,
    pub outward: Side,
}

impl BoundaryCell {
    /// Outward unit normal (axis aligned).
    pub fn normal(&self) -> [f64; 2] {
        let mut nu = [0.0; 2];
        nu[self.axis] = self.outward.sign();
        nu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridKind {
    Interval,
    Rectangle,
    Masked(String),
}

/// Cell-centered grid on an interval, a rectangle or a masked subset of a
/// rectangle. Interior cells are numbered row-major (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    shape: [usize; 2],
    h: [f64; 2],
    mask: Vec<bool>,
    convex: bool,
    kind: GridKind,
    cells: Vec<[usize; 2]>,
    lookup: Vec<Option<usize>>,
    neighbors: Vec<[[Option<usize>; 2]; 2]>,
    boundary: Vec<BoundaryCell>,
}

/// Builds a grid from a domain description.
pub fn build_grid(spec: &DomainSpec) -> Result<Arc<Grid>> {
    Grid::build(spec).map(Arc::new)
}

fn check_spacing(v: f64, what: &str) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidGrid(format!("{what} must be positive, got {v}")));
    }
    Ok(())
}

fn check_count(n: usize, what: &str) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidGrid(format!(
            "{what} needs at least 3 cells, got {n}"
        )));
    }
    Ok(())
}

impl Grid {
    pub fn build(spec: &DomainSpec) -> Result<Grid> {
        match spec {
            DomainSpec::Interval { n, length } => {
                check_count(*n, "interval")?;
                check_spacing(*length, "length")?;
                Ok(Self::assemble(
                    1,
                    [*n, 1],
                    [length / *n as f64, 1.0],
                    vec![true; *n],
                    true,
                    GridKind::Interval,
                ))
            }
            DomainSpec::Rectangle { nx, ny, lx, ly } => {
                check_count(*nx, "x axis")?;
                check_count(*ny, "y axis")?;
                check_spacing(*lx, "lx")?;
                check_spacing(*ly, "ly")?;
                Ok(Self::assemble(
                    2,
                    [*nx, *ny],
                    [lx / *nx as f64, ly / *ny as f64],
                    vec![true; nx * ny],
                    true,
                    GridKind::Rectangle,
                ))
            }
            DomainSpec::Masked {
                nx,
                ny,
                h,
                mask,
                label,
            } => {
                check_count(*nx, "x axis")?;
                check_count(*ny, "y axis")?;
                check_spacing(*h, "h")?;
                if mask.len() != nx * ny {
                    return Err(Error::InvalidGrid(format!(
                        "mask has {} entries, expected {}",
                        mask.len(),
                        nx * ny
                    )));
                }
                if !mask.iter().any(|&m| m) {
                    return Err(Error::InvalidGrid("mask has no interior cells".into()));
                }
                let full = mask.iter().all(|&m| m);
                let grid = Self::assemble(
                    2,
                    [*nx, *ny],
                    [*h, *h],
                    mask.clone(),
                    full,
                    GridKind::Masked(label.clone()),
                );
                let components = grid.count_components();
                if components != 1 {
                    return Err(Error::DisconnectedMask { components });
                }
                Ok(grid)
            }
        }
    }

    fn assemble(
        dim: usize,
        shape: [usize; 2],
        h: [f64; 2],
        mask: Vec<bool>,
        convex: bool,
        kind: GridKind,
    ) -> Grid {
        let [nx, ny] = shape;
        let mut cells = Vec::new();
        let mut lookup = vec![None; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if mask[i + nx * j] {
                    lookup[i + nx * j] = Some(cells.len());
                    cells.push([i, j]);
                }
            }
        }
        let at = |i: isize, j: isize| -> Option<usize> {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                None
            } else {
                lookup[i as usize + nx * j as usize]
            }
        };
        let mut neighbors = Vec::with_capacity(cells.len());
        let mut boundary = Vec::new();
        for (k, &[i, j]) in cells.iter().enumerate() {
            let (i, j) = (i as isize, j as isize);
            let mut nb = [[None; 2]; 2];
            for axis in 0..dim {
                for side in [Side::Minus, Side::Plus] {
                    let step = side.sign() as isize;
                    let (ni, nj) = if axis == 0 { (i + step, j) } else { (i, j + step) };
                    nb[axis][side.slot()] = at(ni, nj);
                    if nb[axis][side.slot()].is_none() {
                        boundary.push(BoundaryCell {
                            cell: k,
                            axis,
                            outward: side,
                        });
                    }
                }
            }
            neighbors.push(nb);
        }
        Grid {
            dim,
            shape,
            h,
            mask,
            convex,
            kind,
            cells,
            lookup,
            neighbors,
            boundary,
        }
    }

    fn count_components(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut components = 0;
        for start in 0..self.cells.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(k) = queue.pop_front() {
                for axis in 0..self.dim {
                    for side in [Side::Minus, Side::Plus] {
                        if let Some(n) = self.neighbor(k, axis, side) {
                            if !seen[n] {
                                seen[n] = true;
                                queue.push_back(n);
                            }
                        }
                    }
                }
            }
        }
        components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cell counts per axis (`[n, 1]` for intervals).
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn h(&self) -> [f64; 2] {
        self.h
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        self.h[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Measure of one cell (product of the active spacings).
    pub fn cell_measure(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// Measure of the whole domain.
    pub fn measure(&self) -> f64 {
        self.cell_measure() * self.cells.len() as f64
    }

    /// Bounding-box side lengths.
    pub fn extent(&self) -> [f64; 2] {
        [
            self.shape[0] as f64 * self.h[0],
            if self.dim == 2 {
                self.shape[1] as f64 * self.h[1]
            } else {
                0.0
            },
        ]
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn kind(&self) -> &GridKind {
        &self.kind
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of interior cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Array position `[i, j]` of interior cell `k`.
    pub fn cell(&self, k: usize) -> [usize; 2] {
        self.cells[k]
    }

    /// Physical coordinates of the center of interior cell `k`.
    pub fn center(&self, k: usize) -> [f64; 2] {
        let [i, j] = self.cells[k];
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.h[1]
        } else {
            0.0
        };
        [(i as f64 + 0.5) * self.h[0], y]
    }

    /// Interior index of array position `(i, j)`, if interior.
    pub fn index(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i >= self.shape[0] as isize || j >= self.shape[1] as isize {
            return None;
        }
        self.lookup[i as usize + self.shape[0] * j as usize]
    }

    pub fn neighbor(&self, k: usize, axis: usize, side: Side) -> Option<usize> {
        if axis >= self.dim {
            return None;
        }
        self.neighbors[k][axis][side.slot()]
    }

    pub fn boundary_cells(&self) -> &[BoundaryCell] {
        &self.boundary
    }

    /// True when cell `k` has at least one boundary face.
    pub fn is_boundary_cell(&self, k: usize) -> bool {
        (0..self.dim).any(|a| {
            self.neighbor(k, a, Side::Minus).is_none() || self.neighbor(k, a, Side::Plus).is_none()
        })
    }

    /// Cells all of whose neighbors within `width` steps (in the max norm)
    /// are interior.
    pub fn is_deep_interior(&self, k: usize, width: usize) -> bool {
        let [i, j] = self.cells[k];
        let w = width as isize;
        let (i, j) = (i as isize, j as isize);
        let jr = if self.dim == 2 { -w..=w } else { 0..=0 };
        for dj in jr {
            for di in -w..=w {
                if self.index(i + di, j + dj).is_none() {
                    return false;
                }
            }
        }
        true
    }

    /// Short identifier used in report provenance.
    pub fn id(&self) -> String {
        match &self.kind {
            GridKind::Interval => format!("interval{}", self.shape[0]),
            GridKind::Rectangle => format!("rect{}x{}", self.shape[0], self.shape[1]),
            GridKind::Masked(label) => format!("{label}{}x{}", self.shape[0], self.shape[1]),
        }
    }

    /// Whether the closed ball `B(center, radius)` lies inside the domain.
    pub fn ball_inside(&self, center: [f64; 2], radius: f64) -> bool {
        let ext = self.extent();
        let axes = self.dim;
        for a in 0..axes {
            if center[a] - radius < 0.0 || center[a] + radius > ext[a] {
                return false;
            }
        }
        if matches!(self.kind, GridKind::Masked(_)) {
            let [nx, ny] = self.shape;
            let [hx, hy] = self.h;
            for j in 0..ny {
                for i in 0..nx {
                    if self.mask[i + nx * j] {
                        continue;
                    }
                    let (x0, x1) = (i as f64 * hx, (i + 1) as f64 * hx);
                    let (y0, y1) = (j as f64 * hy, (j + 1) as f64 * hy);
                    let dx = (x0 - center[0]).max(0.0).max(center[0] - x1);
                    let dy = (y0 - center[1]).max(0.0).max(center[1] - y1);
                    if dx * dx + dy * dy < radius * radius {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Interior cells adjacent to a reentrant corner, i.e. a grid vertex where
    /// exactly three of the four surrounding cells are interior.
    pub fn reentrant_corner_cells(&self) -> Vec<usize> {
        if self.dim < 2 {
            return Vec::new();
        }
        let [nx, ny] = self.shape;
        let mut out = Vec::new();
        for vj in 1..ny as isize {
            for vi in 1..nx as isize {
                let around = [
                    self.index(vi - 1, vj - 1),
                    self.index(vi, vj - 1),
                    self.index(vi - 1, vj),
                    self.index(vi, vj),
                ];
                if around.iter().filter(|c| c.is_some()).count() == 3 {
                    out.extend(around.iter().flatten().copied());
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
