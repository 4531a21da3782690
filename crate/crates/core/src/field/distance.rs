use std::sync::Arc;

use super::grid::{BoundaryCell, Grid, GridKind, Side};
use super::values::ScalarField;

/// Euclidean distance from each cell center to the domain boundary.
///
/// Intervals and rectangles use the closed form. Masked domains run a
/// two-pass feature transform: every cell carries the boundary face it
/// believes is nearest, candidates are propagated from already visited
/// neighbors in a forward and a backward raster sweep, and distances are
/// measured exactly to the candidate face segments.
pub fn distance_field(grid: &Arc<Grid>) -> ScalarField {
    match grid.kind() {
        GridKind::Interval => {
            let l = grid.extent()[0];
            ScalarField::from_fn(grid.clone(), |x| x[0].min(l - x[0]))
        }
        GridKind::Rectangle => {
            let [lx, ly] = grid.extent();
            ScalarField::from_fn(grid.clone(), |x| {
                x[0].min(lx - x[0]).min(x[1]).min(ly - x[1])
            })
        }
        GridKind::Masked(_) => masked_distance(grid),
    }
}

/// Endpoints of the segment covered by a boundary face.
pub(crate) fn face_segment(grid: &Grid, b: &BoundaryCell) -> ([f64; 2], [f64; 2]) {
    let [i, j] = grid.cell(b.cell);
    let [hx, hy] = grid.h();
    let off = if b.outward == Side::Plus { 1.0 } else { 0.0 };
    if b.axis == 0 {
        let x = (i as f64 + off) * hx;
        ([x, j as f64 * hy], [x, (j + 1) as f64 * hy])
    } else {
        let y = (j as f64 + off) * hy;
        ([i as f64 * hx, y], [(i + 1) as f64 * hx, y])
    }
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn masked_distance(grid: &Arc<Grid>) -> ScalarField {
    let faces: Vec<_> = grid
        .boundary_cells()
        .iter()
        .map(|b| face_segment(grid, b))
        .collect();
    let n = grid.len();
    let mut nearest: Vec<Option<usize>> = vec![None; n];
    let mut dist = vec![f64::INFINITY; n];
    let dist_to = |k: usize, f: usize| point_segment_distance(grid.center(k), faces[f].0, faces[f].1);

    for (f, b) in grid.boundary_cells().iter().enumerate() {
        let d = dist_to(b.cell, f);
        if d < dist[b.cell] {
            dist[b.cell] = d;
            nearest[b.cell] = Some(f);
        }
    }

    let relax = |k: usize, from: &[(isize, isize)], nearest: &mut Vec<Option<usize>>, dist: &mut Vec<f64>| {
        let [i, j] = grid.cell(k);
        for &(di, dj) in from {
            if let Some(m) = grid.index(i as isize + di, j as isize + dj) {
                if let Some(f) = nearest[m] {
                    let d = dist_to(k, f);
                    if d < dist[k] {
                        dist[k] = d;
                        nearest[k] = Some(f);
                    }
                }
            }
        }
    };

    let [nx, ny] = grid.shape();
    let row_cells = |j: usize| -> Vec<usize> {
        (0..nx)
            .filter_map(|i| grid.index(i as isize, j as isize))
            .collect()
    };

    for j in 0..ny {
        let row = row_cells(j);
        for &k in &row {
            relax(k, &[(-1, 0), (-1, -1), (0, -1), (1, -1)], &mut nearest, &mut dist);
        }
        for &k in row.iter().rev() {
            relax(k, &[(1, 0)], &mut nearest, &mut dist);
        }
    }
    for j in (0..ny).rev() {
        let row = row_cells(j);
        for &k in row.iter().rev() {
            relax(k, &[(1, 0), (1, 1), (0, 1), (-1, 1)], &mut nearest, &mut dist);
        }
        for &k in &row {
            relax(k, &[(-1, 0)], &mut nearest, &mut dist);
        }
    }
    ScalarField::from_raw(grid.clone(), dist)
}
