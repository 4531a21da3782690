//! Deterministic synthetic data `f`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{gradient, vector_norm, Grid, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Constant { value: f64 },
    /// `a·x + b`.
    Affine { a: [f64; 2], b: f64 },
    /// `amp·cos(kx π x/Lx)·cos(ky π y/Ly)`; satisfies the Neumann condition.
    Trig { amp: f64, kx: f64, ky: f64 },
    /// Gaussian-mollified white noise rescaled to `max |f − mean f| = amp`.
    SmoothedNoise { sigma: f64, amp: f64 },
    /// `height` where `x > pos`, 0 elsewhere.
    Step { pos: f64, height: f64 },
    StepTrig { pos: f64, height: f64, amp: f64, kx: f64, ky: f64 },
}

impl SourceKind {
    pub const NAMES: [&'static str; 6] = ["constant", "affine", "trig", "smoothed_noise", "step", "step_trig"];

    /// Builds a kind from its name and numeric parameters, filling defaults
    /// for anything missing. Hyphens and underscores are interchangeable.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        let kind = match name.replace('-', "_").as_str() {
            "constant" => SourceKind::Constant { value: get("value", 1.0) },
            "affine" => SourceKind::Affine {
                a: [get("ax", 1.0), get("ay", 0.0)],
                b: get("b", 0.0),
            },
            "trig" => SourceKind::Trig {
                amp: get("amp", 1.0),
                kx: get("kx", 1.0),
                ky: get("ky", 1.0),
            },
            "smoothed_noise" => SourceKind::SmoothedNoise {
                sigma: get("sigma", 0.05),
                amp: get("amp", 1.0),
            },
            "step" => SourceKind::Step {
                pos: get("pos", 0.5),
                height: get("height", 1.0),
            },
            "step_trig" => SourceKind::StepTrig {
                pos: get("pos", 0.5),
                height: get("height", 1.0),
                amp: get("amp", 0.5),
                kx: get("kx", 3.0),
                ky: get("ky", 0.0),
            },
            _ => {
                return Err(Error::Unknown {
                    kind: "source",
                    name: name.to_string(),
                })
            }
        };
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::Constant { .. } => "constant",
            SourceKind::Affine { .. } => "affine",
            SourceKind::Trig { .. } => "trig",
            SourceKind::SmoothedNoise { .. } => "smoothed_noise",
            SourceKind::Step { .. } => "step",
            SourceKind::StepTrig { .. } => "step_trig",
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, SourceKind::SmoothedNoise { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Source {
    pub kind: SourceKind,
    pub field: ScalarField,
}

impl Source {
    /// Closed-form `‖∇f‖_p` where one exists (constant, affine, and trig at
    /// p = ∞).
    pub fn analytic_grad_norm(&self, p: f64) -> Option<f64> {
        let grid = self.field.grid();
        let [lx, ly] = grid.extent();
        let measure = grid.measure();
        match self.kind {
            SourceKind::Constant { .. } => Some(0.0),
            SourceKind::Affine { a, .. } => {
                let slope = if grid.dim() == 1 { a[0].abs() } else { a[0].hypot(a[1]) };
                Some(if p.is_infinite() { slope } else { slope * measure.powf(1.0 / p) })
            }
            SourceKind::Trig { amp, kx, ky } if p.is_infinite() => {
                let wy = if grid.dim() == 1 { 0.0 } else { ky.abs() / ly };
                Some(amp.abs() * PI * (kx.abs() / lx).max(wy))
            }
            _ => None,
        }
    }

    /// Analytic norm when available, otherwise the discrete one.
    pub fn grad_norm(&self, p: f64) -> Result<f64> {
        match self.analytic_grad_norm(p) {
            Some(v) => Ok(v),
            None => vector_norm(&gradient(&self.field), p),
        }
    }
}

/// Samples `kind` on `grid`. Only the random kinds read `seed`.
pub fn generate_source(kind: &SourceKind, grid: &Arc<Grid>, seed: u64) -> Result<Source> {
    let [lx, ly] = grid.extent();
    let two_d = grid.dim() == 2;
    let trig = move |x: [f64; 2], amp: f64, kx: f64, ky: f64| {
        let cy = if two_d { (ky * PI * x[1] / ly).cos() } else { 1.0 };
        amp * (kx * PI * x[0] / lx).cos() * cy
    };
    let field = match *kind {
        SourceKind::Constant { value } => ScalarField::constant(grid.clone(), value),
        SourceKind::Affine { a, b } => ScalarField::from_fn(grid.clone(), |x| a[0] * x[0] + a[1] * x[1] + b),
        SourceKind::Trig { amp, kx, ky } => ScalarField::from_fn(grid.clone(), |x| trig(x, amp, kx, ky)),
        SourceKind::SmoothedNoise { sigma, amp } => {
            if !(sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
            }
            smoothed_noise(grid, sigma, amp, seed)
        }
        SourceKind::Step { pos, height } => {
            ScalarField::from_fn(grid.clone(), |x| if x[0] > pos { height } else { 0.0 })
        }
        SourceKind::StepTrig { pos, height, amp, kx, ky } => ScalarField::from_fn(grid.clone(), |x| {
            let step = if x[0] > pos { height } else { 0.0 };
            step + trig(x, amp, kx, ky)
        }),
    };
    Ok(Source {
        kind: kind.clone(),
        field,
    })
}

/// White noise on the bounding box, blurred by a separable Gaussian with
/// mirror padding, then restricted to the mask and rescaled.
fn smoothed_noise(grid: &Arc<Grid>, sigma: f64, amp: f64, seed: u64) -> ScalarField {
    let [nx, ny] = grid.shape();
    let [hx, hy] = grid.h();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<f64> = (0..nx * ny).map(|_| StandardNormal.sample(&mut rng)).collect();

    blur_axis(&mut buf, nx, ny, kernel(sigma / hx), true);
    if grid.dim() == 2 {
        blur_axis(&mut buf, nx, ny, kernel(sigma / hy), false);
    }
    let raw: Vec<f64> = (0..grid.len())
        .map(|k| {
            let [i, j] = grid.cell(k);
            buf[j * nx + i]
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let top = raw.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    let scale = if top > 0.0 { amp / top } else { 0.0 };
    let values = raw.iter().map(|v| (v - mean) * scale).collect();
    ScalarField::new(grid.clone(), values).expect("finite noise")
}

fn kernel(sigma_cells: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_cells).ceil().max(1.0) as usize;
    let w: Vec<f64> = (0..=2 * radius)
        .map(|t| {
            let d = t as f64 - radius as f64;
            (-0.5 * d * d / (sigma_cells * sigma_cells)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn blur_axis(buf: &mut [f64], nx: usize, ny: usize, w: Vec<f64>, along_x: bool) {
    let radius = (w.len() / 2) as isize;
    let (len, lines) = if along_x { (nx, ny) } else { (ny, nx) };
    let reflect = |t: isize| -> usize {
        // mirror about the cell faces: -1 -> 0, len -> len-1
        let n = len as isize;
        let period = 2 * n;
        let mut t = t.rem_euclid(period);
        if t >= n {
            t = period - 1 - t;
        }
        t as usize
    };
    let mut line = vec![0.0; len];
    for l in 0..lines {
        let idx = |t: usize| if along_x { l * nx + t } else { t * nx + l };
        for (t, v) in line.iter_mut().enumerate() {
            *v = buf[idx(t)];
        }
        for t in 0..len {
            let mut acc = 0.0;
            for (o, wt) in w.iter().enumerate() {
                acc += wt * line[reflect(t as isize + o as isize - radius)];
            }
            buf[idx(t)] = acc;
        }
    }
}
