//! Portable graymap input (P2 ASCII and P5 binary).

use std::path::Path;

use tvreg_core::{build_grid, DomainSpec, ScalarField};

use crate::error::CliError;

/// A decoded graymap with samples scaled to [0, 1], in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

pub fn read_pgm(path: &Path) -> Result<PgmImage, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let image = decode(&bytes).map_err(|msg| CliError::Pgm {
        path: path.to_path_buf(),
        msg,
    })?;
    let scale = 1.0 / image.maxval as f64;
    Ok(PgmImage {
        width: image.width,
        height: image.height,
        values: image.samples.iter().map(|&s| s as f64 * scale).collect(),
    })
}

/// Reads a PGM into a field on the rectangle with `h = 1/max(nx, ny)`.
/// Raster row `j` becomes grid row `j`, so the first image row sits at the
/// smallest `y`. Images under 3×3 are rejected by the grid.
pub fn load_pgm(path: &Path) -> Result<ScalarField, CliError> {
    let image = read_pgm(path)?;
    let (nx, ny) = (image.width, image.height);
    let h = 1.0 / nx.max(ny) as f64;
    let grid = build_grid(&DomainSpec::rectangle(nx, ny, nx as f64 * h, ny as f64 * h)).map_err(CliError::at("load"))?;
    let vals = (0..grid.len())
        .map(|k| {
            let [i, j] = grid.cell(k);
            image.values[i + nx * j]
        })
        .collect();
    ScalarField::new(grid, vals).map_err(CliError::at("load"))
}

struct Image {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u32>,
}

fn decode(bytes: &[u8]) -> Result<Image, String> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos).ok_or("missing magic number")?;
    let binary = match magic.as_str() {
        "P2" => false,
        "P5" => true,
        m => return Err(format!("unsupported format `{m}`")),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let t = token(bytes, &mut pos).ok_or(format!("malformed header: missing {name}"))?;
        *slot = t.parse().map_err(|_| format!("malformed header: bad {name} `{t}`"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err("malformed header: empty image".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    let count = width * height;
    let mut samples = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes.get(pos..pos + need).ok_or("truncated raster")?;
        if wide {
            samples.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32));
        } else {
            samples.extend(raster.iter().map(|&b| b as u32));
        }
    } else {
        for _ in 0..count {
            let t = token(bytes, &mut pos).ok_or("truncated raster")?;
            samples.push(t.parse().map_err(|_| format!("bad sample `{t}`"))?);
        }
    }
    if let Some(&s) = samples.iter().find(|&&s| s > maxval as u32) {
        return Err(format!("sample {s} exceeds maxval {maxval}"));
    }
    Ok(Image {
        width,
        height,
        maxval: maxval as u32,
        samples,
    })
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}
