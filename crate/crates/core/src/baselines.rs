//! Reference enhancers: global HE, CLAHE and single-scale retinex.

use serde::{Deserialize, Serialize};

use crate::error::{Component, Error, Result};
use crate::filtering::{convolve_lpf, BoundaryMode, GaussianSpec};
use crate::histogram::{cdf, histogram, level_of};
use crate::image::{normalize, ImageBuffer};

/// `e(i) = (L - 1) * D(i)`.
pub fn he(img: &ImageBuffer) -> Result<ImageBuffer> {
    let d = cdf(&histogram(img)?)?;
    if d.i_min() == d.i_max() {
        return Err(Error::DegenerateHistogram(Component::Input));
    }
    let top = img.max_level();
    let levels = img.levels();
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| Ok(top * d.at(level_of(v, i, levels)?)))
        .collect::<Result<_>>()?;
    ImageBuffer::new(img.width(), img.height(), data, levels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaheParams {
    /// Per-bin clip as a fraction of the tile's pixel count.
    pub clip_limit: f64,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            clip_limit: 0.02,
            tiles_x: 8,
            tiles_y: 8,
        }
    }
}

/// Splits `n` into `parts` contiguous runs whose lengths differ by at most one.
fn edges(n: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|t| t * n / parts).collect()
}

/// Tile map for one block: clipped histogram, uniform redistribution, CDF.
fn tile_lut(levels: &[usize], n_levels: usize, clip_limit: f64) -> Vec<f64> {
    let mut counts = vec![0.0f64; n_levels];
    for &l in levels {
        counts[l] += 1.0;
    }
    let occupied = counts.iter().filter(|&&c| c > 0.0).count();
    if occupied <= 1 {
        return (0..n_levels).map(|i| i as f64).collect();
    }
    let clip = clip_limit * levels.len() as f64;
    let mut excess = 0.0;
    for c in counts.iter_mut() {
        if *c > clip {
            excess += *c - clip;
            *c = clip;
        }
    }
    let bonus = excess / n_levels as f64;
    let total = levels.len() as f64;
    let top = (n_levels - 1) as f64;
    let mut acc = 0.0;
    counts
        .iter()
        .map(|c| {
            acc += c + bonus;
            top * (acc / total).min(1.0)
        })
        .collect()
}

/// Index of the left tile centre and the weight of the right one for coordinate `p`.
fn bracket(p: usize, centres: &[f64]) -> (usize, f64) {
    let p = p as f64;
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0.0);
    }
    if p >= centres[last] {
        return (last, 0.0);
    }
    let t = centres.partition_point(|&c| c <= p) - 1;
    (t, (p - centres[t]) / (centres[t + 1] - centres[t]))
}

/// Tile maps of a CLAHE run, exposed for inspection.
pub struct ClaheMaps {
    pub x_edges: Vec<usize>,
    pub y_edges: Vec<usize>,
    /// Row-major over tiles, one LUT of `levels` entries each.
    pub luts: Vec<Vec<f64>>,
}

pub fn clahe_maps(img: &ImageBuffer, p: &ClaheParams) -> Result<ClaheMaps> {
    if !(p.clip_limit > 0.0) {
        return Err(Error::Param("CLAHE clip limit must be positive".into()));
    }
    if p.tiles_x == 0 || p.tiles_y == 0 {
        return Err(Error::Param("CLAHE needs at least one tile per axis".into()));
    }
    let (w, h) = (img.width(), img.height());
    if w < p.tiles_x || h < p.tiles_y {
        return Err(Error::Param(format!(
            "{w}x{h} image is smaller than the {}x{} tile grid",
            p.tiles_x, p.tiles_y
        )));
    }
    let n_levels = img.levels() as usize;
    let x_edges = edges(w, p.tiles_x);
    let y_edges = edges(h, p.tiles_y);
    let mut luts = Vec::with_capacity(p.tiles_x * p.tiles_y);
    for ty in 0..p.tiles_y {
        for tx in 0..p.tiles_x {
            let mut block = Vec::new();
            for y in y_edges[ty]..y_edges[ty + 1] {
                for x in x_edges[tx]..x_edges[tx + 1] {
                    block.push(level_of(img.get(x, y), y * w + x, img.levels())?);
                }
            }
            luts.push(tile_lut(&block, n_levels, p.clip_limit));
        }
    }
    Ok(ClaheMaps { x_edges, y_edges, luts })
}

/// Contrast-limited adaptive HE with bilinear blending between tile centres.
pub fn clahe(img: &ImageBuffer, p: &ClaheParams) -> Result<ImageBuffer> {
    let maps = clahe_maps(img, p)?;
    let centre = |e: &[usize]| -> Vec<f64> {
        e.windows(2).map(|s| (s[0] + s[1] - 1) as f64 / 2.0).collect()
    };
    let (cx, cy) = (centre(&maps.x_edges), centre(&maps.y_edges));
    let (w, levels) = (img.width(), img.levels());
    let nx = p.tiles_x;
    let xb: Vec<(usize, f64)> = (0..w).map(|x| bracket(x, &cx)).collect();
    let mut data = Vec::with_capacity(img.len());
    for y in 0..img.height() {
        let (ty, fy) = bracket(y, &cy);
        let ty1 = (ty + 1).min(p.tiles_y - 1);
        for (x, &(tx, fx)) in xb.iter().enumerate() {
            let tx1 = (tx + 1).min(nx - 1);
            let l = level_of(img.get(x, y), y * w + x, levels)?;
            let at = |ty: usize, tx: usize| maps.luts[ty * nx + tx][l];
            let top = at(ty, tx) * (1.0 - fx) + at(ty, tx1) * fx;
            let bottom = at(ty1, tx) * (1.0 - fx) + at(ty1, tx1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    ImageBuffer::new(w, img.height(), data, levels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsrParams {
    pub sigma: f64,
    /// Log guard on the `[0, 1]` intensity scale; `1 / L` when unset.
    pub epsilon: Option<f64>,
}

impl Default for SsrParams {
    fn default() -> Self {
        Self {
            sigma: 50.0,
            epsilon: None,
        }
    }
}

/// Single-scale retinex `log(I + eps) - log(G * I + eps)`, stretched to `[0, L - 1]`.
pub fn ssr(img: &ImageBuffer, p: &SsrParams) -> Result<ImageBuffer> {
    let spec = GaussianSpec::from_sigma(p.sigma)?;
    let eps = p.epsilon.unwrap_or(1.0 / f64::from(img.levels()));
    if !(eps > 0.0) {
        return Err(Error::Param("SSR epsilon must be positive".into()));
    }
    if img.is_constant() {
        // The log ratio is identically zero; rounding in the blur would otherwise be stretched.
        return Ok(img.map(|_| 0.0));
    }
    let unit = img.map(|v| v / img.max_level());
    let surround = convolve_lpf(&unit, &spec, BoundaryMode::Mirror);
    let r = unit.zip_map(&surround, |v, g| (v + eps).ln() - (g + eps).ln())?;
    let top = img.max_level();
    Ok(normalize(&r).map(|v| v * top))
}
