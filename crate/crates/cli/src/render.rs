//! PNG rendering of polar fields (diverging colours) and traveltime grids
//! (grey levels).

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use tttk_core::{CartesianField, PolarField};

/// Colour at -1, 0 and +1 of the diverging map.
const COLD: [f64; 3] = [59.0, 76.0, 192.0];
const NEUTRAL: [f64; 3] = [221.0, 221.0, 221.0];
const WARM: [f64; 3] = [180.0, 4.0, 38.0];
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const GAP: u32 = 8;

/// Maps `t` in `[-1, 1]` (clamped) to the diverging map.
pub fn diverging(t: f64) -> Rgb<u8> {
    let t = if t.is_nan() { 0.0 } else { t.clamp(-1.0, 1.0) };
    let (end, w) = if t < 0.0 { (COLD, -t) } else { (WARM, t) };
    let mut c = [0u8; 3];
    for i in 0..3 {
        c[i] = (NEUTRAL[i] + w * (end[i] - NEUTRAL[i])).round() as u8;
    }
    Rgb(c)
}

/// Written next to every image so the colour scale can be read back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub colormap: String,
    /// Values at `+-scale` saturate the map.
    pub scale: f64,
    pub size: u32,
    pub panels: Vec<PanelInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelInfo {
    pub label: String,
    pub min: f64,
    pub max: f64,
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Symmetric scale covering every panel; 1 when all values vanish.
pub fn auto_scale(fields: &[&PolarField<f64>]) -> f64 {
    let m = fields
        .iter()
        .flat_map(|f| f.values.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn pixel_center(i: u32, size: u32) -> f64 {
    -1.0 + (i as f64 + 0.5) * 2.0 / size as f64
}

fn draw_polar(img: &mut RgbImage, x0: u32, field: &PolarField<f64>, size: u32, scale: f64) {
    for py in 0..size {
        let y = -pixel_center(py, size);
        for px in 0..size {
            let x = pixel_center(px, size);
            let c = if x * x + y * y <= 1.0 {
                diverging(field.sample(x, y) / scale)
            } else {
                BACKGROUND
            };
            img.put_pixel(x0 + px, py, c);
        }
    }
}

/// Renders the panels side by side, left to right.
pub fn render_panels(panels: &[(&str, &PolarField<f64>)], size: u32, scale: Option<f64>) -> (RgbImage, Sidecar) {
    let fields: Vec<&PolarField<f64>> = panels.iter().map(|p| p.1).collect();
    let scale = scale.unwrap_or_else(|| auto_scale(&fields));
    let n = panels.len() as u32;
    let width = n * size + n.saturating_sub(1) * GAP;
    let mut img = RgbImage::from_pixel(width, size, BACKGROUND);
    let mut info = Vec::new();
    for (i, (label, field)) in panels.iter().enumerate() {
        draw_polar(&mut img, i as u32 * (size + GAP), field, size, scale);
        let (min, max) = min_max(&field.values);
        info.push(PanelInfo {
            label: label.to_string(),
            min,
            max,
        });
    }
    let sidecar = Sidecar {
        colormap: "diverging blue-grey-red, grey at zero".into(),
        scale,
        size,
        panels: info,
    };
    (img, sidecar)
}

/// Grey levels from 0 (black) to the largest value inside the unit disk
/// (white); nodes outside the disk are black.
pub fn render_traveltime(u: &CartesianField<f64>) -> RgbImage {
    let g = u.grid;
    let n = g.n();
    let inside = |ix: usize, iy: usize| {
        let (x, y) = (g.coord::<f64>(ix), g.coord::<f64>(iy));
        x * x + y * y <= 1.0
    };
    let mut top = 0.0f64;
    for iy in 0..n {
        for ix in 0..n {
            if inside(ix, iy) && u.at(ix, iy).is_finite() {
                top = top.max(u.at(ix, iy));
            }
        }
    }
    let top = if top > 0.0 { top } else { 1.0 };
    RgbImage::from_fn(n as u32, n as u32, |px, py| {
        // image rows run downwards, y upwards
        let (ix, iy) = (px as usize, n - 1 - py as usize);
        let v = if inside(ix, iy) { (u.at(ix, iy) / top).clamp(0.0, 1.0) } else { 0.0 };
        let l = (v * 255.0).round() as u8;
        Rgb([l, l, l])
    })
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn save_sidecar(sidecar: &Sidecar, png: &Path) -> Result<std::path::PathBuf> {
    let path = png.with_extension("json");
    let text = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
