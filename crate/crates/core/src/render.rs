//! Analytic silhouette renderer for capsule skeletons.
//!
//! Each capsule is projected to an image-space stadium: the 2D segment
//! between its projected endpoints, dilated by the projected radius
//! `radius * fx / depth` taken at the segment point nearest to the pixel
//! (perspective-correct depth along the segment). The soft render turns
//! the signed distance into occupancy with a logistic of temperature `tau`;
//! the hard render uses the inside test directly.
//!
//! Per pixel, every character keeps its most-occupied capsule. The front
//! character is the nearest (camera depth at that capsule's nearest point)
//! among characters with occupancy >= 0.5, falling back to the most
//! occupied character. The pixel blends that character's color with white.
//!
//! [`soft_vjp`] runs the same pass and pulls an image-space adjoint back to
//! the 12 entries of the world-to-camera pose.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{project_camera_point, Intrinsics, Projection, RigidTransform, Z_NEAR};
use crate::scene::{Capsule, FrameOfReference, Scene};

/// Occupancy below `sigmoid(-CULL_TAUS)` is dropped.
const CULL_TAUS: f64 = 32.0;
const TILE: usize = 8;

pub const WHITE: [f64; 3] = [1.0; 3];

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorMaskImage {
    width: u32,
    height: u32,
    pixels: Vec<[f64; 3]>,
}

impl ColorMaskImage {
    pub fn white(width: u32, height: u32) -> Self {
        ColorMaskImage {
            width,
            height,
            pixels: vec![WHITE; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Format(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if !pixels.iter().flatten().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::Format("pixel channel outside [0,1]".into()));
        }
        Ok(ColorMaskImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn same_size(&self, other: &ColorMaskImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ImageSizeMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            });
        }
        Ok(())
    }

    /// 8-bit RGB bytes, row-major.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
            .collect()
    }

    pub fn from_rgb8(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 3 * width as usize * height as usize {
            return Err(Error::Format(format!(
                "{} bytes for a {width}x{height} RGB image",
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
            .collect();
        Ok(ColorMaskImage {
            width,
            height,
            pixels,
        })
    }

    /// Quantize every channel to the 8-bit grid, as a PNG round trip would.
    pub fn quantized_rgb8(&self) -> ColorMaskImage {
        Self::from_rgb8(self.width, self.height, &self.to_rgb8()).expect("same size")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftRenderConfig {
    /// Logistic temperature in pixels.
    pub tau: f64,
    pub supersample: u32,
}

impl Default for SoftRenderConfig {
    fn default() -> Self {
        SoftRenderConfig {
            tau: 0.25,
            supersample: 1,
        }
    }
}

impl SoftRenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) || self.supersample < 1 {
            return Err(Error::InvalidConfig(format!(
                "soft render needs tau > 0 and supersample >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Gradient of a scalar objective with respect to the entries of a
/// world-to-camera pose `(R, t)`, treated as 12 free numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PoseGradient {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl PoseGradient {
    pub fn scaled(&self, s: f64) -> PoseGradient {
        PoseGradient {
            rotation: self.rotation.map(|r| r.map(|x| x * s)),
            translation: self.translation.map(|x| x * s),
        }
    }

    pub fn add(&mut self, other: &PoseGradient) {
        for i in 0..3 {
            for j in 0..3 {
                self.rotation[i][j] += other.rotation[i][j];
            }
            self.translation[i] += other.translation[i];
        }
    }

    /// Accumulates `dL/dq` for the camera-frame point `q = R p + t`.
    pub fn accumulate_point(&mut self, world: &[f64; 3], dq: &[f64; 3]) {
        for i in 0..3 {
            for j in 0..3 {
                self.rotation[i][j] += dq[i] * world[j];
            }
            self.translation[i] += dq[i];
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Clip {
    None,
    /// Endpoint `a` was moved onto the near plane.
    A,
    B,
}

/// A capsule after projection into the image.
#[derive(Clone, Copy, Debug)]
struct ProjCapsule {
    ua: [f64; 2],
    e: [f64; 2],
    inv_l2: f64,
    iza: f64,
    izb: f64,
    /// world radius * fx
    rf: f64,
    character: usize,
    bbox: [i64; 4],
    // backward data
    wa: [f64; 3],
    wb: [f64; 3],
    qa: [f64; 3],
    qb: [f64; 3],
    /// camera-frame endpoints before clipping
    oa: [f64; 3],
    ob: [f64; 3],
    clip: Clip,
}

struct Prepared {
    caps: Vec<ProjCapsule>,
    tiles_x: usize,
    tile_start: Vec<u32>,
    tile_items: Vec<u32>,
}

fn prepare(
    capsules: &[Capsule],
    pose: &RigidTransform,
    k: &Intrinsics,
    margin_taus: f64,
) -> Prepared {
    let mut caps = Vec::with_capacity(capsules.len());
    let (w, h) = (k.width as i64, k.height as i64);
    for cap in capsules {
        let ca = pose.apply(&Vector3::from(cap.a));
        let cb = pose.apply(&Vector3::from(cap.b));
        let (oa, ob) = ([ca.x, ca.y, ca.z], [cb.x, cb.y, cb.z]);
        let (mut qa, mut qb) = (oa, ob);
        let clip = match (qa[2] > Z_NEAR, qb[2] > Z_NEAR) {
            (false, false) => continue,
            (true, true) => Clip::None,
            (false, true) => {
                let lam = (Z_NEAR - qa[2]) / (qb[2] - qa[2]);
                qa = [
                    qa[0] + lam * (qb[0] - qa[0]),
                    qa[1] + lam * (qb[1] - qa[1]),
                    Z_NEAR,
                ];
                Clip::A
            }
            (true, false) => {
                let lam = (Z_NEAR - qb[2]) / (qa[2] - qb[2]);
                qb = [
                    qb[0] + lam * (qa[0] - qb[0]),
                    qb[1] + lam * (qa[1] - qb[1]),
                    Z_NEAR,
                ];
                Clip::B
            }
        };
        let (iza, izb) = (1.0 / qa[2], 1.0 / qb[2]);
        let ua = [k.fx * qa[0] * iza + k.cx, k.fy * qa[1] * iza + k.cy];
        let ub = [k.fx * qb[0] * izb + k.cx, k.fy * qb[1] * izb + k.cy];
        let e = [ub[0] - ua[0], ub[1] - ua[1]];
        let l2 = e[0] * e[0] + e[1] * e[1];
        let inv_l2 = if l2 > 1e-18 { 1.0 / l2 } else { 0.0 };
        let rf = cap.radius * k.fx;
        let reach = rf * iza.max(izb) + margin_taus;
        let x0 = (ua[0].min(ub[0]) - reach).floor();
        let x1 = (ua[0].max(ub[0]) + reach).ceil();
        let y0 = (ua[1].min(ub[1]) - reach).floor();
        let y1 = (ua[1].max(ub[1]) + reach).ceil();
        if !(x1 >= 0.0 && y1 >= 0.0 && x0 < w as f64 && y0 < h as f64) {
            continue;
        }
        let bbox = [
            (x0 as i64).max(0),
            (y0 as i64).max(0),
            (x1 as i64).min(w - 1),
            (y1 as i64).min(h - 1),
        ];
        caps.push(ProjCapsule {
            ua,
            e,
            inv_l2,
            iza,
            izb,
            rf,
            character: cap.character,
            bbox,
            wa: cap.a,
            wb: cap.b,
            qa,
            qb,
            oa,
            ob,
            clip,
        });
    }

    // bin capsules into tiles, preserving capsule order inside each tile
    let tiles_x = (k.width as usize).div_ceil(TILE);
    let tiles_y = (k.height as usize).div_ceil(TILE);
    let mut counts = vec![0u32; tiles_x * tiles_y + 1];
    let tile_range = |c: &ProjCapsule| {
        (
            c.bbox[0] as usize / TILE,
            c.bbox[2] as usize / TILE,
            c.bbox[1] as usize / TILE,
            c.bbox[3] as usize / TILE,
        )
    };
    for c in &caps {
        let (tx0, tx1, ty0, ty1) = tile_range(c);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                counts[ty * tiles_x + tx + 1] += 1;
            }
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let mut fill = counts.clone();
    let mut items = vec![0u32; *counts.last().unwrap() as usize];
    for (ci, c) in caps.iter().enumerate() {
        let (tx0, tx1, ty0, ty1) = tile_range(c);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                let slot = &mut fill[ty * tiles_x + tx];
                items[*slot as usize] = ci as u32;
                *slot += 1;
            }
        }
    }
    Prepared {
        caps,
        tiles_x,
        tile_start: counts,
        tile_items: items,
    }
}

impl Prepared {
    #[inline]
    fn tile(&self, x: usize, y: usize) -> &[u32] {
        let t = (y / TILE) * self.tiles_x + x / TILE;
        &self.tile_items[self.tile_start[t] as usize..self.tile_start[t + 1] as usize]
    }
}

/// Stadium geometry of one capsule at one sample point.
#[derive(Clone, Copy, Debug)]
struct Hit {
    s_raw: f64,
    s: f64,
    dx: f64,
    dy: f64,
    d: f64,
    iz: f64,
    r: f64,
}

#[inline]
fn hit(c: &ProjCapsule, px: f64, py: f64) -> Hit {
    let wx = px - c.ua[0];
    let wy = py - c.ua[1];
    let s_raw = (wx * c.e[0] + wy * c.e[1]) * c.inv_l2;
    let s = s_raw.clamp(0.0, 1.0);
    let dx = wx - s * c.e[0];
    let dy = wy - s * c.e[1];
    let d = (dx * dx + dy * dy).sqrt();
    let iz = c.iza + s * (c.izb - c.iza);
    Hit {
        s_raw,
        s,
        dx,
        dy,
        d,
        iz,
        r: c.rf * iz,
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Result of the soft pass at one sample.
#[derive(Clone, Copy, Debug)]
struct SoftSample {
    /// (capsule index, occupancy) of the front character, if any.
    front: Option<(usize, f64)>,
}

/// Per-character scratch: best occupancy, capsule, depth.
#[derive(Clone, Copy)]
struct CharBest {
    alpha: f64,
    cap: usize,
    depth: f64,
}

#[inline]
fn soft_sample(p: &Prepared, tile: &[u32], px: f64, py: f64, tau: f64, best: &mut [CharBest]) -> SoftSample {
    for b in best.iter_mut() {
        b.alpha = -1.0;
    }
    let cull = CULL_TAUS * tau;
    for &ci in tile {
        let c = &p.caps[ci as usize];
        let h = hit(c, px, py);
        let m = h.r - h.d;
        if m < -cull {
            continue;
        }
        let a = sigmoid(m / tau);
        let b = &mut best[c.character];
        if a > b.alpha {
            *b = CharBest {
                alpha: a,
                cap: ci as usize,
                depth: 1.0 / h.iz,
            };
        }
    }
    let mut front: Option<usize> = None;
    for (i, b) in best.iter().enumerate() {
        if b.alpha >= 0.5 && front.is_none_or(|f| b.depth < best[f].depth) {
            front = Some(i);
        }
    }
    if front.is_none() {
        for (i, b) in best.iter().enumerate() {
            if b.alpha >= 0.0 && front.is_none_or(|f| b.alpha > best[f].alpha) {
                front = Some(i);
            }
        }
    }
    SoftSample {
        front: front.map(|f| (best[f].cap, best[f].alpha)),
    }
}

#[inline]
fn sample_offsets(ss: u32) -> impl Iterator<Item = (f64, f64)> {
    let n = ss as usize;
    (0..n * n).map(move |i| {
        (
            ((i % n) as f64 + 0.5) / n as f64,
            ((i / n) as f64 + 0.5) / n as f64,
        )
    })
}

fn check_world(scene: &Scene) -> Result<()> {
    if scene.frame_of_reference() != FrameOfReference::World {
        return Err(Error::InvalidScene("renderer expects a world-frame scene".into()));
    }
    Ok(())
}

/// Soft color-coded mask of frame `t` (1-based) seen through `pose`.
pub fn render_soft_mask(
    scene: &Scene,
    t: usize,
    pose: &RigidTransform,
    k: &Intrinsics,
    cfg: &SoftRenderConfig,
) -> Result<ColorMaskImage> {
    check_world(scene)?;
    cfg.validate()?;
    let caps = if scene.character_count() == 0 {
        Vec::new()
    } else {
        scene.capsules_at(t)?
    };
    Ok(render_soft_capsules(&caps, scene.character_count(), pose, k, cfg))
}

pub(crate) fn render_soft_capsules(
    capsules: &[Capsule],
    n_chars: usize,
    pose: &RigidTransform,
    k: &Intrinsics,
    cfg: &SoftRenderConfig,
) -> ColorMaskImage {
    let colors = char_colors(capsules, n_chars);
    let prep = prepare(capsules, pose, k, CULL_TAUS * cfg.tau);
    let mut img = ColorMaskImage::white(k.width, k.height);
    let mut best = vec![
        CharBest {
            alpha: -1.0,
            cap: 0,
            depth: 0.0
        };
        n_chars
    ];
    let inv_s = 1.0 / (cfg.supersample * cfg.supersample) as f64;
    for y in 0..k.height as usize {
        for x in 0..k.width as usize {
            let tile = prep.tile(x, y);
            if tile.is_empty() {
                continue;
            }
            let mut acc = [0.0; 3];
            for (ox, oy) in sample_offsets(cfg.supersample) {
                let smp = soft_sample(&prep, tile, x as f64 + ox, y as f64 + oy, cfg.tau, &mut best);
                let c = match smp.front {
                    Some((ci, a)) => blend(&colors[prep.caps[ci].character], a),
                    None => WHITE,
                };
                for ch in 0..3 {
                    acc[ch] += c[ch] * inv_s;
                }
            }
            img.pixels[y * k.width as usize + x] = acc.map(|v| v.clamp(0.0, 1.0));
        }
    }
    img
}

#[inline]
fn blend(color: &[f64; 3], alpha: f64) -> [f64; 3] {
    [
        1.0 + alpha * (color[0] - 1.0),
        1.0 + alpha * (color[1] - 1.0),
        1.0 + alpha * (color[2] - 1.0),
    ]
}

fn char_colors(capsules: &[Capsule], n_chars: usize) -> Vec<[f64; 3]> {
    let mut colors = vec![WHITE; n_chars];
    for c in capsules {
        colors[c.character] = c.color;
    }
    colors
}

/// Binary mask: each sample takes the color of the nearest capsule
/// containing it, else white; `supersample^2` samples are averaged.
pub fn render_hard_mask(
    scene: &Scene,
    t: usize,
    pose: &RigidTransform,
    k: &Intrinsics,
    supersample: u32,
) -> Result<ColorMaskImage> {
    check_world(scene)?;
    if supersample < 1 {
        return Err(Error::InvalidConfig("supersample must be >= 1".into()));
    }
    let caps = if scene.character_count() == 0 {
        Vec::new()
    } else {
        scene.capsules_at(t)?
    };
    Ok(render_hard_capsules(&caps, scene.character_count(), pose, k, supersample))
}

pub(crate) fn render_hard_capsules(
    capsules: &[Capsule],
    n_chars: usize,
    pose: &RigidTransform,
    k: &Intrinsics,
    supersample: u32,
) -> ColorMaskImage {
    let colors = char_colors(capsules, n_chars);
    let prep = prepare(capsules, pose, k, 1.0);
    let mut img = ColorMaskImage::white(k.width, k.height);
    let inv_s = 1.0 / (supersample * supersample) as f64;
    for y in 0..k.height as usize {
        for x in 0..k.width as usize {
            let tile = prep.tile(x, y);
            if tile.is_empty() {
                continue;
            }
            let mut acc = [0.0; 3];
            let mut any = false;
            for (ox, oy) in sample_offsets(supersample) {
                let (px, py) = (x as f64 + ox, y as f64 + oy);
                let mut front: Option<(f64, usize)> = None;
                for &ci in tile {
                    let c = &prep.caps[ci as usize];
                    let h = hit(c, px, py);
                    if h.d <= h.r {
                        let depth = 1.0 / h.iz;
                        if front.is_none_or(|(z, _)| depth < z) {
                            front = Some((depth, c.character));
                        }
                    }
                }
                let col = match front {
                    Some((_, ch)) => {
                        any = true;
                        colors[ch]
                    }
                    None => WHITE,
                };
                for i in 0..3 {
                    acc[i] += col[i] * inv_s;
                }
            }
            if any {
                img.pixels[y * k.width as usize + x] = if supersample == 1 {
                    acc
                } else {
                    acc.map(|v| v.clamp(0.0, 1.0))
                };
            }
        }
    }
    img
}

/// Soft render plus reverse pass.
///
/// `objective(pixel_index, color)` returns the pixel's contribution to a
/// scalar objective and its derivative with respect to the pixel color.
/// Returns the summed objective and its gradient with respect to the pose.
pub(crate) fn soft_vjp<F>(
    capsules: &[Capsule],
    n_chars: usize,
    pose: &RigidTransform,
    k: &Intrinsics,
    cfg: &SoftRenderConfig,
    mut objective: F,
) -> (f64, PoseGradient)
where
    F: FnMut(usize, &[f64; 3]) -> (f64, [f64; 3]),
{
    let colors = char_colors(capsules, n_chars);
    let prep = prepare(capsules, pose, k, CULL_TAUS * cfg.tau);
    let mut adj = vec![[0.0f64; 6]; prep.caps.len()];
    let mut best = vec![
        CharBest {
            alpha: -1.0,
            cap: 0,
            depth: 0.0
        };
        n_chars
    ];
    let n_samples = (cfg.supersample * cfg.supersample) as usize;
    let inv_s = 1.0 / n_samples as f64;
    let mut samples: Vec<(f64, f64, Option<(usize, f64)>)> = Vec::with_capacity(n_samples);
    let mut total = 0.0;
    for y in 0..k.height as usize {
        for x in 0..k.width as usize {
            let idx = y * k.width as usize + x;
            let tile = prep.tile(x, y);
            if tile.is_empty() {
                total += objective(idx, &WHITE).0;
                continue;
            }
            samples.clear();
            let mut acc = [0.0; 3];
            for (ox, oy) in sample_offsets(cfg.supersample) {
                let (px, py) = (x as f64 + ox, y as f64 + oy);
                let smp = soft_sample(&prep, tile, px, py, cfg.tau, &mut best);
                let c = match smp.front {
                    Some((ci, a)) => blend(&colors[prep.caps[ci].character], a),
                    None => WHITE,
                };
                for ch in 0..3 {
                    acc[ch] += c[ch] * inv_s;
                }
                samples.push((px, py, smp.front));
            }
            let (val, dpix) = objective(idx, &acc);
            total += val;
            for &(px, py, front) in &samples {
                let Some((ci, a)) = front else { continue };
                let c = &prep.caps[ci];
                let col = &colors[c.character];
                let abar = inv_s
                    * (dpix[0] * (col[0] - 1.0) + dpix[1] * (col[1] - 1.0) + dpix[2] * (col[2] - 1.0));
                if abar == 0.0 {
                    continue;
                }
                let g = abar * a * (1.0 - a) / cfg.tau;
                if g == 0.0 {
                    continue;
                }
                hit_backward(c, &hit(c, px, py), px, py, g, &mut adj[ci]);
            }
        }
    }
    let mut grad = PoseGradient::default();
    for (c, a) in prep.caps.iter().zip(&adj) {
        capsule_backward(c, a, k, &mut grad);
    }
    (total, grad)
}

/// Pull `g = d objective / d (r - d)` back to the capsule's image-space
/// quantities `[ua.x, ua.y, ub.x, ub.y, iza, izb]`.
#[inline]
fn hit_backward(c: &ProjCapsule, h: &Hit, px: f64, py: f64, g: f64, out: &mut [f64; 6]) {
    let r_bar = g;
    let d_bar = -g;
    let iz_bar = r_bar * c.rf;
    out[4] += iz_bar * (1.0 - h.s);
    out[5] += iz_bar * h.s;
    let mut s_bar = iz_bar * (c.izb - c.iza);
    let (mut ua_x, mut ua_y, mut e_x, mut e_y) = (0.0, 0.0, 0.0, 0.0);
    if h.d > 1e-12 {
        // n = ua + s e, delta = p - n
        let nx = -d_bar * h.dx / h.d;
        let ny = -d_bar * h.dy / h.d;
        ua_x += nx;
        ua_y += ny;
        e_x += h.s * nx;
        e_y += h.s * ny;
        s_bar += nx * c.e[0] + ny * c.e[1];
    }
    if h.s_raw > 0.0 && h.s_raw < 1.0 {
        let wx = px - c.ua[0];
        let wy = py - c.ua[1];
        ua_x -= s_bar * c.e[0] * c.inv_l2;
        ua_y -= s_bar * c.e[1] * c.inv_l2;
        e_x += s_bar * (wx - 2.0 * h.s_raw * c.e[0]) * c.inv_l2;
        e_y += s_bar * (wy - 2.0 * h.s_raw * c.e[1]) * c.inv_l2;
    }
    out[0] += ua_x - e_x;
    out[1] += ua_y - e_y;
    out[2] += e_x;
    out[3] += e_y;
}

/// Image-space adjoints of one endpoint back to its camera-frame position.
#[inline]
fn endpoint_backward(q: &[f64; 3], u_bar: [f64; 2], iz_bar: f64, k: &Intrinsics) -> [f64; 3] {
    let iz = 1.0 / q[2];
    [
        u_bar[0] * k.fx * iz,
        u_bar[1] * k.fy * iz,
        -iz * iz * (u_bar[0] * k.fx * q[0] + u_bar[1] * k.fy * q[1] + iz_bar),
    ]
}

fn capsule_backward(c: &ProjCapsule, a: &[f64; 6], k: &Intrinsics, grad: &mut PoseGradient) {
    if a.iter().all(|&x| x == 0.0) {
        return;
    }
    let mut ga = endpoint_backward(&c.qa, [a[0], a[1]], a[4], k);
    let mut gb = endpoint_backward(&c.qb, [a[2], a[3]], a[5], k);
    // clipped point: c + lam (o - c), lam = (zn - c.z) / (o.z - c.z), z pinned
    let (g_clip, g_other, pc, po) = match c.clip {
        Clip::None => {
            grad.accumulate_point(&c.wa, &ga);
            grad.accumulate_point(&c.wb, &gb);
            return;
        }
        Clip::A => (&mut ga, &mut gb, c.oa, c.ob),
        Clip::B => (&mut gb, &mut ga, c.ob, c.oa),
    };
    let dz = po[2] - pc[2];
    let lam = (Z_NEAR - pc[2]) / dz;
    let (gx, gy) = (g_clip[0], g_clip[1]);
    let dlam = gx * (po[0] - pc[0]) + gy * (po[1] - pc[1]);
    g_other[0] += gx * lam;
    g_other[1] += gy * lam;
    g_other[2] += dlam * -(Z_NEAR - pc[2]) / (dz * dz);
    *g_clip = [
        gx * (1.0 - lam),
        gy * (1.0 - lam),
        dlam * (Z_NEAR - po[2]) / (dz * dz),
    ];
    grad.accumulate_point(&c.wa, &ga);
    grad.accumulate_point(&c.wb, &gb);
}

/// Projects every joint of frame `t` through `pose`, per character in joint order.
pub fn project_joints(
    scene: &Scene,
    t: usize,
    pose: &RigidTransform,
    k: &Intrinsics,
) -> Result<Vec<Vec<Projection>>> {
    check_world(scene)?;
    let joints = scene.joints_at(t)?;
    Ok(joints
        .iter()
        .map(|js| {
            js.iter()
                .map(|p| {
                    let q = pose.apply(&Vector3::from(*p));
                    project_camera_point(&[q.x, q.y, q.z], k)
                })
                .collect()
        })
        .collect())
}
