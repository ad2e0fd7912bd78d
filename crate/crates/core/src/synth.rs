//! Seeded synthetic footage with ground truth.
//!
//! A static scene (smooth illumination, a few hard-edged structures, fine
//! texture) with mild per-frame sensor noise and one pedestrian-sized
//! rectangle walking across it. Everything is a pure function of the seed.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxes::BoundingBox;
use crate::exec::Execution;
use crate::frameio::{Fps, Frame, FrameAnnotation, VideoSequence};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub fps: Fps,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 160,
            height: 96,
            frames: 100,
            fps: Fps { num: 10, den: 1 },
            seed: 42,
        }
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

struct Slab {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    delta: f64,
}

/// Noise-free background; evaluated per pixel.
struct Backdrop {
    base: f64,
    tilt_x: f64,
    tilt_y: f64,
    waves: Vec<Wave>,
    slabs: Vec<Slab>,
    grain: Vec<f64>,
    width: u32,
}

impl Backdrop {
    fn new(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Self {
        let (w, h) = (width as f64, height as f64);
        let waves = (0..6)
            .map(|_| Wave {
                fx: rng.random_range(0.2..1.5) / w,
                fy: rng.random_range(0.2..1.5) / h,
                phase: rng.random_range(0.0..TAU),
                amp: rng.random_range(3.0..10.0),
            })
            .collect();
        let slabs = (0..4)
            .map(|_| {
                let x0 = rng.random_range(0.0..w * 0.8);
                let y0 = rng.random_range(0.0..h * 0.8);
                Slab {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(w * 0.1..w * 0.4),
                    y1: y0 + rng.random_range(h * 0.1..h * 0.3),
                    delta: rng.random_range(-30.0..30.0),
                }
            })
            .collect();
        // fine static texture: smoothed white noise, amplitude a few levels
        let n = (width * height) as usize;
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut grain = vec![0.0; n];
        for y in 0..height as i64 {
            for x in 0..width as i64 {
                let mut s = 0.0;
                let mut c = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (sx, sy) = (x + dx, y + dy);
                        if sx >= 0 && sy >= 0 && sx < width as i64 && sy < height as i64 {
                            s += raw[(sy * width as i64 + sx) as usize];
                            c += 1.0;
                        }
                    }
                }
                grain[(y * width as i64 + x) as usize] = 3.0 * s / c;
            }
        }
        Backdrop {
            base: rng.random_range(100.0..140.0),
            tilt_x: rng.random_range(-20.0..20.0) / w,
            tilt_y: rng.random_range(-20.0..20.0) / h,
            waves,
            slabs,
            grain,
            width,
        }
    }

    fn value(&self, x: u32, y: u32) -> f64 {
        let (fx, fy) = (x as f64, y as f64);
        let mut v = self.base + self.tilt_x * fx + self.tilt_y * fy;
        for w in &self.waves {
            v += w.amp * (TAU * (w.fx * fx + w.fy * fy) + w.phase).cos();
        }
        for s in &self.slabs {
            if fx >= s.x0 && fx < s.x1 && fy >= s.y0 && fy < s.y1 {
                v += s.delta;
            }
        }
        v + self.grain[(y * self.width + x) as usize]
    }
}

fn to_sample(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Sensor noise: integer offsets in -1..=1 with a bias toward 0.
fn sensor_noise(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0u8..8) {
        0 => -1.0,
        7 => 1.0,
        _ => 0.0,
    }
}

/// Independent natural-texture still, for codec corpora.
pub fn texture_frame(width: u32, height: u32, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let backdrop = Backdrop::new(&mut rng, width, height);
    let mut px = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            px.push(to_sample(backdrop.value(x, y) + sensor_noise(&mut rng)));
        }
    }
    Frame::new(width, height, px).expect("dimensions are consistent")
}

/// `count` texture stills with seeds `seed, seed + 1, ...`.
pub fn texture_corpus(width: u32, height: u32, count: usize, seed: u64) -> Vec<Frame> {
    Execution::default().map_range(0..count, |i| texture_frame(width, height, seed.wrapping_add(i as u64)))
}

/// Pedestrian box at frame `k`: walks left to right and wraps.
fn walker_box(cfg: &SceneConfig, k: usize) -> BoundingBox {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let bw = (w / 10.0).floor().max(2.0);
    let bh = (h / 3.0).floor().max(2.0);
    let span = (w - bw).max(1.0);
    let x = ((k as f64 * 2.0) % span).floor();
    let y = ((h - bh) * 0.6).floor();
    BoundingBox::new(x, y, bw, bh).expect("walker box is non-degenerate")
}

pub fn scene(cfg: &SceneConfig) -> Result<(VideoSequence, Vec<FrameAnnotation>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let backdrop = Backdrop::new(&mut rng, cfg.width, cfg.height);
    let (w, h) = (cfg.width, cfg.height);
    let background: Vec<f64> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| backdrop.value(x, y)).collect();
    let tone = rng.random_range(40.0..70.0);

    let frames = Execution::default().map_range(0..cfg.frames, |k| {
        let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let b = walker_box(cfg, k);
        let (bx0, by0) = (b.x as u32, b.y as u32);
        let (bx1, by1) = (bx0 + b.w as u32, by0 + b.h as u32);
        let mut px = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                let mut v = background[(y * w + x) as usize];
                if x >= bx0 && x < bx1 && y >= by0 && y < by1 {
                    // darker figure, lighter toward the head
                    v = tone + 25.0 * (1.0 - (y - by0) as f64 / b.h);
                }
                px.push(to_sample(v + sensor_noise(&mut noise)));
            }
        }
        Frame::new(w, h, px).expect("dimensions are consistent")
    });
    let gt = (0..cfg.frames)
        .map(|k| FrameAnnotation {
            frame_index: k,
            boxes: vec![walker_box(cfg, k)],
        })
        .collect();
    Ok((VideoSequence::new(w, h, cfg.fps, frames)?, gt))
}
