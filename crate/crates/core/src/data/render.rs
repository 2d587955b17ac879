//! Procedural sample renderer.
//!
//! A sample is a filled regular polygon with `3 + category` vertices carrying
//! a sinusoidal grating whose base frequency is tied to the category, over a
//! flat coloured background. The proxy distribution perturbs the same draw
//! with four shifts, each scaled by `1 - fidelity`: grating frequency, global
//! colour, an additive low-frequency artifact field and vertex jitter.
//!
//! Both distributions consume the random stream identically, and every proxy
//! term enters as `x + 0.0 * y` at fidelity 1, so `Proxy(1.0)` and `Real`
//! render byte-identical images.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{DatasetSpec, Distribution, Image, ImageSet, ImageShape, Split};
use crate::error::Result;
use crate::invalid;
use crate::rng::{derived_rng, tag, Rng};

/// Grating frequency band in cycles per pixel.
const FREQ_LOW: f64 = 0.06;
const FREQ_HIGH: f64 = 0.36;
/// Within-category relative frequency spread (both distributions).
const FREQ_JITTER: f64 = 0.05;
/// Systematic and random relative frequency shift of the proxy at fidelity 0.
const PROXY_FREQ_SHIFT: f64 = 0.30;
const PROXY_FREQ_SPREAD: f64 = 0.15;
/// Additive colour offset of the proxy at fidelity 0, in `[0, 1]` units.
const PROXY_COLOR_SHIFT: [f64; 3] = [0.14, -0.10, 0.12];
const PROXY_ARTIFACT_AMPLITUDE: f64 = 0.18;
const ARTIFACT_COMPONENTS: usize = 2;
/// Vertex radius (relative) and angle (fraction of the vertex spacing) jitter.
const PROXY_RADIUS_JITTER: f64 = 0.30;
const PROXY_ANGLE_JITTER: f64 = 0.35;
const CENTER_JITTER: f64 = 0.10;
const PIXEL_NOISE: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Renderer {
    pub image_size: usize,
    pub num_categories: usize,
}

impl Renderer {
    pub fn new(image_size: usize, num_categories: usize) -> Self {
        Self { image_size, num_categories }
    }

    pub fn for_spec(spec: &DatasetSpec) -> Self {
        Self::new(spec.image_size, spec.num_categories)
    }

    /// Base grating frequency of a category, in cycles per pixel.
    pub fn base_frequency(&self, category: usize) -> f64 {
        let span = (self.num_categories.max(2) - 1) as f64;
        FREQ_LOW + (FREQ_HIGH - FREQ_LOW) * category as f64 / span
    }
}

struct Artifact {
    kx: f64,
    ky: f64,
    phase: f64,
    weights: [f64; 3],
}

struct Scene {
    polygon: Vec<(f64, f64)>,
    frequency: f64,
    phase: f64,
    direction: (f64, f64),
    background: [f64; 3],
    fg_a: [f64; 3],
    fg_b: [f64; 3],
    artifacts: Vec<Artifact>,
}

impl Scene {
    /// Geometry and colours of one sample; `d = 1 - fidelity` for the proxy, 0 for real.
    fn draw(renderer: &Renderer, category: usize, d: f64, rng: &mut Rng) -> Self {
        let size = renderer.image_size as f64;
        let vertices = 3 + category;

        // Draw order is part of the format; do not reorder.
        let rotation = unit(rng) * TAU;
        let cx = 0.5 * size + signed(rng) * CENTER_JITTER * size;
        let cy = 0.5 * size + signed(rng) * CENTER_JITTER * size;
        let radius = (0.5 + 0.3 * unit(rng)) * size * 0.5;
        let orientation = unit(rng) * PI;
        let phase = unit(rng) * TAU;
        let freq_jitter = signed(rng);
        let background = [unit(rng), unit(rng), unit(rng)];
        let fg_a = [unit(rng), unit(rng), unit(rng)];
        let freq_noise: f64 = rng.sample(StandardNormal);
        let jitter: Vec<(f64, f64)> = (0..vertices).map(|_| (signed(rng), signed(rng))).collect();
        let artifacts: Vec<Artifact> = (0..ARTIFACT_COMPONENTS)
            .map(|_| Artifact {
                kx: 2.0 * signed(rng),
                ky: 2.0 * signed(rng),
                phase: unit(rng) * TAU,
                weights: [signed(rng), signed(rng), signed(rng)],
            })
            .collect();

        let frequency = (renderer.base_frequency(category)
            * (1.0 + FREQ_JITTER * freq_jitter)
            * (1.0 + d * (PROXY_FREQ_SHIFT + PROXY_FREQ_SPREAD * freq_noise)))
            .max(0.01);
        let spacing = TAU / vertices as f64;
        let polygon = jitter
            .iter()
            .enumerate()
            .map(|(i, &(rj, aj))| {
                let angle = rotation + spacing * i as f64 + d * PROXY_ANGLE_JITTER * spacing * aj;
                let r = radius * (1.0 + d * PROXY_RADIUS_JITTER * rj);
                (cx + r * libm::cos(angle), cy + r * libm::sin(angle))
            })
            .collect();
        Self {
            polygon,
            frequency,
            phase,
            direction: (libm::cos(orientation), libm::sin(orientation)),
            background,
            fg_a,
            fg_b: [1.0 - fg_a[0], 1.0 - fg_a[1], 1.0 - fg_a[2]],
            artifacts,
        }
    }
}

fn unit(rng: &mut Rng) -> f64 {
    rng.random::<f64>()
}

fn signed(rng: &mut Rng) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

/// Render one sample. The output depends only on the arguments.
pub fn render_sample(
    renderer: &Renderer,
    category: usize,
    distribution: Distribution,
    fidelity: f64,
    rng: &mut Rng,
) -> Result<Image> {
    if category >= renderer.num_categories {
        return invalid!("category {category} outside [0, {})", renderer.num_categories);
    }
    if !(0.0..=1.0).contains(&fidelity) {
        return invalid!("fidelity must lie in [0, 1], got {fidelity}");
    }
    let d = match distribution {
        Distribution::Real => 0.0,
        Distribution::Proxy => 1.0 - fidelity,
    };
    let scene = Scene::draw(renderer, category, d, rng);
    let size = renderer.image_size as f64;
    let Scene { polygon, frequency, phase, direction: (dir_x, dir_y), background, fg_a, fg_b, artifacts } = scene;

    let shape = ImageShape::square(renderer.image_size);
    let mut image = Image::zeros(shape);
    const SUB: [f64; 2] = [0.25, 0.75];
    for y in 0..shape.height {
        for x in 0..shape.width {
            let mut acc = [0.0f64; 3];
            for sy in SUB {
                for sx in SUB {
                    let (px, py) = (x as f64 + sx, y as f64 + sy);
                    let color = if inside(&polygon, px, py) {
                        let g = 0.5 + 0.5 * libm::sin(TAU * frequency * (px * dir_x + py * dir_y) + phase);
                        [
                            fg_a[0] * g + fg_b[0] * (1.0 - g),
                            fg_a[1] * g + fg_b[1] * (1.0 - g),
                            fg_a[2] * g + fg_b[2] * (1.0 - g),
                        ]
                    } else {
                        background
                    };
                    for c in 0..3 {
                        acc[c] += 0.25 * color[c];
                    }
                }
            }
            let (u, v) = ((x as f64 + 0.5) / size, (y as f64 + 0.5) / size);
            for (c, &base) in acc.iter().enumerate() {
                let field: f64 =
                    artifacts.iter().map(|a| a.weights[c] * libm::sin(TAU * (a.kx * u + a.ky * v) + a.phase)).sum();
                let noise: f64 = rng.sample(StandardNormal);
                let value =
                    base + d * PROXY_COLOR_SHIFT[c] + d * PROXY_ARTIFACT_AMPLITUDE * field + PIXEL_NOISE * noise;
                image.set(c, y, x, quantize(value));
            }
        }
    }
    Ok(image)
}

fn quantize(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Even-odd crossing test.
fn inside(polygon: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut hit = false;
    let mut j = polygon.len() - 1;
    for i in 0..polygon.len() {
        let (xi, yi) = polygon[i];
        let (xj, yj) = polygon[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            hit = !hit;
        }
        j = i;
    }
    hit
}

/// Random stream of record `index` in `split`. Independent of the
/// distribution and fidelity, so real and proxy sets are paired draws.
pub fn sample_rng(seed: u64, split: Split, index: usize) -> Rng {
    derived_rng(seed, &[tag(split.as_str()), index as u64])
}

/// Render every record of one split. Record `i` has label `i % num_categories`.
pub fn generate_split(spec: &DatasetSpec, split: Split) -> Result<ImageSet> {
    spec.validate()?;
    let renderer = Renderer::for_spec(spec);
    let count = spec.count(split);
    let shape = spec.shape();
    let mut pixels = Vec::with_capacity(count * shape.len());
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let category = i % spec.num_categories;
        let mut rng = sample_rng(spec.seed, split, i);
        let image = render_sample(&renderer, category, spec.distribution, spec.fidelity, &mut rng)?;
        pixels.extend_from_slice(&image.data);
        labels.push(category as u16);
    }
    ImageSet::new(shape, spec.num_categories, pixels, labels)
}
