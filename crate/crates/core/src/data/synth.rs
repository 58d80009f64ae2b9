//! Parametric shape images used as a stand-in image corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Class names in rendering order.
pub const SHAPE_CLASSES: [&str; 8] = [
    "disk", "square", "triangle", "cross", "ring", "stripes", "checker", "gradient",
];

/// Renders `per_class` images for each of the first `classes` shapes.
pub fn synth_shapes_dataset(
    classes: usize,
    per_class: usize,
    image_size: (usize, usize),
    seed: u64,
) -> Result<LabeledDataset> {
    if !(2..=SHAPE_CLASSES.len()).contains(&classes) {
        return Err(Error::Config(format!(
            "synthetic datasets support 2 to {} classes, got {classes}",
            SHAPE_CLASSES.len()
        )));
    }
    let names: Vec<&str> = SHAPE_CLASSES[..classes].to_vec();
    synth_shapes_named(&names, per_class, image_size, seed)
}

/// Renders the named shapes in the given class order.
///
/// Each sample draws from its own generator keyed by `(seed, shape, index)`,
/// so pixels for a shape do not depend on which other classes are present.
pub fn synth_shapes_named(
    names: &[&str],
    per_class: usize,
    image_size: (usize, usize),
    seed: u64,
) -> Result<LabeledDataset> {
    if names.len() < 2 {
        return Err(Error::Config("at least two classes are required".into()));
    }
    if image_size.0 == 0 || image_size.1 == 0 {
        return Err(Error::Config("image_size must be positive".into()));
    }
    let mut shapes = Vec::with_capacity(names.len());
    for name in names {
        let idx = SHAPE_CLASSES
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Config(format!("unknown synthetic class {name:?}")))?;
        shapes.push(idx);
    }
    let mut samples = Vec::with_capacity(names.len() * per_class);
    for (label, &shape) in shapes.iter().enumerate() {
        for i in 0..per_class {
            let key = seed
                ^ (shape as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                ^ (i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            samples.push(Sample {
                id: format!("{}/{i:05}", SHAPE_CLASSES[shape]),
                image: render(shape, image_size, &mut rng),
                label,
            });
        }
    }
    LabeledDataset::new(names.iter().map(|s| s.to_string()).collect(), samples)
}

/// Inside-test for a shape in its local frame, where the shape roughly
/// fills the unit disk.
fn coverage(shape: usize, u: f64, v: f64) -> f64 {
    let r = (u * u + v * v).sqrt();
    let inside = match shape {
        0 => r <= 1.0,
        1 => u.abs().max(v.abs()) <= 0.8,
        2 => (-0.95..=0.7).contains(&v) && u.abs() <= (v + 0.95) * 0.6,
        3 => (u.abs() <= 0.28 && v.abs() <= 0.95) || (v.abs() <= 0.28 && u.abs() <= 0.95),
        4 => (0.55..=1.0).contains(&r),
        5 => u.abs().max(v.abs()) <= 0.9 && ((u + 0.9) * 2.8).floor() as i64 % 2 == 0,
        6 => {
            u.abs().max(v.abs()) <= 0.9
                && (((u + 0.9) * 1.7).floor() as i64 + ((v + 0.9) * 1.7).floor() as i64) % 2 == 0
        }
        7 => return ((u + 1.5) / 3.0).clamp(0.0, 1.0),
        _ => unreachable!("shape index checked by caller"),
    };
    if inside {
        1.0
    } else {
        0.0
    }
}

fn render(shape: usize, (h, w): (usize, usize), rng: &mut ChaCha8Rng) -> Tensor {
    let extent = h.min(w) as f64;
    let cx = rng.random_range(0.4..0.6) * w as f64;
    let cy = rng.random_range(0.4..0.6) * h as f64;
    let radius = rng.random_range(0.24..0.36) * extent;
    let angle: f64 = rng.random_range(-0.5..0.5);
    let (sin, cos) = angle.sin_cos();
    let mid: f64 = rng.random_range(0.45..0.55);
    let contrast: f64 = rng.random_range(0.25..0.45);
    let (background, foreground) = (mid - contrast / 2.0, mid + contrast / 2.0);
    let tint: [f64; 3] = [
        rng.random_range(-0.04..0.04),
        rng.random_range(-0.04..0.04),
        rng.random_range(-0.04..0.04),
    ];
    let noise = 0.3;
    let channels = 3;
    let mut data = Vec::with_capacity(h * w * channels);
    for y in 0..h {
        for x in 0..w {
            // 2x2 supersampling
            let mut cover = 0.0;
            for (sy, sx) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let dx = x as f64 + sx - cx;
                let dy = y as f64 + sy - cy;
                let u = (cos * dx + sin * dy) / radius;
                let v = (-sin * dx + cos * dy) / radius;
                cover += coverage(shape, u, v) / 4.0;
            }
            let level = background + (foreground - background) * cover;
            for t in tint {
                let jitter = rng.random_range(-noise..noise);
                data.push((level + t + jitter).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Tensor::new(vec![h, w, channels], data).expect("rendered buffer matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_classes() {
        let ds = synth_shapes_dataset(4, 10, (32, 32), 1).unwrap();
        assert_eq!(ds.len(), 40);
        assert_eq!(ds.classes(), &["disk", "square", "triangle", "cross"]);
        assert_eq!(ds.class_counts(), vec![10; 4]);
        assert_eq!(ds.image_shape(), Some(&[32, 32, 3][..]));
    }

    #[test]
    fn seeded_pixels() {
        let a = synth_shapes_dataset(3, 4, (16, 16), 7).unwrap();
        let b = synth_shapes_dataset(3, 4, (16, 16), 7).unwrap();
        let c = synth_shapes_dataset(3, 4, (16, 16), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pixels_in_unit_range() {
        let ds = synth_shapes_dataset(8, 3, (20, 24), 2).unwrap();
        for s in ds.samples() {
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rejects_unsupported_class_counts() {
        assert!(synth_shapes_dataset(1, 3, (8, 8), 0).is_err());
        assert!(synth_shapes_dataset(9, 3, (8, 8), 0).is_err());
        assert!(synth_shapes_named(&["disk", "blob"], 3, (8, 8), 0).is_err());
    }
}
