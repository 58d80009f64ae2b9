use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Bilinear resize of an `[H, W, C]` image with half-pixel centers
/// (corner alignment off). Source coordinates are clamped to the edge.
pub fn resize_bilinear(image: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (h, w, c) = image.dims3()?;
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::shape("resize_bilinear", "target extents must be positive"));
    }
    if (th, tw) == (h, w) {
        return Ok(image.clone());
    }
    let rows = axis_taps(h, th);
    let cols = axis_taps(w, tw);
    let src = image.data();
    let mut out = Vec::with_capacity(th * tw * c);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch] as f64;
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    Tensor::new(vec![th, tw, c], out)
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}
