//! Normalised gradient correlation and its exact adjoint.
//!
//! Each image is differentiated with central differences (replicate boundary) into an x and
//! a y channel. Per channel the zero-mean normalised cross-correlation is taken over the whole
//! image; the score is the mean over channels that vary in both images.

use crate::error::{Error, Result};
use crate::image::Image;

pub const EPS_VAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Central-difference derivative with replicated borders.
pub fn central_gradient(img: &Image, axis: Axis) -> Image {
    let (w, h) = img.dims();
    Image::from_fn(w, h, |x, y| match axis {
        Axis::X => (img.get((x + 1).min(w - 1), y) - img.get(x.saturating_sub(1), y)) / 2.0,
        Axis::Y => (img.get(x, (y + 1).min(h - 1)) - img.get(x, y.saturating_sub(1))) / 2.0,
    })
}

/// Transpose of [`central_gradient`].
pub fn central_gradient_adjoint(grad: &Image, axis: Axis) -> Image {
    let (w, h) = grad.dims();
    let mut out = Image::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let g = grad.get(x, y) / 2.0;
            if g == 0.0 {
                continue;
            }
            let (fwd, back) = match axis {
                Axis::X => (((x + 1).min(w - 1), y), (x.saturating_sub(1), y)),
                Axis::Y => ((x, (y + 1).min(h - 1)), (x, y.saturating_sub(1))),
            };
            out.set(fwd.0, fwd.1, out.get(fwd.0, fwd.1) + g);
            out.set(back.0, back.1, out.get(back.0, back.1) - g);
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Channel {
    axis: Axis,
    /// Zero-mean gradients of each image.
    a: Vec<f64>,
    b: Vec<f64>,
    var_a: f64,
    var_b: f64,
    cov: f64,
    active: bool,
}

impl Channel {
    fn new(a: &Image, b: &Image, axis: Axis) -> Self {
        let ga = central_gradient(a, axis).into_vec();
        let gb = central_gradient(b, axis).into_vec();
        let n = ga.len() as f64;
        let mean_a = ga.iter().sum::<f64>() / n;
        let mean_b = gb.iter().sum::<f64>() / n;
        let a: Vec<f64> = ga.iter().map(|v| v - mean_a).collect();
        let b: Vec<f64> = gb.iter().map(|v| v - mean_b).collect();
        let var_a = a.iter().map(|v| v * v).sum::<f64>() / n;
        let var_b = b.iter().map(|v| v * v).sum::<f64>() / n;
        let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
        Self {
            axis,
            a,
            b,
            var_a,
            var_b,
            cov,
            active: var_a > EPS_VAR && var_b > EPS_VAR,
        }
    }

    fn correlation(&self) -> f64 {
        (self.cov / (self.var_a.sqrt() * self.var_b.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Cached NGC evaluation of a moving image `a` against a fixed target `b`.
#[derive(Debug, Clone)]
pub struct NgcEvaluation {
    pub value: f64,
    dims: (usize, usize),
    channels: Vec<Channel>,
}

pub fn ngc_forward(a: &Image, b: &Image) -> Result<NgcEvaluation> {
    a.check_dims(b)?;
    let (w, h) = a.dims();
    if w == 0 || h == 0 {
        return Err(Error::UndefinedCorrelation("empty image"));
    }
    let channels = vec![Channel::new(a, b, Axis::X), Channel::new(a, b, Axis::Y)];
    let active: Vec<&Channel> = channels.iter().filter(|c| c.active).collect();
    if active.is_empty() {
        return Err(Error::UndefinedCorrelation(
            "no gradient channel varies in both images",
        ));
    }
    let value = active.iter().map(|c| c.correlation()).sum::<f64>() / active.len() as f64;
    Ok(NgcEvaluation {
        value,
        dims: (w, h),
        channels,
    })
}

pub fn ngc(a: &Image, b: &Image) -> Result<f64> {
    Ok(ngc_forward(a, b)?.value)
}

impl NgcEvaluation {
    /// Gradient of the NGC value with respect to every pixel of `a`.
    pub fn backward(&self) -> Image {
        let (w, h) = self.dims;
        let active: Vec<&Channel> = self.channels.iter().filter(|c| c.active).collect();
        let scale = 1.0 / active.len() as f64;
        let n = (w * h) as f64;
        let mut out = Image::zeros(w, h);
        for c in active {
            let sa = c.var_a.sqrt();
            let sb = c.var_b.sqrt();
            // d/dga_k of cov / (sa sb); the mean terms vanish because both centred sums are zero
            let k1 = 1.0 / (n * sa * sb);
            let k2 = c.cov / (n * sa * sa * sa * sb);
            let d = c
                .a
                .iter()
                .zip(&c.b)
                .map(|(ak, bk)| scale * (k1 * bk - k2 * ak))
                .collect();
            let d = Image::from_vec(w, h, d).expect("sized");
            let back = central_gradient_adjoint(&d, c.axis);
            out.data_mut()
                .iter_mut()
                .zip(back.data())
                .for_each(|(o, v)| *o += v);
        }
        out
    }

    /// Per-pixel contribution to the correlation, for visual inspection.
    pub fn ngc_map(&self) -> Image {
        let (w, h) = self.dims;
        let active: Vec<&Channel> = self.channels.iter().filter(|c| c.active).collect();
        let mut data = vec![0.0; w * h];
        for c in &active {
            let denom = c.var_a.sqrt() * c.var_b.sqrt() * active.len() as f64;
            for (d, (a, b)) in data.iter_mut().zip(c.a.iter().zip(&c.b)) {
                *d += a * b / denom;
            }
        }
        Image::from_vec(w, h, data).expect("sized")
    }
}

/// Stateful wrapper that keeps the last forward evaluation for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct NgcLoss {
    cache: Option<NgcEvaluation>,
}

impl NgcLoss {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn evaluate(&mut self, a: &Image, b: &Image) -> Result<f64> {
        let eval = ngc_forward(a, b)?;
        let v = eval.value;
        self.cache = Some(eval);
        Ok(v)
    }

    pub fn backward(&self) -> Result<Image> {
        self.cache
            .as_ref()
            .map(NgcEvaluation::backward)
            .ok_or(Error::MissingForward("ngc backward called before evaluate"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x as f64) * 0.7).sin() + ((y as f64) * 0.4).cos() * 2.0 + (x * y) as f64 * 0.01)
    }

    #[test]
    fn self_affine_and_negated() {
        let a = pattern(12, 9);
        assert!((ngc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ngc(&a, &a.map(|v| 3.5 * v - 2.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((ngc(&a, &a.map(|v| -v)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_image_self_similar() {
        let a = Image::from_fn(8, 5, |x, _| (x * x) as f64);
        assert!((ngc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_images_are_undefined() {
        let c = Image::filled(6, 6, 2.0);
        assert!(matches!(ngc(&c, &c), Err(Error::UndefinedCorrelation(_))));
        let a = pattern(6, 6);
        assert!(matches!(ngc(&a, &c), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            ngc(&pattern(4, 4), &pattern(5, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stationary_at_identity() {
        let a = pattern(10, 10);
        let g = ngc_forward(&a, &a).unwrap().backward();
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_adjoint_identity() {
        // <D u, v> == <u, D^T v>
        let u = pattern(7, 6);
        let v = Image::from_fn(7, 6, |x, y| (x as f64 - 2.0) * (y as f64 + 1.0));
        for axis in [Axis::X, Axis::Y] {
            let lhs: f64 = central_gradient(&u, axis).data().iter().zip(v.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.data().iter().zip(central_gradient_adjoint(&v, axis).data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_requires_forward() {
        assert!(matches!(NgcLoss::new().backward(), Err(Error::MissingForward(_))));
    }
}
