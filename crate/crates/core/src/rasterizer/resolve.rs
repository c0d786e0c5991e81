use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{Fragment, PixelFragmentBuffer};
use crate::image::{Image, Mask};

/// Resolved lengths in `(-NEGATIVE_NOISE_MM, 0)` are float noise and clamp to zero.
pub const NEGATIVE_NOISE_MM: f64 = 1e-6;

/// Per-pixel path length through one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMap {
    pub values: Image,
    /// Pixels whose fragment signs summed to zero (and did not overflow).
    pub valid: Mask,
    /// Pixels that took their value from a valid neighbour.
    pub repaired: Mask,
    pub label: String,
}

impl DistanceMap {
    pub fn zeros(width: usize, height: usize, label: impl Into<String>) -> Self {
        Self {
            values: Image::zeros(width, height),
            valid: Mask::new(width, height, true),
            repaired: Mask::new(width, height, false),
            label: label.into(),
        }
    }

    /// Wraps plain values as a fully valid map.
    pub fn from_values(values: Image, label: impl Into<String>) -> Self {
        let (w, h) = values.dims();
        Self {
            values,
            valid: Mask::new(w, h, true),
            repaired: Mask::new(w, h, false),
            label: label.into(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    /// Pixels that receive gradient in the backward pass.
    pub fn differentiable(&self, x: usize, y: usize) -> bool {
        self.valid.get(x, y) && !self.repaired.get(x, y)
    }
}

/// Signed sum of one pixel's fragments, accumulated in face-id order.
pub fn resolve_pixel(fragments: &[Fragment]) -> (f64, i32) {
    let mut sorted: Vec<Fragment> = fragments.to_vec();
    sorted.sort_by_key(|f| f.face);
    let mut length = 0.0;
    let mut sign_sum = 0i32;
    for f in &sorted {
        length += f64::from(f.sign) * f.z;
        sign_sum += i32::from(f.sign);
    }
    (length, sign_sum)
}

/// Sums signed fragment depths per pixel, then repairs pixels whose entry/exit counts disagree.
pub fn resolve_distance(buf: &PixelFragmentBuffer, label: &str) -> DistanceMap {
    let (w, h) = buf.dims();
    let per_pixel: Vec<(f64, bool)> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let (mut length, sign_sum) = resolve_pixel(buf.fragments(x, y));
            let mut ok = sign_sum == 0 && !buf.overflowed(x, y) && length.is_finite();
            if ok && length < 0.0 {
                if length > -NEGATIVE_NOISE_MM {
                    length = 0.0;
                } else {
                    ok = false;
                }
            }
            (length, ok)
        })
        .collect();
    let values = Image::from_vec(w, h, per_pixel.iter().map(|p| p.0).collect()).expect("sized");
    let valid = Mask::from_vec(w, h, per_pixel.iter().map(|p| p.1).collect());
    repair_pixels(DistanceMap {
        values,
        valid,
        repaired: Mask::new(w, h, false),
        label: label.to_string(),
    })
}

/// Replaces each invalid pixel by the nearest valid one, scanning Chebyshev rings outward
/// and taking the first hit in row-major order within a ring.
pub fn repair_pixels(map: DistanceMap) -> DistanceMap {
    let (w, h) = map.dims();
    if map.valid.all() {
        return map;
    }
    let any_valid = map.valid.any();
    let mut values = map.values.clone();
    let mut repaired = map.repaired.clone();
    let fixes: Vec<(usize, f64)> = (0..w * h)
        .into_par_iter()
        .filter(|&p| !map.valid.get(p % w, p / w))
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let value = if any_valid {
                nearest_valid(&map, x, y).unwrap_or(0.0)
            } else {
                0.0
            };
            (p, value)
        })
        .collect();
    for (p, value) in fixes {
        values.data_mut()[p] = value;
        repaired.set(p % w, p / w, true);
    }
    DistanceMap {
        values,
        valid: map.valid,
        repaired,
        label: map.label,
    }
}

fn nearest_valid(map: &DistanceMap, cx: usize, cy: usize) -> Option<f64> {
    let (w, h) = map.dims();
    let (cx, cy) = (cx as isize, cy as isize);
    let max_r = w.max(h) as isize;
    for r in 1..=max_r {
        for y in (cy - r).max(0)..=(cy + r).min(h as isize - 1) {
            let on_row_edge = (y - cy).abs() == r;
            let mut x = (cx - r).max(0);
            while x <= (cx + r).min(w as isize - 1) {
                if on_row_edge || (x - cx).abs() == r {
                    let (ux, uy) = (x as usize, y as usize);
                    if map.valid.get(ux, uy) {
                        return Some(map.values.get(ux, uy));
                    }
                }
                // interior of the ring is skipped
                x = if on_row_edge || x != cx - r { x + 1 } else { cx + r };
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag(face: u32, sign: i8, z: f64) -> Fragment {
        Fragment {
            face,
            z,
            sign,
            bary: [1.0 / 3.0; 3],
        }
    }

    #[test]
    fn single_chord() {
        assert_eq!(resolve_pixel(&[frag(0, 1, 150.0), frag(1, -1, 50.0)]), (100.0, 0));
    }

    #[test]
    fn nested_crossings_sum_alternating() {
        let (d1, d2, d3, d4) = (400.0, 310.0, 250.0, 120.0);
        let frags = [frag(3, -1, d4), frag(0, 1, d1), frag(2, 1, d3), frag(1, -1, d2)];
        let (l, s) = resolve_pixel(&frags);
        assert_eq!(s, 0);
        assert_eq!(l, d1 - d2 + d3 - d4);
    }

    #[test]
    fn open_surface_pixel_is_repaired_from_neighbour() {
        let mut buf = PixelFragmentBuffer::new(3, 3, 2);
        for y in 0..3 {
            for x in 0..3 {
                if (x, y) == (1, 1) {
                    buf.push(x, y, frag(0, 1, 80.0));
                } else {
                    buf.push(x, y, frag(0, 1, 150.0));
                    buf.push(x, y, frag(1, -1, 50.0));
                }
            }
        }
        let map = resolve_distance(&buf, "x");
        assert!(!map.valid.get(1, 1));
        assert!(map.repaired.get(1, 1));
        assert_eq!(map.values.get(1, 1), 100.0);
        assert_eq!(map.repaired.count(), 1);
    }

    #[test]
    fn empty_pixels_are_valid_zero() {
        let buf = PixelFragmentBuffer::new(4, 2, 2);
        let map = resolve_distance(&buf, "x");
        assert!(map.valid.all());
        assert_eq!(map.values.sum(), 0.0);
    }

    #[test]
    fn fully_valid_map_unchanged() {
        let map = DistanceMap::from_values(Image::from_fn(5, 4, |x, y| (x * 7 + y) as f64), "x");
        let out = repair_pixels(map.clone());
        assert_eq!(out, map);
    }

    #[test]
    fn no_valid_pixel_anywhere_gives_zero() {
        let mut map = DistanceMap::from_values(Image::filled(3, 2, 5.0), "x");
        map.valid = Mask::new(3, 2, false);
        let out = repair_pixels(map);
        assert!(out.repaired.all());
        assert_eq!(out.values.sum(), 0.0);
    }

    #[test]
    fn marginal_negative_clamped_large_negative_invalid() {
        let mut buf = PixelFragmentBuffer::new(2, 1, 2);
        buf.push(0, 0, frag(0, 1, 50.0));
        buf.push(0, 0, frag(1, -1, 50.0 + 5e-7));
        buf.push(1, 0, frag(0, 1, 50.0));
        buf.push(1, 0, frag(1, -1, 51.0));
        let map = resolve_distance(&buf, "x");
        assert!(map.valid.get(0, 0));
        assert_eq!(map.values.get(0, 0), 0.0);
        assert!(!map.valid.get(1, 0));
        assert!(map.repaired.get(1, 0));
        assert_eq!(map.values.get(1, 0), 0.0);
    }

    #[test]
    fn overflowed_pixel_is_invalid() {
        let mut buf = PixelFragmentBuffer::new(2, 1, 2);
        buf.push(0, 0, frag(0, 1, 90.0));
        buf.push(0, 0, frag(1, -1, 60.0));
        assert!(!buf.push(0, 0, frag(2, 1, 40.0)));
        assert!(buf.overflowed(0, 0));
        let map = resolve_distance(&buf, "x");
        assert!(!map.valid.get(0, 0));
        assert!(map.repaired.get(0, 0));
    }
}
