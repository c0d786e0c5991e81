use serde::{Deserialize, Serialize};

/// One ray–face crossing recorded for a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Fragment {
    pub face: u32,
    /// Distance from the crossing to the detector pixel along the pixel ray (mm).
    pub z: f64,
    /// `+1` entering, `-1` exiting, `0` edge-on.
    pub sign: i8,
    /// Perspective-correct barycentric coordinates of the crossing on the face.
    pub bary: [f64; 3],
}

/// Fixed-capacity per-pixel fragment store (K entries per pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFragmentBuffer {
    width: usize,
    height: usize,
    capacity: usize,
    fragments: Vec<Fragment>,
    counts: Vec<u32>,
    overflow: Vec<bool>,
}

impl PixelFragmentBuffer {
    pub fn new(width: usize, height: usize, capacity: usize) -> Self {
        Self {
            width,
            height,
            capacity,
            fragments: vec![Fragment::default(); width * height * capacity],
            counts: vec![0; width * height],
            overflow: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fragments(&self, x: usize, y: usize) -> &[Fragment] {
        let p = y * self.width + x;
        let start = p * self.capacity;
        &self.fragments[start..start + self.counts[p] as usize]
    }

    pub fn overflowed(&self, x: usize, y: usize) -> bool {
        self.overflow[y * self.width + x]
    }

    pub fn overflow_count(&self) -> usize {
        self.overflow.iter().filter(|&&o| o).count()
    }

    /// Appends a fragment; returns `false` and raises the overflow flag when the pixel is full.
    pub fn push(&mut self, x: usize, y: usize, fragment: Fragment) -> bool {
        let p = y * self.width + x;
        let cap = self.capacity;
        push_into(
            &mut self.fragments[p * cap..(p + 1) * cap],
            &mut self.counts[p],
            &mut self.overflow[p],
            fragment,
        )
    }

    pub(crate) fn rows_mut(&mut self) -> impl rayon::iter::IndexedParallelIterator<Item = RowMut<'_>> {
        use rayon::prelude::*;
        let (w, cap) = (self.width, self.capacity);
        self.fragments
            .par_chunks_mut(w * cap)
            .zip(self.counts.par_chunks_mut(w))
            .zip(self.overflow.par_chunks_mut(w))
            .enumerate()
            .map(move |(y, ((fragments, counts), overflow))| RowMut {
                y,
                capacity: cap,
                fragments,
                counts,
                overflow,
            })
    }
}

pub(crate) struct RowMut<'a> {
    pub y: usize,
    capacity: usize,
    fragments: &'a mut [Fragment],
    counts: &'a mut [u32],
    overflow: &'a mut [bool],
}

impl RowMut<'_> {
    pub fn push(&mut self, x: usize, fragment: Fragment) {
        let cap = self.capacity;
        push_into(
            &mut self.fragments[x * cap..(x + 1) * cap],
            &mut self.counts[x],
            &mut self.overflow[x],
            fragment,
        );
    }
}

fn push_into(slots: &mut [Fragment], count: &mut u32, overflow: &mut bool, fragment: Fragment) -> bool {
    let n = *count as usize;
    if n < slots.len() {
        slots[n] = fragment;
        *count += 1;
        true
    } else {
        *overflow = true;
        false
    }
}
