//! Multi-dimensional FFTs on cubic arrays built from batched 1D transforms.
//!
//! Arrays are cubes of side `n` in `dims` dimensions with axis 0 fastest.
//! Every 1D line is transformed by the same plan in the same way regardless of
//! how work is split across threads, so results do not depend on the pool size.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Lines handed to a single `Fft::process` call.
const LINES_PER_TASK: usize = 64;
/// Strided lines gathered per tile; each tile reads `TILE` contiguous values
/// from every one of its `n` rows.
const TILE: usize = 32;

#[derive(Clone)]
pub struct FftNd {
    n: usize,
    dims: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd")
            .field("n", &self.n)
            .field("dims", &self.dims)
            .finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

impl FftNd {
    pub fn new(n: usize, dims: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dims,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward DFT with kernel `exp(-2 pi i k x / n)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Forward);
    }

    /// Inverse DFT including the `1/n^dims` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Inverse);
        let scale = 1.0 / self.len() as f64;
        data.par_chunks_mut(4096).for_each(|chunk| {
            for v in chunk {
                *v *= scale;
            }
        });
    }

    fn transform(&self, data: &mut [Complex64], dir: Direction) {
        assert_eq!(data.len(), self.len(), "FFT buffer has wrong length");
        for axis in 0..self.dims {
            self.transform_axis(data, axis, dir);
        }
    }

    fn plan(&self, dir: Direction) -> &Arc<dyn Fft<f64>> {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        }
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, dir: Direction) {
        let n = self.n;
        let plan = self.plan(dir);
        let scratch_len = plan.get_inplace_scratch_len();
        let stride = n.pow(axis as u32);
        if stride == 1 {
            data.par_chunks_mut(n * LINES_PER_TASK).for_each_init(
                || vec![Complex64::new(0.0, 0.0); scratch_len],
                |scratch, chunk| plan.process_with_scratch(chunk, scratch),
            );
            return;
        }
        // Tile t of a block holds rows p = 0..n restricted to one run of inner
        // indices; tiles are disjoint, so they can be handed out in parallel.
        let width = TILE.min(stride);
        let mut tiles: Vec<Vec<&mut [Complex64]>> = Vec::with_capacity(data.len() / (n * width));
        for block in data.chunks_mut(n * stride) {
            let first = tiles.len();
            tiles.extend((0..stride.div_ceil(width)).map(|_| Vec::with_capacity(n)));
            for row in block.chunks_mut(stride) {
                for (t, piece) in row.chunks_mut(width).enumerate() {
                    tiles[first + t].push(piece);
                }
            }
        }
        tiles.into_par_iter().for_each_init(
            || (vec![Complex64::new(0.0, 0.0); n * width], vec![Complex64::new(0.0, 0.0); scratch_len]),
            |(lines, scratch), rows| {
                let w = rows[0].len();
                for (p, row) in rows.iter().enumerate() {
                    for (inner, v) in row.iter().enumerate() {
                        lines[inner * n + p] = *v;
                    }
                }
                plan.process_with_scratch(&mut lines[..w * n], scratch);
                for (p, row) in rows.into_iter().enumerate() {
                    for (inner, v) in row.iter_mut().enumerate() {
                        *v = lines[inner * n + p];
                    }
                }
            },
        );
    }
}
