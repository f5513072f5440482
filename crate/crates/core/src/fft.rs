//! Multi-dimensional complex DFT on row-major arrays.
//!
//! Forward convention: `F[k] = sum_n f[n] exp(-2 pi i k n / N)`, unscaled;
//! the inverse divides by the total size.

use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::scalar::C64;

pub struct FftNd {
    dims: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        FftNd {
            dims: dims.to_vec(),
            fwd,
            inv,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, false);
    }

    /// Inverse transform including the `1/N` normalisation.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, true);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn run(&self, data: &mut [C64], inverse: bool) {
        assert_eq!(data.len(), self.len());
        let nd = self.dims.len();
        for axis in 0..nd {
            let n = self.dims[axis];
            if n == 1 {
                continue;
            }
            let plan = if inverse {
                &self.inv[axis]
            } else {
                &self.fwd[axis]
            };
            let inner: usize = self.dims[axis + 1..].iter().product();
            let outer: usize = self.dims[..axis].iter().product();
            let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            if inner == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            // gather a batch of strided lines, transform, scatter back
            let batch = inner.min(64);
            let mut buf = vec![C64::new(0.0, 0.0); n * batch];
            for o in 0..outer {
                let base = o * n * inner;
                let mut i0 = 0;
                while i0 < inner {
                    let b = batch.min(inner - i0);
                    for k in 0..n {
                        let row = base + k * inner + i0;
                        for l in 0..b {
                            buf[l * n + k] = data[row + l];
                        }
                    }
                    for line in buf[..b * n].chunks_exact_mut(n) {
                        plan.process_with_scratch(line, &mut scratch);
                    }
                    for k in 0..n {
                        let row = base + k * inner + i0;
                        for l in 0..b {
                            data[row + l] = buf[l * n + k];
                        }
                    }
                    i0 += b;
                }
            }
        }
    }
}
