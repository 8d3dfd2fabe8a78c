//! Unitary multi-dimensional FFT over row-major arrays.
//!
//! Plans are cached per thread, so concurrent callers never share a planner.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, Direction), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((len, dir))
            .or_insert_with(|| match dir {
                Direction::Forward => planner.plan_fft_forward(len),
                Direction::Inverse => planner.plan_fft_inverse(len),
            })
            .clone()
    })
}

/// Unnormalised transform along one axis of a row-major array.
pub fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, dir: Direction) {
    let n = shape[axis];
    if n <= 1 {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft = plan(n, dir);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    if inner == 1 {
        fft.process_with_scratch(data, &mut scratch);
        return;
    }

    // Gather a block of lines at a time so the copies stay cache friendly.
    let block = inner.min(64);
    let mut buf = vec![Complex64::default(); n * block];
    for o in 0..outer {
        let base = o * n * inner;
        let mut i0 = 0;
        while i0 < inner {
            let w = block.min(inner - i0);
            for k in 0..n {
                let row = base + k * inner + i0;
                for b in 0..w {
                    buf[b * n + k] = data[row + b];
                }
            }
            fft.process_with_scratch(&mut buf[..w * n], &mut scratch);
            for k in 0..n {
                let row = base + k * inner + i0;
                for b in 0..w {
                    data[row + b] = buf[b * n + k];
                }
            }
            i0 += w;
        }
    }
}

/// Unitary transform over all axes of `shape`.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], dir: Direction) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total, "buffer does not match shape");
    for axis in 0..shape.len() {
        fft_axis(data, shape, axis, dir);
    }
    let s = 1.0 / (total as f64).sqrt();
    for v in data.iter_mut() {
        *v *= s;
    }
}
