//! Uniform-grid spatial index over a finite point set.
//!
//! Cells are cubes of side equal to the query radius (widened only when the
//! raw cell count would explode for very small radii), so every pair at
//! distance below the radius lands in the same or an adjacent cell and a
//! 3^d-neighbourhood scan enumerates a superset of the true neighbours.

/// Hard ceiling on the number of grid cells; the cell side doubles until the
/// grid fits. Candidate enumeration stays correct because the scan reach is
/// recomputed from the effective cell side.
const MAX_CELLS: usize = 1 << 22;

pub(crate) struct UniformGrid {
    d: usize,
    cell: f64,
    origin: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    buckets: Vec<Vec<u32>>,
}

impl UniformGrid {
    /// Builds the index for `n` points stored row-major in `points`
    /// (`points.len() == n * d`), with nominal cell side `cell > 0`.
    pub(crate) fn build(points: &[f64], d: usize, cell: f64) -> Self {
        assert!(d >= 1 && cell > 0.0 && cell.is_finite());
        assert_eq!(points.len() % d, 0);
        let n = points.len() / d;

        let mut origin = vec![0.0f64; d];
        let mut extent = vec![0.0f64; d];
        if n > 0 {
            for k in 0..d {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..n {
                    let x = points[i * d + k];
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                origin[k] = lo;
                extent[k] = hi - lo;
            }
        }

        // Widen the cell until the grid fits the cell budget.
        let mut cell_eff = cell;
        let shape = loop {
            let mut shape = Vec::with_capacity(d);
            let mut total: usize = 1;
            let mut fits = true;
            for &e in &extent {
                let m = (e / cell_eff).floor() as usize + 1;
                total = total.saturating_mul(m);
                if total > MAX_CELLS {
                    fits = false;
                    break;
                }
                shape.push(m);
            }
            if fits {
                break shape;
            }
            cell_eff *= 2.0;
        };

        let mut strides = vec![0usize; d];
        let mut acc = 1usize;
        for k in (0..d).rev() {
            strides[k] = acc;
            acc *= shape[k];
        }
        let mut buckets = vec![Vec::new(); acc.max(1)];
        for i in 0..n {
            let idx = Self::flat_index(&points[i * d..(i + 1) * d], &origin, &shape, &strides, cell_eff);
            buckets[idx].push(i as u32);
        }
        UniformGrid {
            d,
            cell: cell_eff,
            origin,
            shape,
            strides,
            buckets,
        }
    }

    fn flat_index(x: &[f64], origin: &[f64], shape: &[usize], strides: &[usize], cell: f64) -> usize {
        let mut idx = 0usize;
        for k in 0..x.len() {
            let raw = ((x[k] - origin[k]) / cell).floor();
            let c = if raw.is_finite() && raw > 0.0 {
                (raw as usize).min(shape[k] - 1)
            } else {
                0
            };
            idx += c * strides[k];
        }
        idx
    }

    /// Calls `visit` with every stored point index whose cell lies within the
    /// axis-aligned reach of `radius` around `x`. The visited set is a
    /// superset of the points within `radius` of `x`; callers re-check exact
    /// distances.
    pub(crate) fn for_each_candidate<F: FnMut(u32)>(&self, x: &[f64], radius: f64, mut visit: F) {
        debug_assert_eq!(x.len(), self.d);
        let reach = (radius / self.cell).ceil() as i64;
        let mut lo = Vec::with_capacity(self.d);
        let mut hi = Vec::with_capacity(self.d);
        for ((&xk, &ok), &sk) in x.iter().zip(&self.origin).zip(&self.shape) {
            let raw = ((xk - ok) / self.cell).floor();
            let c = if raw.is_finite() { raw as i64 } else { 0 };
            lo.push((c - reach).clamp(0, sk as i64 - 1) as usize);
            hi.push((c + reach).clamp(0, sk as i64 - 1) as usize);
        }
        // Odometer over the clamped cell ranges.
        let mut cursor = lo.clone();
        loop {
            let flat: usize = cursor
                .iter()
                .zip(&self.strides)
                .map(|(&c, &s)| c * s)
                .sum();
            for &p in &self.buckets[flat] {
                visit(p);
            }
            let mut k = self.d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cursor[k] < hi[k] {
                    cursor[k] += 1;
                    for (j, c) in cursor.iter_mut().enumerate().skip(k + 1) {
                        *c = lo[j];
                    }
                    break;
                }
            }
        }
    }
}
