//! Adaptive average pooling over patch grids.
//!
//! Numeric reference for the visual projector's token-count reduction:
//! a height×width×dim grid of encoder patches is pooled down to any
//! smaller grid, e.g. 27×27 (729 patches) to 12×12 (144 visual tokens).
//! Output cell (i, j) averages the input region
//! `[floor(i*in/out), ceil((i+1)*in/out))` on each axis; regions may
//! overlap when `out` does not divide `in`. Accumulation is in f64
//! regardless of storage precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense row-major grid of patch vectors: index (r, c, d) maps to
/// `values[(r * width + c) * dim + d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, dim: usize, values: Vec<f64>) -> Result<Self, PoolError> {
        if height < 1 || width < 1 || dim < 1 {
            return Err(PoolError::EmptyShape { height, width, dim });
        }
        if values.len() != height * width * dim {
            return Err(PoolError::ShapeMismatch {
                expected: height * width * dim,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PoolError::NonFinite { index: i });
        }
        Ok(Self { height, width, dim, values })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, PoolError> {
        let mut values = Vec::with_capacity(height * width * dim);
        for r in 0..height {
            for c in 0..width {
                for d in 0..dim {
                    values.push(f(r, c, d));
                }
            }
        }
        Self::new(height, width, dim, values)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, d: usize) -> f64 {
        self.values[(r * self.width + c) * self.dim + d]
    }

    /// Number of grid cells (tokens), `height * width`.
    pub fn tokens(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("grid dimensions must all be >= 1, got {height}x{width}x{dim}")]
    EmptyShape { height: usize, width: usize, dim: usize },
    #[error("values length {actual} does not match height*width*dim = {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("output index {i} out of range for out_dim {out_dim}")]
    IndexOutOfRange { i: usize, out_dim: usize },
    #[error("cannot pool {in_dim} up to {out_dim}; upsampling is not supported")]
    Upsample { in_dim: usize, out_dim: usize },
    #[error("target token count {0} is not a perfect square")]
    NonSquareTarget(usize),
    #[error("target grid {side}x{side} exceeds input {height}x{width}")]
    TargetTooLarge { side: usize, height: usize, width: usize },
}

/// Input region `[start, end)` feeding output cell `i` of an axis pooled
/// from `in_dim` to `out_dim`: `start = floor(i*in/out)`,
/// `end = ceil((i+1)*in/out)`. The regions cover `[0, in_dim)` and may
/// overlap.
pub fn region_bounds(in_dim: usize, out_dim: usize, i: usize) -> Result<(usize, usize), PoolError> {
    if out_dim < 1 || out_dim > in_dim {
        return Err(PoolError::Upsample { in_dim, out_dim });
    }
    if i >= out_dim {
        return Err(PoolError::IndexOutOfRange { i, out_dim });
    }
    let start = i * in_dim / out_dim;
    let end = ((i + 1) * in_dim).div_ceil(out_dim);
    debug_assert!(start < end && end <= in_dim);
    Ok((start, end))
}

/// Pools a grid down to `out_h` × `out_w`, preserving `dim`. Each output
/// cell is the arithmetic mean of its input region per channel. Computed
/// as two separable passes (columns then rows), which is algebraically
/// identical to the per-cell 2D mean because regions are axis-aligned
/// products with uniform weights.
pub fn adaptive_avg_pool(g: &PatchGrid, out_h: usize, out_w: usize) -> Result<PatchGrid, PoolError> {
    if out_h < 1 || out_h > g.height {
        return Err(PoolError::Upsample { in_dim: g.height, out_dim: out_h });
    }
    if out_w < 1 || out_w > g.width {
        return Err(PoolError::Upsample { in_dim: g.width, out_dim: out_w });
    }

    // pass 1: pool columns, producing height x out_w x dim
    let mut cols = vec![0.0f64; g.height * out_w * g.dim];
    for r in 0..g.height {
        for j in 0..out_w {
            let (c0, c1) = region_bounds(g.width, out_w, j)?;
            let inv = 1.0 / (c1 - c0) as f64;
            for d in 0..g.dim {
                let mut acc = 0.0f64;
                for c in c0..c1 {
                    acc += g.get(r, c, d);
                }
                cols[(r * out_w + j) * g.dim + d] = acc * inv;
            }
        }
    }

    // pass 2: pool rows, producing out_h x out_w x dim
    let mut out = vec![0.0f64; out_h * out_w * g.dim];
    for i in 0..out_h {
        let (r0, r1) = region_bounds(g.height, out_h, i)?;
        let inv = 1.0 / (r1 - r0) as f64;
        for j in 0..out_w {
            for d in 0..g.dim {
                let mut acc = 0.0f64;
                for r in r0..r1 {
                    acc += cols[(r * out_w + j) * g.dim + d];
                }
                out[(i * out_w + j) * g.dim + d] = acc * inv;
            }
        }
    }

    PatchGrid::new(out_h, out_w, g.dim, out)
}

/// Pools a grid to a square layout holding exactly `target_tokens` cells.
/// The target must be a perfect square no larger than the input grid;
/// a target equal to the input token count returns the grid unchanged.
pub fn project_tokens(g: &PatchGrid, target_tokens: usize) -> Result<PatchGrid, PoolError> {
    let side = (target_tokens as f64).sqrt().round() as usize;
    if side * side != target_tokens || side == 0 {
        return Err(PoolError::NonSquareTarget(target_tokens));
    }
    if side > g.height || side > g.width {
        return Err(PoolError::TargetTooLarge { side, height: g.height, width: g.width });
    }
    adaptive_avg_pool(g, side, side)
}
