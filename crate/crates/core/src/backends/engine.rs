//! Tiled implicit-GEMM executor shared by the CPU GEMM and CONV paths.
//!
//! Both operands are addressed as `data[base[i] + step[d]]`, where `i` is an
//! output row (or column) and `d` a reduction index. The loop nest follows the
//! tuning: a grid of block tiles with the reduction split `split_grid` ways,
//! per-block reduction slices merged at block end, `prefetch`-deep staging of
//! operand tiles and `split_thread` interleaved accumulators per thread.

use super::cpu::Element;

pub(crate) struct Operand<'a, T> {
    pub data: &'a [T],
    pub base: &'a [usize],
    pub step: &'a [usize],
}

impl<T: Element> Operand<'_, T> {
    #[inline]
    fn at(&self, i: usize, d: usize) -> T {
        self.data[self.base[i] + self.step[d]]
    }
}

/// Output addressed as `data[row[i] + col[j]]`.
pub(crate) struct OutputMap<'a> {
    pub row: &'a [usize],
    pub col: &'a [usize],
}

/// Block tiles list their members thread by thread: the first `thread_rows`
/// entries of a row tile belong to the first thread row, and so on. `None`
/// marks residue positions past the edge of the problem.
pub(crate) struct Plan {
    pub row_tiles: Vec<Vec<Option<usize>>>,
    pub col_tiles: Vec<Vec<Option<usize>>>,
    pub depth: usize,
    pub thread_rows: usize,
    pub thread_cols: usize,
    pub prefetch: usize,
    pub split_thread: usize,
    pub split_block: usize,
    pub split_grid: usize,
}

#[allow(clippy::needless_range_loop)]
pub(crate) fn execute<T: Element>(
    plan: &Plan,
    a: &Operand<'_, T>,
    b: &Operand<'_, T>,
    out: &mut [T],
    map: &OutputMap<'_>,
) {
    let Some(first_rows) = plan.row_tiles.first() else { return };
    let Some(first_cols) = plan.col_tiles.first() else { return };
    let block_rows = first_rows.len();
    let block_cols = first_cols.len();
    let (u, ks, kl, kg) = (plan.prefetch, plan.split_thread, plan.split_block, plan.split_grid);
    let tile = block_rows * block_cols;

    let mut partials: Vec<Vec<T>> = if kg > 1 { vec![vec![T::ZERO; out.len()]; kg] } else { Vec::new() };
    let mut acc = vec![T::ZERO; kl * ks * tile];
    let mut a_tile = vec![T::ZERO; kl * u * block_rows];
    let mut b_tile = vec![T::ZERO; kl * u * block_cols];

    let chunk = plan.depth.div_ceil(kg);
    let step = u * kl;

    for g in 0..kg {
        let lo = (g * chunk).min(plan.depth);
        let hi = ((g + 1) * chunk).min(plan.depth);
        for rows in &plan.row_tiles {
            for cols in &plan.col_tiles {
                acc.fill(T::ZERO);
                let mut start = lo;
                while start < hi {
                    stage(a, rows, start, hi, u, kl, &mut a_tile);
                    stage(b, cols, start, hi, u, kl, &mut b_tile);
                    for l in 0..kl {
                        let a_slice = &a_tile[l * u * block_rows..(l + 1) * u * block_rows];
                        let b_slice = &b_tile[l * u * block_cols..(l + 1) * u * block_cols];
                        let acc_slice = &mut acc[l * ks * tile..(l + 1) * ks * tile];
                        micro_kernels(plan, a_slice, b_slice, acc_slice, block_rows, block_cols);
                    }
                    start += step;
                }
                merge(&mut acc, ks, kl, tile);

                let target: &mut [T] = if kg > 1 { &mut partials[g] } else { &mut *out };
                for (x, row) in rows.iter().enumerate() {
                    let Some(row) = row else { continue };
                    for (y, col) in cols.iter().enumerate() {
                        let Some(col) = col else { continue };
                        target[map.row[*row] + map.col[*col]] = acc[x * block_cols + y];
                    }
                }
            }
        }
    }

    if kg > 1 {
        out.copy_from_slice(&partials[0]);
        for partial in &partials[1..] {
            for (o, p) in out.iter_mut().zip(partial) {
                *o += *p;
            }
        }
    }
}

/// Copies `split_block` slices of `prefetch` reduction steps into a
/// `[slice][step][member]` buffer, zero-filling residue and past-the-end steps.
fn stage<T: Element>(
    operand: &Operand<'_, T>,
    members: &[Option<usize>],
    start: usize,
    end: usize,
    u: usize,
    kl: usize,
    buf: &mut [T],
) {
    let width = members.len();
    for l in 0..kl {
        for kk in 0..u {
            let d = start + l * u + kk;
            let row = &mut buf[(l * u + kk) * width..(l * u + kk + 1) * width];
            if d >= end {
                row.fill(T::ZERO);
                continue;
            }
            for (slot, member) in row.iter_mut().zip(members) {
                *slot = match member {
                    Some(i) => operand.at(*i, d),
                    None => T::ZERO,
                };
            }
        }
    }
}

fn micro_kernels<T: Element>(plan: &Plan, a: &[T], b: &[T], acc: &mut [T], block_rows: usize, block_cols: usize) {
    let (tr, tc, ks) = (plan.thread_rows, plan.thread_cols, plan.split_thread);
    let tile = block_rows * block_cols;
    for thread_row in 0..block_rows / tr {
        for thread_col in 0..block_cols / tc {
            let r0 = thread_row * tr;
            let c0 = thread_col * tc;
            for kk in 0..plan.prefetch {
                let lane = &mut acc[(kk % ks) * tile..(kk % ks + 1) * tile];
                let a_row = &a[kk * block_rows + r0..kk * block_rows + r0 + tr];
                let b_row = &b[kk * block_cols + c0..kk * block_cols + c0 + tc];
                for (i, &av) in a_row.iter().enumerate() {
                    let dst = &mut lane[(r0 + i) * block_cols + c0..(r0 + i) * block_cols + c0 + tc];
                    for (d, &bv) in dst.iter_mut().zip(b_row) {
                        *d += av * bv;
                    }
                }
            }
        }
    }
}

/// Folds the interleaved thread accumulators, then the block slices by a
/// pairwise tree, leaving the block result in `acc[..tile]`.
fn merge<T: Element>(acc: &mut [T], ks: usize, kl: usize, tile: usize) {
    for l in 0..kl {
        let slice = &mut acc[l * ks * tile..(l + 1) * ks * tile];
        let (head, rest) = slice.split_at_mut(tile);
        for lane in rest.chunks_exact(tile) {
            for (h, v) in head.iter_mut().zip(lane) {
                *h += *v;
            }
        }
    }
    let stride_unit = ks * tile;
    let mut stride = 1;
    while stride < kl {
        let mut l = 0;
        while l + stride < kl {
            let (left, right) = acc.split_at_mut((l + stride) * stride_unit);
            let dst = &mut left[l * stride_unit..l * stride_unit + tile];
            for (d, v) in dst.iter_mut().zip(&right[..tile]) {
                *d += *v;
            }
            l += 2 * stride;
        }
        stride *= 2;
    }
}

/// Splits `0..extent` into consecutive tiles of `size`, padding the last one.
pub(crate) fn linear_tiles(extent: usize, size: usize) -> Vec<Vec<Option<usize>>> {
    (0..extent.div_ceil(size))
        .map(|t| (t * size..(t + 1) * size).map(|i| (i < extent).then_some(i)).collect())
        .collect()
}
