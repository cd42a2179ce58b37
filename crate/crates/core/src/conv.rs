//! Zero-padded "same" convolution kernels shared by the 2-D and 3-D ops.
//!
//! Inputs are laid out `[B, C_in, D, H, W]` and kernels `[C_out, C_in, kd, kh, kw]`;
//! a 2-D convolution is the `D = kd = 1` case. Each batch item is lowered to
//! an im2col matrix and multiplied with the flattened kernel.

use rayon::prelude::*;

use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub dims: [usize; 3],
    pub kernel: [usize; 3],
}

impl ConvGeom {
    fn spatial(&self) -> usize {
        self.dims.iter().product()
    }

    fn patch(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }

    fn in_item(&self) -> usize {
        self.c_in * self.spatial()
    }

    fn out_item(&self) -> usize {
        self.c_out * self.spatial()
    }
}

/// Fills `cols` (`patch x spatial`, row-major) from a single batch item.
fn im2col<T: Real>(g: &ConvGeom, input: &[T], cols: &mut [T]) {
    let [d, h, w] = g.dims;
    let [kd, kh, kw] = g.kernel;
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let s = g.spatial();
    let mut row = 0;
    for ci in 0..g.c_in {
        let chan = &input[ci * s..(ci + 1) * s];
        for a in 0..kd {
            for b in 0..kh {
                for c in 0..kw {
                    let dst = &mut cols[row * s..(row + 1) * s];
                    row += 1;
                    for z in 0..d {
                        let zs = z as isize + a as isize - pd as isize;
                        for y in 0..h {
                            let ys = y as isize + b as isize - ph as isize;
                            let out = &mut dst[(z * h + y) * w..(z * h + y + 1) * w];
                            if zs < 0 || zs >= d as isize || ys < 0 || ys >= h as isize {
                                out.fill(T::zero());
                                continue;
                            }
                            let src = &chan[(zs as usize * h + ys as usize) * w..][..w];
                            let shift = c as isize - pw as isize;
                            for (x, o) in out.iter_mut().enumerate() {
                                let xs = x as isize + shift;
                                *o = if xs < 0 || xs >= w as isize {
                                    T::zero()
                                } else {
                                    src[xs as usize]
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back into a single batch item's input gradient.
fn col2im<T: Real>(g: &ConvGeom, cols: &[T], grad_in: &mut [T]) {
    let [d, h, w] = g.dims;
    let [kd, kh, kw] = g.kernel;
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let s = g.spatial();
    let mut row = 0;
    for ci in 0..g.c_in {
        let chan = &mut grad_in[ci * s..(ci + 1) * s];
        for a in 0..kd {
            for b in 0..kh {
                for c in 0..kw {
                    let src = &cols[row * s..(row + 1) * s];
                    row += 1;
                    for z in 0..d {
                        let zs = z as isize + a as isize - pd as isize;
                        if zs < 0 || zs >= d as isize {
                            continue;
                        }
                        for y in 0..h {
                            let ys = y as isize + b as isize - ph as isize;
                            if ys < 0 || ys >= h as isize {
                                continue;
                            }
                            let srow = &src[(z * h + y) * w..][..w];
                            let drow = &mut chan[(zs as usize * h + ys as usize) * w..][..w];
                            let shift = c as isize - pw as isize;
                            for (x, &v) in srow.iter().enumerate() {
                                let xs = x as isize + shift;
                                if xs >= 0 && xs < w as isize {
                                    drow[xs as usize] = drow[xs as usize] + v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Real>(g: &ConvGeom, input: &[T], kernel: &[T], bias: Option<&[T]>) -> Vec<T> {
    let s = g.spatial();
    let p = g.patch();
    let mut out = vec![T::zero(); g.batch * g.out_item()];
    out.par_chunks_mut(g.out_item())
        .zip(input.par_chunks(g.in_item()))
        .for_each(|(o, x)| {
            let mut cols = vec![T::zero(); p * s];
            im2col(g, x, &mut cols);
            if let Some(bias) = bias {
                for (co, &bv) in bias.iter().enumerate() {
                    o[co * s..(co + 1) * s].fill(bv);
                }
            }
            let beta = if bias.is_some() { T::one() } else { T::zero() };
            T::gemm(
                g.c_out, p, s, T::one(), kernel, p as isize, 1, &cols, s as isize, 1, beta, o,
                s as isize, 1,
            );
        });
    out
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn backward<T: Real>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    need_input: bool,
    need_kernel: bool,
    need_bias: bool,
) -> ConvGrads<T> {
    let s = g.spatial();
    let p = g.patch();
    let per_item: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = input
        .par_chunks(g.in_item())
        .zip(grad_out.par_chunks(g.out_item()))
        .map(|(x, go)| {
            let mut cols = vec![T::zero(); p * s];
            let dk = need_kernel.then(|| {
                im2col(g, x, &mut cols);
                let mut dk = vec![T::zero(); g.c_out * p];
                // dK = dOut (c_out x s) . cols^T (s x p)
                T::gemm(
                    g.c_out, s, p, T::one(), go, s as isize, 1, &cols, 1, s as isize, T::zero(),
                    &mut dk, p as isize, 1,
                );
                dk
            });
            let dx = need_input.then(|| {
                // dCols = K^T (p x c_out) . dOut (c_out x s)
                T::gemm(
                    p, g.c_out, s, T::one(), kernel, 1, p as isize, go, s as isize, 1, T::zero(),
                    &mut cols, s as isize, 1,
                );
                let mut dx = vec![T::zero(); g.in_item()];
                col2im(g, &cols, &mut dx);
                dx
            });
            (dx, dk)
        })
        .collect();

    let input_grad = need_input.then(|| {
        let mut gi = Vec::with_capacity(input.len());
        for (dx, _) in &per_item {
            gi.extend_from_slice(dx.as_ref().expect("input grad computed"));
        }
        gi
    });
    let kernel_grad = need_kernel.then(|| {
        let mut acc = vec![T::zero(); g.c_out * p];
        for (_, dk) in &per_item {
            for (a, &v) in acc.iter_mut().zip(dk.as_ref().expect("kernel grad computed")) {
                *a = *a + v;
            }
        }
        acc
    });
    let bias_grad = need_bias.then(|| {
        let mut acc = vec![T::zero(); g.c_out];
        for go in grad_out.chunks(g.out_item()) {
            for (co, a) in acc.iter_mut().enumerate() {
                *a = *a + go[co * s..(co + 1) * s].iter().copied().sum::<T>();
            }
        }
        acc
    });
    ConvGrads {
        input: input_grad,
        kernel: kernel_grad,
        bias: bias_grad,
    }
}
