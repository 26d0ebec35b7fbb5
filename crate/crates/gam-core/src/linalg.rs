//! Fixed-order dense kernels for the affine layers.
//!
//! Plain scalar loops, contraction axis innermost and sequential. Unlike a
//! blocked/SIMD matmul (whose accumulation order and fma usage vary with
//! the target CPU), these produce bit-identical results on every IEEE-754
//! machine, which keeps seeded training trajectories portable.

/// `y[b, o] = sum_i x[b, i] * w[o, i] + bias[o]`
pub(crate) fn affine_xwt(
    x: &[f64],
    batch: usize,
    d_in: usize,
    w: &[f64],
    d_out: usize,
    bias: &[f64],
) -> Vec<f64> {
    debug_assert_eq!(x.len(), batch * d_in);
    debug_assert_eq!(w.len(), d_out * d_in);
    debug_assert_eq!(bias.len(), d_out);
    let mut y = vec![0.0; batch * d_out];
    for b in 0..batch {
        let xr = &x[b * d_in..(b + 1) * d_in];
        let yr = &mut y[b * d_out..(b + 1) * d_out];
        for o in 0..d_out {
            let wr = &w[o * d_in..(o + 1) * d_in];
            let mut acc = bias[o];
            for i in 0..d_in {
                acc += xr[i] * wr[i];
            }
            yr[o] = acc;
        }
    }
    y
}

/// `dx[b, i] = sum_o dy[b, o] * w[o, i]`
pub(crate) fn matmul_dy_w(
    dy: &[f64],
    batch: usize,
    d_out: usize,
    w: &[f64],
    d_in: usize,
) -> Vec<f64> {
    debug_assert_eq!(dy.len(), batch * d_out);
    debug_assert_eq!(w.len(), d_out * d_in);
    let mut dx = vec![0.0; batch * d_in];
    for b in 0..batch {
        let dyr = &dy[b * d_out..(b + 1) * d_out];
        let dxr = &mut dx[b * d_in..(b + 1) * d_in];
        for (o, &g) in dyr.iter().enumerate() {
            let wr = &w[o * d_in..(o + 1) * d_in];
            for i in 0..d_in {
                dxr[i] += g * wr[i];
            }
        }
    }
    dx
}

/// `dw[o, i] = sum_b dy[b, o] * x[b, i]`
pub(crate) fn matmul_dyt_x(
    dy: &[f64],
    batch: usize,
    d_out: usize,
    x: &[f64],
    d_in: usize,
) -> Vec<f64> {
    debug_assert_eq!(dy.len(), batch * d_out);
    debug_assert_eq!(x.len(), batch * d_in);
    let mut dw = vec![0.0; d_out * d_in];
    for b in 0..batch {
        let dyr = &dy[b * d_out..(b + 1) * d_out];
        let xr = &x[b * d_in..(b + 1) * d_in];
        for (o, &g) in dyr.iter().enumerate() {
            let wr = &mut dw[o * d_in..(o + 1) * d_in];
            for i in 0..d_in {
                wr[i] += g * xr[i];
            }
        }
    }
    dw
}
