//! Differentiable operators.
//!
//! Each operator validates shapes eagerly, computes its forward value, and —
//! when any input requires gradient — records a backward closure. Backward
//! closures only ever *accumulate* into parent gradients, so an input used
//! several times receives the sum of all path contributions.
//!
//! Masking convention: `-inf` entries are legal inputs to [`Tensor::softmax`]
//! and map to exactly zero probability with exactly zero gradient. A row (or
//! column) that is entirely `-inf` has no well-defined distribution and is
//! rejected.


use crate::error::TensorError;
use crate::tensor::{OpCtx, Tensor};

/// Indices of the `k` largest entries, ties broken toward the lower index.
/// The result is ordered by descending value (then ascending index).
pub fn topk_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| match values[j].partial_cmp(&values[i]) {
        Some(o) => o.then(i.cmp(&j)),
        None => i.cmp(&j),
    });
    idx.truncate(k);
    idx
}

fn ew2(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: fn(f64, f64) -> f64,
    dfa: fn(f64, f64) -> f64,
    dfb: fn(f64, f64) -> f64,
) -> Result<Tensor, TensorError> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let same = ar == br && ac == bc;
    if !(same || a.len() == 1 || b.len() == 1) {
        return Err(TensorError::ShapeMismatch {
            op,
            left_rows: ar,
            left_cols: ac,
            right_rows: br,
            right_cols: bc,
        });
    }
    let (rows, cols) = if a.len() == 1 && !same { (br, bc) } else { (ar, ac) };
    let av = a.values();
    let bv = b.values();
    let an = av.len();
    let bn = bv.len();
    let n = rows * cols;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(f(av[if an == 1 { 0 } else { i }], bv[if bn == 1 { 0 } else { i }]));
    }
    drop(av);
    drop(bv);
    let backward = move |ctx: &OpCtx<'_>| {
        let (pa, pb) = (&ctx.parents[0], &ctx.parents[1]);
        let av = pa.values();
        let bv = pb.values();
        let g = ctx.out_grad;
        pa.accum_grad(|ga| {
            for (i, gi) in g.iter().enumerate() {
                let ia = if an == 1 { 0 } else { i };
                ga[ia] += dfa(av[ia], bv[if bn == 1 { 0 } else { i }]) * gi;
            }
        });
        pb.accum_grad(|gb| {
            for (i, gi) in g.iter().enumerate() {
                let ib = if bn == 1 { 0 } else { i };
                gb[ib] += dfb(av[if an == 1 { 0 } else { i }], bv[ib]) * gi;
            }
        });
    };
    Ok(Tensor::from_op(rows, cols, out, vec![a.clone(), b.clone()], backward))
}

fn unary(x: &Tensor, f: fn(f64) -> f64, df: fn(f64) -> f64) -> Tensor {
    let out = x.values().iter().copied().map(f).collect();
    let (rows, cols) = x.shape();
    let backward = move |ctx: &OpCtx<'_>| {
        let p = &ctx.parents[0];
        let xv = p.values();
        let g = ctx.out_grad;
        p.accum_grad(|gx| {
            for i in 0..g.len() {
                gx[i] += df(xv[i]) * g[i];
            }
        });
    };
    Tensor::from_op(rows, cols, out, vec![x.clone()], backward)
}

fn softplus_value(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    /// Elementwise sum; either side may be a 1x1 scalar broadcast.
    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        ew2(self, other, "add", |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        ew2(self, other, "sub", |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    /// Elementwise product; either side may be a 1x1 scalar broadcast.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        ew2(self, other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    /// Elementwise quotient; either side may be a 1x1 scalar broadcast.
    /// Division by zero propagates IEEE infinities, which the caller's
    /// non-finite loss guard will surface.
    pub fn div(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        ew2(
            self,
            other,
            "div",
            |a, b| a / b,
            |_, b| 1.0 / b,
            |a, b| -a / (b * b),
        )
    }

    /// `m x n` plus a `1 x n` row vector, broadcast down the rows.
    pub fn add_rowvec(&self, row: &Tensor) -> Result<Tensor, TensorError> {
        let (m, n) = self.shape();
        let (rr, rc) = row.shape();
        if rr != 1 || rc != n {
            return Err(TensorError::ShapeMismatch {
                op: "add_rowvec",
                left_rows: m,
                left_cols: n,
                right_rows: rr,
                right_cols: rc,
            });
        }
        let xv = self.values();
        let rv = row.values();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(xv[i * n + j] + rv[j]);
            }
        }
        drop(xv);
        drop(rv);
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gx| {
                for i in 0..g.len() {
                    gx[i] += g[i];
                }
            });
            ctx.parents[1].accum_grad(|gr| {
                for i in 0..m {
                    for j in 0..n {
                        gr[j] += g[i * n + j];
                    }
                }
            });
        };
        Ok(Tensor::from_op(m, n, out, vec![self.clone(), row.clone()], backward))
    }

    /// Multiply every entry by a compile-time constant.
    pub fn scale(&self, c: f64) -> Tensor {
        let out = self.values().iter().map(|v| v * c).collect();
        let (rows, cols) = self.shape();
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gx| {
                for i in 0..g.len() {
                    gx[i] += c * g[i];
                }
            });
        };
        Tensor::from_op(rows, cols, out, vec![self.clone()], backward)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn relu(&self) -> Tensor {
        unary(self, |x| x.max(0.0), |x| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Numerically stable `ln(1 + e^x)`; gradient is the logistic sigmoid.
    pub fn softplus(&self) -> Tensor {
        unary(self, softplus_value, sigmoid)
    }

    /// Matrix product `(m x k) . (k x n)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (m, ka) = self.shape();
        let (kb, n) = other.shape();
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left_rows: m,
                left_cols: ka,
                right_rows: kb,
                right_cols: n,
            });
        }
        let av = self.values();
        let bv = other.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * ka..(i + 1) * ka];
            let orow = &mut out[i * n..(i + 1) * n];
            for (l, &a_il) in arow.iter().enumerate() {
                let brow = &bv[l * n..(l + 1) * n];
                for j in 0..n {
                    orow[j] += a_il * brow[j];
                }
            }
        }
        drop(av);
        drop(bv);
        let backward = move |ctx: &OpCtx<'_>| {
            let (pa, pb) = (&ctx.parents[0], &ctx.parents[1]);
            let g = ctx.out_grad;
            {
                let bv = pb.values();
                pa.accum_grad(|ga| {
                    // dA = G . B^T
                    for i in 0..m {
                        for l in 0..ka {
                            let brow = &bv[l * n..(l + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grow[j] * brow[j];
                            }
                            ga[i * ka + l] += s;
                        }
                    }
                });
            }
            {
                let av = pa.values();
                pb.accum_grad(|gb| {
                    // dB = A^T . G
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for l in 0..ka {
                            let a_il = av[i * ka + l];
                            if a_il == 0.0 {
                                continue;
                            }
                            let gbrow = &mut gb[l * n..(l + 1) * n];
                            for j in 0..n {
                                gbrow[j] += a_il * grow[j];
                            }
                        }
                    }
                });
            }
        };
        Ok(Tensor::from_op(m, n, out, vec![self.clone(), other.clone()], backward))
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = self.shape();
        let xv = self.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xv[i * n + j];
            }
        }
        drop(xv);
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gx| {
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] += g[j * m + i];
                    }
                }
            });
        };
        Tensor::from_op(n, m, out, vec![self.clone()], backward)
    }

    /// Softmax along `axis` (0 = down each column, 1 = across each row).
    /// `-inf` entries contribute exactly zero mass; an all-`-inf` slice is an
    /// error because the limit distribution is undefined.
    pub fn softmax(&self, axis: usize) -> Result<Tensor, TensorError> {
        match axis {
            1 => self.softmax_rows_reporting(1),
            0 => Ok(self.transpose().softmax_rows_reporting(0)?.transpose()),
            _ => Err(TensorError::contract(
                "softmax",
                format!("axis must be 0 or 1, got {axis}"),
            )),
        }
    }

    /// Softmax across each row; shorthand for `softmax(1)`.
    pub fn softmax_rows(&self) -> Result<Tensor, TensorError> {
        self.softmax(1)
    }

    fn softmax_rows_reporting(&self, reported_axis: usize) -> Result<Tensor, TensorError> {
        let (m, n) = self.shape();
        let xv = self.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mut max = f64::NEG_INFINITY;
            for &v in row {
                if v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(TensorError::DegenerateSoftmax {
                    axis: reported_axis,
                    index: i,
                });
            }
            let orow = &mut out[i * n..(i + 1) * n];
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                orow[j] = e;
                z += e;
            }
            for o in orow.iter_mut() {
                *o /= z;
            }
        }
        drop(xv);
        let backward = move |ctx: &OpCtx<'_>| {
            let y = ctx.out_values;
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gx| {
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let mut dot = 0.0;
                    for j in 0..n {
                        dot += gr[j] * yr[j];
                    }
                    let gxr = &mut gx[i * n..(i + 1) * n];
                    for j in 0..n {
                        gxr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            });
        };
        Ok(Tensor::from_op(m, n, out, vec![self.clone()], backward))
    }

    /// Keep the `k` largest entries of each row and set the rest to `-inf`,
    /// ties broken toward the lower index. Gradient passes straight through
    /// the kept entries and is zero elsewhere.
    pub fn topk_mask(&self, k: usize) -> Result<Tensor, TensorError> {
        let (m, n) = self.shape();
        if k == 0 || k > n {
            return Err(TensorError::contract(
                "topk_mask",
                format!("k must be in 1..={n}, got {k}"),
            ));
        }
        let xv = self.values();
        let mut out = vec![f64::NEG_INFINITY; m * n];
        let mut kept = vec![false; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            for &j in &topk_indices(row, k) {
                out[i * n + j] = row[j];
                kept[i * n + j] = true;
            }
        }
        drop(xv);
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gx| {
                for i in 0..g.len() {
                    if kept[i] {
                        gx[i] += g[i];
                    }
                }
            });
        };
        Ok(Tensor::from_op(m, n, out, vec![self.clone()], backward))
    }

    /// Row-wise layer normalization with learnable gain and bias (`1 x n`).
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor, TensorError> {
        let (m, n) = self.shape();
        if n == 0 {
            return Err(TensorError::contract("layer_norm", "zero-width input"));
        }
        if eps <= 0.0 {
            return Err(TensorError::contract(
                "layer_norm",
                format!("eps must be positive, got {eps}"),
            ));
        }
        for (t, name) in [(gain, "gain"), (bias, "bias")] {
            let (r, c) = t.shape();
            if r != 1 || c != n {
                return Err(TensorError::contract(
                    "layer_norm",
                    format!("{name} must be 1x{n}, got {r}x{c}"),
                ));
            }
        }
        let xv = self.values();
        let gv = gain.values();
        let bv = bias.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let sd = (var + eps).sqrt();
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = gv[j] * (row[j] - mu) / sd + bv[j];
            }
        }
        drop(xv);
        drop(gv);
        drop(bv);
        let backward = move |ctx: &OpCtx<'_>| {
            let (px, pg, pb) = (&ctx.parents[0], &ctx.parents[1], &ctx.parents[2]);
            let xv = px.values();
            let gv = pg.values();
            let g = ctx.out_grad;
            let nf = n as f64;
            // Per row: xhat, then the three downstream gradients.
            let mut xhat = vec![0.0; n];
            for i in 0..m {
                let row = &xv[i * n..(i + 1) * n];
                let grow = &g[i * n..(i + 1) * n];
                let mu = row.iter().sum::<f64>() / nf;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / nf;
                let sd = (var + eps).sqrt();
                for j in 0..n {
                    xhat[j] = (row[j] - mu) / sd;
                }
                pg.accum_grad(|gg| {
                    for j in 0..n {
                        gg[j] += grow[j] * xhat[j];
                    }
                });
                pb.accum_grad(|gb| {
                    for j in 0..n {
                        gb[j] += grow[j];
                    }
                });
                let mut mean_gy = 0.0;
                let mut mean_gy_xhat = 0.0;
                for j in 0..n {
                    let gy = grow[j] * gv[j];
                    mean_gy += gy;
                    mean_gy_xhat += gy * xhat[j];
                }
                mean_gy /= nf;
                mean_gy_xhat /= nf;
                px.accum_grad(|gx| {
                    let gxr = &mut gx[i * n..(i + 1) * n];
                    for j in 0..n {
                        let gy = grow[j] * gv[j];
                        gxr[j] += (gy - mean_gy - xhat[j] * mean_gy_xhat) / sd;
                    }
                });
            }
        };
        Ok(Tensor::from_op(
            m,
            n,
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            backward,
        ))
    }

    /// Gather rows of an embedding table; gradients scatter-add back into the
    /// gathered rows, so a token appearing twice contributes twice.
    pub fn embedding(table: &Tensor, ids: &[usize]) -> Result<Tensor, TensorError> {
        let (v, d) = table.shape();
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange {
                    what: "embedding table",
                    index: id,
                    size: v,
                });
            }
        }
        let tv = table.values();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        drop(tv);
        let ids_owned: Vec<usize> = ids.to_vec();
        let rows = ids_owned.len();
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gt| {
                for (t, &id) in ids_owned.iter().enumerate() {
                    let grow = &g[t * d..(t + 1) * d];
                    let trow = &mut gt[id * d..(id + 1) * d];
                    for j in 0..d {
                        trow[j] += grow[j];
                    }
                }
            });
        };
        Ok(Tensor::from_op(rows, d, out, vec![table.clone()], backward))
    }

    /// Stack tensors vertically; all parts must share a column count.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::contract("concat_rows", "no tensors given"));
        }
        let cols = parts[0].cols();
        let mut rows = 0;
        for p in parts {
            if p.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left_rows: parts[0].rows(),
                    left_cols: cols,
                    right_rows: p.rows(),
                    right_cols: p.cols(),
                });
            }
            rows += p.rows();
        }
        let mut out = Vec::with_capacity(rows * cols);
        for p in parts {
            out.extend_from_slice(&p.values());
        }
        let part_rows: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            let mut off = 0;
            for (p, &pr) in ctx.parents.iter().zip(&part_rows) {
                let chunk = &g[off * cols..(off + pr) * cols];
                p.accum_grad(|gp| {
                    for (dst, src) in gp.iter_mut().zip(chunk) {
                        *dst += src;
                    }
                });
                off += pr;
            }
        };
        Ok(Tensor::from_op(rows, cols, out, parts.to_vec(), backward))
    }

    /// Stack tensors horizontally; all parts must share a row count.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::contract("concat_cols", "no tensors given"));
        }
        let rows = parts[0].rows();
        let mut cols = 0;
        for p in parts {
            if p.rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left_rows: rows,
                    left_cols: parts[0].cols(),
                    right_rows: p.rows(),
                    right_cols: p.cols(),
                });
            }
            cols += p.cols();
        }
        let mut out = vec![0.0; rows * cols];
        let mut off = 0;
        for p in parts {
            let pv = p.values();
            let pc = p.cols();
            for i in 0..rows {
                out[i * cols + off..i * cols + off + pc].copy_from_slice(&pv[i * pc..(i + 1) * pc]);
            }
            off += pc;
        }
        let part_cols: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            let mut off = 0;
            for (p, &pc) in ctx.parents.iter().zip(&part_cols) {
                p.accum_grad(|gp| {
                    for i in 0..rows {
                        for j in 0..pc {
                            gp[i * pc + j] += g[i * cols + off + j];
                        }
                    }
                });
                off += pc;
            }
        };
        Ok(Tensor::from_op(rows, cols, out, parts.to_vec(), backward))
    }

    /// Rows `start..start + len` as a new tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor, TensorError> {
        let (m, n) = self.shape();
        if start + len > m {
            return Err(TensorError::contract(
                "slice_rows",
                format!("rows {start}..{} out of range for {m}x{n}", start + len),
            ));
        }
        let out = self.values()[start * n..(start + len) * n].to_vec();
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gx| {
                for (dst, src) in gx[start * n..(start + len) * n].iter_mut().zip(g) {
                    *dst += src;
                }
            });
        };
        Ok(Tensor::from_op(len, n, out, vec![self.clone()], backward))
    }

    /// Columns `start..start + len` as a new tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor, TensorError> {
        let (m, n) = self.shape();
        if start + len > n {
            return Err(TensorError::contract(
                "slice_cols",
                format!("cols {start}..{} out of range for {m}x{n}", start + len),
            ));
        }
        let xv = self.values();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&xv[i * n + start..i * n + start + len]);
        }
        drop(xv);
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            ctx.parents[0].accum_grad(|gx| {
                for i in 0..m {
                    for j in 0..len {
                        gx[i * n + start + j] += g[i * len + j];
                    }
                }
            });
        };
        Ok(Tensor::from_op(m, len, out, vec![self.clone()], backward))
    }

    /// Sum of every entry as a 1x1 tensor.
    pub fn sum(&self) -> Tensor {
        let total = self.values().iter().sum();
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad[0];
            ctx.parents[0].accum_grad(|gx| {
                for v in gx.iter_mut() {
                    *v += g;
                }
            });
        };
        Tensor::from_op(1, 1, vec![total], vec![self.clone()], backward)
    }

    /// Mean of every entry as a 1x1 tensor; empty tensors have no mean.
    pub fn mean(&self) -> Result<Tensor, TensorError> {
        let n = self.len();
        if n == 0 {
            return Err(TensorError::contract("mean", "empty tensor"));
        }
        Ok(self.sum().scale(1.0 / n as f64))
    }

    /// Elementwise sum of many same-shaped tensors in one graph node. Prefer
    /// this over a fold of `add` calls when accumulating long lists: it keeps
    /// the graph shallow.
    pub fn add_n(parts: &[Tensor]) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::contract("add_n", "no tensors given"));
        }
        let (rows, cols) = parts[0].shape();
        for p in parts {
            if p.shape() != (rows, cols) {
                return Err(TensorError::ShapeMismatch {
                    op: "add_n",
                    left_rows: rows,
                    left_cols: cols,
                    right_rows: p.rows(),
                    right_cols: p.cols(),
                });
            }
        }
        let mut out = vec![0.0; rows * cols];
        for p in parts {
            for (o, v) in out.iter_mut().zip(p.values().iter()) {
                *o += v;
            }
        }
        let backward = move |ctx: &OpCtx<'_>| {
            let g = ctx.out_grad;
            for p in ctx.parents {
                p.accum_grad(|gp| {
                    for (dst, src) in gp.iter_mut().zip(g) {
                        *dst += src;
                    }
                });
            }
        };
        Ok(Tensor::from_op(rows, cols, out, parts.to_vec(), backward))
    }

    /// Cross entropy of a `1 x C` logit row against a class index, with the
    /// softmax folded inside for stability: `-log softmax(logits)[class]`.
    pub fn cross_entropy(&self, class: usize) -> Result<Tensor, TensorError> {
        let (m, c) = self.shape();
        if m != 1 || c == 0 {
            return Err(TensorError::contract(
                "cross_entropy",
                format!("expected a 1xC logit row with C >= 1, got {m}x{c}"),
            ));
        }
        if class >= c {
            return Err(TensorError::IndexOutOfRange {
                what: "class",
                index: class,
                size: c,
            });
        }
        let xv = self.values();
        let max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + xv.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - xv[class];
        drop(xv);
        let backward = move |ctx: &OpCtx<'_>| {
            let p = &ctx.parents[0];
            let g = ctx.out_grad[0];
            let xv = p.values();
            let max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = xv.iter().map(|v| (v - max).exp()).sum();
            let probs: Vec<f64> = xv.iter().map(|v| (v - max).exp() / z).collect();
            drop(xv);
            p.accum_grad(|gx| {
                for j in 0..c {
                    let ind = if j == class { 1.0 } else { 0.0 };
                    gx[j] += g * (probs[j] - ind);
                }
            });
        };
        Ok(Tensor::from_op(1, 1, vec![loss], vec![self.clone()], backward))
    }
}
