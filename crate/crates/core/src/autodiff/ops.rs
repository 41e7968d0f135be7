//! The closed vocabulary of differentiable primitives.
//!
//! Multivector tensors are shaped `[tokens, channels, 16]`; plain scalar
//! channels are `[tokens, width]`.

use statrs::function::erf::erf;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::ga::tables::{ProductTable, E012, E013, E023, E123, GEOMETRIC, GRADE, INDEX_OF_MASK, BLADE_MASKS, JOIN, NON_DEGENERATE};

const MV: usize = 16;

/// For blades without `e0`, the slot of `e0 ∧ blade`; otherwise `usize::MAX`.
const E0_TARGET: [usize; 16] = {
    let mut out = [usize::MAX; 16];
    let mut i = 0;
    while i < 16 {
        let m = BLADE_MASKS[i];
        if m & 1 == 0 {
            out[i] = INDEX_OF_MASK[(m | 1) as usize];
        }
        i += 1;
    }
    out
};

fn mismatch(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}

fn mv_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [n, c, 16] => Ok((*n, *c)),
        s => Err(mismatch(op, format!("expected [tokens, channels, 16], got {s:?}"))),
    }
}

fn mat_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [n, c] => Ok((*n, *c)),
        s => Err(mismatch(op, format!("expected [rows, cols], got {s:?}"))),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn table_forward(table: &ProductTable, x: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * MV];
    for k in 0..n {
        let s = k * MV;
        table.apply_into(&x[s..s + MV], &y[s..s + MV], &mut out[s..s + MV]);
    }
    out
}

fn table_backward(table: &ProductTable, x: &[f64], y: &[f64], g: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; n * MV];
    let mut gy = vec![0.0; n * MV];
    for k in 0..n {
        let s = k * MV;
        for (i, row) in table.entries.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if e.sign == 0 {
                    continue;
                }
                let go = f64::from(e.sign) * g[s + e.blade as usize];
                gx[s + i] += go * y[s + j];
                gy[s + j] += go * x[s + i];
            }
        }
    }
    (gx, gy)
}

impl Tape {
    fn bilinear_table(&mut self, op: &'static str, table: &'static ProductTable, x: Var, y: Var) -> Result<Var> {
        let (xv, yv) = (self.value(x), self.value(y));
        mv_dims(op, xv)?;
        same_shape(op, xv, yv)?;
        let n = xv.len() / MV;
        let out = Tensor::new(xv.shape().to_vec(), table_forward(table, xv.data(), yv.data(), n))?;
        Ok(self.record(
            op,
            &[x, y],
            out,
            Box::new(move |g, ins, _| {
                let (gx, gy) = table_backward(table, ins[0].data(), ins[1].data(), g.data(), n);
                let shape = ins[0].shape().to_vec();
                vec![Tensor::new(shape.clone(), gx).unwrap(), Tensor::new(shape, gy).unwrap()]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("add", av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.record("add", &[a, b], out, Box::new(|g, _, _| vec![g.clone(), g.clone()])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("sub", av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.record("sub", &[a, b], out, Box::new(|g, _, _| vec![g.clone(), g.map(|v| -v)])))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("mul", av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.record(
            "mul",
            &[a, b],
            out,
            Box::new(|g, ins, _| {
                let shape = g.shape().to_vec();
                let ga = g.data().iter().zip(ins[1].data()).map(|(g, y)| g * y).collect();
                let gb = g.data().iter().zip(ins[0].data()).map(|(g, x)| g * x).collect();
                vec![Tensor::new(shape.clone(), ga).unwrap(), Tensor::new(shape, gb).unwrap()]
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * c);
        Ok(self.record("scale", &[a], out, Box::new(move |g, _, _| vec![g.map(|v| v * c)])))
    }

    /// Sum of all entries, shaped `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        Ok(self.record(
            "sum",
            &[a],
            out,
            Box::new(|g, ins, _| vec![Tensor::full(ins[0].shape().to_vec(), g.item())]),
        ))
    }

    /// Channel-wise geometric product of two `[T, C, 16]` tensors.
    pub fn geometric_product(&mut self, x: Var, y: Var) -> Result<Var> {
        self.bilinear_table("geometric_product", &GEOMETRIC, x, y)
    }

    /// Channel-wise join `dual(dual(x) ∧ dual(y))`.
    pub fn join(&mut self, x: Var, y: Var) -> Result<Var> {
        self.bilinear_table("join", &JOIN, x, y)
    }

    /// Scales every channel of `x` by the pseudoscalar coefficient of the
    /// token's single reference multivector `z: [T, 1, 16]`.
    pub fn pseudoscalar_scale(&mut self, x: Var, z: Var) -> Result<Var> {
        let (xv, zv) = (self.value(x), self.value(z));
        let (n, c) = mv_dims("pseudoscalar_scale", xv)?;
        let (nz, cz) = mv_dims("pseudoscalar_scale", zv)?;
        if nz != n || cz != 1 {
            return Err(mismatch("pseudoscalar_scale", format!("reference {:?} for input {:?}", zv.shape(), xv.shape())));
        }
        let mut data = xv.data().to_vec();
        for t in 0..n {
            let s = zv.data()[t * MV + 15];
            for v in &mut data[t * c * MV..(t + 1) * c * MV] {
                *v *= s;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.record(
            "pseudoscalar_scale",
            &[x, z],
            out,
            Box::new(move |g, ins, _| {
                let (xd, zd, gd) = (ins[0].data(), ins[1].data(), g.data());
                let mut gx = vec![0.0; xd.len()];
                let mut gz = vec![0.0; zd.len()];
                for t in 0..n {
                    let s = zd[t * MV + 15];
                    let r = t * c * MV..(t + 1) * c * MV;
                    let mut acc = 0.0;
                    for i in r {
                        gx[i] = gd[i] * s;
                        acc += gd[i] * xd[i];
                    }
                    gz[t * MV + 15] = acc;
                }
                vec![Tensor::new(ins[0].shape().to_vec(), gx).unwrap(), Tensor::new(ins[1].shape().to_vec(), gz).unwrap()]
            }),
        ))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, ca) = mv_dims("concat_channels", av)?;
        let (nb, cb) = mv_dims("concat_channels", bv)?;
        if n != nb {
            return Err(mismatch("concat_channels", format!("{n} vs {nb} tokens")));
        }
        let mut data = Vec::with_capacity(n * (ca + cb) * MV);
        for t in 0..n {
            data.extend_from_slice(&av.data()[t * ca * MV..(t + 1) * ca * MV]);
            data.extend_from_slice(&bv.data()[t * cb * MV..(t + 1) * cb * MV]);
        }
        let out = Tensor::new(vec![n, ca + cb, MV], data)?;
        Ok(self.record(
            "concat_channels",
            &[a, b],
            out,
            Box::new(move |g, _, _| {
                let gd = g.data();
                let mut ga = Vec::with_capacity(n * ca * MV);
                let mut gb = Vec::with_capacity(n * cb * MV);
                for t in 0..n {
                    let s = t * (ca + cb) * MV;
                    ga.extend_from_slice(&gd[s..s + ca * MV]);
                    gb.extend_from_slice(&gd[s + ca * MV..s + (ca + cb) * MV]);
                }
                vec![Tensor::new(vec![n, ca, MV], ga).unwrap(), Tensor::new(vec![n, cb, MV], gb).unwrap()]
            }),
        ))
    }

    /// `out[t,o] = Σ_i Σ_k w[o,i,k]⟨x[t,i]⟩_k + Σ_i Σ_{k<4} w[o,i,5+k] e0⟨x[t,i]⟩_k`
    /// with weights shaped `[C_out, C_in, 9]`.
    pub fn equi_linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, ci) = mv_dims("equi_linear", xv)?;
        let co = match wv.shape() {
            [o, i, 9] if *i == ci => *o,
            s => return Err(mismatch("equi_linear", format!("weights {s:?} for {ci} input channels"))),
        };
        let (xd, wd) = (xv.data(), wv.data());
        let mut out = vec![0.0; n * co * MV];
        for t in 0..n {
            for o in 0..co {
                let ob = (t * co + o) * MV;
                for i in 0..ci {
                    let xb = (t * ci + i) * MV;
                    let wb = (o * ci + i) * 9;
                    for b in 0..MV {
                        let xval = xd[xb + b];
                        if xval == 0.0 {
                            continue;
                        }
                        let g = GRADE[b];
                        out[ob + b] += wd[wb + g] * xval;
                        let tgt = E0_TARGET[b];
                        if tgt != usize::MAX {
                            out[ob + tgt] += wd[wb + 5 + g] * xval;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![n, co, MV], out)?;
        Ok(self.record(
            "equi_linear",
            &[x, w],
            out,
            Box::new(move |g, ins, _| {
                let (xd, wd, gd) = (ins[0].data(), ins[1].data(), g.data());
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                for t in 0..n {
                    for o in 0..co {
                        let ob = (t * co + o) * MV;
                        for i in 0..ci {
                            let xb = (t * ci + i) * MV;
                            let wb = (o * ci + i) * 9;
                            for b in 0..MV {
                                let gr = GRADE[b];
                                let mut acc = wd[wb + gr] * gd[ob + b];
                                gw[wb + gr] += xd[xb + b] * gd[ob + b];
                                let tgt = E0_TARGET[b];
                                if tgt != usize::MAX {
                                    acc += wd[wb + 5 + gr] * gd[ob + tgt];
                                    gw[wb + 5 + gr] += xd[xb + b] * gd[ob + tgt];
                                }
                                gx[xb + b] += acc;
                            }
                        }
                    }
                }
                vec![Tensor::new(ins[0].shape().to_vec(), gx).unwrap(), Tensor::new(ins[1].shape().to_vec(), gw).unwrap()]
            }),
        ))
    }

    /// Affine map on scalar channels: `a [T,S] · wᵀ [S,O] + b [O]`.
    pub fn dense(&mut self, a: Var, w: Var, b: Var) -> Result<Var> {
        let (av, wv, bv) = (self.value(a), self.value(w), self.value(b));
        let (n, s) = mat_dims("dense", av)?;
        let (o, ws) = mat_dims("dense", wv)?;
        if ws != s || bv.shape() != [o] {
            return Err(mismatch("dense", format!("input {:?}, weight {:?}, bias {:?}", av.shape(), wv.shape(), bv.shape())));
        }
        let (ad, wd, bd) = (av.data(), wv.data(), bv.data());
        let mut out = vec![0.0; n * o];
        for t in 0..n {
            for j in 0..o {
                let mut acc = bd[j];
                for k in 0..s {
                    acc += wd[j * s + k] * ad[t * s + k];
                }
                out[t * o + j] = acc;
            }
        }
        let out = Tensor::new(vec![n, o], out)?;
        Ok(self.record(
            "dense",
            &[a, w, b],
            out,
            Box::new(move |g, ins, _| {
                let (ad, wd, gd) = (ins[0].data(), ins[1].data(), g.data());
                let mut ga = vec![0.0; ad.len()];
                let mut gw = vec![0.0; wd.len()];
                let mut gb = vec![0.0; o];
                for t in 0..n {
                    for j in 0..o {
                        let go = gd[t * o + j];
                        gb[j] += go;
                        for k in 0..s {
                            gw[j * s + k] += go * ad[t * s + k];
                            ga[t * s + k] += go * wd[j * s + k];
                        }
                    }
                }
                vec![
                    Tensor::new(vec![n, s], ga).unwrap(),
                    Tensor::new(vec![o, s], gw).unwrap(),
                    Tensor::new(vec![o], gb).unwrap(),
                ]
            }),
        ))
    }

    /// Adds `w [C,S] · a[t]` to the scalar component of each channel.
    pub fn scalar_inject(&mut self, x: Var, a: Var, w: Var) -> Result<Var> {
        let (xv, av, wv) = (self.value(x), self.value(a), self.value(w));
        let (n, c) = mv_dims("scalar_inject", xv)?;
        let (na, s) = mat_dims("scalar_inject", av)?;
        if na != n || wv.shape() != [c, s] {
            return Err(mismatch("scalar_inject", format!("x {:?}, aux {:?}, weight {:?}", xv.shape(), av.shape(), wv.shape())));
        }
        let mut data = xv.data().to_vec();
        let (ad, wd) = (av.data(), wv.data());
        for t in 0..n {
            for ch in 0..c {
                let mut acc = 0.0;
                for k in 0..s {
                    acc += wd[ch * s + k] * ad[t * s + k];
                }
                data[(t * c + ch) * MV] += acc;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.record(
            "scalar_inject",
            &[x, a, w],
            out,
            Box::new(move |g, ins, _| {
                let (ad, wd, gd) = (ins[1].data(), ins[2].data(), g.data());
                let mut ga = vec![0.0; ad.len()];
                let mut gw = vec![0.0; wd.len()];
                for t in 0..n {
                    for ch in 0..c {
                        let go = gd[(t * c + ch) * MV];
                        for k in 0..s {
                            gw[ch * s + k] += go * ad[t * s + k];
                            ga[t * s + k] += go * wd[ch * s + k];
                        }
                    }
                }
                vec![g.clone(), Tensor::new(vec![n, s], ga).unwrap(), Tensor::new(vec![c, s], gw).unwrap()]
            }),
        ))
    }

    /// Scales each multivector by GELU of its own scalar component.
    pub fn gated_gelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        mv_dims("gated_gelu", xv)?;
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(MV) {
            let gate = gelu(chunk[0]);
            for v in chunk.iter_mut() {
                *v *= gate;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.record(
            "gated_gelu",
            &[x],
            out,
            Box::new(|g, ins, _| {
                let xd = ins[0].data();
                let mut gx = vec![0.0; xd.len()];
                for ((gx, x), g) in gx.chunks_mut(MV).zip(xd.chunks(MV)).zip(g.data().chunks(MV)) {
                    let gate = gelu(x[0]);
                    let mut dot = 0.0;
                    for i in 0..MV {
                        gx[i] = gate * g[i];
                        dot += g[i] * x[i];
                    }
                    gx[0] += gelu_grad(x[0]) * dot;
                }
                vec![Tensor::new(ins[0].shape().to_vec(), gx).unwrap()]
            }),
        ))
    }

    /// Elementwise GELU on scalar channels.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(gelu);
        Ok(self.record(
            "gelu",
            &[a],
            out,
            Box::new(|g, ins, _| {
                let data = g.data().iter().zip(ins[0].data()).map(|(g, x)| g * gelu_grad(*x)).collect();
                vec![Tensor::new(g.shape().to_vec(), data).unwrap()]
            }),
        ))
    }

    /// `x / sqrt(E_c⟨x, x⟩ + eps)` per token.
    pub fn equi_layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = mv_dims("equi_layer_norm", xv)?;
        let xd = xv.data();
        let mut data = xd.to_vec();
        for t in 0..n {
            let r = t * c * MV..(t + 1) * c * MV;
            let norm = token_sq_norm(&xd[r.clone()]) / c as f64 + eps;
            let inv = 1.0 / norm.sqrt();
            for v in &mut data[r] {
                *v *= inv;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.record(
            "equi_layer_norm",
            &[x],
            out,
            Box::new(move |g, ins, _| {
                let (xd, gd) = (ins[0].data(), g.data());
                let mut gx = vec![0.0; xd.len()];
                for t in 0..n {
                    let r = t * c * MV..(t + 1) * c * MV;
                    let xs = &xd[r.clone()];
                    let gs = &gd[r.clone()];
                    let norm = token_sq_norm(xs) / c as f64 + eps;
                    let inv = 1.0 / norm.sqrt();
                    let dot: f64 = xs.iter().zip(gs).map(|(a, b)| a * b).sum();
                    let k = dot * inv * inv * inv / c as f64;
                    let out = &mut gx[r];
                    for ch in 0..c {
                        for b in 0..MV {
                            let i = ch * MV + b;
                            out[i] = inv * gs[i];
                        }
                        for &b in NON_DEGENERATE.iter() {
                            let i = ch * MV + b;
                            out[i] -= k * xs[i];
                        }
                    }
                }
                vec![Tensor::new(ins[0].shape().to_vec(), gx).unwrap()]
            }),
        ))
    }

    /// Multi-head dot-product attention on multivector channels with logits
    /// `Σ_c ⟨q, k⟩ / sqrt(8 n_c)` over each head's `n_c` channels.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (nq, c) = mv_dims("attention", qv)?;
        let (nk, ck) = mv_dims("attention", kv)?;
        let (nv, cv) = mv_dims("attention", vv)?;
        if nk != nv {
            return Err(mismatch("attention", format!("{nk} keys vs {nv} values")));
        }
        if ck != c || cv != c {
            return Err(mismatch("attention", format!("channels q {c}, k {ck}, v {cv}")));
        }
        if heads == 0 || c % heads != 0 {
            return Err(mismatch("attention", format!("{c} channels not divisible into {heads} heads")));
        }
        if nk == 0 {
            return Err(mismatch("attention", "no keys".into()));
        }
        let ch = c / heads;
        let scale = 1.0 / (8.0 * ch as f64).sqrt();
        let probs = attention_probs(qv.data(), kv.data(), nq, nk, c, heads, scale);
        let vd = vv.data();
        let mut out = vec![0.0; nq * c * MV];
        for h in 0..heads {
            for i in 0..nq {
                let prow = &probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                for (j, p) in prow.iter().enumerate() {
                    for cc in h * ch..(h + 1) * ch {
                        let ob = (i * c + cc) * MV;
                        let vb = (j * c + cc) * MV;
                        for b in 0..MV {
                            out[ob + b] += p * vd[vb + b];
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![nq, c, MV], out)?;
        Ok(self.record(
            "attention",
            &[q, k, v],
            out,
            Box::new(move |g, ins, _| {
                let (qd, kd, vd, gd) = (ins[0].data(), ins[1].data(), ins[2].data(), g.data());
                let probs = attention_probs(qd, kd, nq, nk, c, heads, scale);
                let mut gq = vec![0.0; qd.len()];
                let mut gk = vec![0.0; kd.len()];
                let mut gv = vec![0.0; vd.len()];
                let mut dp = vec![0.0; nk];
                for h in 0..heads {
                    for i in 0..nq {
                        let prow = &probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                        for j in 0..nk {
                            let mut acc = 0.0;
                            for cc in h * ch..(h + 1) * ch {
                                let ob = (i * c + cc) * MV;
                                let vb = (j * c + cc) * MV;
                                for b in 0..MV {
                                    acc += gd[ob + b] * vd[vb + b];
                                    gv[vb + b] += prow[j] * gd[ob + b];
                                }
                            }
                            dp[j] = acc;
                        }
                        let mean: f64 = prow.iter().zip(&dp).map(|(p, d)| p * d).sum();
                        for j in 0..nk {
                            let ds = prow[j] * (dp[j] - mean) * scale;
                            if ds == 0.0 {
                                continue;
                            }
                            for cc in h * ch..(h + 1) * ch {
                                let qb = (i * c + cc) * MV;
                                let kb = (j * c + cc) * MV;
                                for &b in NON_DEGENERATE.iter() {
                                    gq[qb + b] += ds * kd[kb + b];
                                    gk[kb + b] += ds * qd[qb + b];
                                }
                            }
                        }
                    }
                }
                vec![
                    Tensor::new(ins[0].shape().to_vec(), gq).unwrap(),
                    Tensor::new(ins[1].shape().to_vec(), gk).unwrap(),
                    Tensor::new(ins[2].shape().to_vec(), gv).unwrap(),
                ]
            }),
        ))
    }

    /// Per-channel token selection: `out[t', c] = x[index[t' * C + c], c]`.
    /// Indices are constants of the backward pass; gradients scatter back
    /// to the selected sources only.
    pub fn gather(&mut self, x: Var, index: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = mv_dims("gather", xv)?;
        if c == 0 || !index.len().is_multiple_of(c) || index.iter().any(|&i| i >= n) {
            return Err(mismatch("gather", format!("{} indices into {n} tokens x {c} channels", index.len())));
        }
        let m = index.len() / c;
        let xd = xv.data();
        let mut out = Vec::with_capacity(m * c * MV);
        for t in 0..m {
            for ch in 0..c {
                let src = (index[t * c + ch] * c + ch) * MV;
                out.extend_from_slice(&xd[src..src + MV]);
            }
        }
        let out = Tensor::new(vec![m, c, MV], out)?;
        Ok(self.record(
            "gather",
            &[x],
            out,
            Box::new(move |g, ins, _| {
                let gd = g.data();
                let mut gx = vec![0.0; ins[0].len()];
                for t in 0..m {
                    for ch in 0..c {
                        let src = (index[t * c + ch] * c + ch) * MV;
                        let dst = (t * c + ch) * MV;
                        for b in 0..MV {
                            gx[src + b] += gd[dst + b];
                        }
                    }
                }
                vec![Tensor::new(ins[0].shape().to_vec(), gx).unwrap()]
            }),
        ))
    }

    /// Mean over channels: `[T, C, 16] -> [T, 1, 16]`.
    pub fn mean_channels(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = mv_dims("mean_channels", xv)?;
        if c == 0 {
            return Err(mismatch("mean_channels", "no channels".into()));
        }
        let mut out = vec![0.0; n * MV];
        for t in 0..n {
            for ch in 0..c {
                for b in 0..MV {
                    out[t * MV + b] += xv.data()[(t * c + ch) * MV + b] / c as f64;
                }
            }
        }
        let out = Tensor::new(vec![n, 1, MV], out)?;
        Ok(self.record(
            "mean_channels",
            &[x],
            out,
            Box::new(move |g, ins, _| {
                let mut gx = vec![0.0; ins[0].len()];
                for t in 0..n {
                    for ch in 0..c {
                        for b in 0..MV {
                            gx[(t * c + ch) * MV + b] = g.data()[t * MV + b] / c as f64;
                        }
                    }
                }
                vec![Tensor::new(ins[0].shape().to_vec(), gx).unwrap()]
            }),
        ))
    }

    /// Reads each channel as a free vector relative to a reference point:
    /// `d = ideal(x) − (weight(x) / weight(ref)) · ideal(ref)`, giving
    /// `[T, 3C]`. `reference` is `[1, 1, 16]` (shared) or `[T, 1, 16]`.
    pub fn readout_directions(&mut self, x: Var, reference: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(reference));
        let (n, c) = mv_dims("readout_directions", xv)?;
        let (nr, cr) = mv_dims("readout_directions", rv)?;
        if cr != 1 || (nr != 1 && nr != n) {
            return Err(mismatch("readout_directions", format!("reference {:?} for input {:?}", rv.shape(), xv.shape())));
        }
        const SLOTS: [(usize, f64); 3] = [(E023, 1.0), (E013, -1.0), (E012, 1.0)];
        let (xd, rd) = (xv.data(), rv.data());
        if (0..nr).any(|t| rd[t * MV + E123].abs() < 1e-12) {
            return Err(Error::DegeneratePoint);
        }
        let mut out = vec![0.0; n * 3 * c];
        for t in 0..n {
            let rb = if nr == 1 { 0 } else { t * MV };
            let wr = rd[rb + E123];
            for ch in 0..c {
                let xb = (t * c + ch) * MV;
                let ratio = xd[xb + E123] / wr;
                for (k, (slot, sign)) in SLOTS.iter().enumerate() {
                    out[t * 3 * c + ch * 3 + k] = sign * (xd[xb + slot] - ratio * rd[rb + slot]);
                }
            }
        }
        let out = Tensor::new(vec![n, 3 * c], out)?;
        Ok(self.record(
            "readout_directions",
            &[x, reference],
            out,
            Box::new(move |g, ins, _| {
                let (xd, rd, gd) = (ins[0].data(), ins[1].data(), g.data());
                let mut gx = vec![0.0; xd.len()];
                let mut gr = vec![0.0; rd.len()];
                for t in 0..n {
                    let rb = if nr == 1 { 0 } else { t * MV };
                    let wr = rd[rb + E123];
                    for ch in 0..c {
                        let xb = (t * c + ch) * MV;
                        let w = xd[xb + E123];
                        for (k, (slot, sign)) in SLOTS.iter().enumerate() {
                            let go = sign * gd[t * 3 * c + ch * 3 + k];
                            gx[xb + slot] += go;
                            gx[xb + E123] -= go * rd[rb + slot] / wr;
                            gr[rb + slot] -= go * w / wr;
                            gr[rb + E123] += go * w * rd[rb + slot] / (wr * wr);
                        }
                    }
                }
                vec![Tensor::new(ins[0].shape().to_vec(), gx).unwrap(), Tensor::new(ins[1].shape().to_vec(), gr).unwrap()]
            }),
        ))
    }

    /// Column concatenation of two `[T, S]` tensors.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, sa) = mat_dims("concat_cols", av)?;
        let (nb, sb) = mat_dims("concat_cols", bv)?;
        if n != nb {
            return Err(mismatch("concat_cols", format!("{n} vs {nb} rows")));
        }
        let mut data = Vec::with_capacity(n * (sa + sb));
        for t in 0..n {
            data.extend_from_slice(&av.data()[t * sa..(t + 1) * sa]);
            data.extend_from_slice(&bv.data()[t * sb..(t + 1) * sb]);
        }
        let out = Tensor::new(vec![n, sa + sb], data)?;
        Ok(self.record(
            "concat_cols",
            &[a, b],
            out,
            Box::new(move |g, _, _| {
                let mut ga = Vec::with_capacity(n * sa);
                let mut gb = Vec::with_capacity(n * sb);
                for t in 0..n {
                    let row = &g.data()[t * (sa + sb)..(t + 1) * (sa + sb)];
                    ga.extend_from_slice(&row[..sa]);
                    gb.extend_from_slice(&row[sa..]);
                }
                vec![Tensor::new(vec![n, sa], ga).unwrap(), Tensor::new(vec![n, sb], gb).unwrap()]
            }),
        ))
    }

    /// `Σ (a − b)²`, shaped `[1]`.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.sum(sq)
    }
}

fn token_sq_norm(xs: &[f64]) -> f64 {
    xs.chunks(MV).map(|m| NON_DEGENERATE.iter().map(|&b| m[b] * m[b]).sum::<f64>()).sum()
}

/// Softmax attention weights laid out `[head, query, key]`.
fn attention_probs(qd: &[f64], kd: &[f64], nq: usize, nk: usize, c: usize, heads: usize, scale: f64) -> Vec<f64> {
    let ch = c / heads;
    let mut probs = vec![0.0; heads * nq * nk];
    for h in 0..heads {
        for i in 0..nq {
            let row = &mut probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
            for (j, r) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for cc in h * ch..(h + 1) * ch {
                    let qb = (i * c + cc) * MV;
                    let kb = (j * c + cc) * MV;
                    for &b in NON_DEGENERATE.iter() {
                        acc += qd[qb + b] * kd[kb + b];
                    }
                }
                *r = acc * scale;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                z += *r;
            }
            for r in row.iter_mut() {
                *r /= z;
            }
        }
    }
    probs
}
