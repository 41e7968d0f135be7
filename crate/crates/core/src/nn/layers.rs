//! Equivariant layer families on multivector tensors `[tokens, channels, 16]`.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::ga::{Multivector, Versor};

pub const LAYER_NORM_EPS: f64 = 1e-8;

/// `Σ_k w_k⟨x⟩_k + Σ_k v_k e0⟨x⟩_k` per output channel.
pub fn equi_linear(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    tape.equi_linear(x, w)
}

/// Channel-wise `concat(x y, z_0123 · join(x, y))`, where `z_ref` holds one
/// reference multivector per token.
pub fn geometric_bilinear(tape: &mut Tape, x: Var, y: Var, z_ref: Var) -> Result<Var> {
    let gp = tape.geometric_product(x, y)?;
    let join = tape.join(x, y)?;
    let scaled = tape.pseudoscalar_scale(join, z_ref)?;
    tape.concat_channels(gp, scaled)
}

pub fn equi_attention(tape: &mut Tape, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    tape.attention(q, k, v, heads)
}

pub fn gated_gelu(tape: &mut Tape, x: Var) -> Result<Var> {
    tape.gated_gelu(x)
}

pub fn equi_layernorm(tape: &mut Tape, x: Var) -> Result<Var> {
    tape.equi_layer_norm(x, LAYER_NORM_EPS)
}

/// Applies a versor to every multivector of a `[.., 16]` tensor.
pub fn act_on_tensor(u: &Versor, t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for chunk in out.data_mut().chunks_mut(16) {
        let m = Multivector(chunk.try_into().expect("16 coefficients"));
        chunk.copy_from_slice(&u.apply(&m).0);
    }
    out
}

/// `max |a − b| / max(1, max |a|, max |b|)`.
pub fn relative_residual(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(1.0, f64::max);
    diff / scale
}

fn random_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// Worst `f(u[x]) − u[f(x)]` residual of each layer family over the given
/// versors, with fresh random weights and inputs per versor.
pub fn layer_residuals<R: Rng + ?Sized>(versors: &[Versor], rng: &mut R) -> Result<Vec<(&'static str, f64)>> {
    type Layer = fn(&mut Tape, &[Var]) -> Result<Var>;
    let layers: [(&'static str, Vec<Vec<usize>>, usize, Layer); 5] = [
        ("equi_linear", vec![vec![5, 3, 16]], 1, |t, v| {
            let w = v[1];
            equi_linear(t, v[0], w)
        }),
        ("geometric_bilinear", vec![vec![4, 3, 16], vec![4, 3, 16]], 0, |t, v| {
            let z = t.mean_channels(v[0])?;
            geometric_bilinear(t, v[0], v[1], z)
        }),
        ("equi_attention", vec![vec![3, 4, 16], vec![6, 4, 16], vec![6, 4, 16]], 0, |t, v| equi_attention(t, v[0], v[1], v[2], 2)),
        ("equi_layernorm", vec![vec![4, 3, 16]], 0, |t, v| equi_layernorm(t, v[0])),
        ("gated_gelu", vec![vec![4, 3, 16]], 0, |t, v| gated_gelu(t, v[0])),
    ];
    let mut out = Vec::with_capacity(layers.len());
    for (name, shapes, weights, f) in layers {
        let mut worst: f64 = 0.0;
        for u in versors {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(rng, s)).collect();
            let params: Vec<Tensor> = (0..weights).map(|_| random_tensor(rng, &[4, 3, 9])).collect();
            let run = |xs: &[Tensor]| -> Result<Tensor> {
                let mut tape = Tape::new();
                let mut vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
                vars.extend(params.iter().map(|w| tape.constant(w.clone())));
                let y = f(&mut tape, &vars)?;
                Ok(tape.value(y).clone())
            };
            let moved: Vec<Tensor> = inputs.iter().map(|x| act_on_tensor(u, x)).collect();
            let lhs = run(&moved)?;
            let rhs = act_on_tensor(u, &run(&inputs)?);
            worst = worst.max(relative_residual(lhs.data(), rhs.data()));
        }
        out.push((name, worst));
    }
    Ok(out)
}
