use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};

/// Outcome of a central-difference gradient comparison.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with a small absolute floor so that exact zeros compare
/// cleanly: `|a − b| / max(|a|, |b|, 1e-5)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Compares the analytic gradient returned by `f` at `x` with central
/// differences of its value, coordinate by coordinate.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<GradCheck>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    if !(step > 0.0) {
        return Err(invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let (value, grad) = f(x)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("f(x) = {value}")));
    }
    if grad.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "grad_check",
            detail: format!("gradient {:?} vs input {:?}", grad.shape(), x.shape()),
        });
    }
    let mut report = GradCheck { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + step;
        let (fp, _) = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let (fm, _) = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("f at coordinate {i} ± {step}")));
        }
        let numeric = (fp - fm) / (2.0 * step);
        let analytic = grad.data()[i];
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error || i == 0 {
            report = GradCheck { max_rel_error: err, worst_index: i, analytic, numeric };
        }
    }
    Ok(report)
}

/// Gradient check for a function recorded on a fresh tape. `build` receives
/// the tape and the leaf holding `x` and must return a `[1]`-shaped output.
pub fn tape_grad_check<F>(build: F, x: &Tensor, step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check(
        |x| {
            let mut tape = Tape::new();
            let leaf = tape.leaf(x.clone());
            let out = build(&mut tape, leaf)?;
            let value = tape.value(out).item();
            let grads = tape.backward_from(out, &Tensor::scalar(1.0))?;
            Ok((value, grads.get_or_zeros(leaf, x.shape())))
        },
        x,
        step,
    )
}

type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// Worst relative error of `op` over `instances` random inputs, checking
/// each input in turn through a random linear projection of the output.
pub fn op_grad_error<R: Rng + ?Sized>(
    shapes: &[&[usize]],
    op: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>,
    instances: usize,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    let random = |rng: &mut R, shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inputs = shapes.iter().map(|s| random(rng, s)).collect::<Result<Vec<_>>>()?;
        let out_shape = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let out = op(&mut tape, &vars)?;
            tape.shape(out).to_vec()
        };
        let proj = random(rng, &out_shape)?;
        for i in 0..inputs.len() {
            let r = tape_grad_check(
                |tape, leaf| {
                    let vars: Vec<Var> = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, t)| if j == i { leaf } else { tape.constant(t.clone()) })
                        .collect();
                    let out = op(tape, &vars)?;
                    let w = tape.constant(proj.clone());
                    let prod = tape.mul(out, w)?;
                    tape.sum(prod)
                },
                &inputs[i],
                step,
            )?;
            worst = worst.max(r.max_rel_error);
        }
    }
    Ok(worst)
}

fn readout_shifted(n_ref: usize) -> OpFn {
    Box::new(move |t: &mut Tape, v: &[Var]| {
        // Keep the reference weight away from zero.
        let mut shift = Tensor::zeros(vec![n_ref, 1, 16]);
        for i in 0..n_ref {
            shift.data_mut()[i * 16 + crate::ga::tables::E123] = 1.5;
        }
        let shift = t.constant(shift);
        let r = t.add(v[1], shift)?;
        t.readout_directions(v[0], r)
    })
}

/// Every differentiable primitive with representative input shapes.
pub fn primitive_registry() -> Vec<(&'static str, Vec<Vec<usize>>, OpFn)> {
    fn op(f: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static) -> OpFn {
        Box::new(f)
    }
    let s = |v: &[&[usize]]| v.iter().map(|x| x.to_vec()).collect::<Vec<_>>();
    vec![
        ("add", s(&[&[3, 4], &[3, 4]]), op(|t, v| t.add(v[0], v[1]))),
        ("sub", s(&[&[3, 4], &[3, 4]]), op(|t, v| t.sub(v[0], v[1]))),
        ("mul", s(&[&[3, 4], &[3, 4]]), op(|t, v| t.mul(v[0], v[1]))),
        ("scale", s(&[&[5]]), op(|t, v| t.scale(v[0], -1.7))),
        ("sum", s(&[&[2, 3]]), op(|t, v| t.sum(v[0]))),
        ("gelu", s(&[&[4, 3]]), op(|t, v| t.gelu(v[0]))),
        ("squared_error", s(&[&[2, 3], &[2, 3]]), op(|t, v| t.squared_error(v[0], v[1]))),
        ("geometric_product", s(&[&[2, 3, 16], &[2, 3, 16]]), op(|t, v| t.geometric_product(v[0], v[1]))),
        ("join", s(&[&[2, 3, 16], &[2, 3, 16]]), op(|t, v| t.join(v[0], v[1]))),
        ("pseudoscalar_scale", s(&[&[2, 3, 16], &[2, 1, 16]]), op(|t, v| t.pseudoscalar_scale(v[0], v[1]))),
        ("equi_linear", s(&[&[3, 2, 16], &[4, 2, 9]]), op(|t, v| t.equi_linear(v[0], v[1]))),
        ("dense", s(&[&[3, 5], &[2, 5], &[2]]), op(|t, v| t.dense(v[0], v[1], v[2]))),
        ("scalar_inject", s(&[&[3, 2, 16], &[3, 4], &[2, 4]]), op(|t, v| t.scalar_inject(v[0], v[1], v[2]))),
        ("gated_gelu", s(&[&[3, 2, 16]]), op(|t, v| t.gated_gelu(v[0]))),
        ("equi_layer_norm", s(&[&[3, 4, 16]]), op(|t, v| t.equi_layer_norm(v[0], 1e-8))),
        ("attention", s(&[&[3, 4, 16], &[5, 4, 16], &[5, 4, 16]]), op(|t, v| t.attention(v[0], v[1], v[2], 2))),
        ("concat_channels", s(&[&[2, 1, 16], &[2, 3, 16]]), op(|t, v| t.concat_channels(v[0], v[1]))),
        ("concat_cols", s(&[&[2, 3], &[2, 1]]), op(|t, v| t.concat_cols(v[0], v[1]))),
        ("mean_channels", s(&[&[3, 4, 16]]), op(|t, v| t.mean_channels(v[0]))),
        ("gather", s(&[&[5, 2, 16]]), op(|t, v| t.gather(v[0], vec![4, 0, 4, 4, 1, 2]))),
        ("readout_directions", s(&[&[3, 2, 16], &[1, 1, 16]]), readout_shifted(1)),
        ("readout_directions_per_token", s(&[&[3, 2, 16], &[3, 1, 16]]), readout_shifted(3)),
    ]
}

/// Worst relative gradient error per registered primitive.
pub fn primitive_grad_errors<R: Rng + ?Sized>(instances: usize, step: f64, rng: &mut R) -> Result<Vec<(&'static str, f64)>> {
    primitive_registry()
        .into_iter()
        .map(|(name, shapes, op)| {
            let shapes: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
            Ok((name, op_grad_error(&shapes, &*op, instances, step, rng)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let w = [1.5, -2.0, 0.25];
        let r = grad_check(
            |x| {
                let v = x.data().iter().zip(&w).map(|(a, b)| a * b).sum();
                Ok((v, Tensor::new(vec![3], w.to_vec()).unwrap()))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn cubic_at_one() {
        let x = Tensor::scalar(1.0);
        let r = grad_check(|x| Ok((x.item().powi(3), Tensor::scalar(3.0 * x.item().powi(2)))), &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let x = Tensor::scalar(0.0);
        let r = grad_check(|x| Ok((1.0 / x.item(), Tensor::scalar(0.0))), &x, 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_bad_step() {
        let x = Tensor::scalar(0.0);
        assert!(grad_check(|x| Ok((x.item(), Tensor::scalar(1.0))), &x, 0.0).is_err());
    }
}
