//! Self-contained property suites with a pass/fail ledger.

use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::data::{normal_vec, physics_context, transform_object, ObjectData, Shape};
use super::eval::proportion_interval;
use super::formats::CloudRecord;
use super::sample::sample_cmd;
use super::train::init_model;
use crate::autodiff::primitive_grad_errors;
use crate::diffusion::{sample_cloud, training_loss_grad_check, NoiseStream, NoisedBatch};
use crate::error::Result;
use crate::ga::tables::{BLADE_NAMES, E0123, GEOMETRIC, WEDGE};
use crate::ga::{embed_point, random_unit_quaternion, Multivector, ProductTable, Versor};
use crate::nn::layers::{layer_residuals, relative_residual};
use crate::nn::Denoiser;
use crate::physics::success_eval;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteStatus {
    Pass,
    /// A designed failure observed as designed.
    ExpectedFailure,
    Fail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub status: SuiteStatus,
    pub detail: String,
    pub seconds: f64,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        let tag = match self.status {
            SuiteStatus::Pass => "PASS",
            SuiteStatus::ExpectedFailure => "PASS-BY-EXPECTED-FAILURE",
            SuiteStatus::Fail => "FAIL",
        };
        format!("{tag} {}: {} [{:.1}s]", self.name, self.detail, self.seconds)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.status != SuiteStatus::Fail)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.suites.iter().filter(|s| s.status == SuiteStatus::Fail).map(|s| s.name).collect()
    }

    pub fn to_text(&self) -> String {
        self.suites.iter().map(|s| s.line() + "\n").collect()
    }
}

/// Factors of a basis blade from its name, e.g. `e023` → `[0, 2, 3]`.
fn factors(name: &str) -> Vec<u8> {
    if name == "1" {
        return Vec::new();
    }
    name[1..].bytes().map(|b| b - b'0').collect()
}

/// Product of two basis blades by concatenating their factor lists,
/// bubble-sorting with a sign flip per swap, then contracting equal
/// neighbours (`e0 e0 = 0`, `ei ei = 1`).
pub fn oracle_product(a: &[u8], b: &[u8]) -> (i8, Vec<u8>) {
    let mut v: Vec<u8> = a.iter().chain(b).copied().collect();
    let mut sign = 1i8;
    let mut swapped = true;
    while swapped {
        swapped = false;
        for i in 1..v.len() {
            if v[i - 1] > v[i] {
                v.swap(i - 1, i);
                sign = -sign;
                swapped = true;
            }
        }
    }
    let mut out = Vec::with_capacity(v.len());
    let mut i = 0;
    while i < v.len() {
        if i + 1 < v.len() && v[i] == v[i + 1] {
            if v[i] == 0 {
                return (0, Vec::new());
            }
            i += 2;
        } else {
            out.push(v[i]);
            i += 1;
        }
    }
    (sign, out)
}

fn blade_index(f: &[u8]) -> usize {
    BLADE_NAMES.iter().position(|n| factors(n) == f).expect("every factor set names a blade")
}

/// Entries of `table` that disagree with the list-based oracle; `wedge`
/// selects the exterior instead of the geometric product.
pub fn table_mismatches(table: &ProductTable, wedge: bool) -> Vec<String> {
    let mut bad = Vec::new();
    for i in 0..16 {
        for j in 0..16 {
            let (fa, fb) = (factors(BLADE_NAMES[i]), factors(BLADE_NAMES[j]));
            let shared = fa.iter().any(|x| fb.contains(x));
            let (sign, f) = if wedge && shared { (0, Vec::new()) } else { oracle_product(&fa, &fb) };
            let e = table.entries[i][j];
            let ok = if sign == 0 { e.sign == 0 } else { e.sign == sign && usize::from(e.blade) == blade_index(&f) };
            if !ok {
                bad.push(format!("{} * {}", BLADE_NAMES[i], BLADE_NAMES[j]));
            }
        }
    }
    bad
}

fn cayley_suite(table: &ProductTable) -> (bool, String) {
    let g = table_mismatches(table, false);
    let w = table_mismatches(&WEDGE, true);
    let ok = g.is_empty() && w.is_empty();
    (ok, format!("256 geometric and 256 wedge products, {} mismatches {:?}", g.len() + w.len(), g.iter().chain(&w).take(3).collect::<Vec<_>>()))
}

fn dual_join_suite() -> (bool, String) {
    let mut bad = 0;
    for i in 0..16 {
        let x = Multivector::blade(i, 1.0);
        if x.wedge(&x.dual()) != Multivector::blade(E0123, 1.0) {
            bad += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for _ in 0..100 {
        let p = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let q = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let line = embed_point(&p).join(&embed_point(&q));
        let mid = embed_point(&((p + q) * 0.5));
        worst = worst.max(line.join(&mid).max_abs());
        let plane = line.join(&embed_point(&r));
        // Every point of the plane is incident: plane ∧ point = 0.
        for s in [p, q, r, (p + r) * 0.5] {
            worst = worst.max(plane.wedge(&embed_point(&s)).max_abs());
        }
        if plane.max_abs() < 1e-9 {
            degenerate += 1;
        }
    }
    let ok = bad == 0 && worst < 1e-12 && degenerate == 0;
    (ok, format!("{bad}/16 blades fail x ∧ dual(x) = e0123; incidence residual {worst:.1e}"))
}

fn embedding_suite(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let rot = *random_unit_quaternion(rng).to_rotation_matrix().matrix();
        let t = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let p = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let u = Versor::motor(&rot, &t);
        worst = worst.max((u.apply_point(&p) - (rot * p + t)).norm());
    }
    (worst < 1e-9, format!("1000 motors vs matrix oracle, max error {worst:.2e}"))
}

fn layer_suite(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let motors: Vec<Versor> = (0..100).map(|_| Versor::random_motor(rng, 1.0)).collect();
    let res = layer_residuals(&motors, rng)?;
    let ok = res.iter().all(|(_, r)| *r < 1e-9);
    let detail = res.iter().map(|(n, r)| format!("{n} {r:.1e}")).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("100 motors: {detail}")))
}

fn rotate_blocks(x: &[f64], rot: &Matrix3<f64>) -> Vec<f64> {
    let mut y = x.to_vec();
    for b in 0..3 {
        let v = rot * Vector3::new(x[3 * b], x[3 * b + 1], x[3 * b + 2]);
        y[3 * b..3 * b + 3].copy_from_slice(v.as_slice());
    }
    y
}

fn test_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    let shape = Shape::Box { size: Vector3::new(0.05, 0.035, 0.04) };
    let off = Vector3::new(0.1, -0.05, 0.2);
    shape.sample_surface(n, rng).into_iter().map(|p| p + off).collect()
}

fn denoiser_suite(net: &Denoiser, rng: &mut ChaCha8Rng, points: usize) -> Result<(bool, String)> {
    let pts = test_cloud(rng, points);
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let d = net.config().output_dim();
    let xs: Vec<Vec<f64>> = (0..4).map(|_| normal_vec(rng, d)).collect();
    let base = net.predict(&net.object_tokens(&pts)?, &net.grasp_tokens(&c, &xs, 7)?)?;
    let (mut worst, mut joints_same): (f64, bool) = (0.0, true);
    for _ in 0..20 {
        let u = Versor::random_motor(rng, 0.5);
        let rot = u.linear_part();
        let moved: Vec<_> = pts.iter().map(|p| u.apply_point(p)).collect();
        let xm: Vec<_> = xs.iter().map(|x| rotate_blocks(x, &rot)).collect();
        let out = net.predict(&net.object_tokens(&moved)?, &net.grasp_tokens(&u.apply_point(&c), &xm, 7)?)?;
        for (o, b) in out.iter().zip(&base) {
            worst = worst.max(relative_residual(o, &rotate_blocks(b, &rot)));
            joints_same &= o[9..].iter().zip(&b[9..]).all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }
    Ok((worst < 1e-6 && joints_same, format!("20 motors, max residual {worst:.1e}, joints bit-identical: {joints_same}")))
}

fn reflection_suite(net: &Denoiser, rng: &mut ChaCha8Rng, points: usize) -> Result<(SuiteStatus, String)> {
    let pts = test_cloud(rng, points);
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let d = net.config().output_dim();
    let xs: Vec<Vec<f64>> = (0..3).map(|_| normal_vec(rng, d)).collect();
    let obj = net.object_tokens(&pts)?;
    let g = net.grasp_tokens(&c, &xs, 11)?;
    let base = net.predict(&obj, &g)?;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let u = Versor::reflection(&n, rng.gen_range(-0.5..0.5))?;
        let out = net.predict(&obj.transformed(&u), &g.transformed(&u))?;
        for (o, b) in out.iter().zip(&base) {
            let mut expect = b.clone();
            for blk in 0..3 {
                let v = u.apply_direction(&Vector3::new(b[3 * blk], b[3 * blk + 1], b[3 * blk + 2]));
                expect[3 * blk..3 * blk + 3].copy_from_slice(v.as_slice());
            }
            worst = worst.max(relative_residual(o, &expect));
        }
    }
    let sb = net.config().symmetry_breaking;
    let status = match (sb, worst < 1e-6) {
        (false, true) => SuiteStatus::Pass,
        (true, false) => SuiteStatus::ExpectedFailure,
        _ => SuiteStatus::Fail,
    };
    Ok((status, format!("10 reflections, symmetry breaking {}, max residual {worst:.1e}", if sb { "on" } else { "off" })))
}

fn gradient_suite(net: &Denoiser, config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let errs = primitive_grad_errors(3, 1e-5, rng)?;
    let worst_op = errs.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let pts = test_cloud(rng, config.points);
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let obj = net.object_tokens(&pts)?;
    let d = net.config().output_dim();
    let t = config.diffusion_steps;
    let x0: Vec<Vec<f64>> = (0..3).map(|_| normal_vec(rng, d)).collect();
    let noise: Vec<Vec<f64>> = (0..3).map(|_| normal_vec(rng, d)).collect();
    let steps = [1, t.div_ceil(2), t];
    let batch = NoisedBatch { object: &obj, centroid: c, x0: &x0, steps: &steps, noise: &noise };
    let n = net.params().total_len();
    let probe: Vec<usize> = (0..40).map(|_| rng.gen_range(0..n)).collect();
    let loss_err = training_loss_grad_check(net, &config.schedule()?, &batch, &probe, 1e-5)?;
    let ok = worst_op.1 < 1e-4 && loss_err < 1e-4;
    Ok((ok, format!("{} primitives, worst {} {:.1e}; training loss {loss_err:.1e}", errs.len(), worst_op.0, worst_op.1)))
}

fn sampler_suite(net: &Denoiser, config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let schedule = config.schedule()?;
    let hand = config.hand()?;
    let (low, up) = (hand.lower_limits(), hand.upper_limits());
    let pts = test_cloud(rng, config.points);
    let base = sample_cloud(net, &schedule, &pts, &low, &up, None, &mut NoiseStream::batch(5, 2))?;
    let (mut worst, mut joints_same): (f64, bool) = (0.0, true);
    for _ in 0..20 {
        let u = Versor::random_motor(rng, 0.5);
        let rot = u.linear_part();
        let moved: Vec<_> = pts.iter().map(|p| u.apply_point(p)).collect();
        let mut streams: Vec<_> = NoiseStream::batch(5, 2).into_iter().map(|s| s.rotated(rot)).collect();
        let out = sample_cloud(net, &schedule, &moved, &low, &up, None, &mut streams)?;
        for (a, b) in base.iter().zip(&out) {
            let expect = a.grasp.transformed(&u).to_vec();
            for (x, y) in expect.iter().zip(b.grasp.to_vec()) {
                worst = worst.max((x - y).abs() / x.abs().max(1.0));
            }
            joints_same &= a.grasp.q.iter().zip(&b.grasp.q).all(|(p, q)| p.to_bits() == q.to_bits());
        }
    }
    Ok((worst < 1e-5 && joints_same, format!("20 motors, max relative error {worst:.1e}, joints bit-identical: {joints_same}")))
}

/// Objects used by the ordering suites when no dataset is supplied.
fn fallback_objects(config: &RunConfig, rng: &mut ChaCha8Rng) -> Vec<ObjectData> {
    [Shape::Sphere { radius: 0.03 }, Shape::Box { size: Vector3::new(0.04, 0.05, 0.035) }]
        .iter()
        .enumerate()
        .map(|(i, s)| ObjectData {
            name: format!("probe{i}"),
            cloud: CloudRecord { label: s.label(), points: s.sample_surface(config.points, rng) },
            grasps: Vec::new(),
        })
        .collect()
}

fn success_rate(config: &RunConfig, net: &Denoiser, objects: &[ObjectData], n: usize, seed: u64) -> Result<(f64, usize)> {
    let hand = config.hand()?;
    let mut passed = 0;
    for (i, o) in objects.iter().enumerate() {
        let run = sample_cmd(config, net, &o.cloud, n, seed + i as u64)?;
        let ctx = physics_context(config, &hand, &o.cloud.points)?;
        for r in &run.records {
            passed += usize::from(success_eval(&r.grasp, &ctx, &config.criteria())?.passed);
        }
    }
    let total = n * objects.len();
    Ok((passed as f64 / total as f64, total))
}

fn ood_suite(config: &RunConfig, net: &Denoiser, objects: &[ObjectData], rng: &mut ChaCha8Rng, n: usize) -> Result<(bool, String)> {
    let plain = RunConfig { guidance_scale: 0.0, ..config.clone() };
    let moved: Vec<ObjectData> = objects.iter().map(|o| transform_object(o, &Versor::random_motor(rng, 0.3))).collect();
    let (p1, n1) = success_rate(&plain, net, objects, n, 100)?;
    let (p2, n2) = success_rate(&plain, net, &moved, n, 200)?;
    let half = proportion_interval(p1, n1, p2, n2);
    Ok(((p1 - p2).abs() <= half, format!("canonical {p1:.3} vs transformed {p2:.3} over {n1}+{n2} grasps, 95% half-width {half:.3}")))
}

fn refinement_suite(config: &RunConfig, net: &Denoiser, objects: &[ObjectData], n: usize, scale: f64) -> Result<(bool, String)> {
    let plain = RunConfig { guidance_scale: 0.0, ..config.clone() };
    let guided = RunConfig { guidance_scale: scale, ..config.clone() };
    let hand = config.hand()?;
    let (mut pass_plain, mut pass_guided, mut lower, mut runs) = (0, 0, 0, 0);
    for (i, o) in objects.iter().enumerate() {
        let ctx = physics_context(config, &hand, &o.cloud.points)?;
        let a = sample_cmd(&plain, net, &o.cloud, n, 300 + i as u64)?;
        let b = sample_cmd(&guided, net, &o.cloud, n, 300 + i as u64)?;
        for (ra, rb) in a.records.iter().zip(&b.records) {
            let la = ctx.phys_loss(&ra.grasp)?.total;
            let lb = rb.phys_loss.unwrap_or(ctx.phys_loss(&rb.grasp)?.total);
            lower += usize::from(lb < la);
            runs += 1;
            pass_plain += usize::from(success_eval(&ra.grasp, &ctx, &config.criteria())?.passed);
            pass_guided += usize::from(success_eval(&rb.grasp, &ctx, &config.criteria())?.passed);
        }
    }
    let ok = pass_guided >= pass_plain && lower * 5 >= runs * 4;
    Ok((ok, format!("success {pass_guided} guided vs {pass_plain} plain; L_phys lower in {lower}/{runs} pairs")))
}

/// What to verify against. Without a model the suites use random weights
/// and synthetic probe objects.
#[derive(Default)]
pub struct VerifyOptions {
    pub model: Option<Denoiser>,
    pub objects: Option<Vec<ObjectData>>,
    /// Grasps per object for the ordering suites.
    pub samples_per_object: Option<usize>,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Runs every suite; errors inside a suite count as failures.
pub fn verify_cmd(config: &RunConfig, options: VerifyOptions, mut progress: impl FnMut(&SuiteResult)) -> Result<VerifyReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = match options.model {
        Some(m) => m,
        None => init_model(config)?,
    };
    let objects = options.objects.unwrap_or_else(|| fallback_objects(config, &mut rng));
    let n = options.samples_per_object.unwrap_or(8);
    let mut suites = Vec::new();
    let mut record = |name: &'static str, run: &mut dyn FnMut() -> Result<(SuiteStatus, String)>| {
        let (out, seconds) = timed(run);
        let (status, detail) = out.unwrap_or_else(|e| (SuiteStatus::Fail, format!("error: {e}")));
        let r = SuiteResult { name, status, detail, seconds };
        progress(&r);
        suites.push(r);
    };
    let pass = |ok: bool| if ok { SuiteStatus::Pass } else { SuiteStatus::Fail };
    record("cayley", &mut || {
        let (ok, d) = cayley_suite(&GEOMETRIC);
        Ok((pass(ok), d))
    });
    record("dual-join", &mut || {
        let (ok, d) = dual_join_suite();
        Ok((pass(ok), d))
    });
    record("embedding", &mut || {
        let (ok, d) = embedding_suite(&mut rng.clone());
        Ok((pass(ok), d))
    });
    let mut r1 = rng.clone();
    record("layer-equivariance", &mut || layer_suite(&mut r1).map(|(ok, d)| (pass(ok), d)));
    let mut r2 = ChaCha8Rng::seed_from_u64(config.seed ^ 2);
    record("denoiser-equivariance", &mut || denoiser_suite(&net, &mut r2, config.points).map(|(ok, d)| (pass(ok), d)));
    let mut r3 = ChaCha8Rng::seed_from_u64(config.seed ^ 3);
    record("reflection", &mut || reflection_suite(&net, &mut r3, config.points));
    let mut r4 = ChaCha8Rng::seed_from_u64(config.seed ^ 4);
    record("gradients", &mut || gradient_suite(&net, config, &mut r4).map(|(ok, d)| (pass(ok), d)));
    let mut r5 = ChaCha8Rng::seed_from_u64(config.seed ^ 5);
    record("sampler-symmetry", &mut || sampler_suite(&net, config, &mut r5).map(|(ok, d)| (pass(ok), d)));
    let mut r6 = ChaCha8Rng::seed_from_u64(config.seed ^ 6);
    record("ood-ordering", &mut || ood_suite(config, &net, &objects, &mut r6, n).map(|(ok, d)| (pass(ok), d)));
    let scale = if config.guidance_scale > 0.0 { config.guidance_scale } else { 1.0 };
    record("refinement-ordering", &mut || {
        refinement_suite(config, &net, &objects, n, scale).map(|(ok, d)| (pass(ok), d))
    });
    Ok(VerifyReport { suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_product(&[1], &[2]), (1, vec![1, 2]));
        assert_eq!(oracle_product(&[2], &[1]), (-1, vec![1, 2]));
        assert_eq!(oracle_product(&[0], &[0]), (0, vec![]));
        assert_eq!(oracle_product(&[1, 2], &[1, 2]), (-1, vec![]));
        assert_eq!(oracle_product(&[0, 1, 2, 3], &[3]), (1, vec![0, 1, 2]));
    }

    #[test]
    fn production_tables_match_oracle() {
        assert!(table_mismatches(&GEOMETRIC, false).is_empty());
        assert!(table_mismatches(&WEDGE, true).is_empty());
        assert!(cayley_suite(&GEOMETRIC).0);
        assert!(dual_join_suite().0);
    }

    #[test]
    fn tampered_table_fails() {
        let mut t = GEOMETRIC.clone();
        t.entries[2][3].sign = -t.entries[2][3].sign;
        let (ok, detail) = cayley_suite(&t);
        assert!(!ok);
        assert!(detail.contains("e1 * e2"), "{detail}");
        let mut t = GEOMETRIC.clone();
        t.entries[1][1].sign = 1;
        assert_eq!(table_mismatches(&t, false), vec!["e0 * e0".to_string()]);
    }
}
