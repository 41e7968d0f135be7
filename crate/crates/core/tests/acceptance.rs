//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Trains the default toy model once and shares it across the checks.

use std::collections::HashMap;
use std::process::Command;
use std::time::Instant;

use anyhow::Result;
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pga_grasp::hand::{toy_hand, Grasp};
use pga_grasp::harness::data::{gen_data, physics_context, Dataset, Shape};
use pga_grasp::harness::{sample_cmd, train, verify_cmd, RunConfig, SuiteResult, SuiteStatus, VerifyOptions};
use pga_grasp::nn::Denoiser;
use pga_grasp::physics::{limit_loss, range_loss, success_eval, PhysicsContext, SimParams, SuccessCriteria};

struct Line {
    name: &'static str,
    ok: bool,
    detail: String,
}

fn report(lines: &mut Vec<Line>, name: &'static str, out: Result<(bool, String)>) {
    let (ok, detail) = out.unwrap_or_else(|e| (false, format!("error: {e:#}")));
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    lines.push(Line { name, ok, detail });
}

fn suite<'a>(suites: &'a HashMap<&'static str, SuiteResult>, name: &str) -> Result<&'a SuiteResult> {
    suites.get(name).ok_or_else(|| anyhow::anyhow!("suite {name} missing"))
}

fn passed(s: &SuiteResult) -> bool {
    s.status != SuiteStatus::Fail
}

struct Shared {
    config: RunConfig,
    data: Dataset,
    net: Denoiser,
    reduction: f64,
    train_seconds: f64,
}

fn shared_model() -> Result<Shared> {
    let config = RunConfig { seed: 1, ..RunConfig::default() };
    let data = gen_data(&config)?;
    let start = Instant::now();
    let (net, rep) = train(&config, &data, |_| {})?;
    Ok(Shared { config, data, net, reduction: rep.reduction(), train_seconds: start.elapsed().as_secs_f64() })
}

fn by_name(suites: Vec<SuiteResult>) -> HashMap<&'static str, SuiteResult> {
    suites.into_iter().map(|s| (s.name, s)).collect()
}

fn determinism(config: &RunConfig) -> Result<(bool, String)> {
    let short = RunConfig { train_steps: 200, ..config.clone() };
    let a = gen_data(&short)?;
    let b = gen_data(&short)?;
    let (na, _) = train(&short, &a, |_| {})?;
    let (nb, _) = train(&short, &b, |_| {})?;
    let same_params = na.params().flatten().iter().zip(nb.params().flatten()).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok((a == b && same_params, format!("datasets equal {}, 200-step parameters bit-identical {same_params}", a == b)))
}

/// Paired guided/unguided runs on matched seeds plus the λ sweep.
fn refinement(sh: &Shared) -> Result<(bool, String)> {
    let objects = &sh.data.test;
    let per = 20usize.div_ceil(objects.len());
    let hand = sh.config.hand()?;
    let with = |scale: f64| RunConfig { guidance_scale: scale, ..sh.config.clone() };
    let (mut pass_plain, mut pass_guided, mut lower, mut runs, mut monotone) = (0, 0, 0, 0, 0);
    let (mut sum_plain, mut sum_guided) = (0.0, 0.0);
    for (i, o) in objects.iter().enumerate() {
        let ctx = physics_context(&sh.config, &hand, &o.cloud.points)?;
        let seed = 500 + i as u64;
        let losses = |scale: f64| -> Result<Vec<(f64, bool)>> {
            let run = sample_cmd(&with(scale), &sh.net, &o.cloud, per, seed)?;
            run.records
                .iter()
                .map(|r| Ok((ctx.phys_loss(&r.grasp)?.total, success_eval(&r.grasp, &ctx, &sh.config.criteria())?.passed)))
                .collect()
        };
        let l0 = losses(0.0)?;
        let l01 = losses(0.1)?;
        let l1 = losses(1.0)?;
        for ((a, b), c) in l0.iter().zip(&l01).zip(&l1) {
            runs += 1;
            lower += usize::from(c.0 < a.0);
            monotone += usize::from(a.0 >= b.0 && b.0 >= c.0);
            pass_plain += usize::from(a.1);
            pass_guided += usize::from(c.1);
            sum_plain += a.0;
            sum_guided += c.0;
        }
    }
    let ok = runs >= 20 && pass_guided >= pass_plain && lower * 5 >= runs * 4 && monotone * 5 >= runs * 4;
    Ok((
        ok,
        format!(
            "{runs} pairs: success {pass_guided} guided vs {pass_plain} plain; L_phys lower in {lower}; mean {:.4} vs {:.4}; λ sweep {{0, 0.1, 1}} non-increasing in {monotone}",
            sum_guided / runs as f64,
            sum_plain / runs as f64
        ),
    ))
}

fn physics_sanity() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts = Shape::Sphere { radius: 0.03 }.sample_surface(256, &mut rng);
    let hand = toy_hand(2, 2)?;
    let (low, up) = (hand.lower_limits(), hand.upper_limits());
    let ctx = PhysicsContext::new(hand, &pts, 0.1, SimParams::default(), 0.1)?;
    let mid: Vec<f64> = low.iter().zip(&up).map(|(a, b)| 0.5 * (a + b)).collect();
    let far = Grasp::from_pose(&Matrix3::identity(), &Vector3::new(1.0, 0.0, 0.0), mid.clone());

    // Full rollout, not the out-of-reach shortcut.
    let free = pga_grasp::physics::stability_loss(&ctx.scene(&far)?, &ctx.velocities)?;
    let expect = ctx.velocities.iter().map(|v| v.norm_squared()).sum::<f64>() / ctx.velocities.len() as f64;
    let free_exact = free == expect;
    let midpoint = ctx.phys_loss(&far)?;
    let midpoint_ok = midpoint.range == 0.0 && midpoint.limit == 0.0 && midpoint.total == free;

    let at_up_range = range_loss(&up, &low, &up)?;
    let half_sq: f64 = low.iter().zip(&up).map(|(a, b)| (0.5 * (b - a)).powi(2)).sum();
    let eq11 = (at_up_range - half_sq).abs() < 1e-12
        && limit_loss(&up, &low, &up)? == 0.0
        && (limit_loss(&[1.5], &[0.0], &[1.0])? - 0.5).abs() < 1e-15;

    let criteria = SuccessCriteria::default();
    let rep = success_eval(&far, &ctx, &criteria)?;
    let t = criteria.steps as f64 * 0.01;
    let half_at2 = 0.5 * criteria.accel * t * t;
    let discrete = criteria.accel * 0.01 * 0.01 * (criteria.steps * (criteria.steps + 1)) as f64 / 2.0;
    let kin = !rep.passed
        && half_at2 > criteria.threshold
        && rep.displacements.iter().all(|d| (d - discrete).abs() < 1e-12);
    Ok((
        free_exact && midpoint_ok && eq11 && kin,
        format!(
            "free loss {free} = mean |v0|^2 {expect}: {free_exact}; midpoint terms vanish: {midpoint_ok}; joint-loss examples: {eq11}; free object fails with displacement {:.4} m (½at² = {half_at2:.3}): {kin}",
            rep.max_displacement()
        ),
    ))
}

fn cli_verify() -> Result<(bool, String)> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_pga-grasp")).args(["verify", "--seed", "1"]).output()?;
    let secs = start.elapsed().as_secs_f64();
    let code = out.status.code();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let failing: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    Ok((code == Some(0) && secs < 600.0, format!("exit {code:?} in {secs:.1}s, failing suites {failing:?}")))
}

fn main() {
    let mut lines = Vec::new();
    println!("training the shared model (default toy config, seed 1)");
    let shared = match shared_model() {
        Ok(s) => Some(s),
        Err(e) => {
            println!("shared model failed: {e:#}");
            None
        }
    };

    let random = verify_cmd(&RunConfig { seed: 1, ..RunConfig::default() }, VerifyOptions::default(), |_| {}).map(|r| by_name(r.suites));
    let trained = shared.as_ref().map(|sh| {
        let options = VerifyOptions {
            model: Some(sh.net.clone()),
            objects: Some(sh.data.test.clone()),
            samples_per_object: Some(100usize.div_ceil(sh.data.test.len().max(1))),
        };
        verify_cmd(&sh.config, options, |_| {}).map(|r| by_name(r.suites))
    });
    let (random, trained) = match (random, trained) {
        (Ok(r), Some(Ok(t))) => (r, t),
        (r, t) => {
            println!("verify run failed: random {:?} trained {:?}", r.err(), t.and_then(|t| t.err()));
            (HashMap::new(), HashMap::new())
        }
    };

    report(&mut lines, "algebra-exactness", (|| {
        let c = suite(&random, "cayley")?;
        let d = suite(&random, "dual-join")?;
        let secs = c.seconds + d.seconds;
        Ok((passed(c) && passed(d) && secs < 1.0, format!("{}; {}; {secs:.3}s", c.detail, d.detail)))
    })());
    report(&mut lines, "embedding-fidelity", (|| {
        let s = suite(&random, "embedding")?;
        Ok((passed(s), s.detail.clone()))
    })());
    report(&mut lines, "layer-equivariance", (|| {
        let l = suite(&random, "layer-equivariance")?;
        let dr = suite(&random, "denoiser-equivariance")?;
        let dt = suite(&trained, "denoiser-equivariance")?;
        let secs = l.seconds + dr.seconds;
        let ok = passed(l) && passed(dr) && passed(dt) && secs < 60.0;
        Ok((ok, format!("{}; denoiser random {}; trained {}; {secs:.2}s", l.detail, dr.detail, dt.detail)))
    })());
    report(&mut lines, "gradient-correctness", (|| {
        let r = suite(&random, "gradients")?;
        let t = suite(&trained, "gradients")?;
        Ok((passed(r) && passed(t), format!("random weights {}; trained {}", r.detail, t.detail)))
    })());
    report(&mut lines, "sampler-symmetry", (|| {
        let r = suite(&random, "sampler-symmetry")?;
        let t = suite(&trained, "sampler-symmetry")?;
        Ok((passed(r) && passed(t), format!("random weights {}; trained {}", r.detail, t.detail)))
    })());
    report(&mut lines, "training-progress", (|| {
        let sh = shared.as_ref().ok_or_else(|| anyhow::anyhow!("no shared model"))?;
        let (det, det_detail) = determinism(&sh.config)?;
        let ok = sh.reduction >= 0.5 && sh.train_seconds <= 900.0 && det;
        Ok((
            ok,
            format!(
                "{} steps: probe loss reduced {:.1}% in {:.0}s; {det_detail}",
                sh.config.train_steps,
                100.0 * sh.reduction,
                sh.train_seconds
            ),
        ))
    })());
    report(&mut lines, "ood-robustness", (|| {
        let s = suite(&trained, "ood-ordering")?;
        Ok((passed(s), s.detail.clone()))
    })());
    report(&mut lines, "refinement-ordering", (|| {
        let sh = shared.as_ref().ok_or_else(|| anyhow::anyhow!("no shared model"))?;
        refinement(sh)
    })());
    report(&mut lines, "physics-sanity", physics_sanity());
    report(&mut lines, "verify-command", (|| {
        let (ok, detail) = cli_verify()?;
        let mut bad: Vec<String> =
            trained.values().filter(|s| !passed(s)).map(|s| format!("{} ({})", s.name, s.detail)).collect();
        bad.sort();
        Ok((ok, format!("{detail}; trained-model ledger failures {bad:?}")))
    })());

    let failed: Vec<&str> = lines.iter().filter(|l| !l.ok).map(|l| l.name).collect();
    println!("{}/{} criteria passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        for l in lines.iter().filter(|l| !l.ok) {
            eprintln!("failed {}: {}", l.name, l.detail);
        }
        std::process::exit(1);
    }
}
