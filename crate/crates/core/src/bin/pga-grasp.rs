use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Arg, ArgAction, ArgMatches, Command};
use pga_grasp::harness::{
    eval_cmd, gen_data, load_model, read_grasps, sample_cmd, trace_tsv, train, verify_cmd, write_grasps,
    write_training_outputs, CloudRecord, Dataset, EvalItem, RunConfig, VerifyOptions,
};
use pga_grasp::Error;

const USAGE: u8 = 1;
const SUITE_FAILURE: u8 = 2;
const DIVERGENCE: u8 = 3;

fn leak(s: String) -> &'static str {
    Box::leak(s.into_boxed_str())
}

/// One `--key <value>` flag per config key.
fn config_args() -> Vec<Arg> {
    RunConfig::default()
        .table()
        .into_iter()
        .map(|(k, v)| {
            let k = leak(k);
            Arg::new(k).long(k).value_name("VALUE").help(leak(format!("config key (default {v})")))
        })
        .collect()
}

fn cli() -> Command {
    let path = |name: &'static str, help: &'static str| Arg::new(name).long(name).value_name("PATH").value_parser(clap::value_parser!(PathBuf)).help(help);
    Command::new("pga-grasp")
        .about("Equivariant dexterous grasp diffusion on a toy hand")
        .subcommand_required(true)
        .arg(path("config", "TOML config file; flags override its keys").global(true))
        .subcommand(Command::new("gen-data").about("Synthesize objects and reference grasps").args(config_args()))
        .subcommand(
            Command::new("train")
                .about("Fit the denoiser; writes model.ckpt and loss.tsv")
                .arg(path("data", "dataset directory (default <output_dir>/data)"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("sample")
                .about("Draw grasps for one cloud")
                .arg(path("model", "checkpoint (default <output_dir>/model.ckpt)"))
                .arg(path("cloud", "cloud file").required(true))
                .arg(Arg::new("n").long("n").value_parser(clap::value_parser!(usize)).default_value("10"))
                .arg(path("out", "grasp file to write (default stdout)"))
                .arg(path("trace", "per-step guidance trace to write"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("eval")
                .about("Success rate and diversity of grasp files against clouds")
                .arg(path("cloud", "cloud file, paired in order with --grasps").action(ArgAction::Append))
                .arg(path("grasps", "grasp file").action(ArgAction::Append))
                .arg(path("report", "report file (default <output_dir>/eval.txt)"))
                .arg(path("table", "tab-separated table (default <output_dir>/eval.tsv)"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("verify")
                .about("Run the property suites")
                .arg(path("model", "trained checkpoint; random weights when absent"))
                .arg(path("data", "dataset directory whose test split feeds the ordering suites"))
                .arg(Arg::new("samples").long("samples").value_parser(clap::value_parser!(usize)).help("grasps per object for the ordering suites"))
                .args(config_args()),
        )
}

fn load_config(m: &ArgMatches) -> anyhow::Result<RunConfig> {
    let base = match m.get_one::<PathBuf>("config") {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    let keys: Vec<String> = base.table().keys().cloned().collect();
    let overrides: Vec<(&str, &str)> =
        keys.iter().filter_map(|k| m.get_one::<String>(k).map(|v| (k.as_str(), v.as_str()))).collect();
    let config = base.with_overrides(overrides)?;
    config.validate()?;
    Ok(config)
}

fn require_seed(m: &ArgMatches, verb: &str) -> anyhow::Result<()> {
    if m.get_one::<String>("seed").is_none() {
        bail!("{verb} requires --seed");
    }
    Ok(())
}

fn or_default(m: &ArgMatches, key: &str, fallback: PathBuf) -> PathBuf {
    m.get_one::<PathBuf>(key).cloned().unwrap_or(fallback)
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(matches: &ArgMatches) -> anyhow::Result<u8> {
    let (verb, m) = matches.subcommand().expect("subcommand required");
    let config = load_config(m)?;
    let out = config.output_dir.clone();
    match verb {
        "gen-data" => {
            require_seed(m, verb)?;
            let data = gen_data(&config)?;
            let dir = out.join("data");
            data.write(&dir)?;
            println!("wrote {} train, {} test, {} ood objects to {}", data.train.len(), data.test.len(), data.ood.len(), dir.display());
        }
        "train" => {
            require_seed(m, verb)?;
            let data = Dataset::read(&or_default(m, "data", out.join("data")))?;
            let (net, report) = train(&config, &data, |p| {
                if let Some(probe) = p.probe {
                    log::info!("step {} loss {:.4} probe {:.4}", p.step, p.loss, probe);
                }
            })?;
            write_training_outputs(&out, &config, &net, &report)?;
            println!("probe loss {:.4} -> {:.4} ({:.1}% reduction)", report.initial_probe, report.final_probe, 100.0 * report.reduction());
        }
        "sample" => {
            require_seed(m, verb)?;
            let net = load_model(&config, &or_default(m, "model", out.join("model.ckpt")))?;
            let cloud = CloudRecord::read(m.get_one::<PathBuf>("cloud").unwrap())?;
            let n = *m.get_one::<usize>("n").unwrap();
            let run = sample_cmd(&config, &net, &cloud, n, config.seed)?;
            for w in &run.warnings {
                log::warn!("{w}");
            }
            match m.get_one::<PathBuf>("out") {
                Some(p) => write_grasps(p, &cloud.label, &run.records)?,
                None => run.records.iter().for_each(|r| println!("{}", r.to_line())),
            }
            if let Some(p) = m.get_one::<PathBuf>("trace") {
                write_file(p, &trace_tsv(&run.traces))?;
            }
        }
        "eval" => {
            let clouds: Vec<&PathBuf> = m.get_many("cloud").map(|v| v.collect()).unwrap_or_default();
            let grasps: Vec<&PathBuf> = m.get_many("grasps").map(|v| v.collect()).unwrap_or_default();
            if clouds.is_empty() || clouds.len() != grasps.len() {
                bail!("eval needs matching --cloud and --grasps pairs ({} vs {})", clouds.len(), grasps.len());
            }
            let mut loaded = Vec::new();
            for (c, g) in clouds.iter().zip(&grasps) {
                let cloud = CloudRecord::read(c).with_context(|| format!("reading {}", c.display()))?;
                let gs: Vec<_> = read_grasps(g).with_context(|| format!("reading {}", g.display()))?.into_iter().map(|r| r.grasp).collect();
                let name = g.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                loaded.push((name, cloud, gs));
            }
            let items: Vec<EvalItem> = loaded.iter().map(|(n, c, g)| EvalItem { name: n, cloud: c, grasps: g }).collect();
            let report = eval_cmd(&config, &items)?;
            write_file(&or_default(m, "report", out.join("eval.txt")), &report.to_text())?;
            write_file(&or_default(m, "table", out.join("eval.tsv")), &report.to_table())?;
            print!("{}", report.to_text());
        }
        "verify" => {
            let mut options = VerifyOptions { samples_per_object: m.get_one::<usize>("samples").copied(), ..Default::default() };
            if let Some(p) = m.get_one::<PathBuf>("model") {
                options.model = Some(load_model(&config, p)?);
            }
            if let Some(p) = m.get_one::<PathBuf>("data") {
                options.objects = Some(Dataset::read(p)?.test);
            }
            let report = verify_cmd(&config, options, |s| println!("{}", s.line()))?;
            if !report.passed() {
                eprintln!("failed suites: {}", report.failures().join(", "));
                return Ok(SUITE_FAILURE);
            }
        }
        _ => unreachable!(),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(&matches) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = matches!(e.downcast_ref::<Error>(), Some(Error::Divergence { .. } | Error::NonFinite(_)));
            ExitCode::from(if diverged { DIVERGENCE } else { USAGE })
        }
    }
}
