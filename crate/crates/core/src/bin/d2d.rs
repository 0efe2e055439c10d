use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use d2d_core::alloc::{exact_allocate_with, greedy_allocate_with, AllocOptions};
use d2d_core::harness::{
    dump_instance, emit_plot_data, generate_instance, restore_instance, run_scenario, write_aggregates, write_results,
    InstanceSpec, Method, Scenario, ScenarioConfig,
};
use d2d_core::model::local_baseline;
use d2d_core::optimizer::{alternate, initialize, AllocatorKind, RunConfig};
use d2d_core::oracle::{brute_force_allocation, brute_force_joint};
use d2d_core::{Error, Result};

#[derive(Parser)]
#[command(name = "d2d", version, about = "Energy-minimal offloading in MIMO device-to-device networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the results CSV.
    Run(RunArgs),
    /// Check a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the allocators against brute-force enumeration on one instance.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        /// Seed of the random signals the allocators are compared under.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compare the full pipeline with a joint brute-force search.
        #[arg(long)]
        joint: bool,
    },
    /// Draw one instance from a configuration and dump it.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Sweep point whose instance shape is used; defaults to the first.
        #[arg(long)]
        point: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    subchannels: Option<usize>,
    /// Network power budget in watts.
    #[arg(long)]
    power: Option<f64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Use seeds `0..n`.
    #[arg(long, conflicts_with = "seeds")]
    seed_count: Option<u64>,
    /// Comma-separated subset of exact, greedy, random, local.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write mean/best aggregates per sweep point.
    #[arg(long)]
    aggregate: Option<PathBuf>,
    #[arg(long)]
    strict_properness: bool,
}

fn apply_overrides(cfg: &mut ScenarioConfig, args: &RunArgs) -> Result<()> {
    if let Some(s) = &args.scenario {
        cfg.scenario = Scenario::parse(s)?;
    }
    if let Some(v) = args.nodes {
        cfg.nodes = v;
    }
    if let Some(v) = args.antennas {
        cfg.antennas = v;
    }
    if let Some(v) = args.subchannels {
        cfg.subchannels = v;
    }
    if let Some(v) = args.power {
        cfg.power_budget = v;
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(n) = args.seed_count {
        cfg.seeds = (0..n).collect();
    }
    if let Some(m) = &args.methods {
        cfg.methods = m.iter().map(|s| Method::parse(s.trim())).collect::<Result<_>>()?;
    }
    if let Some(p) = &args.out {
        cfg.output = Some(p.display().to_string());
    }
    if args.strict_properness {
        cfg.strict_properness = true;
    }
    Ok(())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<bool> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    apply_overrides(&mut cfg, &args)?;
    for w in cfg.validate()? {
        log::warn!("{w}");
    }
    let rows = run_scenario(&cfg)?;
    let failures = rows.iter().filter(|r| !r.is_ok()).count();
    if failures > 0 {
        log::warn!("{failures} of {} rows failed", rows.len());
    }
    write_results(open_output(cfg.output.as_deref().map(Path::new))?, &cfg, &rows)?;
    if let Some(p) = &args.aggregate {
        write_aggregates(open_output(Some(p))?, &cfg, &emit_plot_data(&rows))?;
    }
    Ok(true)
}

fn validate(path: &Path) -> Result<bool> {
    let cfg = ScenarioConfig::load(path)?;
    let warnings = cfg.validate()?;
    for w in &warnings {
        println!("warning: {w}");
    }
    println!(
        "ok: {} scenario, {} sweep points, {} seeds, config_sha256={}",
        cfg.scenario.name(),
        cfg.sweep_points().len(),
        cfg.seeds.len(),
        cfg.hash()
    );
    Ok(true)
}

fn oracle(path: &Path, seed: u64, joint: bool) -> Result<bool> {
    let (net, ch) = restore_instance(&fs::read_to_string(path)?)?;
    let opts = AllocOptions::default();
    if net.num_nodes() > opts.max_nodes {
        return Err(Error::TooLarge {
            nodes: net.num_nodes(),
            cap: opts.max_nodes,
        });
    }
    let (_, bf) = initialize(&net, seed);
    let local = local_baseline(&net).total;
    let mut ok = true;
    println!("nodes={} subchannels={} local_J={local}", net.num_nodes(), net.num_subchannels);

    if bf.beamformers.iter().all(Option::is_none) {
        println!("no candidate links: local processing is optimal");
        return Ok(true);
    }
    let reference = brute_force_allocation(&net, &bf, &ch, net.max_links());
    let exact = exact_allocate_with(&net, &bf, &ch, &opts)?;
    let greedy = greedy_allocate_with(&net, &bf, &ch, &opts)?;
    let same = exact.allocation == reference.allocation
        && (exact.energy.total - reference.energy.total).abs() <= 1e-9 * reference.energy.total.max(1.0);
    ok &= same;
    println!(
        "allocation: brute_force_J={} ({} allocations) exact_J={} greedy_J={} exact_matches={}",
        reference.energy.total, reference.allocations_checked, exact.energy.total, greedy.energy.total, same
    );
    let sandwich = exact.energy.total <= greedy.energy.total + 1e-9 && greedy.energy.total <= local + 1e-9;
    ok &= sandwich;
    println!("ordering exact <= greedy <= local: {sandwich}");

    if joint {
        let cfg = RunConfig {
            allocator: AllocatorKind::Exact,
            rng_seed: seed,
            ..RunConfig::default()
        };
        let pipeline = alternate(&net, &ch, &cfg)?;
        let reference = brute_force_joint(&net, &ch, net.max_links(), &cfg.wmmse, 2, seed);
        let gap = (pipeline.best.energy.total - reference.energy.total) / reference.energy.total;
        println!(
            "joint: brute_force_J={} pipeline_J={} relative_gap={gap}",
            reference.energy.total, pipeline.best.energy.total
        );
    }
    Ok(ok)
}

fn generate(config: &Path, seed: u64, point: Option<usize>, out: Option<&Path>) -> Result<bool> {
    let cfg = ScenarioConfig::load(config)?;
    cfg.validate()?;
    let point = point.unwrap_or_else(|| cfg.instance_points()[0]);
    let (net, ch) = generate_instance(&InstanceSpec::from_config(&cfg, cfg.shape_at(point)), seed)?;
    open_output(out)?.write_all(dump_instance(&net, &ch).as_bytes())?;
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => validate(&config),
        Command::Oracle { instance, seed, joint } => oracle(&instance, seed, joint),
        Command::Generate { config, seed, point, out } => generate(&config, seed, point, out.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
