use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use epidemigrid::engine::{write_events, write_trace, DEFAULT_MAX_STEPS, DEFAULT_RADIUS};
use epidemigrid::mapgrid::DEFAULT_THRESHOLD;
use epidemigrid::mobility::DEFAULT_BAND_FRACTION;
use epidemigrid::sweep::{parse_rt, run_sweep, SweepSpec};
use epidemigrid::synth::GridCity;
use epidemigrid::{simulate_on, CityMap, SimulationConfig};

#[derive(Parser)]
#[command(
    name = "epidemigrid",
    version,
    about = "Malware spread among mobile devices on a city grid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its time series.
    Run(RunArgs),
    /// Run a parameter sweep described by a spec file.
    Sweep(SweepArgs),
    /// Write the built-in synthetic city and its attraction sidecar.
    GenMap(GenMapArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Grayscale PGM city map.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Attraction sidecar PGM (values 1, 5, 10 on roads).
    #[arg(long)]
    attraction: Option<PathBuf>,
    /// Pixels darker than this are road.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    #[arg(long)]
    invert: bool,
    #[arg(long, default_value_t = 20)]
    infected: usize,
    #[arg(long, default_value_t = 80)]
    susceptible: usize,
    #[arg(long, default_value_t = 3)]
    packets: u32,
    /// Response-time interval, MIN:MAX.
    #[arg(long, default_value = "1:5", value_parser = rt_arg)]
    rt: (u32, u32),
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    radius: f64,
    #[arg(long, default_value_t = 1)]
    speed: u32,
    /// Boundary band width as a fraction of the map side.
    #[arg(long, default_value_t = DEFAULT_BAND_FRACTION)]
    band: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    #[arg(long, env = "EPIDEMIGRID_SEED", default_value_t = 0)]
    seed: u64,
    /// Drop partial packet progress when a susceptible device loses contact.
    #[arg(long)]
    reset_on_disconnect: bool,
    /// Devices never move.
    #[arg(long = "static")]
    static_devices: bool,
    /// Time-series CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Infection and repair event log CSV.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Per-step device positions CSV.
    #[arg(long)]
    trace_log: Option<PathBuf>,
    /// Road graph edge list (`u v weight`).
    #[arg(long)]
    graph_dump: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct GenMapArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    attraction_out: Option<PathBuf>,
}

fn rt_arg(s: &str) -> Result<(u32, u32), String> {
    parse_rt(s).ok_or_else(|| format!("expected MIN:MAX, got {s:?}"))
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(args: RunArgs) -> Result<()> {
    let map = args.map.context("missing required flag --map")?;
    let cfg = SimulationConfig {
        map,
        attraction: args.attraction,
        threshold: args.threshold,
        invert: args.invert,
        n_infected: args.infected,
        n_susceptible: args.susceptible,
        packets: args.packets,
        rt_min: args.rt.0,
        rt_max: args.rt.1,
        radius: args.radius,
        speed: args.speed,
        band_fraction: args.band,
        max_steps: args.max_steps,
        seed: args.seed,
        reset_on_disconnect: args.reset_on_disconnect,
        static_devices: args.static_devices,
        placements: None,
        record_trace: args.trace_log.is_some(),
    };
    cfg.validate()?;
    let city = CityMap::from_config(&cfg)?;
    if let Some(path) = &args.graph_dump {
        let mut w = create(path)?;
        city.graph.write_edge_list(&mut w)?;
        w.flush()?;
    }
    let result = simulate_on(&city, &cfg)?;

    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            result.series.write_csv(&mut w, cfg.seed)?;
            w.flush()?;
        }
        None => result
            .series
            .write_csv(std::io::stdout().lock(), cfg.seed)?,
    }
    if let Some(path) = &args.events {
        let mut w = create(path)?;
        write_events(&result.events, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = &args.trace_log {
        let mut w = create(path)?;
        write_trace(&result.trace, &mut w)?;
        w.flush()?;
    }

    let o = &result.outcome;
    let last = result.series.last().expect("series has step 0");
    let ext = o.extinction_step.map_or("-".to_string(), |s| s.to_string());
    let summary = format!(
        "outcome={} peak_infected={} peak_step={} extinction_step={} cumulative={}/{} seed={}",
        o.kind.as_str(),
        o.peak_infected,
        o.peak_step,
        ext,
        last.cumulative_infected,
        cfg.total_devices(),
        cfg.seed
    );
    // keep stdout clean for the CSV when no --out was given
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let spec = SweepSpec::load(&args.spec)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let report = run_sweep(&spec, &args.out_dir, jobs.max(1))?;
    println!(
        "{} configurations, {} runs, {} failures -> {}",
        report.rows.len(),
        spec.run_count(),
        report.failures.len(),
        args.out_dir.join("summary.csv").display()
    );
    Ok(())
}

fn gen_map(args: GenMapArgs) -> Result<()> {
    let city = GridCity::desk();
    city.image().save_pgm(&args.out)?;
    if let Some(path) = &args.attraction_out {
        city.attraction().save_pgm(path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::GenMap(a) => gen_map(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
