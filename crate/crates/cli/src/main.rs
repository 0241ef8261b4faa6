use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand};
use spg_core::metrics::{self, TransitionMatrix};
use spg_core::{run, Catalogue, InitMode, RunLog, ShapeClass, SimConfig};
use spg_live::{Service, ServiceConfig};

/// Simplified Poietic Generator: agents that chase unexpected simple patterns.
#[derive(Parser)]
#[command(name = "spg", version)]
struct Cli {
    /// Directory for output files when no explicit path is given.
    #[arg(long, global = true, env = "SPG_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its event log.
    Run(RunArgs),
    /// Desirable-time fraction as a function of horizon.
    Sweep(SweepArgs),
    /// Compute metrics from event logs.
    Metrics(MetricsArgs),
    /// Export the default pattern catalogue.
    Catalogue(CatalogueArgs),
    /// Host live sessions over WebSocket.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Grid side length.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Number of colours.
    #[arg(long = "k", default_value_t = 2)]
    k: usize,
    /// Maximum distance at which a pattern is considered as a target.
    #[arg(long, default_value_t = 7)]
    horizon: usize,
    /// Probability of a random recolouring when nothing is desirable.
    #[arg(long, default_value_t = 0.5)]
    p_random: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial grid: all-white or uniform-random.
    #[arg(long, default_value = "uniform-random")]
    init: InitMode,
    /// "default" or the path of a catalogue file.
    #[arg(long, default_value = "default")]
    catalogue: String,
}

impl SimArgs {
    fn config(&self, steps: u64) -> SimConfig {
        SimConfig {
            n: self.n,
            k: self.k,
            horizon: self.horizon,
            p_random: self.p_random,
            seed: self.seed,
            steps,
            init: self.init,
            catalogue: self.catalogue.clone(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Number of agent decisions.
    #[arg(long, default_value_t = 100_000)]
    steps: u64,
    /// Log path (default: <out-dir>/run-<seed>.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    horizon_min: usize,
    #[arg(long, default_value_t = 25)]
    horizon_max: usize,
    /// Comma-separated seeds, one run per seed and horizon.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    seeds: Vec<String>,
    #[arg(long, default_value_t = 20_000)]
    steps: u64,
    /// Output path (default: <out-dir>/sweep.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Event logs written by `run`.
    #[arg(long = "log", required = true)]
    logs: Vec<PathBuf>,
    /// Complexity trace per step.
    #[arg(long)]
    trace: bool,
    /// Shape-transition frequencies, pooled over all logs.
    #[arg(long)]
    table2: bool,
    /// Reached shapes in order.
    #[arg(long)]
    visited: bool,
    /// Fraction of decisions with a desirable target.
    #[arg(long)]
    fraction: bool,
    /// Periodogram of the reached-shape series with its shuffle null band.
    #[arg(long)]
    periodogram: bool,
    /// Rows with fewer transitions are flagged as low confidence.
    #[arg(long, default_value_t = 100)]
    min_transitions: u64,
}

#[derive(Args)]
struct CatalogueArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Milliseconds between agent steps.
    #[arg(long, default_value_t = 200)]
    tick_ms: u64,
    /// Seconds a session without clients keeps running.
    #[arg(long, default_value_t = 600)]
    idle_timeout: u64,
    #[arg(long, default_value_t = 64)]
    max_sessions: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, msg).exit()
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(&cli.out_dir, args),
        Command::Sweep(args) => cmd_sweep(&cli.out_dir, args),
        Command::Metrics(args) => cmd_metrics(&cli.out_dir, args),
        Command::Catalogue(args) => cmd_catalogue(args),
        Command::Serve(args) => cmd_serve(args),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_run(out_dir: &Path, args: RunArgs) -> Result<()> {
    let config = args.sim.config(args.steps);
    if let Err(e) = config.validate() {
        usage_error(e);
    }
    let catalogue = config.load_catalogue()?;
    let log = run(&config)?;
    let path = args
        .out
        .unwrap_or_else(|| out_dir.join(format!("run-{}.jsonl", config.seed)));
    let mut w = create(&path)?;
    log.write_to(&mut w)?;
    w.flush()?;

    let visited = metrics::visited_sequence(&log, &catalogue)?;
    let mut shapes: Vec<ShapeClass> = visited.iter().map(|v| v.shape).collect();
    shapes.sort();
    shapes.dedup();
    let final_bits = match log.states().last() {
        Some(g) => metrics::description_bound(&g, &catalogue)?.0,
        None => metrics::description_bound(&log.initial, &catalogue)?.0,
    };
    println!("log: {}", path.display());
    println!("steps: {}", log.events.len());
    println!("resets: {}", log.reached.len());
    println!(
        "shapes visited: {}",
        shapes.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")
    );
    println!("final complexity: {final_bits}");
    Ok(())
}

fn cmd_sweep(out_dir: &Path, args: SweepArgs) -> Result<()> {
    let seeds: Vec<u64> = args
        .seeds
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .unwrap_or_else(|e| usage_error(format!("bad seed: {e}")));
    if seeds.is_empty() {
        usage_error("seed list is empty");
    }
    if args.horizon_min > args.horizon_max {
        usage_error("horizon-min exceeds horizon-max");
    }
    let base = args.sim.config(args.steps);
    if let Err(e) = base.validate() {
        usage_error(e);
    }
    let horizons: Vec<usize> = (args.horizon_min..=args.horizon_max).collect();
    let rows = metrics::desirable_fraction_sweep(&base, &horizons, &seeds)?;
    let path = args.out.unwrap_or_else(|| out_dir.join("sweep.csv"));
    let mut w = create(&path)?;
    writeln!(w, "horizon,mean,std_dev,std_err,runs")?;
    for r in &rows {
        writeln!(w, "{},{:.6},{:.6},{:.6},{}", r.horizon, r.mean, r.std_dev, r.std_err, r.runs)?;
    }
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn read_log(path: &Path) -> Result<RunLog> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    RunLog::read_from(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn suffixed(out_dir: &Path, stem: &str, i: usize, many: bool, ext: &str) -> PathBuf {
    if many {
        out_dir.join(format!("{stem}-{i}.{ext}"))
    } else {
        out_dir.join(format!("{stem}.{ext}"))
    }
}

fn cmd_metrics(out_dir: &Path, args: MetricsArgs) -> Result<()> {
    if !(args.trace || args.table2 || args.visited || args.fraction || args.periodogram) {
        usage_error("choose at least one of --trace, --table2, --visited, --fraction, --periodogram");
    }
    let logs = args.logs.iter().map(|p| read_log(p)).collect::<Result<Vec<_>>>()?;
    let catalogues = logs
        .iter()
        .map(|l| l.config.load_catalogue())
        .collect::<spg_core::Result<Vec<_>>>()?;
    let many = logs.len() > 1;

    for (i, (log, cat)) in logs.iter().zip(&catalogues).enumerate() {
        if args.trace {
            let path = suffixed(out_dir, "trace", i, many, "csv");
            let mut w = create(&path)?;
            writeln!(w, "step,value,exact")?;
            for p in metrics::complexity_trace(log, cat)? {
                writeln!(w, "{},{},{}", p.step, p.value, p.exact)?;
            }
            w.flush()?;
            println!("trace: {}", path.display());
        }
        if args.visited {
            let path = suffixed(out_dir, "visited", i, many, "csv");
            let mut w = create(&path)?;
            writeln!(w, "index,shape,config,label,background")?;
            for (j, v) in metrics::visited_sequence(log, cat)?.iter().enumerate() {
                writeln!(w, "{j},{},{},{},{}", v.shape, v.config, v.label, v.background.0)?;
            }
            w.flush()?;
            println!("visited: {}", path.display());
        }
        if args.periodogram {
            let seq: Vec<ShapeClass> = metrics::visited_sequence(log, cat)?.iter().map(|v| v.shape).collect();
            let pg = metrics::periodogram(&seq)?;
            let null = metrics::shuffle_null(&seq, 1000, 0.95, log.config.seed)?;
            let path = suffixed(out_dir, "periodogram", i, many, "csv");
            let mut w = create(&path)?;
            writeln!(w, "frequency_index,frequency,power")?;
            for (j, p) in pg.power.iter().enumerate() {
                writeln!(w, "{},{:.6},{:.6}", j + 1, (j + 1) as f64 / pg.len as f64, p)?;
            }
            w.flush()?;
            println!(
                "periodogram: {} dominance {:.4} null band [{:.4}, {:.4}] {}",
                path.display(),
                pg.dominance,
                null.lo,
                null.hi,
                if null.contains(pg.dominance) { "no regularity" } else { "outside null band" }
            );
        }
    }

    if args.fraction {
        let path = out_dir.join("fraction.csv");
        let mut w = create(&path)?;
        writeln!(w, "log,horizon,seed,fraction")?;
        for (p, log) in args.logs.iter().zip(&logs) {
            writeln!(
                w,
                "{},{},{},{:.6}",
                p.display(),
                log.config.horizon,
                log.config.seed,
                metrics::desirable_fraction(log)
            )?;
        }
        w.flush()?;
        println!("fraction: {}", path.display());
    }

    if args.table2 {
        let mut m = TransitionMatrix::new(args.min_transitions);
        for (log, cat) in logs.iter().zip(&catalogues) {
            m.add_sequence(&metrics::visited_sequence(log, cat)?);
        }
        let table = out_dir.join("table2.tsv");
        let mut w = create(&table)?;
        w.write_all(m.to_table().as_bytes())?;
        w.flush()?;
        let long = out_dir.join("transitions.csv");
        let mut w = create(&long)?;
        w.write_all(m.to_csv().as_bytes())?;
        w.flush()?;
        print!("{}", m.to_table());
        for from in ShapeClass::ALL.into_iter().filter(|&s| m.low_confidence(s)) {
            eprintln!("warning: {from} row has only {} transitions", m.row_total(from));
        }
        println!("table2: {} and {}", table.display(), long.display());
    }
    Ok(())
}

fn cmd_catalogue(args: CatalogueArgs) -> Result<()> {
    if args.n < 2 {
        usage_error("n must be at least 2");
    }
    let text = Catalogue::default_for(args.n)?.to_toml();
    match args.out {
        Some(path) => {
            let mut w = create(&path)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let config = args.sim.config(0);
    if let Err(e) = config.validate() {
        usage_error(e);
    }
    if args.tick_ms == 0 {
        bail!("tick-ms must be positive");
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let service = Service::new(ServiceConfig {
            max_sessions: args.max_sessions,
            idle_timeout: Duration::from_secs(args.idle_timeout),
        });
        let id = service.host_session(config, Duration::from_millis(args.tick_ms))?;
        println!("session {id} on ws://{}/ws", args.addr);
        service.serve(args.addr).await?;
        Ok(())
    })
}
