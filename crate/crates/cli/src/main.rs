use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use manet_core::results::{diff_recount, ResultsRecord};
use manet_core::{run_campaign, CampaignSpec, Mode, Recount, Scenario, SimError, Simulation};

#[derive(Parser)]
#[command(name = "manet-sim", version, about = "Deterministic MANET simulator: multipath routing, black holes and an IDS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Sweep node counts, modes and seeds.
    Campaign(CampaignArgs),
    /// Recompute metrics from a trace and compare with a results record.
    Recount(RecountArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the event trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Where to write the results record (default: stdout).
    #[arg(long)]
    results: Option<PathBuf>,
    /// Also write per-interval metrics here.
    #[arg(long)]
    series: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Node counts, e.g. `20,40,60,80,100`.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 40, 60, 80, 100])]
    nodes: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [Mode::Normal, Mode::Attack, Mode::Ids])]
    modes: Vec<Mode>,
    /// Seeds as a list (`1,2,3`) or an inclusive range (`1-10`).
    #[arg(long, default_value = "1-10")]
    seeds: String,
    /// Directory for the table, per-run results and plot series.
    #[arg(long, default_value = "campaign-out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct RecountArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    results: PathBuf,
}

macro_rules! overrides {
    ($($field:ident: $ty:ty),* $(,)?) => {
        /// Scenario fields settable from the command line.
        #[derive(Args, Default)]
        struct Overrides {
            $(
                #[arg(long, help_heading = "Scenario")]
                $field: Option<$ty>,
            )*
        }

        impl Overrides {
            fn apply(&self, s: &mut Scenario) {
                $(
                    if let Some(v) = &self.$field {
                        s.$field = v.clone();
                    }
                )*
            }
        }
    };
}

overrides! {
    node_count: u32,
    width: f64,
    height: f64,
    range: f64,
    v_min: f64,
    v_max: f64,
    pause: f64,
    duration: f64,
    mode: Mode,
    attacker_count: u32,
    ids_count: u32,
    flow_count: u32,
    cbr_rate: f64,
    payload_size: u32,
    flow_start_min: f64,
    flow_start_max: f64,
    seed: u64,
    mobility_tick: f64,
    staggered_join: bool,
    join_window: f64,
    per_hop_latency: f64,
    jitter: f64,
    active_route_lifetime: f64,
    discovery_timeout: f64,
    retry_limit: u32,
    discovery_backoff: f64,
    data_ttl: u32,
    buffer_capacity: u32,
    rreq_cache_lifetime: f64,
    fake_hop_count: u32,
    seq_inflation: u32,
    audit_interval: f64,
    audit_min_packets: u32,
    confirm_window: f64,
    ids_global_view: bool,
    metrics_interval: f64,
}

/// Problems with the user's input; everything else is a runtime failure.
#[derive(Debug)]
struct ConfigProblem(anyhow::Error);

impl std::fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigProblem {}

fn config_err(e: impl Into<anyhow::Error>) -> anyhow::Error {
    ConfigProblem(e.into()).into()
}

fn load_scenario(config: Option<&Path>, overrides: &Overrides) -> Result<Scenario> {
    let mut s = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config_err)?;
            Scenario::from_toml_unchecked(&text).map_err(config_err)?
        }
        None => Scenario::default(),
    };
    overrides.apply(&mut s);
    s.validate().map_err(config_err)?;
    Ok(s)
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {spec:?}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().with_context(|| format!("bad seed {s:?}")))
        .collect()
}

fn create(path: &Path) -> Result<Box<dyn Write + Send>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(f))
}

fn runtime(e: SimError) -> anyhow::Error {
    match e {
        SimError::Config(c) => config_err(c),
        other => other.into(),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let scenario = load_scenario(args.config.as_deref(), &args.overrides)?;
    let mut builder = Simulation::builder();
    if let Some(path) = &args.trace {
        builder = builder.trace(create(path)?);
    }
    let sim = builder.build(scenario).map_err(runtime)?;
    let (summary, finished) = sim.finish().map_err(runtime)?;
    let text = summary.to_text();
    match &args.results {
        Some(path) => fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    if let Some(path) = &args.series {
        let mut out = String::from("start\tend\tsent\treceived\tdropped\trouting_packets\tthroughput_pps\tin_flight\n");
        for iv in finished.ledger.intervals() {
            let secs = (iv.end - iv.start).as_secs_f64();
            let tput = if secs > 0.0 { iv.delta.received_unique as f64 / secs } else { 0.0 };
            out += &format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\n",
                iv.start,
                iv.end,
                iv.delta.sent,
                iv.delta.received_unique,
                iv.delta.total_drops(),
                iv.delta.routing_packets(),
                tput,
                iv.in_flight
            );
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn campaign(args: CampaignArgs) -> Result<()> {
    let template = load_scenario(args.config.as_deref(), &args.overrides)?;
    let spec = CampaignSpec {
        template,
        node_counts: args.nodes,
        modes: args.modes,
        seeds: parse_seeds(&args.seeds).map_err(config_err)?,
    };
    spec.cells().map_err(config_err)?;
    let (table, runs) = run_campaign(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let runs_dir = args.out.join("runs");
    fs::create_dir_all(&runs_dir)?;
    for r in &runs {
        let name = format!("n{}-{}-s{}.tsv", r.node_count, r.mode, r.seed);
        fs::write(runs_dir.join(name), r.to_text())?;
    }
    fs::write(args.out.join("table.tsv"), table.to_text())?;
    table.write_plots(&args.out.join("plots"))?;
    print!("{}", table.to_text());
    Ok(())
}

fn recount(args: RecountArgs) -> Result<()> {
    let trace = File::open(&args.trace)
        .with_context(|| format!("opening {}", args.trace.display()))
        .map_err(config_err)?;
    let counted = Recount::read(BufReader::new(trace)).context("reading trace").map_err(config_err)?;
    let text = fs::read_to_string(&args.results)
        .with_context(|| format!("reading {}", args.results.display()))
        .map_err(config_err)?;
    let record = ResultsRecord::parse(&text).map_err(|e| config_err(anyhow::anyhow!(e)))?;
    let diffs = diff_recount(&record, &counted).map_err(|e| config_err(anyhow::anyhow!(e)))?;
    if diffs.is_empty() {
        println!("recount matches: {} metrics", record.rows.len());
        Ok(())
    } else {
        for d in &diffs {
            eprintln!("mismatch: {d}");
        }
        bail!("{} metric(s) differ between trace and results", diffs.len())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Campaign(a) => campaign(a),
        Command::Recount(a) => recount(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigProblem>() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
