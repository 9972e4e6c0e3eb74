use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use indoor_mimo::config::{parse_config, RunConfig};
use indoor_mimo::geometry::{build_topology_with, TopologyKind};
use indoor_mimo::montecarlo::{run_power_campaign, run_rate_campaign};
use indoor_mimo::output::{render_csv, DiscardRecord, Manifest, OutputDir};
use indoor_mimo::Error;

#[derive(Parser)]
#[command(
    name = "indoor-mimo",
    version,
    about = "Indoor line-of-sight massive MIMO simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rectangular patch dimensions and gain normalization.
    DesignPatch {
        #[command(flatten)]
        common: Common,
    },
    /// Antenna positions and orientations of one deployment.
    DumpTopology {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "kind", default_value = "single-strip-1wall")]
        topology: TopologyKind,
    },
    /// Distribution of the downlink power needed to reach the rate target.
    PowerCcdf {
        #[command(flatten)]
        common: Common,
        /// Deployment name or `all`.
        #[arg(long, default_value = "all")]
        topology: TopologyArg,
        /// Uplink pilot power in dBm.
        #[arg(long, allow_hyphen_values = true)]
        rho_ul_dbm: Option<f64>,
    },
    /// Percentile rate over a grid of uplink and downlink powers.
    RateMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        topology: Option<TopologyKind>,
        /// Comma-separated uplink powers in dBm.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rho_ul_dbm: Option<Vec<f64>>,
        /// Comma-separated downlink powers in dBm.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rho_dl_dbm: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum TopologyArg {
    All,
    One(TopologyKind),
}

impl std::str::FromStr for TopologyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            Ok(TopologyArg::All)
        } else {
            s.parse::<TopologyKind>()
                .map(TopologyArg::One)
                .map_err(|e| e.to_string())
        }
    }
}

/// An error with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            e if e.is_config() || matches!(e, Error::Infeasible(_)) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?,
        None => String::new(),
    };
    let mut config = parse_config(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(n) = common.drops {
        config.drops.n_drops = n;
    }
    if let Some(t) = common.threads {
        config.threads = Some(t);
    }
    Ok(config)
}

/// Validates after command-line overrides and reports warnings.
fn finalize(config: RunConfig) -> Result<RunConfig, Failure> {
    config.validate()?;
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(config)
}

fn open_out(common: &Common) -> Result<OutputDir, Failure> {
    let root = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"));
    OutputDir::create(&root).map_err(|e| io_failure(&root, e))
}

fn write(out: &mut OutputDir, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    out.write(name, bytes)
        .map(|_| ())
        .map_err(|e| io_failure(&out.path().join(name), e))
}

fn finish(out: OutputDir, manifest: Manifest) -> Result<(), Failure> {
    let root = out.path().to_path_buf();
    let path = out.finish(manifest).map_err(|e| io_failure(&root, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::DesignPatch { common } => design_patch(&common),
        Command::DumpTopology { common, topology } => dump_topology(&common, topology),
        Command::PowerCcdf {
            common,
            topology,
            rho_ul_dbm,
        } => power_ccdf(&common, topology, rho_ul_dbm),
        Command::RateMap {
            common,
            topology,
            rho_ul_dbm,
            rho_dl_dbm,
        } => rate_map(&common, topology, rho_ul_dbm, rho_dl_dbm),
    }
}

fn design_patch(common: &Common) -> Result<(), Failure> {
    let config = finalize(load(common)?)?;
    let d = config.element()?;
    println!("W        = {:.6} mm", d.width * 1e3);
    println!("L        = {:.6} mm", d.length * 1e3);
    println!("eps_reff = {:.6}", d.eps_reff);
    println!("delta_L  = {:.6} mm", d.delta_l * 1e3);
    println!("alpha^2  = {:.6}", d.alpha_squared());
    let csv = render_csv(|w| {
        use std::io::Write;
        writeln!(w, "width_m,length_m,eps_reff,delta_l_m,alpha_squared")?;
        writeln!(
            w,
            "{:.9e},{:.9e},{:.9},{:.9e},{:.9}",
            d.width,
            d.length,
            d.eps_reff,
            d.delta_l,
            d.alpha_squared()
        )
    })?;
    print!("{}", String::from_utf8_lossy(&csv));
    if common.out.is_some() {
        let mut out = open_out(common)?;
        write(&mut out, "patch.csv", &csv)?;
        finish(out, Manifest::new("design-patch", &config)?)?;
    }
    Ok(())
}

fn dump_topology(common: &Common, kind: TopologyKind) -> Result<(), Failure> {
    let config = finalize(load(common)?)?;
    let t = build_topology_with(
        kind,
        &config.room,
        config.antennas,
        config.wavelength(),
        &config.candelabrum,
    )?;
    let csv = render_csv(|w| t.write_csv(w))?;
    let mut out = open_out(common)?;
    write(&mut out, &format!("topology_{kind}.csv"), &csv)?;
    finish(out, Manifest::new("dump-topology", &config)?)
}

fn power_ccdf(
    common: &Common,
    topology: TopologyArg,
    rho_ul_dbm: Option<f64>,
) -> Result<(), Failure> {
    let mut config = load(common)?;
    if let Some(p) = rho_ul_dbm {
        config.pilots.rho_ul_dbm = p;
    }
    let config = finalize(config)?;
    let kinds: Vec<TopologyKind> = match topology {
        TopologyArg::All => TopologyKind::ALL.to_vec(),
        TopologyArg::One(k) => vec![k],
    };
    let scenario = config.scenario()?;
    let campaign = config.power_campaign();
    let mut out = open_out(common)?;
    let mut manifest = Manifest::new("power-ccdf", &config)?;
    for kind in kinds {
        let start = Instant::now();
        let result = run_power_campaign(&scenario, kind, &campaign, config.execution())?;
        let (lo, hi) = result.median_ci95_dbm();
        eprintln!(
            "{kind}: median {:.2} dBm (95% CI {lo:.2} .. {hi:.2}), {} failed drops, {:.1} s",
            result.median_dbm(),
            result.failures,
            start.elapsed().as_secs_f64()
        );
        let csv = render_csv(|w| result.write_ccdf_csv(w))?;
        write(&mut out, &format!("ccdf_{kind}.csv"), &csv)?;
        manifest.discards.push(DiscardRecord {
            topology: kind.to_string(),
            failed_drops: result.failures,
            discarded_realizations: 0,
        });
    }
    finish(out, manifest)
}

fn rate_map(
    common: &Common,
    topology: Option<TopologyKind>,
    rho_ul_dbm: Option<Vec<f64>>,
    rho_dl_dbm: Option<Vec<f64>>,
) -> Result<(), Failure> {
    let mut config = load(common)?;
    if let Some(k) = topology {
        config.rate_map.topology = k;
    }
    if let Some(g) = rho_ul_dbm {
        config.rate_map.rho_ul_dbm = g;
    }
    if let Some(g) = rho_dl_dbm {
        config.rate_map.rho_dl_dbm = g;
    }
    let config = finalize(config)?;
    let kind = config.rate_map.topology;
    let start = Instant::now();
    let result = run_rate_campaign(
        &config.scenario()?,
        kind,
        &config.rate_campaign(),
        config.execution(),
    )?;
    eprintln!(
        "{kind}: {} failed drops, {} discarded realizations, {:.1} s",
        result.failures,
        result.discarded_realizations,
        start.elapsed().as_secs_f64()
    );
    let mut out = open_out(common)?;
    let csv = render_csv(|w| result.write_csv(w))?;
    write(&mut out, &format!("rate_{kind}.csv"), &csv)?;
    let mut manifest = Manifest::new("rate-map", &config)?;
    manifest.discards.push(DiscardRecord {
        topology: kind.to_string(),
        failed_drops: result.failures,
        discarded_realizations: result.discarded_realizations,
    });
    finish(out, manifest)
}
