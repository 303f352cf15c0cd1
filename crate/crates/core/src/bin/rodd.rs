use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rodd::baselines::{self, RaParams};
use rodd::geometry::{generate_network, mean_neighbor_count};
use rodd::harness::{self, Axis, AxisKind, DecoderConfig, Level, NetworkSpec, ResultRow, Scheme, SweepConfig};
use rodd::phy::InterferenceMode;
use rodd::Result;

#[derive(Parser)]
#[command(name = "rodd", version, about = "RODD mutual broadcast and random-access baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo miss probability of one scheme at one operating point.
    Sim {
        scheme: SimScheme,
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Decoder iterations (rodd only).
        #[arg(long, default_value_t = 20)]
        iterations: usize,
    },
    /// Analytic lower bound on the miss probability of ALOHA or CSMA.
    Bound {
        scheme: BoundScheme,
        #[command(flatten)]
        point: PointArgs,
        /// Symbol budgets to evaluate, comma separated (overrides --frame-len).
        #[arg(long, value_delimiter = ',')]
        budget: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a JSON sweep configuration.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Writes one network realization as text.
    Network {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SimScheme {
    Rodd,
    Aloha,
    Csma,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundScheme {
    Aloha,
    Csma,
}

#[derive(Args)]
struct PointArgs {
    /// Nodes placed uniformly in the square.
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 500.0)]
    side: f64,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    /// Neighbor gain threshold (linear or dB, e.g. -60dB).
    #[arg(long, default_value = "1e-6", allow_hyphen_values = true)]
    theta: Level,
    /// Per-slot SNR (linear or dB, e.g. 60dB).
    #[arg(long, default_value = "60dB", allow_hyphen_values = true)]
    snr: Level,
    #[arg(long, default_value_t = 5)]
    message_bits: u32,
    /// RODD frame length; also the random-access symbol budget.
    #[arg(long, default_value_t = 300)]
    frame_len: usize,
    /// SINR threshold (linear or dB).
    #[arg(long, default_value = "3.5", allow_hyphen_values = true)]
    delta: Level,
    /// RODD on-probability / ALOHA transmit probability [default: 1/(c+1)].
    #[arg(long)]
    prob: Option<f64>,
    /// Random-access packet bits [default: l + ceil(log2 c)].
    #[arg(long)]
    packet_bits: Option<u32>,
}

impl PointArgs {
    fn network(&self) -> NetworkSpec {
        NetworkSpec {
            nodes: Some(self.nodes),
            intensity: None,
            side: self.side,
            path_loss_exponent: self.alpha,
            gain_threshold: self.theta.0,
            snr: self.snr,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Network realizations per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    workers: Option<usize>,
    /// Treatment of non-neighbor interference.
    #[arg(long)]
    mode: Option<InterferenceMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score only receivers this far from the edge.
    #[arg(long)]
    margin: Option<f64>,
    /// Score a random subset of receivers per network.
    #[arg(long)]
    receivers: Option<usize>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut SweepConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(m) = self.mode {
            cfg.interference = m;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        if let Some(m) = self.margin {
            cfg.boundary_margin = m;
        }
        if let Some(r) = self.receivers {
            cfg.receivers_per_network = Some(r);
        }
    }
}

fn emit_rows(rows: &[ResultRow], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => harness::emit_csv(rows, path),
        None => harness::write_csv(rows, std::io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim {
            scheme,
            point,
            run,
            iterations,
        } => {
            let scheme = match scheme {
                SimScheme::Rodd => Scheme::Rodd,
                SimScheme::Aloha => Scheme::AlohaMc,
                SimScheme::Csma => Scheme::CsmaMc,
            };
            let mut cfg = SweepConfig {
                experiment: format!("sim-{scheme}"),
                network: point.network(),
                message_bits: point.message_bits,
                frame_len: None,
                on_prob: point.prob,
                transmit_prob: point.prob,
                packet_bits: point.packet_bits,
                sinr_threshold: point.delta,
                axis: Axis {
                    name: AxisKind::FrameLen,
                    values: vec![Level(point.frame_len as f64)],
                },
                schemes: vec![scheme],
                trials: 1,
                seed: 0,
                output: None,
                boundary_margin: 0.0,
                receivers_per_network: None,
                interference: InterferenceMode::default(),
                decoder: DecoderConfig {
                    iterations,
                    ..DecoderConfig::default()
                },
                timing: true,
            };
            run.apply(&mut cfg);
            let rows = harness::run_sweep(&cfg, run.workers)?;
            emit_rows(&rows, cfg.output.as_ref())
        }
        Command::Bound {
            scheme,
            point,
            budget,
            out,
        } => {
            let network = point.network().params()?;
            let c = mean_neighbor_count(&network);
            let budgets = if budget.is_empty() { vec![point.frame_len as f64] } else { budget };
            let mut text = Vec::new();
            {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(&mut text);
                w.write_record([
                    "scheme",
                    "nodes",
                    "alpha",
                    "theta",
                    "snr",
                    "message_bits",
                    "packet_bits",
                    "sinr_threshold",
                    "transmit_prob",
                    "budget",
                    "bound",
                ])?;
                for b in budgets {
                    let ra = RaParams {
                        network,
                        packet_bits: point
                            .packet_bits
                            .unwrap_or_else(|| RaParams::default_packet_bits(&network, point.message_bits)),
                        message_bits: point.message_bits,
                        sinr_threshold: point.delta.0,
                        transmit_prob: point.prob.unwrap_or(1.0 / (c + 1.0)),
                        budget: b,
                    };
                    let (name, bound) = match scheme {
                        BoundScheme::Aloha => ("aloha_bound", baselines::aloha_error_lower_bound(&ra)?),
                        BoundScheme::Csma => ("csma_bound", baselines::csma_error_lower_bound(&ra)?),
                    };
                    w.write_record([
                        name.to_string(),
                        point.nodes.to_string(),
                        network.path_loss_exponent.to_string(),
                        network.gain_threshold.to_string(),
                        network.snr.to_string(),
                        ra.message_bits.to_string(),
                        ra.packet_bits.to_string(),
                        ra.sinr_threshold.to_string(),
                        ra.transmit_prob.to_string(),
                        b.to_string(),
                        bound.to_string(),
                    ])?;
                }
                w.flush().map_err(|e| rodd::Error::io("<csv>", e))?;
            }
            write_out(&text, out.as_ref())
        }
        Command::Sweep { config, run } => {
            let mut cfg = SweepConfig::load(&config)?;
            run.apply(&mut cfg);
            let rows = harness::run_sweep(&cfg, run.workers)?;
            emit_rows(&rows, cfg.output.as_ref())
        }
        Command::Network { point, seed, out } => {
            let net = generate_network(&point.network().params()?, seed)?;
            let mut text = Vec::new();
            net.write_text(&mut text).map_err(|e| rodd::Error::io("<network>", e))?;
            write_out(&text, out.as_ref())
        }
    }
}

fn write_out(bytes: &[u8], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| rodd::Error::io(path, e)),
        None => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| rodd::Error::io("<stdout>", e)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rodd: {e}");
            ExitCode::FAILURE
        }
    }
}
