//! `govkit`: issue agent certificates, verify access, keep and audit the
//! interaction ledger, replay-verify outputs and run the simulator.
//!
//! Exit status: 0 success, 1 denial or detection, 2 usage or I/O error.

mod commands;
mod support;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use support::render;

#[derive(Parser)]
#[command(name = "govkit", version, about = "Agent certificates, access verification and interaction ledgers")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Current time in epoch milliseconds (defaults to the system clock).
    #[arg(long, global = true, value_name = "EPOCH_MS")]
    now: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an Ed25519 key pair.
    Keygen {
        /// Derive the key from this seed instead of OS entropy.
        #[arg(long)]
        seed: Option<String>,
        /// Key file to write (default: $GOVKIT_HOME/keys/<id>.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
    },
    #[command(subcommand)]
    Cert(CertCommand),
    /// Evaluate an access request against a certificate chain.
    Verify {
        /// Certificate files, root first. A file may hold several.
        #[arg(long, num_args = 1.., required = true)]
        chain: Vec<PathBuf>,
        /// Skills manifest the agent is running with.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        credential_tier: String,
        #[arg(long, default_value = "credential")]
        credential_id: String,
        /// Trusted root certificates (default: $GOVKIT_HOME/roots.pem).
        #[arg(long)]
        roots: Option<PathBuf>,
        /// Revocation registry (default: $GOVKIT_HOME/revocations.jsonl).
        #[arg(long)]
        revocations: Option<PathBuf>,
        /// Model binding the agent is running, as JSON.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    #[command(subcommand)]
    Ledger(LedgerCommand),
    /// Re-execute a recorded interaction with the certified model.
    ReplayVerify {
        /// Receiver certificate.
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long)]
        seq: u64,
        /// Disclosed input bytes.
        #[arg(long)]
        input: PathBuf,
        /// Disclosed original output.
        #[arg(long)]
        output: PathBuf,
    },
    /// Relate verification budget, confidence and divergence bound.
    Budget(BudgetArgs),
    /// Pick per-metric thresholds from labelled output pairs.
    Calibrate {
        /// JSONL of {text_a, text_b, label}.
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Chain verifiability depth, and auditability depth given a ledger.
    Cvd {
        #[arg(long, num_args = 1.., required = true)]
        chain: Vec<PathBuf>,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Run the simulated multi-agent pipeline.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum CertCommand {
    /// Issue a certificate; self-signed with --root.
    Issue {
        /// Subject fields as JSON.
        #[arg(long)]
        subject: PathBuf,
        /// Subject's key file; supplies the public key when the subject
        /// JSON has none.
        #[arg(long)]
        subject_key: Option<PathBuf>,
        /// Manifest whose hash is bound into the certificate.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, required_unless_present = "root")]
        issuer_cert: Option<PathBuf>,
        #[arg(long)]
        issuer_key: PathBuf,
        #[arg(long)]
        root: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode and summarise certificate files.
    Inspect {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Canonical hash of a skills manifest.
    ManifestHash { manifest: PathBuf },
    /// Append a revocation to the registry.
    Revoke {
        #[arg(long)]
        id: String,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Sign and append one interaction record.
    Append {
        /// Ledger file (default: $GOVKIT_HOME/ledger.bin).
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Record draft as JSON.
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        sender_key: PathBuf,
        #[arg(long)]
        receiver_key: PathBuf,
    },
    /// Check sequence, hash chain and both signatures of every record.
    Audit {
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        keys: KeySource,
    },
    /// Write records as JSON lines.
    Export {
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a run, tamper with one stored record and audit again.
    TamperDemo {
        #[arg(long, default_value_t = 5)]
        agents: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record to tamper with (default: the middle one).
        #[arg(long)]
        seq: Option<u64>,
        #[arg(long, value_enum, default_value_t = TamperMode::Edit)]
        mode: TamperMode,
        /// Directory for the clean and tampered ledger files.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct KeySource {
    /// JSON object mapping agent id to hex public key.
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Certificate files whose subjects supply the keys.
    #[arg(long, num_args = 1..)]
    certs: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TamperMode {
    /// Edit the output commitment in place.
    Edit,
    /// Edit, then re-sign as the sender only.
    ResignSender,
    /// Edit, then re-sign with both parties' keys.
    ResignBoth,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct BudgetTarget {
    /// Number of passed replay trials.
    #[arg(long)]
    n: Option<u64>,
    /// Target divergence bound.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct BudgetArgs {
    #[command(flatten)]
    target: BudgetTarget,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 5)]
    agents: usize,
    /// Scenario to inject, S1..S9 or E2E-1..E2E-7.
    #[arg(long)]
    attack: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// none, auth-only, trace-only or full.
    #[arg(long, default_value = "full")]
    mode: String,
    /// Run every end-to-end scenario under each governance mode.
    #[arg(long, conflicts_with_all = ["attack", "overhead"])]
    baseline: bool,
    /// Measure governance cost at 5, 10 and 20 agents.
    #[arg(long, conflicts_with = "attack")]
    overhead: bool,
    #[arg(long, default_value_t = 20)]
    repetitions: usize,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command, cli.now) {
        Ok(out) => {
            let body = if cli.json {
                serde_json::to_string_pretty(&out.payload).expect("values serialize")
            } else {
                out.text.clone().unwrap_or_else(|| render(&out.payload))
            };
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout().lock(), "{body}");
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("govkit: {}", e.0);
            ExitCode::from(2)
        }
    }
}
