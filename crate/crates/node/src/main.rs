use std::io::{self, BufRead, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rpmesh_core::ar::{ARMessage, Action, FunctionRef, Profile};
use rpmesh_core::constants::{SpaceConfig, DEFAULT_DIMENSIONS, DEFAULT_ORDER};
use rpmesh_core::geo::GeoPoint;
use rpmesh_core::rp::{ClientCmd, ClientReply};
use rpmesh_node::client::{Client, ClientError};
use rpmesh_node::config::DaemonArgs;
use rpmesh_node::output::reply_lines;
use rpmesh_node::{daemon, EXIT_NETWORK, EXIT_OK, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "rpmesh", version, about = "Rendezvous-point mesh daemon and client")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a rendezvous point daemon.
    Run(DaemonArgs),
    /// Post a message with any action.
    Post {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        action: Action,
        #[command(flatten)]
        msg: MsgArgs,
    },
    /// Exact or wildcard query of stored data.
    Query {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        profile: String,
        #[command(flatten)]
        at: At,
    },
    /// Status of every rendezvous point responsible for a profile.
    Stats {
        #[command(flatten)]
        conn: Conn,
        #[arg(long, default_value = "*")]
        profile: String,
        #[command(flatten)]
        at: At,
    },
    /// Store a function under a profile.
    StoreFunction {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        profile: String,
        #[command(flatten)]
        function: FunctionArgs,
        #[command(flatten)]
        at: At,
    },
    /// Start the functions stored under a profile.
    StartFunction {
        #[command(flatten)]
        conn: Conn,
        #[command(flatten)]
        msg: MsgArgs,
    },
    /// Stop running functions matching a profile.
    StopFunction {
        #[command(flatten)]
        conn: Conn,
        #[command(flatten)]
        msg: MsgArgs,
    },
    /// Stream records to a peer's queue: one record per line of --file or
    /// standard input.
    Push {
        #[command(flatten)]
        conn: Conn,
        /// Receiving rendezvous point, HOST:PORT.
        #[arg(long)]
        peer: String,
        #[arg(long)]
        profile: String,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Read the next batch from a queue; the previous batch is committed.
    Pull {
        #[command(flatten)]
        conn: Conn,
        #[arg(long)]
        profile: String,
        #[arg(long, default_value = "default")]
        consumer: String,
        #[arg(long, default_value_t = 100)]
        max: u32,
        /// Read a remote queue instead of the daemon's own.
        #[arg(long)]
        peer: Option<String>,
    },
    /// Status of the connected daemon.
    Status {
        #[command(flatten)]
        conn: Conn,
    },
    /// Notifications received by the connected daemon.
    Notifications {
        #[command(flatten)]
        conn: Conn,
        #[arg(long, default_value_t = 0)]
        since: u64,
    },
    /// Print the digest that allow-lists a function.
    Digest {
        #[command(flatten)]
        function: FunctionArgs,
    },
}

#[derive(Args)]
struct Conn {
    /// Daemon to talk to, HOST:PORT.
    #[arg(long, env = "RPMESH_NODE", default_value = "127.0.0.1:7400")]
    node: String,
    #[arg(long, env = "RPMESH_D", default_value_t = DEFAULT_DIMENSIONS)]
    d: u32,
    #[arg(long, env = "RPMESH_B", default_value_t = DEFAULT_ORDER)]
    b: u32,
    /// Line-delimited key=value output.
    #[arg(long)]
    machine: bool,
    /// Seconds to wait for a reply.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

#[derive(Args)]
struct At {
    #[arg(long, allow_hyphen_values = true, requires = "lon")]
    lat: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "lat")]
    lon: Option<f64>,
}

#[derive(Args)]
struct MsgArgs {
    #[arg(long)]
    profile: String,
    /// Message data as text.
    #[arg(long, conflicts_with = "data_file")]
    data: Option<String>,
    #[arg(long)]
    data_file: Option<PathBuf>,
    #[command(flatten)]
    at: At,
}

#[derive(Args)]
struct FunctionArgs {
    #[arg(long)]
    name: String,
    /// Shell command line for the exec runtime.
    #[arg(long, conflicts_with = "file")]
    command: Option<String>,
    /// Function blob read from a file.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, default_value = "exec")]
    runtime: String,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Network(String),
    Remote(String),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Network(e.to_string())
    }
}

fn profile(s: &str) -> Result<Profile, Failure> {
    Profile::parse(s).map_err(|e| Failure::Usage(format!("bad profile {s:?}: {e}")))
}

impl At {
    fn point(&self) -> Result<Option<GeoPoint>, Failure> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).map(Some).map_err(Failure::Usage),
            _ => Ok(None),
        }
    }
}

impl MsgArgs {
    fn message(&self, action: Action) -> Result<ARMessage, Failure> {
        let mut m = ARMessage::new(profile(&self.profile)?, action);
        if let Some(d) = &self.data {
            m = m.with_data(d.as_bytes().to_vec());
        }
        if let Some(p) = &self.data_file {
            let d = std::fs::read(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            m = m.with_data(d);
        }
        if let Some(g) = self.at.point()? {
            m = m.with_location(g);
        }
        Ok(m)
    }
}

impl FunctionArgs {
    fn function(&self) -> Result<FunctionRef, Failure> {
        let blob = match (&self.command, &self.file) {
            (Some(c), _) => c.as_bytes().to_vec(),
            (None, Some(p)) => std::fs::read(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
            (None, None) => return Err(Failure::Usage("give --command or --file".into())),
        };
        Ok(FunctionRef::new(&self.name, blob, &self.runtime))
    }
}

fn call(conn: &Conn, cmd: ClientCmd) -> Result<(), Failure> {
    let space = SpaceConfig {
        dimensions: conn.d,
        order: conn.b,
    };
    let mut c = Client::connect(&conn.node, space, Duration::from_secs(conn.timeout))?;
    let reply = c.call(cmd)?;
    let mut out = io::stdout().lock();
    if let ClientReply::Error(e) = &reply {
        return Err(Failure::Remote(e.clone()));
    }
    for line in reply_lines(&reply, conn.machine) {
        let _ = writeln!(out, "{line}");
    }
    if let ClientReply::Receipt(r) = &reply {
        if let Some(e) = &r.error {
            return Err(Failure::Remote(e.clone()));
        }
    }
    Ok(())
}

fn records(file: &Option<PathBuf>) -> Result<Vec<Vec<u8>>, Failure> {
    let mut text = String::new();
    match file {
        Some(p) => {
            text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        }
        None => {
            io::stdin()
                .lock()
                .read_to_string(&mut text)
                .map_err(|e| Failure::Usage(format!("stdin: {e}")))?;
        }
    }
    Ok(text
        .as_bytes()
        .lines()
        .map_while(Result::ok)
        .filter(|l| !l.trim().is_empty())
        .map(String::into_bytes)
        .collect())
}

fn client(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run(_) => unreachable!("handled by main"),
        Cmd::Post { conn, action, msg } => {
            if action == Action::StoreFunction {
                return Err(Failure::Usage("use store-function to store a function".into()));
            }
            call(&conn, ClientCmd::Post(msg.message(action)?))
        }
        Cmd::Query { conn, profile: p, at } => call(
            &conn,
            ClientCmd::Query {
                profile: profile(&p)?,
                location: at.point()?,
            },
        ),
        Cmd::Stats { conn, profile: p, at } => {
            let mut m = ARMessage::new(profile(&p)?, Action::Statistics);
            if let Some(g) = at.point()? {
                m = m.with_location(g);
            }
            call(&conn, ClientCmd::Post(m))
        }
        Cmd::StoreFunction {
            conn,
            profile: p,
            function,
            at,
        } => {
            let mut m = ARMessage::new(profile(&p)?, Action::StoreFunction).with_topology(function.function()?);
            if let Some(g) = at.point()? {
                m = m.with_location(g);
            }
            call(&conn, ClientCmd::Post(m))
        }
        Cmd::StartFunction { conn, msg } => call(&conn, ClientCmd::Post(msg.message(Action::StartFunction)?)),
        Cmd::StopFunction { conn, msg } => call(&conn, ClientCmd::Post(msg.message(Action::StopFunction)?)),
        Cmd::Push {
            conn,
            peer,
            profile: p,
            file,
        } => {
            let profile = profile(&p)?;
            let records = records(&file)?;
            call(&conn, ClientCmd::Push { peer, profile, records })
        }
        Cmd::Pull {
            conn,
            profile: p,
            consumer,
            max,
            peer,
        } => call(
            &conn,
            ClientCmd::Pull {
                peer,
                profile: profile(&p)?,
                consumer,
                max,
            },
        ),
        Cmd::Status { conn } => call(&conn, ClientCmd::Status),
        Cmd::Notifications { conn, since } => call(&conn, ClientCmd::Notifications { since }),
        Cmd::Digest { function } => {
            println!("{}", function.function()?.digest_hex());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    if let Cmd::Run(args) = &cli.cmd {
        let cfg = match args.resolve() {
            Ok(c) => c,
            Err(e) => {
                eprintln!("rpmesh: {e}");
                return ExitCode::from(EXIT_USAGE as u8);
            }
        };
        let stop = Arc::new(AtomicBool::new(false));
        for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
            if let Err(e) = signal_hook::flag::register(sig, Arc::clone(&stop)) {
                eprintln!("rpmesh: cannot install signal handler: {e}");
                return ExitCode::from(EXIT_USAGE as u8);
            }
        }
        return match daemon::run(cfg, stop) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("rpmesh: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    match client(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) | Err(Failure::Remote(m)) => {
            eprintln!("rpmesh: {m}");
            ExitCode::from(EXIT_USAGE as u8)
        }
        Err(Failure::Network(m)) => {
            eprintln!("rpmesh: {m}");
            ExitCode::from(EXIT_NETWORK as u8)
        }
    }
}
