mod bench;
mod service_mode;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use flowfaas_core::adapter::{self, ActionClient, ActionServerConfig, InvokeOutcome};
use flowfaas_core::annotations;
use flowfaas_core::etl;
use flowfaas_core::flow::{self, FlowGraph};
use flowfaas_core::runtime::{HandlerRegistry, RuntimeConfig, RuntimeHandle};
use flowfaas_core::seqcomp;
use flowfaas_core::sim::{self, PoolConfig, Simulator};

const EXIT_DOMAIN: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "flowfaas", version, about = "Flow-based FaaS workflow engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a flow file; exit 0 iff deployable
    Validate { flow_file: PathBuf },
    /// Extract annotation triples, optionally embedding them in the flow
    Annotations {
        flow_file: PathBuf,
        /// Write the embedded annotated graph instead of the triple list
        #[arg(long)]
        embed: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile a linear flow into a sequence specification
    CompileSeq {
        flow_file: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "openwhisk")]
        target: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Drop debug/inject/http nodes instead of rejecting them
        #[arg(long)]
        strip_side_effects: bool,
    },
    /// Emit a deployable bundle directory for a flow
    Bundle {
        flow_file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a flow as a service (http-in routes) or as an action (/init,/run)
    Run(RunArgs),
    /// Simulator operations
    #[command(subcommand)]
    Sim(SimCommand),
    /// Benchmark experiments with CSV output
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Edge ETL operations
    #[command(subcommand)]
    Etl(EtlCommand),
}

#[derive(Args)]
struct RunArgs {
    flow_file: PathBuf,
    /// service | action; defaults to the flow's executorMode annotation
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 0)]
    port: u16,
    /// Entry node for action mode (default: the single source node)
    #[arg(long)]
    entry: Option<String>,
    /// Platform URL for action-invoke nodes (default: $FLOWFAAS_SIM_URL)
    #[arg(long)]
    sim_url: Option<String>,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Start the local FaaS platform simulator
    Start {
        #[arg(long, default_value_t = 7071)]
        port: u16,
        #[arg(long, default_value_t = 500)]
        cold_delay: u64,
        #[arg(long, default_value_t = 50)]
        jitter: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Queue up to N invocations at capacity instead of rejecting
        #[arg(long, default_value_t = 0)]
        queue: usize,
    },
    /// Register an action on a running simulator
    Deploy {
        name: String,
        #[arg(long)]
        handler: Option<String>,
        #[arg(long)]
        endpoint: Option<String>,
        /// Comma-separated component list for a sequence
        #[arg(long)]
        sequence: Option<String>,
        #[arg(long)]
        sim_url: Option<String>,
    },
    /// Invoke an action on a running simulator
    Invoke {
        name: String,
        #[arg(long, default_value = "{}")]
        params: String,
        #[arg(long)]
        non_blocking: bool,
        #[arg(long)]
        sim_url: Option<String>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Cold vs hot invocation latency against an auto-started simulator
    Coldhot {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 500)]
        cold_delay: u64,
        #[arg(long, default_value_t = 50)]
        jitter: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Store-and-forward no-loss experiment with a flaky sink
    Etl {
        /// Sink up-phase seconds
        #[arg(long, default_value_t = 5)]
        up: u64,
        /// Sink down-phase seconds
        #[arg(long, default_value_t = 3)]
        down: u64,
        /// Injection rate in items per second
        #[arg(long, default_value_t = 2.0)]
        rate: f64,
        /// Experiment duration seconds
        #[arg(long, default_value_t = 120)]
        duration: u64,
        #[arg(long, default_value_t = 6)]
        resubmit: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        spool: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EtlCommand {
    /// Run the store-and-forward ingest service (POST /ingest)
    Serve {
        #[arg(long)]
        sink_url: String,
        #[arg(long)]
        spool: PathBuf,
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value_t = 5)]
        retries: u32,
        #[arg(long, default_value_t = 6000)]
        interval_ms: u64,
        #[arg(long)]
        no_probe: bool,
    },
}

fn sim_url(flag: Option<String>) -> String {
    flag.or_else(|| std::env::var("FLOWFAAS_SIM_URL").ok())
        .unwrap_or_else(|| "http://127.0.0.1:7071".into())
}

fn load_flow(path: &PathBuf) -> Result<FlowGraph, u8> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return Err(EXIT_USAGE);
        }
    };
    match flow::parse_flow(&text) {
        Ok(graph) => Ok(graph),
        Err(e) => {
            eprintln!("parse failed: {e}");
            Err(EXIT_USAGE)
        }
    }
}

fn write_or_print(output: Option<&PathBuf>, content: &str) -> Result<(), u8> {
    match output {
        Some(path) => std::fs::write(path, content).map_err(|e| {
            eprintln!("cannot write {}: {e}", path.display());
            EXIT_DOMAIN
        }),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

async fn run(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Validate { flow_file } => cmd_validate(&flow_file),
        Command::Annotations {
            flow_file,
            embed,
            output,
        } => cmd_annotations(&flow_file, embed, output.as_ref()),
        Command::CompileSeq {
            flow_file,
            name,
            target,
            output,
            strip_side_effects,
        } => cmd_compile_seq(&flow_file, &name, &target, output.as_ref(), strip_side_effects),
        Command::Bundle { flow_file, output } => cmd_bundle(&flow_file, &output),
        Command::Run(args) => cmd_run(args).await,
        Command::Sim(command) => cmd_sim(command).await,
        Command::Bench(command) => cmd_bench(command).await,
        Command::Etl(command) => cmd_etl(command).await,
    }
}

fn cmd_validate(flow_file: &PathBuf) -> Result<(), u8> {
    let graph = load_flow(flow_file)?;
    let violations = flow::validate(&graph, &[]);
    for violation in &violations {
        println!("{violation}");
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(EXIT_DOMAIN)
    }
}

fn cmd_annotations(flow_file: &PathBuf, embed: bool, output: Option<&PathBuf>) -> Result<(), u8> {
    let graph = load_flow(flow_file)?;
    let (triples, warnings) = annotations::extract_node_annotations(&graph).map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;
    for warning in &warnings {
        eprintln!("warning: {} ({})", warning.detail, warning.subject);
    }
    if embed {
        let annotated = annotations::embed(&graph, &triples);
        write_or_print(output, &annotated.embedded)
    } else {
        let listing = serde_json::to_string_pretty(&triples).unwrap();
        write_or_print(output, &listing)
    }
}

fn cmd_compile_seq(
    flow_file: &PathBuf,
    name: &str,
    target: &str,
    output: Option<&PathBuf>,
    strip_side_effects: bool,
) -> Result<(), u8> {
    let graph = load_flow(flow_file)?;
    let expanded = flow::expand_subflows(&graph).map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;
    let (triples, _) = annotations::extract_node_annotations(&expanded).map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;
    let spec = seqcomp::compile_sequence(
        &expanded,
        name,
        &triples,
        seqcomp::CompileOptions { strip_side_effects },
    )
    .map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;
    match target {
        "openwhisk" => {
            let descriptor = json!({
                "name": spec.name,
                "kind": "sequence",
                "components": spec.components,
            });
            write_or_print(output, &serde_json::to_string_pretty(&descriptor).unwrap())
        }
        "portable" => write_or_print(output, &seqcomp::emit_portable(&spec)),
        other => {
            eprintln!("unknown target `{other}` (expected openwhisk|portable)");
            Err(EXIT_USAGE)
        }
    }
}

fn cmd_bundle(flow_file: &PathBuf, output: &PathBuf) -> Result<(), u8> {
    let graph = load_flow(flow_file)?;
    let violations = flow::validate(&graph, &[]);
    if !violations.is_empty() {
        for v in violations {
            eprintln!("{v}");
        }
        return Err(EXIT_DOMAIN);
    }
    let (triples, _) = annotations::extract_node_annotations(&graph).map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;
    let annotated = annotations::embed(&graph, &triples);
    let manifest = adapter::emit_bundle(&annotated, output).map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;
    println!("{}", serde_json::to_string_pretty(&manifest).unwrap());
    Ok(())
}

fn executor_mode_annotation(graph: &FlowGraph) -> Option<String> {
    let (triples, _) = annotations::extract_node_annotations(graph).ok()?;
    triples
        .iter()
        .find(|t| t.predicate == "executorMode")
        .map(|t| t.object.clone())
}

fn single_source(graph: &FlowGraph) -> Option<String> {
    let targets: std::collections::BTreeSet<&String> =
        graph.nodes.iter().flat_map(|n| n.all_targets()).collect();
    let sources: Vec<&str> = graph
        .nodes
        .iter()
        .filter(|n| n.node_type != "annotation" && !targets.contains(&n.id))
        .map(|n| n.id.as_str())
        .collect();
    match sources.as_slice() {
        [only] => Some((*only).to_string()),
        _ => None,
    }
}

async fn cmd_run(args: RunArgs) -> Result<(), u8> {
    let graph = load_flow(&args.flow_file)?;
    let violations = flow::validate(&graph, &[]);
    if !violations.is_empty() {
        for v in violations {
            eprintln!("{v}");
        }
        return Err(EXIT_DOMAIN);
    }
    let expanded = flow::expand_subflows(&graph).map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;

    // flag > annotation > default
    let mode = args
        .mode
        .clone()
        .or_else(|| executor_mode_annotation(&expanded))
        .unwrap_or_else(|| "service".into());

    let mut config = RuntimeConfig::default();
    if expanded.nodes.iter().any(|n| n.node_type == "action-invoke") {
        let url = sim_url(args.sim_url.clone());
        let client = ActionClient::new(&url).map_err(|e| {
            eprintln!("{e}");
            EXIT_DOMAIN
        })?;
        config.invoker = Some(Arc::new(client));
    }
    let handle =
        RuntimeHandle::start(expanded.clone(), HandlerRegistry::with_builtins(), config).map_err(
            |e| {
                eprintln!("{e}");
                EXIT_DOMAIN
            },
        )?;

    match mode.as_str() {
        "service" => {
            if handle.http_routes().is_empty() {
                eprintln!("warning: no http-in nodes; service mode has no routes");
                return Ok(());
            }
            service_mode::serve(handle, args.port).await.map_err(|e| {
                eprintln!("{e}");
                EXIT_DOMAIN
            })
        }
        "action" | "function" | "flow-function" => {
            let entry = args
                .entry
                .clone()
                .or_else(|| single_source(&expanded))
                .ok_or_else(|| {
                    eprintln!("cannot determine entry node; pass --entry");
                    EXIT_DOMAIN
                })?;
            let mut server_config = ActionServerConfig::new(handle, entry);
            server_config.port = args.port;
            let server = adapter::serve_action(server_config).await.map_err(|e| {
                eprintln!("{e}");
                EXIT_DOMAIN
            })?;
            println!("action server listening on {}", server.base_url());
            futures_wait_forever().await;
            Ok(())
        }
        other => {
            eprintln!("unknown mode `{other}` (expected service|action)");
            Err(EXIT_USAGE)
        }
    }
}

async fn futures_wait_forever() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn cmd_sim(command: SimCommand) -> Result<(), u8> {
    match command {
        SimCommand::Start {
            port,
            cold_delay,
            jitter,
            seed,
            queue,
        } => {
            let seed = seed.or_else(|| {
                std::env::var("FLOWFAAS_SEED")
                    .ok()
                    .and_then(|s| s.parse().ok())
            });
            let config = PoolConfig {
                cold_start_delay_ms: cold_delay,
                jitter_ms: jitter,
                queue_capacity: queue,
                seed,
                ..PoolConfig::default()
            };
            let simulator = Simulator::new(config);
            let (addr, task) = sim::serve(simulator, ([127, 0, 0, 1], port).into())
                .await
                .map_err(|e| {
                    eprintln!("bind failed: {e}");
                    EXIT_DOMAIN
                })?;
            println!("simulator listening on http://{addr}");
            let _ = task.await;
            Ok(())
        }
        SimCommand::Deploy {
            name,
            handler,
            endpoint,
            sequence,
            sim_url: url,
        } => {
            let client = client(url)?;
            let descriptor = match (handler, endpoint, sequence) {
                (Some(h), None, None) => {
                    json!({ "name": name, "kind": "builtinHandler", "handlerName": h })
                }
                (None, Some(e), None) => {
                    json!({ "name": name, "kind": "protocolEndpoint", "endpointUrl": e })
                }
                (None, None, Some(s)) => {
                    let components: Vec<&str> = s.split(',').filter(|c| !c.is_empty()).collect();
                    json!({ "name": name, "kind": "sequence", "components": components })
                }
                _ => {
                    eprintln!("pass exactly one of --handler, --endpoint, --sequence");
                    return Err(EXIT_USAGE);
                }
            };
            client.register(&descriptor).await.map_err(|e| {
                eprintln!("{e}");
                EXIT_DOMAIN
            })?;
            println!("registered `{name}`");
            Ok(())
        }
        SimCommand::Invoke {
            name,
            params,
            non_blocking,
            sim_url: url,
        } => {
            let client = client(url)?;
            let params: Value = serde_json::from_str(&params).map_err(|e| {
                eprintln!("--params is not JSON: {e}");
                EXIT_USAGE
            })?;
            let outcome = client.invoke(&name, params, !non_blocking).await.map_err(|e| {
                eprintln!("{e}");
                EXIT_DOMAIN
            })?;
            match outcome {
                InvokeOutcome::Activation(a) => {
                    println!("{}", serde_json::to_string_pretty(&a).unwrap())
                }
                InvokeOutcome::ActivationId(id) => println!("{id}"),
            }
            Ok(())
        }
    }
}

fn client(url: Option<String>) -> Result<ActionClient, u8> {
    ActionClient::new(sim_url(url)).map_err(|e| {
        eprintln!("{e}");
        EXIT_USAGE
    })
}

async fn cmd_bench(command: BenchCommand) -> Result<(), u8> {
    match command {
        BenchCommand::Coldhot {
            runs,
            cold_delay,
            jitter,
            output,
            seed,
        } => bench::coldhot(runs, cold_delay, jitter, seed, output.as_ref()).await,
        BenchCommand::Etl {
            up,
            down,
            rate,
            duration,
            resubmit,
            output,
            spool,
        } => {
            if rate <= 0.0 {
                eprintln!("--rate must be > 0");
                return Err(EXIT_USAGE);
            }
            bench::etl(up, down, rate, duration, resubmit, output.as_ref(), spool).await
        }
    }
}

async fn cmd_etl(command: EtlCommand) -> Result<(), u8> {
    match command {
        EtlCommand::Serve {
            sink_url,
            spool,
            port,
            retries,
            interval_ms,
            no_probe,
        } => {
            let mut config = etl::EtlConfig::new(sink_url, spool);
            config.max_immediate_retries = retries;
            config.resubmit_interval_ms = interval_ms;
            config.probe_before_drain = !no_probe;
            let service = etl::EtlService::new(config).map_err(|e| {
                eprintln!("{e}");
                EXIT_DOMAIN
            })?;
            let server = etl::serve_ingest(service, port).await.map_err(|e| {
                eprintln!("{e}");
                EXIT_DOMAIN
            })?;
            println!("ingest listening on {}", server.base_url());
            futures_wait_forever().await;
            server.stop().await;
            Ok(())
        }
    }
}
