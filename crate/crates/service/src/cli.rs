//! Command-line interface.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use hmdap_core::export::write_csv;
use hmdap_core::orchestrator::ParseOptions;
use hmdap_core::{CancelToken, Engine, EngineError, ErrorClass, Relation};

use crate::http::{router, AppState};
use crate::render::text_table;

#[derive(Debug, Parser)]
#[command(
    name = "hmdap",
    version,
    about = "Hybrid analytics engine: SQL, ML and graph workloads over CSV tables"
)]
pub struct Cli {
    /// Directory holding the catalog and statistics.
    #[arg(long, global = true, env = "HMDAP_DATA_DIR", default_value = ".")]
    pub data_dir: PathBuf,

    /// Worker threads (and concurrent pipeline jobs when serving).
    #[arg(long, global = true, default_value_t = default_workers())]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register a delimited file as a table.
    Load {
        name: String,
        path: PathBuf,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        /// The file has no header row; columns are named col0, col1, ...
        #[arg(long)]
        no_header: bool,
    },
    /// List registered tables.
    Tables,
    /// Collect optimizer statistics for a table.
    Analyze { table: String },
    /// Run a SQL query.
    Query {
        sql: String,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
        /// Print the logical, optimized and physical plans instead of running.
        #[arg(long)]
        explain: bool,
    },
    /// Run a pipeline described by an ML configuration and a database configuration.
    Run {
        #[arg(long)]
        ml_config: PathBuf,
        #[arg(long)]
        db_config: PathBuf,
        /// Also write the result as CSV to this file.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
        /// Skip unknown configuration elements with a warning instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Single-source shortest paths over an edge table.
    Paths {
        table: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
        #[arg(long)]
        weight: Option<String>,
        #[arg(long)]
        source: String,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
    },
    /// Connected components of an edge table, ignoring direction.
    Components {
        table: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let exit_code = if e.class() == ErrorClass::Internal {
            2
        } else {
            1
        };
        CliError {
            exit_code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    let exit_code = if e.kind() == std::io::ErrorKind::NotFound {
        1
    } else {
        2
    };
    CliError {
        exit_code,
        message: format!("{}: {e}", path.display()),
    }
}

fn print_relation(r: &Relation, format: OutputFormat, out: &mut impl Write) -> std::io::Result<()> {
    match format {
        OutputFormat::Table => out.write_all(text_table(r).as_bytes()),
        OutputFormat::Csv => write_csv(r, out),
        OutputFormat::Json => {
            let j = crate::render::relation_json(r);
            writeln!(out, "{}", serde_json::to_string_pretty(&j).expect("json"))
        }
    }
}

/// Runs `cli`, writing results to `out`.
pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    let engine = Engine::open(&cli.data_dir, cli.workers.max(1))?;
    let stdout_err = |e: std::io::Error| CliError {
        exit_code: 2,
        message: format!("write failed: {e}"),
    };
    match cli.command {
        Command::Load {
            name,
            path,
            delimiter,
            no_header,
        } => {
            let entry = engine.load_table(&name, &path, delimiter, !no_header)?;
            let cols: Vec<String> = entry
                .schema
                .columns()
                .iter()
                .map(|c| format!("{} {}", c.name, c.ty))
                .collect();
            writeln!(out, "loaded {} ({})", entry.table_name, cols.join(", "))
                .map_err(stdout_err)?;
        }
        Command::Tables => {
            for e in engine.list_tables() {
                let cols: Vec<String> = e
                    .schema
                    .columns()
                    .iter()
                    .map(|c| format!("{} {}", c.name, c.ty))
                    .collect();
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    e.table_name,
                    e.source_path.display(),
                    cols.join(", ")
                )
                .map_err(stdout_err)?;
            }
        }
        Command::Analyze { table } => {
            let ts = engine.analyze(&table)?;
            writeln!(out, "{table}: {} rows", ts.row_count).map_err(stdout_err)?;
        }
        Command::Query {
            sql,
            format,
            explain,
        } => {
            if explain {
                let x = engine.explain(&sql)?;
                writeln!(
                    out,
                    "== logical ==\n{}\n== optimized ==\n{}\n== physical ==\n{}",
                    x.logical, x.optimized, x.physical
                )
                .map_err(stdout_err)?;
            } else {
                let r = engine.query(&sql, &CancelToken::new())?;
                print_relation(&r, format, out).map_err(stdout_err)?;
            }
        }
        Command::Run {
            ml_config,
            db_config,
            output,
            format,
            lenient,
        } => {
            let ml_xml =
                std::fs::read_to_string(&ml_config).map_err(|e| io_error(&ml_config, e))?;
            let db_xml =
                std::fs::read_to_string(&db_config).map_err(|e| io_error(&db_config, e))?;
            let (cfg, db) =
                engine.parse_configs(&ml_xml, &db_xml, ParseOptions { strict: !lenient })?;
            let base = db_config
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default();
            let res = engine.run_pipeline(&cfg, &db, &base, &CancelToken::new())?;
            let branches: Vec<String> = res.branches_run.iter().map(|b| format!("{b:?}")).collect();
            log::info!("branches run: {}", branches.join(", "));
            for t in &res.timings {
                log::info!("stage {}: {:.3} ms", t.stage, t.ms);
            }
            if let Some(path) = output {
                let file = std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
                let mut w = std::io::BufWriter::new(file);
                write_csv(&res.result, &mut w).map_err(|e| io_error(&path, e))?;
                w.flush().map_err(|e| io_error(&path, e))?;
            }
            print_relation(&res.result, format, out).map_err(stdout_err)?;
        }
        Command::Paths {
            table,
            src,
            dst,
            weight,
            source,
            format,
        } => {
            let r = engine.shortest_paths(&table, &src, &dst, weight.as_deref(), &source)?;
            print_relation(&r, format, out).map_err(stdout_err)?;
        }
        Command::Components {
            table,
            src,
            dst,
            format,
        } => {
            let r = engine.connected_components(&table, &src, &dst)?;
            print_relation(&r, format, out).map_err(stdout_err)?;
        }
        Command::Serve { port, bind } => {
            let addr: SocketAddr = format!("{bind}:{port}").parse().map_err(|e| CliError {
                exit_code: 1,
                message: format!("bad bind address `{bind}:{port}`: {e}"),
            })?;
            serve(engine, addr)?;
        }
    }
    Ok(())
}

fn serve(engine: Engine, addr: SocketAddr) -> Result<(), CliError> {
    let internal = |m: String| CliError {
        exit_code: 2,
        message: m,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| internal(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let state = AppState::new(Arc::new(engine));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError {
                exit_code: 1,
                message: format!("cannot bind {addr}: {e}"),
            })?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| internal(format!("server: {e}")))
    })
}
