//! `tagatar` command-line interface.
//!
//! [`run`] takes the argument vector and output streams and returns the
//! process exit code, so the whole CLI can be driven from tests.

mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use tagatar_core::matcher::{best_match, load_assets, top_k, TagQuery};
use tagatar_core::schema::{bundled_default_schema, load_schema, validate_schema};
use tagatar_core::session::{
    aggregate_labels, export_labels, filter_manifest, read_manifest_csv, read_records_csv,
    sample_batch, write_manifest_csv, NewSession,
};
use tagatar_core::{
    evaluate, load_predictions, EvalError, MatchError, SchemaError, SessionError, SessionStore,
    TagSchema,
};
use tagatar_server::ServerConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IO: i32 = 2;

pub const STORE_ENV: &str = "TAGATAR_STORE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "tagatar", version, about = "Tag-based face annotation toolkit")]
struct Cli {
    /// Tag schema document (bundled nose/eyes/eyebrows schema when omitted)
    #[arg(long, global = true, value_name = "PATH")]
    schema: Option<PathBuf>,
    /// Session store directory
    #[arg(long, global = true, value_name = "DIR", env = STORE_ENV)]
    store: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Schema checks
    #[command(subcommand)]
    Schema(SchemaCommand),
    /// Image manifest tools
    #[command(subcommand)]
    Manifest(ManifestCommand),
    /// Annotation sessions
    #[command(subcommand)]
    Session(SessionCommand),
    /// Annotation record import
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Training label export
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Rank avatar assets against a tag set
    Match(MatchArgs),
    /// Score a predictions CSV against its gold labels
    Eval(EvalArgs),
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum SchemaCommand {
    /// Validate a schema document (defaults to --schema, then the bundled schema)
    Validate { file: Option<PathBuf> },
}

#[derive(Debug, Subcommand)]
enum ManifestCommand {
    /// Keep entries whose detector confidence is at least the threshold
    Filter {
        manifest: PathBuf,
        #[arg(long, default_value_t = tagatar_core::session::DEFAULT_CONFIDENCE_THRESHOLD)]
        threshold: f64,
        /// Write the filtered manifest here instead of stdout
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum SessionCommand {
    /// Create a session from a seeded sample of a manifest
    New(NewSessionArgs),
    /// Agreement report for a session
    Report {
        #[arg(long)]
        id: String,
    },
    /// List sessions in the store
    List,
    /// Close a session to further annotation
    Close {
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Args)]
struct NewSessionArgs {
    /// Manifest whose entries form the sampling pool
    #[arg(long)]
    manifest: PathBuf,
    /// Batch size (whole pool when omitted)
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated annotator ids; empty admits any annotator
    #[arg(long, value_delimiter = ',')]
    annotators: Vec<String>,
    /// Session id (generated when omitted)
    #[arg(long)]
    id: Option<String>,
}

#[derive(Debug, Subcommand)]
enum AnnotateCommand {
    /// Import annotation records from CSV (all or nothing)
    Import { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum LabelsCommand {
    /// Aggregate sessions by plurality and write a label CSV
    Export {
        #[arg(long, short)]
        out: PathBuf,
        /// Sessions to aggregate (all when omitted)
        #[arg(long = "id")]
        ids: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    region: String,
    /// `category=option` pairs; categories may be given by alias
    #[arg(long)]
    tags: String,
    /// Asset database document
    #[arg(long)]
    assets: PathBuf,
    /// Return the top k (plus ties at the cut) instead of every asset
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    predictions: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = tagatar_core::session::DEFAULT_CONFIDENCE_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Shared token required in the x-tagatar-token header
    #[arg(long, env = "TAGATAR_TOKEN")]
    token: Option<String>,
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<SessionError> for Failure {
    fn from(err: SessionError) -> Self {
        match err {
            SessionError::Io(_) | SessionError::Locked(_) | SessionError::Corrupt { .. } => {
                Failure::io(err.to_string())
            }
            _ => Failure::input(err.to_string()),
        }
    }
}

impl From<SchemaError> for Failure {
    fn from(err: SchemaError) -> Self {
        Failure::input(format!("schema: {err}"))
    }
}

impl From<MatchError> for Failure {
    fn from(err: MatchError) -> Self {
        Failure::input(err.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::Io(_) => Failure::io(err.to_string()),
            _ => Failure::input(err.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::io(format!("write failed: {e}")))
}

struct Context<'a> {
    cli: &'a Cli,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Context<'_> {
    fn schema(&self) -> Result<TagSchema, Failure> {
        match &self.cli.schema {
            Some(path) => Ok(load_schema(&read_text(path)?)?),
            None => Ok(bundled_default_schema()),
        }
    }

    fn store(&self) -> Result<SessionStore, Failure> {
        let dir = self.cli.store.as_ref().ok_or_else(|| {
            Failure::input(format!("no store given: pass --store DIR or set {STORE_ENV}"))
        })?;
        Ok(SessionStore::open(dir)?)
    }

    fn json(&self) -> bool {
        self.cli.format == Format::Json
    }

    fn warn(&mut self, message: &str) {
        let _ = writeln!(self.err, "warning: {message}");
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_INPUT
                }
            };
        }
    };
    let mut ctx = Context {
        cli: &cli,
        out,
        err,
    };
    match dispatch(&mut ctx) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(ctx.err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(ctx: &mut Context) -> Outcome {
    match &ctx.cli.command {
        Command::Schema(SchemaCommand::Validate { file }) => schema_validate(ctx, file.as_deref()),
        Command::Manifest(ManifestCommand::Filter {
            manifest,
            threshold,
            out,
        }) => manifest_filter(ctx, manifest, *threshold, out.as_deref()),
        Command::Session(SessionCommand::New(args)) => session_new(ctx, args),
        Command::Session(SessionCommand::Report { id }) => session_report(ctx, id),
        Command::Session(SessionCommand::List) => session_list(ctx),
        Command::Session(SessionCommand::Close { id }) => session_close(ctx, id),
        Command::Annotate(AnnotateCommand::Import { file }) => annotate_import(ctx, file),
        Command::Labels(LabelsCommand::Export { out, ids }) => labels_export(ctx, out, ids),
        Command::Match(args) => match_assets(ctx, args),
        Command::Eval(args) => eval(ctx, &args.predictions),
        Command::Serve(args) => serve(ctx, args),
    }
}

fn schema_validate(ctx: &mut Context, file: Option<&Path>) -> Outcome {
    let text = match file.or(ctx.cli.schema.as_deref()) {
        Some(path) => read_text(path)?,
        None => tagatar_core::schema::bundled_schema_text().to_string(),
    };
    let report = match load_schema(&text) {
        Ok(schema) => validate_schema(&schema),
        Err(SchemaError::Invalid(report)) => report,
        Err(e) => return Err(e.into()),
    };
    let text = if ctx.json() {
        output::to_json(&report)
    } else {
        output::validation_table(&report)
    };
    emit(ctx.out, &text)?;
    if report.ok {
        Ok(())
    } else {
        Err(Failure::input("schema is invalid"))
    }
}

fn manifest_filter(ctx: &mut Context, path: &Path, threshold: f64, dest: Option<&Path>) -> Outcome {
    let entries = read_manifest_csv(open(path)?)?;
    let kept = filter_manifest(&entries, threshold)?;
    let summary = output::FilterSummary {
        total: entries.len(),
        kept: kept.len(),
        threshold,
    };
    match dest {
        Some(dest) => {
            let file = File::create(dest)
                .map_err(|e| Failure::io(format!("{}: {e}", dest.display())))?;
            write_manifest_csv(file, &kept)?;
            let text = if ctx.json() {
                output::to_json(&summary)
            } else {
                summary.line()
            };
            emit(ctx.out, &text)
        }
        None => {
            let mut buf = Vec::new();
            write_manifest_csv(&mut buf, &kept)?;
            ctx.out
                .write_all(&buf)
                .map_err(|e| Failure::io(format!("write failed: {e}")))?;
            let _ = write!(ctx.err, "{}", summary.line());
            Ok(())
        }
    }
}

fn session_new(ctx: &mut Context, args: &NewSessionArgs) -> Outcome {
    let schema = ctx.schema()?;
    let entries = read_manifest_csv(open(&args.manifest)?)?;
    let pool: Vec<String> = entries.iter().map(|e| e.image_id.clone()).collect();
    let batch = sample_batch(&pool, args.size.unwrap_or(pool.len()), args.seed)?;
    let image_paths = entries
        .iter()
        .filter(|e| batch.contains(&e.image_id))
        .map(|e| (e.image_id.clone(), e.path.clone()))
        .collect();
    let store = ctx.store()?;
    let created = store.create_session(
        &schema,
        NewSession {
            session_id: args.id.clone(),
            batch,
            annotators: args.annotators.clone(),
            seed: args.seed,
            image_paths,
        },
    )?;
    for w in &created.warnings {
        ctx.warn(w);
    }
    let text = if ctx.json() {
        output::to_json(&created)
    } else {
        output::session_line(&created.session)
    };
    emit(ctx.out, &text)
}

fn session_report(ctx: &mut Context, id: &str) -> Outcome {
    let report = ctx.store()?.report(id)?;
    let text = if ctx.json() {
        report.to_json()
    } else {
        output::report_table(&report)
    };
    emit(ctx.out, &text)
}

fn session_list(ctx: &mut Context) -> Outcome {
    let sessions = ctx.store()?.sessions();
    let text = if ctx.json() {
        output::to_json(&sessions)
    } else {
        output::sessions_table(&sessions)
    };
    emit(ctx.out, &text)
}

fn session_close(ctx: &mut Context, id: &str) -> Outcome {
    let session = ctx.store()?.close_session(id)?;
    let text = if ctx.json() {
        output::to_json(&session)
    } else {
        output::session_line(&session)
    };
    emit(ctx.out, &text)
}

fn annotate_import(ctx: &mut Context, file: &Path) -> Outcome {
    let records = read_records_csv(open(file)?)?;
    if records.is_empty() {
        return Err(Failure::input(format!("{}: no records", file.display())));
    }
    let summary = ctx.store()?.import_records(records)?;
    let text = if ctx.json() {
        output::to_json(&summary)
    } else {
        format!(
            "imported {} records ({} replaced) into {}\n",
            summary.records,
            summary.replaced,
            summary.sessions.join(", ")
        )
    };
    emit(ctx.out, &text)
}

fn labels_export(ctx: &mut Context, dest: &Path, ids: &[String]) -> Outcome {
    let store = ctx.store()?;
    let ids: Vec<String> = if ids.is_empty() {
        store.sessions().into_iter().map(|s| s.session_id).collect()
    } else {
        ids.to_vec()
    };
    let mut sessions = Vec::new();
    for id in &ids {
        sessions.push((store.session(id)?, store.records(id)?));
    }
    let labels = aggregate_labels(&sessions)?;
    let summary = export_labels(&labels, dest)?;
    let text = if ctx.json() {
        output::to_json(&summary)
    } else {
        format!(
            "wrote {} labels to {} ({} unresolved, summary {})\n",
            summary.rows,
            dest.display(),
            summary.unresolved,
            summary.summary_path.display()
        )
    };
    emit(ctx.out, &text)
}

fn match_assets(ctx: &mut Context, args: &MatchArgs) -> Outcome {
    let schema = ctx.schema()?;
    let assets = load_assets(&read_text(&args.assets)?, &schema)?;
    let query = TagQuery::parse_pairs(&args.region, &args.tags)
        .map_err(Failure::input)?
        .resolve(&schema)?;
    let assets: Vec<_> = assets
        .into_iter()
        .filter(|a| a.region_id == query.region_id)
        .collect();
    let result = match args.k {
        Some(k) => top_k(&schema, &query, &assets, k)?,
        None => best_match(&schema, &query, &assets)?,
    };
    let text = if ctx.json() {
        output::to_json(&result)
    } else {
        output::match_table(&result)
    };
    emit(ctx.out, &text)
}

fn eval(ctx: &mut Context, path: &Path) -> Outcome {
    let schema = ctx.schema()?;
    let records = load_predictions(open(path)?, &schema)?;
    let report = evaluate(&records, &schema)?;
    let text = if ctx.json() {
        report.to_json()
    } else {
        output::eval_table(&report)
    };
    emit(ctx.out, &text)
}

fn serve(ctx: &mut Context, args: &ServeArgs) -> Outcome {
    let store_dir = ctx.cli.store.clone().ok_or_else(|| {
        Failure::input(format!("no store given: pass --store DIR or set {STORE_ENV}"))
    })?;
    let config = ServerConfig {
        bind: args.bind,
        store_dir,
        schema_path: ctx.cli.schema.clone(),
        assets_path: args.assets.clone(),
        manifest_path: args.manifest.clone(),
        threshold: args.threshold,
        images_dir: args.images.clone(),
        reference_dir: args.reference.clone(),
        token: args.token.clone(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::io(e.to_string()))?;
    let _ = writeln!(ctx.err, "listening on http://{}", args.bind);
    runtime
        .block_on(tagatar_server::serve(config, tagatar_server::shutdown_signal()))
        .map_err(|e| match e {
            tagatar_server::StartupError::Store(s) => Failure::from(s),
            tagatar_server::StartupError::Read { .. } | tagatar_server::StartupError::Bind { .. } => {
                Failure::io(e.to_string())
            }
            other => Failure::input(other.to_string()),
        })
}
