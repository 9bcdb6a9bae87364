use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use raf_core::augment::Strategy;
use raf_core::forecast::{ForecasterSpec, PipelineConfig, RafPipeline};
use raf_core::harness::{
    emit_trajectories, run_experiment, sweep_pool_size, DataSource, ExperimentConfig, ForecastArchive,
};
use raf_core::ingest::{self, DatumAdjustment, IngestConfig};
use raf_core::knowledge_base::{chronological_split, KnowledgeBase, TestSet};
use raf_core::retrieval::{Exclusion, RetrievalIndex, RetrieverKind};
use raf_core::series::MultivariateSeries;
use raf_core::synthetic;
use raf_core::{Error, Result};

const SWEEP_LEVELS: [f64; 5] = [0.0, 0.25, 0.45, 0.65, 0.85];

#[derive(Parser)]
#[command(name = "raf", version, about = "Retrieval-augmented forecasting experiments")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, env = "RAF_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForecasterKind {
    Persistence,
    Seasonal,
    Ar,
    External,
}

/// Flags that override the configuration file.
#[derive(Args, Default)]
struct Overrides {
    /// Read data from this CSV instead of the configured source.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true)]
    lookback: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// sim or mi; comma-separated for several.
    #[arg(long, global = true, value_delimiter = ',')]
    retriever: Option<Vec<RetrieverKind>>,
    /// a, b or c; comma-separated for several.
    #[arg(long, global = true, value_delimiter = ',')]
    strategy: Option<Vec<Strategy>>,
    #[arg(long = "top-k", global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true, value_enum)]
    forecaster: Option<ForecasterKind>,
    /// exec:COMMAND or http(s) URL of an external forecaster.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Seasonal-naive period in days.
    #[arg(long, global = true)]
    period: Option<usize>,
    /// AR order.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// AR ridge damping.
    #[arg(long, global = true)]
    ridge: Option<f64>,
    /// Context row limit of an external forecaster.
    #[arg(long = "max-rows", global = true)]
    max_rows: Option<usize>,
    /// Pool coverage as a fraction of the whole series; comma-separated for several.
    #[arg(long, global = true, value_delimiter = ',')]
    coverage: Option<Vec<f64>>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also report the forecaster without retrieval.
    #[arg(long, global = true)]
    baseline: bool,
}

#[derive(Args)]
struct QueryArgs {
    /// Lead time of the query (defaults to the first configured horizon).
    #[arg(long)]
    horizon: Option<usize>,
    /// Position in the test set.
    #[arg(long, conflicts_with = "date")]
    index: Option<usize>,
    /// Last observed day of the query lookback.
    #[arg(long)]
    date: Option<NaiveDate>,
    /// Load the knowledge base from a file written by `build-kb`.
    #[arg(long)]
    kb: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the seeded synthetic benchmark as CSV.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long = "data-seed")]
        data_seed: Option<u64>,
    },
    /// Load a CSV, apply datum adjustments, fill gaps and write the cleaned series.
    Ingest {
        /// NAME=OFFSET, repeatable.
        #[arg(long = "adjust", value_parser = parse_adjustment)]
        adjust: Vec<DatumAdjustment>,
        #[arg(long = "date-column")]
        date_column: Option<String>,
        #[arg(long = "date-format")]
        date_format: Option<String>,
        /// Defaults to OUT/clean.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the retrieval pool for one lead time and save it.
    BuildKb {
        #[arg(long)]
        horizon: Option<usize>,
        /// Defaults to OUT/kb_h{H}.rafkb.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Show the context set retrieved for one test query.
    Retrieve(QueryArgs),
    /// Forecast one test query.
    Forecast(QueryArgs),
    /// Evaluate the full grid and write report.csv and forecasts.json.
    Evaluate,
    /// MAE against retrieval pool size.
    SweepPool {
        /// Defaults to 0,0.25,0.45,0.65,0.85.
        #[arg(long, value_delimiter = ',')]
        coverages: Option<Vec<f64>>,
        #[arg(long = "no-plot")]
        no_plot: bool,
    },
    /// Extract one station's h-step-ahead forecasts from an archive.
    Trajectories {
        /// Defaults to OUT/forecasts.json.
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        station: String,
        #[arg(long)]
        horizon: usize,
        #[arg(long = "no-plot")]
        no_plot: bool,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn parse_adjustment(s: &str) -> std::result::Result<DatumAdjustment, String> {
    let (name, offset) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=OFFSET, got '{s}'"))?;
    let offset: f64 = offset.trim().parse().map_err(|e| format!("bad offset in '{s}': {e}"))?;
    Ok(DatumAdjustment::new(name.trim(), offset))
}

fn effective_config(path: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(csv) = &o.csv {
        match &mut cfg.data {
            DataSource::Csv(ingest) => ingest.csv_path = csv.clone(),
            other => *other = DataSource::Csv(IngestConfig::new(csv)),
        }
    }
    if let Some(v) = o.lookback {
        cfg.lookback = v;
    }
    if let Some(v) = &o.horizons {
        cfg.horizons = v.clone();
    }
    if let Some(v) = &o.retriever {
        cfg.retrievers = v.clone();
    }
    if let Some(v) = &o.strategy {
        cfg.strategies = v.clone();
    }
    if let Some(v) = o.top_k {
        cfg.k = v;
    }
    if let Some(v) = &o.coverage {
        cfg.coverages = Some(v.clone());
    }
    if let Some(v) = &o.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = o.workers {
        cfg.workers = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if o.baseline {
        cfg.include_baseline = true;
    }
    cfg.forecaster = override_forecaster(cfg.forecaster, o)?;
    cfg.validate()?;
    Ok(cfg)
}

fn override_forecaster(current: ForecasterSpec, o: &Overrides) -> Result<ForecasterSpec> {
    let mut spec = match (o.forecaster, current) {
        (None, spec) => spec,
        (Some(ForecasterKind::Persistence), _) => ForecasterSpec::Persistence,
        (Some(ForecasterKind::Seasonal), s @ ForecasterSpec::Seasonal { .. }) => s,
        (Some(ForecasterKind::Seasonal), _) => ForecasterSpec::Seasonal { period: 7 },
        (Some(ForecasterKind::Ar), s @ ForecasterSpec::Autoregressive { .. }) => s,
        (Some(ForecasterKind::Ar), _) => ForecasterSpec::default(),
        (Some(ForecasterKind::External), s @ ForecasterSpec::External { .. }) => s,
        (Some(ForecasterKind::External), _) => ForecasterSpec::External {
            endpoint: o
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config("--forecaster external needs --endpoint".into()))?,
            max_rows: None,
        },
    };
    match &mut spec {
        ForecasterSpec::Seasonal { period } => {
            if let Some(p) = o.period {
                *period = p;
            }
        }
        ForecasterSpec::Autoregressive { order, ridge } => {
            if let Some(p) = o.order {
                *order = p;
            }
            if let Some(r) = o.ridge {
                *ridge = r;
            }
        }
        ForecasterSpec::External { endpoint, max_rows } => {
            if let Some(e) = &o.endpoint {
                *endpoint = e.clone();
            }
            if o.max_rows.is_some() {
                *max_rows = o.max_rows;
            }
        }
        ForecasterSpec::Persistence => {}
    }
    Ok(spec)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = effective_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::ShowConfig => print!("{}", cfg.to_toml_string()?),
        Command::Synth {
            output,
            days,
            data_seed,
        } => {
            let mut syn = match &cfg.data {
                DataSource::Synthetic(s) => s.clone(),
                DataSource::Csv(_) => synthetic::SyntheticConfig::default(),
            };
            if let Some(d) = days {
                syn.days = d;
            }
            if let Some(s) = data_seed {
                syn.seed = s;
            }
            let data = synthetic::generate(&syn)?;
            ingest::write_csv(&data.series, &output)?;
            println!(
                "wrote {} ({} days, {} variables, {} episodes)",
                output.display(),
                data.series.len(),
                data.series.n_vars(),
                data.episodes.len()
            );
        }
        Command::Ingest {
            adjust,
            date_column,
            date_format,
            output,
        } => {
            let DataSource::Csv(mut ingest_cfg) = cfg.data.clone() else {
                return Err(Error::Config(
                    "ingest needs a CSV source: pass --csv or set [data] kind = \"csv\"".into(),
                ));
            };
            ingest_cfg.adjustments.extend(adjust);
            if let Some(c) = date_column {
                ingest_cfg.date_column = c;
            }
            if let Some(f) = date_format {
                ingest_cfg.date_format = f;
            }
            let raw = ingest::load_csv(&ingest_cfg)?;
            let clean = ingest::interpolate_gaps(&ingest::apply_datum_adjustments(&raw, &ingest_cfg.adjustments)?)?;
            let output = output.unwrap_or_else(|| cfg.out_dir.join("clean.csv"));
            ensure_parent(&output)?;
            ingest::write_csv(&clean, &output)?;
            println!(
                "{} days ({} to {}), {} variables -> {}",
                clean.len(),
                clean.dates()[0],
                clean.dates()[clean.len() - 1],
                clean.n_vars(),
                output.display()
            );
            println!(
                "{:<16} {:>8} {:>12} {:>12} {:>12}",
                "column", "missing", "min", "max", "mean"
            );
            for (r, c) in ingest::summarize(&raw).iter().zip(ingest::summarize(&clean)) {
                println!(
                    "{:<16} {:>8} {:>12.4} {:>12.4} {:>12.4}",
                    c.name, r.missing, c.min, c.max, c.mean
                );
            }
        }
        Command::BuildKb { horizon, output } => {
            let h = horizon.unwrap_or(cfg.horizons[0]);
            let series = cfg.load_series()?;
            let split = chronological_split(series.len(), cfg.train_fraction)?;
            let kb = KnowledgeBase::build(&series, &split, cfg.lookback, h, cfg.stride)?;
            let output = output.unwrap_or_else(|| cfg.out_dir.join(format!("kb_h{h}.rafkb")));
            ensure_parent(&output)?;
            kb.save(&output)?;
            println!(
                "{} samples (lookback {}, horizon {}, {} variables) -> {}",
                kb.len(),
                kb.lookback(),
                kb.horizon(),
                kb.n_vars(),
                output.display()
            );
        }
        Command::Retrieve(q) => {
            let ctx = Query::prepare(&cfg, &q)?;
            let kind = first_retriever(&cfg)?;
            let retriever = cfg.build_retriever(kind)?;
            if ctx.kb.is_empty() {
                return Err(Error::EmptyPool);
            }
            let index = RetrievalIndex::new(&ctx.kb, &retriever)?;
            let query = &ctx.test.samples[ctx.index];
            let set = index.top_k(query.lookback.view(), cfg.k, Exclusion::for_query(query))?;
            eprintln!(
                "query origin {} ({}), retriever {kind}, pool {} samples{}",
                query.origin,
                ctx.series.dates()[query.origin],
                ctx.kb.len(),
                if set.truncated { ", truncated" } else { "" }
            );
            println!("rank,base_index,origin,origin_date,score");
            for (rank, e) in set.entries.iter().enumerate() {
                let date = ctx
                    .series
                    .dates()
                    .get(e.pair.origin)
                    .map(|d| d.to_string())
                    .unwrap_or_default();
                println!("{},{},{},{},{}", rank + 1, e.base_index, e.pair.origin, date, e.score);
            }
        }
        Command::Forecast(q) => {
            let ctx = Query::prepare(&cfg, &q)?;
            let pipeline_config = match cfg.retrievers.first() {
                Some(&kind) if !ctx.kb.is_empty() => PipelineConfig::new(
                    cfg.build_retriever(kind)?,
                    cfg.k,
                    *cfg.strategies.first().unwrap_or(&Strategy::B),
                ),
                _ => PipelineConfig::no_retrieval(),
            };
            let forecaster = cfg.forecaster.build()?;
            let targets = ctx.series.target_indices().to_vec();
            let pipeline = RafPipeline::new(&ctx.kb, &pipeline_config, Arc::clone(&forecaster), targets.clone())?
                .with_variables(ctx.series.variable_names().iter().map(|s| s.to_string()).collect());
            let query = &ctx.test.samples[ctx.index];
            let out = pipeline.run(query)?;
            eprintln!(
                "query origin {} ({}), forecaster {}, {}",
                query.origin,
                ctx.series.dates()[query.origin],
                out.result.forecaster_id,
                match &out.contexts {
                    Some(c) => format!("{} contexts via {}", c.len(), c.retriever),
                    None => "no retrieval".into(),
                }
            );
            println!("date,station,truth,prediction");
            let names = ctx.series.target_names();
            for step in 0..query.horizon() {
                let date = ctx.series.dates()[query.origin + 1 + step];
                for (j, &col) in targets.iter().enumerate() {
                    println!(
                        "{date},{},{},{}",
                        names[j],
                        query.future[[step, col]],
                        out.result.values[[step, j]]
                    );
                }
            }
        }
        Command::Evaluate => {
            let out = run_experiment(&cfg)?;
            let written = out.write(&cfg.out_dir)?;
            println!(
                "{:<4} {:<5} {:<5} {:>8} {:>8} {:>8} {:>8}",
                "h", "ret", "strat", "coverage", "mae", "rmse", "sedi"
            );
            for r in out.report.overall() {
                println!(
                    "{:<4} {:<5} {:<5} {:>8} {:>8.4} {:>8.4} {:>8}",
                    r.lead_time,
                    r.retriever,
                    r.strategy,
                    r.coverage,
                    r.mae,
                    r.rmse,
                    fmt_opt(r.sedi)
                );
            }
            for p in written {
                println!("wrote {}", p.display());
            }
            if !out.failures.is_empty() {
                for f in &out.failures {
                    eprintln!("failed cell {}: {}", f.cell, f.message);
                }
                return Ok(ExitCode::from(2));
            }
        }
        Command::SweepPool { coverages, no_plot } => {
            let coverages = coverages.or_else(|| cli.overrides.coverage.clone()).unwrap_or_else(|| {
                SWEEP_LEVELS
                    .iter()
                    .copied()
                    .filter(|c| *c <= cfg.train_fraction)
                    .collect()
            });
            let sweep = sweep_pool_size(&cfg, &coverages)?;
            let mut written = sweep.output.write(&cfg.out_dir)?;
            let csv = cfg.out_dir.join("sweep.csv");
            write_file(&csv, sweep.to_csv_string()?)?;
            written.push(csv);
            if !no_plot {
                let svg = cfg.out_dir.join("sweep.svg");
                write_file(&svg, sweep.to_svg())?;
                written.push(svg);
            }
            print!("{}", sweep.to_csv_string()?);
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            if !sweep.output.failures.is_empty() {
                for f in &sweep.output.failures {
                    eprintln!("failed cell {}: {}", f.cell, f.message);
                }
                return Ok(ExitCode::from(2));
            }
        }
        Command::Trajectories {
            archive,
            station,
            horizon,
            no_plot,
        } => {
            let path = archive.unwrap_or_else(|| cfg.out_dir.join("forecasts.json"));
            let archive = ForecastArchive::load(&path)?;
            let traj = emit_trajectories(&archive, &station, horizon)?;
            let stem = format!("trajectory_{station}_h{horizon}");
            let csv = cfg.out_dir.join(format!("{stem}.csv"));
            write_file(&csv, traj.to_csv_string()?)?;
            println!(
                "wrote {} ({} rows, methods: {})",
                csv.display(),
                traj.rows.len(),
                traj.methods.join(", ")
            );
            if !no_plot {
                let svg = cfg.out_dir.join(format!("{stem}.svg"));
                write_file(&svg, traj.to_svg())?;
                println!("wrote {}", svg.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn first_retriever(cfg: &ExperimentConfig) -> Result<RetrieverKind> {
    cfg.retrievers
        .first()
        .copied()
        .ok_or_else(|| Error::Config("no retriever configured".into()))
}

/// Everything needed to address one test query.
struct Query {
    series: MultivariateSeries,
    kb: KnowledgeBase,
    test: TestSet,
    index: usize,
}

impl Query {
    fn prepare(cfg: &ExperimentConfig, q: &QueryArgs) -> Result<Self> {
        let h = q.horizon.unwrap_or(cfg.horizons[0]);
        let series = cfg.load_series()?;
        let split = chronological_split(series.len(), cfg.train_fraction)?;
        let kb = match &q.kb {
            Some(path) => {
                let kb = KnowledgeBase::load(path)?;
                if kb.lookback() != cfg.lookback || kb.horizon() != h || kb.n_vars() != series.n_vars() {
                    return Err(Error::Config(format!(
                        "{} holds lookback {}, horizon {}, {} variables; the query needs {}, {}, {}",
                        path.display(),
                        kb.lookback(),
                        kb.horizon(),
                        kb.n_vars(),
                        cfg.lookback,
                        h,
                        series.n_vars()
                    )));
                }
                kb
            }
            None => KnowledgeBase::build(&series, &split, cfg.lookback, h, cfg.stride)?,
        };
        let coverage = cfg.coverages()[0];
        let kb = kb.restrict_seeded(coverage, cfg.train_fraction, cfg.retain, cfg.seed)?;
        let test = TestSet::build(&series, &split, cfg.lookback, h)?;
        let index = match (q.index, q.date) {
            (_, Some(date)) => test
                .samples
                .iter()
                .position(|s| series.dates()[s.origin] == date)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "{date} is not a test query origin (first {}, last {})",
                        series.dates()[test.samples[0].origin],
                        series.dates()[test.samples[test.len() - 1].origin]
                    ))
                })?,
            (Some(i), None) if i < test.len() => i,
            (Some(i), None) => {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range: {} test queries",
                    test.len()
                )))
            }
            (None, None) => 0,
        };
        Ok(Self {
            series,
            kb,
            test,
            index,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
