//! Command-line front end: single-dataset estimation, panel simulation,
//! coverage/precision table generation, and instrument-growth sweeps.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 estimation error. Errors are also written to stderr as one JSON object
//! with a stable machine-readable code.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use config::{parse_layout, parse_plan, Mode, RunConfig};
use fodgmm::dgp::{self, DesignConfig};
use fodgmm::montecarlo::{run as run_mc, sweep_to_csv, theta_sweep, EstimatorSpec, ExperimentSpec};
use fodgmm::{
    fit_efficient, fit_fd, fit_fod, load_panel, write_panel, Error, EstimatorKind, PanelSchema,
    RegressorLayout, Result,
};

#[derive(Parser, Debug)]
#[command(name = "fodgmm", version, about = "Dynamic panel GMM estimation and experiments")]
struct Cli {
    /// estimate | simulate | tables | sweep
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated design ids (1..=36).
    #[arg(long, value_delimiter = ',')]
    designs: Option<Vec<u8>>,
    /// Comma-separated horizons T.
    #[arg(long = "T", value_delimiter = ',')]
    t_values: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated subset of fod,fd,efficient.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Instrument plan: limited | all | power:A[:B] | custom:Y0:Y1:X0:X1.
    #[arg(long)]
    plan: Option<String>,
    /// Comma-separated confidence levels in (0,1).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Comma-separated growth exponents for sweep mode.
    #[arg(long = "alpha", value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset file (estimate mode).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Estimator for estimate mode: fod | fd | efficient.
    #[arg(long)]
    estimator: Option<String>,
    /// ar_with_regressors | pure_ar
    #[arg(long)]
    layout: Option<String>,
    /// Field delimiter for dataset files.
    #[arg(long)]
    delimiter: Option<char>,
    /// Autoregressive coefficient of the sweep-mode base design.
    #[arg(long)]
    beta: Option<f64>,
}

impl Cli {
    fn into_config(self) -> (Option<PathBuf>, RunConfig) {
        let config_path = self.config.clone();
        let flags = RunConfig {
            mode: self.mode,
            seed: self.seed,
            reps: self.reps,
            designs: self.designs,
            t_values: self.t_values,
            n: self.n,
            estimators: self.estimators,
            plan: self.plan,
            levels: self.levels,
            alphas: self.alphas,
            threads: self.threads,
            out_dir: self.out,
            input: self.input,
            estimator: self.estimator,
            layout: self.layout,
            delimiter: self.delimiter,
            beta: self.beta,
        };
        (config_path, flags)
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::MissingBaseline(_) | Error::InfeasibleCell(_) => 2,
        Error::UnbalancedPanel { .. }
        | Error::DuplicateCell { .. }
        | Error::Parse { .. }
        | Error::Io(_) => 3,
        Error::TooFewPeriods { .. }
        | Error::InfeasiblePlan { .. }
        | Error::UnderIdentified { .. }
        | Error::RankDeficient { .. }
        | Error::SingularMoment
        | Error::SingularWeight
        | Error::NonStationary => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"code": err.code(), "message": err.to_string()}})
            );
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let (config_path, flags) = cli.into_config();
    let file_cfg = match &config_path {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    let mut cfg = file_cfg.merged_with(flags);

    // Environment override for the output directory only. An explicit --out
    // flag still wins, but the flag value is indistinguishable from a config
    // value after merging, so the variable applies when neither was given.
    if cfg.out_dir.is_none() {
        if let Ok(dir) = std::env::var("FODGMM_OUT_DIR") {
            cfg.out_dir = Some(PathBuf::from(dir));
        }
    }

    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }

    let mode = cfg
        .mode
        .ok_or_else(|| Error::InvalidConfig("no mode given (--mode or config)".into()))?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    // Record the effective configuration next to the outputs; the file can
    // be passed back through --config to repeat the run.
    std::fs::write(out_dir.join("run_config.json"), cfg.emit())?;

    match mode {
        Mode::Estimate => cmd_estimate(&cfg, &out_dir),
        Mode::Simulate => cmd_simulate(&cfg, &out_dir),
        Mode::Tables => cmd_tables(&cfg, &out_dir),
        Mode::Sweep => cmd_sweep(&cfg, &out_dir),
    }
}

fn parse_estimator(text: &str) -> Result<EstimatorKind> {
    match text {
        "fod" => Ok(EstimatorKind::Fod),
        "fd" => Ok(EstimatorKind::Fd),
        "efficient" => Ok(EstimatorKind::Efficient),
        other => Err(Error::InvalidConfig(format!("unknown estimator '{other}'"))),
    }
}

fn resolved_levels(cfg: &RunConfig) -> Result<Vec<f64>> {
    let levels = cfg.levels.clone().unwrap_or_else(|| vec![0.95, 0.90, 0.50]);
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::InvalidConfig(
            "confidence levels must lie strictly in (0,1)".into(),
        ));
    }
    Ok(levels)
}

fn cmd_estimate(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let input = cfg
        .input
        .clone()
        .ok_or_else(|| Error::InvalidConfig("estimate mode needs --input".into()))?;
    let schema = PanelSchema {
        delimiter: cfg.delimiter.map(|c| c as u8).unwrap_or(b','),
        ..PanelSchema::default()
    };
    let panel = load_panel(&input, &schema)?;
    let violations = panel.validate();
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Parse {
            line: 0,
            message: format!("invalid panel: {}", msgs.join("; ")),
        });
    }

    let kind = parse_estimator(cfg.estimator.as_deref().unwrap_or("fod"))?;
    let plan = parse_plan(cfg.plan.as_deref().unwrap_or("limited"))?;
    let layout = parse_layout(cfg.layout.as_deref().unwrap_or("ar_with_regressors"))?;
    let levels = resolved_levels(cfg)?;

    let fit = match kind {
        EstimatorKind::Fod => fit_fod(&panel, &plan, layout)?,
        EstimatorKind::Fd => fit_fd(&panel, &plan, layout)?,
        EstimatorKind::Efficient => fit_efficient(&panel)?,
    };
    let report = output::FitReport::new(&fit, &levels);

    let json_path = out_dir.join("fit.json");
    std::fs::write(&json_path, report.to_json())?;
    let text = report.to_text();
    std::fs::write(out_dir.join("fit.txt"), &text)?;
    print!("{text}");
    println!("wrote {}", json_path.display());
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let ids = cfg.designs.clone().unwrap_or_else(|| vec![5]);
    let t_len = *cfg.t_values.as_deref().unwrap_or(&[20]).first().unwrap();
    let n = cfg.n.unwrap_or(200);
    let seed = cfg.seed.unwrap_or(0);
    for id in ids {
        let design = DesignConfig::from_design_id(id, n, t_len)?;
        let sim = dgp::generate(&design, seed, 0);
        let stem = format!("panel_d{id}_T{t_len}_n{n}");
        let csv_path = out_dir.join(format!("{stem}.csv"));
        write_panel(sim.panel(), &csv_path, cfg.delimiter.map(|c| c as u8).unwrap_or(b','))?;
        std::fs::write(
            out_dir.join(format!("{stem}_truth.json")),
            serde_json::to_string_pretty(&design)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        )?;
        println!("wrote {}", csv_path.display());
    }
    Ok(())
}

fn cmd_tables(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let ids = cfg.designs.clone().unwrap_or_else(|| (1..=36).collect());
    let t_values = cfg.t_values.clone().unwrap_or_else(|| vec![20, 40, 100]);
    let n = cfg.n.unwrap_or(200);
    let reps = cfg.reps.unwrap_or(1000);
    let seed = cfg.seed.unwrap_or(0);
    let levels = resolved_levels(cfg)?;
    let plan = parse_plan(cfg.plan.as_deref().unwrap_or("limited"))?;

    let kinds: Vec<EstimatorKind> = match &cfg.estimators {
        Some(list) => list
            .iter()
            .map(|s| parse_estimator(s))
            .collect::<Result<Vec<_>>>()?,
        None => vec![EstimatorKind::Fod, EstimatorKind::Fd, EstimatorKind::Efficient],
    };
    let estimators: Vec<EstimatorSpec> = kinds
        .into_iter()
        .map(|kind| match kind {
            EstimatorKind::Efficient => EstimatorSpec::efficient(),
            EstimatorKind::Fod => EstimatorSpec::fod(plan.clone()),
            EstimatorKind::Fd => EstimatorSpec::fd(plan.clone()),
        })
        .collect();

    let mut designs = Vec::new();
    for &t_len in &t_values {
        for &id in &ids {
            designs.push(DesignConfig::from_design_id(id, n, t_len)?);
        }
    }

    let spec = ExperimentSpec {
        designs,
        estimators,
        reps,
        levels,
        seed,
        layout: RegressorLayout::ArWithRegressors,
        noise: Default::default(),
    };
    let summary = run_mc(&spec)?;

    std::fs::write(out_dir.join("summary.csv"), summary.to_csv())?;
    std::fs::write(out_dir.join("summary.json"), summary.to_json())?;
    std::fs::write(out_dir.join("catalog.csv"), output::design_catalog_csv())?;
    for (name, contents) in output::coverage_tables(&summary) {
        std::fs::write(out_dir.join(&name), contents)?;
        println!("wrote {}", out_dir.join(&name).display());
    }
    for (name, contents) in output::relative_precision_tables(&summary) {
        std::fs::write(out_dir.join(&name), contents)?;
        println!("wrote {}", out_dir.join(&name).display());
    }
    println!("wrote {}", out_dir.join("summary.csv").display());
    println!("wrote {}", out_dir.join("summary.json").display());
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let alphas = cfg.alphas.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0]);
    let t_values = cfg.t_values.clone().unwrap_or_else(|| vec![25, 50]);
    let n_grid = vec![cfg.n.unwrap_or(100)];
    let reps = cfg.reps.unwrap_or(500);
    let seed = cfg.seed.unwrap_or(0);
    let beta = cfg.beta.unwrap_or(0.5);
    if !(beta.abs() < 1.0) {
        return Err(Error::InvalidConfig(format!("|beta| must be < 1, got {beta}")));
    }

    // Pure autoregression base: the regressor process is generated but
    // carries no weight in the outcome.
    let base = DesignConfig {
        beta1: beta,
        beta2: 0.0,
        rho: 0.5,
        phi1: 0.0,
        kappa1: 0.0,
        n: n_grid[0],
        t_len: t_values[0],
        burn_in: dgp::DEFAULT_BURN_IN,
        design_id: None,
        filtered_phi: false,
    };
    let cells = theta_sweep(&base, &alphas, &n_grid, &t_values, reps, seed)?;
    let csv = sweep_to_csv(&cells);
    std::fs::write(out_dir.join("sweep.csv"), &csv)?;
    print!("{csv}");
    println!("wrote {}", out_dir.join("sweep.csv").display());
    Ok(())
}
