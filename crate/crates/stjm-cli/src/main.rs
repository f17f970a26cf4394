use anyhow::{bail, Context, Result};
use clap::Parser;

use stjm::eval::{grid_search, run_monte_carlo, Method};
use stjm::simgen::{generate_scenario, ScenarioSpec};
use stjm::{fit, FitConfig};

use stjm_cli::config::{Cli, CliCommand, RunConfig};
use stjm_cli::ingest::synthetic_meta;
use stjm_cli::schema::SchemaFile;
use stjm_cli::{emit, ingest, rolling};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match RunConfig::resolve(cli.command.args()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };
    if let Err(e) = check_required_paths(&cli.command, &cfg) {
        eprintln!("error: {e:#}");
        eprintln!("run `stjm {} --help` for usage", command_name(&cli.command));
        std::process::exit(2);
    }
    let outcome = match cli.command {
        CliCommand::Fit(_) => run_fit(&cfg),
        CliCommand::Simulate(_) => run_simulate(&cfg),
        CliCommand::Evaluate(_) => run_evaluate(&cfg),
        CliCommand::Grid(_) => run_grid(&cfg),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn command_name(command: &CliCommand) -> &'static str {
    match command {
        CliCommand::Fit(_) => "fit",
        CliCommand::Simulate(_) => "simulate",
        CliCommand::Evaluate(_) => "evaluate",
        CliCommand::Grid(_) => "grid",
    }
}

fn check_required_paths(command: &CliCommand, cfg: &RunConfig) -> Result<()> {
    if cfg.out.is_none() {
        bail!("missing required --out path");
    }
    if matches!(command, CliCommand::Fit(_)) {
        if cfg.input.is_none() {
            bail!("fit requires --input");
        }
        if cfg.schema.is_none() {
            bail!("fit requires --schema");
        }
    }
    Ok(())
}

fn run_fit(cfg: &RunConfig) -> Result<()> {
    let input = cfg.input.as_deref().context("fit requires --input")?;
    let schema_path = cfg.schema.as_deref().context("fit requires --schema")?;
    let out = cfg.require_out()?;
    let schema = SchemaFile::load(schema_path)?;
    let (panel, meta) = ingest::ingest_panel(input, &schema)?;
    let panel = rolling::rolling_features(&panel, cfg.window)?;
    let result = fit(&panel, &cfg.fit_config())?;
    emit::emit_results(&result, &panel, &meta, out)?;
    println!(
        "fit: {} states, objective {:.6}, {} pass(es), converged: {}, results in {}",
        cfg.k,
        result.objective(),
        result.n_iter,
        result.converged,
        out.display()
    );
    Ok(())
}

fn scenario_from(cfg: &RunConfig) -> Result<ScenarioSpec> {
    let (Some(t), Some(m), Some(p)) = (cfg.t, cfg.m, cfg.p) else {
        bail!("this command requires --t, --m and --p (or a --scenario preset)");
    };
    let mut spec = ScenarioSpec::new(t, m, p)
        .with_gaps(cfg.gaps)
        .with_missing(cfg.missing)
        .with_seed(cfg.seed);
    spec.k = cfg.k;
    Ok(spec)
}

fn run_simulate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require_out()?;
    let spec = scenario_from(cfg)?;
    let sim = generate_scenario(&spec)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let meta = synthetic_meta(&sim.data);
    emit::write_panel_csv(&sim.data, &meta, &out.join("panel.csv"))?;
    emit::write_states_csv(&sim.truth, &meta, &out.join("truth.csv"))?;
    SchemaFile::from_feature_spec(sim.data.spec()).save(&out.join("schema.json"))?;
    println!(
        "simulate: T={} M={} P={} ({} missing cell(s)) written to {}",
        sim.data.n_times(),
        sim.data.n_locations(),
        sim.data.n_features(),
        sim.data.n_missing(),
        out.display()
    );
    Ok(())
}

fn preset_scenarios(name: &str, cfg: &RunConfig) -> Result<Vec<ScenarioSpec>> {
    let (gaps, missing) = match name {
        "table1" => (0.2, 0.0),
        "table2" => (0.0, 0.05),
        "table3" => (0.0, 0.20),
        other => bail!("unknown scenario preset `{other}` (expected table1, table2 or table3)"),
    };
    let p_values = match cfg.p {
        Some(p) => vec![p],
        None => vec![10, 20],
    };
    let mut scenarios = Vec::new();
    for &p in &p_values {
        for &t in &[10usize, 50] {
            for &m in &[10usize, 50] {
                let mut spec = ScenarioSpec::new(t, m, p)
                    .with_gaps(gaps)
                    .with_missing(missing);
                spec.k = cfg.k;
                scenarios.push(spec);
            }
        }
    }
    Ok(scenarios)
}

fn fit_template(cfg: &RunConfig) -> FitConfig {
    let mut template = FitConfig::default();
    template.hyperparams.n_starts = cfg.starts;
    template.hyperparams.max_iter = cfg.max_iter;
    template
}

fn run_evaluate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require_out()?;
    let scenarios = match &cfg.scenario {
        Some(name) => preset_scenarios(name, cfg)?,
        None => vec![scenario_from(cfg)?],
    };
    let report = run_monte_carlo(
        &scenarios,
        &[Method::Stjm, Method::Kprototypes],
        cfg.reps,
        cfg.lambda,
        cfg.gamma,
        &fit_template(cfg),
        cfg.seed,
    )?;
    emit::write_report(&report, out)?;
    print!("{}", report.to_csv_string());
    println!("evaluate: report written to {}", out.display());
    Ok(())
}

fn run_grid(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require_out()?;
    let spec = scenario_from(cfg)?;
    let sim = generate_scenario(&spec)?;
    let grid: Vec<f64> = (0..6).map(|i| (i * 5) as f64 / 100.0).collect();
    let mut template = fit_template(cfg);
    template.hyperparams.k = cfg.k;
    template.hyperparams.seed = cfg.seed;
    let result = grid_search(&sim.data, &sim.truth, &grid, &grid, &template)?;
    emit::write_grid(&result, &grid, &grid, out)?;
    println!(
        "grid: best lambda {} gamma {} (bac {:.4}), surface written to {}",
        result.best_lambda,
        result.best_gamma,
        result.best_bac,
        out.display()
    );
    Ok(())
}
