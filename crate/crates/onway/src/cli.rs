//! Command-line interface: estimation, comparison, analysis and simulation
//! over market/trip files. All outputs land in the chosen output directory;
//! stdout carries only a short summary and the written paths.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{engagement_table, group_comparison, substitutability_matrix};
use crate::choice::{posterior_strategy, strategy_probabilities, CoefficientSet};
use crate::estimation::{fit, ChoiceData, EstimationResult, FitOptions, ModelFamily, Observation};
use crate::io::{
    self, fmt_sig6, generate_synthetic, load_coefficients, load_market, load_trips, save_trips,
    synthetic_market, write_comparison_table, write_engagement_table, write_estimation_report,
    write_probability_field, write_substitutability_matrix,
};
use crate::scenario::{
    equilibrium_search, probability_field, AwarenessRegime, EquilibriumOptions, GridPoint,
    ScenarioSpec, DEFAULT_AWARENESS_POINTS, DEFAULT_CENTER_OPPORTUNITIES,
};
use crate::spatial::Market;

#[derive(Parser)]
#[command(
    name = "onway",
    about = "Latent-strategy spatial choice modeling for on-the-way retail",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model family to a trip table.
    Estimate(EstimateArgs),
    /// Fit the whole model family and write a comparison table.
    Compare(CompareArgs),
    /// Substitutability matrix for a subset of outlets at one time of day.
    Elasticities(ElasticitiesArgs),
    /// Strategy-engagement probabilities for the eight trip contexts.
    Engagement(EngagementArgs),
    /// Grid-city duopoly simulation from a scenario config.
    Simulate(SimulateArgs),
    /// Generate a synthetic trip table from a coefficient file.
    Synth(SynthArgs),
    /// Compare strategy probabilities across groups of a covariate column.
    Segment(SegmentArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Market directory (market.cfg, outlets.tsv, zones.tsv).
    #[arg(long)]
    market: PathBuf,
    /// Trip table.
    #[arg(long)]
    trips: PathBuf,
    /// Treat unknown columns as errors.
    #[arg(long, default_value_t = false)]
    strict: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Model family: latent2, latent3, ..., single, gravity, xgravity, mixed.
    #[arg(long)]
    family: String,
    #[command(flatten)]
    data: DataArgs,
    /// Multistart count.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulation draws for the mixed family.
    #[arg(long, default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ElasticitiesArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fitted coefficient file.
    #[arg(long)]
    coeffs: PathBuf,
    /// Comma-separated outlet ids.
    #[arg(long, value_delimiter = ',')]
    outlets: Vec<String>,
    /// morning or afternoon.
    #[arg(long)]
    time: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EngagementArgs {
    /// Fitted two-strategy coefficient file.
    #[arg(long)]
    coeffs: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config file (key = value).
    #[arg(long)]
    scenario: PathBuf,
    /// Coefficient file; a calibrated demo set is used when omitted and the
    /// config names none.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of trips.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generating coefficient file.
    #[arg(long)]
    coeffs: PathBuf,
    /// Market directory; a 20-outlet synthetic city is generated when omitted.
    #[arg(long)]
    market: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fitted two-strategy coefficient file.
    #[arg(long)]
    coeffs: PathBuf,
    /// Covariate column to group by.
    #[arg(long)]
    by: String,
    /// Use posterior instead of prior strategy probabilities.
    #[arg(long, default_value_t = false)]
    posterior: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Exit codes: 0 success, 1 validation failure, 2 convergence failure.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Elasticities(args) => cmd_elasticities(args),
        Command::Engagement(args) => cmd_engagement(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Segment(args) => cmd_segment(args),
    }
}

fn parse_family(raw: &str, draws: usize, seed: u64) -> Result<ModelFamily, String> {
    match raw {
        "single" => Ok(ModelFamily::Single),
        "gravity" => Ok(ModelFamily::Gravity),
        "xgravity" => Ok(ModelFamily::ExtendedGravity),
        "mixed" => Ok(ModelFamily::Mixed { draws, seed }),
        other => {
            if let Some(k) = other.strip_prefix("latent") {
                let strategies: usize =
                    k.parse().map_err(|_| format!("bad family {other:?}"))?;
                if strategies < 2 {
                    return Err("latent families need at least 2 strategies".into());
                }
                Ok(ModelFamily::Latent { strategies })
            } else {
                Err(format!(
                    "unknown family {other:?} (expected latentN, single, gravity, xgravity, mixed)"
                ))
            }
        }
    }
}

fn load_dataset(args: &DataArgs) -> Result<(Market, Vec<Observation>), Box<dyn std::error::Error>> {
    let loaded = load_market(&args.market, args.strict)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let trips = load_trips(&args.trips, &loaded.market)?;
    for w in &trips.warnings {
        eprintln!("warning: {w}");
    }
    if !trips.rejected.is_empty() {
        eprintln!("warning: {} row(s) rejected:", trips.rejected.len());
        for r in trips.rejected.iter().take(10) {
            eprintln!("  {} (line {}): {}", r.id, r.line, r.reason);
        }
    }
    Ok((loaded.market, trips.observations))
}

fn convergence_code(results: &[&EstimationResult]) -> ExitCode {
    if results.iter().all(|r| r.converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let family = parse_family(&args.family, args.draws, args.seed)?;
    let (market, dataset) = load_dataset(&args.data)?;
    let options = FitOptions { n_starts: args.starts, seed: args.seed, ..Default::default() };
    let result = fit(&family, &dataset, &market, &options)?;
    let (report, coeffs) = write_estimation_report(&result, &args.out, &family.label())?;
    println!(
        "{}: loglik {} aic {} bic {} converged {}",
        family.label(),
        fmt_sig6(result.loglik),
        fmt_sig6(result.aic),
        fmt_sig6(result.bic),
        result.converged
    );
    println!("{}", report.display());
    println!("{}", coeffs.display());
    Ok(convergence_code(&[&result]))
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (market, dataset) = load_dataset(&args.data)?;
    let options = FitOptions { n_starts: args.starts, seed: args.seed, ..Default::default() };
    let families = [
        ModelFamily::Latent { strategies: 2 },
        ModelFamily::Single,
        ModelFamily::Gravity,
        ModelFamily::ExtendedGravity,
        ModelFamily::Mixed { draws: args.draws, seed: args.seed },
    ];
    let mut results = Vec::new();
    for family in families {
        let result = fit(&family, &dataset, &market, &options)?;
        println!(
            "{}: loglik {} aic {} bic {}",
            family.label(),
            fmt_sig6(result.loglik),
            fmt_sig6(result.aic),
            fmt_sig6(result.bic)
        );
        write_estimation_report(&result, &args.out, &family.label())?;
        results.push(result);
    }
    let table = args.out.join("comparison.tsv");
    write_comparison_table(&results, &table)?;
    println!("{}", table.display());
    Ok(convergence_code(&results.iter().collect::<Vec<_>>()))
}

fn cmd_elasticities(args: ElasticitiesArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let morning = match args.time.as_str() {
        "morning" => true,
        "afternoon" => false,
        other => return Err(format!("bad --time {other:?} (morning or afternoon)").into()),
    };
    let (market, dataset) = load_dataset(&args.data)?;
    let loaded = load_coefficients(&args.coeffs)?;
    let matrix = substitutability_matrix(
        &loaded.coefficients,
        &dataset,
        &market,
        &args.outlets,
        morning,
    )?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join(format!("substitutability_{}.tsv", args.time));
    write_substitutability_matrix(&matrix, &path)?;
    println!(
        "{} outlets, {}: mean |gamma| {}",
        matrix.len(),
        args.time,
        fmt_sig6(matrix.mean_abs())
    );
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_engagement(args: EngagementArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let loaded = load_coefficients(&args.coeffs)?;
    let table = engagement_table(&loaded.coefficients)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("engagement.tsv");
    write_engagement_table(&table, &path)?;
    println!("8 trip contexts");
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(&args.scenario)?;
    let pairs = io::parse_scenario_pairs(&text, &args.scenario.display().to_string())?;
    let coeffs = match (&args.coeffs, pairs.iter().find(|(k, _)| k == "coeffs")) {
        (Some(path), _) => load_coefficients(path)?.coefficients,
        (None, Some((_, path))) => {
            let base = args.scenario.parent().unwrap_or(Path::new("."));
            load_coefficients(&base.join(path))?.coefficients
        }
        (None, None) => crate::demo::two_strategy_coefficients(),
    };
    let spec = scenario_from_pairs(&pairs, coeffs)?;
    let field = probability_field(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    let stem = args
        .scenario
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "scenario".into());
    let (field_path, summary_path) = write_probability_field(&field, &args.out, &stem)?;
    println!(
        "argmax ({}, {}) value {}",
        field.argmax.x,
        field.argmax.y,
        fmt_sig6(field.argmax_value)
    );

    let mut code = ExitCode::SUCCESS;
    if matches!(spec.awareness, AwarenessRegime::UniformAlongRoute { .. })
        && spec.origin.y == spec.destination.y
    {
        match equilibrium_search(&spec, &EquilibriumOptions::default()) {
            Ok(eq) => {
                let eq_path = args.out.join(format!("{stem}_equilibrium.tsv"));
                std::fs::write(
                    &eq_path,
                    format!(
                        "x_target\tx_competitor\tshare_target\tshare_competitor\ttie\n{}\t{}\t{}\t{}\t{}\n",
                        eq.x_target,
                        eq.x_competitor,
                        fmt_sig6(eq.shares.0),
                        fmt_sig6(eq.shares.1),
                        eq.tie
                    ),
                )?;
                println!(
                    "equilibrium x_target {} x_competitor {}{}",
                    eq.x_target,
                    eq.x_competitor,
                    if eq.tie { " (tie)" } else { "" }
                );
                println!("{}", eq_path.display());
            }
            Err(e) => {
                eprintln!("equilibrium search failed: {e}");
                code = ExitCode::from(2);
            }
        }
    }
    println!("{}", field_path.display());
    println!("{}", summary_path.display());
    Ok(code)
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let loaded = load_coefficients(&args.coeffs)?;
    let market = match &args.market {
        Some(dir) => {
            let l = load_market(dir, false)?;
            for w in &l.warnings {
                eprintln!("warning: {w}");
            }
            l.market
        }
        None => synthetic_market(20, 241, args.seed)?,
    };
    let rows = generate_synthetic(
        &loaded.coefficients,
        &market,
        args.n,
        &crate::demo::survey_context_mix(),
        args.seed,
    )?;
    std::fs::create_dir_all(&args.out)?;
    let trips_path = args.out.join("trips.tsv");
    save_trips(&rows, &trips_path)?;
    if args.market.is_none() {
        let market_dir = args.out.join("market");
        io::save_market(&market, &market_dir)?;
        println!("{}", market_dir.display());
    }
    println!("{} trips", rows.len());
    println!("{}", trips_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_segment(args: SegmentArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (market, dataset) = load_dataset(&args.data)?;
    let loaded = load_coefficients(&args.coeffs)?;
    let coeffs = loaded.coefficients;
    if coeffs.n_strategies() != 2 {
        return Err("segmentation needs a two-strategy coefficient file".into());
    }

    let mut values = Vec::new();
    let mut groups = Vec::new();
    let data = if args.posterior {
        Some(ChoiceData::from_awareness_positions(&dataset, &market, None)?)
    } else {
        None
    };
    for (i, obs) in dataset.iter().enumerate() {
        let Some(group) = obs.covariates.get(&args.by) else {
            continue;
        };
        let z = obs.strategy_context();
        let p = match &data {
            None => strategy_probabilities(&coeffs, &z).probability(1),
            Some(data) => {
                let features: Vec<_> = (0..market.outlets.len())
                    .map(|j| data.outlet_features(i, j))
                    .collect();
                let chosen = market.outlet_index(&obs.chosen).expect("validated");
                posterior_strategy(&coeffs, &z, &features, chosen)?.probability(1)
            }
        };
        values.push(p);
        groups.push(group.clone());
    }
    if values.is_empty() {
        return Err(format!("no observations carry covariate {:?}", args.by).into());
    }
    let comparison = group_comparison(&values, &groups)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join(format!("segment_{}.tsv", args.by));
    let mut text = String::from("group\tmean_destination_probability\tn\n");
    for (label, mean, count) in &comparison.group_means {
        text.push_str(&format!("{label}\t{}\t{count}\n", fmt_sig6(*mean)));
    }
    text.push_str(&format!(
        "\nF({}, {})\t{}\n",
        comparison.df1,
        comparison.df2,
        fmt_sig6(comparison.f_statistic)
    ));
    std::fs::write(&path, text)?;
    println!(
        "F({}, {}) = {} over {} groups",
        comparison.df1,
        comparison.df2,
        fmt_sig6(comparison.f_statistic),
        comparison.group_means.len()
    );
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn scenario_from_pairs(
    pairs: &[(String, String)],
    coeffs: CoefficientSet,
) -> Result<ScenarioSpec, String> {
    let mut spec = ScenarioSpec::new(coeffs);
    let mut center_location: Option<GridPoint> = None;
    let mut center_opportunities = DEFAULT_CENTER_OPPORTUNITIES;
    for (key, value) in pairs {
        let bad = |k: &str| format!("scenario: bad value for {k}: {value:?}");
        let parse_u32 = |v: &str, k: &str| v.parse::<u32>().map_err(|_| bad(k));
        let parse_f64 = |v: &str, k: &str| v.parse::<f64>().map_err(|_| bad(k));
        match key.as_str() {
            "grid_width" => spec.grid_width = parse_u32(value, key)?,
            "grid_height" => spec.grid_height = parse_u32(value, key)?,
            "origin_x" => spec.origin.x = parse_u32(value, key)?,
            "origin_y" => spec.origin.y = parse_u32(value, key)?,
            "destination_x" => spec.destination.x = parse_u32(value, key)?,
            "destination_y" => spec.destination.y = parse_u32(value, key)?,
            "competitor_x" => spec.competitor.x = parse_u32(value, key)?,
            "competitor_y" => spec.competitor.y = parse_u32(value, key)?,
            "unit_km" => spec.unit_km = parse_f64(value, key)?,
            "awareness" => {
                spec.awareness = match value.as_str() {
                    "at_origin" => AwarenessRegime::AtOrigin,
                    "uniform" => AwarenessRegime::UniformAlongRoute {
                        points: DEFAULT_AWARENESS_POINTS,
                    },
                    other => match other.strip_prefix("uniform:") {
                        Some(n) => AwarenessRegime::UniformAlongRoute {
                            points: n.parse().map_err(|_| bad(key))?,
                        },
                        None => return Err(bad(key)),
                    },
                }
            }
            "regular" => spec.regular = value == "1",
            "morning" => spec.morning = value == "1",
            "base_quality" => spec.base_quality = parse_f64(value, key)?,
            "target_quality" => spec.target_quality = parse_f64(value, key)?,
            "center_x" => {
                let c = center_location.get_or_insert(GridPoint::new(0, 0));
                c.x = parse_u32(value, key)?;
            }
            "center_y" => {
                let c = center_location.get_or_insert(GridPoint::new(0, 0));
                c.y = parse_u32(value, key)?;
            }
            "center_opportunities" => center_opportunities = parse_f64(value, key)?,
            "t_star" => spec.t_star = parse_f64(value, key)?,
            "speed" => spec.speed = parse_f64(value, key)?,
            "comp_radius" => spec.comp_radius = parse_f64(value, key)?,
            "coeffs" => {} // handled by the caller
            other => return Err(format!("scenario: unknown key {other:?}")),
        }
    }
    if let Some(location) = center_location {
        spec = spec.with_center(location, center_opportunities);
    }
    Ok(spec)
}
