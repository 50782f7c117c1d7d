use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rulesteer::bandit::{read_log, write_log, LearnParams, Mode, Policy};
use rulesteer::flightsim::{aa_run, FlightBudget, FlightConfig, NoiseModel, DEFAULT_TIMEOUT_S};
use rulesteer::optkernel::{Job, RuleCatalog};
use rulesteer::pipeline::harness::collect_flight_history;
use rulesteer::pipeline::{run_day, write_flights, write_hints, DayConfig, DayInputs, DayReport};
use rulesteer::span::{brute_force_affecting_rules, compute_span, recall};
use rulesteer::validation::{
    parse_observations, train_validation_model, write_observations, FlightObservation, ValidationModel,
};
use rulesteer::workload::{
    generate_workload, jobs_file_name, jobs_path_for_view, observe_day, parse_spec, read_jobs, read_view,
    view_file_name, write_jobs, write_view, WorkloadSpec,
};

#[derive(Parser)]
#[command(name = "rulesteer", version, about = "Steer a rule-based query optimizer with single-rule-flip hints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recurring workload: one view and one jobs file per day.
    GenWorkload(GenArgs),
    /// Run one pipeline day over a view file.
    RunDay(RunDayArgs),
    /// Print a day report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Compare heuristic spans with the exhaustive single-flip oracle.
    BruteOracle {
        #[arg(long)]
        view: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat default-configuration runs and report per-job variation.
    AaTest {
        /// View file whose jobs to run.
        #[arg(long = "jobs")]
        view: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Learn a policy from decision logs.
    TrainPolicy {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = LearnParams::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = LearnParams::default().learning_rate)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the validation model on flight history files.
    TrainVmodel {
        #[arg(long = "history", required = true)]
        history: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Jobs file; defaults to the one next to the view.
    #[arg(long = "jobs-file")]
    jobs: Option<PathBuf>,
    /// Rule catalog TSV; defaults to the built-in catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// TOML workload spec; defaults to the standard planted workload.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Args)]
struct RunDayArgs {
    #[arg(long)]
    view: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    vmodel: Option<PathBuf>,
    #[arg(long)]
    out_hints: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
    #[arg(long)]
    out_log: Option<PathBuf>,
    #[arg(long)]
    out_flights: Option<PathBuf>,
    /// Flight history for training the validation model.
    #[arg(long)]
    out_history: Option<PathBuf>,
    /// In log mode, how many uniformly logged improvements to flight for the history.
    #[arg(long, default_value_t = 40)]
    history_flights: usize,
    #[arg(long, default_value_t = 8)]
    flight_queue: usize,
    #[arg(long, default_value_t = 14400.0)]
    flight_budget_s: f64,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_S)]
    flight_timeout_s: f64,
    #[arg(long, default_value_t = 0.0)]
    cost_delta: f64,
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "log")]
    mode: Mode,
    /// Turn the validation gate off.
    #[arg(long)]
    no_validate: bool,
}

fn catalog(path: &Option<PathBuf>) -> Result<RuleCatalog> {
    match path {
        Some(p) => RuleCatalog::load(p).with_context(|| format!("loading catalog {}", p.display())),
        None => Ok(RuleCatalog::default_catalog()),
    }
}

fn load_view(view: &Path, jobs: &Option<PathBuf>) -> Result<(Vec<rulesteer::workload::ViewRecord>, Vec<Job>)> {
    let file = fs::File::open(view).with_context(|| format!("opening {}", view.display()))?;
    let records = read_view(BufReader::new(file)).with_context(|| format!("reading {}", view.display()))?;
    let jobs_path = match jobs {
        Some(p) => p.clone(),
        None => jobs_path_for_view(view)
            .with_context(|| format!("{} is not named view-YYYY-MM-DD.tsv; pass --jobs-file", view.display()))?,
    };
    let jobs = read_jobs(&jobs_path).with_context(|| format!("reading {}", jobs_path.display()))?;
    Ok((records, jobs))
}

fn gen_workload(a: GenArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => parse_spec(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => WorkloadSpec::standard(1, 0),
    };
    if let Some(d) = a.days {
        spec.days = d;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let cat = catalog(&a.catalog)?;
    let w = generate_workload(&spec)?;
    fs::create_dir_all(&a.out)?;
    let noise = NoiseModel::default();
    for (d, day) in w.days.iter().enumerate() {
        let records = observe_day(&cat, &day.jobs, &noise, rulesteer::pipeline::harness::day_seed(spec.seed, d));
        let mut f = fs::File::create(a.out.join(view_file_name(day.date)))?;
        write_view(&mut f, &records)?;
        write_jobs(&a.out.join(jobs_file_name(day.date)), &day.jobs)?;
    }
    let planted = w.templates.iter().filter(|t| t.planted).count();
    println!(
        "{} templates ({planted} planted), {} days, {} jobs -> {}",
        w.templates.len(),
        w.days.len(),
        w.days.iter().map(|d| d.jobs.len()).sum::<usize>(),
        a.out.display()
    );
    Ok(())
}

fn run_day_cmd(a: RunDayArgs) -> Result<()> {
    let cat = catalog(&a.common.catalog)?;
    let (view, jobs) = load_view(&a.view, &a.common.jobs)?;
    let policy = match &a.policy {
        Some(p) => Some(Policy::load(BufReader::new(fs::File::open(p)?)).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let vmodel = match &a.vmodel {
        Some(p) => Some(
            ValidationModel::load(BufReader::new(fs::File::open(p)?)).with_context(|| format!("loading {}", p.display()))?,
        ),
        None => None,
    };
    if a.mode == Mode::Exploit && policy.is_none() {
        bail!("exploit mode needs --policy");
    }
    let cfg = DayConfig {
        mode: a.mode,
        budget: FlightBudget {
            queue_size: a.flight_queue,
            per_job_timeout_s: a.flight_timeout_s,
            total_budget_s: a.flight_budget_s,
            est_cost_delta_threshold: a.cost_delta,
        },
        threshold: a.threshold,
        flight: FlightConfig::default(),
        validate: !a.no_validate,
        seed: a.seed,
    };
    let out = run_day(
        &DayInputs {
            catalog: &cat,
            view: &view,
            jobs: &jobs,
            policy: policy.as_ref(),
            vmodel: vmodel.as_ref(),
        },
        &cfg,
    )?;
    fs::write(&a.out_hints, write_hints(&out.hints))?;
    fs::write(&a.out_report, out.report.to_text())?;
    if let Some(p) = &a.out_log {
        let mut f = fs::File::create(p)?;
        write_log(&mut f, &out.log)?;
    }
    if let Some(p) = &a.out_flights {
        fs::write(p, write_flights(&out.flights))?;
    }
    if let Some(p) = &a.out_history {
        let history: Vec<FlightObservation> = match a.mode {
            Mode::Log => collect_flight_history(&cat, &jobs, &out.log, a.history_flights, &cfg.flight, a.seed),
            Mode::Exploit => out.flights.iter().filter_map(|f| f.observation.clone()).collect(),
        };
        fs::write(p, write_observations(&history))?;
    }
    print!("{}", out.report.summary());
    Ok(())
}

fn brute_oracle(view: &Path, common: &Common, out: &Option<PathBuf>) -> Result<()> {
    let cat = catalog(&common.catalog)?;
    let (records, jobs) = load_view(view, &common.jobs)?;
    let in_view: BTreeSet<&str> = records.iter().map(|r| r.job_id.as_str()).collect();
    let list = |s: &BTreeSet<usize>| {
        if s.is_empty() {
            "-".to_string()
        } else {
            s.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
        }
    };
    let mut text = "job_id\ttemplate_id\tspan\toracle\trecall\n".to_string();
    let (mut hits, mut total) = (0usize, 0usize);
    for job in jobs.iter().filter(|j| in_view.contains(j.job_id.as_str())) {
        let span = compute_span(&cat, job)?;
        let oracle = brute_force_affecting_rules(&cat, job)?;
        hits += oracle.iter().filter(|r| span.contains(**r)).count();
        total += oracle.len();
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:e}\n",
            job.job_id,
            job.template_id,
            list(&span.rules),
            list(&oracle),
            recall(&span, &oracle)
        ));
    }
    let overall = if total == 0 { 1.0 } else { hits as f64 / total as f64 };
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    println!("span recall {overall:.4} ({hits}/{total} affecting rules)");
    Ok(())
}

fn aa_test(view: &Path, n: usize, seed: u64, out: &Path, common: &Common) -> Result<()> {
    let cat = catalog(&common.catalog)?;
    let (records, jobs) = load_view(view, &common.jobs)?;
    let in_view: BTreeSet<&str> = records.iter().map(|r| r.job_id.as_str()).collect();
    let noise = NoiseModel::default();
    let mut text = "job_id\tlatency_cov\tpn_hours_cov\tdata_read_cov\tdata_written_cov\n".to_string();
    let (mut lat, mut pn, mut count) = (0, 0, 0);
    for job in jobs.iter().filter(|j| in_view.contains(j.job_id.as_str())) {
        let s = aa_run(&cat, job, &cat.default_config(), n, &noise, seed)?;
        count += 1;
        lat += usize::from(s.latency_cov > 0.05);
        pn += usize::from(s.pn_hours_cov > 0.05);
        text.push_str(&format!(
            "{}\t{:e}\t{:e}\t{:e}\t{:e}\n",
            job.job_id, s.latency_cov, s.pn_hours_cov, s.data_read_cov, s.data_written_cov
        ));
    }
    fs::write(out, text)?;
    let pct = |k: usize| if count == 0 { 0.0 } else { 100.0 * k as f64 / count as f64 };
    println!(
        "{count} jobs x {n} runs: {:.1}% above 5% latency CoV, {:.1}% above 5% PN-hours CoV",
        pct(lat),
        pct(pn)
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenWorkload(a) => gen_workload(a),
        Command::RunDay(a) => run_day_cmd(a),
        Command::Report { input } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let r = DayReport::parse(&text).with_context(|| format!("parsing {}", input.display()))?;
            print!("{}", r.summary());
            Ok(())
        }
        Command::BruteOracle { view, common, out } => brute_oracle(&view, &common, &out),
        Command::AaTest {
            view,
            n,
            seed,
            out,
            common,
        } => aa_test(&view, n, seed, &out, &common),
        Command::TrainPolicy {
            logs,
            out,
            epochs,
            learning_rate,
            seed,
        } => {
            let mut records = Vec::new();
            for p in &logs {
                let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                records.extend(read_log(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?);
            }
            let params = LearnParams {
                epochs,
                learning_rate,
                seed,
                ..LearnParams::default()
            };
            let policy = Policy::learn(&records, params);
            let mut f = fs::File::create(&out)?;
            policy.save(&mut f)?;
            println!("trained on {} decisions -> {}", records.len(), out.display());
            Ok(())
        }
        Command::TrainVmodel { history, out } => {
            let mut obs = Vec::new();
            for p in &history {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                obs.extend(parse_observations(&text).with_context(|| format!("parsing {}", p.display()))?);
            }
            let (model, held) = train_validation_model(&obs)?;
            fs::write(&out, model.to_text())?;
            println!(
                "w0 {:.4} w_read {:.4} w_write {:.4}; held-out n={} R2={:.3}",
                model.w0, model.w_read, model.w_write, held.n, held.r2
            );
            Ok(())
        }
    }
}
