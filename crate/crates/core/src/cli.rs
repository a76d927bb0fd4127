//! Command-line front end. [`run`] parses arguments and returns the process exit code:
//! 0 on success, 2 for usage or validation errors, 3 for numeric failures.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::{
    consistency_experiment, coverage_experiment, error_rate_experiment, null_calibration,
    write_consistency_csv, write_coverage_csv, write_error_grid_csv, ConsistencyConfig,
    CoverageConfig, ErrorGridConfig, NullCalibrationConfig,
};
use crate::inference::{covariance_mle, fit_admixture, fit_linkage, FitOptions};
use crate::io::{
    load_frequencies, load_genotypes, load_labels, load_map, summarize_panel, write_frequencies,
    write_genotypes, write_labeled_matrix, write_map, write_panel_summary, write_results,
    FrequencyTable, Layout, MapTable, PanelDataset, PopulationLabels, ResultRow,
};
use crate::lrt::{run_population_test, run_test};
use crate::model::{
    check_layout, validate_assumptions, AlleleFrequencySet, AssumptionConfig, EmissionMode,
    GenotypeData, Ploidy, Recombination,
};
use crate::simulate::{simulate_panel, FrequencySpec, MapSpec, SimulationConfig};

#[derive(Parser, Debug)]
#[command(name = "admixlink", version, about = "Linkage vs. Admixture model fitting and testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a panel and write genotype, frequency, map and label files.
    Simulate(SimulateArgs),
    /// Fit one model per individual.
    Fit(FitArgs),
    /// Likelihood-ratio test per individual with given frequencies.
    Test(TestArgs),
    /// Per-individual tests over a panel, optionally with leave-one-out frequencies.
    TestPanel(PanelArgs),
    /// One test with individual ancestries and a shared recombination parameter.
    TestPopulation(TestArgs),
    /// Asymptotic covariance of the Linkage or Admixture MLE for one individual.
    Covariance(CovarianceArgs),
    /// Monte-Carlo evaluation experiments.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug, Clone)]
struct FitFlags {
    /// Number of optimizer starts.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EmissionArg::Standard)]
    emission: EmissionArg,
}

impl FitFlags {
    fn options(&self) -> FitOptions {
        FitOptions {
            n_starts: self.starts.max(1),
            seed: self.seed,
            emission: self.emission.into(),
            ..Default::default()
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EmissionArg {
    Standard,
    PaperLiteral,
}

impl From<EmissionArg> for EmissionMode {
    fn from(e: EmissionArg) -> Self {
        match e {
            EmissionArg::Standard => EmissionMode::Standard,
            EmissionArg::PaperLiteral => EmissionMode::PaperLiteral,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModelArg {
    Admixture,
    Linkage,
}

#[derive(Args, Debug)]
struct InputFlags {
    #[arg(long)]
    genotypes: PathBuf,
    #[arg(long)]
    freqs: PathBuf,
    #[arg(long)]
    map: PathBuf,
    /// Use only the first haplotype of diploid individuals.
    #[arg(long)]
    haploid_track: bool,
    /// Restrict to one individual.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    input: InputFlags,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputFlags,
    #[arg(long, value_enum, default_value_t = ModelArg::Linkage)]
    model: ModelArg,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CovarianceArgs {
    #[command(flatten)]
    input: InputFlags,
    #[arg(long, value_enum, default_value_t = ModelArg::Linkage)]
    model: ModelArg,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PanelArgs {
    #[arg(long)]
    genotypes: PathBuf,
    /// Required unless --loo is given.
    #[arg(long)]
    freqs: Option<PathBuf>,
    #[arg(long)]
    map: PathBuf,
    /// `id<TAB>population` file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Estimate frequencies from the other labelled individuals for each tested individual.
    #[arg(long)]
    loo: bool,
    #[arg(long)]
    haploid_track: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the non-rejection summary (printed to stdout otherwise).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Linkage)]
    model: ModelArg,
    /// Markers per chromosome, comma separated.
    #[arg(long, default_value = "100", value_delimiter = ',')]
    markers: Vec<usize>,
    /// Ancestry proportions, comma separated.
    #[arg(long, default_value = "0.5,0.5", value_delimiter = ',')]
    q: Vec<f64>,
    /// Recombination parameter; "inf" for the Admixture Model.
    #[arg(long, default_value = "1")]
    r: f64,
    /// Distance between adjacent markers in cM.
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    #[arg(long, default_value_t = 1)]
    individuals: usize,
    #[arg(long)]
    diploid: bool,
    /// Individual i is labelled population (i mod K) and gets this much ancestry from it.
    #[arg(long)]
    structured: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    freq_low: f64,
    #[arg(long, default_value_t = 0.9)]
    freq_high: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EmissionArg::Standard)]
    emission: EmissionArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Experiment {
    /// Type-I / type-II error over the (d, r) grid.
    Grid,
    Coverage,
    Consistency,
    /// Distribution of the statistic on null data.
    Calibration,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, value_enum, default_value_t = Experiment::Grid)]
    experiment: Experiment,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    markers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    d_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    r_values: Option<Vec<f64>>,
    /// Marker counts for the consistency experiment.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Test(a) => cmd_test(&a),
        Command::TestPanel(a) => cmd_test_panel(&a),
        Command::TestPopulation(a) => cmd_test_population(&a),
        Command::Covariance(a) => cmd_covariance(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(BufWriter::new(f))
}

struct Inputs {
    panel: PanelDataset,
    freqs: FrequencyTable,
    map: MapTable,
}

fn restrict(panel: PanelDataset, id: Option<&str>, haploid_track: bool) -> Result<PanelDataset> {
    let (ids, individuals): (Vec<_>, Vec<_>) = panel
        .ids
        .into_iter()
        .zip(panel.individuals)
        .filter(|(i, _)| id.is_none_or(|want| want == i))
        .map(|(i, d)| (i, if haploid_track { d.first_track() } else { d }))
        .unzip();
    if ids.is_empty() {
        return Err(Error::InvalidInput(format!(
            "individual {} not found",
            id.unwrap_or("(any)")
        )));
    }
    PanelDataset::new(ids, individuals, panel.layout)
}

fn load_inputs(input: &InputFlags) -> Result<Inputs> {
    let panel = load_genotypes(&input.genotypes)?;
    let freqs = load_frequencies(&input.freqs)?;
    let map = load_map(&input.map)?;
    panel.layout.ensure_same(&freqs.layout, "genotype and frequency files")?;
    panel.layout.ensure_same(&map.layout, "genotype and map files")?;
    report_assumptions(&panel, &freqs.freqs, &map);
    let panel = restrict(panel, input.id.as_deref(), input.haploid_track)?;
    Ok(Inputs { panel, freqs, map })
}

fn report_assumptions(panel: &PanelDataset, freqs: &AlleleFrequencySet, map: &MapTable) {
    if freqs.clamped_count() > 0 {
        eprintln!("warning: {} allele frequencies clamped into bounds", freqs.clamped_count());
    }
    if let Some(first) = panel.individuals.first() {
        let report = validate_assumptions(first, freqs, &map.map, &AssumptionConfig::default());
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
}

fn cmd_test(a: &TestArgs) -> Result<()> {
    let inputs = load_inputs(&a.input)?;
    let opts = FitOptions {
        parallel: false,
        ..a.fit.options()
    };
    let rows = inputs
        .panel
        .individuals
        .par_iter()
        .zip(&inputs.panel.ids)
        .map(|(d, id)| {
            run_test(d, &inputs.freqs.freqs, &inputs.map.map, a.alpha, &opts).map(|t| ResultRow::from_test(id, &t))
        })
        .collect::<Result<Vec<_>>>()?;
    write_results(&rows, inputs.freqs.freqs.k(), create(&a.out)?)
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let inputs = load_inputs(&a.input)?;
    let opts = FitOptions {
        parallel: false,
        ..a.fit.options()
    };
    let k = inputs.freqs.freqs.k();
    let fits = inputs
        .panel
        .individuals
        .par_iter()
        .map(|d| match a.model {
            ModelArg::Admixture => fit_admixture(d, &inputs.freqs.freqs, &opts),
            ModelArg::Linkage => fit_linkage(d, &inputs.freqs.freqs, &inputs.map.map, &opts),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut header: Vec<String> = ["id", "model", "ell"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|i| format!("q_hat_{i}")));
    header.extend(["r_hat", "converged", "boundary_flag"].map(String::from));
    w.write_record(&header)?;
    for (id, fit) in inputs.panel.ids.iter().zip(&fits) {
        for warning in &fit.warnings {
            eprintln!("warning: {id}: {warning}");
        }
        let mut rec = vec![id.clone(), fit.model.to_string(), fit.ell_hat.to_string()];
        rec.extend(fit.theta_hat.q.iter().map(f64::to_string));
        rec.push(fit.theta_hat.r.to_string());
        rec.push(fit.converged.to_string());
        rec.push(fit.is_boundary().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_covariance(a: &CovarianceArgs) -> Result<()> {
    let inputs = load_inputs(&a.input)?;
    let opts = a.fit.options();
    let data = &inputs.panel.individuals[0];
    let freqs = &inputs.freqs.freqs;
    let fit = match a.model {
        ModelArg::Admixture => fit_admixture(data, freqs, &opts)?,
        ModelArg::Linkage => fit_linkage(data, freqs, &inputs.map.map, &opts)?,
    };
    let cov = covariance_mle(&fit, data, freqs, &inputs.map.map, opts.emission)?;
    for w in &cov.warnings {
        eprintln!("warning: {w}");
    }
    write_labeled_matrix(&cov.labels, &cov.natural, create(&a.out)?)
}

fn cmd_test_population(a: &TestArgs) -> Result<()> {
    let inputs = load_inputs(&a.input)?;
    let opts = a.fit.options();
    let freqs = &inputs.freqs.freqs;
    let t = run_population_test(&inputs.panel.individuals, freqs, &inputs.map.map, a.alpha, &opts)?;
    let mut rows = Vec::with_capacity(inputs.panel.ids.len() + 1);
    for (i, id) in inputs.panel.ids.iter().enumerate() {
        let data = &inputs.panel.individuals[i];
        let q = &t.alt_fit.q_hats[i];
        let alt = crate::likelihood::forward_loglik(
            data,
            freqs,
            &inputs.map.map,
            &crate::model::ParameterPoint::new(q.clone(), t.alt_fit.r_hat)?,
            opts.emission,
        )?;
        rows.push(ResultRow {
            id: id.clone(),
            ell_null: t.null_fits[i].ell_hat,
            ell_alt: alt.ell,
            lambda: t.lambda,
            p_value: t.p_value,
            reject: t.reject,
            q_hat: q.clone(),
            r_hat: t.alt_fit.r_hat,
            boundary: t.alt_fit.r_hat.is_infinite() || q.iter().any(|v| *v <= 1e-4 || *v >= 1.0 - 1e-4),
        });
    }
    let k = freqs.k();
    let n = t.alt_fit.q_hats.len() as f64;
    let mean_q = (0..k)
        .map(|j| t.alt_fit.q_hats.iter().map(|q| q[j]).sum::<f64>() / n)
        .collect();
    let null_total: f64 = t.null_fits.iter().map(|f| f.log_likelihood()).sum();
    rows.push(ResultRow {
        id: "population".into(),
        ell_null: null_total / t.m_total as f64,
        ell_alt: t.alt_fit.ell,
        lambda: t.lambda,
        p_value: t.p_value,
        reject: t.reject,
        q_hat: mean_q,
        r_hat: t.alt_fit.r_hat,
        boundary: t.alt_fit.r_hat.is_infinite(),
    });
    write_results(&rows, k, create(&a.out)?)
}

fn cmd_test_panel(a: &PanelArgs) -> Result<()> {
    let panel = load_genotypes(&a.genotypes)?;
    let map = load_map(&a.map)?;
    panel.layout.ensure_same(&map.layout, "genotype and map files")?;
    let panel = restrict(panel, None, a.haploid_track)?;
    let labels = a.labels.as_deref().map(|p| load_labels(p, &panel)).transpose()?;
    let fixed = a.freqs.as_deref().map(load_frequencies).transpose()?;
    if let Some(f) = &fixed {
        panel.layout.ensure_same(&f.layout, "genotype and frequency files")?;
    }
    let labels = match (&labels, &fixed) {
        (Some(l), Some(f)) => Some(l.aligned_to(&f.populations)?),
        (l, _) => l.clone(),
    };
    let (k, loo_labels): (usize, Option<&PopulationLabels>) = if a.loo {
        let l = labels
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--loo requires --labels".into()))?;
        if l.populations.len() < 2 {
            return Err(Error::InvalidInput("--loo needs at least two labelled populations".into()));
        }
        (l.populations.len(), Some(l))
    } else {
        let f = fixed
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--freqs is required without --loo".into()))?;
        (f.freqs.k(), None)
    };
    let opts = FitOptions {
        parallel: false,
        ..a.fit.options()
    };
    let rows = (0..panel.ids.len())
        .into_par_iter()
        .map(|i| {
            let freqs = match loo_labels {
                Some(l) => crate::io::leave_one_out_frequencies(&panel, i, l)?,
                None => fixed.as_ref().expect("checked above").freqs.clone(),
            };
            let t = run_test(&panel.individuals[i], &freqs, &map.map, a.alpha, &opts)?;
            Ok(ResultRow::from_test(&panel.ids[i], &t))
        })
        .collect::<Result<Vec<_>>>()?;
    write_results(&rows, k, create(&a.out)?)?;
    let rejects: Vec<bool> = rows.iter().map(|r| r.reject).collect();
    let summary = summarize_panel(&rejects, labels.as_ref());
    match &a.summary {
        Some(p) => write_panel_summary(&summary, create(p)?),
        None => write_panel_summary(&summary, std::io::stdout().lock()),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let k = a.q.len();
    let r = match a.model {
        ModelArg::Admixture => Recombination::Infinite,
        ModelArg::Linkage => Recombination::new(a.r).map_err(|e| Error::Config(e.to_string()))?,
    };
    let config = SimulationConfig {
        marker_counts: a.markers.clone(),
        q: a.q.clone(),
        r,
        map: MapSpec::Constant(a.d),
        freqs: FrequencySpec::Uniform {
            lo: a.freq_low,
            hi: a.freq_high,
        },
        ploidy: if a.diploid {
            Ploidy::PhasedDiploid
        } else {
            Ploidy::Haploid
        },
        emission: a.emission.into(),
        seed: a.seed,
        stream: 0,
    };
    let qs: Option<Vec<Vec<f64>>> = match a.structured {
        Some(major) => {
            if !(major > 0.0 && major <= 1.0) || k < 2 {
                return Err(Error::Config(format!("--structured must be in (0, 1] with K >= 2, got {major}")));
            }
            let minor = (1.0 - major) / (k - 1) as f64;
            Some(
                (0..a.individuals)
                    .map(|i| (0..k).map(|j| if j == i % k { major } else { minor }).collect())
                    .collect(),
            )
        }
        None => None,
    };
    let sims = simulate_panel(&config, a.individuals, qs.as_deref())?;
    let first = sims
        .first()
        .ok_or_else(|| Error::Config("--individuals must be at least 1".into()))?;
    let layout = Layout::numbered(&a.markers);
    let ids: Vec<String> = (1..=a.individuals).map(|i| format!("ind{i}")).collect();
    fs::create_dir_all(&a.out)?;
    let freqs = FrequencyTable {
        layout: layout.clone(),
        populations: (1..=k).map(|j| format!("pop{j}")).collect(),
        freqs: first.freqs.clone(),
    };
    write_frequencies(&freqs, create(&a.out.join("freqs.tsv"))?)?;
    let map = MapTable {
        layout: layout.clone(),
        map: first.map.clone(),
    };
    write_map(&map, create(&a.out.join("map.tsv"))?)?;
    let data: Vec<GenotypeData> = sims.iter().map(|s| s.data.clone()).collect();
    for d in &data {
        check_layout(d, &first.freqs, Some(&first.map))?;
    }
    let panel = PanelDataset::new(ids.clone(), data, layout)?;
    write_genotypes(&panel, create(&a.out.join("genotypes.tsv"))?)?;
    let mut labels = create(&a.out.join("labels.tsv"))?;
    writeln!(labels, "id\tpopulation")?;
    for (i, id) in ids.iter().enumerate() {
        let pop = match &qs {
            Some(_) => i % k,
            None => argmax(&a.q),
        };
        writeln!(labels, "{id}\tpop{}", pop + 1)?;
    }
    labels.flush()?;
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let fit = a.fit.options();
    let seed = a.fit.seed;
    let out = create(&a.out)?;
    match a.experiment {
        Experiment::Grid => {
            let d = ErrorGridConfig::default();
            let config = ErrorGridConfig {
                d_values: a.d_values.clone().unwrap_or(d.d_values),
                r_values: a.r_values.clone().unwrap_or(d.r_values),
                markers: a.markers.unwrap_or(d.markers),
                replicates: a.replicates.unwrap_or(d.replicates),
                alpha: a.alpha,
                seed,
                fit,
                ..d
            };
            let result = error_rate_experiment(&config)?;
            eprintln!("pooled type-I error: {}", result.pooled_type_one_error());
            write_error_grid_csv(&result, out)
        }
        Experiment::Coverage => {
            let d = CoverageConfig::default();
            let config = CoverageConfig {
                markers: a.markers.unwrap_or(d.markers),
                replicates: a.replicates.unwrap_or(d.replicates),
                d: a.d_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.d),
                r0: a.r_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.r0),
                seed,
                fit,
                ..d
            };
            write_coverage_csv(&coverage_experiment(&config)?, out)
        }
        Experiment::Consistency => {
            let d = ConsistencyConfig::default();
            let config = ConsistencyConfig {
                schedule: a.schedule.clone().unwrap_or(d.schedule),
                replicates: a.replicates.unwrap_or(d.replicates),
                d: a.d_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.d),
                r0: a.r_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.r0),
                seed,
                fit,
                ..d
            };
            write_consistency_csv(&consistency_experiment(&config)?, out)
        }
        Experiment::Calibration => {
            let d = NullCalibrationConfig::default();
            let config = NullCalibrationConfig {
                markers: a.markers.unwrap_or(d.markers),
                replicates: a.replicates.unwrap_or(d.replicates),
                d: a.d_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.d),
                alpha: a.alpha,
                seed,
                fit,
                ..d
            };
            let cal = null_calibration(&config)?;
            eprintln!(
                "rejection rate {}; KS vs chi2(1) p = {}; KS vs mixture p = {}",
                cal.rejection_rate, cal.ks_chi2_p_value, cal.ks_mixture_p_value
            );
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["probability", "empirical", "chi2_1", "half_mixture"])?;
            for (p, e, c, m) in &cal.quantiles {
                w.write_record([p, e, c, m].map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(())
        }
    }
}
