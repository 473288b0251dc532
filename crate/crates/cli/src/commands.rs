use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use spartsm::changepoint::{run_changepoint, ChangepointConfig, Interval};
use spartsm::condexp::CondExpMethod;
use spartsm::estimate::{fit_prepared, prepare};
use spartsm::eval::{
    coverage_experiment, normality_check, power_curve, roc_experiment, CoverageConfig, InferenceSetting, PowerConfig,
    RocConfig, RocModel,
};
use spartsm::inference::run_pipeline;
use spartsm::rng::rng_from_seed;
use spartsm::simulate::{
    sample_ggm_path, sample_ising_from_path, sample_truncated_ggm, ChangeKind, ChangingEdge, PrecisionPath,
    SampleLayout, Theta0Style,
};
use spartsm::{
    BasisSpec, FeatureMap, FitSummary, InferenceConfig, InferenceReport, LambdaChoice, LassoConfig, Layout, Targets,
    TimedDataset, WeightFunction,
};

use crate::args::{
    ChangepointArgs, CoverageArgs, DataArgs, Features, FitArgs, InferArgs, LayoutArg, NormalityArgs, PowerArgs,
    RocArgs, RocModelArg, SettingArg, SimModel, SimulateArgs, SmoothingArgs, SolverArgs, StudyArgs,
};
use crate::config::{parse_domain, parse_list};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

const TRUNCATED_ATTEMPTS: usize = 50;

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_rows<S: AsRef<str>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(config_error(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(config_error(format!("{name} must be positive")))
    }
}

fn parse_lambda(text: &str) -> Result<LambdaChoice> {
    text.parse().map_err(|e: spartsm::Error| config_error(format!("--lambda: {e}")))
}

fn parse_basis(text: &str) -> Result<BasisSpec> {
    text.parse().map_err(|e: spartsm::Error| config_error(format!("--basis: {e}")))
}

fn feature_map(kind: Features, d: usize) -> Result<FeatureMap> {
    match kind {
        Features::Gaussian => Ok(FeatureMap::gaussian_pairwise(d)),
        Features::Ising if d < 2 => Err(config_error("ising features need at least two variables")),
        Features::Ising => Ok(FeatureMap::ising_pairwise(d)),
        Features::Identity => Ok(FeatureMap::custom("identity", d, d, |x, out| out.copy_from_slice(x))),
    }
}

/// Dataset facts echoed into every output.
#[derive(Serialize)]
struct DatasetInfo {
    rows: usize,
    d: usize,
    layout: Layout,
    blocks: Option<usize>,
    domain: (f64, f64),
    features: Features,
}

fn load(data: &DataArgs) -> Result<(TimedDataset, FeatureMap, DatasetInfo)> {
    let path = data.data.as_ref().ok_or_else(|| config_error("--data is required"))?;
    let layout = match data.layout {
        LayoutArg::Auto => None,
        LayoutArg::Paired => Some(Layout::Paired),
        LayoutArg::Grouped => Some(Layout::Grouped),
    };
    let domain = data.domain.as_deref().map(parse_domain).transpose()?;
    let file = File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let ds = TimedDataset::read_csv(BufReader::new(file), layout, domain)?;
    let fmap = feature_map(data.features, ds.dim())?;
    let info = DatasetInfo {
        rows: ds.n_rows(),
        d: ds.dim(),
        layout: ds.layout(),
        blocks: (ds.layout() == Layout::Grouped).then(|| ds.n_blocks()),
        domain: ds.raw_domain(),
        features: data.features,
    };
    Ok((ds, fmap, info))
}

fn condexp_method(ds: &TimedDataset, s: &SmoothingArgs) -> Result<CondExpMethod> {
    if let Some(h) = s.bandwidth {
        if !(h.is_finite() && h > 0.0) {
            return Err(config_error(format!("--bandwidth must be positive, got {h}")));
        }
    }
    if ds.layout() == Layout::Grouped {
        if s.bandwidth.is_some() || s.bins.is_some() {
            log::warn!("grouped data uses block means; --bandwidth and --bins are ignored");
        }
        return Ok(CondExpMethod::GroupMean);
    }
    match s.bins {
        Some(0) => Err(config_error("--bins must be positive")),
        Some(n_bins) => Ok(CondExpMethod::Binned { n_bins }),
        None => Ok(CondExpMethod::NadarayaWatson { bandwidth: s.bandwidth, leave_one_out: s.leave_one_out }),
    }
}

fn solver_config(s: &SolverArgs) -> Result<LassoConfig> {
    check_positive("--max-iter", s.max_iter)?;
    if !(s.tol > 0.0) {
        return Err(config_error(format!("--tol must be positive, got {}", s.tol)));
    }
    Ok(LassoConfig { max_iter: s.max_iter, tol: s.tol, ..LassoConfig::default() })
}

#[derive(Serialize)]
struct Truth {
    model: SimModel,
    d: usize,
    n: usize,
    blocks: Option<usize>,
    seed: u64,
    edge_probability: Option<f64>,
    change_kind: ChangeKind,
    theta0: Vec<Vec<f64>>,
    changing_edges: Vec<ChangingEdge>,
    mask_count: usize,
    /// Feature indices whose natural parameter changes, for the model's
    /// feature map (Gaussian pairwise, or Ising pairwise for binary data).
    changing_features: Vec<usize>,
    /// Feature-space derivative of the natural parameter at t = 0.5.
    feature_derivative_mid: Vec<f64>,
}

fn default_edge_probability(model: SimModel) -> Option<f64> {
    match model {
        SimModel::GgmSine | SimModel::Ising => Some(0.02),
        SimModel::GgmLinear => Some(0.023),
        SimModel::TruncatedGgm => Some(0.2),
        SimModel::GgmInference => None,
    }
}

fn draw_path(args: &SimulateArgs, p: Option<f64>, rng: &mut spartsm::rng::SimRng) -> Result<PrecisionPath> {
    let d = args.d;
    let path = match (args.model, p) {
        (SimModel::GgmSine | SimModel::Ising, Some(p)) => {
            PrecisionPath::random(d, Theta0Style::Estimation, ChangeKind::sine(), p, rng)
        }
        (SimModel::GgmLinear | SimModel::TruncatedGgm, Some(p)) => {
            PrecisionPath::random(d, Theta0Style::Estimation, ChangeKind::LinearRamp { slope: 0.45 }, p, rng)
        }
        (SimModel::GgmInference, Some(p)) => PrecisionPath::random_inference(d, p, rng),
        (SimModel::GgmInference, None) => PrecisionPath::deterministic_inference(d, rng),
        (_, None) => unreachable!("every other model has a default edge probability"),
    };
    path.map_err(|e| match e {
        spartsm::Error::InvalidInput(msg) => config_error(msg),
        other => other.into(),
    })
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    if args.d < 2 {
        return Err(config_error(format!("--d must be at least 2, got {}", args.d)));
    }
    if args.model == SimModel::GgmInference && args.d < 5 {
        return Err(config_error("ggm-inference needs --d of at least 5"));
    }
    check_positive("--n", args.n)?;
    check_positive("--sweeps", args.sweeps)?;
    if let Some(p) = args.p {
        check_level("--p", p)?;
    }
    if let Some(m) = args.blocks {
        check_positive("--blocks", m)?;
        if matches!(args.model, SimModel::TruncatedGgm | SimModel::Ising) {
            return Err(config_error("--blocks is only available for the untruncated Gaussian models"));
        }
    }
    let p = args.p.or(default_edge_probability(args.model));
    let mut rng = rng_from_seed(args.seed);

    let (path, data) = match args.model {
        SimModel::TruncatedGgm => {
            let mut attempt = 0;
            loop {
                let path = draw_path(&args, p, &mut rng)?;
                match sample_truncated_ggm(&path, args.n, &mut rng) {
                    Ok(data) => break (path, data),
                    Err(spartsm::Error::AcceptanceTooLow { .. }) if attempt + 1 < TRUNCATED_ATTEMPTS => attempt += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        SimModel::Ising => {
            let path = draw_path(&args, p, &mut rng)?;
            let data = sample_ising_from_path(&path, args.sweeps, args.n, &mut rng)?;
            (path, data)
        }
        _ => {
            let path = draw_path(&args, p, &mut rng)?;
            let layout = match args.blocks {
                Some(m) => SampleLayout::Grouped { m, n_per: args.n },
                None => SampleLayout::Paired { n: args.n },
            };
            let data = sample_ggm_path(&path, layout, &mut rng)?;
            (path, data)
        }
    };

    let fmap = if args.model == SimModel::Ising {
        FeatureMap::ising_pairwise(args.d)
    } else {
        FeatureMap::gaussian_pairwise(args.d)
    };
    let mask = path.feature_mask(&fmap);
    let truth = Truth {
        model: args.model,
        d: args.d,
        n: args.n,
        blocks: args.blocks,
        seed: args.seed,
        edge_probability: p,
        change_kind: path.change_kind,
        theta0: (0..args.d).map(|i| path.theta0.row(i).iter().copied().collect()).collect(),
        changing_edges: path.edges.clone(),
        mask_count: path.edges.len(),
        changing_features: (0..fmap.dim()).filter(|&j| mask[j]).collect(),
        feature_derivative_mid: path.feature_derivative(&fmap, 0.5),
    };

    ensure_dir(&args.out_dir)?;
    let csv_path = args.out_dir.join("dataset.csv");
    let file = File::create(&csv_path).map_err(|e| CliError::Runtime(format!("{}: {e}", csv_path.display())))?;
    data.write_csv(BufWriter::new(file))?;
    write_json(&args.out_dir.join("truth.json"), &truth)?;
    log::info!("wrote {} rows to {}", data.n_rows(), csv_path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    dataset: DatasetInfo,
    #[serde(flatten)]
    fit: FitSummary,
}

pub fn fit(args: FitArgs) -> Result<()> {
    let lambda = parse_lambda(&args.lambda)?;
    let basis = parse_basis(&args.basis)?.build()?;
    let solver = solver_config(&args.solver)?;
    let (ds, fmap, info) = load(&args.data)?;
    let method = condexp_method(&ds, &args.smoothing)?;
    let prep = prepare(&ds, &fmap, &basis, &WeightFunction::default(), method)?;
    let fit = fit_prepared(&prep, lambda, &solver)?;
    write_json(&args.out, &FitOutput { dataset: info, fit: fit.summary() })
}

#[derive(Serialize)]
struct InferOutput {
    dataset: DatasetInfo,
    #[serde(flatten)]
    report: InferenceReport,
}

fn parse_targets(text: &str) -> Result<Targets> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(Targets::All);
    }
    let ix = parse_list::<usize>(text, "--targets")?;
    if ix.is_empty() {
        return Err(config_error("--targets is empty"));
    }
    Ok(Targets::Indices(ix))
}

pub fn infer(args: InferArgs) -> Result<()> {
    let lambda_lasso = parse_lambda(&args.lambda)?;
    let targets = parse_targets(&args.targets)?;
    check_level("--level", args.level)?;
    if let Some(l) = args.lambda_j {
        if !(l.is_finite() && l >= 0.0) {
            return Err(config_error(format!("--lambda-j must be non-negative, got {l}")));
        }
    }
    let solver = solver_config(&args.solver)?;
    let (ds, fmap, info) = load(&args.data)?;
    if let Targets::Indices(ix) = &targets {
        if let Some(bad) = ix.iter().find(|&&j| j >= fmap.dim()) {
            return Err(config_error(format!("target {bad} out of range for {} features", fmap.dim())));
        }
    }
    let cfg = InferenceConfig {
        condexp: condexp_method(&ds, &args.smoothing)?,
        lambda_lasso,
        lambda_j: args.lambda_j,
        targets,
        delta: args.level,
        solver,
    };
    let report = run_pipeline(&ds, &fmap, &WeightFunction::default(), &cfg)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(&args.out, &InferOutput { dataset: info, report })
}

#[derive(Serialize)]
struct ChangeOutput {
    dataset: DatasetInfo,
    config: ChangepointConfig,
    threshold: f64,
    fit: FitSummary,
    raw_intervals: Vec<Interval>,
    filtered_intervals: Vec<Interval>,
    /// Filtered intervals on the raw time axis.
    filtered_intervals_raw_time: Vec<(f64, f64)>,
}

pub fn changepoint(args: ChangepointArgs) -> Result<()> {
    check_level("--delta", args.delta)?;
    check_positive("--bins", args.bins)?;
    if args.grid < 2 {
        return Err(config_error("--grid must be at least 2"));
    }
    for (name, v) in [("--eps-sp", args.eps_sp), ("--eps-pp", args.eps_pp)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(config_error(format!("{name} must be non-negative, got {v}")));
        }
    }
    let cfg = ChangepointConfig {
        basis: parse_basis(&args.basis)?,
        bins: args.bins,
        lambda: parse_lambda(&args.lambda)?,
        grid_points: args.grid,
        delta: args.delta,
        eps_sp: args.eps_sp,
        eps_pp: args.eps_pp,
    };
    let (ds, fmap, info) = load(&args.data)?;
    let (fit, report) = run_changepoint(&ds, &fmap, &WeightFunction::default(), &cfg)?;
    ensure_dir(&args.out_dir)?;
    let file = File::create(args.out_dir.join("stat.csv"))?;
    report.write_stat_csv(BufWriter::new(file))?;
    let out = ChangeOutput {
        filtered_intervals_raw_time: report
            .filtered_intervals
            .iter()
            .map(|iv| (ds.to_raw_time(iv.start), ds.to_raw_time(iv.end)))
            .collect(),
        dataset: info,
        config: cfg,
        threshold: report.threshold,
        fit: fit.summary(),
        raw_intervals: report.raw_intervals,
        filtered_intervals: report.filtered_intervals,
    };
    write_json(&args.out_dir.join("change.json"), &out)
}

fn check_study(s: &StudyArgs) -> Result<()> {
    if s.d < 5 {
        return Err(config_error(format!("--d must be at least 5, got {}", s.d)));
    }
    check_positive("--n", s.n)?;
    check_level("--level", s.level)
}

fn setting(kind: SettingArg, p: f64) -> Result<InferenceSetting> {
    match kind {
        SettingArg::Deterministic => Ok(InferenceSetting::Deterministic),
        SettingArg::Random => {
            check_level("--p", p)?;
            Ok(InferenceSetting::Random { p })
        }
    }
}

#[derive(Serialize)]
struct RocOutput {
    config: RocConfig,
    mean_auc: f64,
    sd_auc: f64,
    auc: Vec<f64>,
}

pub fn roc(args: RocArgs) -> Result<()> {
    if args.d < 3 {
        return Err(config_error(format!("--d must be at least 3, got {}", args.d)));
    }
    check_positive("--n", args.n)?;
    check_positive("--reps", args.reps)?;
    if args.grid_points < 2 {
        return Err(config_error("--grid-points must be at least 2"));
    }
    let model = match args.model {
        RocModelArg::LinearGgm => RocModel::LinearGgm,
        RocModelArg::SineGgm => RocModel::SineGgm,
        RocModelArg::TruncatedGgm => {
            check_level("--p", args.p)?;
            RocModel::TruncatedGgm { p: args.p }
        }
    };
    let cfg = RocConfig { model, d: args.d, n: args.n, replications: args.reps, grid_points: args.grid_points, seed: args.seed };
    let summary = roc_experiment(&cfg)?;
    ensure_dir(&args.out_dir)?;
    let rows = summary.runs.iter().flat_map(|run| {
        run.curve
            .fpr
            .iter()
            .zip(&run.curve.tpr)
            .map(move |(f, t)| vec![run.seed_index.to_string(), f.to_string(), t.to_string()])
    });
    write_rows(&args.out_dir.join("roc_points.csv"), &["replication", "fpr", "tpr"], rows)?;
    let out = RocOutput {
        auc: summary.runs.iter().map(|r| r.curve.auc).collect(),
        config: summary.config,
        mean_auc: summary.mean_auc,
        sd_auc: summary.sd_auc,
    };
    write_json(&args.out_dir.join("roc.json"), &out)
}

fn run_coverage(study: &StudyArgs, kind: SettingArg, p: f64, reps: usize) -> Result<spartsm::eval::CoverageResult> {
    check_study(study)?;
    check_positive("--reps", reps)?;
    let cfg = CoverageConfig {
        setting: setting(kind, p)?,
        d: study.d,
        n: study.n,
        replications: reps,
        delta: study.level,
        edge: (0, 1),
        lambda_j_equals_lasso: study.lambda_j_equals_lasso,
        seed: study.seed,
    };
    Ok(coverage_experiment(&cfg)?)
}

#[derive(Serialize)]
struct CoverageOutput {
    config: CoverageConfig,
    miss_rate: f64,
    rejection_rate: f64,
}

pub fn coverage(args: CoverageArgs) -> Result<()> {
    let res = run_coverage(&args.study, args.setting, args.p, args.reps)?;
    let dir = &args.study.out_dir;
    ensure_dir(dir)?;
    let rows = res.outcomes.iter().enumerate().map(|(r, o)| {
        vec![
            r.to_string(),
            o.truth.to_string(),
            o.alpha_tilde.to_string(),
            o.sigma_hat.to_string(),
            o.standardized.to_string(),
            o.covered.to_string(),
            o.reject.to_string(),
        ]
    });
    write_rows(
        &dir.join("coverage.csv"),
        &["replication", "truth", "alpha_tilde", "sigma_hat", "standardized", "covered", "reject"],
        rows,
    )?;
    write_json(
        &dir.join("coverage.json"),
        &CoverageOutput { config: res.config, miss_rate: res.miss_rate, rejection_rate: res.rejection_rate },
    )
}

pub fn power(args: PowerArgs) -> Result<()> {
    check_study(&args.study)?;
    check_positive("--reps", args.reps)?;
    let effects = parse_list::<f64>(&args.effects, "--effects")?;
    if effects.is_empty() || effects.iter().any(|e| !e.is_finite()) {
        return Err(config_error("--effects needs at least one finite value"));
    }
    let cfg = PowerConfig {
        effects,
        d: args.study.d,
        n: args.study.n,
        replications: args.reps,
        delta: args.study.level,
        lambda_j_equals_lasso: args.study.lambda_j_equals_lasso,
        seed: args.study.seed,
    };
    let points = power_curve(&cfg)?;
    let dir = &args.study.out_dir;
    ensure_dir(dir)?;
    let rows = points.iter().map(|p| vec![p.effect.to_string(), p.rejection_rate.to_string()]);
    write_rows(&dir.join("power.csv"), &["effect", "rejection_rate"], rows)?;
    #[derive(Serialize)]
    struct PowerOutput<'a> {
        config: &'a PowerConfig,
        points: &'a [spartsm::eval::PowerPoint],
    }
    write_json(&dir.join("power.json"), &PowerOutput { config: &cfg, points: &points })
}

fn read_residuals(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("");
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            // A non-numeric first line is a header.
            Err(_) if line == 0 => {}
            _ => return Err(CliError::Runtime(format!("{}: bad residual '{field}' on line {}", path.display(), line + 1))),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct NormalityOutput {
    source: String,
    residuals: usize,
    ks_stat: f64,
    critical_value: f64,
    ks_pass_at_1pct: bool,
}

pub fn normality(args: NormalityArgs) -> Result<()> {
    let (residuals, source) = match &args.residuals {
        Some(path) => (read_residuals(path)?, path.display().to_string()),
        None => {
            let res = run_coverage(&args.study, args.setting, args.p, args.reps)?;
            (res.standardized_residuals(), "simulation".to_string())
        }
    };
    if residuals.len() < 50 {
        return Err(config_error(format!("normality check needs at least 50 residuals, got {}", residuals.len())));
    }
    let check = normality_check(&residuals)?;
    let dir = &args.study.out_dir;
    ensure_dir(dir)?;
    let rows = check.qq_points.iter().map(|(q, r)| vec![q.to_string(), r.to_string()]);
    write_rows(&dir.join("qq.csv"), &["normal_quantile", "residual"], rows)?;
    write_json(
        &dir.join("normality.json"),
        &NormalityOutput {
            source,
            residuals: residuals.len(),
            ks_stat: check.ks_stat,
            critical_value: check.critical_value,
            ks_pass_at_1pct: check.ks_pass_at_1pct,
        },
    )
}
