use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tvvar::dataset::{load_csv, ColumnRoles, TimeSeriesDataset};
use tvvar::evaluation::{evaluate_run, EvaluationReport, QUARTILES};
use tvvar::inference::{
    block_bootstrap, bootstrap_seeds, compute_prediction_errors, Combination, DEFAULT_BLOCKS, DEFAULT_N_BOOT,
    DEFAULT_QUANTILES,
};
use tvvar::ks_estimator::{default_bandwidth_grid, select_bandwidth, BandwidthOptions, BandwidthSelection, KsOptions};
use tvvar::model::{EstimationSpec, Method, TimeVaryingVarModel};
use tvvar::penalized_regression::DEFAULT_FOLDS;
use tvvar::seed;
use tvvar::simulation::{
    generate_truth, simulate_tv_var, structure_stats, CoefficientArray, KindCategory, StructureDesign,
    DEFAULT_NOISE_VARIANCE, DEFAULT_THETA,
};
use tvvar::spline_estimator::DEFAULT_K_MAX;

use crate::args::*;
use crate::config::{create_file, read_json, usage, write_json, CliResult, Metadata};
use crate::svg::{line_chart, Series};

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    v.as_ref().ok_or_else(|| usage(format!("--{flag} is required")))
}

fn parse_method(s: Option<&str>) -> CliResult<Method> {
    Ok(s.unwrap_or("ks-l1").parse::<Method>()?)
}

struct DataSource<'a> {
    data: &'a Option<PathBuf>,
    values: &'a Option<Vec<String>>,
    time: &'a Option<String>,
    beep: &'a Option<String>,
    day: &'a Option<String>,
}

/// Load the input CSV; `time_norm`, `beep` and `day` columns are used when
/// present and not overridden.
fn load(src: DataSource<'_>) -> CliResult<TimeSeriesDataset> {
    let path = required(src.data, "data")?;
    let header: Vec<String> = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .and_then(|mut r| r.headers().map(|h| h.iter().map(str::to_string).collect()))
        .map_err(|e| tvvar::Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let detect = |given: &Option<String>, name: &str| {
        given.clone().or_else(|| header.iter().any(|h| h == name).then(|| name.to_string()))
    };
    let roles = ColumnRoles {
        values: src.values.clone().unwrap_or_default(),
        time: detect(src.time, "time_norm"),
        beep: detect(src.beep, "beep"),
        day: detect(src.day, "day"),
    };
    let (beep, day) = match (&roles.beep, &roles.day) {
        (Some(_), Some(_)) => (roles.beep.clone(), roles.day.clone()),
        _ if src.beep.is_some() || src.day.is_some() => return Err(usage("--beep and --day must be given together")),
        _ => (None, None),
    };
    Ok(load_csv(path, &ColumnRoles { beep, day, ..roles })?)
}

fn set_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(format!("cannot configure threads: {e}")))?;
    }
    Ok(())
}

fn write_csv_file(path: &Path, meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut f = create_file(path)?;
    for c in meta.comment_lines() {
        writeln!(f, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header).map_err(tvvar::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(tvvar::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> CliResult<()> {
    let out = required(&args.out, "out")?;
    let truth_path = required(&args.truth, "truth")?;
    set_threads(args.threads)?;
    let design = match args.preset.as_deref().unwrap_or("sim-a") {
        "sim-a" => StructureDesign::sim_a(),
        "sim-b" => StructureDesign::sim_b(),
        other => return Err(usage(format!("unknown preset '{other}' (expected sim-a or sim-b)"))),
    };
    let n = args.n.unwrap_or(530);
    let seed = args.seed.unwrap_or(0);
    let var = args.noise_variance.unwrap_or(DEFAULT_NOISE_VARIANCE);
    if var.is_nan() || var <= 0.0 {
        return Err(usage("--noise-variance must be positive"));
    }
    let truth = generate_truth(&design, n, args.theta.unwrap_or(DEFAULT_THETA), var.sqrt(), seed)?;
    let data = simulate_tv_var(&truth, seed::derive(seed, &[1]))?;
    let meta = Metadata::new("simulate", Some(seed), &args)?;
    data.write_csv(create_file(out)?, &meta.comment_lines())?;
    write_json(truth_path, &meta, "truth", &truth)?;
    let stats = structure_stats(&truth.structure());
    println!("Redraws: {}", truth.redraws);
    println!("Nonzero parameters: {} of {}", stats.nonzero, truth.p * truth.p);
    println!("Empirical density: {:.4}", stats.nonzero as f64 / (truth.p * truth.p) as f64);
    println!("Maximum spectral radius: {:.4}", truth.max_spectral_radius());
    Ok(())
}

fn bandwidth_search(
    data: &TimeSeriesDataset,
    spec: &EstimationSpec,
    grid: Option<&Vec<f64>>,
    bw_folds: usize,
    foldsize: Option<usize>,
) -> CliResult<BandwidthSelection> {
    let grid = grid.cloned().unwrap_or_else(default_bandwidth_grid);
    let design = spec.design(data)?;
    let opts = BandwidthOptions {
        folds: bw_folds,
        foldsize,
        regularized: spec.method.is_regularized(),
        seed: spec.seed,
        ks: KsOptions { folds: spec.folds, ..KsOptions::default() },
    };
    let sel = select_bandwidth(&design, &grid, &opts)?;
    if sel.at_endpoint() {
        eprintln!(
            "warning: the smallest error is at the edge of the candidate grid (b = {}); another search should be conducted around it",
            sel.bandwidth
        );
    }
    Ok(sel)
}

pub fn fit(args: FitArgs) -> CliResult<()> {
    let out = required(&args.out, "out")?;
    set_threads(args.threads)?;
    let method = parse_method(args.method.as_deref())?;
    let data = load(DataSource { data: &args.data, values: &args.values, time: &args.time, beep: &args.beep, day: &args.day })?;
    let mut spec = EstimationSpec::new(method, args.estpoints.unwrap_or(20));
    spec.lags = args.lags.clone().unwrap_or_else(|| vec![1]);
    spec.k = args.k;
    spec.k_max = args.k_max.unwrap_or(DEFAULT_K_MAX);
    spec.standardize = args.standardize.unwrap_or(true);
    spec.folds = args.folds.unwrap_or(DEFAULT_FOLDS);
    spec.seed = args.seed.unwrap_or(0);
    if spec.est_points.is_empty() {
        return Err(usage("--estpoints must be positive"));
    }
    let design = spec.design(&data)?;
    let (a, b) = (design.included_rows(), design.total_rows);
    println!("Rows included in VAR design matrix: {a} / {b} ({:.2}%)", 100.0 * a as f64 / b as f64);

    if method.is_kernel() {
        spec.bandwidth = match (args.bwselect.unwrap_or(false), args.bandwidth) {
            (true, _) => {
                let sel = bandwidth_search(&data, &spec, args.grid.as_ref(), 1, None)?;
                println!("Selected bandwidth: {}", sel.bandwidth);
                Some(sel.bandwidth)
            }
            (false, Some(b)) => Some(b),
            (false, None) => return Err(usage("kernel methods need --bandwidth or --bwselect")),
        };
    }
    let model = spec.fit_design(&design)?;
    if let Some(sp) = &model.spline {
        println!("Basis dimension k: {}", sp.k);
        for w in &sp.warnings {
            eprintln!("warning: {w}");
        }
    }
    let meta = Metadata::new("fit", Some(spec.seed), &args)?;
    write_json(out, &meta, "model", &model)?;
    println!("Fitted {} at {} estimation points", method.label(), model.n_est());
    Ok(())
}

pub fn bwselect(args: BwselectArgs) -> CliResult<()> {
    let out = required(&args.out, "out")?;
    set_threads(args.threads)?;
    let method = parse_method(args.method.as_deref())?;
    if !method.is_kernel() {
        return Err(usage("bandwidth selection applies to ks and ks-l1"));
    }
    let data = load(DataSource { data: &args.data, values: &args.values, time: &args.time, beep: &args.beep, day: &args.day })?;
    let mut spec = EstimationSpec::new(method, 1);
    spec.lags = args.lags.clone().unwrap_or_else(|| vec![1]);
    spec.standardize = args.standardize.unwrap_or(true);
    spec.folds = args.folds.unwrap_or(DEFAULT_FOLDS);
    spec.seed = args.seed.unwrap_or(0);
    let sel = bandwidth_search(&data, &spec, args.grid.as_ref(), args.bw_folds.unwrap_or(1), args.foldsize)?;
    let rows: Vec<Vec<String>> = sel
        .candidates
        .iter()
        .zip(&sel.mean_errors)
        .map(|(b, e)| vec![b.to_string(), e.map_or_else(|| "NA".into(), |v| v.to_string())])
        .collect();
    let meta = Metadata::new("bwselect", Some(spec.seed), &args)?;
    write_csv_file(out, &meta, &["bandwidth", "mean_error"], &rows)?;
    println!("{:>10} {:>12}", "bandwidth", "mean_error");
    for (b, e) in sel.candidates.iter().zip(&sel.mean_errors) {
        let e = e.map_or_else(|| "NA".into(), |v| format!("{v:.6}"));
        println!("{b:>10} {e:>12}");
    }
    println!("Test set size: {} occasions x {} fold(s)", sel.foldsize, sel.folds);
    println!("Selected bandwidth: {}", sel.bandwidth);
    Ok(())
}

fn load_model(path: &Path) -> CliResult<TimeVaryingVarModel> {
    read_json(path, "model")
}

pub fn resample(args: ResampleArgs) -> CliResult<()> {
    let out = required(&args.out, "out")?;
    let model_path = required(&args.model, "model")?;
    set_threads(args.threads)?;
    let model = load_model(model_path)?;
    let spec = model
        .spec
        .clone()
        .ok_or_else(|| usage("model file carries no estimation settings; refit it with `fit`"))?;
    let data = load(DataSource { data: &args.data, values: &args.values, time: &args.time, beep: &args.beep, day: &args.day })?;
    let seeds = match &args.seeds {
        Some(s) => s.clone(),
        None => bootstrap_seeds(args.seed.unwrap_or(0), args.nb.unwrap_or(DEFAULT_N_BOOT)),
    };
    let probs = args.quantiles.clone().unwrap_or_else(|| DEFAULT_QUANTILES.to_vec());
    let dist = block_bootstrap(&data, &spec, args.blocks.unwrap_or(DEFAULT_BLOCKS), &seeds, &probs)?;
    for f in &dist.failures {
        eprintln!("warning: replicate {} (seed {}) skipped: {}", f.replicate + 1, f.seed, f.message);
    }
    let meta = Metadata::new("resample", args.seed, &args)?;
    write_json(out, &meta, "bootstrap", &dist)?;
    if let Some(csv) = &args.csv {
        dist.write_quantiles_csv(create_file(csv)?, &meta.comment_lines())?;
    }
    println!(
        "Bootstrap: {} of {} replicates fitted with {} blocks",
        dist.succeeded.len(),
        dist.n_boot,
        dist.blocks
    );
    println!("Quantile bands summarize sampling variability; they are not confidence intervals for the true parameters.");
    Ok(())
}

pub fn predict(args: PredictArgs) -> CliResult<()> {
    let out = required(&args.out, "out")?;
    let model_path = required(&args.model, "model")?;
    set_threads(args.threads)?;
    let model = load_model(model_path)?;
    let data = load(DataSource { data: &args.data, values: &args.values, time: &args.time, beep: &args.beep, day: &args.day })?;
    let how: Vec<Combination> = args
        .tv_method
        .clone()
        .unwrap_or_else(|| vec!["weighted".into()])
        .iter()
        .map(|s| s.parse::<Combination>())
        .collect::<Result<_, _>>()?;
    if how.is_empty() {
        return Err(usage("--tv-method needs at least one rule"));
    }
    let reports = how.iter().map(|&h| compute_prediction_errors(&model, &data, h)).collect::<Result<Vec<_>, _>>()?;
    let mut header = vec!["variable".to_string()];
    for r in &reports {
        header.push(format!("rmse_{}", r.combination.name()));
        header.push(format!("r2_{}", r.combination.name()));
    }
    let rows: Vec<Vec<String>> = (0..model.p())
        .map(|i| {
            let mut row = vec![model.labels[i].clone()];
            for r in &reports {
                row.push(r.rmse[i].to_string());
                row.push(r.r2[i].to_string());
            }
            row
        })
        .collect();
    let meta = Metadata::new("predict", None, &args)?;
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_file(out, &meta, &header_refs, &rows)?;
    if let Some(json) = &args.json {
        write_json(json, &meta, "errors", &reports)?;
    }
    for r in &reports {
        println!("Prediction errors ({}):", r.combination.name());
        print!("{}", r.to_table());
    }
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let out = required(&args.out, "out")?;
    let models = required(&args.models, "models")?;
    let truths = required(&args.truths, "truths")?;
    set_threads(args.threads)?;
    if models.is_empty() {
        return Err(usage("no model files given"));
    }
    if models.len() != truths.len() {
        return Err(usage(format!("{} model files but {} truth files", models.len(), truths.len())));
    }
    let probs = args.probs.clone().unwrap_or_else(|| QUARTILES.to_vec());
    let tol = args.zero_tol.unwrap_or(0.0);
    let runs = models
        .par_iter()
        .zip(truths)
        .map(|(m, t)| {
            let model = load_model(m)?;
            let truth: CoefficientArray = read_json(t, "truth")?;
            Ok(evaluate_run(&model, &truth, tol)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = EvaluationReport::from_runs(&runs, &probs)?;
    let meta = Metadata::new("evaluate", None, &args)?;
    report.write_csv(create_file(out)?, &meta.comment_lines())?;
    if let Some(json) = &args.json {
        write_json(json, &meta, "report", &report)?;
    }
    if let Some(dir) = &args.plots {
        fs::create_dir_all(dir)?;
        write_plots(&report, dir)?;
    }
    for c in &report.cells {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".into(), |v| format!("{v:.3}"));
        println!(
            "{:<8} n={:<6} iterations={:<4} sensitivity={} precision={}{}",
            c.method.label(),
            c.n,
            c.iterations,
            fmt(c.recovery.sensitivity),
            fmt(c.recovery.precision),
            if c.recovery.dense { " (dense estimator)" } else { "" }
        );
    }
    Ok(())
}

fn write_plots(report: &EvaluationReport, dir: &Path) -> CliResult<()> {
    let methods: BTreeSet<Method> = report.cells.iter().map(|c| c.method).collect();
    for kind in KindCategory::ALL {
        let series: Vec<Series> = methods
            .iter()
            .filter_map(|&m| {
                let mut s = Series { name: m.label().to_string(), points: vec![], band: vec![] };
                for c in report.cells.iter().filter(|c| c.method == m) {
                    if let Some(k) = c.kinds.iter().find(|k| k.kind == kind) {
                        s.points.push((c.n as f64, k.mean));
                        if let (Some(lo), Some(hi)) = (k.quantiles.first(), k.quantiles.last()) {
                            s.band.push((c.n as f64, *lo, *hi));
                        }
                    }
                }
                (!s.points.is_empty()).then_some(s)
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let svg = line_chart(&format!("Absolute error: {}", kind.name()), "n (log scale)", "mean absolute error", &series);
        fs::write(dir.join(format!("error_{}.svg", kind.name())), svg)?;
    }
    let mut series = Vec::new();
    for &m in &methods {
        for (what, get) in [
            ("sensitivity", (|c: &tvvar::evaluation::Cell| c.recovery.sensitivity) as fn(&_) -> Option<f64>),
            ("precision", |c: &tvvar::evaluation::Cell| c.recovery.precision),
        ] {
            let points: Vec<(f64, f64)> = report
                .cells
                .iter()
                .filter(|c| c.method == m)
                .filter_map(|c| get(c).map(|v| (c.n as f64, v)))
                .collect();
            if !points.is_empty() {
                series.push(Series { name: format!("{} {what}", m.label()), points, band: vec![] });
            }
        }
    }
    if !series.is_empty() {
        fs::write(dir.join("recovery.svg"), line_chart("Structure recovery", "n (log scale)", "proportion", &series))?;
    }
    Ok(())
}
