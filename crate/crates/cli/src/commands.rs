//! Subcommand implementations. Each returns a short summary for stdout and
//! writes its artefacts under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use homsim_core::fitting::{
    fit_coincidence_curve_with, fit_dip_shape, CurveModel, DataPoint, Dataset, DipData, DipFit, DipGuess,
    DipMode, FitOptions, FitProblem, FitResult, SharedParameters,
};
use homsim_core::histogram::{
    build_histogram, integrate_peaks, normalized_opposite_probability, CoincidenceHistogram, PeakAreas,
    ProbabilityEstimate,
};
use homsim_core::model::BeamSplitter;
use homsim_core::montecarlo::{generate_event_stream, ArrivalTiming};
use homsim_core::rng::{derive_seed, Domain};
use homsim_core::shaping::DetectorIRF;

use crate::config::{EventFormat, ExperimentConfig};
use crate::error::{io_error, CliError};
use crate::formats;
use crate::record::{FitSummary, GeometryInfo, Metadata, ResultRecord};
use crate::sweep::{self, SweepSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const CURVE_POINTS: usize = 201;
const QUALITATIVE_NOTE: &str = "qualitative: detuning and pulse-length mappings are phenomenological";

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<EventFormat>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Runs `f` on a pool with `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn load_config(path: &Path, opts: &GlobalOptions) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = opts.seed {
        cfg.run.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: Option<&ExperimentConfig>, opts: &GlobalOptions) -> Result<PathBuf, CliError> {
    let dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
    files.push(path);
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn probability(areas: &PeakAreas) -> Option<ProbabilityEstimate> {
    normalized_opposite_probability(areas).ok()
}

fn record_for(cfg: &ExperimentConfig, command: &str) -> Result<ResultRecord, CliError> {
    Ok(ResultRecord {
        fingerprint: cfg.fingerprint(),
        command: command.into(),
        label: cfg.scheme_label(),
        qualitative: cfg.qualitative.is_some(),
        seed: cfg.run.seed,
        t1_ps: cfg.emitter.t1_ps,
        t2_ps: cfg.emitter.t2_ps,
        geometry: GeometryInfo::from(&cfg.geometry()?),
        peaks: None,
        probability: None,
        fit: None,
        metadata: Metadata { tool_version: TOOL_VERSION.into(), events: 0, wall_clock_s: 0.0 },
    })
}

fn peak_summary(out: &mut String, areas: &PeakAreas, p: Option<&ProbabilityEstimate>) {
    let _ = writeln!(
        out,
        "peaks: A={} B1={} B2={} C-={} C+={} side={}",
        areas.a,
        areas.b1,
        areas.b2,
        areas.c_minus,
        areas.c_plus,
        areas.side_peaks.iter().map(|s| s.counts).sum::<u64>()
    );
    match p {
        Some(p) => {
            let _ = writeln!(out, "P = {:.5} ± {:.5}", p.value, p.std_err);
        }
        None => out.push_str("P undefined (no counts in the B peaks)\n"),
    }
}

pub fn simulate(config: &Path, opts: &GlobalOptions) -> Result<Outcome, CliError> {
    let cfg = load_config(config, opts)?;
    let sim = cfg.simulation()?;
    let dir = out_dir(Some(&cfg), opts)?;
    let fingerprint = cfg.fingerprint();
    let start = Instant::now();
    let events = with_jobs(opts.jobs, || generate_event_stream(&sim))??;
    let hist = build_histogram(&events, cfg.run.bin_width_ps, cfg.range_ps())?;
    let areas = integrate_peaks(&hist, &sim.geometry)?;
    let p = probability(&areas);
    let elapsed = start.elapsed().as_secs_f64();

    let mut files = Vec::new();
    if cfg.output.write_events {
        let fmt = opts.format.unwrap_or(cfg.output.events_format);
        let name = format!("events.{}", formats::event_extension(fmt));
        write(&dir, &name, formats::encode_events(&events, &fingerprint, fmt), &mut files)?;
    }
    write(&dir, "histogram.txt", formats::histogram_to_text(&hist, &fingerprint), &mut files)?;
    let mut record = record_for(&cfg, "simulate")?;
    record.peaks = Some(areas.clone());
    record.probability = p;
    record.metadata.events = events.len() as u64;
    record.metadata.wall_clock_s = elapsed;
    write(&dir, "record.json", record.to_json(), &mut files)?;

    let mut summary = String::new();
    if cfg.qualitative.is_some() {
        let _ = writeln!(summary, "[{QUALITATIVE_NOTE}]");
    }
    let _ = writeln!(
        summary,
        "{}: {} pulse pairs, seed {}, {} events, {} start-stop pairs in {:.2} s",
        cfg.scheme_label(),
        cfg.run.n_pulse_pairs,
        cfg.run.seed,
        events.len(),
        hist.total(),
        elapsed
    );
    peak_summary(&mut summary, &areas, p.as_ref());
    let _ = writeln!(summary, "fingerprint {fingerprint}");
    Ok(Outcome { summary, files })
}

pub fn analyze(
    config: &Path,
    events: Option<&Path>,
    histogram: Option<&Path>,
    opts: &GlobalOptions,
) -> Result<Outcome, CliError> {
    let cfg = load_config(config, opts)?;
    let geometry = cfg.geometry()?;
    let mut files = Vec::new();
    let dir = out_dir(Some(&cfg), opts)?;
    let (hist, n_events) = match (events, histogram) {
        (Some(path), None) => {
            let bytes = fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let ev = formats::decode_events(&bytes).map_err(|e| e.context(path.display()))?;
            let h = build_histogram(&ev, cfg.run.bin_width_ps, cfg.range_ps())?;
            write(&dir, "histogram.txt", formats::histogram_to_text(&h, &cfg.fingerprint()), &mut files)?;
            (h, ev.len() as u64)
        }
        (None, Some(path)) => {
            let h = formats::histogram_from_text(&read_text(path)?).map_err(|e| e.context(path.display()))?;
            (h, 0)
        }
        _ => return Err(CliError::config("analyze needs exactly one of --events or --histogram")),
    };
    let areas = integrate_peaks(&hist, &geometry).map_err(|e| CliError::config(e.to_string()))?;
    let p = probability(&areas);

    let mut csv = String::from("peak,center_ps,counts\n");
    let (pd, hd) = (geometry.pump_delay(), geometry.hom_delay());
    for (name, center, n) in [
        ("C-", -(pd + hd), areas.c_minus),
        ("B1", -pd, areas.b1),
        ("A", geometry.photon_delay(), areas.a),
        ("B2", pd, areas.b2),
        ("C+", pd + hd, areas.c_plus),
    ] {
        let _ = writeln!(csv, "{name},{center},{n}");
    }
    for s in &areas.side_peaks {
        let _ = writeln!(csv, "side,{},{}", s.center_ps, s.counts);
    }
    write(&dir, "peaks.csv", csv, &mut files)?;
    let mut record = record_for(&cfg, "analyze")?;
    record.peaks = Some(areas.clone());
    record.probability = p;
    record.metadata.events = n_events;
    write(&dir, "record.json", record.to_json(), &mut files)?;

    let mut summary = String::new();
    peak_summary(&mut summary, &areas, p.as_ref());
    Ok(Outcome { summary, files })
}

/// Options of `fit --table`.
#[derive(Debug, Clone, Default)]
pub struct TableFitOptions {
    pub shared: SharedParameters,
    pub irf_ps: Option<f64>,
    pub bootstrap: usize,
    pub reflectance: Option<f64>,
}

fn fit_datasets(
    datasets: Vec<Dataset>,
    model: CurveModel,
    shared: SharedParameters,
    bs: BeamSplitter,
    options: &FitOptions,
    jobs: Option<usize>,
) -> Result<(FitProblem, FitResult), CliError> {
    let problem = FitProblem { datasets, model, shared, bs };
    let result = with_jobs(jobs, || fit_coincidence_curve_with(&problem, options))??;
    Ok((problem, result))
}

fn model_name(model: &CurveModel) -> String {
    match model {
        CurveModel::Eq2 => "closed-form".into(),
        CurveModel::Eq2ConvolvedIRF(irf) => format!("closed-form with {} ps IRF", irf.resolution()),
    }
}

fn fit_report(problem: &FitProblem, result: &FitResult, fingerprint: Option<&str>) -> String {
    let mut out = String::from("# homsim fit report\n");
    if let Some(fp) = fingerprint {
        let _ = writeln!(out, "# fingerprint: {fp}");
    }
    let _ = writeln!(out, "model = {}", model_name(&problem.model));
    let _ = writeln!(out, "shared_t1 = {}", problem.shared.t1);
    let _ = writeln!(out, "shared_t2 = {}", problem.shared.t2);
    let _ = writeln!(out, "converged = {}", result.converged);
    let _ = writeln!(out, "iterations = {}", result.n_iterations);
    let _ = writeln!(out, "chi2 = {}", result.chi2);
    let _ = writeln!(out, "chi2_reduced = {}", result.chi2_reduced);
    for (j, ds) in problem.datasets.iter().enumerate() {
        let (p0, p0_err) = result.p_at_zero(j, &problem.bs);
        let _ = writeln!(out, "\n[{}]", ds.label);
        let _ = writeln!(out, "points = {}", ds.points.len());
        let _ = writeln!(out, "t1_ps = {} ± {}", result.t1[j], result.t1_err[j]);
        let _ = writeln!(out, "t2_ps = {} ± {}", result.t2[j], result.t2_err[j]);
        let _ = writeln!(out, "indistinguishability = {}", result.indistinguishability(j));
        let _ = writeln!(out, "p0 = {p0} ± {p0_err}");
        if let Some(b) = &result.bootstrap {
            let _ = writeln!(out, "bootstrap_t1_std_ps = {}", b.t1_std[j]);
            let _ = writeln!(out, "bootstrap_t2_std_ps = {}", b.t2_std[j]);
        }
    }
    out
}

fn fit_curve(problem: &FitProblem, result: &FitResult) -> String {
    let mut out = String::from("dataset,tau_ps,p_model\n");
    for (j, ds) in problem.datasets.iter().enumerate() {
        let lo = ds.points.iter().map(|p| p.tau_ps).fold(f64::INFINITY, f64::min);
        let hi = ds.points.iter().map(|p| p.tau_ps).fold(f64::NEG_INFINITY, f64::max);
        for i in 0..CURVE_POINTS {
            let tau = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            let p = problem.model_value(tau, result.t1[j], result.t2[j]);
            let _ = writeln!(out, "{},{tau},{p}", ds.label);
        }
    }
    out
}

fn fit_summary_text(problem: &FitProblem, result: &FitResult) -> String {
    let mut out = String::new();
    for (j, ds) in problem.datasets.iter().enumerate() {
        let (p0, p0_err) = result.p_at_zero(j, &problem.bs);
        let _ = writeln!(
            out,
            "{}: T1 = {:.1} ± {:.1} ps, T2 = {:.1} ± {:.1} ps, T2/2T1 = {:.3}, P(0) = {:.4} ± {:.4}",
            ds.label,
            result.t1[j],
            result.t1_err[j],
            result.t2[j],
            result.t2_err[j],
            result.indistinguishability(j),
            p0,
            p0_err
        );
    }
    let _ = writeln!(out, "chi2/dof = {:.3}, converged = {}", result.chi2_reduced, result.converged);
    out
}

pub fn fit_table(table: &Path, fit: &TableFitOptions, opts: &GlobalOptions) -> Result<Outcome, CliError> {
    let text = read_text(table)?;
    let datasets = formats::datasets_from_csv(&text).map_err(|e| e.context(table.display()))?;
    let model = match fit.irf_ps {
        Some(r) => CurveModel::Eq2ConvolvedIRF(DetectorIRF::new(r).map_err(|e| CliError::config(format!("--irf-ps: {e}")))?),
        None => CurveModel::Eq2,
    };
    let bs = match fit.reflectance {
        Some(r) => BeamSplitter::new(r, 1.0 - r).map_err(|e| CliError::config(format!("--reflectance: {e}")))?,
        None => BeamSplitter::balanced(),
    };
    let options = FitOptions { bootstrap_resamples: fit.bootstrap, seed: opts.seed.unwrap_or(0) };
    let (problem, result) = fit_datasets(datasets, model, fit.shared, bs, &options, opts.jobs)?;
    let dir = out_dir(None, opts)?;
    let fingerprint = formats::fingerprint_of(&text);
    let mut files = Vec::new();
    write(&dir, "fit_report.txt", fit_report(&problem, &result, fingerprint), &mut files)?;
    write(&dir, "fit_curve.csv", fit_curve(&problem, &result), &mut files)?;
    Ok(Outcome { summary: fit_summary_text(&problem, &result), files })
}

/// Options of `fit --dip`.
#[derive(Debug, Clone, Copy)]
pub struct DipFitOptions {
    pub mode: DipMode,
    pub halfwidth_ps: Option<f64>,
}

fn dip_report(fit: &DipFit, fingerprint: Option<&str>) -> String {
    let mut out = String::from("# homsim dip fit\n");
    if let Some(fp) = fingerprint {
        let _ = writeln!(out, "# fingerprint: {fp}");
    }
    let mode = match fit.mode {
        DipMode::Parallel => "parallel",
        DipMode::Orthogonal => "orthogonal",
    };
    let _ = writeln!(out, "mode = {mode}");
    let _ = writeln!(out, "converged = {}", fit.converged);
    let _ = writeln!(out, "iterations = {}", fit.n_iterations);
    let _ = writeln!(out, "chi2 = {}", fit.chi2);
    let _ = writeln!(out, "chi2_reduced = {}", fit.chi2_reduced);
    let _ = writeln!(out, "amplitude_per_ps = {}", fit.amplitude);
    let _ = writeln!(out, "t1_ps = {} ± {}", fit.t1, fit.t1_err);
    if let (Some(t2), Some(e)) = (fit.t2, fit.t2_err) {
        let _ = writeln!(out, "t2_ps = {t2} ± {e}");
    }
    if let (Some(w), Some(e)) = (fit.weight, fit.weight_err) {
        let _ = writeln!(out, "weight = {w} ± {e}");
    }
    out
}

pub fn fit_dip(histogram: &Path, config: &Path, dip: DipFitOptions, opts: &GlobalOptions) -> Result<Outcome, CliError> {
    let cfg = load_config(config, opts)?;
    if cfg.run.timing != ArrivalTiming::Wavepacket {
        return Err(CliError::config(
            "fit --dip needs run.timing = \"wavepacket\"; trigger timestamps carry no dip profile",
        ));
    }
    let text = read_text(histogram)?;
    let hist = formats::histogram_from_text(&text).map_err(|e| e.context(histogram.display()))?;
    let geometry = cfg.geometry()?;
    // Wide enough for the ±3·T1 coverage check, short of the B peak tails.
    let halfwidth = dip
        .halfwidth_ps
        .unwrap_or((3.5 * cfg.emitter.t1_ps).min(0.8 * geometry.pump_delay().min(geometry.hom_delay())));
    if !(halfwidth.is_finite() && halfwidth > 0.0) {
        return Err(CliError::config("--halfwidth-ps must be > 0"));
    }
    let data = dip_data(&hist, geometry.photon_delay(), halfwidth);
    // Both detectors contribute jitter to the delay difference.
    let irf = match cfg.irf()? {
        Some(i) => Some(DetectorIRF::new(i.resolution() * std::f64::consts::SQRT_2)?),
        None => None,
    };
    let guess = DipGuess { t1: cfg.emitter.t1_ps, t2: cfg.emitter.t2_ps.min(2.0 * cfg.emitter.t1_ps) };
    let fit = fit_dip_shape(&data, guess, irf.as_ref(), dip.mode).map_err(|e| match e {
        homsim_core::Error::WindowOutOfRange(_) => CliError::config(e.to_string()),
        e => CliError::from(e),
    })?;

    let dir = out_dir(Some(&cfg), opts)?;
    let fingerprint = formats::fingerprint_of(&text);
    let mut files = Vec::new();
    write(&dir, "dip_report.txt", dip_report(&fit, fingerprint), &mut files)?;
    let mut curve = String::from("delta_ps,counts,model\n");
    let sigma = irf.map_or(0.0, |i| i.sigma());
    let (t2, w) = (fit.t2.unwrap_or(fit.t1 * 2.0), fit.weight.unwrap_or(0.0));
    for &(d, n) in &data.points {
        let m = fit.amplitude
            * data.bin_width_ps
            * homsim_core::fitting::dip_profile(d, fit.t1, t2, w, sigma, data.bin_width_ps);
        let _ = writeln!(curve, "{d},{n},{m}");
    }
    write(&dir, "dip_curve.csv", curve, &mut files)?;

    let mut summary = format!("dip fit: T1 = {:.1} ± {:.1} ps", fit.t1, fit.t1_err);
    if let (Some(t2), Some(e)) = (fit.t2, fit.t2_err) {
        let _ = write!(summary, ", T2 = {t2:.1} ± {e:.1} ps");
    }
    if let (Some(w), Some(e)) = (fit.weight, fit.weight_err) {
        let _ = write!(summary, ", weight = {w:.3} ± {e:.3}");
    }
    let _ = writeln!(summary, ", chi2/dof = {:.3}", fit.chi2_reduced);
    Ok(Outcome { summary, files })
}

fn dip_data(hist: &CoincidenceHistogram, center: f64, halfwidth: f64) -> DipData {
    DipData {
        bin_width_ps: hist.bin_width(),
        points: hist.slice(center, halfwidth).into_iter().map(|(d, n)| (d, n as f64)).collect(),
    }
}

/// One simulated sweep point.
#[derive(Debug, Clone)]
struct SweepRow {
    value: String,
    tau_ps: f64,
    probability: Option<ProbabilityEstimate>,
    areas: PeakAreas,
    events: usize,
}

pub fn sweep(config: &Path, spec_path: &Path, opts: &GlobalOptions) -> Result<Outcome, CliError> {
    let base = load_config(config, opts)?;
    let spec = SweepSpec::load(spec_path)?;
    let points = spec.points()?;
    let mut configs = Vec::with_capacity(points.len());
    for (i, v) in points.iter().enumerate() {
        let mut c = sweep::apply(&base, &spec.parameter, v)?;
        c.run.seed = derive_seed(base.run.seed, Domain::Sweep, i as u64);
        if let Some(n) = spec.n_pulse_pairs {
            c.run.n_pulse_pairs = n;
        }
        c.simulation().map_err(|e| e.context(format!("sweep point {}", v.label())))?;
        configs.push(c);
    }
    let start = Instant::now();
    let mut rows = Vec::with_capacity(configs.len());
    for (v, c) in points.iter().zip(&configs) {
        let sim = c.simulation()?;
        let events = with_jobs(opts.jobs, || generate_event_stream(&sim))??;
        let hist = build_histogram(&events, c.run.bin_width_ps, c.range_ps())?;
        let areas = integrate_peaks(&hist, &sim.geometry)?;
        rows.push(SweepRow {
            value: v.label(),
            tau_ps: sim.geometry.photon_delay(),
            probability: probability(&areas),
            areas,
            events: events.len(),
        });
    }
    let elapsed = start.elapsed().as_secs_f64();

    let fingerprint = sweep_fingerprint(&base, &spec);
    let dir = out_dir(Some(&base), opts)?;
    let mut files = Vec::new();
    let mut csv = format!("# fingerprint: {fingerprint}\n# parameter: {}\n", spec.parameter);
    if base.qualitative.is_some() {
        let _ = writeln!(csv, "# {QUALITATIVE_NOTE}");
    }
    csv.push_str("value,tau_ps,p,sigma_p,a,b1,b2,c_minus,c_plus,events\n");
    for r in &rows {
        let (p, s) = r.probability.map_or((f64::NAN, f64::NAN), |p| (p.value, p.std_err));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            r.value, r.tau_ps, p, s, r.areas.a, r.areas.b1, r.areas.b2, r.areas.c_minus, r.areas.c_plus, r.events
        );
    }
    write(&dir, "sweep.csv", csv, &mut files)?;

    let mut summary = String::new();
    if base.qualitative.is_some() {
        let _ = writeln!(summary, "[{QUALITATIVE_NOTE}]");
    }
    let _ = writeln!(summary, "swept {} over {} points in {:.2} s", spec.parameter, rows.len(), elapsed);
    for r in &rows {
        match r.probability {
            Some(p) => {
                let _ = writeln!(summary, "  {} -> P = {:.4} ± {:.4}", r.value, p.value, p.std_err);
            }
            None => {
                let _ = writeln!(summary, "  {} -> P undefined", r.value);
            }
        }
    }

    if spec.is_delay_sweep() && spec.fit {
        let usable: Vec<DataPoint> = rows
            .iter()
            .filter_map(|r| r.probability.filter(|p| p.std_err > 0.0).map(|p| (r.tau_ps, p)))
            .map(|(tau, p)| DataPoint { tau_ps: tau, p: p.value, sigma: p.std_err })
            .collect();
        let model = match base.irf()? {
            Some(i) => CurveModel::Eq2ConvolvedIRF(DetectorIRF::new(i.resolution() * std::f64::consts::SQRT_2)?),
            None => CurveModel::Eq2,
        };
        let ds = Dataset::new(base.scheme_label(), usable);
        let (problem, result) = fit_datasets(
            vec![ds],
            model,
            SharedParameters::NONE,
            base.beamsplitter()?,
            &FitOptions::default(),
            opts.jobs,
        )?;
        write(&dir, "fit_report.txt", fit_report(&problem, &result, Some(&fingerprint)), &mut files)?;
        write(&dir, "fit_curve.csv", fit_curve(&problem, &result), &mut files)?;
        summary.push_str(&fit_summary_text(&problem, &result));

        let mut record = record_for(&base, "sweep")?;
        record.fingerprint = fingerprint.clone();
        record.fit = Some(FitSummary { model: model_name(&problem.model), result });
        record.metadata.events = rows.iter().map(|r| r.events as u64).sum();
        record.metadata.wall_clock_s = elapsed;
        write(&dir, "record.json", record.to_json(), &mut files)?;
    }
    Ok(Outcome { summary, files })
}

fn sweep_fingerprint(base: &ExperimentConfig, spec: &SweepSpec) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(base.fingerprint().as_bytes());
    h.update(toml::to_string(spec).unwrap_or_default().as_bytes());
    hex::encode(h.finalize())
}

pub fn report(records: &[PathBuf], opts: &GlobalOptions) -> Result<Outcome, CliError> {
    if records.is_empty() {
        return Err(CliError::config("report needs at least one record"));
    }
    let mut loaded = Vec::with_capacity(records.len());
    for path in records {
        let r = ResultRecord::from_json(&read_text(path)?).map_err(|e| e.context(path.display()))?;
        loaded.push(r);
    }
    let reference = loaded[0].geometry;
    let mismatched: Vec<&str> = loaded
        .iter()
        .filter(|r| !r.geometry.compatible(&reference))
        .map(|r| r.label.as_str())
        .collect();

    let mut header = String::new();
    if !mismatched.is_empty() {
        let _ = writeln!(
            header,
            "# warning: interferometer geometry differs from the first record for: {}",
            mismatched.join(", ")
        );
    }
    if loaded.iter().any(|r| r.qualitative) {
        let _ = writeln!(header, "# {QUALITATIVE_NOTE}");
    }

    let mut csv = header.clone();
    csv.push_str("label,command,fingerprint,t1_ps,t2_ps,p,sigma_p,indistinguishability,qualitative\n");
    let mut txt = header;
    let _ = writeln!(txt, "{:<36} {:>9} {:>9} {:>18} {:>8} {:>5}", "label", "T1 [ps]", "T2 [ps]", "P", "T2/2T1", "qual");
    for r in &loaded {
        let (t1, t2) = match &r.fit {
            Some(f) => (f.result.t1[0], f.result.t2[0]),
            None => (r.t1_ps, r.t2_ps),
        };
        let (p, s) = r.probability.map_or((f64::NAN, f64::NAN), |p| (p.value, p.std_err));
        let ind = r.indistinguishability().unwrap_or(f64::NAN);
        let _ = writeln!(
            csv,
            "{},{},{},{t1},{t2},{p},{s},{ind},{}",
            csv_field(&r.label),
            r.command,
            r.fingerprint,
            r.qualitative
        );
        let _ = writeln!(
            txt,
            "{:<36} {:>9.1} {:>9.1} {:>9.4}±{:<8.4} {:>8.3} {:>5}",
            r.label,
            t1,
            t2,
            p,
            s,
            ind,
            if r.qualitative { "yes" } else { "no" }
        );
    }
    let dir = out_dir(None, opts)?;
    let mut files = Vec::new();
    write(&dir, "report.txt", &txt, &mut files)?;
    write(&dir, "report.csv", csv, &mut files)?;
    Ok(Outcome { summary: txt, files })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
