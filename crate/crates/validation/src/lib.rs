//! Acceptance checks. Each criterion returns a verdict with a one-line
//! summary of the numbers behind it.

use std::fmt::Write as _;
use std::path::Path;

use homsim_cli::commands::{self, GlobalOptions, TableFitOptions};
use homsim_cli::config::EventFormat;
use homsim_core::fitting::*;
use homsim_core::montecarlo::{estimate_mean_overlap, simulate_decay_arrivals, SourceStatistics};
use homsim_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn paper_geometry() -> InterferometerGeometry {
    InterferometerGeometry::from_ns(3.0, 3.0, 81.0, 1.0).unwrap()
}

fn simulate_peaks(cfg: &SimulationConfig) -> Result<histogram::PeakAreas> {
    let ev = generate_event_stream(cfg)?;
    let h = build_histogram(&ev, 50.0, 20_000.0)?;
    integrate_peaks(&h, &cfg.geometry)
}

/// Eq. 2 written out term by term at a balanced splitter:
/// `P = 1/2 - 1/2 · V`, `V = (T2/2T1)·e^{-a}(1 + (1 - e^{-x})·a/x)` with
/// `a = 2|τ|/T1`; at `τ = 0` only `T2/(2T1)` survives.
fn hand_derived_p0(t1: f64, t2: f64) -> f64 {
    0.5 - 0.5 * (t2 / (2.0 * t1))
}

pub fn criterion_1() -> Verdict {
    let e = EmitterParams::ideal(800.0, 450.0).unwrap();
    let p = coincidence_probability(0.0, &e, &BeamSplitter::balanced());
    let oracle = hand_derived_p0(800.0, 450.0);
    let pass = (p - oracle).abs() <= 1e-9 && (oracle - 0.359375).abs() <= 1e-12;
    Verdict::new(pass, format!("P(0) = {p:.9}, hand-derived {oracle:.9}, target 0.359375"))
}

/// Per-point pulse pairs for the equivalence scan.
pub const EQUIVALENCE_PAIRS: u64 = 200_000;

pub fn criterion_2() -> Verdict {
    let bs = BeamSplitter::balanced();
    let mut fails = Vec::new();
    let mut worst = (0.0, String::new());
    let mut n = 0;
    for (i, (t1, t2)) in [(800.0, 450.0), (375.0, 270.0), (800.0, 540.0)].into_iter().enumerate() {
        let e = EmitterParams::ideal(t1, t2).unwrap();
        for (j, tau) in [0.0, 200.0, 500.0, 1000.0, 3000.0].into_iter().enumerate() {
            n += 1;
            // H = 2 ns keeps peak A clear of the same-pulse peak at +H for τ = 3 ns.
            let g = InterferometerGeometry::new(2000.0 + tau, 2000.0, 1e6 / 81.0, 500.0).unwrap();
            let cfg = SimulationConfig::new(e, bs, g, EQUIVALENCE_PAIRS, 100 + 10 * i as u64 + j as u64);
            let p = match simulate_peaks(&cfg).and_then(|a| normalized_opposite_probability(&a)) {
                Ok(p) => p,
                Err(err) => return Verdict::new(false, format!("simulation failed: {err}")),
            };
            let want = coincidence_probability(tau, &e, &bs);
            let z = (p.value - want).abs() / p.std_err;
            let tag = format!("({t1},{t2}) τ={tau}: MC {:.4}±{:.4} vs {want:.4}", p.value, p.std_err);
            if z > worst.0 {
                worst = (z, tag.clone());
            }
            if z > 3.0 {
                fails.push(tag);
            }
        }
    }
    let mut detail = format!("{}/{n} points within 3σ; worst {:.1}σ at {}", n - fails.len(), worst.0, worst.1);
    if !fails.is_empty() {
        let _ = write!(detail, "; outside: {}", fails.join("; "));
    }
    Verdict::new(fails.is_empty(), detail)
}

fn ratio_within(num: f64, den: f64, want: f64, num_var_scale: f64, den_var_scale: f64) -> (bool, f64, f64) {
    let r = num / den;
    let sigma = r * (num_var_scale / num + den_var_scale / den).sqrt();
    ((r - want).abs() <= 3.0 * sigma, r, sigma)
}

pub fn criterion_3() -> Verdict {
    let e = EmitterParams::ideal(375.0, 270.0).unwrap();
    let bs = BeamSplitter::balanced();
    let mut ok = true;
    let mut detail = String::new();

    let mut cfg = SimulationConfig::new(e, bs, paper_geometry(), 200_000, 31);
    cfg.overlap_override = Some(0.0);
    match simulate_peaks(&cfg) {
        Ok(a) => {
            // Per peak: A against one B peak and one C peak; B and C areas are
            // averages of two peaks, halving their variance.
            let (b, c) = (a.b() as f64 / 2.0, a.c() as f64 / 2.0);
            let (p1, r1, s1) = ratio_within(a.a as f64, b, 1.0, 1.0, 0.5);
            let (p2, r2, s2) = ratio_within(c, b, 0.5, 0.5, 0.5);
            ok &= p1 && p2;
            let _ = write!(detail, "distinguishable A:B:C = {:.3}±{:.3} : 2 : {:.3}±{:.3}", 2.0 * r1, 2.0 * s1, 2.0 * r2, 2.0 * s2);
        }
        Err(err) => return Verdict::new(false, format!("simulation failed: {err}")),
    }

    cfg.overlap_override = Some(1.0);
    cfg.seed = 32;
    match simulate_peaks(&cfg).and_then(|a| normalized_opposite_probability(&a).map(|p| (a, p))) {
        Ok((a, p)) => {
            let pass = p.value <= 3.0 * p.std_err;
            ok &= pass;
            let (_, r, s) = ratio_within(a.c() as f64, a.b() as f64, 0.5, 1.0, 1.0);
            let _ = write!(detail, "; perfect A/(B1+B2) = {:.4} (σ {:.4}), A:B:C = 0 : 2 : {:.3}±{:.3}", p.value, p.std_err, 2.0 * r, 2.0 * s);
        }
        Err(err) => return Verdict::new(false, format!("simulation failed: {err}")),
    }

    let mut cfg = SimulationConfig::new(e, bs, paper_geometry(), 8_000_000, 33);
    cfg.source = SourceStatistics::Poissonian { mean_photons: 0.03 };
    match simulate_peaks(&cfg) {
        Ok(a) => {
            let (b, c) = (a.b() as f64 / 2.0, a.c() as f64 / 2.0);
            let (p1, r1, s1) = ratio_within(a.a as f64, c, 6.0, 1.0, 0.5);
            let (p2, r2, s2) = ratio_within(b, c, 4.0, 0.5, 0.5);
            ok &= p1 && p2;
            let _ = write!(detail, "; Poissonian A:B:C = {r1:.2}±{s1:.2} : {r2:.2}±{s2:.2} : 1");
        }
        Err(err) => return Verdict::new(false, format!("simulation failed: {err}")),
    }
    Verdict::new(ok, detail)
}

fn noisy_curve(t1: f64, t2: f64, taus: &[f64], rng: &mut ChaCha8Rng, label: &str) -> Dataset {
    let e = EmitterParams::ideal(t1, t2).unwrap();
    let bs = BeamSplitter::balanced();
    let points = taus
        .iter()
        .map(|&tau| {
            let p = coincidence_probability(tau, &e, &bs);
            let sigma = 0.03 * p;
            DataPoint { tau_ps: tau, p: p + Normal::new(0.0, sigma).unwrap().sample(rng), sigma }
        })
        .collect();
    Dataset::new(label, points)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let taus: Vec<f64> = (0..15).map(|i| -2000.0 + 4000.0 * i as f64 / 14.0).collect();
    let (mut t1s, mut t2s) = (Vec::new(), Vec::new());
    for _ in 0..50 {
        match fit_coincidence_curve(&FitProblem::single(noisy_curve(800.0, 450.0, &taus, &mut rng, "single"))) {
            Ok(r) => {
                t1s.push(r.t1[0]);
                t2s.push(r.t2[0]);
            }
            Err(err) => return Verdict::new(false, format!("single fit failed: {err}")),
        }
    }
    let (m1, m2) = (median(t1s), median(t2s));

    let taus: Vec<f64> = (0..21).map(|i| -1500.0 + 3000.0 * i as f64 / 20.0).collect();
    let mut joint: [Vec<f64>; 3] = Default::default();
    for _ in 0..50 {
        let a = noisy_curve(375.0, 270.0, &taus, &mut rng, "unshaped");
        let b = noisy_curve(220.0, 270.0, &taus, &mut rng, "shaped");
        match fit_coincidence_curve(&FitProblem::joint_t2(vec![a, b])) {
            Ok(r) => {
                joint[0].push(r.t1[0]);
                joint[1].push(r.t1[1]);
                joint[2].push(r.t2[0]);
            }
            Err(err) => return Verdict::new(false, format!("joint fit failed: {err}")),
        }
    }
    let [j1, j2, j3] = joint.map(median);
    let close = |x: f64, t: f64| (x / t - 1.0).abs() <= 0.05;
    let pass = close(m1, 800.0) && close(m2, 450.0) && close(j1, 375.0) && close(j2, 220.0) && close(j3, 270.0);
    Verdict::new(
        pass,
        format!(
            "single medians T1 {m1:.1} (800), T2 {m2:.1} (450); joint medians T1 {j1:.1} (375), {j2:.1} (220), T2 {j3:.1} (270)"
        ),
    )
}

/// Gate delays scanned for criterion 5, relative to the trigger.
pub const GATE_DELAYS_PS: [f64; 6] = [0.0, 50.0, 100.0, 150.0, 200.0, 300.0];
const SHARED_T2_PS: f64 = 270.0;

pub fn criterion_5() -> Verdict {
    let e = EmitterParams::ideal(375.0, SHARED_T2_PS).unwrap();
    let free = match simulate_decay_arrivals(&e, None, 400_000, 50).and_then(|s| fit_exponential_lifetime(&s)) {
        Ok(f) => f,
        Err(err) => return Verdict::new(false, format!("ungated lifetime fit failed: {err}")),
    };
    let r_free = SHARED_T2_PS / (2.0 * free.lifetime_ps);
    let mut scan = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for (k, delay) in GATE_DELAYS_PS.into_iter().enumerate() {
        let gate = TemporalGate::new(200.0, delay, 1.0).unwrap();
        let fit = simulate_decay_arrivals(&e, Some(&gate), 2_000_000, 60 + k as u64)
            .and_then(|s| fit_exponential_lifetime(&s));
        match fit {
            Ok(f) => {
                scan.push(format!("{delay}:{:.0}", f.lifetime_ps));
                let dist = (f.lifetime_ps / 220.0 - 1.0).abs();
                if best.is_none_or(|b| dist < (b.1 / 220.0 - 1.0).abs()) {
                    best = Some((delay, f.lifetime_ps, f.std_err_ps));
                }
            }
            Err(_) => scan.push(format!("{delay}:no decay")),
        }
    }
    let Some((delay, t1_eff, t1_err)) = best else {
        return Verdict::new(false, "no gate delay produced a lifetime fit");
    };
    let r_gated = SHARED_T2_PS / (2.0 * t1_eff);
    let lifetime_ok = (t1_eff / 220.0 - 1.0).abs() <= 0.15;
    let ratio_ok = (r_free - 0.36).abs() <= 0.02 && (r_gated - 0.61).abs() <= 0.04;
    let direct = estimate_mean_overlap(&e, Some(TemporalGate::new(200.0, delay, 1.0).unwrap()), 0.0, 20_000, 5.0, 70)
        .map(|o| format!("{:.3}±{:.3}", o.mean, o.std_err))
        .unwrap_or_else(|err| err.to_string());
    Verdict::new(
        lifetime_ok && ratio_ok,
        format!(
            "scan delay:T1eff [{}] ps; best delay {delay} ps gives T1eff {t1_eff:.1}±{t1_err:.1} ps; ratio {r_free:.3} -> {r_gated:.3} (T1 ungated {:.1} ps); direct gated overlap {direct} (info)",
            scan.join(", "),
            free.lifetime_ps
        ),
    )
}

/// Counts missing from the central `±T2/2` of a wavepacket-timed peak A
/// relative to a dip-free fit of the whole slice, in standard deviations.
fn central_deficit(cfg: &SimulationConfig, t2: f64) -> Result<f64> {
    let bin = 10.0;
    let h = build_histogram(&generate_event_stream(cfg)?, bin, 20_000.0)?;
    let points: Vec<(f64, f64)> = h.slice(0.0, 1200.0).into_iter().map(|(d, n)| (d, n as f64)).collect();
    let data = DipData { bin_width_ps: bin, points };
    let pair_irf = cfg.irf.map(|i| DetectorIRF::new(i.resolution() * std::f64::consts::SQRT_2)).transpose()?;
    let sigma = pair_irf.map_or(0.0, |i| i.sigma());
    let f = fit_dip_shape(&data, DipGuess { t1: cfg.emitter.t1(), t2 }, pair_irf.as_ref(), DipMode::Orthogonal)?;
    let (mut obs, mut exp) = (0.0, 0.0);
    for &(d, n) in data.points.iter().filter(|p| p.0.abs() <= t2 / 2.0) {
        obs += n;
        exp += f.amplitude * bin * dip_profile(d, f.t1, f.t1, 0.0, sigma, bin);
    }
    Ok((exp - obs) / exp.sqrt())
}

pub fn criterion_6() -> Verdict {
    let irf = DetectorIRF::new(35.0).unwrap();
    let bin = 1.0;
    let sharp = dip_profile(0.0, 375.0, 270.0, 1.0, 0.0, bin);
    let blurred = dip_profile(0.0, 375.0, 270.0, 1.0, irf.sigma(), bin);
    let raised = blurred > sharp;

    let e = EmitterParams::ideal(375.0, 270.0).unwrap();
    let mut cfg = SimulationConfig::new(e, BeamSplitter::balanced(), paper_geometry(), 400_000, 61);
    cfg.timing = ArrivalTiming::Wavepacket;
    cfg.irf = Some(irf);
    let parallel = central_deficit(&cfg, 270.0);
    cfg.overlap_override = Some(0.0);
    cfg.seed = 62;
    let orthogonal = central_deficit(&cfg, 270.0);
    match (parallel, orthogonal) {
        (Ok(zp), Ok(zo)) => Verdict::new(
            raised && zo.abs() <= 3.0 && zp > 3.0,
            format!(
                "dip minimum {sharp:.6} -> {blurred:.6} per ps with 35 ps IRF; central deficit vs dip-free fit: orthogonal {zo:.1}σ, parallel {zp:.1}σ"
            ),
        ),
        (Err(err), _) | (_, Err(err)) => Verdict::new(false, format!("dip analysis failed: {err}")),
    }
}

pub fn criterion_7() -> Verdict {
    let jitter = ExcitationScheme::AboveBand.jitter_preset(EmissionLine::Biexciton, model::DEFAULT_PUMP_PULSE_PS);
    let e = EmitterParams::ideal(375.0, 270.0).unwrap().with_jitter(jitter).unwrap();
    let cfg = SimulationConfig::new(e, BeamSplitter::balanced(), paper_geometry(), 1_000_000, 71);
    match simulate_peaks(&cfg).and_then(|a| normalized_opposite_probability(&a)) {
        Ok(p) => Verdict::new(
            p.value >= 0.45,
            format!("above-band biexciton P(0) = {:.4}±{:.4} (T2 unchanged at 270 ps, {jitter:?})", p.value, p.std_err),
        ),
        Err(err) => Verdict::new(false, format!("simulation failed: {err}")),
    }
}

const DETERMINISM_CONFIG: &str = r#"
[emitter]
t1_ps = 375.0
t2_ps = 270.0
line = "biexciton"
scheme = "two-photon-resonant"

[run]
n_pulse_pairs = 20000
seed = 81
timing = "wavepacket"

[shaping.irf]
resolution_ps = 35.0
"#;

const DETERMINISM_SWEEP: &str = r#"
parameter = "optics.delay_offset_ps"
linspace = { start = -600.0, stop = 600.0, num = 7 }
n_pulse_pairs = 10000
"#;

/// Every output file except the wall-clock field of records.
fn payloads(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(e.path())?;
        if name.ends_with(".json") {
            let text = String::from_utf8_lossy(&bytes);
            bytes = text
                .lines()
                .filter(|l| !l.trim_start().starts_with("\"wall_clock_s\""))
                .collect::<Vec<_>>()
                .join("\n")
                .into_bytes();
        }
        out.push((name, bytes));
    }
    Ok(out)
}

fn run_all_commands(root: &Path, jobs: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    let cfg = root.join("exp.toml");
    let spec = root.join("sweep.toml");
    let out = root.join(format!("jobs{jobs}"));
    let opts = |sub: &str, format| GlobalOptions {
        out_dir: Some(out.join(sub)),
        seed: None,
        format,
        jobs: Some(jobs),
    };
    let e = |err: homsim_cli::CliError| err.to_string();
    commands::simulate(&cfg, &opts("sim", Some(EventFormat::Binary))).map_err(e)?;
    commands::analyze(&cfg, Some(&out.join("sim/events.bin")), None, &opts("ana", None)).map_err(e)?;
    let dip = commands::DipFitOptions { mode: DipMode::Parallel, halfwidth_ps: None };
    commands::fit_dip(&out.join("sim/histogram.txt"), &cfg, dip, &opts("dip", None)).map_err(e)?;
    commands::sweep(&cfg, &spec, &opts("sweep", None)).map_err(e)?;
    let table = TableFitOptions { bootstrap: 20, ..Default::default() };
    commands::fit_table(&out.join("sweep/sweep.csv"), &table, &GlobalOptions { seed: Some(5), ..opts("fit", None) })
        .map_err(e)?;
    commands::report(&[out.join("sim/record.json"), out.join("sweep/record.json")], &opts("report", None)).map_err(e)?;
    let mut all = Vec::new();
    for sub in ["sim", "ana", "dip", "sweep", "fit", "report"] {
        for (name, bytes) in payloads(&out.join(sub)).map_err(|e| e.to_string())? {
            all.push((format!("{sub}/{name}"), bytes));
        }
    }
    Ok(all)
}

pub fn criterion_8() -> Verdict {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(err) => return Verdict::new(false, format!("tempdir: {err}")),
    };
    if let Err(err) = std::fs::write(dir.path().join("exp.toml"), DETERMINISM_CONFIG)
        .and_then(|_| std::fs::write(dir.path().join("sweep.toml"), DETERMINISM_SWEEP))
    {
        return Verdict::new(false, format!("setup: {err}"));
    }
    let mut runs = Vec::new();
    for jobs in [1, 2, 8] {
        match run_all_commands(dir.path(), jobs) {
            Ok(p) => runs.push(p),
            Err(err) => return Verdict::new(false, format!("{jobs} workers: {err}")),
        }
    }
    let files = runs[0].len();
    let differing: Vec<String> = runs[0]
        .iter()
        .enumerate()
        .filter(|(i, (_, bytes))| runs[1..].iter().any(|r| r.get(*i).map(|x| &x.1) != Some(bytes)))
        .map(|(_, (name, _))| name.clone())
        .collect();
    let same_names = runs.iter().all(|r| r.iter().map(|x| &x.0).eq(runs[0].iter().map(|x| &x.0)));
    Verdict::new(
        same_names && differing.is_empty() && files > 0,
        if differing.is_empty() {
            format!("{files} output files from simulate, analyze, fit, sweep and report identical across 1, 2 and 8 workers")
        } else {
            format!("differing payloads: {}", differing.join(", "))
        },
    )
}

pub fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let taus: Vec<f64> = (0..11).map(|i| -1500.0 + 300.0 * i as f64).collect();
    let problem = FitProblem::joint_t2(vec![
        noisy_curve(375.0, 270.0, &taus, &mut rng, "a"),
        noisy_curve(220.0, 270.0, &taus, &mut rng, "b"),
    ]);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let t2 = rng.random_range(100.0..600.0);
        let params = [(rng.random_range(0.55..4.0) * t2, t2), (rng.random_range(0.55..4.0) * t2, t2)];
        let theta = match problem.to_fit_coordinates(&params) {
            Ok(t) => t,
            Err(err) => return Verdict::new(false, format!("encoding failed: {err}")),
        };
        let g = problem.objective_gradient(&theta).unwrap();
        for k in 0..theta.len() {
            let h = 1e-5 * theta[k].abs().max(1.0);
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (problem.objective(&up).unwrap() - problem.objective(&dn).unwrap()) / (2.0 * h);
            let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    Verdict::new(worst <= 1e-6, format!("worst relative gradient error {worst:.2e} over 10 points"))
}
