//! Monte Carlo against independent oracles.

use homsim_core::montecarlo::{estimate_mean_overlap, simulate_decay_arrivals, SourceStatistics};
use homsim_core::*;

fn geometry() -> InterferometerGeometry {
    InterferometerGeometry::from_ns(3.0, 3.0, 81.0, 1.0).unwrap()
}

fn peaks(cfg: &SimulationConfig) -> histogram::PeakAreas {
    let ev = generate_event_stream(cfg).unwrap();
    let h = build_histogram(&ev, 50.0, 20_000.0).unwrap();
    integrate_peaks(&h, &cfg.geometry).unwrap()
}

/// `E|⟨ψ1|ψ2⟩|²` for Wiener dephasing and envelopes offset by `τ`:
/// `e^{-|τ|/T1}·T2/(2T1)`, from the double integral over both envelopes.
fn overlap_oracle(tau: f64, t1: f64, t2: f64) -> f64 {
    (-tau.abs() / t1).exp() * t2 / (2.0 * t1)
}

#[test]
fn mean_overlap_matches_double_integral_oracle() {
    let (t1, t2) = (375.0, 270.0);
    let e = EmitterParams::ideal(t1, t2).unwrap();
    for (i, tau) in [0.0, 150.0, -300.0, 600.0, 1200.0].into_iter().enumerate() {
        let est = estimate_mean_overlap(&e, None, tau, 20_000, 5.0, 40 + i as u64).unwrap();
        let want = overlap_oracle(tau, t1, t2);
        assert!((est.mean - want).abs() < 3.0 * est.std_err + 2e-3, "τ={tau}: {est:?} vs {want}");
    }
}

#[test]
fn mean_overlap_at_zero_delay_matches_closed_form() {
    let e = EmitterParams::ideal(800.0, 450.0).unwrap();
    let est = estimate_mean_overlap(&e, None, 0.0, 20_000, 8.0, 5).unwrap();
    let want = mean_squared_overlap(0.0, &e);
    assert!((est.mean - want).abs() < 3.0 * est.std_err + 2e-3, "{est:?} vs {want}");
}

#[test]
fn jitter_lowers_the_overlap_monotonically() {
    let t1 = 375.0;
    let base = EmitterParams::ideal(t1, 270.0).unwrap();
    let mut last = f64::INFINITY;
    let mut last_err = 0.0;
    for sigma in [0.0, t1 / 8.0, t1 / 2.0] {
        let e = base.with_jitter(JitterModel::Gaussian { sigma_ps: sigma }).unwrap();
        let est = estimate_mean_overlap(&e, None, 0.0, 20_000, 5.0, 9).unwrap();
        assert!(est.mean < last - 3.0 * (est.std_err + last_err), "σ={sigma}: {est:?} after {last}");
        last = est.mean;
        last_err = est.std_err;
    }
}

#[test]
fn end_to_end_probability_matches_closed_form_at_zero_delay() {
    let e = EmitterParams::ideal(375.0, 270.0).unwrap();
    let cfg = SimulationConfig::new(e, BeamSplitter::balanced(), geometry(), 100_000, 21);
    let p = normalized_opposite_probability(&peaks(&cfg)).unwrap();
    let want = coincidence_probability(0.0, &e, &BeamSplitter::balanced());
    assert!((p.value - want).abs() < 3.0 * p.std_err, "{p:?} vs {want}");
}

#[test]
fn deterministic_emitter_yields_two_events_per_pair() {
    let cfg = SimulationConfig::new(EmitterParams::ideal(375.0, 270.0).unwrap(), BeamSplitter::balanced(), geometry(), 10_000, 3);
    assert_eq!(generate_event_stream(&cfg).unwrap().len(), 20_000);
}

#[test]
fn event_stream_does_not_depend_on_thread_count() {
    let cfg = SimulationConfig::new(EmitterParams::ideal(375.0, 270.0).unwrap(), BeamSplitter::balanced(), geometry(), 20_000, 17);
    let run = |n| {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| generate_event_stream(&cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

fn within(x: f64, want: f64, sigma: f64) -> bool {
    (x - want).abs() <= 3.0 * sigma
}

#[test]
fn distinguishable_photons_give_two_two_one_per_peak() {
    let mut cfg = SimulationConfig::new(EmitterParams::ideal(375.0, 270.0).unwrap(), BeamSplitter::balanced(), geometry(), 100_000, 8);
    cfg.overlap_override = Some(0.0);
    let a = peaks(&cfg);
    let (pa, pb, pc) = (a.a as f64, a.b() as f64 / 2.0, a.c() as f64 / 2.0);
    // Ratio errors from Poisson counts.
    let r_ab = pa / pb;
    let r_cb = pc / pb;
    assert!(within(r_ab, 1.0, r_ab * (1.0 / pa + 0.5 / pb).sqrt()), "{a:?}");
    assert!(within(r_cb, 0.5, r_cb * (0.5 / pc + 0.5 / pb).sqrt()), "{a:?}");
    let p = normalized_opposite_probability(&a).unwrap();
    assert!(within(p.value, 0.5, p.std_err), "{p:?}");
}

#[test]
fn perfect_photons_empty_peak_a() {
    let mut cfg = SimulationConfig::new(EmitterParams::ideal(375.0, 270.0).unwrap(), BeamSplitter::balanced(), geometry(), 50_000, 8);
    cfg.overlap_override = Some(1.0);
    let a = peaks(&cfg);
    assert_eq!(a.a, 0);
    let r = a.c() as f64 / a.b() as f64;
    assert!(within(r, 0.5, r * (1.0 / a.c() as f64 + 1.0 / a.b() as f64).sqrt()), "{a:?}");
}

#[test]
fn poissonian_source_gives_six_four_one() {
    let mut cfg = SimulationConfig::new(EmitterParams::ideal(375.0, 270.0).unwrap(), BeamSplitter::balanced(), geometry(), 2_000_000, 12);
    cfg.source = SourceStatistics::Poissonian { mean_photons: 0.03 };
    let a = peaks(&cfg);
    let (pa, pb, pc) = (a.a as f64, a.b() as f64 / 2.0, a.c() as f64 / 2.0);
    let ra = pa / pc;
    let rb = pb / pc;
    assert!(within(ra, 6.0, ra * (1.0 / pa + 0.5 / pc).sqrt()), "{a:?}");
    assert!(within(rb, 4.0, rb * (0.5 / pb + 0.5 / pc).sqrt()), "{a:?}");
}

#[test]
fn peak_areas_conserve_counts() {
    let cfg = SimulationConfig::new(EmitterParams::ideal(375.0, 270.0).unwrap(), BeamSplitter::balanced(), geometry(), 20_000, 2);
    let ev = generate_event_stream(&cfg).unwrap();
    let h = build_histogram(&ev, 50.0, 20_000.0).unwrap();
    assert_eq!(integrate_peaks(&h, &cfg.geometry).unwrap().total(), h.total());
}

#[test]
fn halving_the_integration_window_keeps_the_probability() {
    let e = EmitterParams::ideal(800.0, 450.0).unwrap();
    let cfg = SimulationConfig::new(e, BeamSplitter::balanced(), geometry(), 100_000, 30);
    let ev = generate_event_stream(&cfg).unwrap();
    let h = build_histogram(&ev, 50.0, 20_000.0).unwrap();
    let full = normalized_opposite_probability(&integrate_peaks(&h, &cfg.geometry).unwrap()).unwrap();
    let narrow_geom = cfg.geometry.with_integration_halfwidth(500.0).unwrap();
    let half = normalized_opposite_probability(&integrate_peaks(&h, &narrow_geom).unwrap()).unwrap();
    assert!((full.value - half.value).abs() < 3.0 * full.std_err.max(half.std_err), "{full:?} {half:?}");
}

#[test]
fn gate_survival_follows_transmission() {
    let e = EmitterParams::ideal(375.0, 270.0).unwrap();
    let gate = TemporalGate::new(200.0, 200.0, 0.8).unwrap();
    let n = 400_000;
    let kept = simulate_decay_arrivals(&e, Some(&gate), n, 4).unwrap();
    // ∫ g(t)·e^{-t/T1}/T1 dt by quadrature.
    let step = 0.5;
    let expect: f64 = (0..20_000)
        .map(|i| {
            let t = (i as f64 + 0.5) * step;
            gate.transmission(t) * (-t / 375.0).exp() / 375.0 * step
        })
        .sum();
    let frac = kept.len() as f64 / n as f64;
    let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
    assert!(within(frac, expect, sigma), "{frac} vs {expect}");
}

#[test]
fn gating_raises_the_indistinguishability() {
    let e = EmitterParams::ideal(375.0, 270.0).unwrap();
    let gate = TemporalGate::new(200.0, 100.0, 1.0).unwrap();
    let free = estimate_mean_overlap(&e, None, 0.0, 20_000, 5.0, 1).unwrap();
    let gated = estimate_mean_overlap(&e, Some(gate), 0.0, 20_000, 5.0, 1).unwrap();
    assert!(gated.mean > free.mean + 3.0 * (gated.std_err + free.std_err), "{gated:?} {free:?}");
}
