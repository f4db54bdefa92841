//! Start-stop coincidence histograms and five-peak integration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::InterferometerGeometry;
use crate::montecarlo::{DetectionEvent, Detector};

/// Default bin width in ps.
pub const DEFAULT_BIN_WIDTH_PS: f64 = 50.0;
/// Default half range in ps.
pub const DEFAULT_RANGE_PS: f64 = 20_000.0;

/// Counts of `Δ = t_D2 - t_D1` on the bins `[-range + i·w, -range + (i+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    bin_width: f64,
    range: f64,
    counts: Vec<u64>,
}

/// Largest histogram accepted, 2^24 bins.
pub const MAX_BINS: usize = 1 << 24;

impl CoincidenceHistogram {
    /// Empty histogram covering `[-range_ps, range_ps)`.
    pub fn new(bin_width_ps: f64, range_ps: f64) -> Result<Self> {
        if !(bin_width_ps.is_finite() && bin_width_ps > 0.0) {
            return Err(Error::param("bin_width", format!("must be > 0, got {bin_width_ps}")));
        }
        if !(range_ps.is_finite() && range_ps > 0.0) {
            return Err(Error::param("range", format!("must be > 0, got {range_ps}")));
        }
        let n = 2.0 * range_ps / bin_width_ps;
        if n > MAX_BINS as f64 {
            return Err(Error::param("bin_width", format!("{n:.0} bins exceed the limit of {MAX_BINS}")));
        }
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::param(
                "bin_width",
                format!("{bin_width_ps} ps does not divide the range ±{range_ps} ps evenly"),
            ));
        }
        Ok(Self { bin_width: bin_width_ps, range: range_ps, counts: vec![0; rounded as usize] })
    }

    /// Rebuilds a histogram from stored counts.
    pub fn from_counts(bin_width_ps: f64, range_ps: f64, counts: Vec<u64>) -> Result<Self> {
        let mut h = Self::new(bin_width_ps, range_ps)?;
        if counts.len() != h.counts.len() {
            return Err(Error::param(
                "counts",
                format!("expected {} bins, got {}", h.counts.len(), counts.len()),
            ));
        }
        h.counts = counts;
        Ok(h)
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Half range in ps.
    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        -self.range + (i as f64 + 0.5) * self.bin_width
    }

    pub fn bin_index(&self, delta_ps: f64) -> Option<usize> {
        if !(delta_ps >= -self.range && delta_ps < self.range) {
            return None;
        }
        let i = ((delta_ps + self.range) / self.bin_width).floor() as usize;
        Some(i.min(self.counts.len() - 1))
    }

    pub fn record(&mut self, delta_ps: f64) -> bool {
        match self.bin_index(delta_ps) {
            Some(i) => {
                self.counts[i] += 1;
                true
            }
            None => false,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(bin center relative to `center_ps`, count)` for bins whose centers
    /// lie within `halfwidth_ps` of `center_ps`.
    pub fn slice(&self, center_ps: f64, halfwidth_ps: f64) -> Vec<(f64, u64)> {
        (0..self.counts.len())
            .filter_map(|i| {
                let d = self.bin_center(i) - center_ps;
                (d.abs() <= halfwidth_ps).then_some((d, self.counts[i]))
            })
            .collect()
    }
}

/// Start-stop histogram of a timestamp-sorted stream.
///
/// Every D1 event starts a measurement stopped by the next D2 event in the
/// stream; every D2 event likewise starts one stopped by the next D1 event
/// and is recorded with negative sign. Differences at or beyond `range_ps`
/// are dropped.
pub fn build_histogram(
    events: &[DetectionEvent],
    bin_width_ps: f64,
    range_ps: f64,
) -> Result<CoincidenceHistogram> {
    let mut h = CoincidenceHistogram::new(bin_width_ps, range_ps)?;
    let mut next_d1: Option<f64> = None;
    let mut next_d2: Option<f64> = None;
    for ev in events.iter().rev() {
        let t = ev.timestamp_ps;
        match ev.detector {
            Detector::D1 => {
                if let Some(stop) = next_d2 {
                    h.record(stop - t);
                }
                next_d1 = Some(t);
            }
            Detector::D2 => {
                if let Some(stop) = next_d1 {
                    h.record(-(stop - t));
                }
                next_d2 = Some(t);
            }
        }
    }
    Ok(h)
}

/// Most repetition periods searched for side peaks on each side.
const MAX_SIDE_PERIODS: f64 = 10_000.0;

/// Nominal peak the window belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeakLabel {
    A,
    B1,
    B2,
    CMinus,
    CPlus,
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidePeak {
    pub center_ps: f64,
    pub counts: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakAreas {
    pub a: u64,
    /// Non-interfering pairs at `-P` and `-H`.
    pub b1: u64,
    pub b2: u64,
    pub c_minus: u64,
    pub c_plus: u64,
    pub side_peaks: Vec<SidePeak>,
    /// Counts in no window.
    pub outside: u64,
}

impl PeakAreas {
    pub fn b(&self) -> u64 {
        self.b1 + self.b2
    }

    pub fn c(&self) -> u64 {
        self.c_minus + self.c_plus
    }

    /// Sum of all windows plus out-of-window counts.
    pub fn total(&self) -> u64 {
        self.a + self.b() + self.c() + self.side_peaks.iter().map(|s| s.counts).sum::<u64>()
            + self.outside
    }

    /// Side peaks whose centers lie within `halfwidth_ps` of `lag_ps`.
    pub fn side_sum(&self, lag_ps: f64, halfwidth_ps: f64) -> u64 {
        self.side_peaks
            .iter()
            .filter(|s| (s.center_ps - lag_ps).abs() <= halfwidth_ps)
            .map(|s| s.counts)
            .sum()
    }
}

/// `P = A/(B1+B2)` with its Poisson standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub std_err: f64,
}

fn nominal_centers(geometry: &InterferometerGeometry, range: f64) -> Vec<(f64, PeakLabel)> {
    let p = geometry.pump_delay();
    let h = geometry.hom_delay();
    let tau = geometry.photon_delay();
    let mut centers = vec![
        (-tau, PeakLabel::A),
        (tau, PeakLabel::A),
        (-p, PeakLabel::B1),
        (p, PeakLabel::B2),
        (-(p + h), PeakLabel::CMinus),
        (p + h, PeakLabel::CPlus),
    ];
    // Same-pulse pairs sit at ±H and separate from ±P once τ ≠ 0.
    if (p - h).abs() > 1e-6 {
        centers.push((-h, PeakLabel::B1));
        centers.push((h, PeakLabel::B2));
    }
    let lags = [0.0, h, -h, p, -p, tau, -tau, p + h, -(p + h)];
    let rep = geometry.rep_period();
    let w = geometry.integration_halfwidth();
    let kmax = ((range + p + h) / rep).ceil() as i64;
    for k in (-kmax..=kmax).filter(|&k| k != 0) {
        let mut seen: Vec<f64> = Vec::new();
        for lag in lags {
            let c = k as f64 * rep + lag;
            if c.abs() + w <= range && !seen.iter().any(|s| (s - c).abs() < 1e-6) {
                seen.push(c);
                centers.push((c, PeakLabel::Side));
            }
        }
    }
    centers
}

/// Sums each nominal window `center ± integration_halfwidth`. A bin belongs
/// to the nearest center whose window contains the bin center; everything
/// else is counted as `outside`.
pub fn integrate_peaks(h: &CoincidenceHistogram, geometry: &InterferometerGeometry) -> Result<PeakAreas> {
    let w = geometry.integration_halfwidth();
    let needed = geometry.cluster_span() + w;
    if needed > h.range() + 1e-9 {
        return Err(Error::WindowOutOfRange(format!(
            "peaks need ±{needed} ps but the histogram covers ±{} ps",
            h.range()
        )));
    }
    if h.range() / geometry.rep_period() > MAX_SIDE_PERIODS {
        return Err(Error::WindowOutOfRange(format!(
            "histogram spans more than {MAX_SIDE_PERIODS} repetition periods"
        )));
    }
    let centers = nominal_centers(geometry, h.range());
    let mut areas = PeakAreas::default();
    let mut side: Vec<SidePeak> = centers
        .iter()
        .filter(|c| c.1 == PeakLabel::Side)
        .map(|c| SidePeak { center_ps: c.0, counts: 0 })
        .collect();
    side.sort_by(|a, b| a.center_ps.total_cmp(&b.center_ps));
    for (i, &n) in h.counts().iter().enumerate() {
        if n == 0 {
            continue;
        }
        let x = h.bin_center(i);
        let nearest = centers
            .iter()
            .filter(|c| (x - c.0).abs() <= w)
            .min_by(|a, b| (x - a.0).abs().total_cmp(&(x - b.0).abs()));
        match nearest {
            None => areas.outside += n,
            Some(&(_, PeakLabel::A)) => areas.a += n,
            Some(&(_, PeakLabel::B1)) => areas.b1 += n,
            Some(&(_, PeakLabel::B2)) => areas.b2 += n,
            Some(&(_, PeakLabel::CMinus)) => areas.c_minus += n,
            Some(&(_, PeakLabel::CPlus)) => areas.c_plus += n,
            Some(&(c, PeakLabel::Side)) => {
                let idx = side
                    .iter()
                    .position(|s| (s.center_ps - c).abs() < 1e-6)
                    .expect("side center registered");
                side[idx].counts += n;
            }
        }
    }
    areas.side_peaks = side;
    Ok(areas)
}

/// `A/(B1+B2)` with `σ = P·sqrt(1/A + 1/B)`; an empty A peak counts as one
/// event in the error term.
pub fn normalized_opposite_probability(areas: &PeakAreas) -> Result<ProbabilityEstimate> {
    let b = areas.b();
    if b == 0 {
        return Err(Error::InsufficientStatistics("B1 + B2 is zero".into()));
    }
    let (a, bf) = (areas.a as f64, b as f64);
    let value = a / bf;
    let std_err = if areas.a == 0 { 1.0 / bf } else { value * (1.0 / a + 1.0 / bf).sqrt() };
    Ok(ProbabilityEstimate { value, std_err })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(detector: Detector, t: f64) -> DetectionEvent {
        DetectionEvent { detector, timestamp_ps: t, pulse_index: 0 }
    }

    fn geometry() -> InterferometerGeometry {
        InterferometerGeometry::from_ns(3.0, 3.0, 81.0, 1.0).unwrap()
    }

    #[test]
    fn d1_start_gives_positive_difference() {
        let h = build_histogram(&[ev(Detector::D1, 0.0), ev(Detector::D2, 3000.0)], 100.0, 20_000.0)
            .unwrap();
        assert_eq!(h.total(), 1);
        let i = h.counts().iter().position(|&c| c == 1).unwrap();
        assert!(h.bin_center(i) - 50.0 <= 3000.0 && 3000.0 < h.bin_center(i) + 50.0);
    }

    #[test]
    fn d2_start_gives_negative_difference() {
        let h = build_histogram(&[ev(Detector::D2, 0.0), ev(Detector::D1, 3000.0)], 100.0, 20_000.0)
            .unwrap();
        assert_eq!(h.total(), 1);
        let i = h.counts().iter().position(|&c| c == 1).unwrap();
        assert!((h.bin_center(i) + 2950.0).abs() < 1e-9);
    }

    #[test]
    fn only_first_stop_counts() {
        let events = [ev(Detector::D1, 0.0), ev(Detector::D2, 100.0), ev(Detector::D2, 200.0)];
        let h = build_histogram(&events, 50.0, 20_000.0).unwrap();
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn empty_stream_gives_empty_histogram() {
        let h = build_histogram(&[], 50.0, 20_000.0).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!(h.n_bins(), 800);
    }

    #[test]
    fn uneven_bin_width_is_rejected() {
        assert!(CoincidenceHistogram::new(70.0, 20_000.0).is_err());
    }

    #[test]
    fn single_bin_at_pump_delay_is_b2() {
        let mut h = CoincidenceHistogram::new(50.0, 20_000.0).unwrap();
        for _ in 0..17 {
            h.record(3010.0);
        }
        let a = integrate_peaks(&h, &geometry()).unwrap();
        assert_eq!(a.b2, 17);
        assert_eq!(a.total(), 17);
        assert_eq!(a.a + a.b1 + a.c() + a.outside, 0);
    }

    #[test]
    fn window_out_of_range() {
        let h = CoincidenceHistogram::new(50.0, 6_500.0).unwrap();
        assert!(matches!(integrate_peaks(&h, &geometry()), Err(Error::WindowOutOfRange(_))));
    }

    #[test]
    fn conservation_over_every_bin() {
        let mut h = CoincidenceHistogram::new(50.0, 20_000.0).unwrap();
        for i in 0..h.n_bins() {
            h.counts[i] = (i % 7) as u64;
        }
        let a = integrate_peaks(&h, &geometry()).unwrap();
        assert_eq!(a.total(), h.total());
        assert!(a.side_peaks.iter().any(|s| (s.center_ps - geometry().rep_period()).abs() < 1e-6));
    }

    #[test]
    fn normalized_probability_examples() {
        let mk = |a, b| PeakAreas { a, b1: b, b2: b, ..Default::default() };
        assert_eq!(normalized_opposite_probability(&mk(0, 1000)).unwrap().value, 0.0);
        assert_eq!(normalized_opposite_probability(&mk(1000, 1000)).unwrap().value, 0.5);
        assert!((normalized_opposite_probability(&mk(719, 1000)).unwrap().value - 0.3595).abs() < 1e-12);
        assert!(matches!(
            normalized_opposite_probability(&mk(5, 0)),
            Err(Error::InsufficientStatistics(_))
        ));
    }
}
