//! On-disk formats.
//!
//! Event files:
//!
//! - text: optional `#` comment lines, then one `D1 <timestamp_ps> <pulse_index>`
//!   per line, whitespace separated.
//! - binary: `HOMSIMEV`, version byte `1`, 32-byte config fingerprint (zero if
//!   unknown), little-endian `u64` record count, then 17-byte records
//!   (`u8` detector 1|2, `f64` timestamp in ps, `u64` pulse index), all
//!   little-endian.
//! - csv: `#` comment lines, header `detector,timestamp_ps,pulse_index`.
//!
//! Histograms are two-column text (`bin_center_ps count`) after a comment
//! header carrying `bin_width_ps` and `range_ps`. Tables are CSV with a
//! commented header containing the fingerprint. Floats are written in
//! shortest round-trip form, so files reproduce bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use homsim_core::fitting::{DataPoint, Dataset};
use homsim_core::histogram::CoincidenceHistogram;
use homsim_core::montecarlo::{DetectionEvent, Detector};

use crate::config::EventFormat;
use crate::error::CliError;

pub const BINARY_MAGIC: &[u8; 8] = b"HOMSIMEV";
pub const BINARY_VERSION: u8 = 1;
const BINARY_HEADER: usize = 8 + 1 + 32 + 8;
const BINARY_RECORD: usize = 17;

fn bad(what: &str, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{what} line {line}: {msg}"))
}

/// `# key: value` header lines.
fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .take_while(|l| l.starts_with('#') || l.trim().is_empty())
        .filter_map(|l| l.trim_start_matches('#').trim().split_once(':'))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
}

fn parse_detector(s: &str) -> Option<Detector> {
    match s {
        "D1" | "d1" | "1" => Some(Detector::D1),
        "D2" | "d2" | "2" => Some(Detector::D2),
        _ => None,
    }
}

fn parse_timestamp(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|t| t.is_finite())
}

pub fn events_to_text(events: &[DetectionEvent], fingerprint: &str) -> String {
    let mut out = String::with_capacity(events.len() * 24 + 96);
    out.push_str("# homsim events v1\n");
    let _ = writeln!(out, "# fingerprint: {fingerprint}");
    out.push_str("# columns: detector timestamp_ps pulse_index\n");
    for e in events {
        let _ = writeln!(out, "{} {} {}", e.detector.label(), e.timestamp_ps, e.pulse_index);
    }
    out
}

pub fn events_from_text(text: &str) -> Result<Vec<DetectionEvent>, CliError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(d), Some(t), Some(p), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad("events", i + 1, "expected `detector timestamp_ps pulse_index`"));
        };
        let detector = parse_detector(d).ok_or_else(|| bad("events", i + 1, format!("unknown detector `{d}`")))?;
        let timestamp_ps = parse_timestamp(t).ok_or_else(|| bad("events", i + 1, format!("bad timestamp `{t}`")))?;
        let pulse_index = p.parse().map_err(|_| bad("events", i + 1, format!("bad pulse index `{p}`")))?;
        events.push(DetectionEvent { detector, timestamp_ps, pulse_index });
    }
    Ok(events)
}

pub fn events_to_binary(events: &[DetectionEvent], fingerprint: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(BINARY_HEADER + events.len() * BINARY_RECORD);
    out.extend_from_slice(BINARY_MAGIC);
    out.push(BINARY_VERSION);
    let mut fp = [0u8; 32];
    if let Ok(bytes) = hex::decode(fingerprint) {
        if bytes.len() == 32 {
            fp.copy_from_slice(&bytes);
        }
    }
    out.extend_from_slice(&fp);
    out.extend_from_slice(&(events.len() as u64).to_le_bytes());
    for e in events {
        out.push(match e.detector {
            Detector::D1 => 1,
            Detector::D2 => 2,
        });
        out.extend_from_slice(&e.timestamp_ps.to_le_bytes());
        out.extend_from_slice(&e.pulse_index.to_le_bytes());
    }
    out
}

/// Decodes a binary event file; returns the stored fingerprint (hex) and events.
pub fn events_from_binary(bytes: &[u8]) -> Result<(String, Vec<DetectionEvent>), CliError> {
    let fail = |m: String| CliError::config(format!("binary events: {m}"));
    if bytes.len() < BINARY_HEADER {
        return Err(fail(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != BINARY_MAGIC {
        return Err(fail("bad magic".into()));
    }
    if bytes[8] != BINARY_VERSION {
        return Err(fail(format!("unsupported version {}", bytes[8])));
    }
    let fingerprint = hex::encode(&bytes[9..41]);
    let count = u64::from_le_bytes(bytes[41..49].try_into().expect("8 bytes"));
    let body = &bytes[BINARY_HEADER..];
    let expected = (count as u128) * BINARY_RECORD as u128;
    if body.len() as u128 != expected {
        return Err(fail(format!("header announces {count} records but {} payload bytes follow", body.len())));
    }
    let mut events = Vec::with_capacity(count as usize);
    for (i, rec) in body.chunks_exact(BINARY_RECORD).enumerate() {
        let detector = match rec[0] {
            1 => Detector::D1,
            2 => Detector::D2,
            d => return Err(fail(format!("record {i}: unknown detector byte {d}"))),
        };
        let timestamp_ps = f64::from_le_bytes(rec[1..9].try_into().expect("8 bytes"));
        if !timestamp_ps.is_finite() {
            return Err(fail(format!("record {i}: non-finite timestamp")));
        }
        let pulse_index = u64::from_le_bytes(rec[9..17].try_into().expect("8 bytes"));
        events.push(DetectionEvent { detector, timestamp_ps, pulse_index });
    }
    Ok((fingerprint, events))
}

pub fn events_to_csv(events: &[DetectionEvent], fingerprint: &str) -> String {
    let mut out = String::with_capacity(events.len() * 24 + 96);
    let _ = writeln!(out, "# fingerprint: {fingerprint}");
    out.push_str("detector,timestamp_ps,pulse_index\n");
    for e in events {
        let _ = writeln!(out, "{},{},{}", e.detector.label(), e.timestamp_ps, e.pulse_index);
    }
    out
}

pub fn events_from_csv(text: &str) -> Result<Vec<DetectionEvent>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::config(format!("events csv: {e}")))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("events csv: missing column `{name}`")))
    };
    let (cd, ct, cp) = (col("detector")?, col("timestamp_ps")?, col("pulse_index")?);
    let mut events = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("events csv: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let detector = parse_detector(field(cd)).ok_or_else(|| bad("events csv", i + 2, "unknown detector"))?;
        let timestamp_ps = parse_timestamp(field(ct)).ok_or_else(|| bad("events csv", i + 2, "bad timestamp"))?;
        let pulse_index = field(cp).parse().map_err(|_| bad("events csv", i + 2, "bad pulse index"))?;
        events.push(DetectionEvent { detector, timestamp_ps, pulse_index });
    }
    Ok(events)
}

pub fn encode_events(events: &[DetectionEvent], fingerprint: &str, format: EventFormat) -> Vec<u8> {
    match format {
        EventFormat::Text => events_to_text(events, fingerprint).into_bytes(),
        EventFormat::Binary => events_to_binary(events, fingerprint),
        EventFormat::Csv => events_to_csv(events, fingerprint).into_bytes(),
    }
}

/// Reads any event format, recognising binary by its magic and CSV by its
/// header line.
pub fn decode_events(bytes: &[u8]) -> Result<Vec<DetectionEvent>, CliError> {
    if bytes.starts_with(BINARY_MAGIC) {
        return events_from_binary(bytes).map(|(_, e)| e);
    }
    let text = std::str::from_utf8(bytes).map_err(|_| CliError::config("events: not UTF-8 text"))?;
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
    match first {
        Some(l) if l.starts_with("detector,") => events_from_csv(text),
        _ => events_from_text(text),
    }
}

pub fn event_extension(format: EventFormat) -> &'static str {
    match format {
        EventFormat::Text => "txt",
        EventFormat::Binary => "bin",
        EventFormat::Csv => "csv",
    }
}

pub fn histogram_to_text(h: &CoincidenceHistogram, fingerprint: &str) -> String {
    let mut out = String::with_capacity(h.n_bins() * 16 + 160);
    out.push_str("# homsim histogram v1\n");
    let _ = writeln!(out, "# fingerprint: {fingerprint}");
    let _ = writeln!(out, "# bin_width_ps: {}", h.bin_width());
    let _ = writeln!(out, "# range_ps: {}", h.range());
    out.push_str("# columns: bin_center_ps count\n");
    for (i, c) in h.counts().iter().enumerate() {
        let _ = writeln!(out, "{} {}", h.bin_center(i), c);
    }
    out
}

pub fn histogram_from_text(text: &str) -> Result<CoincidenceHistogram, CliError> {
    let num = |key: &str| -> Result<f64, CliError> {
        header_value(text, key)
            .ok_or_else(|| CliError::config(format!("histogram: missing `# {key}:` header")))?
            .parse::<f64>()
            .map_err(|_| CliError::config(format!("histogram: bad `{key}` header")))
    };
    let (width, range) = (num("bin_width_ps")?, num("range_ps")?);
    let mut h = CoincidenceHistogram::new(width, range).map_err(|e| CliError::config(format!("histogram: {e}")))?;
    let mut counts = Vec::with_capacity(h.n_bins());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(c), Some(n), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad("histogram", i + 1, "expected `bin_center_ps count`"));
        };
        let center: f64 = parse_timestamp(c).ok_or_else(|| bad("histogram", i + 1, "bad bin center"))?;
        let n: u64 = n.parse().map_err(|_| bad("histogram", i + 1, "bad count"))?;
        let k = counts.len();
        if k >= h.n_bins() || (center - h.bin_center(k)).abs() > 1e-6 * width {
            return Err(bad("histogram", i + 1, format!("bin center {center} does not match bin {k}")));
        }
        counts.push(n);
    }
    h = CoincidenceHistogram::from_counts(width, range, counts).map_err(|e| CliError::config(format!("histogram: {e}")))?;
    Ok(h)
}

/// Reads `(τ, P, σ_P)` tables. Columns are found by header name
/// (`tau_ps`, `p`, `sigma_p`, optional `dataset`); other columns are ignored.
pub fn datasets_from_csv(text: &str) -> Result<Vec<Dataset>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::config(format!("table: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| CliError::config(format!("table: missing column `{name}`")));
    let (ct, cp, cs) = (need("tau_ps")?, need("p")?, need("sigma_p")?);
    let cd = col("dataset");
    let mut sets: BTreeMap<String, Vec<DataPoint>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("table: {e}")))?;
        let num = |k: usize, what: &str| -> Result<f64, CliError> {
            rec.get(k)
                .and_then(parse_timestamp)
                .ok_or_else(|| bad("table", i + 2, format!("bad `{what}`")))
        };
        let label = cd.and_then(|k| rec.get(k)).unwrap_or("data").to_string();
        if !sets.contains_key(&label) {
            order.push(label.clone());
        }
        sets.entry(label).or_default().push(DataPoint {
            tau_ps: num(ct, "tau_ps")?,
            p: num(cp, "p")?,
            sigma: num(cs, "sigma_p")?,
        });
    }
    if order.is_empty() {
        return Err(CliError::config("table: no data rows"));
    }
    Ok(order.into_iter().map(|l| {
        let pts = sets.remove(&l).unwrap_or_default();
        Dataset::new(l, pts)
    }).collect())
}

pub fn fingerprint_of(text: &str) -> Option<&str> {
    header_value(text, "fingerprint")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<DetectionEvent> {
        vec![
            DetectionEvent { detector: Detector::D1, timestamp_ps: 0.1 + 0.2, pulse_index: 0 },
            DetectionEvent { detector: Detector::D2, timestamp_ps: 3000.000000001, pulse_index: 0 },
            DetectionEvent { detector: Detector::D1, timestamp_ps: 1.2345678901234e12, pulse_index: 99_999_999 },
        ]
    }

    #[test]
    fn every_event_format_round_trips_bit_exactly() {
        let fp = "ab".repeat(32);
        for f in [EventFormat::Text, EventFormat::Binary, EventFormat::Csv] {
            let bytes = encode_events(&sample(), &fp, f);
            assert_eq!(decode_events(&bytes).unwrap(), sample(), "{f:?}");
        }
        assert_eq!(events_from_binary(&events_to_binary(&sample(), &fp)).unwrap().0, fp);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let bytes = events_to_binary(&sample(), "");
        assert!(events_from_binary(&bytes[..bytes.len() - 1]).is_err());
        assert!(events_from_binary(&bytes[..10]).is_err());
    }

    #[test]
    fn malformed_text_reports_line() {
        let err = events_from_text("# c\nD1 1.0 0\nD3 2.0 0\n").unwrap_err();
        assert!(err.message.contains("line 3"), "{}", err.message);
    }

    #[test]
    fn histogram_round_trip() {
        let mut h = CoincidenceHistogram::new(50.0, 1000.0).unwrap();
        h.record(12.0);
        h.record(-990.0);
        let text = histogram_to_text(&h, "ff");
        assert_eq!(histogram_from_text(&text).unwrap(), h);
        assert_eq!(fingerprint_of(&text), Some("ff"));
    }

    #[test]
    fn table_with_dataset_column() {
        let text = "# fingerprint: x\ndataset,tau_ps,p,sigma_p\na,0,0.3,0.01\nb,0,0.2,0.01\na,100,0.35,0.01\n";
        let sets = datasets_from_csv(text).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].label, "a");
        assert_eq!(sets[0].points.len(), 2);
    }
}
