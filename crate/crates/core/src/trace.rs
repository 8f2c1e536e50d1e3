//! Distance-stamped SNR traces: loading, validation and spatial partitioning.
//!
//! The on-disk format is a small CSV dialect:
//!
//! ```text
//! # source: run-3
//! distance_m,snr
//! 0,25.1
//! 0.5,24.9
//! ```
//!
//! The header line is optional. Lines starting with `#` are comments; a
//! comment of the form `# key: value` is kept as trace metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "distance_m,snr";

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One measurement: receiver distance from the transmitter and the SNR seen there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub distance: f64,
    pub snr: f64,
}

impl TraceSample {
    pub fn new(distance: f64, snr: f64) -> Result<Self> {
        if !distance.is_finite() || distance < 0.0 {
            return Err(Error::Domain(format!(
                "distance must be finite and non-negative, got {distance}"
            )));
        }
        if !snr.is_finite() {
            return Err(Error::Domain(format!("snr must be finite, got {snr}")));
        }
        Ok(Self { distance, snr })
    }
}

/// An ordered, non-empty run of samples with non-decreasing distance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTrace {
    samples: Vec<TraceSample>,
    pub metadata: BTreeMap<String, String>,
}

impl MeasurementTrace {
    pub fn new(samples: Vec<TraceSample>) -> Result<Self> {
        Self::with_metadata(samples, BTreeMap::new())
    }

    pub fn with_metadata(
        samples: Vec<TraceSample>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrace);
        }
        for (i, pair) in samples.windows(2).enumerate() {
            if pair[1].distance < pair[0].distance {
                return Err(Error::Ordering {
                    line: i + 2,
                    distance: pair[1].distance,
                    previous: pair[0].distance,
                });
            }
            TraceSample::new(pair[1].distance, pair[1].snr)?;
        }
        TraceSample::new(samples[0].distance, samples[0].snr)?;
        Ok(Self { samples, metadata })
    }

    /// Builds a trace from raw `(distance, snr)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let samples = pairs
            .into_iter()
            .map(|(d, s)| TraceSample::new(d, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn snr_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.snr).collect()
    }

    pub fn min_distance(&self) -> f64 {
        self.samples[0].distance
    }

    pub fn max_distance(&self) -> f64 {
        self.samples[self.samples.len() - 1].distance
    }

    /// Median spacing between consecutive samples (0 for a single sample).
    pub fn median_spacing(&self) -> f64 {
        let mut gaps: Vec<f64> = self
            .samples
            .windows(2)
            .map(|w| w[1].distance - w[0].distance)
            .collect();
        if gaps.is_empty() {
            return 0.0;
        }
        gaps.sort_by(f64::total_cmp);
        gaps[gaps.len() / 2]
    }

    /// Writes the canonical CSV form: metadata comments, header, then rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(16 * self.samples.len() + 64);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for sample in &self.samples {
            let _ = writeln!(s, "{},{}", sample.distance, sample.snr);
        }
        s
    }
}

/// Input formats accepted by [`load_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    #[default]
    Csv,
}

/// Parses a trace from `source`, validating every row in file order.
pub fn load_trace<R: BufRead>(source: R, format: TraceFormat) -> Result<MeasurementTrace> {
    match format {
        TraceFormat::Csv => load_csv(source),
    }
}

fn load_csv<R: BufRead>(source: R) -> Result<MeasurementTrace> {
    let mut samples = Vec::new();
    let mut metadata = BTreeMap::new();
    let mut previous: Option<f64> = None;
    let mut seen_content = false;

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim_end_matches('\r').trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once(':') {
                let (k, v) = (k.trim(), v.trim());
                if !k.is_empty() && !k.contains(char::is_whitespace) {
                    metadata.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        if !seen_content {
            seen_content = true;
            if trimmed == TRACE_HEADER {
                continue;
            }
        }
        let mut fields = trimmed.split(',');
        let (Some(d), Some(s), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two comma-separated fields, got {trimmed:?}"),
            });
        };
        let parse = |field: &str, name: &str| {
            field.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{name} field {field:?} is not a number"),
            })
        };
        let distance = parse(d, "distance")?;
        let snr = parse(s, "snr")?;
        let sample = TraceSample::new(distance, snr).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(prev) = previous {
            if distance < prev {
                return Err(Error::Ordering {
                    line: line_no,
                    distance,
                    previous: prev,
                });
            }
        }
        previous = Some(distance);
        samples.push(sample);
    }

    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(MeasurementTrace { samples, metadata })
}

/// Interval length spanning `n_wavelengths` carrier wavelengths.
pub fn interval_length_from_wavelengths(n_wavelengths: f64, carrier_frequency_hz: f64) -> Result<f64> {
    if !(n_wavelengths > 0.0) || !(carrier_frequency_hz > 0.0) {
        return Err(Error::Domain(format!(
            "wavelength count and carrier frequency must be positive \
             (got {n_wavelengths}, {carrier_frequency_hz})"
        )));
    }
    Ok(n_wavelengths * SPEED_OF_LIGHT / carrier_frequency_hz)
}

/// Fixed-length spatial intervals `[origin + (l-1)Δ, origin + lΔ)`, `l = 1..=count`.
///
/// The last interval is closed above so that a sample sitting exactly at the
/// far end of the trace stays inside the partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalPartition {
    pub interval_length: f64,
    pub origin: f64,
    pub count: usize,
}

impl IntervalPartition {
    pub fn new(interval_length: f64, origin: f64, count: usize) -> Result<Self> {
        if !(interval_length > 0.0) || !interval_length.is_finite() {
            return Err(Error::Domain(format!(
                "interval length must be positive, got {interval_length}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::Domain("origin must be finite".into()));
        }
        Ok(Self {
            interval_length,
            origin,
            count: count.max(1),
        })
    }

    /// Partition covering `[origin, max_distance]`.
    pub fn covering(interval_length: f64, origin: f64, max_distance: f64) -> Result<Self> {
        let probe = Self::new(interval_length, origin, 1)?;
        let span = (max_distance - origin).max(0.0);
        let count = (span / probe.interval_length).ceil() as usize;
        Self::new(interval_length, origin, count)
    }

    /// 1-based interval index containing `distance`, or `None` outside coverage.
    pub fn index_of(&self, distance: f64) -> Option<usize> {
        if distance < self.origin || distance > self.end() {
            return None;
        }
        let raw = ((distance - self.origin) / self.interval_length).floor() as usize + 1;
        Some(raw.min(self.count))
    }

    pub fn bounds(&self, index: usize) -> (f64, f64) {
        let lo = self.origin + (index - 1) as f64 * self.interval_length;
        (lo, lo + self.interval_length)
    }

    pub fn end(&self) -> f64 {
        self.origin + self.count as f64 * self.interval_length
    }
}

/// Samples of one interval, in trace order.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSlice {
    pub index: usize,
    pub samples: Vec<TraceSample>,
}

impl IntervalSlice {
    pub fn snr_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.snr).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Splits a trace into contiguous intervals of length `interval_length`.
///
/// Empty intervals are kept so that slice `l` always sits at the same place.
pub fn partition(
    trace: &MeasurementTrace,
    interval_length: f64,
    origin: f64,
) -> Result<(IntervalPartition, Vec<IntervalSlice>)> {
    let layout = IntervalPartition::covering(interval_length, origin, trace.max_distance())?;
    if trace.min_distance() < origin {
        return Err(Error::Domain(format!(
            "sample at {} m lies before the partition origin {origin} m",
            trace.min_distance()
        )));
    }
    let mut slices: Vec<IntervalSlice> = (1..=layout.count)
        .map(|index| IntervalSlice {
            index,
            samples: Vec::new(),
        })
        .collect();
    for sample in trace.samples() {
        let l = layout
            .index_of(sample.distance)
            .expect("trace lies inside its own covering partition");
        slices[l - 1].samples.push(*sample);
    }
    Ok((layout, slices))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<MeasurementTrace> {
        load_trace(s.as_bytes(), TraceFormat::Csv)
    }

    #[test]
    fn parses_plain_rows() {
        let t = load("0.0,25.1\n0.5,24.9").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.samples()[1], TraceSample { distance: 0.5, snr: 24.9 });
    }

    #[test]
    fn header_comments_and_metadata() {
        let t = load("# source: run 7\n# just a note\ndistance_m,snr\n1,2\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.metadata.get("source").map(String::as_str), Some("run 7"));
    }

    #[test]
    fn ordering_error_reports_line() {
        match load("1.0,25\n0.5,26") {
            Err(Error::Ordering { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(load("distance_m,snr\n"), Err(Error::EmptyTrace)));
    }

    #[test]
    fn malformed_row_reports_line() {
        match load("distance_m,snr\n0,1\n1,abc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load("0,1,2"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load("-1,5"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn forty_wavelengths_at_2412_mhz() {
        let delta = interval_length_from_wavelengths(40.0, 2.412e9).unwrap();
        // 40 * 299792458 / 2.412e9
        assert!((delta - 4.971_682_553_897_181).abs() < 1e-12);
        let layout = IntervalPartition::covering(delta, 0.0, 500.0).unwrap();
        assert!((100..=101).contains(&layout.count));
        let one = interval_length_from_wavelengths(1.0, 2.998e8).unwrap();
        assert!((one - 1.0).abs() < 1e-4);
        assert!(interval_length_from_wavelengths(0.0, 1e9).is_err());
        assert!(interval_length_from_wavelengths(40.0, -1.0).is_err());
    }

    #[test]
    fn half_open_binning() {
        let t = MeasurementTrace::from_pairs([(1.0, 1.0), (4.9, 2.0), (5.0, 3.0), (7.0, 1.0)]).unwrap();
        let (_, slices) = partition(&t, 5.0, 0.0).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].len(), 2);
        assert_eq!(slices[1].samples[0].distance, 5.0);
    }

    #[test]
    fn far_end_sample_stays_in_last_interval() {
        let t = MeasurementTrace::from_pairs([(0.0, 1.0), (250.0, 2.0), (500.0, 3.0)]).unwrap();
        let (layout, slices) = partition(&t, 500.0, 0.0).unwrap();
        assert_eq!(layout.count, 1);
        assert_eq!(slices[0].len(), 3);
        let (layout, _) = partition(&t, 5.0, 0.0).unwrap();
        assert_eq!(layout.count, 100);
    }

    #[test]
    fn empty_slices_are_kept() {
        let t = MeasurementTrace::from_pairs([(0.0, 1.0), (12.0, 2.0)]).unwrap();
        let (_, slices) = partition(&t, 5.0, 0.0).unwrap();
        assert_eq!(slices.len(), 3);
        assert!(slices[1].is_empty());
        assert_eq!(slices.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn rejects_bad_interval_length() {
        let t = MeasurementTrace::from_pairs([(0.0, 1.0)]).unwrap();
        assert!(partition(&t, 0.0, 0.0).is_err());
        assert!(partition(&t, -2.0, 0.0).is_err());
        assert!(partition(&t, 1.0, 0.5).is_err());
    }

    #[test]
    fn canonical_csv_round_trip() {
        let text = "# run: a\ndistance_m,snr\n0,25.1\n0.5,24.900000000000002\n";
        let t = load(text).unwrap();
        assert_eq!(t.to_csv_string(), text);
    }
}
