//! RSSI observation traces and their on-disk CSV form.
//!
//! A trace is the time-ordered RSSI record of a single beacon as seen by one
//! receiver. Samples carry an optional ground-truth distance label; simulated
//! traces and calibration walks are labeled, live captures usually are not.
//!
//! CSV schema: `t_ms,beacon_id,rssi_dbm,true_distance_m`, where the last
//! field is empty for unlabeled samples.

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace file, line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One RSSI observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssiSample {
    /// Milliseconds since trace start; non-decreasing within a trace.
    pub t_ms: u64,
    pub rssi_dbm: f64,
    /// Ground-truth beacon distance, when known.
    pub true_distance_m: Option<f64>,
}

/// Time-ordered observations of one beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct RssiTrace {
    pub beacon_id: String,
    pub samples: Vec<RssiSample>,
}

impl RssiTrace {
    pub fn new(beacon_id: impl Into<String>, samples: Vec<RssiSample>) -> Self {
        Self { beacon_id: beacon_id.into(), samples }
    }

    /// True when every sample carries a ground-truth distance.
    pub fn is_labeled(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.true_distance_m.is_some())
    }
}

/// Reads a trace from `t_ms,beacon_id,rssi_dbm,true_distance_m` CSV.
///
/// All rows must name the same beacon and timestamps must be non-decreasing;
/// violations are reported with their 1-based line number.
pub fn read_trace_csv<R: io::Read>(reader: R) -> Result<RssiTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers().map_err(|e| csv_err(1, e))?;
        let expected = ["t_ms", "beacon_id", "rssi_dbm", "true_distance_m"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(TraceError::MalformedCsv {
                line: 1,
                reason: format!(
                    "expected header `t_ms,beacon_id,rssi_dbm,true_distance_m`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }

    let mut beacon_id: Option<String> = None;
    let mut samples = Vec::new();
    let mut last_t = 0u64;
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| csv_err(line, e))?;
        if record.len() != 4 {
            return Err(TraceError::MalformedCsv {
                line,
                reason: format!("expected 4 fields, got {}", record.len()),
            });
        }

        let t_ms: u64 = record[0].trim().parse().map_err(|_| TraceError::MalformedCsv {
            line,
            reason: format!("timestamp `{}` is not a non-negative integer", &record[0]),
        })?;
        if t_ms < last_t {
            return Err(TraceError::MalformedCsv {
                line,
                reason: format!("timestamp {t_ms} decreases from {last_t}"),
            });
        }
        last_t = t_ms;

        let id = record[1].trim();
        match &beacon_id {
            None => beacon_id = Some(id.to_string()),
            Some(first) if first != id => {
                return Err(TraceError::MalformedCsv {
                    line,
                    reason: format!("beacon `{id}` differs from `{first}`; one beacon per trace"),
                });
            }
            Some(_) => {}
        }

        let rssi_dbm: f64 = record[2].trim().parse().map_err(|_| TraceError::MalformedCsv {
            line,
            reason: format!("RSSI `{}` is not a number", &record[2]),
        })?;

        let label = record[3].trim();
        let true_distance_m = if label.is_empty() {
            None
        } else {
            Some(label.parse().map_err(|_| TraceError::MalformedCsv {
                line,
                reason: format!("distance `{label}` is not a number"),
            })?)
        };

        samples.push(RssiSample { t_ms, rssi_dbm, true_distance_m });
    }

    Ok(RssiTrace { beacon_id: beacon_id.unwrap_or_default(), samples })
}

/// Writes a trace in the format accepted by [`read_trace_csv`].
pub fn write_trace_csv<W: io::Write>(mut writer: W, trace: &RssiTrace) -> io::Result<()> {
    writeln!(writer, "t_ms,beacon_id,rssi_dbm,true_distance_m")?;
    for s in &trace.samples {
        match s.true_distance_m {
            Some(d) => {
                writeln!(writer, "{},{},{},{}", s.t_ms, trace.beacon_id, s.rssi_dbm, d)?
            }
            None => writeln!(writer, "{},{},{},", s.t_ms, trace.beacon_id, s.rssi_dbm)?,
        }
    }
    Ok(())
}

fn csv_err(line: usize, e: csv::Error) -> TraceError {
    TraceError::MalformedCsv { line, reason: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t_ms: u64, rssi_dbm: f64, label: Option<f64>) -> RssiSample {
        RssiSample { t_ms, rssi_dbm, true_distance_m: label }
    }

    #[test]
    fn labeled_trace_round_trips_bitwise() {
        let trace = RssiTrace::new(
            "est-1",
            vec![
                sample(0, -70.25, Some(0.1)),
                sample(100, -71.0, Some(0.1)),
                sample(200, -88.625111, Some(2.5)),
            ],
        );
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn unlabeled_field_stays_empty() {
        let trace =
            RssiTrace::new("b", vec![sample(0, -70.0, None), sample(100, -71.5, Some(1.0))]);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("0,b,-70,\n"));
        let parsed = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, trace);
        assert!(!parsed.is_labeled());
    }

    #[test]
    fn header_mismatch_is_line_one() {
        let text = "time,beacon,rssi,d\n0,b,-70,1\n";
        match read_trace_csv(text.as_bytes()) {
            Err(TraceError::MalformedCsv { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn bad_rssi_names_its_line() {
        let text = "t_ms,beacon_id,rssi_dbm,true_distance_m\n0,b,-70,1\n100,b,oops,1\n";
        match read_trace_csv(text.as_bytes()) {
            Err(TraceError::MalformedCsv { line: 3, reason }) => {
                assert!(reason.contains("oops"), "reason: {reason}");
            }
            other => panic!("expected line-3 error, got {other:?}"),
        }
    }

    #[test]
    fn decreasing_timestamps_are_rejected() {
        let text = "t_ms,beacon_id,rssi_dbm,true_distance_m\n100,b,-70,1\n0,b,-71,1\n";
        match read_trace_csv(text.as_bytes()) {
            Err(TraceError::MalformedCsv { line: 3, reason }) => {
                assert!(reason.contains("decreases"), "reason: {reason}");
            }
            other => panic!("expected line-3 error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_beacons_are_rejected() {
        let text = "t_ms,beacon_id,rssi_dbm,true_distance_m\n0,a,-70,1\n100,b,-71,1\n";
        match read_trace_csv(text.as_bytes()) {
            Err(TraceError::MalformedCsv { line: 3, reason }) => {
                assert!(reason.contains("one beacon"), "reason: {reason}");
            }
            other => panic!("expected line-3 error, got {other:?}"),
        }
    }

    #[test]
    fn empty_trace_is_unlabeled() {
        let parsed =
            read_trace_csv("t_ms,beacon_id,rssi_dbm,true_distance_m\n".as_bytes()).unwrap();
        assert!(parsed.samples.is_empty());
        assert!(!parsed.is_labeled());
    }
}
