//! Pen event line protocol:
//!
//! ```text
//! EVT <t> BTN 1    button press
//! EVT <t> BTN 0    button release
//! EVT <t> PWR 1    power on
//! ```
//!
//! Lines that do not match are counted as warnings and skipped.

use std::io::BufRead;

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenEventKind {
    ButtonPress,
    ButtonRelease,
    PowerOn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenEvent {
    pub t: f64,
    pub kind: PenEventKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PenEventLog {
    pub events: Vec<PenEvent>,
    /// Number of skipped lines.
    pub warnings: usize,
}

pub fn parse_pen_events<R: BufRead>(reader: R) -> Result<PenEventLog, IngestError> {
    let mut log = PenEventLog::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            None => continue,
            Some("EVT") => {}
            Some(_) => {
                log.warnings += 1;
                continue;
            }
        }
        let t: f64 = match tokens.next().map(str::parse) {
            Some(Ok(t)) if f64::is_finite(t) => t,
            _ => return Err(IngestError::format(line_no, "malformed event timestamp")),
        };
        let kind = match (tokens.next(), tokens.next(), tokens.next()) {
            (Some("BTN"), Some("1"), None) => PenEventKind::ButtonPress,
            (Some("BTN"), Some("0"), None) => PenEventKind::ButtonRelease,
            (Some("PWR"), Some("1"), None) => PenEventKind::PowerOn,
            _ => {
                log.warnings += 1;
                continue;
            }
        };
        if log.events.last().is_some_and(|e| t < e.t) {
            return Err(IngestError::NonMonotonicTime { line: line_no });
        }
        log.events.push(PenEvent { t, kind });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn press_release_power() {
        let log = parse_pen_events("EVT 0.5 PWR 1\nEVT 1.250 BTN 1\nEVT 1.300 BTN 0\n".as_bytes()).unwrap();
        assert_eq!(
            log.events,
            vec![
                PenEvent { t: 0.5, kind: PenEventKind::PowerOn },
                PenEvent { t: 1.25, kind: PenEventKind::ButtonPress },
                PenEvent { t: 1.3, kind: PenEventKind::ButtonRelease },
            ]
        );
        assert_eq!(log.warnings, 0);
    }

    #[test]
    fn garbage_is_skipped() {
        let log = parse_pen_events("EVT 1.0 BTN 1\n#$%@ noise\nEVT 2.0 BTN 0\n".as_bytes()).unwrap();
        assert_eq!(log.events.len(), 2);
        assert_eq!(log.warnings, 1);
    }

    #[test]
    fn unknown_subtype_is_skipped() {
        let log = parse_pen_events("EVT 1.0 LED 3\nEVT 1.5 BTN 1\n\n".as_bytes()).unwrap();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.warnings, 1);
    }

    #[test]
    fn malformed_timestamp_is_error() {
        let err = parse_pen_events("EVT 1.0 BTN 1\nEVT abc BTN 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::Format { line: 2, .. }));
    }

    #[test]
    fn decreasing_time_is_error() {
        let err = parse_pen_events("EVT 2.0 BTN 1\nEVT 1.0 BTN 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::NonMonotonicTime { line: 2 }));
        assert!(parse_pen_events("EVT 2.0 BTN 1\nEVT 2.0 BTN 0\n".as_bytes()).is_ok());
    }
}
