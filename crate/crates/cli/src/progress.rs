//! Structured progress on stderr: one JSON object per line.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use cpi_core::pipeline::Progress;
use serde::Serialize;

/// Minimum spacing between lines of the same stage; the final line of a
/// stage is always written.
const MIN_INTERVAL: Duration = Duration::from_millis(250);

#[derive(Serialize)]
struct Line<'a> {
    stage: &'a str,
    processed: usize,
    total: usize,
    rate: f64,
    elapsed_s: f64,
    resumed: bool,
}

pub struct Reporter {
    quiet: bool,
    last: Mutex<Option<(&'static str, Instant)>>,
}

impl Reporter {
    pub fn new(quiet: bool) -> Self {
        Self {
            quiet,
            last: Mutex::new(None),
        }
    }

    pub fn report(&self, p: &Progress) {
        if self.quiet {
            return;
        }
        // The lock also serializes writers so lines never interleave.
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let now = Instant::now();
        let due = match *last {
            Some((stage, at)) => stage != p.stage || p.processed >= p.total || now - at >= MIN_INTERVAL,
            None => true,
        };
        if !due {
            return;
        }
        *last = Some((p.stage, now));
        let secs = p.elapsed.as_secs_f64();
        let line = Line {
            stage: p.stage,
            processed: p.processed,
            total: p.total,
            rate: if secs > 0.0 { p.processed as f64 / secs } else { 0.0 },
            elapsed_s: secs,
            resumed: p.resumed,
        };
        let text = serde_json::to_string(&line).expect("progress serializes");
        let _ = writeln!(std::io::stderr().lock(), "{text}");
    }
}
