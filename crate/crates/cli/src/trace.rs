//! CSV learning-curve traces. One row per `record_every` iterations with a
//! fixed column order: `iter,loss,metric,spread_gain,mean_abs_eig,noise_gain,ms`.
//! The loss column is the raw mean over the record window; infinite spread
//! gains serialize as `inf`. The wall-clock column is informational and
//! excluded from reproducibility comparisons.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use psgd_core::metrics::QualityReport;

pub const CSV_HEADER: &str = "iter,loss,metric,spread_gain,mean_abs_eig,noise_gain,ms";

pub struct TraceWriter {
    out: BufWriter<File>,
    record_every: u64,
    window_sum: f64,
    window_count: u64,
    start: Instant,
}

impl TraceWriter {
    pub fn create(path: &Path, record_every: u64) -> std::io::Result<Self> {
        assert!(record_every >= 1);
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{CSV_HEADER}")?;
        Ok(TraceWriter {
            out,
            record_every,
            window_sum: 0.0,
            window_count: 0,
            start: Instant::now(),
        })
    }

    /// Accumulates one per-iteration loss; on a record boundary returns the
    /// window mean that the caller should pass to `write_row` together with
    /// whichever extra columns apply.
    pub fn observe(&mut self, loss: f64) -> Option<f64> {
        self.window_sum += loss;
        self.window_count += 1;
        if self.window_count == self.record_every {
            let mean = self.window_sum / self.window_count as f64;
            self.window_sum = 0.0;
            self.window_count = 0;
            Some(mean)
        } else {
            None
        }
    }

    pub fn write_row(
        &mut self,
        iter: u64,
        loss: f64,
        metric: Option<f64>,
        quality: Option<&QualityReport>,
    ) -> std::io::Result<()> {
        let metric = metric.map(|m| m.to_string()).unwrap_or_default();
        let (sg, me, ng) = match quality {
            Some(q) => (
                q.spread_gain.to_string(),
                q.mean_abs_eig.to_string(),
                q.noise_gain.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let ms = self.start.elapsed().as_millis();
        writeln!(self.out, "{iter},{loss},{metric},{sg},{me},{ng},{ms}")
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Strips the wall-clock column for byte comparisons between runs.
pub fn strip_wall_clock(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windowing_counts_records() {
        let dir = std::env::temp_dir().join(format!("trace-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let mut w = TraceWriter::create(&path, 100).unwrap();
        let mut rows = 0;
        for it in 1..=1000u64 {
            if let Some(mean) = w.observe(1.0) {
                assert_eq!(mean, 1.0);
                w.write_row(it, mean, None, None).unwrap();
                rows += 1;
            }
        }
        w.finish().unwrap();
        assert_eq!(rows, 10);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with(CSV_HEADER));
    }

    #[test]
    fn infinite_gain_serializes_as_inf() {
        let dir = std::env::temp_dir().join(format!("trace-test-inf-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let mut w = TraceWriter::create(&path, 1).unwrap();
        let q = QualityReport {
            spread_gain: f64::INFINITY,
            mean_abs_eig: 1.0,
            noise_gain: 2.0,
        };
        w.write_row(1, 0.5, Some(0.25), Some(&q)).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("1,0.5,0.25,inf,1,2,"), "row: {row}");
    }

    #[test]
    fn wall_clock_stripping() {
        let a = "iter,loss,metric,spread_gain,mean_abs_eig,noise_gain,ms\n1,0.5,,,,,123";
        let b = "iter,loss,metric,spread_gain,mean_abs_eig,noise_gain,ms\n1,0.5,,,,,456";
        assert_eq!(strip_wall_clock(a), strip_wall_clock(b));
    }
}
