use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::objective::num;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub objective: f64,
    pub max_delta: f64,
    pub max_residual: f64,
    pub max_stationarity_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InferenceTrace {
    pub records: Vec<SweepRecord>,
    pub converged: bool,
    pub sweeps: usize,
    /// Cumulative wall time in seconds per update class.
    pub timings: BTreeMap<String, f64>,
    /// Triplet multiplier entries clamped to the cap, summed over sweeps.
    pub clamped_trip: usize,
}

impl InferenceTrace {
    pub fn last(&self) -> Option<&SweepRecord> {
        self.records.last()
    }

    pub(crate) fn add_time(&mut self, class: &str, secs: f64) {
        *self.timings.entry(class.to_string()).or_insert(0.0) += secs;
    }

    /// One JSON object per sweep; timings are left out so the output is
    /// reproducible.
    pub fn write_lines<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            let mut obj = serde_json::Map::new();
            obj.insert("sweep".into(), r.sweep.into());
            obj.insert("objective".into(), num(r.objective));
            obj.insert("max_delta".into(), num(r.max_delta));
            obj.insert("max_residual".into(), num(r.max_residual));
            obj.insert("max_stationarity_residual".into(), num(r.max_stationarity_residual));
            serde_json::to_writer(&mut w, &obj)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_lines(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_have_fixed_keys() {
        let t = InferenceTrace {
            records: vec![SweepRecord {
                sweep: 1,
                objective: 0.5,
                max_delta: f64::INFINITY,
                max_residual: 0.0,
                max_stationarity_residual: 0.0,
            }],
            ..Default::default()
        };
        let line = t.to_lines();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["sweep"], 1);
        assert_eq!(v["max_delta"], "inf");
        assert_eq!(line.lines().count(), 1);
    }
}
