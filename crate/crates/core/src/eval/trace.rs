use std::path::Path;

use crate::env::AgentRole;
use crate::error::{Error, Result};
use crate::geometry::ActionIndex;
use crate::net::format_f64;
use crate::policy::Mode;

pub const TRACE_HEADER: [&str; 10] = [
    "step", "time", "agent_id", "role", "x", "y", "action", "reward", "mode", "dist_err",
];

/// One agent at one step. Row `k` holds positions after `k` steps; for
/// followers, `action`, `reward` and `mode` describe the move that led there
/// and are empty at step 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub time: f64,
    pub agent_id: usize,
    pub role: AgentRole,
    pub x: f64,
    pub y: f64,
    pub action: Option<ActionIndex>,
    pub reward: Option<f64>,
    pub mode: Option<Mode>,
    pub dist_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// Number of recorded steps, counting the initial one.
    pub fn num_steps(&self) -> usize {
        self.records.last().map_or(0, |r| r.step as usize + 1)
    }

    pub fn agent_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .records
            .iter()
            .take_while(|r| r.step == 0)
            .map(|r| r.agent_id)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn records_of(&self, agent_id: usize) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.agent_id == agent_id)
    }

    pub fn step(&self, step: u64) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.step == step)
    }

    /// Checks that steps run contiguously from 0 with the same agents, in
    /// the same order, at every step.
    pub fn validate(&self) -> Result<()> {
        let per_step = self.records.iter().take_while(|r| r.step == 0).count();
        if self.records.is_empty() {
            return Ok(());
        }
        if per_step == 0 || !self.records.len().is_multiple_of(per_step) {
            return Err(Error::InvalidArgument(format!(
                "{} records do not split into steps of {per_step} agents",
                self.records.len()
            )));
        }
        for (k, chunk) in self.records.chunks(per_step).enumerate() {
            for (r, first) in chunk.iter().zip(&self.records[..per_step]) {
                if r.step != k as u64 || r.agent_id != first.agent_id || r.role != first.role {
                    return Err(Error::InvalidArgument(format!(
                        "record for agent {} at step {} breaks the step-{k} layout",
                        r.agent_id, r.step
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record(TRACE_HEADER).expect("in-memory write");
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                format_f64(r.time),
                r.agent_id.to_string(),
                r.role.as_str().to_string(),
                format_f64(r.x),
                format_f64(r.y),
                opt(r.action.map(|a| a.index().to_string())),
                opt(r.reward.map(format_f64)),
                opt(r.mode.map(|m| m.as_str().to_string())),
                opt(r.dist_err.map(format_f64)),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn from_csv(text: &str, context: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::parse(context, e.to_string()))?;
        if header.iter().ne(TRACE_HEADER) {
            return Err(Error::parse(context, format!("unexpected header {header:?}")));
        }
        let mut records = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(context, e.to_string()))?;
            let row = line + 2;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let bad = |i: usize, why: String| {
                Error::parse(context, format!("line {row}, {}: {why}", TRACE_HEADER[i]))
            };
            let num = |i: usize| -> Result<f64> {
                field(i).parse::<f64>().map_err(|e| bad(i, e.to_string()))
            };
            let opt_num = |i: usize| -> Result<Option<f64>> {
                if field(i).is_empty() {
                    Ok(None)
                } else {
                    num(i).map(Some)
                }
            };
            let role = match field(3) {
                "leader" => AgentRole::Leader,
                "follower" => AgentRole::Follower,
                "obstacle" => AgentRole::Obstacle,
                other => return Err(bad(3, format!("unknown role {other:?}"))),
            };
            let action = match field(6) {
                "" => None,
                s => Some(
                    s.parse::<usize>()
                        .map_err(|e| e.to_string())
                        .and_then(|a| ActionIndex::new(a).map_err(|e| e.to_string()))
                        .map_err(|e| bad(6, e))?,
                ),
            };
            let mode = match field(8) {
                "" => None,
                s => Some(s.parse::<Mode>().map_err(|e| bad(8, e.to_string()))?),
            };
            records.push(TraceRecord {
                step: field(0).parse().map_err(|e: std::num::ParseIntError| bad(0, e.to_string()))?,
                time: num(1)?,
                agent_id: field(2).parse().map_err(|e: std::num::ParseIntError| bad(2, e.to_string()))?,
                role,
                x: num(4)?,
                y: num(5)?,
                action,
                reward: opt_num(7)?,
                mode,
                dist_err: opt_num(9)?,
            });
        }
        let trace = Trace { records };
        trace
            .validate()
            .map_err(|e| Error::parse(context, e.to_string()))?;
        Ok(trace)
    }
}

pub fn export_trace(trace: &Trace, path: &Path) -> Result<()> {
    write_file(path, &trace.to_csv())
}

pub fn import_trace(path: &Path) -> Result<Trace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trace::from_csv(&text, &path.display().to_string())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
