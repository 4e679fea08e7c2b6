use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Dims, ModelParams, ParamGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub loss: f64,
    /// Group norms in column order (see [`TrainLog::groups`]).
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub params: ModelParams,
}

/// Loss and parameter-norm trajectory of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    groups: Vec<ParamGroup>,
    pub records: Vec<LogRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl TrainLog {
    pub fn new(dims: Dims) -> Self {
        let mut groups = vec![ParamGroup::Phi];
        groups.extend((0..dims.q).map(ParamGroup::Weight));
        groups.extend((0..dims.q).map(ParamGroup::Bias));
        groups.push(ParamGroup::InitWeight);
        groups.push(ParamGroup::InitBias);
        TrainLog {
            groups,
            records: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Column order: Φ, A_1..A_q, b_1..b_q, U, v.
    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub(crate) fn record(&mut self, iter: usize, loss: f64, params: &ModelParams, snapshot_iters: &[usize]) {
        let norms = self.groups.iter().map(|&g| params.group_norm(g)).collect();
        self.records.push(LogRecord { iter, loss, norms });
        if snapshot_iters.contains(&iter) {
            self.snapshots.push(Snapshot {
                iter,
                params: params.clone(),
            });
        }
    }

    pub fn initial_loss(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    /// Norm of `group` at every record.
    pub fn norm_series(&self, group: ParamGroup) -> Option<Vec<f64>> {
        let col = self.groups.iter().position(|&g| g == group)?;
        Some(self.records.iter().map(|r| r.norms[col]).collect())
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["iter".to_string(), "loss".to_string()];
        h.extend(self.groups.iter().map(|g| format!("norm_{}", g.label())));
        h.push("seed".into());
        h
    }

    /// `iter,loss,norm_phi,norm_A1..,norm_b1..,norm_U,norm_v,seed`.
    pub fn write_csv<W: Write>(&self, writer: W, seed: u64) -> Result<()> {
        self.write(writer, seed, false)
    }

    /// Same columns with every norm divided by its value at iteration 0
    /// (`NaN` where the initial norm is zero).
    pub fn write_normalized_csv<W: Write>(&self, writer: W, seed: u64) -> Result<()> {
        self.write(writer, seed, true)
    }

    fn write<W: Write>(&self, writer: W, seed: u64, normalized: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        let base = self.records.first().map(|r| r.norms.clone()).unwrap_or_default();
        for r in &self.records {
            let mut rec = vec![r.iter.to_string(), r.loss.to_string()];
            for (n, b) in r.norms.iter().zip(&base) {
                let v = if normalized {
                    if *b == 0.0 {
                        f64::NAN
                    } else {
                        n / b
                    }
                } else {
                    *n
                };
                rec.push(v.to_string());
            }
            rec.push(seed.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
