//! Evaluation-point metrics and their CSV form.

use std::path::Path;

use crate::data::{Decoder, Encoder};
use crate::env::TaskId;
use crate::error::{Error, Result};

/// One evaluation point. Losses are means over the updates since the
/// previous point (NaN when there were none); selection counts are cumulative.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub success: Vec<f64>,
    pub discriminator_loss: Vec<f64>,
    pub policy_loss: f64,
    pub q_loss: f64,
    pub alpha: Vec<f64>,
    pub temperature: f64,
    pub selections: Vec<u64>,
}

/// `step, success_<t>.., disc_loss_<t>.., policy_loss, q_loss, alpha_<t>..,
/// temperature, selected_<t>..` with tasks in head order.
pub fn header(tasks: &[TaskId]) -> Vec<String> {
    let per = |prefix: &'static str| tasks.iter().map(move |t| format!("{prefix}_{}", t.name()));
    let mut h = vec!["step".to_string()];
    h.extend(per("success"));
    h.extend(per("disc_loss"));
    h.push("policy_loss".into());
    h.push("q_loss".into());
    h.extend(per("alpha"));
    h.push("temperature".into());
    h.extend(per("selected"));
    h
}

impl MetricsRow {
    pub fn fields(&self) -> Vec<String> {
        let f = |v: &f64| v.to_string();
        let mut out = vec![self.step.to_string()];
        out.extend(self.success.iter().map(f));
        out.extend(self.discriminator_loss.iter().map(f));
        out.push(f(&self.policy_loss));
        out.push(f(&self.q_loss));
        out.extend(self.alpha.iter().map(f));
        out.push(f(&self.temperature));
        out.extend(self.selections.iter().map(|c| c.to_string()));
        out
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.u64(self.step);
        e.f64s(&self.success);
        e.f64s(&self.discriminator_loss);
        e.f64(self.policy_loss);
        e.f64(self.q_loss);
        e.f64s(&self.alpha);
        e.f64(self.temperature);
        e.u32(self.selections.len() as u32);
        for &s in &self.selections {
            e.u64(s);
        }
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        Ok(Self {
            step: d.u64()?,
            success: d.f64s()?,
            discriminator_loss: d.f64s()?,
            policy_loss: d.f64()?,
            q_loss: d.f64()?,
            alpha: d.f64s()?,
            temperature: d.f64()?,
            selections: {
                let n = d.u32()?;
                (0..n).map(|_| d.u64()).collect::<Result<Vec<_>>>()?
            },
        })
    }
}

pub fn write_csv(path: &Path, tasks: &[TaskId], rows: &[MetricsRow]) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Config(format!("writing {}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header(tasks)).map_err(io)?;
    for r in rows {
        w.write_record(r.fields()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_header() {
        let h = header(&[TaskId::Reach, TaskId::Stack]);
        assert_eq!(
            h.join(","),
            "step,success_reach,success_stack,disc_loss_reach,disc_loss_stack,policy_loss,q_loss,\
             alpha_reach,alpha_stack,temperature,selected_reach,selected_stack"
        );
    }

    #[test]
    fn csv_file_matches_fields() {
        let row = MetricsRow {
            step: 10,
            success: vec![0.5],
            discriminator_loss: vec![f64::NAN],
            policy_loss: -1.25,
            q_loss: 0.1,
            alpha: vec![0.9],
            temperature: 359.82,
            selections: vec![8],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_csv(&p, &[TaskId::Lift], &[row.clone()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "10,0.5,NaN,-1.25,0.1,0.9,359.82,8");
        let mut e = Encoder::new();
        row.encode(&mut e);
        let bytes = e.into_bytes();
        let back = MetricsRow::decode(&mut Decoder::new(&bytes)).unwrap();
        assert_eq!(back.fields(), row.fields());
    }
}
