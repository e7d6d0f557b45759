use std::io::Write;

use super::Trajectory;
use crate::error::{Error, Result};

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

/// Writes the trajectory as CSV: one table of points
/// (`t, x1.., mode, alpha, psi`) followed by an `event_t, event, x1.., detail`
/// table separated by its own header row.
pub fn write_csv<W: Write>(traj: &Trajectory, dim: usize, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let csv_err = |e: csv::Error| Error::Document(format!("csv: {e}"));
    let xs: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();

    let mut header = vec!["t".to_string()];
    header.extend(xs.iter().cloned());
    header.extend(["mode", "alpha", "psi"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for p in &traj.points {
        let mut rec = vec![format!("{:.12e}", p.t)];
        rec.extend(p.x.iter().map(|v| format!("{v:.12e}")));
        rec.push(p.mode.to_string());
        rec.push(opt(p.alpha));
        rec.push(opt(p.psi));
        w.write_record(&rec).map_err(csv_err)?;
    }

    let mut header = vec!["event_t".to_string(), "event".to_string()];
    header.extend(xs);
    header.push("detail".into());
    w.write_record(&header).map_err(csv_err)?;
    for e in &traj.events {
        let mut rec = vec![format!("{:.12e}", e.t), e.kind.as_str().to_string()];
        rec.extend(e.x.iter().map(|v| format!("{v:.12e}")));
        rec.push(e.detail.clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
