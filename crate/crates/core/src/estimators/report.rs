use std::io::Write;

use super::EstimateReport;
use crate::error::Result;

pub const REPORT_HEADER: [&str; 9] =
    ["scenario", "estimator", "regime", "bin", "n", "value", "se", "first_stage_r2", "flags"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes reports as CSV; absent values are empty fields and flags are `;`-separated.
pub fn write_reports<W: Write>(writer: W, reports: &[EstimateReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.scenario.clone(),
            r.estimator.name().to_string(),
            r.regime.clone(),
            r.bin.clone(),
            r.n.to_string(),
            r.value.to_string(),
            opt(r.se),
            opt(r.first_stage_r2),
            r.flags.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
