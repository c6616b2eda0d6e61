use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MetricsRecord;

/// One row of the summary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub algorithm: String,
    pub max_return: f64,
    pub ci: f64,
    pub avg_return: f64,
}

/// Results file: `task,algorithm,seed,sharing,env_steps,mean_return`.
pub fn write_results(out: impl Write, records: &[MetricsRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["task", "algorithm", "seed", "sharing", "env_steps", "mean_return"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(input: impl Read) -> csv::Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Summary file: `task,algorithm,max_return,ci,avg_return`.
pub fn write_summary(out: impl Write, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["task", "algorithm", "max_return", "ci", "avg_return"])?;
    }
    w.flush()?;
    Ok(())
}
