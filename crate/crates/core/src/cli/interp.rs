use std::io::Write;

use super::CliError;
use crate::analysis::{interp_demo, InterpDemoRow};

pub fn run_interp_demo(ns: &[usize], out: &mut dyn Write) -> Result<(), CliError> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(CliError::Config("N values must be positive".into()));
    }
    let rows = interp_demo(ns)?;
    writeln!(out, "{}", InterpDemoRow::CSV_HEADER)?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    out.flush()?;
    Ok(())
}
