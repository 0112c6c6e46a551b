//! CSV metric reports.

use std::fmt::Write;

use crate::pipeline::EvalRow;

pub const REPORT_HEADER: &str = "record_id,collision,smoothness,best_of_1,best_of_15";

/// Header, one row per record, then a `mean` row.
pub fn format_report(rows: &[EvalRow], mean: &EvalRow) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows.iter().chain(std::iter::once(mean)) {
        let id = r.record_id.map_or_else(|| "mean".to_string(), |i| i.to_string());
        writeln!(out, "{id},{:.6},{:.6},{:.6},{:.6}", r.collision, r.smoothness, r.best_of_1, r.best_of_n).expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::mean_row;

    #[test]
    fn rows_and_mean() {
        let row = |id, c| EvalRow { record_id: Some(id), collision: c, smoothness: 1.0, best_of_1: 0.5, best_of_n: 0.25 };
        let rows = [row(3, 99.0), row(7, 40.0)];
        let csv = format_report(&rows, &mean_row(&rows).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "3,99.000000,1.000000,0.500000,0.250000");
        assert_eq!(lines[3], "mean,69.500000,1.000000,0.500000,0.250000");
        assert_eq!(lines.len(), 4);
    }
}
