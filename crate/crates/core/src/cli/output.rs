use std::path::Path;

use super::run::RunReport;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "m",
    "gamma",
    "imlogdet_plus",
    "imlogdet_minus",
    "predicted_plus",
    "predicted_minus",
    "gap_plus",
    "gap_minus",
];

/// `x` with 12 significant digits in the shortest of fixed or exponent
/// notation, trailing zeros removed (C's `%.12g`).
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the per-m determinant rows of `report`.
pub fn emit_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(CSV_HEADER).map_err(csv_error)?;
    for row in &report.rows {
        let r = &row.report;
        let fields = [
            r.m,
            r.gamma.gamma,
            r.imlogdet_plus,
            r.imlogdet_minus,
            r.predicted_plus,
            r.predicted_minus,
            r.gap_plus,
            r.gap_minus,
        ];
        writer
            .write_record(fields.iter().map(|x| format_sig(*x)))
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes `method,gamma` rows for the Berry phases of `report`.
pub fn emit_phases_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(["method", "gamma"]).map_err(csv_error)?;
    for p in &report.phases {
        writer
            .write_record([p.method.name().to_string(), format_sig(p.gamma)])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (1.0, "1"),
            (4.0, "4"),
            (-0.5, "-0.5"),
            (std::f64::consts::PI, "3.14159265359"),
            (-std::f64::consts::FRAC_PI_2, "-1.57079632679"),
            (1.5e-7, "1.5e-07"),
            (1e-4, "0.0001"),
            (123456789012345.0, "1.23456789012e+14"),
            (100.0, "100"),
            (2.0 / 3.0 * 1e-5, "6.66666666667e-06"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig(x), want, "{x}");
        }
    }
}
