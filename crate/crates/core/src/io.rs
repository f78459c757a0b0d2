//! Number formatting shared by every CSV and JSON writer.

/// Shortest-round-trip is not enough for diffing runs by eye; every float
/// is written with 17 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV line of floats, newline included.
pub fn csv_row(values: &[f64]) -> String {
    let mut line = values.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}
