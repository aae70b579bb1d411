//! Plain CSV output: header row, comma separator, '.' decimal point and
//! numbers printed with 12 significant digits.

use std::io::Write;

use crate::error::Result;

pub const CSV_DIGITS: usize = 12;

/// `%.{digits}g`-style formatting: shortest of fixed and scientific notation
/// after rounding to `digits` significant digits, trailing zeros trimmed.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter { out, columns: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        debug_assert_eq!(values.len(), self.columns);
        let cells: Vec<String> = values.iter().map(|v| format_sig(*v, CSV_DIGITS)).collect();
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    /// Row with leading free-form text cells (labels) before the numbers.
    pub fn labeled_row(&mut self, labels: &[&str], values: &[f64]) -> Result<()> {
        let mut cells: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        cells.extend(values.iter().map(|v| format_sig(*v, CSV_DIGITS)));
        debug_assert_eq!(cells.len(), self.columns);
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    /// Row with the numbers first and free-form text cells after them.
    pub fn row_then_labels(&mut self, values: &[f64], labels: &[&str]) -> Result<()> {
        let mut cells: Vec<String> = values.iter().map(|v| format_sig(*v, CSV_DIGITS)).collect();
        cells.extend(labels.iter().map(|s| s.to_string()));
        debug_assert_eq!(cells.len(), self.columns);
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.5, 12), "0.5");
        assert_eq!(format_sig(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_sig(-2.0, 12), "-2");
        assert_eq!(format_sig(123456.789, 12), "123456.789");
        assert_eq!(format_sig(1.5e-9, 12), "1.5e-9");
        assert_eq!(format_sig(2.0f64.sqrt() * 1e13, 12), "1.41421356237e13");
        assert_eq!(format_sig(0.7071067811865476, 12), "0.707106781187");
    }
}
