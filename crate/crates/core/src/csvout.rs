//! CSV helpers: '.' decimal point, 17 significant digits for reals.

use std::io::Write;

use crate::error::Result;

/// Round-trip exact rendering of an `f64`; non-finite values as `inf`, `-inf`, `nan`.
pub fn real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// Writes a header and rows to any writer.
pub fn write_table<W: Write>(w: W, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(&r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0] {
            assert_eq!(real(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(real(f64::INFINITY), "inf");
    }
}
