use std::io;

use serde_json::ser::{Formatter, PrettyFormatter};

/// Minimum significant digits written for any float.
pub const MIN_SIG_DIGITS: usize = 9;

/// Shortest round-trip scientific form, mantissa padded to at least
/// [`MIN_SIG_DIGITS`] digits: `0.1 -> 1.00000000e-1`.
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", mantissa),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let mut frac = frac.to_string();
    while 1 + frac.len() < MIN_SIG_DIGITS {
        frac.push('0');
    }
    format!("{sign}{int}.{frac}e{exp}")
}

/// Pretty JSON with every float written through [`fmt_f64`].
pub struct JsonFormatter(PrettyFormatter<'static>);

impl JsonFormatter {
    pub fn new() -> Self {
        Self(PrettyFormatter::new())
    }
}

impl Default for JsonFormatter {
    fn default() -> Self {
        Self::new()
    }
}

impl Formatter for JsonFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_and_round_trip() {
        assert_eq!(fmt_f64(0.1), "1.00000000e-1");
        assert_eq!(fmt_f64(-2.5), "-2.50000000e0");
        assert_eq!(fmt_f64(0.0), "0.00000000e0");
        assert_eq!(fmt_f64(1e-8), "1.00000000e-8");
        for v in [0.1, 1.0 / 3.0, -123.456789012345, 6.02e23, 5e-324, f64::MAX] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert!(digits >= MIN_SIG_DIGITS);
        }
    }

    #[test]
    fn json_floats_use_padded_form() {
        #[derive(serde::Serialize)]
        struct Doc {
            x: f64,
            n: u32,
            v: Vec<f64>,
        }
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, JsonFormatter::new());
        serde::Serialize::serialize(&Doc { x: 0.5, n: 3, v: vec![1.0] }, &mut ser).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("\"x\": 5.00000000e-1"));
        assert!(s.contains("\"n\": 3"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.5));
    }
}
