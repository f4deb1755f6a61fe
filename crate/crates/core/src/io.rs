//! Text formats shared by the CLI: float formatting and safe-set tables.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;

/// Formats like C's `%.9g`: nine significant digits, trailing zeros trimmed.
pub fn fmt_g9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // The exponent after rounding to nine digits decides the notation.
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One row of a safe-set table: `state_index, <coordinates...>, v_star, in_safe_set`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetRow {
    pub state_index: usize,
    pub coordinates: Vec<f64>,
    pub value: f64,
    pub in_safe_set: bool,
}

/// Writes the rows for every non-target state of `mdp`.
pub fn write_safe_set_csv(
    path: impl AsRef<Path>,
    mdp: &FiniteMdp,
    values: &[f64],
    member: &[bool],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let names: Vec<String> = match mdp.coordinates() {
        Some(c) => c.names.clone(),
        None => vec![],
    };
    let mut header = vec!["state_index".to_string()];
    header.extend(names.iter().cloned());
    header.push("v_star".into());
    header.push("in_safe_set".into());
    w.write_record(&header)?;
    for s in (0..mdp.num_states()).filter(|&s| !mdp.is_target(s)) {
        let mut rec = vec![s.to_string()];
        if let Some(c) = mdp.coordinates() {
            rec.extend(c.values[s].iter().map(|&x| fmt_g9(x)));
        }
        rec.push(fmt_g9(values[s]));
        rec.push(if member[s] { "1".into() } else { "0".into() });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_safe_set_csv(path: impl AsRef<Path>) -> Result<Vec<SafeSetRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let n = headers.len();
    if n < 3
        || &headers[0] != "state_index"
        || &headers[n - 2] != "v_star"
        || &headers[n - 1] != "in_safe_set"
    {
        return Err(Error::format(path, "expected state_index, ..., v_star, in_safe_set"));
    }
    let bad = |what: &str| Error::format(path, format!("unparsable {what}"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let coordinates = (1..n - 2)
            .map(|i| rec[i].parse::<f64>().map_err(|_| bad("coordinate")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(SafeSetRow {
            state_index: rec[0].parse().map_err(|_| bad("state_index"))?,
            coordinates,
            value: rec[n - 2].parse().map_err(|_| bad("v_star"))?,
            in_safe_set: match &rec[n - 1] {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("in_safe_set")),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (2.0 / 3.0, "0.666666667"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (-0.25, "-0.25"),
            (1.0 / 3.0 * 1e-7, "3.33333333e-08"),
            (0.999_999_999_9, "1"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g9(x), want, "formatting {x}");
        }
    }

    #[test]
    fn g9_roundtrips_to_nine_digits() {
        for &x in &[0.1234567891234, 98765.43210987, 3.0e-3, 7.77e12] {
            let back: f64 = fmt_g9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8);
        }
    }
}
