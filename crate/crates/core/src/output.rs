//! Serialization of artifacts. Computed floats are written with 12
//! significant digits; echoed inputs (payment values, seeds) keep full
//! precision so re-ingesting them is lossless.

use std::io::Write;

use serde::{Serialize, Serializer};

use crate::error::Result;
use crate::graph::PaymentGraph;
use crate::retrieval::ServiceProfile;
use crate::solver::SeedVector;

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x + 0.0;
    }
    format!("{x:.11e}")
        .parse::<f64>()
        .expect("formatted float parses")
        + 0.0
}

/// Shortest decimal text of `x` after rounding to 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{}", round_sig(x))
}

pub fn ser_sig<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Payments CSV in canonical edge order, timestamps as Unix seconds.
pub fn write_payments_csv<W: Write>(graph: &PaymentGraph, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["payer", "payee", "value_usd", "timestamp"])?;
    for e in graph.sorted_edges() {
        w.write_record([
            e.payer.as_str(),
            e.payee.as_str(),
            &e.value_usd.to_string(),
            &e.timestamp.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_seeds_csv<W: Write>(seeds: &SeedVector, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "seed"])?;
    for (a, s) in seeds.iter() {
        w.write_record([a.as_str(), &s.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One profile per line, sorted by address.
pub fn write_profiles_jsonl<W: Write>(profiles: &[ServiceProfile], mut out: W) -> Result<()> {
    let mut sorted: Vec<&ServiceProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.address.cmp(&b.address));
    for p in sorted {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")
            .map_err(|e| crate::error::Error::io("profiles", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.425), "0.425");
        assert_eq!(fmt_num(0.85 * 0.9), "0.765");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(
            fmt_num(2.0 / 3.0 * 1e-20),
            "0.00000000000000000000666666666667"
        );
        assert_eq!(fmt_num(123_456_789.123_456_78), "123456789.123");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(10_000.0), "10000");
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent_and_close(x in -1e12f64..1e12) {
            let r = round_sig(x);
            prop_assert_eq!(round_sig(r), r);
            prop_assert!((r - x).abs() <= x.abs() * 1e-11);
            prop_assert_eq!(fmt_num(x).parse::<f64>().unwrap(), r);
        }
    }
}
