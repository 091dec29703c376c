//! One-port Touchstone v1 (`.s1p`) reader and writer.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Passive reflection may exceed unity by this much before a trace is
/// rejected (measurement slack).
pub const PASSIVITY_SLACK: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TouchstoneFormat {
    /// Real / imaginary.
    #[default]
    Ri,
    /// Magnitude / angle in degrees.
    Ma,
    /// dB magnitude / angle in degrees.
    Db,
}

/// Reflection coefficient versus frequency (Hz), frequencies strictly
/// increasing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct S11Trace {
    frequencies: Vec<f64>,
    reflection: Vec<C64>,
    pub reference_impedance: f64,
}

impl S11Trace {
    pub fn new(frequencies: Vec<f64>, reflection: Vec<C64>, reference_impedance: f64) -> Result<Self> {
        assert_eq!(frequencies.len(), reflection.len(), "one reflection per frequency");
        if let Some(i) = frequencies.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicFrequency { index: i + 1 });
        }
        if let Some((index, g)) = reflection
            .iter()
            .enumerate()
            .find(|(_, g)| g.norm() > 1.0 + PASSIVITY_SLACK)
        {
            return Err(Error::NonPassive {
                index,
                magnitude: g.norm(),
            });
        }
        Ok(Self {
            frequencies,
            reflection,
            reference_impedance,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn reflection(&self) -> &[C64] {
        &self.reflection
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, C64)> + '_ {
        self.frequencies.iter().copied().zip(self.reflection.iter().copied())
    }

    /// Samples with `lo <= f <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<C64>) {
        self.iter().filter(|(f, _)| (lo..=hi).contains(f)).unzip()
    }
}

fn unit_scale(token: &str) -> Option<f64> {
    match token {
        "HZ" => Some(1.0),
        "KHZ" => Some(1e3),
        "MHZ" => Some(1e6),
        "GHZ" => Some(1e9),
        _ => None,
    }
}

struct Options {
    scale: f64,
    format: TouchstoneFormat,
    reference: f64,
}

fn parse_options(line: &str, lineno: usize) -> Result<Options> {
    let err = |message: String| Error::Touchstone { line: lineno, message };
    // v1 defaults
    let mut opts = Options {
        scale: 1e9,
        format: TouchstoneFormat::Ma,
        reference: 50.0,
    };
    let mut tokens = line.trim_start_matches('#').split_whitespace();
    while let Some(raw) = tokens.next() {
        let tok = raw.to_ascii_uppercase();
        if let Some(s) = unit_scale(&tok) {
            opts.scale = s;
            continue;
        }
        match tok.as_str() {
            "S" => {}
            "Y" | "Z" | "H" | "G" => {
                return Err(err(format!("unsupported parameter type `{raw}`; only S is supported")))
            }
            "RI" => opts.format = TouchstoneFormat::Ri,
            "MA" => opts.format = TouchstoneFormat::Ma,
            "DB" => opts.format = TouchstoneFormat::Db,
            "R" => {
                let value = tokens
                    .next()
                    .ok_or_else(|| err("missing reference impedance after `R`".into()))?;
                opts.reference = value
                    .parse::<f64>()
                    .ok()
                    .filter(|r| *r > 0.0)
                    .ok_or_else(|| err(format!("invalid reference impedance `{value}`")))?;
            }
            _ => return Err(err(format!("unknown option token `{raw}`"))),
        }
    }
    Ok(opts)
}

fn to_complex(format: TouchstoneFormat, a: f64, b: f64) -> C64 {
    match format {
        TouchstoneFormat::Ri => C64::new(a, b),
        TouchstoneFormat::Ma => C64::from_polar(a, b.to_radians()),
        TouchstoneFormat::Db => C64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
    }
}

pub fn parse_touchstone(text: &[u8]) -> Result<S11Trace> {
    let text = std::str::from_utf8(text).map_err(|e| Error::Touchstone {
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;
    let mut opts: Option<Options> = None;
    let mut freqs = Vec::new();
    let mut refl = Vec::new();
    let mut lines_of_samples = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if opts.is_some() {
                return Err(Error::Touchstone {
                    line: lineno,
                    message: "duplicate option line".into(),
                });
            }
            opts = Some(parse_options(line, lineno)?);
            continue;
        }
        let o = opts.get_or_insert(Options {
            scale: 1e9,
            format: TouchstoneFormat::Ma,
            reference: 50.0,
        });
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Touchstone {
                    line: lineno,
                    message: format!("invalid number `{t}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 3 {
            return Err(Error::Touchstone {
                line: lineno,
                message: format!("expected 3 columns for a one-port row, found {}", values.len()),
            });
        }
        freqs.push(values[0] * o.scale);
        refl.push(to_complex(o.format, values[1], values[2]));
        lines_of_samples.push(lineno);
    }

    let reference = opts.map(|o| o.reference).unwrap_or(50.0);
    S11Trace::new(freqs, refl, reference).map_err(|e| match e {
        Error::NonMonotonicFrequency { index } => Error::Touchstone {
            line: lines_of_samples[index],
            message: "frequencies must be strictly increasing".into(),
        },
        Error::NonPassive { index, magnitude } => Error::Touchstone {
            line: lines_of_samples[index],
            message: format!("reflection magnitude {magnitude} exceeds passive bound"),
        },
        other => other,
    })
}

/// Serializes a trace with frequencies in Hz.
pub fn write_touchstone(trace: &S11Trace, format: TouchstoneFormat) -> String {
    let tag = match format {
        TouchstoneFormat::Ri => "RI",
        TouchstoneFormat::Ma => "MA",
        TouchstoneFormat::Db => "DB",
    };
    let mut out = format!("# HZ S {tag} R {}\n", trace.reference_impedance);
    for (f, g) in trace.iter() {
        let (a, b) = match format {
            TouchstoneFormat::Ri => (g.re, g.im),
            TouchstoneFormat::Ma => (g.norm(), g.arg() * 180.0 / PI),
            TouchstoneFormat::Db => (20.0 * g.norm().log10(), g.arg() * 180.0 / PI),
        };
        writeln!(out, "{f} {a} {b}").expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ri_row() {
        let t = parse_touchstone(b"! comment\n# GHz S RI R 50\n1.0 0.5 0.0\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.frequencies()[0], 1e9);
        assert_eq!(t.reflection()[0], C64::new(0.5, 0.0));
        assert_eq!(t.reference_impedance, 50.0);
    }

    #[test]
    fn ma_and_db_rows() {
        let t = parse_touchstone(b"# MHz S MA R 50\n100 1 0\n200 0.5 90 ! inline\n").unwrap();
        assert_eq!(t.reflection()[0], C64::new(1.0, 0.0));
        assert!((t.reflection()[1] - C64::new(0.0, 0.5)).norm() < 1e-15);
        assert_eq!(t.frequencies()[1], 200e6);

        let t = parse_touchstone(b"# hz s db r 75\n10 -6.020599913279624 180\n").unwrap();
        assert!((t.reflection()[0] - C64::new(-0.5, 0.0)).norm() < 1e-12);
        assert_eq!(t.reference_impedance, 75.0);
    }

    #[test]
    fn defaults_without_option_line() {
        let t = parse_touchstone(b"1.5 1 0\n").unwrap();
        assert_eq!(t.frequencies()[0], 1.5e9);
    }

    #[test]
    fn two_column_row_reports_line() {
        let err = parse_touchstone(b"# GHz S RI R 50\n1.0 0.5 0.0\n\n1.1 0.5\n").unwrap_err();
        assert_eq!(
            err,
            Error::Touchstone {
                line: 4,
                message: "expected 3 columns for a one-port row, found 2".into()
            }
        );
    }

    #[test]
    fn unknown_token_is_named() {
        let err = parse_touchstone(b"# GHz S XY R 50\n").unwrap_err();
        assert!(err.to_string().contains("`XY`"), "{err}");
        let err = parse_touchstone(b"# GHz Z RI R 50\n").unwrap_err();
        assert!(err.to_string().contains("`Z`"), "{err}");
    }

    #[test]
    fn non_monotonic_frequency() {
        let err = parse_touchstone(b"# GHz S RI\n1.0 0.1 0\n1.0 0.2 0\n").unwrap_err();
        assert!(matches!(err, Error::Touchstone { line: 3, .. }), "{err}");
    }

    #[test]
    fn active_reflection_rejected() {
        assert!(parse_touchstone(b"# GHz S RI\n1.0 1.2 0\n").is_err());
        assert!(parse_touchstone(b"# GHz S RI\n1.0 1.04 0\n").is_ok());
    }

    proptest! {
        #[test]
        fn write_then_parse_roundtrips(
            points in proptest::collection::vec((0.0..1.0f64, -3.0..3.0f64), 1..40),
            fmt in prop_oneof![Just(TouchstoneFormat::Ri), Just(TouchstoneFormat::Ma), Just(TouchstoneFormat::Db)],
        ) {
            let freqs: Vec<f64> = (0..points.len()).map(|i| 1e9 + i as f64 * 1e5).collect();
            let refl: Vec<C64> = points.iter().map(|(m, a)| C64::from_polar(m.max(1e-6), *a)).collect();
            let trace = S11Trace::new(freqs, refl, 50.0).unwrap();
            let back = parse_touchstone(write_touchstone(&trace, fmt).as_bytes()).unwrap();
            prop_assert_eq!(back.frequencies(), trace.frequencies());
            for (a, b) in back.reflection().iter().zip(trace.reflection()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
