//! Frequencies written as plain numbers (Hz) or with a unit suffix.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

const SUFFIXES: [(&str, f64); 4] = [("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3), ("Hz", 1.0)];

/// Parse `"13.042 GHz"`, `"250kHz"` or `"7.2e6"` into Hz.
pub fn parse_frequency(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (number, scale) = SUFFIXES
        .iter()
        .find_map(|&(s, k)| t.strip_suffix(s).map(|n| (n.trim_end(), k)))
        .unwrap_or((t, 1.0));
    let v: f64 = number
        .parse()
        .map_err(|_| format!("`{text}` is not a frequency (expected a number with optional Hz, kHz, MHz or GHz)"))?;
    if !v.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(v * scale)
}

/// A frequency in Hz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Freq(pub f64);

impl Freq {
    pub fn hz(self) -> f64 {
        self.0
    }
}

impl std::str::FromStr for Freq {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_frequency(s).map(Freq)
    }
}

impl<'de> Deserialize<'de> for Freq {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Freq;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number in Hz or a string such as \"8 MHz\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Freq, E> {
                Ok(Freq(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Freq, E> {
                Ok(Freq(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Freq, E> {
                Ok(Freq(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Freq, E> {
                parse_frequency(v).map(Freq).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}
