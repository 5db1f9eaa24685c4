//! Physical quantities written as `"<number> <unit>"` strings.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Frequency,
    Field,
    Temperature,
    Angle,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("µs", 1e-6),
                ("μs", 1e-6),
                ("ns", 1e-9),
                ("ps", 1e-12),
                ("fs", 1e-15),
            ],
            Dimension::Frequency => &[
                ("Hz", 1.0),
                ("kHz", 1e3),
                ("MHz", 1e6),
                ("GHz", 1e9),
                ("THz", 1e12),
            ],
            Dimension::Field => &[("T", 1.0), ("mT", 1e-3), ("G", 1e-4)],
            Dimension::Temperature => &[("K", 1.0), ("mK", 1e-3), ("uK", 1e-6), ("µK", 1e-6)],
            Dimension::Angle => &[
                ("rad", 1.0),
                ("mrad", 1e-3),
                ("deg", std::f64::consts::PI / 180.0),
            ],
        }
    }

    fn base(self) -> &'static str {
        self.units()[0].0
    }

    fn name(self) -> &'static str {
        match self {
            Dimension::Time => "time",
            Dimension::Frequency => "frequency",
            Dimension::Field => "magnetic field",
            Dimension::Temperature => "temperature",
            Dimension::Angle => "angle",
        }
    }
}

/// Parses `"32 ns"`, `"1.5T"` or `"-2e3 Hz"` into SI base units.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_alphabetic())
        .last()
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let number = number.trim();
    if unit.is_empty() {
        return Err(format!(
            "`{text}` has no unit; write the {} with one of {}",
            dim.name(),
            unit_list(dim)
        ));
    }
    let scale = dim
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            format!(
                "unknown {} unit `{unit}` (expected {})",
                dim.name(),
                unit_list(dim)
            )
        })?;
    let value: f64 = number
        .parse()
        .map_err(|_| format!("`{number}` in `{text}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(value * scale)
}

fn unit_list(dim: Dimension) -> String {
    dim.units()
        .iter()
        .map(|(u, _)| *u)
        .collect::<Vec<_>>()
        .join(", ")
}

macro_rules! quantity {
    ($name:ident, $dim:expr) => {
        /// Value in SI base units.
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
        pub struct $name(pub f64);

        impl $name {
            pub fn si(self) -> f64 {
                self.0
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                parse_quantity(s, $dim).map($name)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                struct V;
                impl Visitor<'_> for V {
                    type Value = $name;

                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        write!(
                            f,
                            "a {} with a unit, e.g. \"1 {}\"",
                            $dim.name(),
                            $dim.base()
                        )
                    }

                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        parse_quantity(v, $dim).map($name).map_err(E::custom)
                    }
                }
                deserializer.deserialize_str(V)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&format!("{} {}", self.0, $dim.base()))
            }
        }
    };
}

quantity!(Time, Dimension::Time);
quantity!(Frequency, Dimension::Frequency);
quantity!(Field, Dimension::Field);
quantity!(Temperature, Dimension::Temperature);
quantity!(Angle, Dimension::Angle);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_forms() {
        assert_eq!(parse_quantity("32 ns", Dimension::Time).unwrap(), 32e-9);
        assert_eq!(parse_quantity("1.5T", Dimension::Field).unwrap(), 1.5);
        assert_eq!(
            parse_quantity(" 230 mK ", Dimension::Temperature).unwrap(),
            0.23
        );
        assert_eq!(
            parse_quantity("2e3 Hz", Dimension::Frequency).unwrap(),
            2000.0
        );
        assert_eq!(parse_quantity("-1e-3 s", Dimension::Time).unwrap(), -1e-3);
        assert!(
            (parse_quantity("180 deg", Dimension::Angle).unwrap() - std::f64::consts::PI).abs()
                < 1e-15
        );
        assert_eq!(parse_quantity("4 µs", Dimension::Time).unwrap(), 4e-6);
    }

    #[test]
    fn rejects_missing_or_foreign_units() {
        assert!(parse_quantity("32", Dimension::Time)
            .unwrap_err()
            .contains("no unit"));
        assert!(parse_quantity("32 MHz", Dimension::Time)
            .unwrap_err()
            .contains("unknown time unit"));
        assert!(parse_quantity("x ns", Dimension::Time).is_err());
        assert!(parse_quantity("inf ns", Dimension::Time).is_err());
    }

    #[test]
    fn serializes_in_base_units() {
        assert_eq!(
            serde_json::to_string(&Time(3e-9)).unwrap(),
            "\"0.000000003 s\""
        );
    }
}
