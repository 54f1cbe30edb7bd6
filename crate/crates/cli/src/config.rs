//! Converter configuration files.
//!
//! ```text
//! [converter]
//! kind = SEPIC        # or Cuk
//! Vg = 62 V
//! L1 = 13 mH
//! ...
//! [analysis defaults]
//! D = 0.2
//! ```
//!
//! Values take an optional unit suffix that must match the key's
//! dimension; a bare number is in SI units.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;
use twoswitch_core::{ConverterKind, ConverterSpec, Parasitics};

const SEPIC_TABLE1: &str = include_str!("../configs/sepic_table1.conf");
const CUK_TABLE2: &str = include_str!("../configs/cuk_table2.conf");

/// Names of the configurations compiled into the binary.
pub const BUNDLED: [&str; 2] = ["sepic_table1", "cuk_table2"];

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "sepic_table1" => Some(SEPIC_TABLE1),
        "cuk_table2" => Some(CUK_TABLE2),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDefaults {
    pub duty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub spec: ConverterSpec,
    pub defaults: AnalysisDefaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Converter,
    Defaults,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Section::Converter => "converter",
            Section::Defaults => "analysis defaults",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Voltage,
    Resistance,
    Inductance,
    Capacitance,
    Frequency,
    Ratio,
}

impl Dimension {
    /// Decimal exponent of a unit suffix.
    fn exponent(self, suffix: &str) -> Option<i32> {
        let e = match (self, suffix) {
            (Dimension::Voltage, "V") => 0,
            (Dimension::Voltage, "mV") => -3,
            (Dimension::Voltage, "kV") => 3,
            (Dimension::Resistance, "Ohm" | "ohm" | "Ω") => 0,
            (Dimension::Resistance, "mOhm" | "mohm" | "mΩ") => -3,
            (Dimension::Resistance, "kOhm" | "kohm" | "kΩ") => 3,
            (Dimension::Inductance, "H") => 0,
            (Dimension::Inductance, "mH") => -3,
            (Dimension::Inductance, "uH" | "µH") => -6,
            (Dimension::Inductance, "nH") => -9,
            (Dimension::Capacitance, "F") => 0,
            (Dimension::Capacitance, "mF") => -3,
            (Dimension::Capacitance, "uF" | "µF") => -6,
            (Dimension::Capacitance, "nF") => -9,
            (Dimension::Capacitance, "pF") => -12,
            (Dimension::Frequency, "Hz") => 0,
            (Dimension::Frequency, "kHz") => 3,
            (Dimension::Frequency, "MHz") => 6,
            _ => return None,
        };
        Some(e)
    }
}

/// `value·10^exponent`, dividing for negative exponents so that e.g.
/// `166 uH` is the same double as `166e-6`.
fn apply_exponent(value: f64, exponent: i32) -> f64 {
    if exponent >= 0 {
        value * 10f64.powi(exponent)
    } else {
        value / 10f64.powi(-exponent)
    }
}

enum Key {
    Kind,
    Ideal,
    Number(Dimension),
}

fn key_info(section: Section, key: &str) -> Option<Key> {
    use Dimension::*;
    let info = match (section, key) {
        (Section::Converter, "kind") => Key::Kind,
        (Section::Converter, "ideal") => Key::Ideal,
        (Section::Converter, "Vg" | "V_d") => Key::Number(Voltage),
        (Section::Converter, "R" | "R_L1" | "R_L2" | "R_on1" | "R_d" | "R_C1" | "R_C2") => {
            Key::Number(Resistance)
        }
        (Section::Converter, "L1" | "L2") => Key::Number(Inductance),
        (Section::Converter, "C1" | "C2") => Key::Number(Capacitance),
        (Section::Converter, "f_s") => Key::Number(Frequency),
        (Section::Defaults, "D") => Key::Number(Ratio),
        _ => return None,
    };
    Some(info)
}

/// Splits `"13 mH"` into `(13.0, "mH")`. The suffix is the trailing run of
/// letters, so exponents such as `1e-3` stay with the number.
fn split_quantity(text: &str) -> Option<(f64, &str)> {
    let suffix_start = text
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_alphabetic())
        .last()
        .map_or(text.len(), |(i, _)| i);
    let (number, suffix) = text.split_at(suffix_start);
    let number = number.trim_end();
    let value: f64 = number.parse().ok()?;
    value.is_finite().then_some((value, suffix))
}

#[derive(Default)]
struct Values {
    kind: Option<ConverterKind>,
    ideal: Option<bool>,
    numbers: HashMap<String, f64>,
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut section: Option<Section> = None;
    let mut values = Values::default();
    let mut seen: HashMap<(Section, String), usize> = HashMap::new();

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let column_of = |byte: usize| content[..byte].chars().count() + 1;

        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                parse_error(line_no, column_of(indent), "section header is missing `]`")
            })?;
            section = Some(match name.trim() {
                "converter" => Section::Converter,
                "analysis defaults" => Section::Defaults,
                other => {
                    return Err(parse_error(
                        line_no,
                        column_of(indent),
                        format!("unknown section `[{other}]`"),
                    ))
                }
            });
            continue;
        }

        let Some(eq) = content.find('=') else {
            return Err(parse_error(
                line_no,
                column_of(indent),
                "expected `key = value`",
            ));
        };
        let key = content[..eq].trim();
        let value_text = content[eq + 1..].trim();
        let value_start = eq + 1 + (content[eq + 1..].len() - content[eq + 1..].trim_start().len());
        let value_col = column_of(value_start);
        let Some(sec) = section else {
            return Err(parse_error(
                line_no,
                column_of(indent),
                "key outside of a section",
            ));
        };
        if key.is_empty() {
            return Err(parse_error(
                line_no,
                column_of(indent),
                "missing key before `=`",
            ));
        }
        let info = key_info(sec, key).ok_or_else(|| {
            parse_error(
                line_no,
                column_of(indent),
                format!("unknown key `{key}` in [{sec}]"),
            )
        })?;
        if let Some(first) = seen.insert((sec, key.to_string()), line_no) {
            return Err(parse_error(
                line_no,
                column_of(indent),
                format!("duplicate key `{key}` (first set on line {first})"),
            ));
        }
        if value_text.is_empty() {
            return Err(parse_error(
                line_no,
                value_col,
                format!("missing value for `{key}`"),
            ));
        }

        match info {
            Key::Kind => {
                values.kind = Some(match value_text.to_ascii_lowercase().as_str() {
                    "sepic" => ConverterKind::Sepic,
                    "cuk" => ConverterKind::Cuk,
                    _ => {
                        return Err(parse_error(
                            line_no,
                            value_col,
                            format!(
                                "unknown converter kind `{value_text}` (expected SEPIC or Cuk)"
                            ),
                        ))
                    }
                });
            }
            Key::Ideal => {
                values.ideal = Some(match value_text {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(parse_error(
                            line_no,
                            value_col,
                            format!("expected true or false, got `{value_text}`"),
                        ))
                    }
                });
            }
            Key::Number(dim) => {
                let (number, suffix) = split_quantity(value_text).ok_or_else(|| {
                    parse_error(line_no, value_col, format!("invalid number `{value_text}`"))
                })?;
                let exponent = if suffix.is_empty() {
                    0
                } else {
                    dim.exponent(suffix).ok_or_else(|| {
                        parse_error(
                            line_no,
                            value_col,
                            format!("unit `{suffix}` does not fit key `{key}`"),
                        )
                    })?
                };
                values
                    .numbers
                    .insert(key.to_string(), apply_exponent(number, exponent));
            }
        }
    }
    build(values)
}

fn build(values: Values) -> Result<Config, ConfigError> {
    let kind = values
        .kind
        .ok_or_else(|| ConfigError::Validation("missing required key `kind`".into()))?;
    let required = |key: &str| {
        values
            .numbers
            .get(key)
            .copied()
            .ok_or_else(|| ConfigError::Validation(format!("missing required key `{key}`")))
    };
    let optional = |key: &str| values.numbers.get(key).copied().unwrap_or(0.0);
    let parasitics = Parasitics {
        r_l1: optional("R_L1"),
        r_l2: optional("R_L2"),
        r_on: optional("R_on1"),
        v_d: optional("V_d"),
        r_d: optional("R_d"),
        r_c1: optional("R_C1"),
        r_c2: optional("R_C2"),
    };
    let spec = ConverterSpec::new(
        kind,
        required("Vg")?,
        required("R")?,
        required("L1")?,
        required("L2")?,
        required("C1")?,
        required("C2")?,
        required("f_s")?,
        parasitics,
        values.ideal.unwrap_or(false),
    )
    .map_err(|e| ConfigError::Validation(e.to_string()))?;

    let duty = values.numbers.get("D").copied();
    if let Some(d) = duty {
        if !(d > 0.0 && d < 1.0) {
            return Err(ConfigError::Validation(format!(
                "`D` must lie in (0, 1), got {d}"
            )));
        }
    }
    Ok(Config {
        spec,
        defaults: AnalysisDefaults { duty },
    })
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{origin}: {source}")]
    Config { origin: String, source: ConfigError },
}

/// Loads a bundled configuration by name, or a file by path.
pub fn load_config(name_or_path: &str) -> Result<Config, LoadError> {
    let (origin, text) = match bundled(name_or_path) {
        Some(text) => (name_or_path.to_string(), text.to_string()),
        None => {
            let path = Path::new(name_or_path);
            let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
                path: name_or_path.to_string(),
                source,
            })?;
            (path.display().to_string(), text)
        }
    };
    parse_config(&text).map_err(|source| LoadError::Config { origin, source })
}
