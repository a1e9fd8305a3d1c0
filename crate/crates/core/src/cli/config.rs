//! Flat `key=value` run configuration with dotted sections.

use num_complex::Complex64 as C64;
use num_rational::Rational64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::str::FromStr;

use crate::basis::{BoxShape, Truncation};
use crate::error::{invalid, Result};
use crate::lattice::{derive_config, parse_fraction, TwistConfig};
use crate::potential::{load_potential, PotentialCoeffs};

/// Every recognised key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("twist.zeta", "1/1"),
    ("twist.hop_ratio", "1"),
    ("potential.u", "U0"),
    ("potential.v", "V0"),
    ("trunc.n", "24"),
    ("trunc.shape", "hex"),
    ("alpha", "0"),
    ("alpha_tilde", "0"),
    ("tol.magic", "1e-6"),
    ("tol.kernel", "1e-8"),
    ("k.samples", "25"),
    ("k.point", "0.31,-0.17"),
    ("magic.count", "6"),
    ("bands.jmax", "4"),
    ("scan.alpha_min", "0.05"),
    ("scan.alpha_max", "2"),
    ("scan.steps", "80"),
    ("trace.ell", "2"),
    ("trace.compare", "all"),
    ("theta.points", "100"),
    ("chern.grid", "24"),
    ("chern.multiplicity", "1"),
    ("chern.method", "kernel"),
    ("squeeze.beta", "1,1"),
    ("squeeze.t_min", "3"),
    ("squeeze.t_max", "8"),
    ("squeeze.steps", "11"),
    ("squeeze.jmax", "6"),
    ("bracket.beta", "1,1"),
    ("bracket.p", "1"),
    ("bracket.grid", "64"),
    ("sweep.ratios", "1,2,3,4"),
    ("sweep.hop_ratios", "1"),
    ("sweep.count", "4"),
    ("discontinuity.n_max", "4"),
    ("out.dir", ""),
    ("workers", "0"),
];

/// Resolved configuration: defaults, then the config file, then overrides.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        let values = DEFAULTS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { values }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if !self.values.contains_key(key) {
            return Err(invalid(format!("unknown configuration key {key:?}")));
        }
        self.values
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// `key=value` assignment as given on the command line.
    pub fn assign(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| invalid(format!("expected key=value, got {kv:?}")))?;
        self.set(k, v)
    }

    /// Lines of `key = value`; `#` starts a comment; `[section]` headers
    /// prefix the following keys with `section.`.
    pub fn load_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(s) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = s.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("bad config line {raw:?}")))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            self.set(&key, v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .expect("key listed in DEFAULTS")
    }

    /// Canonical text form; also what the config hash covers.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.get(key)
            .parse()
            .map_err(|_| invalid(format!("{key} must be a number, got {:?}", self.get(key))))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.get(key)
            .parse()
            .map_err(|_| invalid(format!("{key} must be a count, got {:?}", self.get(key))))
    }

    pub fn i64(&self, key: &str) -> Result<i64> {
        self.get(key)
            .parse()
            .map_err(|_| invalid(format!("{key} must be an integer, got {:?}", self.get(key))))
    }

    pub fn complex(&self, key: &str) -> Result<C64> {
        parse_complex(self.get(key)).ok_or_else(|| {
            invalid(format!(
                "{key} must be a complex number, got {:?}",
                self.get(key)
            ))
        })
    }

    /// "a" gives (a, hop·a); "a,b" gives (a, b).
    pub fn pair(&self, key: &str, hop: C64) -> Result<(C64, C64)> {
        let s = self.get(key);
        let bad = || {
            invalid(format!(
                "{key} must be a complex number or a pair a,b, got {s:?}"
            ))
        };
        match s.split_once(',') {
            Some((a, b)) => Ok((
                parse_complex(a).ok_or_else(bad)?,
                parse_complex(b).ok_or_else(bad)?,
            )),
            None => {
                let a = parse_complex(s).ok_or_else(bad)?;
                Ok((a, a * hop))
            }
        }
    }

    pub fn real_pair(&self, key: &str) -> Result<(f64, f64)> {
        let s = self.get(key);
        let bad = || invalid(format!("{key} must be a pair of reals a,b, got {s:?}"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        Ok((
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ))
    }

    /// ζ = (ζ₁, ζ₂) given as "ζ₁/ζ₂".
    pub fn twist(&self) -> Result<TwistConfig> {
        let z = parse_fraction(self.get("twist.zeta"))?;
        let (z1, z2) = (*z.numer(), *z.denom());
        derive_config(z1 as f64, Rational64::new(z2, z1))
    }

    pub fn hop_ratio(&self) -> Result<C64> {
        self.complex("twist.hop_ratio")
    }

    pub fn truncation(&self) -> Result<Truncation> {
        let n = self.i64("trunc.n")?;
        if n < 1 {
            return Err(invalid("trunc.n must be positive"));
        }
        match self.get("trunc.shape") {
            "hex" => Ok(Truncation {
                n,
                shape: BoxShape::Hex,
            }),
            "square" => Ok(Truncation {
                n,
                shape: BoxShape::Square,
            }),
            s => Err(invalid(format!(
                "trunc.shape must be hex or square, got {s:?}"
            ))),
        }
    }

    pub fn pot_u(&self) -> Result<PotentialCoeffs> {
        load_potential(self.get("potential.u"))
    }

    pub fn pot_v(&self) -> Result<PotentialCoeffs> {
        load_potential(self.get("potential.v"))
    }

    pub fn fractions(&self, key: &str) -> Result<Vec<Rational64>> {
        self.get(key).split(',').map(parse_fraction).collect()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new()
    }
}

/// Accepts "1.5", "-2i", "0.3+0.1i", "1e-3-2e-2i".
pub fn parse_complex(s: &str) -> Option<C64> {
    let s = s.trim();
    if let Ok(x) = s.parse::<f64>() {
        return Some(C64::new(x, 0.0));
    }
    C64::from_str(s).ok()
}
