//! Problem geometry: source interval `S = (-s, s)`, measurement interval
//! `K = (-q, q)` at height `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orientation of the vertical axis relative to the tangential one.
///
/// The two conventions differ only in the sign with which the normal
/// magnetization component `m₂` couples to the measured field. `Up` is the
/// upper half-plane convention in which the kernels are written; `Down`
/// corresponds to a flipped normal (equivalently, `Up` applied to `(m₁, -m₂)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VerticalAxis {
    #[default]
    Up,
    Down,
}

impl VerticalAxis {
    /// Sign multiplying every `m₂` coupling.
    pub fn sign(self) -> f64 {
        match self {
            VerticalAxis::Up => 1.0,
            VerticalAxis::Down => -1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(VerticalAxis::Up),
            "down" => Ok(VerticalAxis::Down),
            other => Err(Error::Parse(format!(
                "unknown axis '{other}' (expected up|down)"
            ))),
        }
    }
}

/// Half-lengths of `S` and `K` plus the measurement height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub s: f64,
    pub q: f64,
    pub h: f64,
    #[serde(default)]
    pub axis: VerticalAxis,
}

impl Geometry {
    pub fn new(s: f64, q: f64, h: f64) -> Result<Self> {
        let g = Self {
            s,
            q,
            h,
            axis: VerticalAxis::Up,
        };
        g.validate()?;
        Ok(g)
    }

    /// `s = 1, q = 1.5, h = 0.1`.
    pub fn reference() -> Self {
        Self {
            s: 1.0,
            q: 1.5,
            h: 0.1,
            axis: VerticalAxis::Up,
        }
    }

    pub fn with_axis(mut self, axis: VerticalAxis) -> Self {
        self.axis = axis;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s", self.s), ("q", self.q), ("h", self.h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `q > s > h`: the measurement window overhangs the source, which sits
    /// farther than `h` from its edges.
    pub fn is_well_ordered(&self) -> bool {
        self.q > self.s && self.s > self.h
    }

    pub fn source(&self) -> Interval {
        Interval {
            lo: -self.s,
            hi: self.s,
        }
    }

    pub fn window(&self) -> Interval {
        Interval {
            lo: -self.q,
            hi: self.q,
        }
    }

    /// Parses `"s,q,h"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "geometry must be 's,q,h', got '{text}'"
            )));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Parse(format!("bad number '{p}' in geometry")))?;
        }
        Self::new(v[0], v[1], v[2])
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::reference()
    }
}

/// A bounded open interval with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!("degenerate interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Closed containment of `other` in `self`, with a small slack for
    /// decimal round-off in input files.
    pub fn covers(&self, other: &Interval) -> bool {
        let eps = 1e-12 * (1.0 + self.lo.abs().max(self.hi.abs()));
        other.lo >= self.lo - eps && other.hi <= self.hi + eps
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

impl TryFrom<(f64, f64)> for Interval {
    type Error = Error;
    fn try_from(v: (f64, f64)) -> Result<Self> {
        Interval::new(v.0, v.1)
    }
}

impl From<Interval> for (f64, f64) {
    fn from(i: Interval) -> Self {
        (i.lo, i.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_well_ordered() {
        let g = Geometry::reference();
        assert!(g.is_well_ordered());
        assert_eq!(g.source().len(), 2.0);
        assert_eq!(g.window().lo(), -1.5);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(Geometry::new(1.0, 1.5, 0.0).is_err());
        assert!(Geometry::new(-1.0, 1.5, 0.1).is_err());
        assert!(Geometry::new(1.0, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn parses_triplet() {
        let g = Geometry::parse("1, 2.5,0.05").unwrap();
        assert_eq!((g.s, g.q, g.h), (1.0, 2.5, 0.05));
        assert!(Geometry::parse("1,2").is_err());
        assert!(Geometry::parse("1,x,0.1").is_err());
    }

    #[test]
    fn interval_rejects_degenerate() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        let j = Interval::new(-0.2, 0.3).unwrap();
        assert!(j.contains(0.0) && !j.contains(0.31));
        assert!((j.mid() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn axis_parsing_and_sign() {
        assert_eq!(VerticalAxis::parse("DOWN").unwrap().sign(), -1.0);
        assert_eq!(VerticalAxis::default().sign(), 1.0);
        assert!(VerticalAxis::parse("sideways").is_err());
    }

    #[test]
    fn geometry_json_defaults_axis() {
        let g: Geometry = serde_json::from_str(r#"{"s":1,"q":1.5,"h":0.1}"#).unwrap();
        assert_eq!(g.axis, VerticalAxis::Up);
    }
}
