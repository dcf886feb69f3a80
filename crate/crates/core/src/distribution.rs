//! Discrete input-amplitude distributions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities must sum to one within this tolerance.
pub const SUM_TOL: f64 = 1e-12;

/// A single mass point of an amplitude distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassPoint {
    pub location: f64,
    pub probability: f64,
}

/// Finitely supported distribution of the normalized input amplitude `r`.
///
/// Locations are strictly increasing and nonnegative; every probability is
/// positive and they sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MassPoint>", into = "Vec<MassPoint>")]
pub struct AmplitudeDistribution {
    points: Vec<MassPoint>,
}

impl TryFrom<Vec<MassPoint>> for AmplitudeDistribution {
    type Error = Error;

    fn try_from(points: Vec<MassPoint>) -> Result<Self> {
        Self::new(points.into_iter().map(|p| (p.location, p.probability)))
    }
}

impl From<AmplitudeDistribution> for Vec<MassPoint> {
    fn from(d: AmplitudeDistribution) -> Self {
        d.points
    }
}

impl AmplitudeDistribution {
    /// Validate and build from `(location, probability)` pairs.
    pub fn new<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let points: Vec<MassPoint> = pairs
            .into_iter()
            .map(|(location, probability)| MassPoint {
                location,
                probability,
            })
            .collect();
        if points.is_empty() {
            return Err(Error::InvalidDistribution("no mass points".into()));
        }
        for p in &points {
            if !p.location.is_finite() || p.location < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "location {} is not a finite nonnegative amplitude",
                    p.location
                )));
            }
            if !p.probability.is_finite() || p.probability <= 0.0 || p.probability > 1.0 {
                return Err(Error::InvalidDistribution(format!(
                    "probability {} is outside (0, 1]",
                    p.probability
                )));
            }
        }
        if points.windows(2).any(|w| w[1].location <= w[0].location) {
            return Err(Error::InvalidDistribution(
                "locations must be strictly increasing".into(),
            ));
        }
        let total: f64 = points.iter().map(|p| p.probability).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { points })
    }

    /// Build from arbitrary pairs: sorts by location, merges points closer
    /// than `merge_rel * (1 + r)`, drops probabilities below `prune`, and
    /// renormalizes.
    pub fn canonicalize<I>(pairs: I, merge_rel: f64, prune: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<(f64, f64)> = pairs
            .into_iter()
            .map(|(r, p)| (r.max(0.0), p.max(0.0)))
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (r, p) in raw {
            match merged.last_mut() {
                Some(last) if (r - last.0).abs() < merge_rel * (1.0 + r) => {
                    let total = last.1 + p;
                    if total > 0.0 {
                        last.0 = (last.0 * last.1 + r * p) / total;
                    }
                    last.1 = total;
                }
                _ => merged.push((r, p)),
            }
        }
        let mass: f64 = merged.iter().map(|x| x.1).sum();
        if mass.is_nan() || mass <= 0.0 {
            return Err(Error::InvalidDistribution("no probability mass".into()));
        }
        merged.retain(|x| x.1 / mass >= prune);
        let mass: f64 = merged.iter().map(|x| x.1).sum();
        let mut out: Vec<(f64, f64)> = merged.into_iter().map(|(r, p)| (r, p / mass)).collect();
        // Push the rounding residue onto the heaviest point.
        let residue = 1.0 - out.iter().map(|x| x.1).sum::<f64>();
        if let Some(heaviest) = out.iter_mut().max_by(|a, b| a.1.total_cmp(&b.1)) {
            heaviest.1 += residue;
        }
        Self::new(out)
    }

    /// All mass at a single amplitude.
    pub fn point_mass(location: f64) -> Result<Self> {
        Self::new([(location, 1.0)])
    }

    pub fn points(&self) -> &[MassPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.location).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.probability).collect()
    }

    pub fn max_location(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.location)
    }

    pub fn second_moment(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.probability * p.location.powi(2))
            .sum()
    }

    pub fn fourth_moment(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.probability * p.location.powi(4))
            .sum()
    }

    /// Parse the plain-text format: one `location probability` pair per
    /// line, `#` starts a comment, blank lines ignored.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected `location probability`, got {:?}",
                    lineno + 1,
                    content
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {s:?}: {e}", lineno + 1)))
            };
            pairs.push((parse(fields[0])?, parse(fields[1])?));
        }
        Self::new(pairs)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# location probability\n");
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e}", p.location, p.probability);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_invalid_inputs() {
        assert!(AmplitudeDistribution::new([]).is_err());
        assert!(AmplitudeDistribution::new([(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(AmplitudeDistribution::new([(1.0, 0.5), (0.5, 0.5)]).is_err());
        assert!(AmplitudeDistribution::new([(1.0, 0.5), (1.0, 0.5)]).is_err());
        assert!(AmplitudeDistribution::new([(-0.1, 1.0)]).is_err());
        assert!(AmplitudeDistribution::new([(0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(AmplitudeDistribution::new([(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn moments() {
        let d = AmplitudeDistribution::new([(0.0, 0.9), (0.5f64.sqrt(), 0.1)]).unwrap();
        assert!((d.second_moment() - 0.05).abs() < 1e-15);
        assert!((d.fourth_moment() - 0.025).abs() < 1e-15);
        assert_eq!(d.max_location(), 0.5f64.sqrt());
    }

    #[test]
    fn canonicalize_merges_and_prunes() {
        let d = AmplitudeDistribution::canonicalize(
            [(1.0, 0.3), (0.0, 0.4), (1.0 + 1e-9, 0.3), (2.0, 1e-12)],
            1e-6,
            1e-9,
        )
        .unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.probabilities()[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn text_format() {
        let text = "# two-point law\n0 0.9\n\n0.7071067811865476 0.1  # outer\n";
        let d = AmplitudeDistribution::parse_text(text).unwrap();
        assert_eq!(d.len(), 2);
        assert!(AmplitudeDistribution::parse_text("0 0.5 1\n").is_err());
        assert!(AmplitudeDistribution::parse_text("zero 1\n").is_err());
        assert!(AmplitudeDistribution::parse_text("# nothing\n").is_err());
    }

    proptest! {
        #[test]
        fn text_and_json_round_trip(
            raw in prop::collection::vec((0.0f64..10.0, 0.01f64..1.0), 1..6)
        ) {
            let d = AmplitudeDistribution::canonicalize(raw, 1e-6, 1e-9).unwrap();
            let back = AmplitudeDistribution::parse_text(&d.to_text()).unwrap();
            prop_assert_eq!(&back, &d);
            let json = serde_json::to_string(&d).unwrap();
            let back: AmplitudeDistribution = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
