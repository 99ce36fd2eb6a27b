//! State encoders: BOXES-style discretization and normalized linear features.
//!
//! Each scheme is a product of per-variable interval lists. Intervals carry
//! explicit closure; adjacent intervals never share an endpoint.

use crate::physics::State;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Pole failure threshold, degrees from upright.
pub const THETA_LIMIT_DEG: f64 = 12.0;
/// Cart failure threshold, metres from track centre.
pub const X_LIMIT: f64 = 2.4;

/// `true` when the state lies outside the balancing region
/// (`|theta| > 12 deg` or `|x| > 2.4 m`).
pub fn out_of_bounds(s: &State) -> bool {
    s.theta.to_degrees().abs() > THETA_LIMIT_DEG || s.x.abs() > X_LIMIT
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("unknown box scheme `{0}` (expected getBox or getBox2)")]
    UnknownScheme(String),
    #[error("theta_dot threshold must be finite and > 0, got {0}")]
    BadThreshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    const fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Self {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
    }

    /// `[lo, hi]`
    const fn closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, true, true)
    }

    /// `(lo, hi]`
    const fn left_open(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, true)
    }

    /// `(lo, hi)`
    const fn open(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, false)
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_closed {
            v >= self.lo
        } else {
            v > self.lo
        };
        let below = if self.hi_closed {
            v <= self.hi
        } else {
            v < self.hi
        };
        above && below
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeName {
    #[serde(rename = "getBox")]
    GetBox,
    #[serde(rename = "getBox2")]
    GetBox2,
}

impl SchemeName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeName::GetBox => "getBox",
            SchemeName::GetBox2 => "getBox2",
        }
    }

    pub fn scheme(&self) -> BoxScheme {
        match self {
            SchemeName::GetBox => BoxScheme::coarse(),
            SchemeName::GetBox2 => BoxScheme::fine(),
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "getBox" => Ok(SchemeName::GetBox),
            "getBox2" => Ok(SchemeName::GetBox2),
            other => Err(CodecError::UnknownScheme(other.to_string())),
        }
    }
}

/// Discrete state identifier, or the failure sentinel for out-of-bounds states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoxIndex {
    Box(usize),
    Failure,
}

impl BoxIndex {
    pub fn index(self) -> Option<usize> {
        match self {
            BoxIndex::Box(i) => Some(i),
            BoxIndex::Failure => None,
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, BoxIndex::Failure)
    }
}

/// A BOXES quantizer. Angles are in degrees, angular rates in deg/s,
/// positions in m and velocities in m/s.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxScheme {
    pub name: SchemeName,
    pub theta: Vec<Interval>,
    pub theta_dot: Vec<Interval>,
    pub x: Vec<Interval>,
    pub x_dot: Vec<Interval>,
}

const INF: f64 = f64::INFINITY;

fn rate_bins(threshold: f64) -> Vec<Interval> {
    vec![
        Interval::open(-INF, -threshold),
        Interval::closed(-threshold, threshold),
        Interval::open(threshold, INF),
    ]
}

fn cart_bins() -> Vec<Interval> {
    vec![
        Interval::closed(-X_LIMIT, -0.8),
        Interval::left_open(-0.8, 0.8),
        Interval::left_open(0.8, X_LIMIT),
    ]
}

fn theta_bins(inner_edges: &[f64]) -> Vec<Interval> {
    let mut edges = vec![-THETA_LIMIT_DEG];
    edges.extend_from_slice(inner_edges);
    edges.push(THETA_LIMIT_DEG);
    edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            if i == 0 {
                Interval::closed(w[0], w[1])
            } else {
                Interval::left_open(w[0], w[1])
            }
        })
        .collect()
}

impl BoxScheme {
    /// 6 x 3 x 3 x 3 = 162 boxes.
    pub fn coarse() -> Self {
        Self {
            name: SchemeName::GetBox,
            theta: theta_bins(&[-6.0, -1.0, 0.0, 1.0, 6.0]),
            theta_dot: rate_bins(50.0),
            x: cart_bins(),
            x_dot: rate_bins(0.5),
        }
    }

    /// 12 x 3 x 3 x 3 = 324 boxes.
    pub fn fine() -> Self {
        Self {
            name: SchemeName::GetBox2,
            theta: theta_bins(&[-6.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 6.0]),
            theta_dot: rate_bins(50.0),
            x: cart_bins(),
            x_dot: rate_bins(0.5),
        }
    }

    /// Replaces the `+-50 deg/s` angular-rate split.
    pub fn with_theta_dot_threshold(mut self, deg_per_s: f64) -> Result<Self, CodecError> {
        if !(deg_per_s.is_finite() && deg_per_s > 0.0) {
            return Err(CodecError::BadThreshold(deg_per_s));
        }
        self.theta_dot = rate_bins(deg_per_s);
        Ok(self)
    }

    pub fn box_count(&self) -> usize {
        self.theta.len() * self.theta_dot.len() * self.x.len() * self.x_dot.len()
    }

    /// Maps a state to its box; row-major with the angle bin outermost.
    pub fn get_box(&self, s: &State) -> BoxIndex {
        if out_of_bounds(s) {
            return BoxIndex::Failure;
        }
        let lookup = |bins: &[Interval], v: f64| bins.iter().position(|b| b.contains(v));
        let parts = (
            lookup(&self.theta, s.theta.to_degrees()),
            lookup(&self.theta_dot, s.theta_dot.to_degrees()),
            lookup(&self.x, s.x),
            lookup(&self.x_dot, s.x_dot),
        );
        match parts {
            (Some(a), Some(b), Some(c), Some(d)) => {
                let idx =
                    ((a * self.theta_dot.len() + b) * self.x.len() + c) * self.x_dot.len() + d;
                BoxIndex::Box(idx)
            }
            // only reachable with NaN components
            _ => BoxIndex::Failure,
        }
    }

    /// Inverse of the row-major composition: `(theta, theta_dot, x, x_dot)` bins.
    pub fn decompose(&self, index: usize) -> [usize; 4] {
        let d = index % self.x_dot.len();
        let rest = index / self.x_dot.len();
        let c = rest % self.x.len();
        let rest = rest / self.x.len();
        let b = rest % self.theta_dot.len();
        let a = rest / self.theta_dot.len();
        [a, b, c, d]
    }
}

/// Normalization constants for [`features`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureScales {
    pub theta_deg: f64,
    pub theta_dot_deg: f64,
    pub x: f64,
    pub x_dot: f64,
}

impl Default for FeatureScales {
    fn default() -> Self {
        Self {
            theta_deg: THETA_LIMIT_DEG,
            theta_dot_deg: 25.0,
            x: X_LIMIT,
            x_dot: 3.0,
        }
    }
}

impl FeatureScales {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            theta_deg: self.theta_deg / c,
            theta_dot_deg: self.theta_dot_deg / c,
            x: self.x / c,
            x_dot: self.x_dot / c,
        }
    }
}

pub type FeatureVector = [f64; 4];

/// `(theta/12deg, theta_dot/25deg/s, x/2.4m, x_dot/3m/s)` under default scales.
pub fn features(s: &State, scales: &FeatureScales) -> FeatureVector {
    [
        s.theta.to_degrees() / scales.theta_deg,
        s.theta_dot.to_degrees() / scales.theta_dot_deg,
        s.x / scales.x,
        s.x_dot / scales.x_dot,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deg(s: [f64; 4]) -> State {
        State::new(s[0].to_radians(), s[1].to_radians(), s[2], s[3])
    }

    #[test]
    fn counts() {
        assert_eq!(BoxScheme::coarse().box_count(), 162);
        assert_eq!(BoxScheme::fine().box_count(), 324);
    }

    #[test]
    fn failure_outside_limits() {
        let scheme = BoxScheme::coarse();
        assert_eq!(
            scheme.get_box(&deg([13.0, 0.0, 0.0, 0.0])),
            BoxIndex::Failure
        );
        assert_eq!(
            scheme.get_box(&deg([-12.01, 0.0, 0.0, 0.0])),
            BoxIndex::Failure
        );
        assert_eq!(
            scheme.get_box(&deg([0.0, 0.0, 2.41, 0.0])),
            BoxIndex::Failure
        );
        assert_eq!(
            scheme.get_box(&deg([0.0, 0.0, -2.41, 0.0])),
            BoxIndex::Failure
        );
        assert!(!scheme
            .get_box(&deg([11.99, 500.0, 2.39, -9.0]))
            .is_failure());
        assert!(!scheme.get_box(&deg([0.0, 0.0, 2.4, 0.0])).is_failure());
    }

    #[test]
    fn half_degree_lands_in_expected_box() {
        let scheme = BoxScheme::coarse();
        let idx = scheme.get_box(&deg([0.5, 0.0, 0.0, 0.0])).index().unwrap();
        // (0,1] is the 4th angle bin; middle bins for the rest.
        assert_eq!(scheme.decompose(idx), [3, 1, 1, 1]);
        assert_eq!(idx, ((3 * 3 + 1) * 3 + 1) * 3 + 1);
        assert!(
            scheme.theta[3].contains(0.5) && scheme.theta[3].lo == 0.0 && scheme.theta[3].hi == 1.0
        );
    }

    #[test]
    fn interval_endpoints_follow_table() {
        let scheme = BoxScheme::coarse();
        let bin = |v: f64| scheme.theta.iter().position(|b| b.contains(v)).unwrap();
        assert_eq!(bin(-12.0), 0);
        assert_eq!(bin(-6.0), 0);
        assert_eq!(bin(-1.0), 1);
        assert_eq!(bin(0.0), 2);
        assert_eq!(bin(1.0), 3);
        assert_eq!(bin(6.0), 4);
        assert_eq!(bin(12.0), 5);
        let rate = |v: f64| scheme.theta_dot.iter().position(|b| b.contains(v)).unwrap();
        assert_eq!(rate(-50.0), 1);
        assert_eq!(rate(50.0), 1);
        assert_eq!(rate(50.0001), 2);
        let cart = |v: f64| scheme.x.iter().position(|b| b.contains(v)).unwrap();
        assert_eq!(cart(-0.8), 0);
        assert_eq!(cart(0.8), 1);
    }

    #[test]
    fn threshold_override() {
        let scheme = BoxScheme::coarse().with_theta_dot_threshold(30.0).unwrap();
        let a = scheme.get_box(&deg([0.5, 40.0, 0.0, 0.0])).index().unwrap();
        assert_eq!(scheme.decompose(a)[1], 2);
        assert!(BoxScheme::coarse().with_theta_dot_threshold(0.0).is_err());
    }

    #[test]
    fn scheme_names_parse() {
        assert_eq!("getBox".parse::<SchemeName>().unwrap(), SchemeName::GetBox);
        assert_eq!(
            "getBox2".parse::<SchemeName>().unwrap(),
            SchemeName::GetBox2
        );
        assert!("getbox".parse::<SchemeName>().is_err());
    }

    #[test]
    fn feature_normalization() {
        let f = FeatureScales::default();
        assert_eq!(features(&State::UPRIGHT, &f), [0.0; 4]);
        let v = features(&deg([12.0, 0.0, 2.4, 0.0]), &f);
        assert!(
            (v[0] - 1.0).abs() < 1e-15 && v[1] == 0.0 && (v[2] - 1.0).abs() < 1e-15 && v[3] == 0.0
        );
        let v = features(&deg([-6.0, 0.0, -1.2, 0.0]), &f);
        assert!((v[0] + 0.5).abs() < 1e-15 && (v[2] + 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn exactly_one_box_matches(
            th in -12.0f64..=12.0, thd in -200.0f64..200.0,
            x in -2.4f64..=2.4, xd in -3.0f64..3.0, two in any::<bool>(),
        ) {
            let scheme = if two { BoxScheme::fine() } else { BoxScheme::coarse() };
            for (bins, v) in [(&scheme.theta, th), (&scheme.theta_dot, thd), (&scheme.x, x), (&scheme.x_dot, xd)] {
                prop_assert_eq!(bins.iter().filter(|b| b.contains(v)).count(), 1);
            }
            prop_assert!(scheme.get_box(&State::new(th.to_radians(), thd.to_radians(), x, xd)).index().is_some());
        }

        #[test]
        fn small_perturbation_keeps_box(
            th in -11.5f64..11.5, thd in -200.0f64..200.0, x in -2.3f64..2.3, xd in -3.0f64..3.0,
            frac in -0.99f64..0.99,
        ) {
            let scheme = BoxScheme::fine();
            let edges = |bins: &[Interval]| bins.iter().flat_map(|b| [b.lo, b.hi]).filter(|e| e.is_finite()).collect::<Vec<_>>();
            let dist = |v: f64, bins: &[Interval]| edges(bins).iter().map(|e| (v - e).abs()).fold(f64::INFINITY, f64::min);
            let s = State::new(th.to_radians(), thd.to_radians(), x, xd);
            // perturb along theta by less than the distance to the nearest edge
            let d = dist(th, &scheme.theta) * frac;
            let p = State { theta: (th + d).to_radians(), ..s };
            prop_assume!(dist(th, &scheme.theta) > 1e-9);
            prop_assert_eq!(scheme.get_box(&s), scheme.get_box(&p));
        }

        #[test]
        fn decompose_inverts_index(th in -12.0f64..=12.0, x in -2.4f64..=2.4) {
            let scheme = BoxScheme::fine();
            let s = State::new(th.to_radians(), 0.0, x, 0.0);
            let idx = scheme.get_box(&s).index().unwrap();
            let [a, b, c, d] = scheme.decompose(idx);
            prop_assert!(scheme.theta[a].contains(s.theta.to_degrees()));
            prop_assert_eq!(((a * 3 + b) * 3 + c) * 3 + d, idx);
        }
    }
}
