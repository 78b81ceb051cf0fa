//! The market-side aggregator model: a battery-with-ramping polytope
//! `P(x) = {p : G p <= x}` over hourly schedules, where `G` is fixed by the
//! market and `x` collects the aggregator model variables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scheduling horizon: `t` hourly periods of duration `delta_hours`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub t: usize,
    pub delta_hours: f64,
}

impl HorizonConfig {
    pub fn new(t: usize) -> Self {
        HorizonConfig { t, delta_hours: 1.0 }
    }

    /// Number of 15-minute device control intervals.
    pub fn quarters(&self) -> usize {
        4 * self.t
    }
}

/// Aggregator model variables: power, SoC, and ramp limits (kW / kWh).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregatorModelVars {
    pub p_max: Vec<f64>,
    pub p_min: Vec<f64>,
    pub s0: f64,
    pub s_max: Vec<f64>,
    pub s_min: Vec<f64>,
    pub ramp_up: Vec<f64>,
    pub ramp_dn: Vec<f64>,
}

/// Inequality description `{p : A p <= b}` with row provenance tags.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub row_tags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl HPolytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, row_tags: Vec<String>) -> Self {
        assert_eq!(a.nrows(), b.len());
        assert_eq!(a.nrows(), row_tags.len());
        HPolytope { a, b, row_tags }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Serialize, Deserialize)]
struct HPolytopeJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    tags: Vec<String>,
}

impl Serialize for HPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows = (0..self.a.nrows())
            .map(|i| self.a.row(i).iter().copied().collect())
            .collect();
        HPolytopeJson {
            a: rows,
            b: self.b.iter().copied().collect(),
            tags: self.row_tags.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = HPolytopeJson::deserialize(d)?;
        let m = raw.a.len();
        let n = raw.a.first().map_or(0, |r| r.len());
        if raw.a.iter().any(|r| r.len() != n) || raw.b.len() != m || raw.tags.len() != m {
            return Err(serde::de::Error::custom("inconsistent polytope dimensions"));
        }
        let a = DMatrix::from_fn(m, n, |i, j| raw.a[i][j]);
        Ok(HPolytope {
            a,
            b: DVector::from_vec(raw.b),
            row_tags: raw.tags,
        })
    }
}

/// The fixed `(6T-2) x T` market matrix: stacked blocks
/// `[I; -I; dL; -dL; K; -K]` with `L` lower-triangular all-ones and `K` the
/// `(T-1) x T` difference matrix (-1 on the diagonal, +1 above).
pub fn build_g(h: &HorizonConfig) -> DMatrix<f64> {
    let t = h.t;
    let d = h.delta_hours;
    let m = 6 * t - 2;
    let mut g = DMatrix::zeros(m, t);
    for i in 0..t {
        g[(i, i)] = 1.0; // p <= p_max
        g[(t + i, i)] = -1.0; // -p <= -p_min
        for j in 0..=i {
            g[(2 * t + i, j)] = d; // d (Lp)_t <= s0 - s_min
            g[(3 * t + i, j)] = -d; // -d (Lp)_t <= s_max - s0
        }
    }
    for i in 0..t.saturating_sub(1) {
        g[(4 * t + i, i)] = -1.0;
        g[(4 * t + i, i + 1)] = 1.0; // p_{t+1} - p_t <= ramp_up
        g[(5 * t - 1 + i, i)] = 1.0;
        g[(5 * t - 1 + i, i + 1)] = -1.0; // -(p_{t+1} - p_t) <= -ramp_dn
    }
    g
}

/// Reduced box-model matrix `[I; -I]` (`2T x T`), for the comparison that
/// ignores SoC and ramping.
pub fn build_reduced_g(h: &HorizonConfig) -> DMatrix<f64> {
    let t = h.t;
    let mut g = DMatrix::zeros(2 * t, t);
    for i in 0..t {
        g[(i, i)] = 1.0;
        g[(t + i, i)] = -1.0;
    }
    g
}

/// Assembles `x` block-aligned with [`build_g`] so that `G p <= x` encodes
/// the power, SoC (after elimination of `s_t = s0 - d (Lp)_t`), and ramp
/// limits exactly:
/// `x = (p_max, -p_min, s0 - s_min, s_max - s0, ramp_up, -ramp_dn)`.
pub fn build_x(v: &AggregatorModelVars, h: &HorizonConfig) -> Result<DVector<f64>, MarketError> {
    let t = h.t;
    let check = |name: &str, len: usize, want: usize| {
        if len != want {
            Err(MarketError::DimensionMismatch(format!(
                "{name} has length {len}, expected {want}"
            )))
        } else {
            Ok(())
        }
    };
    check("p_max", v.p_max.len(), t)?;
    check("p_min", v.p_min.len(), t)?;
    check("s_max", v.s_max.len(), t)?;
    check("s_min", v.s_min.len(), t)?;
    check("ramp_up", v.ramp_up.len(), t.saturating_sub(1))?;
    check("ramp_dn", v.ramp_dn.len(), t.saturating_sub(1))?;
    let mut x = DVector::zeros(6 * t - 2);
    for i in 0..t {
        x[i] = v.p_max[i];
        x[t + i] = -v.p_min[i];
        x[2 * t + i] = v.s0 - v.s_min[i];
        x[3 * t + i] = v.s_max[i] - v.s0;
    }
    for i in 0..t.saturating_sub(1) {
        x[4 * t + i] = v.ramp_up[i];
        x[5 * t - 1 + i] = -v.ramp_dn[i];
    }
    Ok(x)
}

/// Row tags matching the block order of [`build_g`].
pub fn g_row_tags(h: &HorizonConfig) -> Vec<String> {
    let t = h.t;
    let mut tags = Vec::with_capacity(6 * t - 2);
    for name in ["p_max", "p_min", "soc_min", "soc_max"] {
        for i in 0..t {
            tags.push(format!("{name}[{i}]"));
        }
    }
    for name in ["ramp_up", "ramp_dn"] {
        for i in 0..t.saturating_sub(1) {
            tags.push(format!("{name}[{i}]"));
        }
    }
    tags
}

/// The aggregator bidding polytope `P(x)` for a given `x`.
pub fn aggregator_polytope(x: &DVector<f64>, h: &HorizonConfig) -> HPolytope {
    HPolytope::new(build_g(h), x.clone(), g_row_tags(h))
}

/// `true` iff `A p <= b + tol` componentwise.
pub fn membership(p: &HPolytope, point: &DVector<f64>, tol: f64) -> Result<bool, MarketError> {
    if point.len() != p.dim() {
        return Err(MarketError::DimensionMismatch(format!(
            "point has dimension {}, polytope has {}",
            point.len(),
            p.dim()
        )));
    }
    for i in 0..p.num_rows() {
        if p.a.row(i).transpose().dot(point) > p.b[i] + tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The synthetic study's model variables: symmetric unit limits with
/// `s0 = 0.5`.
pub fn synthetic_t2_vars() -> AggregatorModelVars {
    AggregatorModelVars {
        p_max: vec![1.0, 1.0],
        p_min: vec![-1.0, -1.0],
        s0: 0.5,
        s_max: vec![1.0, 1.0],
        s_min: vec![0.0, 0.0],
        ramp_up: vec![1.0],
        ramp_dn: vec![-1.0],
    }
}
