//! Finite metric spaces, cost matrices, discrete distributions, and
//! pushforward maps.
//!
//! Everything downstream (transport solvers, divergences, objectives) works
//! over a finite universe of points. This module owns the four ground types
//! and keeps their invariants honest at construction time:
//!
//! | type | invariant enforced |
//! |------|--------------------|
//! | [`FiniteMetricSpace`] | symmetry, zero diagonal, positivity, triangle inequality (slack 1e-12) |
//! | [`CostMatrix`] | finite entries; `metric_certified` set only by metric-derived constructors |
//! | [`DiscreteDistribution`] | nonnegative weights summing to 1 within 1e-12 |
//! | [`PushforwardMap`] | every source index maps into the target universe |
//!
//! Cost matrices may be arbitrary (negative entries included), but operations
//! that interpret dual potentials as Lipschitz functions demand the
//! `metric_certified` flag, which only the verifying constructors set.
//!
//! All types are immutable after construction and all operations are pure,
//! so values can be shared freely across threads.

use crate::error::{Error, Result};
use crate::util::sum_comp;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Slack allowed when validating the triangle inequality. Euclidean matrices
/// computed in double precision can violate it by a few ulps.
pub const METRIC_SLACK: f64 = 1e-12;

/// Input weight vectors may miss unit mass by this much; they are then
/// renormalized so the stored distribution sums to 1 within 1e-12.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A finite metric space: labeled points with a validated distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    coords: Option<Vec<Vec<f64>>>,
    dist: Vec<f64>,
    n: usize,
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

impl FiniteMetricSpace {
    /// Build from an explicit distance matrix, checking every metric axiom.
    ///
    /// The full triangle-inequality sweep is cubic in the number of points,
    /// so this constructor is meant for explicit user input; the structured
    /// constructors ([`euclidean`](Self::euclidean), [`discrete`](Self::discrete),
    /// [`random_metric`](Self::random_metric)) are metric by construction and
    /// skip it.
    pub fn from_matrix(dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = dist.len();
        Self::from_matrix_labeled(default_labels(n), dist)
    }

    /// [`from_matrix`](Self::from_matrix) with caller-supplied point labels.
    pub fn from_matrix_labeled(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = dist.len();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in &dist {
            if row.len() != n {
                return Err(Error::CostShape {
                    rows: n,
                    cols: row.len(),
                    expected: format!("{n}x{n}"),
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::MetricViolation {
                        axiom: "finiteness",
                        detail: "distance entry is not finite".into(),
                    });
                }
                flat.push(v);
            }
        }
        let sp = FiniteMetricSpace {
            labels,
            coords: None,
            dist: flat,
            n,
        };
        sp.validate_metric()?;
        Ok(sp)
    }

    fn validate_metric(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.d(i, i) != 0.0 {
                return Err(Error::MetricViolation {
                    axiom: "identity",
                    detail: format!("dist[{i}][{i}] = {} is not 0", self.d(i, i)),
                });
            }
            for j in 0..n {
                if self.d(i, j) != self.d(j, i) {
                    return Err(Error::MetricViolation {
                        axiom: "symmetry",
                        detail: format!("dist[{i}][{j}] != dist[{j}][{i}]"),
                    });
                }
                if i != j && self.d(i, j) <= 0.0 {
                    return Err(Error::MetricViolation {
                        axiom: "positivity",
                        detail: format!("dist[{i}][{j}] = {} is not positive", self.d(i, j)),
                    });
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = self.d(i, k);
                for j in 0..n {
                    if self.d(i, j) > dik + self.d(k, j) + METRIC_SLACK {
                        return Err(Error::MetricViolation {
                            axiom: "triangle",
                            detail: format!(
                                "dist[{i}][{j}] = {} exceeds dist[{i}][{k}] + dist[{k}][{j}] = {}",
                                self.d(i, j),
                                dik + self.d(k, j)
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Euclidean space on explicit coordinates. Metric by construction; the
    /// cubic triangle sweep is skipped so large point clouds stay cheap.
    pub fn euclidean(coords: Vec<Vec<f64>>) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::InvalidConfig(
                "euclidean space needs at least one point".into(),
            ));
        }
        let dim = coords[0].len();
        for (i, c) in coords.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "coordinate {i} is not finite"
                )));
            }
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclid(&coords[i], &coords[j]);
                if d == 0.0 {
                    return Err(Error::MetricViolation {
                        axiom: "positivity",
                        detail: format!("points {i} and {j} coincide"),
                    });
                }
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(FiniteMetricSpace {
            labels: default_labels(n),
            coords: Some(coords),
            dist,
            n,
        })
    }

    /// The discrete metric: distance 1 between distinct points, 0 otherwise.
    pub fn discrete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "discrete space needs at least one point".into(),
            ));
        }
        let mut dist = vec![1.0; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        Ok(FiniteMetricSpace {
            labels: default_labels(n),
            coords: None,
            dist,
            n,
        })
    }

    /// Random metric on `n` points: symmetric uniform weights in [0.1, 1.1),
    /// closed under shortest paths so the triangle inequality holds exactly.
    pub fn random_metric(n: usize, rng: &mut impl Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "random metric needs at least one point".into(),
            ));
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = 0.1 + rng.gen::<f64>();
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        // Floyd-Warshall closure: replaces each entry with the shortest-path
        // distance, which is a metric whenever the weights are positive.
        for k in 0..n {
            for i in 0..n {
                let dik = dist[i * n + k];
                for j in 0..n {
                    let via = dik + dist[k * n + j];
                    if via < dist[i * n + j] {
                        dist[i * n + j] = via;
                    }
                }
            }
        }
        Ok(FiniteMetricSpace {
            labels: default_labels(n),
            coords: None,
            dist,
            n,
        })
    }

    /// Scale every distance by `gamma > 0`; scaling preserves all axioms.
    pub fn scale(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scale factor must be positive, got {gamma}"
            )));
        }
        Ok(FiniteMetricSpace {
            labels: self.labels.clone(),
            coords: self.coords.as_ref().map(|cs| {
                cs.iter()
                    .map(|c| c.iter().map(|v| v * gamma).collect())
                    .collect()
            }),
            dist: self.dist.iter().map(|d| d * gamma).collect(),
            n: self.n,
        })
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.n
    }

    /// True when the space has no points (never constructible; kept for API symmetry).
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distance between points `i` and `j`.
    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// Point labels, in index order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Coordinates, when the space was built from a point cloud.
    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    /// Largest pairwise distance over a support set.
    pub fn diameter(&self, support: &[usize]) -> Result<f64> {
        if support.is_empty() {
            return Err(Error::InvalidConfig("diameter of an empty support".into()));
        }
        let mut best = 0.0f64;
        for (a, &i) in support.iter().enumerate() {
            if i >= self.n {
                return Err(Error::IndexOutOfBounds {
                    index: i,
                    len: self.n,
                });
            }
            for &j in &support[a + 1..] {
                if j >= self.n {
                    return Err(Error::IndexOutOfBounds {
                        index: j,
                        len: self.n,
                    });
                }
                best = best.max(self.d(i, j));
            }
        }
        Ok(best)
    }

    /// Diameter over the full point set.
    pub fn full_diameter(&self) -> f64 {
        let all: Vec<usize> = (0..self.n).collect();
        self.diameter(&all).expect("space is nonempty")
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A rectangular cost matrix between two (possibly distinct) point universes.
///
/// Entries may be negative. The `metric_certified` flag records that the
/// costs are restrictions of a genuine metric; dual-potential operations
/// (c-transforms, Lipschitz certificates) insist on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    metric_certified: bool,
}

impl CostMatrix {
    /// The full n×n cost of a metric space; certified.
    pub fn from_space(space: &FiniteMetricSpace) -> Self {
        CostMatrix {
            values: (0..space.len())
                .flat_map(|i| (0..space.len()).map(move |j| space.d(i, j)))
                .collect(),
            rows: space.len(),
            cols: space.len(),
            metric_certified: true,
        }
    }

    /// Composed cost c(x, G(z)): rows index the space's points, columns index
    /// the map's source universe. Certified, since every entry is a distance
    /// in the ambient space.
    pub fn compose_with_map(space: &FiniteMetricSpace, map: &PushforwardMap) -> Result<Self> {
        if map.target_len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: map.target_len(),
            });
        }
        let rows = space.len();
        let cols = map.source_len();
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for z in 0..cols {
                values.push(space.d(i, map.apply(z)));
            }
        }
        Ok(CostMatrix {
            values,
            rows,
            cols,
            metric_certified: true,
        })
    }

    /// Euclidean cost between two coordinate clouds; certified, being a
    /// restriction of the ambient Euclidean metric.
    pub fn euclidean_cross(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidConfig(
                "euclidean cost needs nonempty point sets".into(),
            ));
        }
        let dim = a[0].len();
        for c in a.iter().chain(b.iter()) {
            if c.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
        }
        let mut values = Vec::with_capacity(a.len() * b.len());
        for pa in a {
            for pb in b {
                values.push(euclid(pa, pb));
            }
        }
        Ok(CostMatrix {
            values,
            rows: a.len(),
            cols: b.len(),
            metric_certified: true,
        })
    }

    /// Arbitrary finite costs; not certified.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::CostShape {
                rows,
                cols,
                expected: format!("{} values, got {}", rows * cols, values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure(
                "cost matrix has a non-finite entry".into(),
            ));
        }
        Ok(CostMatrix {
            values,
            rows,
            cols,
            metric_certified: false,
        })
    }

    /// Cost entry at row `i`, column `j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Row count (first-marginal universe size).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Column count (second-marginal universe size).
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Whether the costs are known to come from a metric.
    pub fn metric_certified(&self) -> bool {
        self.metric_certified
    }

    /// Largest entry.
    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Transpose (swaps the two universes); certification carries over.
    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        CostMatrix {
            values,
            rows: self.cols,
            cols: self.rows,
            metric_certified: self.metric_certified,
        }
    }

    /// Scale all costs by `gamma > 0`; a scaled metric is still a metric, so
    /// certification carries over.
    pub fn scale(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scale factor must be positive, got {gamma}"
            )));
        }
        Ok(CostMatrix {
            values: self.values.iter().map(|v| v * gamma).collect(),
            rows: self.rows,
            cols: self.cols,
            metric_certified: self.metric_certified,
        })
    }
}

/// A probability distribution over a finite index universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validate and store a weight vector. Weights must be nonnegative and
    /// sum to 1 within [`WEIGHT_SUM_TOL`]; they are then renormalized so the
    /// stored sum is exact to within 1e-12.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig(
                "distribution needs at least one weight".into(),
            ));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NegativeWeight { index: i, value: w });
            }
        }
        let s = sum_comp(weights.iter().copied());
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::NotNormalized { sum: s });
        }
        let weights = weights.into_iter().map(|w| w / s).collect();
        Ok(DiscreteDistribution { weights })
    }

    /// Uniform distribution on `n` points.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "uniform distribution needs n >= 1".into(),
            ));
        }
        Ok(DiscreteDistribution {
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// All mass on point `i` of an `n`-point universe.
    pub fn point_mass(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::IndexOutOfBounds { index: i, len: n });
        }
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Ok(DiscreteDistribution { weights })
    }

    /// Draw a random interior point of the simplex (flat Dirichlet).
    pub fn random(n: usize, rng: &mut impl Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "random distribution needs n >= 1".into(),
            ));
        }
        let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let s = sum_comp(raw.iter().copied());
        Ok(DiscreteDistribution {
            weights: raw.into_iter().map(|w| w / s).collect(),
        })
    }

    /// The weight vector.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of point `i`.
    #[inline]
    pub fn w(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Universe size.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True when the universe is empty (never constructible; kept for API symmetry).
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices carrying strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Expectation of a function given as a value vector.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(sum_comp(
            self.weights.iter().zip(values).map(|(w, v)| w * v),
        ))
    }
}

/// A map between finite index universes, applied pointwise to distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardMap {
    map: Vec<usize>,
    target_len: usize,
}

impl PushforwardMap {
    /// Build from an explicit index mapping into a target universe of the
    /// given size.
    pub fn new(map: Vec<usize>, target_len: usize) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::InvalidConfig(
                "pushforward map needs a nonempty source".into(),
            ));
        }
        for &t in &map {
            if t >= target_len {
                return Err(Error::IndexOutOfBounds {
                    index: t,
                    len: target_len,
                });
            }
        }
        Ok(PushforwardMap { map, target_len })
    }

    /// The identity on an `n`-point universe.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    /// A uniformly random permutation of `n` points.
    pub fn random_permutation(n: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Self::new(map, n)
    }

    /// A uniformly random surjection from `source_len` onto `target_len`
    /// points. Requires `source_len >= target_len`: the first pass pins one
    /// random source per target, the rest map freely.
    pub fn random_surjection(
        source_len: usize,
        target_len: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if source_len < target_len {
            return Err(Error::InvalidConfig(format!(
                "no surjection from {source_len} points onto {target_len}"
            )));
        }
        let mut sources: Vec<usize> = (0..source_len).collect();
        sources.shuffle(rng);
        let mut map = vec![usize::MAX; source_len];
        for (t, &s) in sources.iter().take(target_len).enumerate() {
            map[s] = t;
        }
        for slot in map.iter_mut() {
            if *slot == usize::MAX {
                *slot = rng.gen_range(0..target_len);
            }
        }
        Self::new(map, target_len)
    }

    /// Image of source index `z`.
    #[inline]
    pub fn apply(&self, z: usize) -> usize {
        self.map[z]
    }

    /// Source universe size.
    pub fn source_len(&self) -> usize {
        self.map.len()
    }

    /// Target universe size.
    pub fn target_len(&self) -> usize {
        self.target_len
    }

    /// Source indices mapping to target `j`, in increasing order.
    pub fn preimage(&self, j: usize) -> Vec<usize> {
        (0..self.map.len()).filter(|&z| self.map[z] == j).collect()
    }

    /// No two sources share a target.
    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.target_len];
        for &t in &self.map {
            if seen[t] {
                return false;
            }
            seen[t] = true;
        }
        true
    }

    /// Every target is hit.
    pub fn is_surjective(&self) -> bool {
        let mut seen = vec![false; self.target_len];
        for &t in &self.map {
            seen[t] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// Bijection between universes of equal size.
    pub fn is_permutation(&self) -> bool {
        self.map.len() == self.target_len && self.is_injective()
    }

    /// Inverse of a permutation; anything else has none.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_permutation() {
            return Err(Error::ContractViolation(
                "pushforward map is not invertible (not a permutation)".into(),
            ));
        }
        let mut inv = vec![0; self.map.len()];
        for (z, &t) in self.map.iter().enumerate() {
            inv[t] = z;
        }
        Self::new(inv, self.map.len())
    }

    /// Composition `outer ∘ inner` (apply `inner` first).
    pub fn compose(outer: &Self, inner: &Self) -> Result<Self> {
        if inner.target_len != outer.map.len() {
            return Err(Error::LengthMismatch {
                expected: outer.map.len(),
                got: inner.target_len,
            });
        }
        Self::new(
            inner.map.iter().map(|&z| outer.apply(z)).collect(),
            outer.target_len,
        )
    }
}

/// Push a distribution through a map: output mass at `j` is the summed input
/// mass over the preimage of `j`. Total mass is conserved.
pub fn pushforward(
    map: &PushforwardMap,
    dist: &DiscreteDistribution,
) -> Result<DiscreteDistribution> {
    if dist.len() != map.source_len() {
        return Err(Error::LengthMismatch {
            expected: map.source_len(),
            got: dist.len(),
        });
    }
    let mut weights = vec![0.0; map.target_len()];
    for (z, &w) in dist.weights().iter().enumerate() {
        weights[map.apply(z)] += w;
    }
    Ok(DiscreteDistribution { weights })
}

/// Test whether `T` pushes `P` to `Q` as seen by a finite family of test
/// functions: true iff `|E_P[f(T(x))] - E_Q[f]| <= tol` for every `f`.
pub fn check_partial_pushforward(
    map: &PushforwardMap,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    family: &[Vec<f64>],
    tol: f64,
) -> Result<bool> {
    if family.is_empty() {
        return Err(Error::InvalidConfig(
            "partial-pushforward family is empty".into(),
        ));
    }
    if p.len() != map.source_len() {
        return Err(Error::LengthMismatch {
            expected: map.source_len(),
            got: p.len(),
        });
    }
    if q.len() != map.target_len() {
        return Err(Error::LengthMismatch {
            expected: map.target_len(),
            got: q.len(),
        });
    }
    for f in family {
        if f.len() != map.target_len() {
            return Err(Error::LengthMismatch {
                expected: map.target_len(),
                got: f.len(),
            });
        }
        let e_p = sum_comp(
            p.weights()
                .iter()
                .enumerate()
                .map(|(z, &w)| w * f[map.apply(z)]),
        );
        let e_q = q.expectation(f)?;
        if (e_p - e_q).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// JSON problem schema for spaces:
/// `{"points": [...], "metric": "euclidean"|"discrete"|"explicit", "dist": [[...]]?, "coords": [[...]]?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<String>>,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<Vec<f64>>>,
}

impl SpaceSpec {
    /// Materialize the described space, validating as appropriate.
    pub fn build(&self) -> Result<FiniteMetricSpace> {
        match self.metric.as_str() {
            "euclidean" => {
                let coords = self
                    .coords
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("euclidean metric needs coords".into()))?;
                let sp = FiniteMetricSpace::euclidean(coords)?;
                Ok(match &self.points {
                    Some(labels) if labels.len() == sp.len() => FiniteMetricSpace {
                        labels: labels.clone(),
                        ..sp
                    },
                    _ => sp,
                })
            }
            "discrete" => {
                let n = match (&self.points, &self.coords) {
                    (Some(p), _) => p.len(),
                    (None, Some(c)) => c.len(),
                    _ => {
                        return Err(Error::InvalidConfig(
                            "discrete metric needs points to size the universe".into(),
                        ))
                    }
                };
                let sp = FiniteMetricSpace::discrete(n)?;
                Ok(match &self.points {
                    Some(labels) => FiniteMetricSpace {
                        labels: labels.clone(),
                        ..sp
                    },
                    None => sp,
                })
            }
            "explicit" => {
                let dist = self
                    .dist
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("explicit metric needs dist".into()))?;
                match &self.points {
                    Some(labels) => FiniteMetricSpace::from_matrix_labeled(labels.clone(), dist),
                    None => FiniteMetricSpace::from_matrix(dist),
                }
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown metric kind: {other}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn dist3() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.5],
            vec![2.0, 1.5, 0.0],
        ]
    }

    #[test]
    fn explicit_matrix_validates() {
        assert!(FiniteMetricSpace::from_matrix(dist3()).is_ok());
    }

    #[test]
    fn metric_axioms_are_checked() {
        let mut bad = dist3();
        bad[0][0] = 0.5;
        assert!(matches!(
            FiniteMetricSpace::from_matrix(bad),
            Err(Error::MetricViolation {
                axiom: "identity",
                ..
            })
        ));

        let mut bad = dist3();
        bad[0][1] = 0.9;
        assert!(matches!(
            FiniteMetricSpace::from_matrix(bad),
            Err(Error::MetricViolation {
                axiom: "symmetry",
                ..
            })
        ));

        let mut bad = dist3();
        bad[0][2] = 3.0;
        bad[2][0] = 3.0;
        assert!(matches!(
            FiniteMetricSpace::from_matrix(bad),
            Err(Error::MetricViolation {
                axiom: "triangle",
                ..
            })
        ));

        let mut bad = dist3();
        bad[1][2] = 0.0;
        bad[2][1] = 0.0;
        assert!(matches!(
            FiniteMetricSpace::from_matrix(bad),
            Err(Error::MetricViolation {
                axiom: "positivity",
                ..
            })
        ));
    }

    #[test]
    fn euclidean_distances_match_pythagoras() {
        let sp = FiniteMetricSpace::euclidean(vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 4.0]])
            .unwrap();
        assert_eq!(sp.d(0, 1), 3.0);
        assert_eq!(sp.d(0, 2), 4.0);
        assert_eq!(sp.d(1, 2), 5.0);
    }

    #[test]
    fn discrete_metric_is_zero_one() {
        let sp = FiniteMetricSpace::discrete(4).unwrap();
        assert_eq!(sp.d(2, 2), 0.0);
        assert_eq!(sp.d(1, 3), 1.0);
        assert_eq!(sp.full_diameter(), 1.0);
    }

    #[test]
    fn random_metric_passes_full_validation() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let sp = FiniteMetricSpace::random_metric(12, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..12).map(|j| sp.d(i, j)).collect())
            .collect();
        assert!(FiniteMetricSpace::from_matrix(rows).is_ok());
    }

    #[test]
    fn scaling_scales_diameter() {
        let sp = FiniteMetricSpace::from_matrix(dist3()).unwrap();
        let sp2 = sp.scale(2.5).unwrap();
        assert!((sp2.full_diameter() - 5.0).abs() < 1e-15);
        assert!(sp.scale(0.0).is_err());
        assert!(sp.scale(-1.0).is_err());
    }

    #[test]
    fn diameter_examples() {
        let one = FiniteMetricSpace::discrete(1).unwrap();
        assert_eq!(one.diameter(&[0]).unwrap(), 0.0);

        let two = FiniteMetricSpace::from_matrix(vec![vec![0.0, 3.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(two.diameter(&[0, 1]).unwrap(), 3.0);

        let three = FiniteMetricSpace::from_matrix(dist3()).unwrap();
        assert_eq!(three.diameter(&[0, 1, 2]).unwrap(), 2.0);

        assert!(three.diameter(&[]).is_err());
        assert!(three.diameter(&[5]).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.2, 0.3, 0.5]).is_ok());
        assert!(matches!(
            DiscreteDistribution::new(vec![0.5, -0.1, 0.6]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            DiscreteDistribution::new(vec![0.5, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
        // Slightly off-unit input is renormalized to within 1e-12.
        let d = DiscreteDistribution::new(vec![0.5 + 3e-10, 0.5]).unwrap();
        assert!((sum_comp(d.weights().iter().copied()) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn support_skips_zero_weights() {
        let d = DiscreteDistribution::new(vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(d.support(), vec![0, 2]);
        assert_eq!(
            DiscreteDistribution::point_mass(3, 1).unwrap().support(),
            vec![1]
        );
    }

    #[test]
    fn pushforward_identity_permutation_and_merge() {
        let p = DiscreteDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let id = PushforwardMap::identity(3).unwrap();
        assert_eq!(pushforward(&id, &p).unwrap().weights(), &[0.2, 0.3, 0.5]);

        let p2 = DiscreteDistribution::new(vec![0.2, 0.8]).unwrap();
        let swap = PushforwardMap::new(vec![1, 0], 2).unwrap();
        assert_eq!(pushforward(&swap, &p2).unwrap().weights(), &[0.8, 0.2]);

        let merge = PushforwardMap::new(vec![0, 0, 1], 2).unwrap();
        assert_eq!(pushforward(&merge, &p).unwrap().weights(), &[0.5, 0.5]);
    }

    #[test]
    fn map_classification() {
        let merge = PushforwardMap::new(vec![0, 0, 1], 2).unwrap();
        assert!(!merge.is_injective());
        assert!(merge.is_surjective());
        assert!(!merge.is_permutation());
        assert!(merge.inverse().is_err());

        let perm = PushforwardMap::new(vec![2, 0, 1], 3).unwrap();
        assert!(perm.is_permutation());
        let inv = perm.inverse().unwrap();
        let comp = PushforwardMap::compose(&inv, &perm).unwrap();
        assert_eq!(comp, PushforwardMap::identity(3).unwrap());
    }

    #[test]
    fn surjection_constructor_hits_every_target() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = PushforwardMap::random_surjection(7, 4, &mut rng).unwrap();
            assert!(g.is_surjective());
        }
        assert!(PushforwardMap::random_surjection(3, 4, &mut rng).is_err());
    }

    #[test]
    fn partial_pushforward_examples() {
        let p = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let q_exact = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let id = PushforwardMap::identity(2).unwrap();
        let family = vec![vec![1.0, -2.0], vec![0.3, 0.7]];
        assert!(check_partial_pushforward(&id, &p, &q_exact, &family, 1e-12).unwrap());

        let q_off = DiscreteDistribution::new(vec![0.6, 0.4]).unwrap();
        assert!(check_partial_pushforward(&id, &p, &q_off, &[vec![1.0, 1.0]], 1e-12).unwrap());
        assert!(!check_partial_pushforward(&id, &p, &q_off, &[vec![0.0, 1.0]], 1e-3).unwrap());

        assert!(check_partial_pushforward(&id, &p, &q_off, &[], 1e-3).is_err());
    }

    #[test]
    fn space_spec_round_trips() {
        let spec: SpaceSpec =
            serde_json::from_str(r#"{"metric": "explicit", "dist": [[0.0, 1.0], [1.0, 0.0]]}"#)
                .unwrap();
        let sp = spec.build().unwrap();
        assert_eq!(sp.len(), 2);

        let spec: SpaceSpec =
            serde_json::from_str(r#"{"metric": "euclidean", "coords": [[0.0], [2.0]]}"#).unwrap();
        assert_eq!(spec.build().unwrap().d(0, 1), 2.0);

        let spec: SpaceSpec =
            serde_json::from_str(r#"{"metric": "discrete", "points": ["a", "b", "c"]}"#).unwrap();
        let sp = spec.build().unwrap();
        assert_eq!(sp.len(), 3);
        assert_eq!(sp.labels()[2], "c");

        let bad: SpaceSpec = serde_json::from_str(r#"{"metric": "fancy"}"#).unwrap();
        assert!(bad.build().is_err());
    }
}
