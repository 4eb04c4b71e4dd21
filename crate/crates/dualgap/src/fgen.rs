//! Convex generators, their conjugates, and the f-divergence evaluator.
//!
//! A generator is a convex `f: [0, ∞) → (-∞, ∞]` with `f(1) = 0`; off the
//! domain it is `+∞`. Each built-in carries its derivative (one-sided at 0),
//! its recession constant `lim f(t)/t`, and a closed-form convex conjugate
//! `f*(y) = sup_x {x·y − f(x)}`:
//!
//! | generator | f(x) | f*(y) | finite for | recession |
//! |-----------|------|-------|-----------|-----------|
//! | total-variation | \|x−1\| | max(y, −1) | y ≤ 1 | 1 |
//! | kullback-leibler | x ln x | e^(y−1) | all y | ∞ |
//! | reverse-kl | −ln x | −1 − ln(−y) | y < 0 | 0 |
//! | chi-squared | (x−1)² | y + y²/4 (y ≥ −2), else −1 | all y | ∞ |
//! | jensen-shannon | x ln x − (x+1) ln((x+1)/2) | −ln(2 − e^y) | y < ln 2 | ln 2 |
//! | gan | x ln x − (x+1) ln(x+1) + 2 ln 2 | −ln(1 − e^y) − 2 ln 2 | y < 0 | 0 |
//! | indicator | 0 at x=1, else ∞ | y | all y | ∞ |
//!
//! Conjugates are taken over the domain [0, ∞), so the total-variation
//! conjugate is `max(y, −1)` for y ≤ 1 rather than the linear form `y` that
//! holds when negatives are admitted; inside variational objectives the two
//! differ by a constant shift of the witness and give identical optima.
//!
//! The indicator generator is handled symbolically throughout (its divergence
//! is 0 at equality and ∞ otherwise; its conjugate is the identity), never by
//! numeric limits.
//!
//! λ-scaling goes through [`scale_conjugate`], which evaluates
//! `(λf)*(y) = λ·f*(y/λ)`, and through the identity `D_{λf} = λ·D_f` on the
//! divergence side.

use crate::error::{Error, Result};
use crate::space::DiscreteDistribution;
use crate::util::{golden_min, sum_comp};
use serde::{Deserialize, Serialize};
use std::fmt;

const LN_2: f64 = std::f64::consts::LN_2;

/// A convex generator: one of the built-ins or a validated custom expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    TotalVariation,
    KullbackLeibler,
    ReverseKl,
    ChiSquared,
    JensenShannon,
    Gan,
    Indicator,
    Custom(CustomGenerator),
}

impl Generator {
    /// All built-in generators, for sweep tests.
    pub fn builtins() -> Vec<Generator> {
        vec![
            Generator::TotalVariation,
            Generator::KullbackLeibler,
            Generator::ReverseKl,
            Generator::ChiSquared,
            Generator::JensenShannon,
            Generator::Gan,
            Generator::Indicator,
        ]
    }

    /// Look up a built-in by CLI name.
    pub fn from_name(name: &str) -> Result<Generator> {
        match name {
            "tv" | "total-variation" => Ok(Generator::TotalVariation),
            "kl" | "kullback-leibler" => Ok(Generator::KullbackLeibler),
            "reverse-kl" => Ok(Generator::ReverseKl),
            "chi2" | "chi-squared" => Ok(Generator::ChiSquared),
            "js" | "jensen-shannon" => Ok(Generator::JensenShannon),
            "gan" => Ok(Generator::Gan),
            "indicator" => Ok(Generator::Indicator),
            other => Err(Error::InvalidConfig(format!("unknown generator: {other}"))),
        }
    }

    /// Evaluate `f(x)`; `+∞` off the domain `[0, ∞)`, and `f(0)` is the
    /// limit from the right.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::INFINITY;
        }
        match self {
            Generator::TotalVariation => (x - 1.0).abs(),
            Generator::KullbackLeibler => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            Generator::ReverseKl => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    -x.ln()
                }
            }
            Generator::ChiSquared => (x - 1.0) * (x - 1.0),
            Generator::JensenShannon => {
                let a = if x == 0.0 { 0.0 } else { x * x.ln() };
                a - (x + 1.0) * (0.5 * (x + 1.0)).ln()
            }
            Generator::Gan => {
                let a = if x == 0.0 { 0.0 } else { x * x.ln() };
                a - (x + 1.0) * (x + 1.0).ln() + 2.0 * LN_2
            }
            Generator::Indicator => {
                if x == 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Generator::Custom(c) => c.eval(x),
        }
    }

    /// Derivative `f'(x)`, one-sided at 0; a subgradient selection at kinks.
    pub fn deriv(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NAN;
        }
        match self {
            Generator::TotalVariation => {
                if x < 1.0 {
                    -1.0
                } else if x > 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Generator::KullbackLeibler => {
                if x == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    x.ln() + 1.0
                }
            }
            Generator::ReverseKl => {
                if x == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.0 / x
                }
            }
            Generator::ChiSquared => 2.0 * (x - 1.0),
            Generator::JensenShannon => {
                if x == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (2.0 * x / (x + 1.0)).ln()
                }
            }
            Generator::Gan => {
                if x == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (x / (x + 1.0)).ln()
                }
            }
            Generator::Indicator => {
                if x < 1.0 {
                    f64::NEG_INFINITY
                } else if x > 1.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Generator::Custom(c) => c.deriv(x),
        }
    }

    /// Recession constant `lim_{t→∞} f(t)/t`.
    pub fn recession(&self) -> f64 {
        match self {
            Generator::TotalVariation => 1.0,
            Generator::KullbackLeibler => f64::INFINITY,
            Generator::ReverseKl => 0.0,
            Generator::ChiSquared => f64::INFINITY,
            Generator::JensenShannon => LN_2,
            Generator::Gan => 0.0,
            Generator::Indicator => f64::INFINITY,
            Generator::Custom(c) => c.recession(),
        }
    }

    /// Closed-form conjugate `f*(y)`; `+∞` outside the finiteness interval.
    pub fn conjugate(&self, y: f64) -> f64 {
        match self {
            Generator::TotalVariation => {
                if y > 1.0 {
                    f64::INFINITY
                } else {
                    y.max(-1.0)
                }
            }
            Generator::KullbackLeibler => (y - 1.0).exp(),
            Generator::ReverseKl => {
                if y < 0.0 {
                    -1.0 - (-y).ln()
                } else {
                    f64::INFINITY
                }
            }
            Generator::ChiSquared => {
                if y >= -2.0 {
                    y + 0.25 * y * y
                } else {
                    -1.0
                }
            }
            Generator::JensenShannon => {
                if y < LN_2 {
                    -(2.0 - y.exp()).ln()
                } else {
                    f64::INFINITY
                }
            }
            Generator::Gan => {
                if y < 0.0 {
                    -(1.0 - y.exp()).ln() - 2.0 * LN_2
                } else {
                    f64::INFINITY
                }
            }
            Generator::Indicator => y,
            Generator::Custom(c) => c.conjugate(y),
        }
    }

    /// Derivative of the conjugate, `(f*)'(y)`. For differentiable `f` this
    /// is the maximizer `argmax_x {x·y − f(x)}`, the quantity the penalized
    /// solvers need; at kinks a subgradient is selected, and points outside
    /// the finiteness interval return `+∞`.
    pub fn conjugate_grad(&self, y: f64) -> f64 {
        match self {
            Generator::TotalVariation => {
                if y > 1.0 {
                    f64::INFINITY
                } else if y >= -1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Generator::KullbackLeibler => (y - 1.0).exp(),
            Generator::ReverseKl => {
                if y < 0.0 {
                    -1.0 / y
                } else {
                    f64::INFINITY
                }
            }
            Generator::ChiSquared => (1.0 + 0.5 * y).max(0.0),
            Generator::JensenShannon => {
                if y < LN_2 {
                    let e = y.exp();
                    e / (2.0 - e)
                } else {
                    f64::INFINITY
                }
            }
            Generator::Gan => {
                if y < 0.0 {
                    let e = y.exp();
                    e / (1.0 - e)
                } else {
                    f64::INFINITY
                }
            }
            Generator::Indicator => 1.0,
            Generator::Custom(c) => c.conjugate_grad(y),
        }
    }

    /// Interval hull on which the conjugate is finite. Whether an endpoint is
    /// included varies by generator; [`conjugate`](Self::conjugate) is
    /// authoritative pointwise.
    pub fn conjugate_domain(&self) -> (f64, f64) {
        match self {
            Generator::TotalVariation => (f64::NEG_INFINITY, 1.0),
            Generator::KullbackLeibler => (f64::NEG_INFINITY, f64::INFINITY),
            Generator::ReverseKl => (f64::NEG_INFINITY, 0.0),
            Generator::ChiSquared => (f64::NEG_INFINITY, f64::INFINITY),
            Generator::JensenShannon => (f64::NEG_INFINITY, LN_2),
            Generator::Gan => (f64::NEG_INFINITY, 0.0),
            Generator::Indicator => (f64::NEG_INFINITY, f64::INFINITY),
            Generator::Custom(c) => c.conjugate_domain(),
        }
    }

    /// Whether this is the symbolic indicator generator.
    pub fn is_indicator(&self) -> bool {
        matches!(self, Generator::Indicator)
    }

    /// Whether this is the total-variation generator.
    pub fn is_total_variation(&self) -> bool {
        matches!(self, Generator::TotalVariation)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Generator::TotalVariation => "total-variation",
            Generator::KullbackLeibler => "kullback-leibler",
            Generator::ReverseKl => "reverse-kl",
            Generator::ChiSquared => "chi-squared",
            Generator::JensenShannon => "jensen-shannon",
            Generator::Gan => "gan",
            Generator::Indicator => "indicator",
            Generator::Custom(c) => &c.name,
        };
        f.write_str(name)
    }
}

/// Grid-plus-refinement lower estimate of `f*(y)` over `x ∈ [0, x_max]`.
///
/// Every candidate is a feasible evaluation, so the result never exceeds the
/// true conjugate; with a maximizer interior to the scanned range it matches
/// the closed form to roughly the refinement tolerance. The point `x = 1` is
/// always scanned (it carries the whole sup for the indicator generator).
pub fn conjugate_numeric(f: &Generator, y: f64, x_max: f64, resolution: f64) -> Result<f64> {
    if !(x_max > 0.0) || !(resolution > 0.0) {
        return Err(Error::InvalidConfig(
            "conjugate_numeric needs positive x_max and resolution".into(),
        ));
    }
    let mut best_x = 1.0;
    let mut best_v = y - f.eval(1.0);
    let steps = (x_max / resolution).ceil() as usize;
    for k in 0..=steps {
        let x = (k as f64 * resolution).min(x_max);
        let fx = f.eval(x);
        if fx.is_finite() {
            let v = x * y - fx;
            if v > best_v {
                best_v = v;
                best_x = x;
            }
        }
    }
    let lo = (best_x - resolution).max(0.0);
    let hi = (best_x + resolution).min(x_max);
    let (_, neg_min) = golden_min(lo, hi, 1e-12, |x| {
        let fx = f.eval(x);
        if fx.is_finite() {
            fx - x * y
        } else {
            f64::INFINITY
        }
    });
    Ok(best_v.max(-neg_min))
}

/// Conjugate of the scaled generator: `(λf)*(y) = λ·f*(y/λ)`.
pub fn scale_conjugate(f: &Generator, lambda: f64, y: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "conjugate scaling needs lambda > 0, got {lambda}"
        )));
    }
    Ok(lambda * f.conjugate(y / lambda))
}

/// Derivative of the scaled conjugate: `((λf)*)'(y) = (f*)'(y/λ)`.
pub fn scale_conjugate_grad(f: &Generator, lambda: f64, y: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "conjugate scaling needs lambda > 0, got {lambda}"
        )));
    }
    Ok(f.conjugate_grad(y / lambda))
}

/// The f-divergence `D_f(P, Q) = Σ_{q_i>0} q_i·f(p_i/q_i) + Σ_{q_i=0} p_i·f'(∞)`,
/// where `f'(∞)` is the recession constant. Extended-real: `+∞` signals an
/// absolute-continuity violation against a generator with infinite recession.
pub fn f_divergence(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    f: &Generator,
) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            got: p.len(),
        });
    }
    if f.is_indicator() {
        // Symbolic: zero at equality, infinite otherwise.
        return Ok(if p.weights() == q.weights() {
            0.0
        } else {
            f64::INFINITY
        });
    }
    let recession = f.recession();
    let mut terms = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let (pi, qi) = (p.w(i), q.w(i));
        if qi > 0.0 {
            let v = qi * f.eval(pi / qi);
            if v.is_infinite() {
                return Ok(f64::INFINITY);
            }
            terms.push(v);
        } else if pi > 0.0 {
            if recession.is_infinite() {
                return Ok(f64::INFINITY);
            }
            terms.push(pi * recession);
        }
    }
    // Clamp ulp-level negatives: the divergence is nonnegative by convexity.
    Ok(sum_comp(terms).max(0.0))
}

/// One additive piece of a custom generator expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// `coef · x^power`, integer `power ≥ 0`.
    Poly { coef: f64, power: u32 },
    /// `coef · x ln x` (0 at x = 0).
    XLogX { coef: f64 },
    /// `coef · ln x`.
    Log { coef: f64 },
    /// `coef · |x − 1|`.
    AbsDev { coef: f64 },
    /// Constant offset.
    Const { value: f64 },
}

/// JSON shape of a user-defined generator: a named sum of expression terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomGeneratorSpec {
    pub name: String,
    pub terms: Vec<Term>,
}

/// A validated custom generator. Construction checks `f(1) = 0`, midpoint
/// convexity, and monotone derivative on a 200-point grid over (0, 10];
/// conjugates are numeric (grid plus refinement over [0, 100]), so custom
/// generators suit the solvers best when their pieces are differentiable.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomGenerator {
    name: String,
    terms: Vec<Term>,
}

/// Grid used for validating custom generators.
const VALIDATION_GRID: usize = 200;
const CUSTOM_X_MAX: f64 = 100.0;
const CUSTOM_RESOLUTION: f64 = 1e-3;

impl CustomGenerator {
    /// Validate and build from a spec.
    pub fn from_spec(spec: CustomGeneratorSpec) -> Result<Generator> {
        if spec.terms.is_empty() {
            return Err(Error::InvalidConfig("custom generator has no terms".into()));
        }
        let g = CustomGenerator {
            name: spec.name,
            terms: spec.terms,
        };
        let at_one = g.eval(1.0);
        if at_one.abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "custom generator must satisfy f(1) = 0, got f(1) = {at_one}"
            )));
        }
        let grid: Vec<f64> = (1..=VALIDATION_GRID)
            .map(|k| 10.0 * k as f64 / VALIDATION_GRID as f64)
            .collect();
        for (i, &a) in grid.iter().enumerate() {
            for &b in &grid[i + 1..] {
                let mid = g.eval(0.5 * (a + b));
                let chord = 0.5 * (g.eval(a) + g.eval(b));
                if mid.is_finite() && chord.is_finite() && mid > chord + 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "custom generator is not convex: midpoint excess at ({a}, {b})"
                    )));
                }
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for &x in &grid {
            let d = g.deriv(x);
            if d.is_nan() || d + 1e-12 < prev {
                return Err(Error::InvalidConfig(
                    "custom generator derivative is not nondecreasing".into(),
                ));
            }
            prev = d.max(prev);
        }
        Ok(Generator::Custom(g))
    }

    fn eval(&self, x: f64) -> f64 {
        // Plain IEEE summation: terms may be infinite, which compensated
        // summation would corrupt into NaN.
        self.terms
            .iter()
            .map(|t| match *t {
                Term::Poly { coef, power } => coef * x.powi(power as i32),
                Term::XLogX { coef } => {
                    if x == 0.0 {
                        0.0
                    } else {
                        coef * x * x.ln()
                    }
                }
                Term::Log { coef } => {
                    if x == 0.0 {
                        if coef < 0.0 {
                            f64::INFINITY
                        } else if coef > 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            0.0
                        }
                    } else {
                        coef * x.ln()
                    }
                }
                Term::AbsDev { coef } => coef * (x - 1.0).abs(),
                Term::Const { value } => value,
            })
            .sum::<f64>()
    }

    fn deriv(&self, x: f64) -> f64 {
        // Plain IEEE summation: terms may be infinite, which compensated
        // summation would corrupt into NaN.
        self.terms
            .iter()
            .map(|t| match *t {
                Term::Poly { coef, power } => match power {
                    0 => 0.0,
                    1 => coef,
                    p => {
                        if x == 0.0 {
                            0.0
                        } else {
                            coef * p as f64 * x.powi(p as i32 - 1)
                        }
                    }
                },
                Term::XLogX { coef } => {
                    if x == 0.0 {
                        if coef > 0.0 {
                            f64::NEG_INFINITY
                        } else if coef < 0.0 {
                            f64::INFINITY
                        } else {
                            0.0
                        }
                    } else {
                        coef * (x.ln() + 1.0)
                    }
                }
                Term::Log { coef } => {
                    if x == 0.0 {
                        if coef < 0.0 {
                            f64::NEG_INFINITY
                        } else if coef > 0.0 {
                            f64::INFINITY
                        } else {
                            0.0
                        }
                    } else {
                        coef / x
                    }
                }
                Term::AbsDev { coef } => {
                    if x < 1.0 {
                        -coef
                    } else if x > 1.0 {
                        coef
                    } else {
                        0.0
                    }
                }
                Term::Const { .. } => 0.0,
            })
            .sum::<f64>()
    }

    fn recession(&self) -> f64 {
        // Plain IEEE summation: terms may be infinite, which compensated
        // summation would corrupt into NaN.
        self.terms
            .iter()
            .map(|t| match *t {
                Term::Poly { coef, power } => match power {
                    0 => 0.0,
                    1 => coef,
                    _ => {
                        if coef > 0.0 {
                            f64::INFINITY
                        } else if coef < 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            0.0
                        }
                    }
                },
                Term::XLogX { coef } => {
                    if coef > 0.0 {
                        f64::INFINITY
                    } else if coef < 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        0.0
                    }
                }
                Term::Log { .. } => 0.0,
                Term::AbsDev { coef } => coef,
                Term::Const { .. } => 0.0,
            })
            .sum::<f64>()
    }

    fn conjugate(&self, y: f64) -> f64 {
        let rec = self.recession();
        if rec.is_finite() && y > rec {
            return f64::INFINITY;
        }
        let g = Generator::Custom(self.clone());
        conjugate_numeric(&g, y, CUSTOM_X_MAX, CUSTOM_RESOLUTION)
            .expect("fixed parameters are valid")
    }

    fn conjugate_grad(&self, y: f64) -> f64 {
        // The conjugate's derivative is the maximizer of x·y − f(x).
        let rec = self.recession();
        if rec.is_finite() && y > rec {
            return f64::INFINITY;
        }
        let g = Generator::Custom(self.clone());
        let (x_star, _) = golden_min(0.0, CUSTOM_X_MAX, 1e-10, |x| {
            let fx = g.eval(x);
            if fx.is_finite() {
                fx - x * y
            } else {
                f64::INFINITY
            }
        });
        x_star
    }

    fn conjugate_domain(&self) -> (f64, f64) {
        let rec = self.recession();
        (f64::NEG_INFINITY, rec)
    }
}
