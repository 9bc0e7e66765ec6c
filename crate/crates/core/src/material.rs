//! Density-dependent viscosity and conductivity laws.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridField, Rank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawKind {
    Viscosity,
    Conductivity,
}

/// Closed-form density dependence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LawShape {
    Constant(f64),
    /// `a + b ξ`
    Affine { a: f64, b: f64 },
    /// `a + b ξ + c ξ²`
    Quadratic { a: f64, b: f64, c: f64 },
}

impl LawShape {
    pub fn eval(&self, xi: f64) -> f64 {
        match *self {
            LawShape::Constant(v) => v,
            LawShape::Affine { a, b } => a + b * xi,
            LawShape::Quadratic { a, b, c } => a + xi * (b + c * xi),
        }
    }

    /// Exact `(min, max)` over `[lo, hi]`.
    fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut cands = vec![self.eval(lo), self.eval(hi)];
        if let LawShape::Quadratic { b, c, .. } = *self {
            if c != 0.0 {
                let v = -b / (2.0 * c);
                if v > lo && v < hi {
                    cands.push(self.eval(v));
                }
            }
        }
        let min = cands.iter().copied().fold(f64::INFINITY, f64::min);
        let max = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }
}

impl fmt::Display for LawShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawShape::Constant(v) => write!(f, "constant:{v}"),
            LawShape::Affine { a, b } => write!(f, "affine:{a},{b}"),
            LawShape::Quadratic { a, b, c } => write!(f, "quadratic:{a},{b},{c}"),
        }
    }
}

impl FromStr for LawShape {
    type Err = String;

    /// `constant:v`, `affine:a,b` or `quadratic:a,b,c`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (name, params) = s
            .split_once(':')
            .ok_or_else(|| format!("expected <name>:<params>, got '{s}'"))?;
        let vals: std::result::Result<Vec<f64>, _> =
            params.split(',').map(|p| p.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| format!("bad law parameter in '{s}': {e}"))?;
        match (name.trim(), vals.as_slice()) {
            ("constant", [v]) => Ok(LawShape::Constant(*v)),
            ("affine", [a, b]) => Ok(LawShape::Affine { a: *a, b: *b }),
            ("quadratic", [a, b, c]) => Ok(LawShape::Quadratic { a: *a, b: *b, c: *c }),
            (n, v) => Err(format!(
                "unknown law '{n}' with {} parameters (expected constant:v, affine:a,b, quadratic:a,b,c)",
                v.len()
            )),
        }
    }
}

/// A positive continuous law certified on the density range `[ρ̲, C₀]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialLaw {
    pub kind: LawKind,
    pub shape: LawShape,
    /// Value frozen for densities above this threshold.
    pub clamp_above: Option<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub density_range: (f64, f64),
}

impl MaterialLaw {
    pub fn new(kind: LawKind, shape: LawShape, density_range: (f64, f64)) -> Result<Self> {
        Self::build(kind, shape, None, density_range)
    }

    pub fn constant(kind: LawKind, value: f64, density_range: (f64, f64)) -> Result<Self> {
        Self::new(kind, LawShape::Constant(value), density_range)
    }

    fn build(
        kind: LawKind,
        shape: LawShape,
        clamp_above: Option<f64>,
        density_range: (f64, f64),
    ) -> Result<Self> {
        let (lo, hi) = density_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "density range must satisfy 0 < lower <= upper, got [{lo}, {hi}]"
            )));
        }
        let top = clamp_above.map_or(hi, |c| c.min(hi));
        let (mut min, mut max) = shape.range_on(lo.min(top), top);
        if let Some(c) = clamp_above {
            if c < lo {
                let v = shape.eval(c);
                min = v;
                max = v;
            }
        }
        if !(min > 0.0 && min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} law {shape} is not positive on [{lo}, {hi}] (min {min})"
            )));
        }
        Ok(Self {
            kind,
            shape,
            clamp_above,
            lower_bound: min,
            upper_bound: max,
            density_range,
        })
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let x = match self.clamp_above {
            Some(c) => xi.min(c),
            None => xi,
        };
        self.shape.eval(x)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, LawShape::Constant(_))
    }
}

/// Apply a law pointwise to a density field certified within the law's range.
pub fn eval_law(law: &MaterialLaw, rho: &GridField) -> Result<GridField> {
    if rho.rank() != Rank::Scalar {
        return Err(Error::InvalidArgument("density must be scalar".into()));
    }
    let (lo, hi) = law.density_range;
    for &v in rho.data() {
        if v < lo || v > hi {
            return Err(Error::DensityOutOfRange {
                value: v,
                lower: lo,
                upper: hi,
            });
        }
    }
    Ok(rho.map_scalar(|v| law.eval(v)))
}

/// Freeze the law above the top of its certified density range.
///
/// On `[ρ̲, C₀]` the returned law coincides with the original, so the sampled
/// sup-deviation there is zero (< eps); above `C₀` it is constant.
pub fn regularize_law(law: &MaterialLaw, eps: f64) -> Result<MaterialLaw> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization eps must lie in (0, 1), got {eps}"
        )));
    }
    if law.is_constant() {
        return Ok(*law);
    }
    let threshold = law.density_range.1;
    MaterialLaw::build(law.kind, law.shape, Some(threshold), law.density_range)
}
