use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Direction along which a flow is constant.
///
/// A `Vertical` flow depends on the column only: its lines are the graphs
/// `row = D(col) + t` and run across the square from left to right. A
/// `Horizontal` flow is the transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowAxis {
    Horizontal,
    Vertical,
}

impl FlowAxis {
    pub fn symbol(self) -> char {
        match self {
            FlowAxis::Horizontal => 'H',
            FlowAxis::Vertical => 'V',
        }
    }
}

/// Dictionary configuration: wavelet/Alpert order and the flow family.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Vanishing moments `p` of both the wavelet and the Alpert transform.
    pub order: usize,
    /// Largest polynomial degree of a flow, at most `order - 1`.
    pub max_degree: usize,
    /// Number of quantization levels per polynomial coefficient (`q`).
    pub levels: usize,
    /// Upper bound on the flow tangent `|D'|`.
    pub slope_cap: f64,
    /// Smallest admissible quadtree leaf width.
    pub min_leaf: usize,
    /// Squares wider than this only offer the raw wavelet representation.
    pub max_flow_width: usize,
    /// Limit on the number of quadtree splits below a subband root.
    pub max_tree_depth: Option<usize>,
    /// With flows disabled the dictionary reduces to the wavelet basis.
    pub flows_enabled: bool,
}

impl FlowConfig {
    /// Defaults for `p` vanishing moments: degree `min(p - 1, 2)`, 7 levels,
    /// unit slope cap, leaves of width 2 to 32 with flows.
    pub fn for_order(order: usize) -> Self {
        FlowConfig {
            order,
            max_degree: order.saturating_sub(1).min(2),
            levels: 7,
            slope_cap: 1.0,
            min_leaf: 2,
            max_flow_width: 32,
            max_tree_depth: None,
            flows_enabled: true,
        }
    }

    /// The same configuration restricted to the plain wavelet basis.
    pub fn wavelet_only(&self) -> Self {
        FlowConfig {
            flows_enabled: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::param("order (vanishing moments) must be ≥ 1"));
        }
        if self.max_degree >= self.order {
            return Err(Error::param(format!(
                "flow degree {} must be below the order {}",
                self.max_degree, self.order
            )));
        }
        if self.levels == 0 {
            return Err(Error::param("flow quantization needs at least one level"));
        }
        if !(self.slope_cap.is_finite() && self.slope_cap > 0.0) {
            return Err(Error::param(format!(
                "slope cap must be positive, got {}",
                self.slope_cap
            )));
        }
        if self.min_leaf == 0 || !self.min_leaf.is_power_of_two() {
            return Err(Error::param(format!(
                "minimum leaf width must be a power of two, got {}",
                self.min_leaf
            )));
        }
        Ok(())
    }

    /// Quantized level range `kmin..=kmax` shared by every coefficient.
    pub fn level_range(&self) -> (i32, i32) {
        level_range(self.levels)
    }

    /// Number of flow candidates (without the no-flow option) on a square
    /// that admits flows.
    pub fn flows_per_square(&self) -> usize {
        2 * self.levels.pow(self.max_degree as u32 + 1)
    }

    /// Whether squares of this width carry flow candidates.
    pub fn admits_flows(&self, width: usize) -> bool {
        self.flows_enabled && width >= 2 && width <= self.max_flow_width
    }
}

fn level_range(levels: usize) -> (i32, i32) {
    let half = (levels as i32 - 1) / 2;
    (-half, levels as i32 - 1 - half)
}

/// A quantized polynomial flow inside one dyadic square.
///
/// The displacement polynomial is `D(u) = Σ a_i u^i` in the centred pixel
/// coordinate `u = index - (w - 1) / 2` of the varying axis. Integer level
/// `k_0` sets the sub-pixel phase `a_0 = k_0 / q`; for `i ≥ 1` the levels
/// sample a uniform grid of tangents so that `|D'(u)| ≤ slope_cap` across the
/// square.
#[derive(Debug, Clone)]
pub struct GeometricFlow {
    pub axis: FlowAxis,
    pub coeffs: Vec<i32>,
    pub levels: usize,
    pub slope_cap: f64,
}

impl GeometricFlow {
    pub fn new(axis: FlowAxis, coeffs: Vec<i32>, cfg: &FlowConfig) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > cfg.max_degree + 1 {
            return Err(Error::param(format!(
                "flow needs 1..={} coefficients, got {}",
                cfg.max_degree + 1,
                coeffs.len()
            )));
        }
        let (lo, hi) = cfg.level_range();
        if let Some(k) = coeffs.iter().find(|k| !(lo..=hi).contains(*k)) {
            return Err(Error::param(format!("flow level {k} outside {lo}..={hi}")));
        }
        Ok(GeometricFlow {
            axis,
            coeffs,
            levels: cfg.levels,
            slope_cap: cfg.slope_cap,
        })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Dequantized polynomial coefficients for a square of width `w`.
    pub fn polynomial(&self, width: usize) -> Vec<f64> {
        let (lo, hi) = level_range(self.levels);
        let kmax = lo.abs().max(hi).max(1) as f64;
        let deg = self.degree().max(1) as f64;
        let half = width as f64 / 2.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                if i == 0 {
                    k as f64 / self.levels as f64
                } else {
                    k as f64 * self.slope_cap / (kmax * deg * i as f64 * half.powi(i as i32 - 1))
                }
            })
            .collect()
    }

    /// Displacement `D(u)` at centred coordinate `u`.
    pub fn displacement(poly: &[f64], u: f64) -> f64 {
        poly.iter().rev().fold(0.0, |acc, a| acc * u + a)
    }

    /// Largest `|D'(u)|` over the sites of a square of width `w`.
    pub fn max_tangent(&self, width: usize) -> f64 {
        let poly = self.polynomial(width);
        (0..width)
            .map(|i| {
                let u = i as f64 - (width as f64 - 1.0) / 2.0;
                poly.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, a)| k as f64 * a * u.powi(k as i32 - 1))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    fn key(&self) -> (FlowAxis, &[i32]) {
        (self.axis, &self.coeffs)
    }
}

// Identity and order only look at (axis, coeffs): within one dictionary the
// quantizer is shared.
impl PartialEq for GeometricFlow {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for GeometricFlow {}

impl PartialOrd for GeometricFlow {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GeometricFlow {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for GeometricFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.axis.symbol())?;
        for k in &self.coeffs {
            write!(f, ",{k}")?;
        }
        Ok(())
    }
}

/// Candidate flows of a square of width `width`: the no-flow option first,
/// then every `(axis, levels)` combination in lexicographic order.
pub fn enumerate_flows(width: usize, cfg: &FlowConfig) -> Vec<Option<GeometricFlow>> {
    let mut out = vec![None];
    if !cfg.admits_flows(width) {
        return out;
    }
    let (lo, hi) = cfg.level_range();
    let n = cfg.max_degree + 1;
    for axis in [FlowAxis::Horizontal, FlowAxis::Vertical] {
        let mut coeffs = vec![lo; n];
        loop {
            out.push(Some(GeometricFlow {
                axis,
                coeffs: coeffs.clone(),
                levels: cfg.levels,
                slope_cap: cfg.slope_cap,
            }));
            // Odometer increment, last coefficient fastest.
            let mut i = n;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if coeffs[i] < hi {
                    coeffs[i] += 1;
                    break;
                }
                coeffs[i] = lo;
            }
            if coeffs.iter().all(|&k| k == lo) {
                break;
            }
        }
    }
    out
}
