//! The σ → (resolution, threshold) plan, the best-basis denoiser, the
//! single-basis baseline and the oracle evaluator.
//!
//! Observations are pixel samples of `f` plus i.i.d. Gaussian noise of
//! standard deviation `σ·side` per pixel. Dividing by `side` maps them to
//! orthonormal-basis coefficients with noise `σ`, which is where thresholds
//! and penalized costs live. Risks are `mean (f − F)²` over pixels, the same
//! quantity as `‖f − F‖²` on the unit square.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{FlowConfig, QuadtreeGeometry};
use crate::image::Image;
use crate::pyramid::{dwt2, full_depth, FilterPair, WaveletPyramid};
use crate::selection::{best_geometry, evaluate_geometry, reconstruct, Dictionary, Selection};

/// `ε` of the oracle inequality.
pub const ORACLE_EPSILON: f64 = 3.0;
/// `κ` of the oracle inequality.
pub const ORACLE_KAPPA: f64 = 64.0;

/// Largest working side a plan may request.
pub const MAX_SIDE: usize = 1 << 12;

/// Pixel samples to orthonormal coefficients of the pixel basis.
pub fn to_coefficient_units(img: &Image) -> Image {
    img.scaled(1.0 / img.side() as f64)
}

/// Inverse of [`to_coefficient_units`].
pub fn from_coefficient_units(img: &Image) -> Image {
    img.scaled(img.side() as f64)
}

/// `λ₀(K) = √(32 + 8 / ln K)`.
pub fn lambda0(k: u64) -> Result<f64> {
    if k < 2 {
        return Err(Error::param(format!("lambda0 needs K >= 2, got {k}")));
    }
    Ok((32.0 + 8.0 / (k as f64).ln()).sqrt())
}

/// Smallest `λ̃` covered by the risk theorem for `p` vanishing moments and a
/// dictionary of `k` vectors: `√(2(p+4))·λ₀(K)`.
pub fn regime_lambda(p: usize, k: u64) -> Result<f64> {
    Ok((2.0 * (p as f64 + 4.0)).sqrt() * lambda0(k)?)
}

/// Transform order, decomposition depth and flow dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub flow: FlowConfig,
    /// Wavelet depth; `None` decomposes down to a single approximation
    /// coefficient.
    pub depth: Option<usize>,
}

impl EstimatorConfig {
    pub fn for_order(p: usize) -> Self {
        EstimatorConfig {
            flow: FlowConfig::for_order(p),
            depth: None,
        }
    }

    pub fn order(&self) -> usize {
        self.flow.order
    }

    pub fn depth_for(&self, side: usize) -> Result<usize> {
        let max = full_depth(side);
        match self.depth {
            None => Ok(max),
            Some(d) if d >= 1 && d <= max => Ok(d),
            Some(d) => Err(Error::param(format!(
                "depth {d} outside 1..={max} for side {side}"
            ))),
        }
    }
}

/// Parameters derived from σ.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorPlan {
    pub sigma: f64,
    /// `σ ∈ (2^{j−1}, 2^j]`.
    pub j: i32,
    pub side: usize,
    pub n: usize,
    pub depth: usize,
    pub k_n: u64,
    pub lambda_tilde: f64,
    pub threshold: f64,
    pub lambda0: f64,
    /// `√(2(p+4))·λ₀(K_N)`.
    pub regime_lambda: f64,
    pub order: usize,
}

impl EstimatorPlan {
    pub fn in_regime(&self) -> bool {
        self.lambda_tilde >= self.regime_lambda
    }

    /// The same σ and threshold at another working side.
    pub fn with_side(&self, side: usize, est: &Estimator) -> Result<EstimatorPlan> {
        if !side.is_power_of_two() || !(2..=MAX_SIDE).contains(&side) {
            return Err(Error::param(format!(
                "side {side} must be a power of two in 2..={MAX_SIDE}"
            )));
        }
        let depth = est.config().depth_for(side)?;
        let k_n = est.dictionary().vector_count(side, depth);
        let lambda0 = lambda0(k_n)?;
        Ok(EstimatorPlan {
            side,
            n: side * side,
            depth,
            k_n,
            lambda0,
            regime_lambda: regime_lambda(self.order, k_n)?,
            ..self.clone()
        })
    }

    /// `key=value` lines for the plan.
    pub fn report_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sigma={}", self.sigma);
        let _ = writeln!(s, "j={}", self.j);
        let _ = writeln!(s, "side={}", self.side);
        let _ = writeln!(s, "N={}", self.n);
        let _ = writeln!(s, "depth={}", self.depth);
        let _ = writeln!(s, "p={}", self.order);
        let _ = writeln!(s, "K_N={}", self.k_n);
        let _ = writeln!(s, "lambda_tilde={}", self.lambda_tilde);
        let _ = writeln!(s, "regime_lambda={}", self.regime_lambda);
        let _ = writeln!(s, "T={}", self.threshold);
        let _ = writeln!(s, "lambda0={}", self.lambda0);
        if !self.in_regime() {
            let _ = writeln!(s, "# outside guaranteed regime");
        }
        s
    }
}

/// Result of thresholding the clean image in its best basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub threshold: f64,
    pub sigma: f64,
    pub k_n: u64,
    /// Penalized cost with the approximation coefficients counted in `dim M`.
    pub oracle_total: f64,
    /// The same model with the approximation left out of the penalty.
    pub oracle_total_without_approx: f64,
    /// `(1+ε)·oracle_total + κ·σ²/K_N`.
    pub theorem1_bound: f64,
    pub selection: Selection,
}

impl OracleReport {
    pub fn report_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "T={}", self.threshold);
        let _ = writeln!(s, "sigma={}", self.sigma);
        let _ = writeln!(s, "K_N={}", self.k_n);
        let _ = writeln!(s, "epsilon={ORACLE_EPSILON}");
        let _ = writeln!(s, "kappa={ORACLE_KAPPA}");
        let _ = writeln!(s, "kept_count={}", self.selection.cost.kept);
        let _ = writeln!(s, "residual_sq={}", self.selection.cost.residual_sq);
        let _ = writeln!(s, "oracle_total={}", self.oracle_total);
        let _ = writeln!(
            s,
            "oracle_total_without_approx={}",
            self.oracle_total_without_approx
        );
        let _ = writeln!(s, "theorem1_bound={}", self.theorem1_bound);
        s
    }
}

/// `kept_count`, `residual_sq` and `total_cost` of a selection.
pub fn selection_lines(sel: &Selection) -> String {
    format!(
        "kept_count={}\nresidual_sq={}\ntotal_cost={}\n",
        sel.cost.kept, sel.cost.residual_sq, sel.cost.total
    )
}

/// A configured estimator with its flow dictionary and filters.
#[derive(Debug)]
pub struct Estimator {
    cfg: EstimatorConfig,
    filt: FilterPair,
    dict: Dictionary,
    wavelets: Dictionary,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        let filt = FilterPair::daubechies(cfg.order())?;
        let dict = Dictionary::new(cfg.flow.clone())?;
        let wavelets = Dictionary::new(cfg.flow.wavelet_only())?;
        Ok(Estimator {
            cfg,
            filt,
            dict,
            wavelets,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn filter(&self) -> &FilterPair {
        &self.filt
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    /// Dyadic level, working side and threshold `λ̃·√|ln σ|·σ` for σ.
    pub fn plan_from_sigma(&self, sigma: f64, lambda_tilde: f64) -> Result<EstimatorPlan> {
        if !is_positive(sigma) {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        if sigma > 0.25 {
            return Err(Error::OutOfRegime { sigma });
        }
        if !is_positive(lambda_tilde) {
            return Err(Error::param(format!(
                "lambda must be positive, got {lambda_tilde}"
            )));
        }
        let mut j = -2i32;
        while sigma <= 2f64.powi(j - 1) {
            j -= 1;
        }
        let side = 1usize
            .checked_shl((-j) as u32)
            .filter(|&s| s <= MAX_SIDE)
            .ok_or_else(|| {
                Error::param(format!("sigma {sigma} needs a grid finer than {MAX_SIDE}"))
            })?;
        let seed = EstimatorPlan {
            sigma,
            j,
            side,
            n: 0,
            depth: 0,
            k_n: 0,
            lambda_tilde,
            threshold: lambda_tilde * sigma.ln().abs().sqrt() * sigma,
            lambda0: 0.0,
            regime_lambda: 0.0,
            order: self.cfg.order(),
        };
        seed.with_side(side, self)
    }

    fn decompose(&self, img: &Image, depth: usize) -> Result<WaveletPyramid> {
        dwt2(&to_coefficient_units(img), depth, &self.filt)
    }

    fn check_side(obs: &Image, plan: &EstimatorPlan) -> Result<()> {
        if obs.side() != plan.side {
            return Err(Error::input(format!(
                "observation side {} does not match plan side {}",
                obs.side(),
                plan.side
            )));
        }
        Ok(())
    }

    /// Best-basis thresholding of `obs` at `plan.threshold`.
    pub fn denoise(&self, obs: &Image, plan: &EstimatorPlan) -> Result<(Image, Selection)> {
        Self::check_side(obs, plan)?;
        let pyr = self.decompose(obs, plan.depth)?;
        let sel = best_geometry(&pyr, plan.threshold, &self.dict)?;
        let img = reconstruct(&sel, &pyr, &self.filt)?;
        Ok((from_coefficient_units(&img), sel))
    }

    /// Thresholding in the fixed wavelet basis.
    pub fn denoise_wavelet_baseline(
        &self,
        obs: &Image,
        threshold: f64,
    ) -> Result<(Image, Selection)> {
        let depth = self.cfg.depth_for(obs.side())?;
        let pyr = self.decompose(obs, depth)?;
        let geometry = QuadtreeGeometry::trivial(obs.side(), depth);
        let sel = evaluate_geometry(&pyr, &geometry, threshold, &self.wavelets)?;
        let img = reconstruct(&sel, &pyr, &self.filt)?;
        Ok((from_coefficient_units(&img), sel))
    }

    /// Best-basis thresholding of the clean image at `T`, with the
    /// oracle-inequality bound for noise level `sigma`.
    pub fn oracle_cost(&self, f: &Image, threshold: f64, sigma: f64) -> Result<OracleReport> {
        if !is_positive(sigma) {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        let depth = self.cfg.depth_for(f.side())?;
        let pyr = self.decompose(f, depth)?;
        let selection = best_geometry(&pyr, threshold, &self.dict)?;
        let k_n = self.dict.vector_count(f.side(), depth);
        let oracle_total = selection.cost.total;
        let approx_penalty = selection.approx_count as f64 * threshold * threshold;
        Ok(OracleReport {
            threshold,
            sigma,
            k_n,
            oracle_total,
            oracle_total_without_approx: oracle_total - approx_penalty,
            theorem1_bound: (1.0 + ORACLE_EPSILON) * oracle_total
                + ORACLE_KAPPA * sigma * sigma / k_n as f64,
            selection,
        })
    }

    /// The σ at which `T` is the smallest threshold the risk theorem allows
    /// for an image of this side: `T / (λ₀(K_N)·√ln K_N)`.
    pub fn sigma_for_threshold(&self, threshold: f64, side: usize) -> Result<f64> {
        let k = self.dict.vector_count(side, self.cfg.depth_for(side)?);
        Ok(threshold / (lambda0(k)? * (k as f64).ln().sqrt()))
    }
}

fn is_positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn check_same_side(f: &Image, g: &Image) -> Result<()> {
    if f.side() != g.side() {
        return Err(Error::input(format!(
            "image sides differ: {} vs {}",
            f.side(),
            g.side()
        )));
    }
    Ok(())
}

/// `‖f − F‖²` on the unit square: the mean of `(f − F)²` over pixels.
pub fn risk_of(f: &Image, estimate: &Image) -> Result<f64> {
    check_same_side(f, estimate)?;
    let sum: f64 = f
        .pixels()
        .iter()
        .zip(estimate.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / (f.side() * f.side()) as f64)
}

/// `−10·log₁₀(‖f − F‖² / ‖f‖∞²)`; `+∞` when `F = f`.
pub fn psnr(f: &Image, estimate: &Image) -> Result<f64> {
    check_same_side(f, estimate)?;
    let peak = f.max_abs();
    if peak == 0.0 {
        return Err(Error::Undefined("PSNR of an identically zero image".into()));
    }
    let risk = risk_of(f, estimate)?;
    if risk == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * (risk / (peak * peak)).log10())
}
