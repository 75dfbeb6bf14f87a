//! Synthetic geometrically regular images and Monte Carlo experiments.
//!
//! A scene is a set of edge curves `y = γ(x)` over the unit square and one
//! smooth function per region, where the region of a point is the bitmask of
//! the edges it lies below (`y > γ_i(x)`, rows grow downwards). Images are
//! rasterized by supersampling and optionally blurred by a compactly
//! supported separable kernel before downsampling.

use std::f64::consts::PI;
use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimator::{psnr, risk_of, Estimator};
use crate::image::Image;
use crate::rng::substream;

/// Samples per pixel along each axis.
pub const SUPERSAMPLE: usize = 4;

/// Edge curve `y = γ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    /// `Σ c_i x^i`.
    Polynomial { coeffs: Vec<f64> },
    /// `offset + amplitude·sin(2π·frequency·x + phase)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
}

impl Curve {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Curve::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Curve::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (2.0 * PI * frequency * x + phase).sin(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Curve::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * x + i as f64 * c),
            Curve::Sinusoid {
                amplitude,
                frequency,
                phase,
                ..
            } => 2.0 * PI * frequency * amplitude * (2.0 * PI * frequency * x + phase).cos(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Curve::Polynomial { coeffs } => coeffs.iter().all(|c| c.is_finite()),
            Curve::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => [offset, amplitude, frequency, phase]
                .iter()
                .all(|v| v.is_finite()),
        }
    }
}

/// `amplitude·cos(2π(fx·x + fy·y) + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub fx: f64,
    pub fy: f64,
    pub phase: f64,
}

/// Smooth part of one region: a constant plus a trigonometric polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub mean: f64,
    pub terms: Vec<TrigTerm>,
}

impl Region {
    pub fn constant(mean: f64) -> Self {
        Region {
            mean,
            terms: Vec::new(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * (2.0 * PI * (t.fx * x + t.fy * y) + t.phase).cos())
            .sum::<f64>()
            + self.mean
    }
}

/// Kernel `(1 − (t/s)²)^m` on `[−s, s]` in each axis, `m = ⌈α⌉ + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurSpec {
    /// Support half-width in unit-square coordinates, in `(0, 1/4]`.
    pub support: f64,
}

impl BlurSpec {
    /// Normalized 1-D taps for a grid of spacing `h`.
    pub fn taps(&self, alpha: f64, h: f64) -> Vec<f64> {
        let power = alpha.ceil() as i32 + 1;
        let reach = (self.support / h).floor() as i64;
        let raw: Vec<f64> = (-reach..=reach)
            .map(|i| {
                let t = i as f64 * h / self.support;
                (1.0 - t * t).max(0.0).powi(power)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

/// A piecewise smooth image with regular edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Target Hölder exponent.
    pub alpha: f64,
    pub edges: Vec<Curve>,
    /// One entry per edge bitmask, `2^edges.len()` in total.
    pub regions: Vec<Region>,
    pub blur: Option<BlurSpec>,
}

/// Minimum `|γ_i' − γ_j'|` accepted at a crossing when `α > 1`.
const MIN_CROSSING_ANGLE: f64 = 1e-3;

impl SceneSpec {
    pub fn constant(value: f64) -> Self {
        SceneSpec {
            alpha: 2.0,
            edges: Vec::new(),
            regions: vec![Region::constant(value)],
            blur: None,
        }
    }

    /// Straight horizontal edge at height `y`; `above` for rows above it.
    pub fn horizon(y: f64, above: f64, below: f64) -> Self {
        SceneSpec {
            alpha: 2.0,
            edges: vec![Curve::Polynomial { coeffs: vec![y] }],
            regions: vec![Region::constant(above), Region::constant(below)],
            blur: None,
        }
    }

    /// A smooth curved edge between two smoothly varying regions, with a
    /// jump of about 2.4 across the edge.
    pub fn curved_edge(alpha: f64) -> Self {
        let wave = |a, fx, fy, phase| TrigTerm {
            amplitude: a,
            fx,
            fy,
            phase,
        };
        SceneSpec {
            alpha,
            edges: vec![Curve::Sinusoid {
                offset: 0.5,
                amplitude: 0.12,
                frequency: 1.0,
                phase: 0.4,
            }],
            regions: vec![
                Region {
                    mean: 0.8,
                    terms: vec![wave(0.4, 1.0, 0.0, 0.0)],
                },
                Region {
                    mean: 3.2,
                    terms: vec![wave(0.4, 0.0, 1.0, 1.0)],
                },
            ],
            blur: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Spec(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.edges.len() > 8 {
            return Err(Error::Spec("at most 8 edges".into()));
        }
        if self.regions.len() != 1 << self.edges.len() {
            return Err(Error::Spec(format!(
                "{} edges need {} regions, got {}",
                self.edges.len(),
                1 << self.edges.len(),
                self.regions.len()
            )));
        }
        if self.edges.iter().any(|c| !c.is_finite()) {
            return Err(Error::Spec("non-finite edge parameter".into()));
        }
        let finite_region = |r: &Region| {
            r.mean.is_finite()
                && r.terms.iter().all(|t| {
                    [t.amplitude, t.fx, t.fy, t.phase]
                        .iter()
                        .all(|v| v.is_finite())
                })
        };
        if !self.regions.iter().all(finite_region) {
            return Err(Error::Spec("non-finite region parameter".into()));
        }
        if let Some(b) = self.blur {
            if !(b.support > 0.0 && b.support <= 0.25) {
                return Err(Error::Spec(format!(
                    "blur support {} outside (0, 1/4]",
                    b.support
                )));
            }
        }
        if self.alpha > 1.0 {
            self.check_crossings()?;
        }
        Ok(())
    }

    /// Every crossing of two edges inside `[0, 1]` must be transversal.
    fn check_crossings(&self) -> Result<()> {
        const SAMPLES: usize = 4096;
        for (i, a) in self.edges.iter().enumerate() {
            for b in &self.edges[i + 1..] {
                let gap = |x: f64| a.eval(x) - b.eval(x);
                let slope_gap = |x: f64| (a.derivative(x) - b.derivative(x)).abs();
                let xs: Vec<f64> = (0..=SAMPLES).map(|k| k as f64 / SAMPLES as f64).collect();
                for w in xs.windows(2) {
                    let (mut lo, mut hi) = (w[0], w[1]);
                    let (glo, ghi) = (gap(lo), gap(hi));
                    let touches = glo == 0.0 || glo.signum() != ghi.signum();
                    let near = glo.abs().min(ghi.abs()) < 1e-9;
                    if !(touches || near) {
                        continue;
                    }
                    if touches && glo != 0.0 {
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if gap(mid).signum() == glo.signum() {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                    }
                    let x = if glo.abs() <= ghi.abs() { lo } else { hi };
                    if slope_gap(x) < MIN_CROSSING_ANGLE {
                        return Err(Error::Spec(format!(
                            "edges meet tangentially near x = {x:.6}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Value of the unblurred scene at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mask =
            self.edges.iter().enumerate().fold(
                0usize,
                |m, (i, c)| if y > c.eval(x) { m | 1 << i } else { m },
            );
        self.regions[mask].eval(x, y)
    }
}

/// Pixel averages of the scene on a `side × side` grid.
pub fn render_scene(spec: &SceneSpec, side: usize) -> Result<Image> {
    spec.validate()?;
    if !side.is_power_of_two() || side < 2 {
        return Err(Error::param(format!(
            "side {side} must be a power of two >= 2"
        )));
    }
    let fine = side * SUPERSAMPLE;
    let h = 1.0 / fine as f64;
    let taps = spec
        .blur
        .map(|b| b.taps(spec.alpha, h))
        .unwrap_or_else(|| vec![1.0]);
    let pad = taps.len() / 2;
    let n = fine + 2 * pad;
    let coord = |i: usize| (i as f64 - pad as f64 + 0.5) * h;
    let mut grid = Array2::from_shape_fn((n, n), |(r, c)| spec.eval(coord(c), coord(r)));
    if taps.len() > 1 {
        grid = convolve_valid(&grid, &taps, Axis(0));
        grid = convolve_valid(&grid, &taps, Axis(1));
    }
    let norm = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    Image::from_fn(side, |r, c| {
        let rows = r * SUPERSAMPLE..(r + 1) * SUPERSAMPLE;
        let cols = c * SUPERSAMPLE..(c + 1) * SUPERSAMPLE;
        rows.flat_map(|i| cols.clone().map(move |j| (i, j)))
            .map(|(i, j)| grid[[i, j]])
            .sum::<f64>()
            / norm
    })
}

/// Valid-mode 1-D convolution along `axis` with a symmetric kernel.
fn convolve_valid(a: &Array2<f64>, taps: &[f64], axis: Axis) -> Array2<f64> {
    let k = taps.len();
    let (rows, cols) = a.dim();
    let shape = if axis == Axis(0) {
        (rows - k + 1, cols)
    } else {
        (rows, cols - k + 1)
    };
    Array2::from_shape_fn(shape, |(r, c)| {
        taps.iter()
            .enumerate()
            .map(|(t, w)| {
                if axis == Axis(0) {
                    w * a[[r + t, c]]
                } else {
                    w * a[[r, c + t]]
                }
            })
            .sum()
    })
}

/// `f` plus i.i.d. Gaussian pixel noise of standard deviation `σ·side`,
/// drawn from `rng`.
pub fn observe_with<R: Rng>(f: &Image, sigma: f64, rng: &mut R) -> Result<Image> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::param(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let scale = sigma * f.side() as f64;
    Image::new(
        f.pixels()
            .mapv(|v| v + scale * rng.sample::<f64, _>(StandardNormal)),
    )
}

/// [`observe_with`] on stream 0 of `seed`.
pub fn observe(f: &Image, sigma: f64, seed: u64) -> Result<Image> {
    observe_with(f, sigma, &mut substream(seed, 0))
}

/// Least-squares fit of `ln mse` on `ln(σ²·|ln σ|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// 95 % confidence interval of the slope.
    pub ci: (f64, f64),
}

/// Regresses `ln mse` on `ln(σ²·|ln σ|)` over `(σ, mse)` rows.
pub fn fit_slope(rows: &[(f64, f64)]) -> Result<SlopeFit> {
    if rows.len() < 3 {
        return Err(Error::param(format!(
            "slope fit needs at least 3 rows, got {}",
            rows.len()
        )));
    }
    for (i, &(s, m)) in rows.iter().enumerate() {
        if !(s > 0.0 && s < 1.0 && m.is_finite() && m > 0.0) {
            return Err(Error::param(format!(
                "row ({s}, {m}) needs 0 < sigma < 1 and mse > 0"
            )));
        }
        if rows[..i].iter().any(|&(t, _)| t == s) {
            return Err(Error::param(format!(
                "degenerate design: sigma {s} repeated"
            )));
        }
    }
    let xs: Vec<f64> = rows
        .iter()
        .map(|&(s, _)| (s * s * s.ln().abs()).ln())
        .collect();
    let ys: Vec<f64> = rows.iter().map(|&(_, m)| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::param("degenerate design: no spread in sigma"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = n - 2.0;
    let stderr = if dof > 0.0 {
        (sse / dof / sxx).sqrt()
    } else {
        0.0
    };
    let q = StudentsT::new(0.0, 1.0, dof)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::NAN);
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        ci: (slope - q * stderr, slope + q * stderr),
    })
}

/// `(mse, psnr, kept)` of one trial.
type TrialStats = (f64, f64, f64);

/// Aggregated Monte Carlo risk at one σ.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub sigma: f64,
    pub side: usize,
    pub trials: usize,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub psnr_mean: f64,
    pub kept_mean: f64,
    /// Per-trial squared errors, in trial order.
    pub mse: Vec<f64>,
}

impl RiskRow {
    fn from_trials(sigma: f64, side: usize, samples: &[TrialStats]) -> Self {
        let n = samples.len() as f64;
        let mse: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let mean = mse.iter().sum::<f64>() / n;
        let stderr = if samples.len() > 1 {
            (mse.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        RiskRow {
            sigma,
            side,
            trials: samples.len(),
            mse_mean: mean,
            mse_stderr: stderr,
            psnr_mean: samples.iter().map(|s| s.1).sum::<f64>() / n,
            kept_mean: samples.iter().map(|s| s.2).sum::<f64>() / n,
            mse,
        }
    }

    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            sig10(self.sigma),
            self.trials,
            sig10(self.mse_mean),
            sig10(self.mse_stderr),
            sig10(self.psnr_mean),
            sig10(self.kept_mean)
        )
    }
}

/// Decimal with 10 significant digits.
pub fn sig10(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.9e}")
    }
}

/// Risk of the estimator over a grid of noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub lambda_tilde: f64,
    pub rows: Vec<RiskRow>,
    /// Wavelet-thresholding rows on the same noise realizations.
    pub baseline: Option<Vec<RiskRow>>,
    pub fit: SlopeFit,
}

pub const RISK_CSV_HEADER: &str = "sigma,trials,mse_mean,mse_stderr,psnr_mean,kept_mean";

impl RiskReport {
    /// Header, one row per σ, optional `# baseline,...` rows, then
    /// `# slope=<v> stderr=<v>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{RISK_CSV_HEADER}");
        for row in &self.rows {
            let _ = writeln!(s, "{}", row.csv());
        }
        for row in self.baseline.iter().flatten() {
            let _ = writeln!(s, "# baseline,{}", row.csv());
        }
        let _ = writeln!(
            s,
            "# slope={} stderr={}",
            sig10(self.fit.slope),
            sig10(self.fit.stderr)
        );
        s
    }
}

/// Options for [`risk_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiskOptions {
    pub trials: usize,
    pub lambda_tilde: f64,
    pub seed: u64,
    pub compare_baseline: bool,
}

/// Denoises `trials` observations of the scene at each σ, each rendered at
/// the plan's working side. Trial `t` draws its noise from stream `t` of the
/// seed at every σ, and the baseline sees the same realization.
pub fn risk_curve(
    spec: &SceneSpec,
    sigmas: &[f64],
    opts: &RiskOptions,
    est: &Estimator,
) -> Result<RiskReport> {
    if opts.trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    if sigmas.len() < 4 {
        return Err(Error::param(format!(
            "a risk curve needs at least 4 sigma values, got {}",
            sigmas.len()
        )));
    }
    let mut rows = Vec::with_capacity(sigmas.len());
    let mut baseline = Vec::new();
    for &sigma in sigmas {
        let plan = est.plan_from_sigma(sigma, opts.lambda_tilde)?;
        let f = render_scene(spec, plan.side)?;
        let samples: Vec<(TrialStats, Option<TrialStats>)> = (0..opts.trials as u64)
            .into_par_iter()
            .map(|t| {
                let obs = observe_with(&f, sigma, &mut substream(opts.seed, t))?;
                let (est_img, sel) = est.denoise(&obs, &plan)?;
                let ours = (
                    risk_of(&f, &est_img)?,
                    psnr_or_nan(&f, &est_img),
                    sel.cost.kept as f64,
                );
                let base = if opts.compare_baseline {
                    let (b, bsel) = est.denoise_wavelet_baseline(&obs, plan.threshold)?;
                    Some((risk_of(&f, &b)?, psnr_or_nan(&f, &b), bsel.cost.kept as f64))
                } else {
                    None
                };
                Ok((ours, base))
            })
            .collect::<Result<_>>()?;
        let ours: Vec<_> = samples.iter().map(|s| s.0).collect();
        rows.push(RiskRow::from_trials(sigma, plan.side, &ours));
        if opts.compare_baseline {
            let base: Vec<_> = samples.iter().filter_map(|s| s.1).collect();
            baseline.push(RiskRow::from_trials(sigma, plan.side, &base));
        }
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.sigma, r.mse_mean)).collect();
    let fit = fit_slope(&points)?;
    Ok(RiskReport {
        lambda_tilde: opts.lambda_tilde,
        rows,
        baseline: opts.compare_baseline.then_some(baseline),
        fit,
    })
}

fn psnr_or_nan(f: &Image, estimate: &Image) -> f64 {
    psnr(f, estimate).unwrap_or(f64::NAN)
}

/// Outcome of the concentration experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub k: usize,
    pub u: f64,
    pub trials: usize,
    /// Every nonempty coordinate subset was checked.
    pub exhaustive: bool,
    pub dims: Vec<usize>,
    /// Trials in which some subspace of the given dimension broke the bound.
    pub violations_by_dim: Vec<usize>,
    /// Trials in which any subspace broke the bound.
    pub violations: usize,
}

impl ConcentrationReport {
    /// `2/K·e^{−u}`.
    pub fn bound(&self) -> f64 {
        2.0 / self.k as f64 * (-self.u).exp()
    }

    pub fn frequency(&self) -> f64 {
        self.violations as f64 / self.trials as f64
    }

    /// Binomial standard error of a frequency with success probability
    /// [`ConcentrationReport::bound`].
    pub fn binomial_stderr(&self) -> f64 {
        let p = self.bound().min(1.0);
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "K={}", self.k);
        let _ = writeln!(s, "u={}", self.u);
        let _ = writeln!(s, "trials={}", self.trials);
        let _ = writeln!(s, "exhaustive={}", self.exhaustive);
        let _ = writeln!(s, "dim,radius,violations,frequency");
        for (d, v) in self.dims.iter().zip(&self.violations_by_dim) {
            let _ = writeln!(
                s,
                "{d},{},{v},{}",
                sig10(concentration_radius(self.k, *d, self.u)),
                sig10(*v as f64 / self.trials as f64)
            );
        }
        let _ = writeln!(s, "violations={}", self.violations);
        let _ = writeln!(s, "frequency={}", sig10(self.frequency()));
        let _ = writeln!(s, "bound={}", sig10(self.bound()));
        let _ = writeln!(s, "binomial_stderr={}", sig10(self.binomial_stderr()));
        s
    }
}

/// `√d + √(4·ln K·d + 2u)`.
pub fn concentration_radius(k: usize, d: usize, u: f64) -> f64 {
    let d = d as f64;
    d.sqrt() + (4.0 * (k as f64).ln() * d + 2.0 * u).sqrt()
}

/// Largest `K` for which every coordinate subset is enumerated.
pub const EXHAUSTIVE_MAX_K: usize = 12;

/// Draws standard Gaussian vectors in dimension `K` and counts trials in
/// which the projection on some coordinate subspace of a listed dimension
/// exceeds the concentration radius. For `K ≤ 12` all `2^K − 1` subsets are
/// checked and `dims` only selects what is tabulated per dimension.
pub fn concentration_experiment(
    k: usize,
    dims: &[usize],
    u: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if k < 2 {
        return Err(Error::param(format!("K must be at least 2, got {k}")));
    }
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    if !(u.is_finite() && u >= 0.0) {
        return Err(Error::param(format!("u must be nonnegative, got {u}")));
    }
    if dims.is_empty() || dims.iter().any(|&d| d == 0 || d > k) {
        return Err(Error::param(format!(
            "dims must be nonempty and within 1..={k}"
        )));
    }
    let exhaustive = k <= EXHAUSTIVE_MAX_K;
    let radius: Vec<f64> = (0..=k).map(|d| concentration_radius(k, d, u)).collect();
    let per_trial: Vec<(Vec<bool>, bool)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, t);
            let sq: Vec<f64> = (0..k)
                .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                .collect();
            // worst[d]: largest projection norm over d-dimensional subsets.
            let mut worst = vec![0.0f64; k + 1];
            if exhaustive {
                for mask in 1u32..1 << k {
                    let d = mask.count_ones() as usize;
                    let norm = (0..k)
                        .filter(|i| mask >> i & 1 == 1)
                        .map(|i| sq[i])
                        .sum::<f64>()
                        .sqrt();
                    worst[d] = worst[d].max(norm);
                }
            } else {
                let mut sorted = sq.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let mut acc = 0.0;
                for d in 1..=k {
                    acc += sorted[d - 1];
                    worst[d] = acc.sqrt();
                }
            }
            let by_dim: Vec<bool> = dims.iter().map(|&d| worst[d] > radius[d]).collect();
            let any = if exhaustive {
                (1..=k).any(|d| worst[d] > radius[d])
            } else {
                by_dim.iter().any(|&v| v)
            };
            (by_dim, any)
        })
        .collect();
    let violations_by_dim = (0..dims.len())
        .map(|i| per_trial.iter().filter(|(b, _)| b[i]).count())
        .collect();
    Ok(ConcentrationReport {
        k,
        u,
        trials,
        exhaustive,
        dims: dims.to_vec(),
        violations_by_dim,
        violations: per_trial.iter().filter(|(_, a)| *a).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EstimatorConfig;

    #[test]
    fn horizon_render() {
        let img = render_scene(&SceneSpec::horizon(0.5, 0.0, 1.0), 16).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(img.get(r, c), if r < 8 { 0.0 } else { 1.0 });
            }
        }
        let off = render_scene(&SceneSpec::horizon(0.53, 0.0, 1.0), 16).unwrap();
        let transition: Vec<usize> = (0..16)
            .filter(|&r| off.get(r, 0) > 0.0 && off.get(r, 0) < 1.0)
            .collect();
        assert_eq!(transition, vec![8]);
    }

    fn max_gradient(img: &Image) -> f64 {
        let n = img.side();
        let mut m = 0.0f64;
        for r in 0..n {
            for c in 0..n - 1 {
                m = m.max((img.get(r, c + 1) - img.get(r, c)).abs());
                m = m.max((img.get(c + 1, r) - img.get(c, r)).abs());
            }
        }
        m
    }

    #[test]
    fn blur_reduces_the_gradient() {
        let sharp = SceneSpec::horizon(0.5, 0.0, 1.0);
        let blurred = SceneSpec {
            blur: Some(BlurSpec {
                support: 4.0 / 32.0,
            }),
            ..sharp.clone()
        };
        let a = render_scene(&sharp, 32).unwrap();
        let b = render_scene(&blurred, 32).unwrap();
        assert!(max_gradient(&b) < max_gradient(&a));
    }

    #[test]
    fn blur_taps_are_normalized_and_compact() {
        let b = BlurSpec { support: 0.1 };
        let taps = b.taps(2.0, 0.01);
        assert_eq!(taps.len(), 21);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(taps[0], 0.0);
        assert!(taps.windows(2).take(10).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn constant_scene_is_constant() {
        let img = render_scene(&SceneSpec::constant(0.3), 8).unwrap();
        assert!(img.pixels().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let blurred = SceneSpec {
            blur: Some(BlurSpec { support: 0.2 }),
            ..SceneSpec::constant(0.3)
        };
        let img = render_scene(&blurred, 8).unwrap();
        assert!(img.pixels().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn smooth_scene_has_bounded_second_differences() {
        let mut spec = SceneSpec::curved_edge(2.0);
        spec.edges.clear();
        spec.regions.truncate(1);
        let mut scaled = Vec::new();
        for side in [16usize, 32, 64] {
            let img = render_scene(&spec, side).unwrap();
            let h2 = (side * side) as f64;
            let mut m = 0.0f64;
            for r in 0..side {
                for c in 1..side - 1 {
                    m = m.max(
                        (img.get(r, c + 1) - 2.0 * img.get(r, c) + img.get(r, c - 1)).abs() * h2,
                    );
                }
            }
            scaled.push(m);
        }
        // Second derivative of 0.4·cos(2πx) is at most 1.6π² ≈ 15.8.
        assert!(scaled.iter().all(|&m| m < 17.0), "{scaled:?}");
    }

    #[test]
    fn spec_validation() {
        let crossing = SceneSpec {
            alpha: 2.0,
            edges: vec![
                Curve::Polynomial {
                    coeffs: vec![0.2, 0.6],
                },
                Curve::Polynomial {
                    coeffs: vec![0.8, -0.6],
                },
            ],
            regions: (0..4).map(|i| Region::constant(i as f64)).collect(),
            blur: None,
        };
        assert!(crossing.validate().is_ok());
        let tangent = SceneSpec {
            edges: vec![
                Curve::Polynomial {
                    coeffs: vec![0.5, 0.0, 1.0],
                },
                Curve::Polynomial {
                    coeffs: vec![0.5, 0.0, -1.0],
                },
            ],
            ..crossing.clone()
        };
        assert!(matches!(render_scene(&tangent, 8), Err(Error::Spec(_))));
        assert!(SceneSpec {
            alpha: 1.0,
            ..tangent
        }
        .validate()
        .is_ok());
        let missing = SceneSpec {
            regions: vec![Region::constant(0.0)],
            ..crossing.clone()
        };
        assert!(missing.validate().is_err());
        let wide_blur = SceneSpec {
            blur: Some(BlurSpec { support: 0.3 }),
            ..crossing
        };
        assert!(wide_blur.validate().is_err());
    }

    #[test]
    fn curve_derivatives() {
        let p = Curve::Polynomial {
            coeffs: vec![1.0, -2.0, 3.0],
        };
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative(2.0), 10.0);
        let s = Curve::Sinusoid {
            offset: 0.5,
            amplitude: 0.1,
            frequency: 2.0,
            phase: 0.3,
        };
        let h = 1e-6;
        let fd = (s.eval(0.4 + h) - s.eval(0.4 - h)) / (2.0 * h);
        assert!((fd - s.derivative(0.4)).abs() < 1e-6);
    }

    #[test]
    fn observe_without_noise_is_identity() {
        let f = render_scene(&SceneSpec::curved_edge(2.0), 16).unwrap();
        assert_eq!(observe(&f, 0.0, 1).unwrap(), f);
        assert_eq!(observe(&f, 0.1, 5).unwrap(), observe(&f, 0.1, 5).unwrap());
        assert_ne!(observe(&f, 0.1, 5).unwrap(), observe(&f, 0.1, 6).unwrap());
        assert!(matches!(observe(&f, -0.1, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn observe_noise_level_and_whiteness() {
        let side = 256;
        let sigma = 0.01;
        let f = Image::zeros(side).unwrap();
        let obs = observe(&f, sigma, 42).unwrap();
        let n = (side * side) as f64;
        let target = sigma * side as f64;
        let var = obs.pixels().iter().map(|v| v * v).sum::<f64>() / n;
        // Var of the sample variance of n normals is 2σ⁴/n.
        let se = (2.0 / n).sqrt() * target * target;
        assert!((var - target * target).abs() < 3.0 * se);
        let flat: Vec<f64> = obs.pixels().iter().copied().collect();
        let lag1 = flat.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0) / var;
        assert!(lag1.abs() < 3.0 / (n - 1.0).sqrt());
    }

    fn line(slope: f64, intercept: f64) -> Vec<(f64, f64)> {
        [0.25, 0.125, 0.0625, 0.03125]
            .iter()
            .map(|&s: &f64| (s, (intercept + slope * (s * s * s.ln().abs()).ln()).exp()))
            .collect()
    }

    #[test]
    fn fit_slope_recovers_exact_lines() {
        let fit = fit_slope(&line(2.0 / 3.0, 0.7)).unwrap();
        assert!((fit.slope - 2.0 / 3.0).abs() < 1e-12);
        assert!((fit.intercept - 0.7).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
        let shifted: Vec<_> = line(2.0 / 3.0, 0.7)
            .into_iter()
            .map(|(s, m)| (s, 5.0 * m))
            .collect();
        let moved = fit_slope(&shifted).unwrap();
        assert!((moved.slope - fit.slope).abs() < 1e-12);
        assert!((moved.intercept - fit.intercept - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_slope_interval_covers_noisy_slope() {
        let mut rows = line(0.6, 0.0);
        rows[1].1 *= 1.1;
        rows[2].1 *= 0.9;
        let fit = fit_slope(&rows).unwrap();
        assert!(fit.stderr > 0.0);
        assert!(fit.ci.0 < fit.slope && fit.slope < fit.ci.1);
    }

    #[test]
    fn fit_slope_rejects_degenerate_designs() {
        assert!(fit_slope(&[(0.1, 1.0), (0.1, 2.0), (0.2, 3.0)]).is_err());
        assert!(fit_slope(&[(0.1, 1.0), (0.2, 2.0)]).is_err());
        assert!(fit_slope(&[(0.1, 1.0), (0.2, 0.0), (0.05, 3.0)]).is_err());
    }

    #[test]
    fn sig10_formatting() {
        assert_eq!(sig10(0.0), "0");
        assert_eq!(sig10(1.0), "1");
        assert_eq!(sig10(2.0 / 3.0), "0.6666666667");
        assert_eq!(sig10(123456.789012345), "123456.789");
        assert_eq!(sig10(1.5e-9), "1.500000000e-9");
        assert_eq!(sig10(0.0004), "0.0004");
        for v in [0.123456789012_f64, 3.0e12, -7.25e-3] {
            let back: f64 = sig10(v).parse().unwrap();
            assert!((back - v).abs() <= 1e-9 * v.abs());
        }
    }

    #[test]
    fn concentration_full_dimension_never_violates() {
        let r = concentration_experiment(16, &[16], 0.0, 500, 3).unwrap();
        assert_eq!(r.violations_by_dim, vec![0]);
    }

    #[test]
    fn concentration_u10_never_violates() {
        let r = concentration_experiment(64, &[1, 2, 4, 8], 10.0, 2000, 4).unwrap();
        assert_eq!(r.violations, 0);
        assert!((r.bound() - 2.0 / 64.0 * (-10f64).exp()).abs() < 1e-20);
    }

    #[test]
    fn concentration_exhaustive_matches_sorted_worst_case() {
        // Exhaustive enumeration and the sorted shortcut agree per dimension.
        let small = concentration_experiment(8, &[1, 2, 3], 0.0, 300, 9).unwrap();
        assert!(small.exhaustive);
        let radius = |d| concentration_radius(8, d, 0.0);
        let mut expect = [0usize; 3];
        for t in 0..300u64 {
            let mut rng = substream(9, t);
            let mut sq: Vec<f64> = (0..8)
                .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                .collect();
            sq.sort_by(|a, b| b.total_cmp(a));
            for (i, d) in [1usize, 2, 3].iter().enumerate() {
                if sq[..*d].iter().sum::<f64>().sqrt() > radius(*d) {
                    expect[i] += 1;
                }
            }
        }
        assert_eq!(small.violations_by_dim, expect.to_vec());
    }

    #[test]
    fn concentration_argument_checks() {
        assert!(concentration_experiment(4, &[5], 0.0, 10, 1).is_err());
        assert!(concentration_experiment(4, &[0], 0.0, 10, 1).is_err());
        assert!(concentration_experiment(4, &[1], 0.0, 0, 1).is_err());
        assert!(concentration_experiment(1, &[1], 0.0, 10, 1).is_err());
        assert!(concentration_experiment(4, &[1], -1.0, 10, 1).is_err());
        assert!(
            concentration_experiment(4, &[1], 0.0, 10, 1)
                .unwrap()
                .exhaustive
        );
        assert!(
            !concentration_experiment(13, &[1], 0.0, 10, 1)
                .unwrap()
                .exhaustive
        );
    }

    #[test]
    fn risk_curve_is_reproducible_and_single_trial_has_zero_stderr() {
        let est = Estimator::new(EstimatorConfig::for_order(2)).unwrap();
        let opts = RiskOptions {
            trials: 1,
            lambda_tilde: 1.0,
            seed: 7,
            compare_baseline: true,
        };
        let sigmas = [0.25, 0.125, 0.0625, 0.03125];
        let a = risk_curve(&SceneSpec::curved_edge(2.0), &sigmas, &opts, &est).unwrap();
        let b = risk_curve(&SceneSpec::curved_edge(2.0), &sigmas, &opts, &est).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.rows.iter().all(|r| r.mse_stderr == 0.0 && r.trials == 1));
        assert_eq!(a.baseline.as_ref().unwrap().len(), 4);
        let csv = a.to_csv();
        assert!(csv.starts_with(RISK_CSV_HEADER));
        let footer = csv.lines().last().unwrap();
        assert!(footer.starts_with("# slope="));
        assert!(risk_curve(&SceneSpec::curved_edge(2.0), &sigmas[..3], &opts, &est).is_err());
    }
}
