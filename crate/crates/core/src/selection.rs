//! Penalized costs, thresholding and the best-basis search.
//!
//! For a model `M` spanned by vectors of one orthonormal basis the
//! penalized cost is `‖x − P_M x‖² + dim(M)·T²`. Within a basis it is
//! minimised by keeping exactly the coefficients with `|c| > T`; across the
//! dictionary the cost is additive over subbands and over the leaves of each
//! quadtree, so the best basis is found per square by brute force over
//! flows and per subband by a bottom-up merge of the four children.

use std::ops::Add;
use std::sync::{Arc, OnceLock};

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    build_alpert, enumerate_flows, AlpertBasis, DyadicSquare, FlowConfig, GeometricFlow, QuadNode,
    QuadtreeGeometry, SubbandId, SubbandTree,
};
use crate::image::Image;
use crate::pyramid::{idwt2, FilterPair, Orientation, WaveletPyramid};

/// `residual_sq + kept · T²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizedCost {
    pub residual_sq: f64,
    pub kept: usize,
    pub threshold: f64,
    pub total: f64,
}

impl PenalizedCost {
    pub fn new(residual_sq: f64, kept: usize, threshold: f64) -> Self {
        PenalizedCost {
            residual_sq,
            kept,
            threshold,
            total: residual_sq + kept as f64 * threshold * threshold,
        }
    }

    pub fn zero(threshold: f64) -> Self {
        Self::new(0.0, 0, threshold)
    }
}

impl Add for PenalizedCost {
    type Output = PenalizedCost;

    fn add(self, rhs: PenalizedCost) -> PenalizedCost {
        debug_assert_eq!(self.threshold, rhs.threshold);
        PenalizedCost::new(
            self.residual_sq + rhs.residual_sq,
            self.kept + rhs.kept,
            self.threshold,
        )
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "threshold must be positive and finite, got {threshold}"
        )))
    }
}

/// Keeps `{ n : |c_n| > T }`, the minimiser of the penalized cost over all
/// subsets of one basis.
pub fn threshold_select(coeffs: &[f64], threshold: f64) -> Result<(Vec<usize>, PenalizedCost)> {
    check_threshold(threshold)?;
    if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
        return Err(Error::input(format!("non-finite coefficient {c}")));
    }
    let mut kept = Vec::new();
    let mut residual = 0.0;
    for (i, &c) in coeffs.iter().enumerate() {
        if c.abs() > threshold {
            kept.push(i);
        } else {
            residual += c * c;
        }
    }
    let n = kept.len();
    Ok((kept, PenalizedCost::new(residual, n, threshold)))
}

fn raw_cost(block: &[f64], threshold: f64) -> (f64, usize) {
    block.iter().fold((0.0, 0), |(res, kept), &c| {
        if c.abs() > threshold {
            (res, kept + 1)
        } else {
            (res + c * c, kept)
        }
    })
}

/// One representation offered on a square: raw coefficients or an Alpert
/// basis for a flow.
#[derive(Debug)]
pub struct Candidate {
    pub flow: Option<GeometricFlow>,
    pub basis: Option<AlpertBasis>,
}

/// The flow dictionary with lazily built, shared Alpert operators.
#[derive(Debug)]
pub struct Dictionary {
    cfg: FlowConfig,
    by_width: Vec<OnceLock<Arc<Vec<Candidate>>>>,
}

impl Dictionary {
    pub fn new(cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let by_width = (0..usize::BITS).map(|_| OnceLock::new()).collect();
        Ok(Dictionary { cfg, by_width })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    /// Candidates for squares of `width` (power of two), no-flow first.
    pub fn candidates(&self, width: usize) -> Arc<Vec<Candidate>> {
        let slot = &self.by_width[width.trailing_zeros() as usize];
        slot.get_or_init(|| {
            Arc::new(
                enumerate_flows(width, &self.cfg)
                    .into_iter()
                    .map(|flow| {
                        let basis = flow.as_ref().map(|f| {
                            build_alpert(width, f, self.cfg.order).expect("admissible flow")
                        });
                        Candidate { flow, basis }
                    })
                    .collect(),
            )
        })
        .clone()
    }

    /// Best representation of a row-major `width × width` block: index into
    /// [`Dictionary::candidates`] and its cost. Ties keep the earlier
    /// candidate, i.e. no-flow, then the lexicographically smallest flow.
    pub fn best_candidate(
        &self,
        block: &[f64],
        width: usize,
        threshold: f64,
    ) -> (usize, PenalizedCost) {
        let cands = self.candidates(width);
        let (res, kept) = raw_cost(block, threshold);
        let mut best = (0, PenalizedCost::new(res, kept, threshold));
        for (i, cand) in cands.iter().enumerate().skip(1) {
            let basis = cand.basis.as_ref().expect("flow candidates carry a basis");
            let (res, kept) = basis.threshold_cost(block, threshold);
            let cost = PenalizedCost::new(res, kept, threshold);
            if cost.total < best.1.total {
                best = (i, cost);
            }
        }
        best
    }

    /// Admissible leaf widths of a subband of side `size`, widest first.
    pub fn leaf_widths(&self, size: usize) -> Vec<usize> {
        if size < self.cfg.min_leaf {
            return vec![size];
        }
        let floor = match self.cfg.max_tree_depth {
            Some(d) => self
                .cfg
                .min_leaf
                .max(size >> d.min(usize::BITS as usize - 1)),
            None => self.cfg.min_leaf,
        };
        std::iter::successors(Some(size), |w| Some(w / 2))
            .take_while(|&w| w >= floor.max(1))
            .collect()
    }

    /// Number of distinct vectors `K_N` in the dictionary of a depth-`depth`
    /// pyramid of side `side`: the `side²` wavelet vectors plus every Alpert
    /// vector of every admissible square and flow. Alpert vectors that
    /// happen to coincide across flows are counted separately, so this is an
    /// upper bound.
    pub fn vector_count(&self, side: usize, depth: usize) -> u64 {
        let mut total = (side * side) as u64;
        for d in 1..=depth {
            let size = side >> d;
            for w in self.leaf_widths(size) {
                if self.cfg.admits_flows(w) {
                    let squares = ((size / w) * (size / w)) as u64;
                    total += 3 * squares * self.cfg.flows_per_square() as u64 * (w * w) as u64;
                }
            }
        }
        total
    }
}

fn block_of(band: &Array2<f64>, sq: &DyadicSquare) -> Vec<f64> {
    band.slice(s![sq.y..sq.y + sq.width, sq.x..sq.x + sq.width])
        .iter()
        .copied()
        .collect()
}

/// Best flow (or none) for one square, with its penalized cost.
pub fn square_cost(
    coeffs: ArrayView2<f64>,
    square: &DyadicSquare,
    threshold: f64,
    dict: &Dictionary,
) -> Result<(Option<GeometricFlow>, PenalizedCost)> {
    check_threshold(threshold)?;
    if coeffs.dim() != (square.width, square.width) {
        return Err(Error::input(format!(
            "square of width {} got a {:?} block",
            square.width,
            coeffs.dim()
        )));
    }
    let block: Vec<f64> = coeffs.iter().copied().collect();
    let (i, cost) = dict.best_candidate(&block, square.width, threshold);
    Ok((dict.candidates(square.width)[i].flow.clone(), cost))
}

/// A basis of the dictionary, the retained coefficients and the penalized
/// cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub geometry: QuadtreeGeometry,
    /// Kept indices per leaf, in [`QuadtreeGeometry::leaves`] order. Indices
    /// address the Alpert output of a flow leaf, or the row-major raw block.
    pub kept: Vec<Vec<usize>>,
    /// Approximation coefficients, always kept.
    pub approx_count: usize,
    pub cost: PenalizedCost,
    /// Alpert order used by flow leaves.
    pub order: usize,
}

impl Selection {
    /// Kept detail coefficients, excluding the approximation.
    pub fn detail_kept(&self) -> usize {
        self.kept.iter().map(Vec::len).sum()
    }

    /// Geometry records followed by `kept_count`, `residual_sq` and
    /// `total_cost`.
    pub fn summary_text(&self) -> String {
        format!(
            "{}kept_count={}\nresidual_sq={:e}\ntotal_cost={:e}\n",
            self.geometry.to_text(),
            self.cost.kept,
            self.cost.residual_sq,
            self.cost.total
        )
    }
}

/// Parses [`Selection::summary_text`]: the geometry and the `key=value`
/// fields.
pub fn parse_selection_summary(
    text: &str,
    cfg: &FlowConfig,
) -> Result<(QuadtreeGeometry, Vec<(String, String)>)> {
    let geometry = QuadtreeGeometry::parse(text, cfg)?;
    let fields = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    Ok((geometry, fields))
}

struct BandPlan {
    band: SubbandId,
    size: usize,
    widths: Vec<usize>,
}

fn band_plans(pyr: &WaveletPyramid, dict: &Dictionary) -> Vec<BandPlan> {
    (1..=pyr.depth())
        .flat_map(|d| {
            Orientation::ALL.map(|o| SubbandId {
                depth: d,
                orientation: o,
            })
        })
        .map(|band| {
            let size = pyr.side() >> band.depth;
            BandPlan {
                band,
                size,
                widths: dict.leaf_widths(size),
            }
        })
        .collect()
}

/// Per-square best candidates for one subband, indexed `[level][row-major
/// square index]`.
type LevelCosts = Vec<Vec<(usize, PenalizedCost)>>;

fn solve_band(
    plan: &BandPlan,
    coeffs: &Array2<f64>,
    threshold: f64,
    dict: &Dictionary,
) -> SubbandTree {
    let level_costs: LevelCosts = plan
        .widths
        .iter()
        .map(|&w| {
            let per_row = plan.size / w;
            (0..per_row * per_row)
                .into_par_iter()
                .map(|i| {
                    let sq = DyadicSquare {
                        band: plan.band,
                        x: (i % per_row) * w,
                        y: (i / per_row) * w,
                        width: w,
                    };
                    dict.best_candidate(&block_of(coeffs, &sq), w, threshold)
                })
                .collect()
        })
        .collect();

    // Bottom-up merge: optimal cost of every square at every level.
    let mut merged: Vec<Vec<PenalizedCost>> = vec![Vec::new(); plan.widths.len()];
    let mut split: Vec<Vec<bool>> = vec![Vec::new(); plan.widths.len()];
    for level in (0..plan.widths.len()).rev() {
        let per_row = plan.size / plan.widths[level];
        let own = &level_costs[level];
        let (costs, splits): (Vec<_>, Vec<_>) = (0..per_row * per_row)
            .map(|i| {
                if level + 1 == plan.widths.len() {
                    return (own[i].1, false);
                }
                let (r, c) = (i / per_row, i % per_row);
                let child_row = 2 * per_row;
                let kids = [
                    (2 * r, 2 * c),
                    (2 * r, 2 * c + 1),
                    (2 * r + 1, 2 * c),
                    (2 * r + 1, 2 * c + 1),
                ];
                let sum = kids
                    .iter()
                    .map(|&(kr, kc)| merged[level + 1][kr * child_row + kc])
                    .fold(PenalizedCost::zero(threshold), |a, b| a + b);
                if own[i].1.total <= sum.total {
                    (own[i].1, false)
                } else {
                    (sum, true)
                }
            })
            .unzip();
        merged[level] = costs;
        split[level] = splits;
    }

    fn build(
        sq: DyadicSquare,
        level: usize,
        plan: &BandPlan,
        split: &[Vec<bool>],
        level_costs: &LevelCosts,
        dict: &Dictionary,
    ) -> QuadNode {
        let per_row = plan.size / sq.width;
        let idx = (sq.y / sq.width) * per_row + sq.x / sq.width;
        if split[level][idx] {
            let children = sq
                .children()
                .map(|c| build(c, level + 1, plan, split, level_costs, dict));
            QuadNode::Split {
                square: sq,
                children: Box::new(children),
            }
        } else {
            let cand = level_costs[level][idx].0;
            QuadNode::Leaf {
                square: sq,
                flow: dict.candidates(sq.width)[cand].flow.clone(),
            }
        }
    }

    let root = build(
        DyadicSquare::root(plan.band, plan.size),
        0,
        plan,
        &split,
        &level_costs,
        dict,
    );
    SubbandTree {
        band: plan.band,
        size: plan.size,
        root,
    }
}

/// Minimises the penalized cost over every basis of the dictionary and
/// thresholds in the minimiser.
pub fn best_geometry(pyr: &WaveletPyramid, threshold: f64, dict: &Dictionary) -> Result<Selection> {
    check_threshold(threshold)?;
    let plans = band_plans(pyr, dict);
    let bands: Vec<SubbandTree> = plans
        .par_iter()
        .map(|plan| {
            solve_band(
                plan,
                pyr.subband(plan.band.depth, plan.band.orientation),
                threshold,
                dict,
            )
        })
        .collect();
    let geometry = QuadtreeGeometry {
        side: pyr.side(),
        bands,
    };
    evaluate_geometry(pyr, &geometry, threshold, dict)
}

/// Representation coefficients of one leaf.
fn leaf_coefficients(
    pyr: &WaveletPyramid,
    sq: &DyadicSquare,
    flow: Option<&GeometricFlow>,
    dict: &Dictionary,
) -> Result<Vec<f64>> {
    let block = block_of(pyr.subband(sq.band.depth, sq.band.orientation), sq);
    match flow {
        None => Ok(block),
        Some(f) => {
            let basis = leaf_basis(sq.width, f, dict)?;
            let mut out = vec![0.0; block.len()];
            basis.forward_into(&block, &mut out);
            Ok(out)
        }
    }
}

fn leaf_basis(width: usize, flow: &GeometricFlow, dict: &Dictionary) -> Result<AlpertBasis> {
    if dict.config().admits_flows(width) {
        if let Some(c) = dict
            .candidates(width)
            .iter()
            .find(|c| c.flow.as_ref() == Some(flow))
        {
            return Ok(c.basis.clone().expect("flow candidates carry a basis"));
        }
    }
    build_alpert(width, flow, dict.config().order)
}

fn check_shape(pyr: &WaveletPyramid, geometry: &QuadtreeGeometry) -> Result<()> {
    if geometry.side != pyr.side()
        || geometry.depth() != pyr.depth()
        || geometry.bands.len() != 3 * pyr.depth()
    {
        return Err(Error::input(format!(
            "geometry for side {} depth {} does not match pyramid side {} depth {}",
            geometry.side,
            geometry.depth(),
            pyr.side(),
            pyr.depth()
        )));
    }
    Ok(())
}

/// Thresholding at `T` in the basis described by `geometry`.
pub fn evaluate_geometry(
    pyr: &WaveletPyramid,
    geometry: &QuadtreeGeometry,
    threshold: f64,
    dict: &Dictionary,
) -> Result<Selection> {
    check_threshold(threshold)?;
    check_shape(pyr, geometry)?;
    geometry.validate(1)?;
    let leaves = geometry.leaves();
    let per_leaf: Vec<(Vec<usize>, PenalizedCost)> = leaves
        .par_iter()
        .map(|(sq, flow)| threshold_select(&leaf_coefficients(pyr, sq, *flow, dict)?, threshold))
        .collect::<Result<_>>()?;
    let approx_count = pyr.approx().len();
    let cost = per_leaf.iter().fold(
        PenalizedCost::new(0.0, approx_count, threshold),
        |acc, (_, c)| acc + *c,
    );
    Ok(Selection {
        geometry: geometry.clone(),
        kept: per_leaf.into_iter().map(|(k, _)| k).collect(),
        approx_count,
        cost,
        order: dict.config().order,
    })
}

/// Coefficients of the projection onto the selected model, as a pyramid.
pub fn project(sel: &Selection, pyr: &WaveletPyramid) -> Result<WaveletPyramid> {
    check_shape(pyr, &sel.geometry)?;
    let leaves = sel.geometry.leaves();
    if leaves.len() != sel.kept.len() {
        return Err(Error::input("selection has inconsistent kept sets"));
    }
    let mut out = WaveletPyramid::zeros(pyr.side(), pyr.depth())?;
    out.approx_mut().assign(pyr.approx());
    for ((sq, flow), kept) in leaves.iter().zip(&sel.kept) {
        let band = pyr.subband(sq.band.depth, sq.band.orientation);
        let block = block_of(band, sq);
        let n = block.len();
        if kept.iter().any(|&i| i >= n) {
            return Err(Error::input(format!("kept index out of range for {sq:?}")));
        }
        let restored = match flow {
            None => {
                let mut r = vec![0.0; n];
                for &i in kept {
                    r[i] = block[i];
                }
                r
            }
            Some(f) => {
                let basis = build_alpert(sq.width, f, sel.order)?;
                let mut coeffs = vec![0.0; n];
                basis.forward_into(&block, &mut coeffs);
                let mut masked = vec![0.0; n];
                for &i in kept {
                    masked[i] = coeffs[i];
                }
                let mut r = vec![0.0; n];
                basis.inverse_into(&masked, &mut r);
                r
            }
        };
        let target = out.subband_mut(sq.band.depth, sq.band.orientation);
        for (k, v) in restored.into_iter().enumerate() {
            target[[sq.y + k / sq.width, sq.x + k % sq.width]] = v;
        }
    }
    Ok(out)
}

/// Orthogonal projection of the pyramid's signal onto the selected model,
/// back in the pixel domain.
pub fn reconstruct(sel: &Selection, pyr: &WaveletPyramid, filt: &FilterPair) -> Result<Image> {
    idwt2(&project(sel, pyr)?, filt)
}
