//! Orthogonal Alpert recombination of a square of wavelet coefficients.
//!
//! The sites of a `w × w` square are grouped into the discrete lines of a
//! flow. Along each line a multiscale Alpert basis is built: the line is
//! split dyadically, and at every merge the span of the two children's
//! coarse spaces is split into polynomials of degree `< p` in the line
//! coordinate (the new coarse space) and its orthogonal complement (details
//! with `p` vanishing moments). The per-line bases together form an
//! orthogonal operator on the square.

use std::collections::BTreeMap;

use super::flow::{FlowAxis, GeometricFlow};
use crate::error::{Error, Result};

/// Orthonormal basis of one flow line.
#[derive(Debug, Clone)]
struct LineBasis {
    /// Flat site indices `row * w + col`, ordered by line coordinate.
    sites: Vec<usize>,
    /// Row-major `m × m`; row `i` is basis vector `i` over `sites`.
    rows: Vec<f64>,
    /// Leading rows that span polynomials of degree `< p` on the line.
    coarse: usize,
    /// First output coefficient of this line.
    offset: usize,
}

/// An orthogonal `w² × w²` change of coordinates adapted to a flow.
#[derive(Debug, Clone)]
pub struct AlpertBasis {
    width: usize,
    order: usize,
    flow: GeometricFlow,
    lines: Vec<LineBasis>,
    degenerate: bool,
}

impl AlpertBasis {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn flow(&self) -> &GeometricFlow {
        &self.flow
    }

    /// True if some line fell back to the identity because its positions
    /// could not separate polynomials.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// Output index ranges of each line, in output order.
    pub fn line_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.lines
            .iter()
            .map(|l| l.offset..l.offset + l.sites.len())
    }

    /// Site indices (`row * w + col`) of each line, ordered along the line.
    pub fn line_sites(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.lines.iter().map(|l| l.sites.as_slice())
    }

    /// `true` at output indices holding detail (vanishing-moment)
    /// coefficients, `false` at the per-line coarse coefficients.
    pub fn detail_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.width * self.width];
        for line in &self.lines {
            for i in line.coarse..line.sites.len() {
                mask[line.offset + i] = true;
            }
        }
        mask
    }

    /// Dense operator `G` with `forward(x) = G x`, row-major.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.width * self.width;
        let mut g = vec![0.0; n * n];
        for line in &self.lines {
            let m = line.sites.len();
            for i in 0..m {
                for (j, &s) in line.sites.iter().enumerate() {
                    g[(line.offset + i) * n + s] = line.rows[i * m + j];
                }
            }
        }
        g
    }

    /// Forward transform of a row-major `w × w` block into `out`.
    pub fn forward_into(&self, block: &[f64], out: &mut [f64]) {
        for line in &self.lines {
            let m = line.sites.len();
            for (i, row) in line.rows.chunks_exact(m).enumerate() {
                out[line.offset + i] = row
                    .iter()
                    .zip(&line.sites)
                    .map(|(g, &s)| g * block[s])
                    .sum();
            }
        }
    }

    /// Penalized thresholding cost `(Σ_{|c|≤T} c², #{|c|>T})` of the
    /// transformed block, without materialising it.
    pub fn threshold_cost(&self, block: &[f64], threshold: f64) -> (f64, usize) {
        let mut residual = 0.0;
        let mut kept = 0;
        for line in &self.lines {
            let m = line.sites.len();
            for row in line.rows.chunks_exact(m) {
                let c: f64 = row
                    .iter()
                    .zip(&line.sites)
                    .map(|(g, &s)| g * block[s])
                    .sum();
                if c.abs() > threshold {
                    kept += 1;
                } else {
                    residual += c * c;
                }
            }
        }
        (residual, kept)
    }

    /// Inverse of [`AlpertBasis::forward_into`].
    pub fn inverse_into(&self, coeffs: &[f64], block: &mut [f64]) {
        for line in &self.lines {
            let m = line.sites.len();
            for (j, &s) in line.sites.iter().enumerate() {
                block[s] = (0..m)
                    .map(|i| line.rows[i * m + j] * coeffs[line.offset + i])
                    .sum();
            }
        }
    }
}

/// Builds the Alpert basis of a `width × width` square for `flow` with `order`
/// vanishing moments along the flow lines.
pub fn build_alpert(width: usize, flow: &GeometricFlow, order: usize) -> Result<AlpertBasis> {
    if width < 2 || !width.is_power_of_two() {
        return Err(Error::param(format!(
            "Alpert width must be a power of two ≥ 2, got {width}"
        )));
    }
    if order == 0 {
        return Err(Error::param("Alpert order must be ≥ 1"));
    }
    let poly = flow.polynomial(width);
    let centre = (width as f64 - 1.0) / 2.0;
    // line key -> (line coordinate, site)
    let mut groups: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
    for a in 0..width {
        let shift = GeometricFlow::displacement(&poly, a as f64 - centre).round() as i64;
        for b in 0..width {
            // `a` runs along the line, `b` across it.
            let (row, col) = match flow.axis {
                FlowAxis::Vertical => (b, a),
                FlowAxis::Horizontal => (a, b),
            };
            groups
                .entry(b as i64 - shift)
                .or_default()
                .push((a, row * width + col));
        }
    }

    let mut lines = Vec::with_capacity(groups.len());
    let mut offset = 0;
    let mut degenerate = false;
    for (_, mut members) in groups {
        members.sort_unstable();
        let positions: Vec<f64> = members.iter().map(|&(a, _)| a as f64).collect();
        let (rows, coarse, flat) = line_basis(&positions, order);
        degenerate |= flat;
        let m = members.len();
        lines.push(LineBasis {
            sites: members.into_iter().map(|(_, s)| s).collect(),
            rows,
            coarse,
            offset,
        });
        offset += m;
    }
    debug_assert_eq!(offset, width * width);
    Ok(AlpertBasis {
        width,
        order,
        flow: flow.clone(),
        lines,
        degenerate,
    })
}

/// Forward transform of a `w × w` row-major block.
pub fn alpert_forward(block: &[f64], basis: &AlpertBasis) -> Result<Vec<f64>> {
    let n = basis.width * basis.width;
    if block.len() != n {
        return Err(Error::input(format!(
            "expected {n} coefficients, got {}",
            block.len()
        )));
    }
    let mut out = vec![0.0; n];
    basis.forward_into(block, &mut out);
    Ok(out)
}

/// Inverse transform back to a `w × w` row-major block.
pub fn alpert_inverse(coeffs: &[f64], basis: &AlpertBasis) -> Result<Vec<f64>> {
    let n = basis.width * basis.width;
    if coeffs.len() != n {
        return Err(Error::input(format!(
            "expected {n} coefficients, got {}",
            coeffs.len()
        )));
    }
    let mut out = vec![0.0; n];
    basis.inverse_into(coeffs, &mut out);
    Ok(out)
}

/// Orthonormal multiscale basis over sample positions, coarse vectors first
/// then details from coarse to fine. Returns `(rows, coarse count,
/// degenerate)`; positions that are all equal fall back to the identity.
pub(crate) fn line_basis(positions: &[f64], order: usize) -> (Vec<f64>, usize, bool) {
    let m = positions.len();
    if m > 1 && positions.iter().all(|&x| x == positions[0]) {
        let mut rows = vec![0.0; m * m];
        for i in 0..m {
            rows[i * m + i] = 1.0;
        }
        return (rows, m, true);
    }
    let (coarse, details, short) = segment(positions, order);
    let n_coarse = coarse.len();
    let rows = coarse.into_iter().chain(details).flatten().collect();
    (rows, n_coarse, short)
}

type Vectors = Vec<Vec<f64>>;

fn segment(pos: &[f64], order: usize) -> (Vectors, Vectors, bool) {
    let m = pos.len();
    let (span, child_details, child_short) = if m <= order {
        let identity: Vectors = (0..m)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = 1.0;
                e
            })
            .collect();
        (identity, Vec::new(), false)
    } else {
        let mid = m.div_ceil(2);
        let (cl, dl, sl) = segment(&pos[..mid], order);
        let (cr, dr, sr) = segment(&pos[mid..], order);
        let left = |v: Vec<f64>| {
            let mut e = v;
            e.resize(m, 0.0);
            e
        };
        let right = |v: Vec<f64>| {
            let mut e = vec![0.0; mid];
            e.extend(v);
            e
        };
        let span: Vectors = cl
            .into_iter()
            .map(left)
            .chain(cr.into_iter().map(right))
            .collect();
        let details = dl
            .into_iter()
            .map(left)
            .chain(dr.into_iter().map(right))
            .collect();
        (span, details, sl || sr)
    };
    let (coarse, mut details, short) = split_polynomials(&span, pos, order);
    details.extend(child_details);
    (coarse, details, short || child_short)
}

/// Splits the span of the orthonormal vectors `span` into the restriction of
/// polynomials of degree `< order` and its orthogonal complement.
fn split_polynomials(span: &[Vec<f64>], pos: &[f64], order: usize) -> (Vectors, Vectors, bool) {
    let r = span.len();
    let m = pos.len();
    let centre = pos.iter().sum::<f64>() / m as f64;
    let scale = pos
        .iter()
        .map(|x| (x - centre).abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let wanted = order.min(m);

    // Work in the r-dimensional coordinates of `span`.
    let mut basis: Vectors = Vec::with_capacity(r);
    for k in 0..wanted {
        let mono: Vec<f64> = pos
            .iter()
            .map(|x| ((x - centre) / scale).powi(k as i32))
            .collect();
        let a: Vec<f64> = span.iter().map(|s| dot(s, &mono)).collect();
        let norm_a = dot(&a, &a).sqrt();
        let v = orthogonalize(a, &basis);
        let nv = dot(&v, &v).sqrt();
        if norm_a > 0.0 && nv > 1e-10 * norm_a {
            basis.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    let poly_rank = basis.len();

    // Complete greedily with the canonical vector of largest residual.
    while basis.len() < r {
        let best = (0..r)
            .map(|i| (i, 1.0 - basis.iter().map(|b| b[i] * b[i]).sum::<f64>()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap();
        let mut e = vec![0.0; r];
        e[best] = 1.0;
        let v = orthogonalize(e, &basis);
        let nv = dot(&v, &v).sqrt();
        basis.push(v.into_iter().map(|x| x / nv).collect());
    }

    let lift = |coords: &Vec<f64>| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (c, s) in coords.iter().zip(span) {
            for (o, x) in out.iter_mut().zip(s) {
                *o += c * x;
            }
        }
        out
    };
    let coarse = basis[..poly_rank].iter().map(lift).collect();
    let details = basis[poly_rank..].iter().map(lift).collect();
    (coarse, details, poly_rank < wanted)
}

/// Two passes of modified Gram–Schmidt against an orthonormal set.
fn orthogonalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Vec<f64> {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, &v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
