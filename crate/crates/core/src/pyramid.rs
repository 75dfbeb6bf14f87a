//! Periodic orthonormal wavelet transforms.
//!
//! A 2D transform of depth `D` splits a `side × side` image into a coarse
//! approximation grid of side `side / 2^D` and, for every depth
//! `d ∈ 1..=D`, three detail subbands of side `side / 2^d`. Depth 1 is the
//! finest scale. Boundaries are periodic, which keeps every level exactly
//! orthogonal for any filter length.
//!
//! With an image of side `2^{-j}` the pyramid spans the space `V_j` of
//! dimension `N = side²`.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};

use crate::error::{Error, Result};
use crate::image::Image;

/// Daubechies scaling filters with 1 to 8 vanishing moments, normalised so
/// that the taps sum to √2.
#[allow(clippy::excessive_precision)]
const DAUBECHIES: [&[f64]; 8] = [
    &[
        std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ],
    &[
        0.482962913144534143375,
        0.836516303737807905575,
        0.224143868042013381026,
        -0.129409522551260381174,
    ],
    &[
        0.332670552950082615999,
        0.806891509311092576494,
        0.459877502118491570095,
        -0.135011020010254588696,
        -0.0854412738820266616928,
        0.0352262918857095366027,
    ],
    &[
        0.230377813308896500863,
        0.71484657055291564709,
        0.630880767929858907882,
        -0.0279837694168598542114,
        -0.18703481171909308408,
        0.0308413818355607636272,
        0.0328830116668851997354,
        -0.0105974017850690321049,
    ],
    &[
        0.160102397974192914481,
        0.60382926979718967054,
        0.724308528437772927728,
        0.138428145901320731505,
        -0.242294887066382031863,
        -0.0322448695846383746485,
        0.0775714938400457135231,
        -0.00624149021279827427419,
        -0.0125807519990819994685,
        0.003335725285473771278,
    ],
    &[
        0.111540743350109463621,
        0.494623890398453085677,
        0.751133908021095350679,
        0.315250351709197629086,
        -0.226264693965439820076,
        -0.129766867567261935562,
        0.0975016055873230491023,
        0.0275228655303057286255,
        -0.0315820393174860295651,
        0.000553842201161496139252,
        0.00477725751094551063964,
        -0.00107730108530847956485,
    ],
    &[
        0.07785205408500917902,
        0.396539319481917306539,
        0.729132090846235119917,
        0.469782287405193122472,
        -0.143906003928564975405,
        -0.224036184993874982638,
        0.0713092192668302647509,
        0.0806126091510830719129,
        -0.0380299369350144135796,
        -0.0165745416306668806541,
        0.012550998556099840613,
        0.000429577972921366521132,
        -0.00180164070404749091527,
        0.000353713799974520248446,
    ],
    &[
        0.054415842243104009955,
        0.312871590914299970659,
        0.675630736297289806808,
        0.585354683654206712771,
        -0.0158291052563493056674,
        -0.284015542961546926516,
        0.000472484573913282770361,
        0.128747426620478458857,
        -0.0173693010018075461696,
        -0.0440882539307947515068,
        0.0139810279173982816487,
        0.00874609404740577671638,
        -0.00487035299345157431042,
        -0.000391740373376947046298,
        0.00067544940645056936637,
        -0.000117476784124769533731,
    ],
];

/// Subband orientation.
///
/// `H` carries the wavelet along rows (the horizontal `x` direction) and the
/// scaling function along columns; `V` is the transpose and `D` is wavelet in
/// both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    H,
    V,
    D,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::H, Orientation::V, Orientation::D];

    pub fn index(self) -> usize {
        match self {
            Orientation::H => 0,
            Orientation::V => 1,
            Orientation::D => 2,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Orientation::H => 'H',
            Orientation::V => 'V',
            Orientation::D => 'D',
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "H" => Some(Orientation::H),
            "V" => Some(Orientation::V),
            "D" => Some(Orientation::D),
            _ => None,
        }
    }
}

/// An orthogonal conjugate-mirror filter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    vanishing_moments: usize,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl FilterPair {
    /// The Daubechies pair with `p` vanishing moments (`p = 1` is Haar).
    pub fn daubechies(p: usize) -> Result<Self> {
        let lowpass = DAUBECHIES
            .get(p.wrapping_sub(1))
            .ok_or_else(|| {
                Error::param(format!(
                    "vanishing moments must be in 1..={}, got {p}",
                    DAUBECHIES.len()
                ))
            })?
            .to_vec();
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[len - 1 - k]
            })
            .collect();
        Ok(FilterPair {
            vanishing_moments: p,
            lowpass,
            highpass,
        })
    }

    pub fn vanishing_moments(&self) -> usize {
        self.vanishing_moments
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }

    /// One periodic analysis step: `src` (even length `n`) into `n/2`
    /// approximation and `n/2` detail coefficients.
    fn analyze(&self, src: ArrayView1<f64>, lo: &mut [f64], hi: &mut [f64]) {
        let n = src.len();
        for i in 0..n / 2 {
            let (mut a, mut d) = (0.0, 0.0);
            for (k, (h, g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                let x = src[(2 * i + k) % n];
                a += h * x;
                d += g * x;
            }
            lo[i] = a;
            hi[i] = d;
        }
    }

    /// Adjoint of [`FilterPair::analyze`], which is also its inverse.
    fn synthesize(&self, lo: &[f64], hi: &[f64], mut dst: ArrayViewMut1<f64>) {
        let n = dst.len();
        dst.fill(0.0);
        for i in 0..n / 2 {
            for (k, (h, g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                dst[(2 * i + k) % n] += h * lo[i] + g * hi[i];
            }
        }
    }

    /// Transform each lane along `axis` in place: the first half of every
    /// lane receives lowpass output, the second half highpass output.
    fn analyze_axis(&self, data: &mut Array2<f64>, n: usize, axis: Axis) {
        let half = n / 2;
        let mut lo = vec![0.0; half];
        let mut hi = vec![0.0; half];
        let mut block = data.slice_mut(ndarray::s![..n, ..n]);
        for mut lane in block.lanes_mut(axis) {
            self.analyze(lane.view(), &mut lo, &mut hi);
            for i in 0..half {
                lane[i] = lo[i];
                lane[half + i] = hi[i];
            }
        }
    }

    fn synthesize_axis(&self, data: &mut Array2<f64>, n: usize, axis: Axis) {
        let half = n / 2;
        let mut lo = vec![0.0; half];
        let mut hi = vec![0.0; half];
        let mut block = data.slice_mut(ndarray::s![..n, ..n]);
        for mut lane in block.lanes_mut(axis) {
            for i in 0..half {
                lo[i] = lane[i];
                hi[i] = lane[half + i];
            }
            self.synthesize(&lo, &hi, lane.view_mut());
        }
    }
}

/// Orthonormal wavelet coefficients of a square image.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    side: usize,
    approx: Array2<f64>,
    /// `details[d - 1][o]` is the subband at depth `d`, orientation `o`.
    details: Vec<[Array2<f64>; 3]>,
}

impl WaveletPyramid {
    /// An all-zero pyramid with the layout of `dwt2` at the given depth.
    pub fn zeros(side: usize, depth: usize) -> Result<Self> {
        check_layout(side, depth)?;
        let details = (1..=depth)
            .map(|d| {
                let n = side >> d;
                [
                    Array2::zeros((n, n)),
                    Array2::zeros((n, n)),
                    Array2::zeros((n, n)),
                ]
            })
            .collect();
        let n = side >> depth;
        Ok(WaveletPyramid {
            side,
            approx: Array2::zeros((n, n)),
            details,
        })
    }

    pub fn from_parts(
        side: usize,
        approx: Array2<f64>,
        details: Vec<[Array2<f64>; 3]>,
    ) -> Result<Self> {
        let depth = details.len();
        check_layout(side, depth)?;
        let n = side >> depth;
        if approx.dim() != (n, n) {
            return Err(Error::input(format!(
                "approximation must be {n}×{n}, got {:?}",
                approx.dim()
            )));
        }
        for (i, bands) in details.iter().enumerate() {
            let n = side >> (i + 1);
            if bands.iter().any(|b| b.dim() != (n, n)) {
                return Err(Error::input(format!(
                    "subbands at depth {} must be {n}×{n}",
                    i + 1
                )));
            }
        }
        Ok(WaveletPyramid {
            side,
            approx,
            details,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn depth(&self) -> usize {
        self.details.len()
    }

    pub fn approx(&self) -> &Array2<f64> {
        &self.approx
    }

    pub fn approx_mut(&mut self) -> &mut Array2<f64> {
        &mut self.approx
    }

    /// Subband at `depth ∈ 1..=self.depth()`.
    pub fn subband(&self, depth: usize, o: Orientation) -> &Array2<f64> {
        &self.details[depth - 1][o.index()]
    }

    pub fn subband_mut(&mut self, depth: usize, o: Orientation) -> &mut Array2<f64> {
        &mut self.details[depth - 1][o.index()]
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    /// Sum of squared coefficients.
    pub fn norm_sq(&self) -> f64 {
        self.coefficients().map(|c| c * c).sum()
    }

    /// All coefficients in canonical order: approximation, then subbands
    /// from the coarsest depth to the finest, `H, V, D` within a depth,
    /// each in row-major order.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.approx.iter().copied().chain(
            self.details
                .iter()
                .rev()
                .flat_map(|bands| bands.iter().flat_map(|b| b.iter().copied())),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.coefficients().collect()
    }

    /// Inverse of [`WaveletPyramid::to_flat`].
    pub fn from_flat(side: usize, depth: usize, values: &[f64]) -> Result<Self> {
        let mut pyr = Self::zeros(side, depth)?;
        if values.len() != side * side {
            return Err(Error::input(format!(
                "expected {} coefficients, got {}",
                side * side,
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for v in pyr.approx.iter_mut() {
            *v = it.next().unwrap();
        }
        for bands in pyr.details.iter_mut().rev() {
            for band in bands.iter_mut() {
                for v in band.iter_mut() {
                    *v = it.next().unwrap();
                }
            }
        }
        Ok(pyr)
    }
}

fn check_layout(side: usize, depth: usize) -> Result<()> {
    if side < 2 || !side.is_power_of_two() {
        return Err(Error::input(format!(
            "side must be a power of two ≥ 2, got {side}"
        )));
    }
    if depth == 0 {
        return Err(Error::param("pyramid depth must be ≥ 1"));
    }
    if side >> depth == 0 || depth >= usize::BITS as usize {
        return Err(Error::param(format!(
            "depth {depth} is too large for side {side}"
        )));
    }
    Ok(())
}

/// Largest admissible depth for an image side (down to a 1×1 approximation).
pub fn full_depth(side: usize) -> usize {
    side.trailing_zeros() as usize
}

/// Forward 2D transform.
pub fn dwt2(img: &Image, depth: usize, filt: &FilterPair) -> Result<WaveletPyramid> {
    let side = img.side();
    check_layout(side, depth)?;
    let mut work = img.pixels().clone();
    let mut details = Vec::with_capacity(depth);
    let mut n = side;
    for _ in 0..depth {
        // Rows first: lanes along Axis(1) are rows.
        filt.analyze_axis(&mut work, n, Axis(1));
        filt.analyze_axis(&mut work, n, Axis(0));
        let h = n / 2;
        let band =
            |r0: usize, c0: usize| work.slice(ndarray::s![r0..r0 + h, c0..c0 + h]).to_owned();
        // Top-right quadrant: highpass along rows, lowpass along columns.
        details.push([band(0, h), band(h, 0), band(h, h)]);
        n = h;
    }
    let approx = work.slice(ndarray::s![..n, ..n]).to_owned();
    Ok(WaveletPyramid {
        side,
        approx,
        details,
    })
}

/// Inverse 2D transform.
pub fn idwt2(pyr: &WaveletPyramid, filt: &FilterPair) -> Result<Image> {
    // Re-validates shapes for pyramids assembled by hand.
    let pyr_checked =
        WaveletPyramid::from_parts(pyr.side, pyr.approx.clone(), pyr.details.clone())?;
    let side = pyr_checked.side;
    let mut work = Array2::zeros((side, side));
    let mut n = side >> pyr_checked.depth();
    work.slice_mut(ndarray::s![..n, ..n])
        .assign(&pyr_checked.approx);
    for bands in pyr_checked.details.iter().rev() {
        let h = n;
        n *= 2;
        work.slice_mut(ndarray::s![0..h, h..n]).assign(&bands[0]);
        work.slice_mut(ndarray::s![h..n, 0..h]).assign(&bands[1]);
        work.slice_mut(ndarray::s![h..n, h..n]).assign(&bands[2]);
        filt.synthesize_axis(&mut work, n, Axis(0));
        filt.synthesize_axis(&mut work, n, Axis(1));
    }
    Image::new(work)
}
