use std::collections::HashMap;
use std::fmt::Write as _;

use super::flow::{FlowAxis, FlowConfig, GeometricFlow};
use crate::error::{Error, Result};
use crate::pyramid::Orientation;

/// A detail subband `(depth, orientation)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubbandId {
    pub depth: usize,
    pub orientation: Orientation,
}

/// A dyadic square inside a subband; `x` is the column and `y` the row of
/// its top-left site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicSquare {
    pub band: SubbandId,
    pub x: usize,
    pub y: usize,
    pub width: usize,
}

impl DyadicSquare {
    pub fn root(band: SubbandId, size: usize) -> Self {
        DyadicSquare {
            band,
            x: 0,
            y: 0,
            width: size,
        }
    }

    /// Top-left, top-right, bottom-left, bottom-right.
    pub fn children(&self) -> [DyadicSquare; 4] {
        let h = self.width / 2;
        let at = |dx, dy| DyadicSquare {
            x: self.x + dx,
            y: self.y + dy,
            width: h,
            ..*self
        };
        [at(0, 0), at(h, 0), at(0, h), at(h, h)]
    }

    pub fn area(&self) -> usize {
        self.width * self.width
    }

    pub fn contains(&self, other: &DyadicSquare) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.width <= self.x + self.width
            && other.y + other.width <= self.y + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadNode {
    Leaf {
        square: DyadicSquare,
        flow: Option<GeometricFlow>,
    },
    Split {
        square: DyadicSquare,
        children: Box<[QuadNode; 4]>,
    },
}

impl QuadNode {
    pub fn square(&self) -> &DyadicSquare {
        match self {
            QuadNode::Leaf { square, .. } | QuadNode::Split { square, .. } => square,
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<(&'a DyadicSquare, Option<&'a GeometricFlow>)>) {
        match self {
            QuadNode::Leaf { square, flow } => out.push((square, flow.as_ref())),
            QuadNode::Split { children, .. } => {
                for child in children.iter() {
                    child.collect_leaves(out);
                }
            }
        }
    }
}

/// The quadtree of one subband.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandTree {
    pub band: SubbandId,
    pub size: usize,
    pub root: QuadNode,
}

/// One quadtree per detail subband, ordered by depth then `H, V, D`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadtreeGeometry {
    pub side: usize,
    pub bands: Vec<SubbandTree>,
}

impl QuadtreeGeometry {
    /// Every subband of a depth-`depth` pyramid as a single no-flow leaf.
    pub fn trivial(side: usize, depth: usize) -> Self {
        let bands = (1..=depth)
            .flat_map(|d| {
                Orientation::ALL.map(|o| SubbandId {
                    depth: d,
                    orientation: o,
                })
            })
            .map(|band| {
                let size = side >> band.depth;
                SubbandTree {
                    band,
                    size,
                    root: QuadNode::Leaf {
                        square: DyadicSquare::root(band, size),
                        flow: None,
                    },
                }
            })
            .collect();
        QuadtreeGeometry { side, bands }
    }

    pub fn depth(&self) -> usize {
        self.bands.iter().map(|b| b.band.depth).max().unwrap_or(0)
    }

    /// Leaves of all subbands in pre-order.
    pub fn leaves(&self) -> Vec<(&DyadicSquare, Option<&GeometricFlow>)> {
        let mut out = Vec::new();
        for band in &self.bands {
            band.root.collect_leaves(&mut out);
        }
        out
    }

    /// Checks that every subband is tiled exactly by its leaves and that
    /// leaves respect the minimum width (subbands narrower than the minimum
    /// are a single leaf).
    pub fn validate(&self, min_leaf: usize) -> Result<()> {
        for band in &self.bands {
            let mut leaves = Vec::new();
            band.root.collect_leaves(&mut leaves);
            let root = DyadicSquare::root(band.band, band.size);
            let mut area = 0;
            for (sq, flow) in &leaves {
                if !root.contains(sq) || sq.band != band.band {
                    return Err(Error::input(format!("leaf {sq:?} outside its subband")));
                }
                if sq.width < min_leaf.min(band.size) {
                    return Err(Error::input(format!(
                        "leaf {sq:?} narrower than {min_leaf}"
                    )));
                }
                if flow.is_some() && sq.width < 2 {
                    return Err(Error::input(format!("flow on width-1 leaf {sq:?}")));
                }
                area += sq.area();
            }
            if area != root.area() {
                return Err(Error::input(format!(
                    "leaves of {:?} do not tile it",
                    band.band
                )));
            }
            let mut owner = vec![false; root.area()];
            for (sq, _) in &leaves {
                for r in sq.y..sq.y + sq.width {
                    for c in sq.x..sq.x + sq.width {
                        let cell = &mut owner[r * band.size + c];
                        if *cell {
                            return Err(Error::input(format!(
                                "overlapping leaves in {:?}",
                                band.band
                            )));
                        }
                        *cell = true;
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical text form: one `d,o,x,y,w,axis[,k0,k1,…]` record per leaf
    /// in pre-order, `axis` being `-` for a raw (no-flow) leaf.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (sq, flow) in self.leaves() {
            let _ = write!(
                out,
                "{},{},{},{},{},",
                sq.band.depth,
                sq.band.orientation.symbol(),
                sq.x,
                sq.y,
                sq.width
            );
            match flow {
                Some(f) => {
                    let _ = write!(out, "{f}");
                }
                None => out.push('-'),
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`QuadtreeGeometry::to_text`] output. Blank lines, `#`
    /// comments and `key=value` lines are skipped; the quantizer of the
    /// flows comes from `cfg`.
    pub fn parse(text: &str, cfg: &FlowConfig) -> Result<Self> {
        type Leaves = HashMap<(usize, usize, usize), Option<GeometricFlow>>;
        let mut by_band: HashMap<SubbandId, Leaves> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.contains('=') {
                continue;
            }
            let bad = |what: &str| Error::input(format!("line {}: {what}: {line:?}", lineno + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 6 {
                return Err(bad("expected d,o,x,y,w,axis[,coeffs]"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            let depth = num(fields[0])?;
            let orientation =
                Orientation::from_symbol(fields[1]).ok_or_else(|| bad("bad orientation"))?;
            let (x, y, width) = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
            if depth == 0
                || width == 0
                || !width.is_power_of_two()
                || x % width != 0
                || y % width != 0
            {
                return Err(bad("not a dyadic square"));
            }
            let flow = match fields[5] {
                "-" if fields.len() == 6 => None,
                axis @ ("H" | "V") => {
                    let coeffs = fields[6..]
                        .iter()
                        .map(|s| s.parse::<i32>().map_err(|_| bad("bad coefficient")))
                        .collect::<Result<Vec<_>>>()?;
                    let axis = if axis == "H" {
                        FlowAxis::Horizontal
                    } else {
                        FlowAxis::Vertical
                    };
                    Some(GeometricFlow::new(axis, coeffs, cfg).map_err(|e| bad(&e.to_string()))?)
                }
                _ => return Err(bad("bad flow")),
            };
            let band = SubbandId { depth, orientation };
            if by_band
                .entry(band)
                .or_default()
                .insert((x, y, width), flow)
                .is_some()
            {
                return Err(bad("duplicate leaf"));
            }
        }
        let depth = by_band
            .keys()
            .map(|b| b.depth)
            .max()
            .ok_or_else(|| Error::input("no leaves"))?;
        // Every subband tiles its square, so the depth-1 extent fixes the side.
        let extent = |band: &SubbandId| {
            by_band[band]
                .keys()
                .map(|&(x, _, w)| x + w)
                .max()
                .unwrap_or(0)
        };
        let first = SubbandId {
            depth: 1,
            orientation: Orientation::H,
        };
        if !by_band.contains_key(&first) {
            return Err(Error::input("missing depth-1 subband"));
        }
        let side = 2 * extent(&first);
        let mut bands = Vec::new();
        for d in 1..=depth {
            for o in Orientation::ALL {
                let band = SubbandId {
                    depth: d,
                    orientation: o,
                };
                let leaves = by_band
                    .get_mut(&band)
                    .ok_or_else(|| Error::input(format!("missing subband {d},{}", o.symbol())))?;
                let size = side >> d;
                let root = build_node(DyadicSquare::root(band, size), leaves)?;
                if !leaves.is_empty() {
                    return Err(Error::input(format!(
                        "overlapping or stray leaves in {d},{}",
                        o.symbol()
                    )));
                }
                bands.push(SubbandTree { band, size, root });
            }
        }
        if by_band.len() != 3 * depth {
            return Err(Error::input("unexpected subband"));
        }
        let geometry = QuadtreeGeometry { side, bands };
        geometry.validate(1)?;
        Ok(geometry)
    }
}

fn build_node(
    square: DyadicSquare,
    leaves: &mut HashMap<(usize, usize, usize), Option<GeometricFlow>>,
) -> Result<QuadNode> {
    if let Some(flow) = leaves.remove(&(square.x, square.y, square.width)) {
        return Ok(QuadNode::Leaf { square, flow });
    }
    if square.width == 1 {
        return Err(Error::input(format!(
            "site {},{} is not covered",
            square.x, square.y
        )));
    }
    let [a, b, c, d] = square.children();
    Ok(QuadNode::Split {
        square,
        children: Box::new([
            build_node(a, leaves)?,
            build_node(b, leaves)?,
            build_node(c, leaves)?,
            build_node(d, leaves)?,
        ]),
    })
}
