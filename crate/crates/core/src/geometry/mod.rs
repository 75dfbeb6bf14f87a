//! Dyadic partitions of detail subbands, flows, and the Alpert transform.

mod alpert;
mod flow;
mod quadtree;

pub use alpert::{alpert_forward, alpert_inverse, build_alpert, AlpertBasis};
pub use flow::{enumerate_flows, FlowAxis, FlowConfig, GeometricFlow};
pub use quadtree::{DyadicSquare, QuadNode, QuadtreeGeometry, SubbandId, SubbandTree};
