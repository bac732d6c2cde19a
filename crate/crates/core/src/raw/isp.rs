//! Fixed analytic ISP mapping packed raw to sRGB. Deterministic and
//! parameter-free, so it contributes no trainable weights to the loss.

use rvid_tensor::{Graph, Scalar, Tensor, Var};

use crate::error::Result;

use super::PackedFrame;

/// Channel gains applied to (R, G, B) after green averaging.
pub const ISP_GAINS: [f64; 3] = [2.0, 1.0, 1.6];
/// Display gamma exponent.
pub const ISP_GAMMA: f64 = 1.0 / 2.2;

/// Differentiable ISP over a normalized packed map `[4,H,W]` in the graph:
/// green channels averaged, channel gains, clip to [0,1], gamma. Returns a
/// `[3,H,W]` sRGB map. Subgradients are zero outside the clip range.
pub fn toy_isp_graph<T: Scalar>(g: &mut Graph<T>, packed: Var) -> Result<Var> {
    let r = g.slice(packed, 0, 0, 1)?;
    let gr = g.slice(packed, 0, 1, 1)?;
    let gb = g.slice(packed, 0, 2, 1)?;
    let b = g.slice(packed, 0, 3, 1)?;
    let green = g.add(gr, gb)?;
    let green = g.scale(green, T::from_f64(0.5 * ISP_GAINS[1]))?;
    let red = g.scale(r, T::from_f64(ISP_GAINS[0]))?;
    let blue = g.scale(b, T::from_f64(ISP_GAINS[2]))?;
    let rgb = g.concat(0, &[red, green, blue])?;
    let clipped = g.clamp01(rgb)?;
    Ok(g.pow_const(clipped, ISP_GAMMA)?)
}

/// ISP applied to a packed frame in digital numbers; normalizes by the
/// signal span first. Returns sRGB in [0,1].
pub fn toy_isp(p: &PackedFrame) -> Result<Tensor<f32>> {
    let normalized = super::normalize_packed(p);
    let mut g: Graph<f32> = Graph::inference();
    let x = g.constant(normalized);
    let srgb = toy_isp_graph(&mut g, x)?;
    Ok(g.value(srgb).clone())
}
