use rand::{Rng, RngCore};

use super::Side;
use crate::dispatch::Mode;
use crate::netmodel::NodeId;

/// What an agent knows when it prices its order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderContext {
    pub agent: u32,
    pub side: Side,
    pub node: NodeId,
    /// Nodal price signal at the agent's node, $/MWh.
    pub dlmp: f64,
    pub fit: f64,
    pub mode: Mode,
    pub interval: usize,
}

/// Chooses order prices. Implementations must draw randomness only from
/// `rng` so that runs are reproducible from the scenario seed.
pub trait BiddingStrategy: Send + Sync {
    fn price(&self, ctx: &OrderContext, rng: &mut dyn RngCore) -> f64;
}

/// Prices drawn uniformly from `[floor, DLMP]`. The floor is the feed-in
/// tariff in normal operation and `FIT + share·(DLMP − FIT)` when islanded.
/// If the nodal price is below the floor, asks sit at the floor and bids at
/// the price cap.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBand {
    pub emergency_floor_share: f64,
}

impl Default for UniformBand {
    fn default() -> Self {
        Self { emergency_floor_share: 0.6 }
    }
}

impl UniformBand {
    /// `(low, high)` of the price band for `ctx`.
    pub fn band(&self, ctx: &OrderContext) -> (f64, f64) {
        let hi = ctx.dlmp.max(0.0);
        let lo = match ctx.mode {
            Mode::GridConnected => ctx.fit,
            Mode::Islanded if hi > ctx.fit => ctx.fit + self.emergency_floor_share * (hi - ctx.fit),
            Mode::Islanded => ctx.fit,
        };
        (lo, hi)
    }
}

impl BiddingStrategy for UniformBand {
    fn price(&self, ctx: &OrderContext, rng: &mut dyn RngCore) -> f64 {
        let (lo, hi) = self.band(ctx);
        let u: f64 = rng.random();
        if hi <= lo {
            return match ctx.side {
                Side::Ask => lo,
                Side::Bid => hi,
            };
        }
        lo + (hi - lo) * u
    }
}
