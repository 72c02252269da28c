use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dispatch::{
    check_exactness, dispatch, extract_dlmp, DispatchError, DispatchProblem, DispatchResult, Mode, UnitKind,
};
use crate::market::{
    payoffs, run_mrda, settle, AuctionOutcome, BiddingStrategy, Order, OrderContext, Side, UniformBand, QTY_EPS,
};
use crate::netmodel::{AgentRole, Network, Profiles};
use crate::vetting::{compute_sensitivities, vet_ledger, VettingDecision};

use super::config::ScenarioConfig;
use super::events::{apply_events, OperatingState};
use super::SimError;

/// Smallest order quantity submitted, kW. Interior-point residue on shedding
/// variables stays well below it.
pub const MIN_ORDER_KW: f64 = 1e-3;

/// Served share of demand, percent. Values within rounding of the ends are
/// clamped to `[0, 100]`.
pub fn resilience_index(shed: f64, total: f64) -> Result<f64, SimError> {
    if !(total > 0.0) || !shed.is_finite() {
        return Err(SimError::UndefinedResilience { shed, total });
    }
    Ok(((1.0 - shed / total) * 100.0).clamp(0.0, 100.0))
}

/// Everything recorded about one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub interval: usize,
    /// Start of the interval, hours from midnight.
    pub hour: f64,
    pub mode: Mode,
    /// Gross demand, kW.
    pub total_load: f64,
    pub served: f64,
    pub shed: f64,
    /// Percent.
    pub ri: f64,
    /// Nodal prices after re-dispatch, $/MWh, by node index.
    pub dlmp: Vec<f64>,
    /// Nodal prices announced to agents before the auction, $/MWh.
    pub signal_dlmp: Vec<f64>,
    /// Shedding in the pre-market dispatch, kW.
    pub signal_shed: f64,
    /// Prosumer PV left after self-consumption, kW.
    pub surplus: f64,
    /// Quantity-weighted mean clearing price, $/MWh.
    pub atp: Option<f64>,
    /// Matches that passed vetting.
    pub matches: usize,
    pub blocked: usize,
    /// kW traded in approved matches.
    pub traded: f64,
    /// Net grid settlement over the interval, $ (credits minus debits).
    pub grid_settlement: f64,
    /// Sum of seller and buyer surplus over approved matches, $.
    pub welfare: f64,
    /// Auctioneer net cash over P2P matches, $.
    pub budget_imbalance: f64,
    /// Net import through the tie, kW (negative when exporting).
    pub grid_import: f64,
    pub dg_output: f64,
    /// Prosumer surplus dispatched outside P2P matches, kW.
    pub offer_output: f64,
    pub losses: f64,
    /// Generation + P2P net injection − losses − served, per unit.
    pub balance_residual: f64,
    /// Largest relative cone gap over both dispatches.
    pub cone_gap: f64,
    /// True when approved trades could not be held firm in re-dispatch.
    pub firm_relaxed: bool,
    /// Auction ledger and settlements; `None` when the market is off.
    pub outcome: Option<AuctionOutcome>,
    pub vetting: Vec<VettingDecision>,
}

/// Runs `config` over its horizon with the default bidding strategy.
pub fn run_simulation(
    network: &Network,
    profiles: &Profiles,
    config: &ScenarioConfig,
) -> Result<Vec<IntervalRecord>, SimError> {
    let strategy = UniformBand { emergency_floor_share: config.strategy.emergency_floor_share };
    run_simulation_with(network, profiles, config, &strategy)
}

/// Runs `config` over its horizon with `strategy` pricing every order.
///
/// Each interval draws from its own ChaCha8 stream (the interval index) of
/// the config seed, so records do not depend on evaluation order.
pub fn run_simulation_with(
    network: &Network,
    profiles: &Profiles,
    config: &ScenarioConfig,
    strategy: &dyn BiddingStrategy,
) -> Result<Vec<IntervalRecord>, SimError> {
    config.validate(network)?;
    profiles.validate(network)?;
    if profiles.interval_count() < config.horizon {
        return Err(SimError::HorizonMismatch { left: config.horizon, right: profiles.interval_count() });
    }
    let k = Kernel { network, profiles, config, strategy };
    (0..config.horizon).map(|t| k.interval(t)).collect()
}

/// The pre-market dispatch of interval `t`: the problem whose duals become
/// the price signal.
pub fn signal_problem<'a>(
    network: &'a Network,
    profiles: &'a Profiles,
    config: &'a ScenarioConfig,
    t: usize,
) -> Result<DispatchProblem<'a>, SimError> {
    let strategy = UniformBand::default();
    let k = Kernel { network, profiles, config, strategy: &strategy };
    let state = apply_events(config, network, t)?;
    let d = k.demand(t);
    let pb = k.problem(&state, &d, t);
    // Rebind the lifetime to the inputs rather than the local kernel.
    Ok(DispatchProblem { network, ..pb })
}

struct Kernel<'a> {
    network: &'a Network,
    profiles: &'a Profiles,
    config: &'a ScenarioConfig,
    strategy: &'a dyn BiddingStrategy,
}

struct Demand {
    gross_p: Vec<f64>,
    net_p: Vec<f64>,
    net_q: Vec<f64>,
    surplus: Vec<f64>,
}

impl Kernel<'_> {
    fn demand(&self, t: usize) -> Demand {
        let n = self.network.node_count();
        let mut d = Demand { gross_p: vec![0.0; n], net_p: vec![0.0; n], net_q: vec![0.0; n], surplus: vec![0.0; n] };
        for i in 0..n {
            let (p, q) = self.profiles.load(self.network, t, i);
            let pv = self.profiles.pv_available(self.network, t, i);
            let own = pv.min(p);
            d.gross_p[i] = p;
            d.net_p[i] = p - own;
            d.net_q[i] = if p > 0.0 { q * d.net_p[i] / p } else { 0.0 };
            d.surplus[i] = pv - own;
        }
        d
    }

    fn problem(&self, state: &OperatingState, d: &Demand, t: usize) -> DispatchProblem<'_> {
        let lmp = self.profiles.lmp[t];
        let mut pb =
            DispatchProblem::new(self.network, state.mode, d.net_p.clone(), d.net_q.clone(), lmp, self.profiles.voll);
        pb.set_export_price(self.config.fit.min(lmp));
        pb.lines_out = state.lines_out.clone();
        pb.formulation = self.config.formulation;
        pb
    }

    fn solve(&self, pb: &DispatchProblem<'_>, t: usize) -> Result<(DispatchResult, Vec<f64>), SimError> {
        let wrap = |source: DispatchError| SimError::Dispatch { interval: t, source };
        let r = dispatch(pb).map_err(wrap)?;
        let dlmp = extract_dlmp(&r).map_err(wrap)?;
        Ok((r, dlmp))
    }

    fn orders(
        &self,
        state: &OperatingState,
        d: &Demand,
        signal: &DispatchResult,
        dlmp: &[f64],
        t: usize,
    ) -> Vec<Order> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(t as u64);
        let mut orders = Vec::new();
        for (i, node) in self.network.nodes.iter().enumerate() {
            if node.role == AgentRole::None {
                continue;
            }
            let demand = match state.mode {
                Mode::GridConnected => self.config.strategy.flexible_share * d.net_p[i],
                Mode::Islanded => signal.shed_p[i],
            };
            let mut sides = Vec::new();
            if node.role == AgentRole::Prosumer && d.surplus[i] >= MIN_ORDER_KW {
                sides.push((Side::Ask, d.surplus[i]));
            }
            if demand >= MIN_ORDER_KW && dlmp[i] >= 0.0 {
                sides.push((Side::Bid, demand));
            }
            for (side, quantity) in sides {
                let ctx = OrderContext {
                    agent: node.id.0,
                    side,
                    node: node.id,
                    dlmp: dlmp[i],
                    fit: self.config.fit,
                    mode: state.mode,
                    interval: t,
                };
                let price = self.strategy.price(&ctx, &mut rng);
                let price = match side {
                    Side::Bid => price.min(dlmp[i]),
                    Side::Ask => price,
                };
                orders.push(Order {
                    agent: ctx.agent,
                    side,
                    node: node.id,
                    zone: self.network.zone_of(node.id),
                    price,
                    quantity,
                    interval: t,
                });
            }
        }
        orders
    }

    fn interval(&self, t: usize) -> Result<IntervalRecord, SimError> {
        let net = self.network;
        let state = apply_events(self.config, net, t)?;
        let d = self.demand(t);
        let hours = self.profiles.interval_hours();

        let (signal, signal_dlmp) = self.solve(&self.problem(&state, &d, t), t)?;
        let orders = self.orders(&state, &d, &signal, &signal_dlmp, t);

        let mut outcome = if self.config.p2p && !orders.is_empty() {
            run_mrda(&orders, net, &signal_dlmp).map_err(|source| SimError::Market { interval: t, source })?
        } else {
            let residual = orders.iter().map(|o| o.quantity).collect();
            AuctionOutcome { interval: t, orders, residual, ..AuctionOutcome::default() }
        };
        let vetting = if outcome.matches.is_empty() {
            Vec::new()
        } else {
            let sens =
                compute_sensitivities(net, &signal, t).map_err(|source| SimError::Vetting { interval: t, source })?;
            vet_ledger(net, &mut outcome.matches, &sens, self.config.vetting.margin)
                .map_err(|source| SimError::Vetting { interval: t, source })?
        };

        let mut pb = self.problem(&state, &d, t);
        for m in outcome.live_matches() {
            let s = net.index_of(m.seller_node).expect("validated order");
            let b = net.index_of(m.buyer_node).expect("validated order");
            pb.fixed_injection[s] += m.quantity;
            pb.firm_load[b] = (pb.firm_load[b] + m.quantity).min(pb.load_p[b]);
        }
        for (idx, o) in outcome.orders.iter().enumerate() {
            let rest = o.quantity - outcome.matched_quantity(idx);
            if o.side != Side::Ask || rest <= QTY_EPS {
                continue;
            }
            let node = net.index_of(o.node).expect("validated order");
            // Residual surplus is remunerated at the feed-in tariff whatever
            // the dispatch does, so it enters as a must-take injection that
            // is curtailed only when the feeder cannot absorb it. Without a
            // market an islanded feeder has no channel to receive it.
            if state.mode == Mode::GridConnected || self.config.p2p {
                pb.add_offer(o.agent, node, 0.0, rest);
            }
        }
        let mut firm_relaxed = false;
        let (fin, dlmp) = match self.solve(&pb, t) {
            Err(SimError::Dispatch { source: DispatchError::Infeasible { .. }, .. }) => {
                firm_relaxed = true;
                pb.firm_load.iter_mut().for_each(|f| *f = 0.0);
                self.solve(&pb, t)?
            }
            other => other?,
        };

        let prices: BTreeMap<_, _> = net.nodes.iter().zip(&dlmp).map(|(n, p)| (n.id, *p)).collect();
        settle(&mut outcome, self.config.fit, &prices, hours)
            .map_err(|source| SimError::Market { interval: t, source })?;

        let total_load: f64 = d.gross_p.iter().sum();
        let shed = fin.total_shed().max(0.0);
        let losses = fin.losses(net);
        let generation: f64 = fin.unit_p.iter().sum();
        let p2p_net: f64 = fin.fixed_injection.iter().sum();
        let served_net: f64 = fin.load_p.iter().zip(&fin.shed_p).map(|(l, s)| l - s).sum();
        let balance_residual = (generation + p2p_net - losses - served_net) / net.base_kw();
        let k = hours / 1000.0;
        Ok(IntervalRecord {
            interval: t,
            hour: t as f64 * hours,
            mode: state.mode,
            total_load,
            served: total_load - shed,
            shed,
            ri: resilience_index(shed, total_load)?,
            signal_shed: signal.total_shed(),
            surplus: d.surplus.iter().sum(),
            atp: outcome.average_transaction_price(),
            matches: outcome.live_matches().count(),
            blocked: outcome.matches.len() - outcome.live_matches().count(),
            traded: outcome.traded_quantity(),
            grid_settlement: outcome.grid_net(),
            welfare: payoffs(&outcome).total * k,
            budget_imbalance: outcome.auctioneer_net(),
            grid_import: fin.output_of(|u| matches!(u, UnitKind::GridImport | UnitKind::GridExport)),
            dg_output: fin.output_of(|u| u == UnitKind::UtilityDg),
            offer_output: fin.output_of(|u| matches!(u, UnitKind::ProsumerOffer(_))),
            losses,
            balance_residual,
            cone_gap: check_exactness(&signal).max(check_exactness(&fin)),
            firm_relaxed,
            dlmp,
            signal_dlmp,
            outcome: self.config.p2p.then_some(outcome),
            vetting,
        })
    }
}
