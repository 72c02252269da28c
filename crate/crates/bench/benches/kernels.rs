use std::hint::black_box;
use std::path::PathBuf;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use p2pgrid::dispatch::{dispatch, extract_dlmp};
use p2pgrid::market::run_mrda;
use p2pgrid::netmodel::load_scenario;
use p2pgrid::sim::{run_simulation, signal_problem};
use p2pgrid::{Network, NodeId, Order, Profiles, ScenarioConfig, Side, ZoneId};

fn scenario(name: &str) -> (Network, Profiles, ScenarioConfig) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(format!("{name}.toml"));
    load_scenario(&path).unwrap()
}

/// One ask and one bid per load node with staggered prices.
fn book(net: &Network, dlmp: &[f64]) -> Vec<Order> {
    let mut orders = Vec::new();
    for (i, node) in net.nodes.iter().enumerate().skip(1) {
        let zone = net.zone_of(node.id).map(|z| ZoneId(z.0));
        let spread = (i % 7) as f64 / 7.0;
        for (k, side) in [Side::Ask, Side::Bid].into_iter().enumerate() {
            let price = match side {
                Side::Ask => 20.0 + spread * (dlmp[i] - 20.0),
                Side::Bid => dlmp[i] - spread * (dlmp[i] - 20.0) * 0.5,
            };
            orders.push(Order {
                agent: (2 * i + k) as u32,
                side,
                node: NodeId(node.id.0),
                zone,
                price,
                quantity: 5.0 + (i % 5) as f64,
                interval: 0,
            });
        }
    }
    orders
}

fn dispatch_bench(c: &mut Criterion) {
    let (net, profiles, config) = scenario("paper-outage-13h");
    let normal = signal_problem(&net, &profiles, &config, 48).unwrap();
    let islanded = signal_problem(&net, &profiles, &config, 56).unwrap();
    c.bench_function("dispatch_33_normal", |b| b.iter(|| extract_dlmp(&dispatch(black_box(&normal)).unwrap())));
    c.bench_function("dispatch_33_islanded", |b| b.iter(|| extract_dlmp(&dispatch(black_box(&islanded)).unwrap())));
}

fn market_bench(c: &mut Criterion) {
    let (net, _, _) = scenario("paper-normal");
    let dlmp = vec![50.0; net.node_count()];
    let orders = book(&net, &dlmp);
    c.bench_function("mrda_64_orders", |b| b.iter(|| run_mrda(black_box(&orders), &net, &dlmp).unwrap()));
}

fn day_bench(c: &mut Criterion) {
    let (net, profiles, config) = scenario("paper-outage-13h");
    let mut group = c.benchmark_group("full_day");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    group.bench_function("outage_13h_p2p", |b| b.iter(|| run_simulation(&net, &profiles, black_box(&config)).unwrap()));
    group.finish();
}

criterion_group!(benches, dispatch_bench, market_bench, day_bench);
criterion_main!(benches);
