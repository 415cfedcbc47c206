use nalgebra::Complex;
use proptest::prelude::*;
use topolearn::fixtures::make_fixture;
use topolearn::graph::symmetric_coupling;
use topolearn::model::NodeParams;
use topolearn::noise::{gen_noise, NoiseSpec};
use topolearn::simulate::{simulate, DEFAULT_BURN_IN};
use topolearn::{build_model, PhysicalModelSpec};

const ACCEPTANCE: [&str; 5] = ["consensus-5", "consensus-5-ar1", "rc-5zone", "swing-mesh-10", "swing-mesh-10-white"];

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / (x.len() - lag) as f64
}

#[test]
fn doubling_burn_in_keeps_variance_within_one_percent() {
    for name in ACCEPTANCE {
        let f = make_fixture(name).unwrap();
        let m = f.model().unwrap();
        // Both runs see the same noise over the kept window.
        let t = 50_000;
        let noise = gen_noise(&f.noise.clone().with_seed(5), t + 2 * DEFAULT_BURN_IN, f.n()).unwrap();
        let a = simulate(&m, &noise.slice(DEFAULT_BURN_IN, t + 2 * DEFAULT_BURN_IN).unwrap(), DEFAULT_BURN_IN).unwrap();
        let b = simulate(&m, &noise, 2 * DEFAULT_BURN_IN).unwrap();
        for i in 0..f.n() {
            let (va, vb) = (variance(a.channel(i)), variance(b.channel(i)));
            assert!((va - vb).abs() <= 0.01 * va, "{name} node {}: {va} vs {vb}", i + 1);
        }
    }
}

#[test]
fn halves_of_a_long_run_share_autocovariance() {
    for name in ["consensus-5", "rc-5zone", "swing-mesh-10"] {
        let f = make_fixture(name).unwrap();
        let p = f.simulate(400_000, 11).unwrap();
        for i in 0..f.n() {
            let x = p.channel(i);
            let (first, second) = x.split_at(x.len() / 2);
            for lag in [0, 1, 5] {
                let (a, b) = (autocovariance(first, lag), autocovariance(second, lag));
                let scale = autocovariance(x, 0);
                assert!((a - b).abs() <= 0.1 * scale, "{name} node {} lag {lag}: {a} vs {b}", i + 1);
            }
        }
    }
}

#[test]
fn bilinear_operator_at_dc_is_total_gain() {
    for name in ACCEPTANCE {
        let m = make_fixture(name).unwrap().model().unwrap();
        for i in 0..m.n() {
            let total: f64 = m.graph().node_dynamics(i)[0] + (0..m.n()).map(|j| m.gain(i, j)).sum::<f64>();
            let s = m.s_operator(i, 0.0);
            assert!((s - Complex::new(total, 0.0)).norm() <= 1e-9 * total, "{name} node {}", i + 1);
        }
    }
}

fn small_consensus() -> impl Strategy<Value = PhysicalModelSpec> {
    (prop::collection::vec(0.1f64..10.0, 3), prop::collection::vec(0.05f64..2.0, 3)).prop_map(|(w, anchor)| {
        PhysicalModelSpec {
            coupling: symmetric_coupling(3, &[(0, 1, w[0]), (1, 2, w[1]), (0, 2, w[2])]),
            anchor,
            params: NodeParams::Consensus,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_scales_with_noise(spec in small_consensus(), alpha in -5.0f64..5.0, seed in 0u64..1000) {
        let m = build_model(&spec, 0.5).unwrap();
        let noise = gen_noise(&NoiseSpec::white(3, 1.0, seed), 600, 3).unwrap();
        let scaled = topolearn::TimeSeriesPanel::new(
            noise.dt(),
            noise.channels().iter().map(|c| c.iter().map(|v| alpha * v).collect()).collect(),
        ).unwrap();
        let a = simulate(&m, &noise, 100).unwrap();
        let b = simulate(&m, &scaled, 100).unwrap();
        for i in 0..3 {
            for (x, y) in a.channel(i).iter().zip(b.channel(i)) {
                prop_assert!((alpha * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn s_at_one_is_anchor_plus_couplings(spec in small_consensus(), dt in 0.01f64..10.0) {
        let m = build_model(&spec, dt).unwrap();
        for i in 0..3 {
            let total = spec.anchor[i] + (0..3).map(|j| spec.coupling[(i, j)]).sum::<f64>();
            prop_assert!((m.s_operator(i, 0.0).re - total).abs() <= 1e-12 * total);
            prop_assert!(m.s_operator(i, 0.0).im.abs() <= 1e-12 * total);
        }
    }
}
