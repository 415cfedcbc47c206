use topolearn::fixtures::make_fixture;
use topolearn::sweep::{run_sweep, Method, SweepParams};

const ACCEPTANCE: [&str; 5] = ["consensus-5", "consensus-5-ar1", "rc-5zone", "swing-mesh-10", "swing-mesh-10-white"];

#[test]
fn dynamic_error_at_the_largest_count_is_at_most_the_smallest() {
    let counts = [2_000, 200_000];
    for name in ACCEPTANCE {
        let f = make_fixture(name).unwrap();
        for seed in 1..=10 {
            let r = run_sweep(&f, &counts, &[Method::Dynamic], &SweepParams { seed, ..SweepParams::default() }).unwrap();
            let (small, large) = (r.rows[0].relative_error, r.rows[1].relative_error);
            assert!(large <= small, "{name} seed {seed}: {large} > {small}");
        }
    }
}

#[test]
fn sweep_csv_is_bit_identical_across_reruns() {
    let f = make_fixture("consensus-5").unwrap();
    let p = SweepParams { seed: 3, ..SweepParams::default() };
    let a = run_sweep(&f, &[1_000, 5_000], &Method::ALL, &p).unwrap().to_csv();
    let b = run_sweep(&f, &[1_000, 5_000], &Method::ALL, &p).unwrap().to_csv();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 2 * Method::ALL.len());
}
