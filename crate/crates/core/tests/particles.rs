use colony_core::particle_mc::{validate_against_pde, ValidationConfig};
use colony_core::{DomainGrid, InteractionKernel, Vec2};

#[test]
fn heat_ensembles_approach_the_eulerian_law() {
    let cfg = ValidationConfig::heat(0.5, 1).unwrap();
    let rows = validate_against_pde(&cfg, &[100, 1000, 10000]).unwrap();
    let w: Vec<f64> = rows.iter().map(|r| r.w1).collect();
    assert!(w[0] > w[1] && w[1] > w[2], "{w:?}");
    assert!((rows[2].msd - 1.0).abs() < 0.05, "msd {}", rows[2].msd);
}

#[test]
fn attractive_mean_field_improves_with_particle_count() {
    let base = |n: usize| ValidationConfig {
        grid: DomainGrid::new_1d(-4.0, 4.0, 400).unwrap(),
        n,
        kernel: InteractionKernel::aggregation(0.5).unwrap(),
        sigma: 0.0,
        drift: Vec2::ZERO,
        start: Vec2::ZERO,
        width: 0.5,
        dt: 0.01,
        times: vec![0.5],
        seed: 5,
        runs: 3,
    };
    // same total number of samples for both particle counts
    let small = validate_against_pde(&base(10), &[200]).unwrap()[0].w1;
    let large = validate_against_pde(&base(100), &[20]).unwrap()[0].w1;
    assert!(large < small, "N=100: {large}, N=10: {small}");
}
