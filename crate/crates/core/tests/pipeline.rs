use dpcollapse::dpenergy::{self, grid_double_sum, PairFields};
use dpcollapse::massdist::{self, rasterize, Backend};
use dpcollapse::{
    DensityGrid, Evaluation, Execution, GridSpec, MassDistribution, PhysicalConstants, SolverOptions,
    SuperpositionSpec,
};
use proptest::prelude::*;

fn pair(d: f64) -> (MassDistribution, MassDistribution) {
    (MassDistribution::sphere(1.0, [-0.5 * d, 0.0, 0.0], 1.0), MassDistribution::sphere(1.0, [0.5 * d, 0.0, 0.0], 1.0))
}

#[test]
fn voxel_copy_of_a_rasterized_body_gives_the_same_energies() {
    let c = PhysicalConstants::dimensionless();
    let grid = GridSpec::cube([0.0; 3], 3.5, 24).unwrap();
    let opts = SolverOptions::default();
    let (a, b) = pair(1.5);
    let mut bytes = Vec::new();
    rasterize(&a, &grid, &opts).unwrap().write_binary(&mut bytes).unwrap();
    let voxel = MassDistribution::VoxelGrid { density: DensityGrid::read_binary(&bytes[..]).unwrap() };
    let eval = Evaluation::Grid(grid, opts);
    let from_spheres = dpenergy::dp_energy_double_integral(&a, &b, &c, &eval).unwrap().value;
    let from_voxels = dpenergy::dp_energy_double_integral(&voxel, &b, &c, &eval).unwrap().value;
    assert_eq!(from_spheres, from_voxels);
}

#[test]
fn backends_and_execution_modes_agree() {
    let c = PhysicalConstants::dimensionless();
    let grid = GridSpec::cube([0.0; 3], 3.0, 18).unwrap();
    let (a, _) = pair(1.0);
    let solve = |backend, execution| {
        massdist::solve_potential(&a, &grid, &c, &SolverOptions { backend, execution, subsample: 2 }).unwrap()
    };
    let direct = solve(Backend::Direct, Execution::Sequential);
    let fft = solve(Backend::Fft, Execution::Parallel);
    assert_eq!(direct, solve(Backend::Direct, Execution::Parallel));
    assert_eq!(fft, solve(Backend::Fft, Execution::Sequential));
    for (x, y) in direct.values.iter().zip(&fft.values) {
        assert!((x - y).abs() <= 1e-12 * x.abs(), "{x} vs {y}");
    }
}

#[test]
fn superposition_spec_survives_json() {
    let (a, b) = pair(2.0);
    let spec = SuperpositionSpec::two(0.3, a, b, PhysicalConstants::si());
    let text = serde_json::to_string(&spec).unwrap();
    let back: SuperpositionSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    assert!(text.contains("\"G\""));
}

#[test]
fn grid_energy_converges_towards_the_closed_form() {
    let c = PhysicalConstants::dimensionless();
    let (a, b) = pair(2.0);
    let exact = dpenergy::dp_energy_double_integral(&a, &b, &c, &Evaluation::Analytic).unwrap().value;
    let err = |n| {
        let g = GridSpec::cube([0.0; 3], 4.0, n).unwrap();
        let v = dpenergy::dp_energy_double_integral(&a, &b, &c, &Evaluation::grid(g)).unwrap().value;
        (v - exact).abs()
    };
    let (coarse, fine) = (err(24), err(48));
    assert!(fine < coarse, "{coarse} -> {fine}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The double sum and the potential form share one discrete kernel.
    #[test]
    fn double_sum_equals_potential_form(values in prop::collection::vec(0.0f64..1.0, 2 * 7 * 7 * 7), xi in prop::sample::select(vec![0.5, 1.0])) {
        let c = PhysicalConstants::dimensionless().with_xi(xi);
        let grid = GridSpec::cube([0.0; 3], 1.5, 7).unwrap();
        let n = grid.len();
        let r1 = DensityGrid::new(grid, values[..n].to_vec()).unwrap();
        let r2 = DensityGrid::new(grid, values[n..].to_vec()).unwrap();
        let opts = SolverOptions::default();
        let p1 = massdist::potential_of_density(&r1, &c, &opts).unwrap();
        let p2 = massdist::potential_of_density(&r2, &c, &opts).unwrap();
        let pf = dpenergy::dp_energy_potential_form(&r1, &r2, &p1, &p2, &c).unwrap().value;
        let delta: Vec<f64> = r1.values.iter().zip(&r2.values).map(|(a, b)| a - b).collect();
        let ds = xi * c.g * grid_double_sum(&delta, &grid, Execution::default());
        prop_assert!(pf >= 0.0);
        prop_assert!((pf - ds).abs() <= 1e-10 * ds.abs().max(1e-300), "{} vs {}", pf, ds);
    }

    #[test]
    fn dp_energy_is_symmetric_and_grows_with_displacement(d in 0.05f64..3.0, k in 1.05f64..2.0) {
        let c = PhysicalConstants::dimensionless();
        let (a, b) = pair(d);
        let e = |x: &MassDistribution, y: &MassDistribution| {
            dpenergy::dp_energy_double_integral(x, y, &c, &Evaluation::Analytic).unwrap().value
        };
        prop_assert!((e(&a, &b) - e(&b, &a)).abs() <= 1e-14 * e(&a, &b));
        let (a2, b2) = pair(d * k);
        prop_assert!(e(&a2, &b2) > e(&a, &b));
    }

    #[test]
    fn fields_of_identical_states_give_zero_energy(x in -0.5f64..0.5, m in 0.1f64..3.0) {
        let c = PhysicalConstants::dimensionless();
        let grid = GridSpec::cube([0.0; 3], 3.0, 12).unwrap();
        let d = MassDistribution::sphere(m, [x, 0.0, 0.0], 1.0);
        let f = PairFields::solve(&d, &d, &grid, &c, &SolverOptions::default()).unwrap();
        prop_assert_eq!(dpenergy::dp_energy_potential_form(&f.rho1, &f.rho2, &f.phi1, &f.phi2, &c).unwrap().value, 0.0);
        prop_assert_eq!(dpenergy::dp_energy_field_form(&f.phi1, &f.phi2, &c).unwrap().value, 0.0);
    }
}
