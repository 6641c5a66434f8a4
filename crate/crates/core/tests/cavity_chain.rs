use stubcav_core::mode::{solve_bare_mode, GridSpec};
use stubcav_core::perturbation::{shift_map, sphere_polarizabilities, FieldSampling, MapGrid};
use stubcav_core::resonance::{observable_state, Calibration, ModeSummary};
use stubcav_core::units::DEFAULT_Q_EXT;
use stubcav_core::{CavityGeometry, MaterialParams, PhysicalConstants};

const K: PhysicalConstants = PhysicalConstants::SI;

#[test]
fn coarse_mode_to_observables() {
    let g = CavityGeometry::REFERENCE;
    let grid = GridSpec::covering(&g, 2e-4, 2e-4).unwrap();
    let mode = solve_bare_mode(&g, &grid, &K).unwrap();
    assert!((mode.frequency() / 10.03e9 - 1.0).abs() < 0.01, "{}", mode.frequency());

    let summary = ModeSummary::from_mode(&mode);
    let calib = Calibration::new(summary, &g, MaterialParams::CALIBRATED, DEFAULT_Q_EXT).unwrap();
    let cold = observable_state(0.135, -15.0, None, &calib).unwrap();
    let warm = observable_state(0.75, -15.0, None, &calib).unwrap();
    let normal = observable_state(1.0, -15.0, None, &calib).unwrap();
    assert!(cold.f0 > warm.f0 && warm.f0 > normal.f0);
    assert!(cold.q_int > warm.q_int && warm.q_int > normal.q_int);
    let inv = 1.0 / cold.q_int + 2.0 / cold.q_ext;
    assert!((cold.q_loaded * inv - 1.0).abs() < 1e-12);

    let pol = sphere_polarizabilities(0.5e-3, &K).unwrap();
    let map = shift_map(&mode, &g, MapGrid::regular(1e-3, 1e-3, 2e-4).unwrap(), &pol, FieldSampling::Center).unwrap();
    let column = map.column(0.0);
    assert!(column.len() >= 2);
    assert!(column.windows(2).all(|w| w[1].1 > w[0].1));
    assert!(column.iter().all(|&(_, d)| d < 0.0));
}
