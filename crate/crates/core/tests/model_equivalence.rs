//! Full double-continuum, double-bright and hybrid single-excitation models
//! must give identical emitter dynamics for states without dark components.

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use qpp_dbm::dbm::{build_bright_basis, couplings_for_medium, CouplingKind, CouplingTable, Emitter, DEFAULT_RANK_TOLERANCE};
use qpp_dbm::dynamics::{
    assemble_double_bright, assemble_full, assemble_hybrid, bright_photon_full, dark_photon_full, emitter_state,
    ModelSet, SingleExcitationHamiltonian,
};
use qpp_dbm::medium::{build_voxel_medium, Geometry, PermittivityModel};
use qpp_dbm::modegrid::{build_mode_grids, FrequencyRule};
use qpp_dbm::Point;

struct Models {
    full: SingleExcitationHamiltonian,
    double_bright: SingleExcitationHamiltonian,
    hybrid: SingleExcitationHamiltonian,
}

fn setup() -> (CouplingTable, Models) {
    let medium = build_voxel_medium(
        &Geometry::Box { center: [0.0; 3], size: [0.6; 3] },
        PermittivityModel::Drude { plasma: 2.0, damping: 0.3 },
        2,
    )
    .unwrap();
    let grids = build_mode_grids(&medium, (0.8, 1.2), FrequencyRule { panels: 4, order: 4 }, 2).unwrap();
    let emitters = vec![
        Emitter::new(Point::new(0.0, 0.0, 0.55), Vector3::new(0.0, 0.0, 0.8), 1.0),
        Emitter::new(Point::new(0.5, 0.2, 0.1), Vector3::new(0.6, 0.0, 0.3), 1.02),
    ];
    let table = couplings_for_medium(&medium, &emitters, &grids).unwrap();
    let hyb = build_bright_basis(&table, CouplingKind::Hybrid, DEFAULT_RANK_TOLERANCE).unwrap();
    let be = build_bright_basis(&table, CouplingKind::E, DEFAULT_RANK_TOLERANCE).unwrap();
    let bm = build_bright_basis(&table, CouplingKind::M, DEFAULT_RANK_TOLERANCE).unwrap();
    let models = Models {
        full: assemble_full(&table),
        double_bright: assemble_double_bright(&table, &be, &bm).unwrap(),
        hybrid: assemble_hybrid(&table, &hyb).unwrap(),
    };
    (table, models)
}

fn times() -> Vec<f64> {
    (0..=80).map(|i| i as f64 * 1.25).collect()
}

#[test]
fn model_equivalence() {
    let (table, m) = setup();
    let set = ModelSet::new(&m.full, &m.double_bright, &m.hybrid).unwrap();
    assert_eq!(m.full.dim(), 2 + 16 * (32 + 24));
    assert_eq!(m.hybrid.dim(), 2 + 16 * 2);
    assert_eq!(table.len(), 16);
    for amps in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]] {
        let amps: Vec<Complex64> = amps.iter().map(|&a| Complex64::from(a)).collect();
        let psi = emitter_state(&m.full, &amps).unwrap();
        let cmp = set.compare(&psi, &times()).unwrap();
        assert!(cmp.max_dev_hybrid < 1e-8, "hybrid deviation {}", cmp.max_dev_hybrid);
        assert!(cmp.max_dev_double_bright < 1e-8, "double-bright deviation {}", cmp.max_dev_double_bright);
        // the emitters actually decay over the horizon
        let last = cmp.full.populations.last().unwrap();
        assert!(last.iter().sum::<f64>() < 0.9);
        for n in &cmp.full.norms {
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    // a bright photon excites the emitters identically in all models
    let q = 7;
    let bright = bright_photon_full(&m.hybrid, &m.full, q, 0);
    assert!((bright.norm() - 1.0).abs() < 1e-10);
    let cmp = set.compare(&bright.unscale(bright.norm()), &times()).unwrap();
    let peak = cmp.full.populations.iter().flatten().copied().fold(0.0, f64::max);
    assert!(peak > 1e-4, "bright photon should excite the emitters, peak {peak}");
    assert!(cmp.max_dev_hybrid < 1e-8 && cmp.max_dev_double_bright < 1e-8);

    let dark: DVector<Complex64> = dark_photon_full(&m.hybrid, &m.full, q, 3).unwrap();
    let r = set.full.run(&dark, &times()).unwrap();
    let worst = r.populations.iter().flatten().copied().fold(0.0, f64::max);
    assert!(worst < 1e-8, "dark photon leaked into emitters: {worst}");
}
