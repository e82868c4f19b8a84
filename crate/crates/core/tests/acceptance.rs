//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with the measured figure, its bound and the runtime.
//!
//! Run with `cargo test -p qpp-dbm --test acceptance -- --nocapture` to see
//! the lines; the test names alone already report pass/fail.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpp_dbm::dbm::{build_bright_basis, couplings_for_medium, overlap_matrices, CouplingKind, Emitter, DEFAULT_RANK_TOLERANCE};
use qpp_dbm::dynamics::{
    assemble_double_bright, assemble_full, assemble_hybrid, bright_photon_full, dark_photon_full, decay_rate, emitter_state,
    fit_decay, vacuum_decay_rate, ModelSet, Propagator,
};
use qpp_dbm::greens::{solve_scattering, vacuum_green_imag};
use qpp_dbm::identities::{
    compensation_residual, default_probes, discrete_im_green, ldos_forms_residual, ldos_identity_residual,
    overlap_green_residual, reciprocity_residual, LdosForm, Tolerances, DEFAULT_PROBE_SEED,
};
use qpp_dbm::medium::{build_voxel_medium, Geometry, PermittivityModel, VoxelMedium};
use qpp_dbm::modegrid::{build_mode_grids, FrequencyRule, NodeFields};
use qpp_dbm::Point;

// Pinned bounds, one block per criterion.

/// Relative Frobenius error of the discrete vacuum e-sum against `Im G0`.
const VACUUM_CLOSURE_TOL: f64 = 1e-2;
const VACUUM_CLOSURE_BUDGET: f64 = 10.0;

/// Both LDOS forms against the solved `Im G` (quadrature-limited).
const LDOS_FORM_TOL: f64 = 1e-2;
/// The two forms against each other (exact rearrangement).
const LDOS_FORMS_AGREE_TOL: f64 = 1e-12;
const LDOS_BUDGET: f64 = 60.0;

/// `Omega_e^2 + Omega_m^2` against the discrete-route projection of `Im G`.
const COMPENSATION_TOL: f64 = 1e-12;
const COMPENSATION_BUDGET: f64 = 10.0;

/// `|beta M beta^H - I|` and `|beta gamma - I|` (Frobenius).
const LOWDIN_TOL: f64 = 1e-10;
const LOWDIN_BUDGET: f64 = 5.0;

/// Largest emitter-population difference between the three models, and the
/// largest emitter population reached from a dark photon.
const EQUIVALENCE_TOL: f64 = 1e-8;
const EQUIVALENCE_BUDGET: f64 = 60.0;
const EQUIVALENCE_MAX_DIM: usize = 3000;

/// Fitted vs golden-rule rate, and golden-rule vs free-space rate.
const WW_FIT_TOL: f64 = 0.05;
const WW_ANALYTIC_TOL: f64 = 0.02;
const WW_BUDGET: f64 = 30.0;

/// Reciprocity of solved Green tensors and DDA solve residuals.
const RECIPROCITY_TOL: f64 = 1e-10;
const SOLVE_RESIDUAL_TOL: f64 = 1e-10;
const RECIPROCITY_BUDGET: f64 = 30.0;

/// Hermiticity, unit diagonal, PSD floor and the hybrid `Im G` formula.
const OVERLAP_TOL: f64 = 1e-12;
const OVERLAP_PSD_FLOOR: f64 = 1e-12;
const OVERLAP_BUDGET: f64 = 5.0;

fn report(id: usize, name: &str, pass: bool, detail: String, start: Instant, budget: f64) {
    let t = start.elapsed();
    let in_time = t <= Duration::from_secs_f64(budget);
    let ok = pass && in_time;
    println!(
        "criterion {id} {name}: {} | {detail} | {:.2} s of {budget:.0} s",
        if ok { "PASS" } else { "FAIL" },
        t.as_secs_f64()
    );
    assert!(pass, "criterion {id} {name}: {detail}");
    assert!(in_time, "criterion {id} {name}: {:.2} s exceeds the {budget} s budget", t.as_secs_f64());
}

fn drude_cube(resolution: usize) -> VoxelMedium {
    build_voxel_medium(
        &Geometry::Box { center: [0.0; 3], size: [0.6; 3] },
        PermittivityModel::Drude { plasma: 2.0, damping: 0.3 },
        resolution,
    )
    .unwrap()
}

fn cube_emitters() -> Vec<Emitter> {
    vec![
        Emitter::new(Point::new(0.0, 0.0, 0.6), Vector3::z(), 1.0),
        Emitter::new(Point::new(0.55, 0.1, -0.2), Vector3::new(1.0, 0.5, 0.0), 1.05),
    ]
}

fn frob(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn criterion_1_vacuum_ldos_closure() {
    let start = Instant::now();
    let medium = VoxelMedium::empty();
    let grids = build_mode_grids(&medium, (0.9, 1.1), FrequencyRule { panels: 1, order: 8 }, 14).unwrap();
    let points = [Point::zeros(), Point::new(0.3, -0.2, 0.5), Point::new(-1.0, 0.4, 0.1)];
    let (mut worst, mut worst_pair): (f64, f64) = (0.0, 0.0);
    for (q, &w) in grids.frequencies().nodes.iter().enumerate() {
        let scat = solve_scattering(&medium, w).unwrap();
        let fields = NodeFields::new(&scat, &grids, q).unwrap();
        for x in &points {
            let (e_sum, m_sum) = discrete_im_green(&fields, &grids, x, x).unwrap();
            assert_eq!(m_sum, nalgebra::Matrix3::zeros());
            let exact = vacuum_green_imag(x, x, w).unwrap();
            // the closed form is (w / 6 pi) I
            assert!((exact - nalgebra::Matrix3::identity() * (w / (6.0 * PI))).norm() < 1e-14);
            let err = (e_sum.map(|z| z.re) - exact).norm().hypot(e_sum.map(|z| z.im).norm());
            worst = worst.max(err / exact.norm());
        }
        // separated points exercise the angular quadrature
        for (x, y) in [(&points[0], &points[1]), (&points[1], &points[2])] {
            let (e_sum, _) = discrete_im_green(&fields, &grids, x, y).unwrap();
            let exact = vacuum_green_imag(x, y, w).unwrap();
            let err = (e_sum.map(|z| z.re) - exact).norm().hypot(e_sum.map(|z| z.im).norm());
            worst_pair = worst_pair.max(err / exact.norm());
        }
    }
    report(
        1,
        "vacuum LDOS closure",
        worst <= VACUUM_CLOSURE_TOL && worst_pair <= VACUUM_CLOSURE_TOL,
        format!("worst relative error {worst:.2e} at x = y, {worst_pair:.2e} for separated points (bound {VACUUM_CLOSURE_TOL:.0e})"),
        start,
        VACUUM_CLOSURE_BUDGET,
    );
}

#[test]
fn criterion_2_green_ldos_identity() {
    let start = Instant::now();
    let medium = drude_cube(3);
    let ems = cube_emitters();
    let grids = build_mode_grids(&medium, (0.9, 1.1), FrequencyRule { panels: 1, order: 8 }, 14).unwrap();
    let probes = default_probes(&medium, &ems, DEFAULT_PROBE_SEED).unwrap();
    let (mut worst_form, mut worst_agree): (f64, f64) = (0.0, 0.0);
    let mut checks = 0;
    for (q, &w) in grids.frequencies().nodes.iter().enumerate() {
        let scat = solve_scattering(&medium, w).unwrap();
        for x in &probes {
            for y in [x, &probes[0]] {
                for form in [LdosForm::BoundaryVolume, LdosForm::EM] {
                    let r = ldos_identity_residual(&scat, &grids, q, x, y, form, LDOS_FORM_TOL).unwrap();
                    worst_form = worst_form.max(r.relative);
                    checks += 1;
                }
                let r = ldos_forms_residual(&scat, &grids, q, x, y, LDOS_FORMS_AGREE_TOL).unwrap();
                worst_agree = worst_agree.max(r.relative);
            }
        }
    }
    report(
        2,
        "Green LDOS identity with boundary term",
        worst_form <= LDOS_FORM_TOL && worst_agree <= LDOS_FORMS_AGREE_TOL,
        format!(
            "{checks} checks, worst form residual {worst_form:.2e} <= {LDOS_FORM_TOL:.0e}, forms agree to {worst_agree:.2e} <= {LDOS_FORMS_AGREE_TOL:.0e}"
        ),
        start,
        LDOS_BUDGET,
    );
}

#[test]
fn criterion_3_compensation_exactness() {
    let start = Instant::now();
    let medium = drude_cube(3);
    let ems = cube_emitters();
    let grids = build_mode_grids(&medium, (0.9, 1.1), FrequencyRule { panels: 1, order: 8 }, 14).unwrap();
    let table = couplings_for_medium(&medium, &ems, &grids).unwrap();
    let tol = Tolerances { exact: COMPENSATION_TOL, ..Tolerances::REFERENCE };
    let mut worst: f64 = 0.0;
    for (q, &w) in grids.frequencies().nodes.iter().enumerate() {
        let scat = solve_scattering(&medium, w).unwrap();
        for k in 0..ems.len() {
            let [discrete, _] = compensation_residual(k, &table, &grids, &scat, q, &tol).unwrap();
            worst = worst.max(discrete.relative);
        }
    }
    report(
        3,
        "compensation exactness",
        worst <= COMPENSATION_TOL,
        format!("{} nodes x {} emitters, worst relative {worst:.2e} <= {COMPENSATION_TOL:.0e}", grids.frequencies().len(), ems.len()),
        start,
        COMPENSATION_BUDGET,
    );
}

/// Emitter outside the unit cube's exclusion shell, random orientation and
/// transition frequency inside the window.
fn random_emitter(rng: &mut ChaCha8Rng) -> Emitter {
    let dir = loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n: f64 = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let r = rng.random_range(0.65..1.2);
    let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Emitter::new(dir * r, d, rng.random_range(0.92..1.08))
}

#[test]
fn criterion_4_lowdin_algebra() {
    let start = Instant::now();
    let medium = drude_cube(2);
    let grids = build_mode_grids(&medium, (0.9, 1.1), FrequencyRule { panels: 1, order: 4 }, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x10d1_0001);
    let mut worst: f64 = 0.0;
    let mut sets = 0;
    for n in 1..=8 {
        for _ in 0..2 {
            let ems: Vec<Emitter> = (0..n).map(|_| random_emitter(&mut rng)).collect();
            let table = couplings_for_medium(&medium, &ems, &grids).unwrap();
            for kind in [CouplingKind::E, CouplingKind::M, CouplingKind::Hybrid] {
                let basis = build_bright_basis(&table, kind, DEFAULT_RANK_TOLERANCE).unwrap();
                for node in &basis.nodes {
                    let l = node.lowdin.as_ref().unwrap();
                    let id = DMatrix::<Complex64>::identity(l.n_ind, l.n_ind);
                    worst = worst.max(frob(&(&l.beta * &node.overlap * l.beta.adjoint() - &id)));
                    worst = worst.max(frob(&(&l.beta * &l.gamma - &id)));
                }
            }
            sets += 1;
        }
    }

    // a duplicated emitter removes exactly one bright mode at every node
    let mut ems: Vec<Emitter> = (0..4).map(|_| random_emitter(&mut rng)).collect();
    ems.push(ems[1].clone());
    let table = couplings_for_medium(&medium, &ems, &grids).unwrap();
    let basis = build_bright_basis(&table, CouplingKind::Hybrid, DEFAULT_RANK_TOLERANCE).unwrap();
    let ranks = basis.n_ind();
    let duplicate_ok = ranks.iter().all(|&r| r == ems.len() - 1);
    report(
        4,
        "Löwdin algebra",
        worst <= LOWDIN_TOL && duplicate_ok,
        format!("{sets} random sets (N <= 8), worst {worst:.2e} <= {LOWDIN_TOL:.0e}; duplicate set N = {} gives N_ind {ranks:?}", ems.len()),
        start,
        LOWDIN_BUDGET,
    );
}

#[test]
fn criterion_5_model_equivalence() {
    let start = Instant::now();
    let medium = drude_cube(2);
    let grids = build_mode_grids(&medium, (0.8, 1.2), FrequencyRule { panels: 4, order: 4 }, 2).unwrap();
    let ems = vec![
        Emitter::new(Point::new(0.0, 0.0, 0.55), Vector3::new(0.0, 0.0, 0.8), 1.0),
        Emitter::new(Point::new(0.5, 0.2, 0.1), Vector3::new(0.6, 0.0, 0.3), 1.02),
    ];
    let table = couplings_for_medium(&medium, &ems, &grids).unwrap();
    let tau = DEFAULT_RANK_TOLERANCE;
    let hyb = build_bright_basis(&table, CouplingKind::Hybrid, tau).unwrap();
    let be = build_bright_basis(&table, CouplingKind::E, tau).unwrap();
    let bm = build_bright_basis(&table, CouplingKind::M, tau).unwrap();
    let full = assemble_full(&table);
    let db = assemble_double_bright(&table, &be, &bm).unwrap();
    let hybrid = assemble_hybrid(&table, &hyb).unwrap();
    let set = ModelSet::new(&full, &db, &hybrid).unwrap();
    let times: Vec<f64> = (0..=80).map(|i| i as f64 * 1.25).collect();

    let mut worst: f64 = 0.0;
    let mut decayed = true;
    for amps in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [0.6, -0.8]] {
        let amps: Vec<Complex64> = amps.iter().map(|&a| Complex64::from(a)).collect();
        let cmp = set.compare(&emitter_state(&full, &amps).unwrap(), &times).unwrap();
        worst = worst.max(cmp.max_dev_hybrid).max(cmp.max_dev_double_bright);
        decayed &= cmp.full.populations.last().unwrap().iter().sum::<f64>() < 0.9;
    }
    for q in [0, 7, 15] {
        let bright = bright_photon_full(&hybrid, &full, q, 0);
        let cmp = set.compare(&bright.unscale(bright.norm()), &times).unwrap();
        worst = worst.max(cmp.max_dev_hybrid).max(cmp.max_dev_double_bright);
    }
    let mut dark_leak: f64 = 0.0;
    for (q, a) in [(3, 0), (7, 5), (12, 40)] {
        let dark = dark_photon_full(&hybrid, &full, q, a).unwrap();
        let r = set.full.run(&dark, &times).unwrap();
        dark_leak = dark_leak.max(r.populations.iter().flatten().copied().fold(0.0, f64::max));
    }
    let small = full.dim() <= EQUIVALENCE_MAX_DIM;
    report(
        5,
        "model equivalence",
        worst <= EQUIVALENCE_TOL && dark_leak <= EQUIVALENCE_TOL && decayed && small,
        format!(
            "dims full/double-bright/hybrid {}/{}/{}, worst population deviation {worst:.2e}, dark leak {dark_leak:.2e} (bound {EQUIVALENCE_TOL:.0e})",
            full.dim(),
            db.dim(),
            hybrid.dim()
        ),
        start,
        EQUIVALENCE_BUDGET,
    );
}

#[test]
fn criterion_6_wigner_weisskopf() {
    let start = Instant::now();
    let omega_eg = 1.0;
    let d = (0.03 * PI).sqrt();
    let gamma = vacuum_decay_rate(d, omega_eg);
    let window = (omega_eg - 20.0 * gamma, omega_eg + 20.0 * gamma);
    let medium = VoxelMedium::empty();
    let grids = build_mode_grids(&medium, window, FrequencyRule { panels: 40, order: 8 }, 2).unwrap();
    let ems = vec![Emitter::new(Point::zeros(), Vector3::new(0.0, 0.0, d), omega_eg)];
    let table = couplings_for_medium(&medium, &ems, &grids).unwrap();
    let basis = build_bright_basis(&table, CouplingKind::Hybrid, DEFAULT_RANK_TOLERANCE).unwrap();
    let h = assemble_hybrid(&table, &basis).unwrap();
    let golden = decay_rate(&table, 0, window).unwrap();
    let times: Vec<f64> = (0..=150).map(|i| i as f64 * 2.0).collect();
    let psi = emitter_state(&h, &[Complex64::from(1.0)]).unwrap();
    let r = Propagator::new(&h).unwrap().run(&psi, &times).unwrap();
    let fit = fit_decay(&times, &r.population(0), golden).unwrap();
    let fit_err = (fit.rate - golden).abs() / golden;
    let analytic_err = (golden - gamma).abs() / gamma;
    report(
        6,
        "Wigner-Weisskopf consistency",
        fit_err <= WW_FIT_TOL && analytic_err <= WW_ANALYTIC_TOL,
        format!(
            "{} nodes, fit {:.6e} vs golden rule {golden:.6e} ({fit_err:.2e} <= {WW_FIT_TOL}), golden rule vs free space {gamma:.6e} ({analytic_err:.2e} <= {WW_ANALYTIC_TOL})",
            table.len(),
            fit.rate
        ),
        start,
        WW_BUDGET,
    );
}

#[test]
fn criterion_7_reciprocity_and_conditioning() {
    let start = Instant::now();
    let media = [
        drude_cube(3),
        build_voxel_medium(
            &Geometry::Sphere { center: [0.1, 0.0, -0.1], radius: 0.35 },
            PermittivityModel::Drude { plasma: 3.0, damping: 0.1 },
            5,
        )
        .unwrap(),
    ];
    let ems = cube_emitters();
    let (mut worst_recip, mut worst_resid): (f64, f64) = (0.0, 0.0);
    let mut pairs = 0;
    for medium in &media {
        let probes = default_probes(medium, &ems, DEFAULT_PROBE_SEED).unwrap();
        for k in 0..8 {
            let w = 0.9 + 0.2 * k as f64 / 7.0;
            let scat = solve_scattering(medium, w).unwrap();
            worst_resid = worst_resid.max(scat.probe_residual());
            for (a, x) in probes.iter().enumerate() {
                for y in &probes[a + 1..] {
                    let r = reciprocity_residual(&scat, x, y, RECIPROCITY_TOL).unwrap();
                    worst_recip = worst_recip.max(r.relative);
                    pairs += 1;
                }
            }
        }
    }
    report(
        7,
        "reciprocity and conditioning",
        worst_recip <= RECIPROCITY_TOL && worst_resid <= SOLVE_RESIDUAL_TOL,
        format!(
            "{pairs} probe pairs, worst reciprocity {worst_recip:.2e} <= {RECIPROCITY_TOL:.0e}, worst solve residual {worst_resid:.2e} <= {SOLVE_RESIDUAL_TOL:.0e}"
        ),
        start,
        RECIPROCITY_BUDGET,
    );
}

#[test]
fn criterion_8_overlap_structure() {
    let start = Instant::now();
    let medium = drude_cube(3);
    let mut ems = cube_emitters();
    ems.push(Emitter::new(Point::new(-0.4, 0.5, 0.3), Vector3::new(0.2, 1.0, -0.4), 0.97));
    let grids = build_mode_grids(&medium, (0.9, 1.1), FrequencyRule { panels: 1, order: 4 }, 6).unwrap();
    let table = couplings_for_medium(&medium, &ems, &grids).unwrap();
    let (mut herm, mut diag, mut lmin, mut formula): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    for kind in [CouplingKind::E, CouplingKind::M, CouplingKind::Hybrid] {
        let overlaps = overlap_matrices(&table, kind).unwrap();
        for (q, m) in overlaps.iter().enumerate() {
            herm = herm.max(frob(&(m - m.adjoint())));
            for i in 0..m.nrows() {
                diag = diag.max((m[(i, i)] - Complex64::from(1.0)).norm());
            }
            let eig = m.clone().symmetric_eigen();
            lmin = lmin.min(eig.eigenvalues.min());
            if kind == CouplingKind::Hybrid {
                let scat = solve_scattering(&medium, grids.frequencies().nodes[q]).unwrap();
                let r = overlap_green_residual(&table, m, &grids, &scat, q, OVERLAP_TOL).unwrap();
                formula = formula.max(r.relative);
            }
        }
    }
    report(
        8,
        "overlap-matrix structure",
        herm <= OVERLAP_TOL && diag <= OVERLAP_TOL && lmin >= -OVERLAP_PSD_FLOOR && formula <= OVERLAP_TOL,
        format!(
            "hermiticity {herm:.1e}, unit diagonal {diag:.1e}, min eigenvalue {lmin:.3e} >= -{OVERLAP_PSD_FLOOR:.0e}, hybrid Im G formula {formula:.1e} (bound {OVERLAP_TOL:.0e})"
        ),
        start,
        OVERLAP_BUDGET,
    );
}
