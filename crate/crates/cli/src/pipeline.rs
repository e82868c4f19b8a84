//! Command execution: builds grids and couplings once per run and writes the
//! tables of each requested stage into the bundle.

use std::fmt;
use std::io;

use nalgebra::DVector;
use num_complex::Complex64;
use qpp_dbm::dbm::{build_bright_basis, couplings_for_medium, overlap_matrices, BrightBasis, CouplingKind, CouplingTable};
use qpp_dbm::dynamics::{
    assemble_double_bright, assemble_full, assemble_hybrid, bright_photon_full, dark_photon_full, decay_rate, emitter_state,
    fit_decay, vacuum_decay_rate, DynamicsResult, ModelSet, Propagator,
};
use qpp_dbm::greens::solve_scattering;
use qpp_dbm::identities::{
    bright_algebra_residuals, compensation_residual, default_probes, ldos_forms_residual, ldos_identity_residual,
    overlap_green_residual, reciprocity_residual, LdosForm, ResidualReport, Tolerances,
};
use qpp_dbm::modegrid::{build_mode_grids, ModeGrids};
use qpp_dbm::units::Dimension;
use qpp_dbm::Point;
use serde::Serialize;
use serde_json::json;

use crate::bundle::{col, Bundle, Cell, Table};
use crate::config::{Diagnostic, InitialState, Scenario, ScenarioConfig};

/// Largest full-model dimension `dynamics` will compare against.
pub const MAX_FULL_DIM: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Greens,
    Couplings,
    Dbm,
    Dynamics,
    Verify,
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Greens => "greens",
            Command::Couplings => "couplings",
            Command::Dbm => "dbm",
            Command::Dynamics => "dynamics",
            Command::Verify => "verify",
            Command::All => "all",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}", Diagnostics(.0))]
    Config(Vec<Diagnostic>),
    #[error("numerical failure: {0}")]
    Numerical(#[from] qpp_dbm::Error),
    #[error("{failed} of {total} identity checks failed")]
    Verification { failed: usize, total: usize },
    #[error("missing quantity: {0}")]
    MissingQuantity(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

struct Diagnostics<'a>(&'a [Diagnostic]);

impl fmt::Display for Diagnostics<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "config error: {d}")?;
        }
        Ok(())
    }
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) | RunError::MissingQuantity(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Verification { .. } => 4,
        }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        RunError::Config(vec![Diagnostic { field: field.into(), line: None, column: None, message: message.into() }])
    }
}

fn num<E: Into<qpp_dbm::Error>>(e: E) -> RunError {
    RunError::Numerical(e.into())
}

pub struct Run {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub tolerances: Tolerances,
    pub profile: String,
    pub seed: u64,
    pub bundle: Bundle,
    grids: ModeGrids,
    table: Option<CouplingTable>,
    bright: Option<BrightBasis>,
}

fn c_re(z: Complex64) -> Cell {
    Cell::Num(z.re)
}

fn c_im(z: Complex64) -> Cell {
    Cell::Num(z.im)
}

impl Run {
    pub fn new(
        config: ScenarioConfig,
        scenario: Scenario,
        tolerances: Tolerances,
        profile: String,
        seed: u64,
        bundle: Bundle,
    ) -> Result<Self, RunError> {
        let grids = build_mode_grids(&scenario.medium, scenario.window, scenario.rule, scenario.angular_order).map_err(num)?;
        let run = Run { config, scenario, tolerances, profile, seed, bundle, grids, table: None, bright: None };
        run.check_sizes()?;
        Ok(run)
    }

    fn full_dim(&self) -> usize {
        let per_node = self.grids.kappa.degeneracy_len() + self.grids.mu.degeneracy_len();
        self.scenario.emitters.len() + self.grids.frequencies().len() * per_node
    }

    fn check_sizes(&self) -> Result<(), RunError> {
        if let Some(d) = &self.scenario.dynamics {
            let needs_full = d.compare || matches!(d.initial, InitialState::DarkPhoton { .. });
            if needs_full && self.full_dim() > MAX_FULL_DIM {
                return Err(RunError::config(
                    "dynamics.compare",
                    format!(
                        "full model dimension {} exceeds {MAX_FULL_DIM}; reduce grids or set compare = false",
                        self.full_dim()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn execute(&mut self, command: Command) -> Result<(), RunError> {
        self.write_provenance();
        let outcome = match command {
            Command::Greens => self.greens(),
            Command::Couplings => self.couplings(),
            Command::Dbm => self.dbm(),
            Command::Dynamics => self.dynamics(),
            Command::Verify => self.verify(),
            Command::All => self.all(),
        };
        // the manifest is written even when verification fails
        match outcome {
            Ok(()) | Err(RunError::Verification { .. }) => {
                self.bundle.finish(command.name(), &self.config)?;
                outcome
            }
            Err(e) => Err(e),
        }
    }

    fn all(&mut self) -> Result<(), RunError> {
        self.couplings()?;
        self.greens()?;
        self.dbm()?;
        if self.scenario.dynamics.is_some() {
            self.dynamics()?;
        }
        self.verify()
    }

    fn write_provenance(&mut self) {
        let s = &self.scenario;
        let f = self.grids.frequencies();
        let units = match s.units {
            qpp_dbm::units::UnitSystem::Natural => json!({"system": "natural"}),
            qpp_dbm::units::UnitSystem::Si { length_scale } => json!({"system": "si", "length_scale_m": length_scale}),
        };
        self.bundle.section("units", units);
        self.bundle.section("seed", self.seed);
        self.bundle.section("tolerance_profile", &self.profile);
        self.bundle.section("tolerances", self.tolerances);
        self.bundle.section(
            "quadrature",
            json!({
                "window": [f.window.0, f.window.1],
                "panels": f.rule.panels,
                "order": f.rule.order,
                "n_freq": f.len(),
                "nodes": f.nodes,
                "weights": f.weights,
                "angular_order": self.grids.kappa.angular_order,
                "n_kappa_per_node": self.grids.kappa.degeneracy_len(),
                "n_mu_per_node": self.grids.mu.degeneracy_len(),
            }),
        );
        self.bundle.section(
            "medium",
            json!({
                "voxels": s.medium.len(),
                "voxel_volume": s.medium.voxel_volume(),
                "uncoupled": s.medium.is_uncoupled(),
                "content_hash": format!("{:016x}", s.medium.content_hash()),
            }),
        );
        self.bundle.section(
            "notes",
            ["internal quantities use hbar = c = eps0 = 1", "dynamics keeps only rotating-wave terms of the emitter-field coupling"],
        );
    }

    fn table(&mut self) -> Result<&CouplingTable, RunError> {
        if self.table.is_none() {
            log::info!("computing couplings on {} frequency nodes", self.grids.frequencies().len());
            let t = couplings_for_medium(&self.scenario.medium, &self.scenario.emitters, &self.grids).map_err(num)?;
            self.table = Some(t);
        }
        Ok(self.table.as_ref().expect("set above"))
    }

    fn bright(&mut self) -> Result<&BrightBasis, RunError> {
        if self.bright.is_none() {
            let (kind, tau) = (self.scenario.kind, self.scenario.rank_tolerance);
            let b = build_bright_basis(self.table()?, kind, tau).map_err(num)?;
            self.bright = Some(b);
        }
        Ok(self.bright.as_ref().expect("set above"))
    }

    fn probes(&self) -> Result<Vec<Point>, RunError> {
        default_probes(&self.scenario.medium, &self.scenario.emitters, self.seed).map_err(num)
    }

    fn greens(&mut self) -> Result<(), RunError> {
        let probes = self.probes()?;
        let n_em = self.scenario.emitters.len();
        let mut pt = Table::new(
            "probes",
            vec![
                col("probe", Dimension::Dimensionless),
                col("x", Dimension::Length),
                col("y", Dimension::Length),
                col("z", Dimension::Length),
                col("kind", Dimension::Dimensionless),
            ],
        );
        for (i, p) in probes.iter().enumerate() {
            let kind = if i < n_em { "emitter" } else { "random" };
            pt.push(vec![i.into(), p.x.into(), p.y.into(), p.z.into(), kind.into()]);
        }
        let mut solver = Table::new(
            "solver",
            vec![
                col("node", Dimension::Dimensionless),
                col("omega", Dimension::Frequency),
                col("condition", Dimension::Dimensionless),
                col("residual", Dimension::Dimensionless),
            ],
        );
        // Re G diverges at coincident points; only Im G is reported there (re = NaN)
        let mut gt = Table::new(
            "green_probes",
            vec![
                col("node", Dimension::Dimensionless),
                col("omega", Dimension::Frequency),
                col("field_probe", Dimension::Dimensionless),
                col("source_probe", Dimension::Dimensionless),
                col("i", Dimension::Dimensionless),
                col("j", Dimension::Dimensionless),
                col("re", Dimension::Green),
                col("im", Dimension::Green),
            ],
        );
        for (q, &w) in self.grids.frequencies().nodes.iter().enumerate() {
            let scat = solve_scattering(&self.scenario.medium, w).map_err(num)?;
            solver.push(vec![q.into(), w.into(), scat.condition_estimate().into(), scat.probe_residual().into()]);
            for (a, x) in probes.iter().enumerate() {
                for (b, y) in probes.iter().enumerate() {
                    if x == y {
                        let im = scat.im_green(x, y).map_err(num)?;
                        for i in 0..3 {
                            for j in 0..3 {
                                gt.push(vec![q.into(), w.into(), a.into(), b.into(), i.into(), j.into(), f64::NAN.into(), im[(i, j)].into()]);
                            }
                        }
                    } else {
                        let g = scat.green_tensor(x, y).map_err(num)?.tensor;
                        for i in 0..3 {
                            for j in 0..3 {
                                let z = g[(i, j)];
                                gt.push(vec![q.into(), w.into(), a.into(), b.into(), i.into(), j.into(), c_re(z), c_im(z)]);
                            }
                        }
                    }
                }
            }
        }
        self.bundle.write_table(&pt)?;
        self.bundle.write_table(&solver)?;
        self.bundle.write_table(&gt)?;
        Ok(())
    }

    fn couplings(&mut self) -> Result<(), RunError> {
        let table = self.table()?.clone();
        let mut profile = Table::new(
            "omega_profile",
            vec![
                col("node", Dimension::Dimensionless),
                col("omega", Dimension::Frequency),
                col("emitter", Dimension::Dimensionless),
                col("Omega_e", Dimension::Coupling),
                col("Omega_m", Dimension::Coupling),
                col("Omega", Dimension::Coupling),
            ],
        );
        let rows_cols = |name: &str| {
            Table::new(
                name,
                vec![
                    col("node", Dimension::Dimensionless),
                    col("omega", Dimension::Frequency),
                    col("emitter", Dimension::Dimensionless),
                    col("mode", Dimension::Dimensionless),
                    col("re", Dimension::Coupling),
                    col("im", Dimension::Coupling),
                ],
            )
        };
        let mut re = rows_cols("couplings_e");
        let mut rm = rows_cols("couplings_m");
        let mut nodes = Table::new(
            "frequency_nodes",
            vec![
                col("node", Dimension::Dimensionless),
                col("omega", Dimension::Frequency),
                col("weight", Dimension::Frequency),
            ],
        );
        for (q, node) in table.nodes.iter().enumerate() {
            nodes.push(vec![q.into(), node.omega.into(), node.freq_weight.into()]);
            for k in 0..table.emitters.len() {
                profile.push(vec![
                    q.into(),
                    node.omega.into(),
                    k.into(),
                    node.omega_e[k].into(),
                    node.omega_m[k].into(),
                    node.omega_total[k].into(),
                ]);
            }
            for (kind, t) in [(CouplingKind::E, &mut re), (CouplingKind::M, &mut rm)] {
                let w = node.weighted_rows(kind);
                for k in 0..w.nrows() {
                    for a in 0..w.ncols() {
                        t.push(vec![q.into(), node.omega.into(), k.into(), a.into(), c_re(w[(k, a)]), c_im(w[(k, a)])]);
                    }
                }
            }
        }
        for t in [&nodes, &profile, &re, &rm] {
            self.bundle.write_table(t)?;
        }
        Ok(())
    }

    fn dbm(&mut self) -> Result<(), RunError> {
        let bright = self.bright()?.clone();
        let n = self.scenario.emitters.len();
        let idx = |name: &str, extra: &[(&str, Dimension)]| {
            let mut cols = vec![col("node", Dimension::Dimensionless), col("omega", Dimension::Frequency)];
            cols.extend(extra.iter().map(|(c, d)| col(*c, *d)));
            Table::new(name, cols)
        };
        let d0 = Dimension::Dimensionless;
        let mut overlap = idx("overlap", &[("i", d0), ("j", d0), ("re", d0), ("im", d0)]);
        let mut eig = idx("eigenvalues", &[("index", d0), ("lambda", d0)]);
        let mut rank = idx("n_ind", &[("n_active", d0), ("n_ind", d0)]);
        let mut beta = idx("beta", &[("bright", d0), ("emitter", d0), ("re", d0), ("im", d0)]);
        let mut chi = idx("chi", &[("emitter", d0), ("bright", d0), ("re", Dimension::Coupling), ("im", Dimension::Coupling)]);
        for (q, node) in bright.nodes.iter().enumerate() {
            let w = node.omega;
            let act = &node.active;
            rank.push(vec![q.into(), w.into(), act.len().into(), node.n_ind().into()]);
            for i in 0..act.len() {
                for j in 0..act.len() {
                    let z = node.overlap[(i, j)];
                    overlap.push(vec![q.into(), w.into(), act[i].into(), act[j].into(), c_re(z), c_im(z)]);
                }
            }
            if let Some(l) = &node.lowdin {
                for (i, lam) in l.eigenvalues.iter().enumerate() {
                    eig.push(vec![q.into(), w.into(), i.into(), (*lam).into()]);
                }
                for r in 0..l.beta.nrows() {
                    for c in 0..l.beta.ncols() {
                        let z = l.beta[(r, c)];
                        beta.push(vec![q.into(), w.into(), r.into(), act[c].into(), c_re(z), c_im(z)]);
                    }
                }
            }
            for k in 0..n {
                for j in 0..node.chi.ncols() {
                    let z = node.chi[(k, j)];
                    chi.push(vec![q.into(), w.into(), k.into(), j.into(), c_re(z), c_im(z)]);
                }
            }
        }
        for t in [&overlap, &eig, &rank, &beta, &chi] {
            self.bundle.write_table(t)?;
        }
        self.bundle.section(
            "dbm",
            json!({
                "kind": bright.kind,
                "rank_tolerance": bright.tolerance,
                "n_emitters": n,
                "n_ind": bright.n_ind(),
            }),
        );
        Ok(())
    }

    fn dynamics(&mut self) -> Result<(), RunError> {
        let Some(spec) = self.scenario.dynamics.clone() else {
            return Err(RunError::config("dynamics", "the dynamics command needs a dynamics block"));
        };
        let table = self.table()?.clone();
        let hyb_basis = if self.scenario.kind == CouplingKind::Hybrid {
            self.bright()?.clone()
        } else {
            build_bright_basis(&table, CouplingKind::Hybrid, self.scenario.rank_tolerance).map_err(num)?
        };
        let hybrid = assemble_hybrid(&table, &hyb_basis).map_err(num)?;
        let times = &spec.times;
        let n = table.emitters.len();

        let (results, deviations) = if spec.compare {
            let tau = self.scenario.rank_tolerance;
            let be = build_bright_basis(&table, CouplingKind::E, tau).map_err(num)?;
            let bm = build_bright_basis(&table, CouplingKind::M, tau).map_err(num)?;
            let full = assemble_full(&table);
            let db = assemble_double_bright(&table, &be, &bm).map_err(num)?;
            let psi = match &spec.initial {
                InitialState::Emitters(a) => {
                    let amps: Vec<Complex64> = a.iter().map(|&x| Complex64::from(x)).collect();
                    emitter_state(&full, &amps).map_err(num)?
                }
                InitialState::BrightPhoton { node, index } => {
                    check_bright_index(&hybrid, *node, *index)?;
                    bright_photon_full(&hybrid, &full, *node, *index)
                }
                InitialState::DarkPhoton { node, mode } => {
                    if *mode >= full.block_len(*node) {
                        return Err(RunError::config(
                            "dynamics.initial.dark_photon.mode",
                            format!("mode {mode} out of range, node {node} has {} modes", full.block_len(*node)),
                        ));
                    }
                    dark_photon_full(&hybrid, &full, *node, *mode).ok_or_else(|| {
                        RunError::config("dynamics.initial.dark_photon.mode", "the mode lies entirely in the bright span")
                    })?
                }
            };
            let set = ModelSet::new(&full, &db, &hybrid).map_err(num)?;
            let cmp = set.compare(&psi, times).map_err(num)?;
            let dev = json!({
                "max_dev_hybrid": cmp.max_dev_hybrid,
                "max_dev_double_bright": cmp.max_dev_double_bright,
                "dimensions": {"full-em": full.dim(), "double-bright": db.dim(), "hybrid": hybrid.dim()},
            });
            (vec![cmp.full, cmp.double_bright, cmp.hybrid], Some(dev))
        } else {
            let psi = match &spec.initial {
                InitialState::Emitters(a) => {
                    let amps: Vec<Complex64> = a.iter().map(|&x| Complex64::from(x)).collect();
                    emitter_state(&hybrid, &amps).map_err(num)?
                }
                InitialState::BrightPhoton { node, index } => {
                    check_bright_index(&hybrid, *node, *index)?;
                    let mut v = DVector::zeros(hybrid.dim());
                    v[hybrid.block_offsets[*node] + index] = Complex64::from(1.0);
                    v
                }
                InitialState::DarkPhoton { .. } => unreachable!("rejected during validation"),
            };
            let r = Propagator::new(&hybrid).map_err(num)?.run(&psi, times).map_err(num)?;
            (vec![r], None)
        };

        for r in &results {
            let mut cols = vec![col("t", Dimension::Time)];
            cols.extend((1..=n).map(|k| col(format!("P_{k}"), Dimension::Dimensionless)));
            cols.push(col("norm", Dimension::Dimensionless));
            let mut t = Table::new(format!("populations_{}", r.model), cols);
            for (i, &time) in r.times.iter().enumerate() {
                let mut row = vec![Cell::Num(time)];
                row.extend(r.populations[i].iter().map(|&p| Cell::Num(p)));
                row.push(r.norms[i].into());
                t.push(row);
            }
            self.bundle.write_table(&t)?;
        }

        let reference = results.last().expect("hybrid result is always present");
        let decay = self.decay_table(&table, reference);
        self.bundle.write_table(&decay)?;
        if let Some(dev) = &deviations {
            self.bundle.write_json("comparison.json", dev)?;
        }
        self.bundle.section("dynamics", json!({ "comparison": deviations, "time_points": times.len() }));
        Ok(())
    }

    fn decay_table(&self, table: &CouplingTable, hybrid: &DynamicsResult) -> Table {
        let f = Dimension::Frequency;
        let mut t = Table::new(
            "decay",
            vec![
                col("emitter", Dimension::Dimensionless),
                col("omega_eg", f),
                col("gamma_golden_rule", f),
                col("gamma_free_space", f),
                col("gamma_fit", f),
                col("fit_rms", Dimension::Dimensionless),
            ],
        );
        for (k, em) in table.emitters.iter().enumerate() {
            let golden = decay_rate(table, k, self.scenario.window).unwrap_or(f64::NAN);
            let free = vacuum_decay_rate(em.dipole.norm(), em.frequency);
            let pop = hybrid.population(k);
            let fit = if pop[0] > 0.0 && golden > 0.0 { fit_decay(&hybrid.times, &pop, golden).ok() } else { None };
            let (rate, rms) = fit.map(|f| (f.rate, f.rms)).unwrap_or((f64::NAN, f64::NAN));
            t.push(vec![k.into(), em.frequency.into(), golden.into(), free.into(), rate.into(), rms.into()]);
        }
        t
    }

    fn verify(&mut self) -> Result<(), RunError> {
        let tol = self.tolerances;
        let table = self.table()?.clone();
        let bright = self.bright()?.clone();
        let probes = self.probes()?;
        let overlaps = match overlap_matrices(&table, CouplingKind::Hybrid) {
            Ok(o) => Some(o),
            Err(e) => {
                log::warn!("hybrid overlap check skipped: {e}");
                None
            }
        };
        let mut reports: Vec<ResidualReport> = Vec::new();
        for (q, &w) in self.grids.frequencies().nodes.iter().enumerate() {
            let scat = solve_scattering(&self.scenario.medium, w).map_err(num)?;
            reports.push(ResidualReport::new("solve_residual", w, &[], scat.probe_residual(), 1.0, tol.reciprocity));
            for (a, x) in probes.iter().enumerate() {
                for y in probes[a + 1..].iter().filter(|y| *y != x) {
                    reports.push(reciprocity_residual(&scat, x, y, tol.reciprocity).map_err(num)?);
                }
                for y in [x, &probes[0]] {
                    for form in [LdosForm::BoundaryVolume, LdosForm::EM] {
                        reports.push(ldos_identity_residual(&scat, &self.grids, q, x, y, form, tol.quadrature).map_err(num)?);
                    }
                    reports.push(ldos_forms_residual(&scat, &self.grids, q, x, y, tol.exact).map_err(num)?);
                }
            }
            for k in 0..table.emitters.len() {
                let [discrete, direct] = compensation_residual(k, &table, &self.grids, &scat, q, &tol).map_err(num)?;
                reports.push(discrete);
                reports.push(direct);
            }
            if let Some(o) = &overlaps {
                reports.push(overlap_green_residual(&table, &o[q], &self.grids, &scat, q, tol.exact).map_err(num)?);
            }
        }
        reports.extend(bright_algebra_residuals(&bright, &tol));

        let mut t = Table::new(
            "residuals",
            vec![
                col("identity", Dimension::Dimensionless),
                col("omega", Dimension::Frequency),
                col("absolute", Dimension::Dimensionless),
                col("relative", Dimension::Dimensionless),
                col("tolerance", Dimension::Dimensionless),
                col("pass", Dimension::Dimensionless),
            ],
        );
        for r in &reports {
            t.push(vec![
                r.identity.clone().into(),
                r.omega.into(),
                r.absolute.into(),
                r.relative.into(),
                r.tolerance.into(),
                r.pass.into(),
            ]);
        }
        self.bundle.write_table(&t)?;
        self.bundle.write_json("residuals.json", &reports)?;
        let failed = reports.iter().filter(|r| !r.pass).count();
        for r in reports.iter().filter(|r| !r.pass) {
            log::error!("{} at omega {:.6}: relative residual {:.3e} > {:.1e}", r.identity, r.omega, r.relative, r.tolerance);
        }
        self.bundle.section("verification", Summary { checks: reports.len(), failed });
        if failed > 0 {
            return Err(RunError::Verification { failed, total: reports.len() });
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary {
    checks: usize,
    failed: usize,
}

fn check_bright_index(h: &qpp_dbm::dynamics::SingleExcitationHamiltonian, node: usize, index: usize) -> Result<(), RunError> {
    let n = h.block_len(node);
    if index >= n {
        return Err(RunError::config(
            "dynamics.initial.bright_photon.index",
            format!("bright index {index} out of range, node {node} has {n} bright modes"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::config("x", "bad").exit_code(), 2);
        assert_eq!(RunError::MissingQuantity("q".into()).exit_code(), 2);
        let e = qpp_dbm::greens::GreensError::NonPositiveFrequency(0.0);
        assert_eq!(num(e).exit_code(), 3);
        assert_eq!(RunError::Verification { failed: 1, total: 2 }.exit_code(), 4);
        assert_eq!(RunError::Io(io::Error::other("disk")).exit_code(), 1);
    }

    #[test]
    fn diagnostics_list_every_field() {
        let e = RunError::Config(vec![
            Diagnostic { field: "a".into(), line: Some(2), column: Some(5), message: "m".into() },
            Diagnostic { field: "b".into(), line: None, column: None, message: "n".into() },
        ]);
        assert_eq!(e.to_string(), "config error: line 2, column 5: a: m\nconfig error: b: n");
    }
}
