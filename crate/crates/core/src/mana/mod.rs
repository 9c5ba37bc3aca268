//! Augmented nodal assembly and the solvers on top of it.
//!
//! Two system flavors share one assembly layer ([`stamps`]):
//!
//! * the **linear steady-state form** ([`assemble_ss`]): every element is
//!   linear (loads as fixed impedances, converters absent from the matrix —
//!   they enter as right-hand-side current injections), solved directly; and
//! * the **Newton power-flow form** ([`solve_pf`]): the same linear
//!   structure plus constant-power load rows and converter constraint rows,
//!   iterated with a full Newton method.
//!
//! Both are assembled in real-split form over the unknown ordering of
//! [`index::IndexMap`] and factored by the crate's sparse LU. The augmented
//! shape — extra current unknowns paired with element equations instead of
//! everything reduced to admittances — is what lets sources, transformers,
//! switches and converter constraints enter the matrix directly.

pub mod index;
mod pf;
mod stamps;

pub use index::{index_unknowns, Formulation, IndexMap, Side, Unknown};
pub use pf::{assemble_pf_jacobian, residuals, solve_pf, PfOptions, PfSolution, PfStart};

use crate::error::{AssemblyError, SolveError};
use crate::netmodel::{Mat3, NetworkModel, WindingConnection};
use crate::netmodel::validate::Dsu;
use crate::phasor::Phasor;
use crate::sparse::{Csc, SparseLu, Triplets};

use index::{neutral_kind, NeutralKind};

/// Which system a [`ManaSystem`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    SsLinear,
    PfJacobian,
}

/// An assembled real-split system: stamps, right-hand side, and the unknown
/// ordering, with cached factors.
///
/// Stamps appended after assembly (fault admittances) can be rolled back
/// bit-exactly via [`ManaSystem::checkpoint`]/[`ManaSystem::rollback`], so a
/// fault study never re-assembles the base network.
#[derive(Debug, Clone)]
pub struct ManaSystem {
    pub kind: SystemKind,
    pub index: IndexMap,
    pub tris: Triplets,
    /// Assembled right-hand side (source EMFs); per-solve injections are
    /// added onto a copy.
    pub rhs: Vec<f64>,
    csc: Option<Csc>,
    lu: Option<SparseLu>,
}

impl ManaSystem {
    pub fn new(kind: SystemKind, index: IndexMap, tris: Triplets, rhs: Vec<f64>) -> Self {
        debug_assert_eq!(tris.n(), index.n_real());
        debug_assert_eq!(rhs.len(), index.n_real());
        ManaSystem { kind, index, tris, rhs, csc: None, lu: None }
    }

    pub fn n_real(&self) -> usize {
        self.index.n_real()
    }

    pub fn is_factored(&self) -> bool {
        self.lu.is_some()
    }

    /// Raw stamp count; pass to [`Self::rollback`] to drop later stamps.
    pub fn checkpoint(&self) -> usize {
        self.tris.raw_len()
    }

    /// Removes all stamps appended after `checkpoint` and invalidates the
    /// cached factorization. The restored matrix is bit-identical to the one
    /// the checkpoint was taken on.
    pub fn rollback(&mut self, checkpoint: usize) {
        self.tris.truncate(checkpoint);
        self.invalidate();
    }

    fn invalidate(&mut self) {
        self.csc = None;
        self.lu = None;
    }

    /// Appends a phase-to-ground admittance at a complex slot.
    pub fn add_shunt(&mut self, slot: usize, y: Phasor) {
        stamps::stamp_complex(&mut self.tris, slot, slot, y);
        self.invalidate();
    }

    /// Appends a 3x3 phase-coupling admittance block over the given complex
    /// slots (absent phases skipped). This is how fault blocks enter.
    pub fn add_coupling(&mut self, slots: &[Option<usize>; 3], y: &Mat3) {
        for (p, sp) in slots.iter().enumerate() {
            let Some(sp) = sp else { continue };
            for (q, sq) in slots.iter().enumerate() {
                let Some(sq) = sq else { continue };
                stamps::stamp_complex(&mut self.tris, *sp, *sq, y[p][q]);
            }
        }
        self.invalidate();
    }

    /// Factors the current stamps. `net` is only consulted to name the
    /// offending unknown if the matrix turns out singular.
    pub fn factor(&mut self, net: &NetworkModel) -> Result<(), SolveError> {
        let csc = self.tris.to_csc();
        let lu = csc
            .factor()
            .map_err(|e| SolveError::from_lu(e, |col| self.index.describe_unknown(net, col)))?;
        self.csc = Some(csc);
        self.lu = Some(lu);
        Ok(())
    }

    /// Solves for an arbitrary right-hand side against the cached factors,
    /// enforcing the relative-residual contract (one iterative-refinement
    /// pass is applied before giving up).
    ///
    /// Panics if [`Self::factor`] has not been called since the last stamp
    /// change; that is a programming error, not an input error.
    pub fn solve_with(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let csc = self.csc.as_ref().expect("factor() before solve_with()");
        let lu = self.lu.as_ref().expect("factor() before solve_with()");
        let mut x = lu.solve(rhs);
        let b_norm = inf_norm(rhs);
        let mut r = residual(csc, &x, rhs);
        let mut r_norm = inf_norm(&r);
        if r_norm > 1e-10 * b_norm {
            // One refinement pass: solve A·d = r and subtract.
            let d = lu.solve(&r);
            for (xi, di) in x.iter_mut().zip(d.iter()) {
                *xi -= di;
            }
            r = residual(csc, &x, rhs);
            r_norm = inf_norm(&r);
        }
        if r_norm > 1e-10 * b_norm {
            let achieved = if b_norm > 0.0 { r_norm / b_norm } else { r_norm };
            return Err(SolveError::ResidualTooLarge { achieved });
        }
        Ok(x)
    }

    /// [`Self::solve_with`] returning complex slot values.
    pub fn solve_complex(&self, rhs: &[f64]) -> Result<Vec<Phasor>, SolveError> {
        Ok(pair_complex(&self.solve_with(rhs)?))
    }

    /// Per-row `|A·x − b|` against the current matrix (real-split rows).
    /// Requires the system to be factored (which caches the CSC form).
    pub fn row_residuals(&self, x: &[f64], rhs: &[f64]) -> Vec<f64> {
        let csc = self.csc.as_ref().expect("factor() before row_residuals()");
        residual(csc, x, rhs).into_iter().map(f64::abs).collect()
    }
}

fn residual(a: &Csc, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b.iter()) {
        *ri -= bi;
    }
    r
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Folds a real-split vector back into complex slot values.
pub fn pair_complex(x: &[f64]) -> Vec<Phasor> {
    x.chunks_exact(2).map(|c| Phasor::new(c[0], c[1])).collect()
}

/// Adds a complex current injection into the KCL row of a complex slot.
pub fn add_injection(rhs: &mut [f64], slot: usize, i: Phasor) {
    rhs[2 * slot] += i.re;
    rhs[2 * slot + 1] += i.im;
}

/// Assembles the linear steady-state system: branches, transformers,
/// switches, sources, and every load as a fixed impedance (its value at
/// nominal voltage — run [`crate::linearize`] first to pin constant-power
/// loads at their power-flow voltages instead).
///
/// Converters never enter this matrix; their currents are injections added
/// to a right-hand side per solve.
pub fn assemble_ss(net: &NetworkModel) -> Result<ManaSystem, AssemblyError> {
    let idx = index_unknowns(net, Formulation::Ss)?;
    ss_island_check(net)?;
    let n = idx.n_real();
    let mut tris = Triplets::new(n);
    let mut rhs = vec![0.0; n];
    stamps::stamp_branches(net, &idx, &mut tris)?;
    stamps::stamp_transformers(net, &idx, &mut tris)?;
    stamps::stamp_switches(net, &idx, &mut tris)?;
    stamps::stamp_sources(net, &idx, &mut tris, &mut rhs)?;
    stamps::stamp_load_shunts(net, &idx, &mut tris, true)?;
    Ok(ManaSystem::new(SystemKind::SsLinear, idx, tris, rhs))
}

/// Factors (if needed) and solves the system against its assembled
/// right-hand side, returning complex slot values.
pub fn solve_linear(sys: &mut ManaSystem, net: &NetworkModel) -> Result<Vec<Phasor>, SolveError> {
    if !sys.is_factored() {
        sys.factor(net)?;
    }
    let rhs = sys.rhs.clone();
    sys.solve_complex(&rhs)
}

/// Rejects islands with no voltage reference *and* no path to ground: such
/// a subnetwork makes the steady-state matrix structurally singular. An
/// island is acceptable when it contains an ideal source (voltage pinned) or
/// any ground tie — a load, a shunt, a grounded-wye winding — because
/// injections alone then determine its voltages.
fn ss_island_check(net: &NetworkModel) -> Result<(), AssemblyError> {
    let nb = net.buses.len();
    if nb == 0 {
        return Ok(());
    }
    let bus_map = net.bus_map();
    let resolve = |element: &str, id: &str| -> Result<usize, AssemblyError> {
        bus_map.get(id).copied().ok_or_else(|| AssemblyError::UnknownBus {
            element: element.to_string(),
            bus: id.to_string(),
        })
    };
    let mut dsu = Dsu::new(nb);
    let mut anchored = vec![false; nb];
    for br in &net.branches {
        let (f, t) = (resolve("branch", &br.from)?, resolve("branch", &br.to)?);
        if !net.buses[f].phases.intersect(net.buses[t].phases).is_empty() {
            dsu.union(f, t);
        }
        if br.y_shunt_abc.iter().flatten().any(|y| y.norm() > 0.0) {
            anchored[f] = true;
            anchored[t] = true;
        }
    }
    for tr in &net.transformers {
        let (f, t) = (resolve("transformer", &tr.from)?, resolve("transformer", &tr.to)?);
        dsu.union(f, t);
        for (side_bus, conn) in [(f, tr.conn_from), (t, tr.conn_to)] {
            if conn == WindingConnection::WyeGround
                && neutral_kind(conn, tr.z0_path) != NeutralKind::Floating
            {
                anchored[side_bus] = true;
            }
        }
    }
    for sw in &net.switches {
        let (f, t) = (resolve("switch", &sw.from)?, resolve("switch", &sw.to)?);
        if sw.closed.iter().any(|c| *c) {
            dsu.union(f, t);
        }
    }
    for s in &net.sources {
        anchored[resolve("source", &s.bus)?] = true;
    }
    for l in &net.loads {
        let b = resolve("load", &l.bus)?;
        if l.s_phase.iter().flatten().any(|s| s.norm() > 0.0) {
            anchored[b] = true;
        }
    }
    // Any island without an anchored member is floating.
    let roots: Vec<usize> = (0..nb).map(|b| dsu.find(b)).collect();
    let mut island_ok = vec![false; nb];
    for b in 0..nb {
        if anchored[b] {
            island_ok[roots[b]] = true;
        }
    }
    for b in 0..nb {
        if !island_ok[roots[b]] {
            let buses = (0..nb)
                .filter(|&o| roots[o] == roots[b])
                .map(|o| net.buses[o].id.clone())
                .collect();
            return Err(AssemblyError::FloatingIsland { buses });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{diag_phase_matrix, LoadModel, Phase, ZeroSeqPath};
    use crate::phasor::{invert_dense_complex, polar_deg};
    use crate::seq::{to_sequence, PhaseTriple};
    use crate::testnet::*;

    fn solve(net: &NetworkModel) -> (IndexMap, Vec<Phasor>) {
        let mut sys = assemble_ss(net).expect("assembly");
        let x = solve_linear(&mut sys, net).expect("solve");
        (sys.index, x)
    }

    #[test]
    fn ideal_source_feeding_unit_impedance_load() {
        let mut n = net(10.0, &[bus("b1", "abc")]);
        n.sources.push(source("s1", "b1", 1.0, 0.0));
        n.loads.push(load_z("l1", "b1", Phasor::new(1.0, 0.0)));
        let (idx, x) = solve(&n);
        let va = x[idx.v(0, Phase::A).unwrap()];
        assert!((va - Phasor::new(1.0, 0.0)).norm() < 1e-12);
        // Load draws y·V = 1 pu; the source current unknown carries it.
        let iva = x[idx.source_current(0, Phase::A).unwrap()];
        assert!((iva - Phasor::new(1.0, 0.0)).norm() < 1e-12);
        let ivb = x[idx.source_current(0, Phase::B).unwrap()];
        assert!((ivb - polar_deg(1.0, -120.0)).norm() < 1e-12);
    }

    #[test]
    fn switch_state_gates_the_load_current() {
        let mut n = net(10.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        n.sources.push(source("s1", "b1", 1.0, 0.0));
        n.switches.push(switch("w1", "b1", "b2", false));
        n.loads.push(load_z("l1", "b2", Phasor::new(0.5, 0.2)));
        let (idx, x) = solve(&n);
        assert!(x[idx.v(1, Phase::A).unwrap()].norm() < 1e-12);
        assert!(x[idx.switch_current(0, Phase::A).unwrap()].norm() < 1e-12);

        n.switches[0].closed = [true; 3];
        let (idx, x) = solve(&n);
        let v2 = x[idx.v(1, Phase::A).unwrap()];
        assert!((v2 - Phasor::new(1.0, 0.0)).norm() < 1e-12);
        let is = x[idx.switch_current(0, Phase::A).unwrap()];
        let y = Phasor::new(0.5, 0.2).conj();
        assert!((is - y).norm() < 1e-12); // switch carries the load current
    }

    /// Dense nodal oracle: the source is folded into a Norton equivalent and
    /// the full 9x9 complex admittance system solved densely.
    #[test]
    fn three_bus_radial_matches_dense_nodal_oracle() {
        let mut n = net(10.0, &[bus("b1", "abc"), bus("b2", "abc"), bus("b3", "abc")]);
        let z_int = diag_phase_matrix(Phasor::new(0.0, 0.05));
        n.sources.push(source_z("s1", "b1", 1.02, z_int));
        n.branches.push(branch("ln12", "b1", "b2", Phasor::new(0.02, 0.08), Phasor::new(0.06, 0.24)));
        n.branches.push(branch("ln23", "b2", "b3", Phasor::new(0.03, 0.10), Phasor::new(0.09, 0.30)));
        let mut l2 = load_z("l2", "b2", Phasor::new(0.0, 0.0));
        l2.s_phase = [
            Some(Phasor::new(0.30, 0.10)),
            Some(Phasor::new(0.25, 0.05)),
            Some(Phasor::new(0.20, 0.15)),
        ];
        n.loads.push(l2);
        let mut l3 = load_z("l3", "b3", Phasor::new(0.0, 0.0));
        l3.s_phase = [
            Some(Phasor::new(0.15, 0.05)),
            Some(Phasor::new(0.10, 0.02)),
            Some(Phasor::new(0.22, 0.08)),
        ];
        n.loads.push(l3);

        let (idx, x) = solve(&n);

        // Oracle: 9 nodes, Norton source at b1.
        let zero = Phasor::new(0.0, 0.0);
        let mut y = vec![zero; 81];
        let mut rhs = vec![zero; 9];
        let mut add = |r: usize, c: usize, v: Phasor| y[r * 9 + c] += v;
        for (k, br) in n.branches.iter().enumerate() {
            let yb = invert_dense_complex(
                &br.z_abc.iter().flatten().copied().collect::<Vec<_>>(),
                3,
            )
            .unwrap();
            let (f, t) = (k, k + 1); // bus indices: ln12: 0-1, ln23: 1-2
            for p in 0..3 {
                for q in 0..3 {
                    let v = yb[p * 3 + q];
                    add(3 * f + p, 3 * f + q, v);
                    add(3 * t + p, 3 * t + q, v);
                    add(3 * f + p, 3 * t + q, -v);
                    add(3 * t + p, 3 * f + q, -v);
                }
            }
        }
        for (li, load) in n.loads.iter().enumerate() {
            let b = li + 1; // l2 at bus 1, l3 at bus 2
            for (p, s) in load.s_phase.iter().enumerate() {
                add(3 * b + p, 3 * b + p, s.unwrap().conj());
            }
        }
        let y_src = Phasor::new(1.0, 0.0) / Phasor::new(0.0, 0.05);
        for p in 0..3 {
            add(p, p, y_src);
            rhs[p] = y_src * n.sources[0].e_abc[p];
        }
        crate::phasor::solve_dense_complex(&mut y, &mut rhs, 9).unwrap();

        let mut worst = 0.0_f64;
        for b in 0..3 {
            for (pi, p) in Phase::ALL.into_iter().enumerate() {
                let got = x[idx.v(b, p).unwrap()];
                worst = worst.max((got - rhs[3 * b + pi]).norm());
            }
        }
        assert!(worst < 1e-10, "max deviation {worst:.3e}");
    }

    /// Grounded-wye/delta unit: the delta side must sit 30° behind (or ahead
    /// of) the wye side and see the leakage voltage divider.
    #[test]
    fn wye_delta_pair_shifts_thirty_degrees() {
        for (lag, sign) in [(true, -1.0), (false, 1.0)] {
            let mut n = net(10.0, &[bus("hv", "abc"), bus("lv", "abc")]);
            n.sources.push(source("grid", "hv", 1.0, 0.0));
            let mut t = xfmr(
                "t1",
                "hv",
                "lv",
                WindingConnection::WyeGround,
                WindingConnection::Delta,
                Phasor::new(0.0, 0.1),
            );
            t.delta_lag = lag;
            n.transformers.push(t);
            n.loads.push(load_z("l1", "lv", Phasor::new(1.0, 0.0)));
            let (idx, x) = solve(&n);
            // Positive-sequence divider with the shift: U = E·z_l/(z_l+z_t)·1∠±30°.
            let expect = Phasor::new(1.0, 0.0) / Phasor::new(1.0, 0.1)
                * polar_deg(1.0, sign * 30.0);
            let va = x[idx.v(1, Phase::A).unwrap()];
            assert!(
                (va - expect).norm() < 1e-12,
                "lag={lag}: got {va}, want {expect}"
            );
            // And the set stays balanced: zero negative/zero sequence.
            let vt = PhaseTriple::new(
                x[idx.v(1, Phase::A).unwrap()],
                x[idx.v(1, Phase::B).unwrap()],
                x[idx.v(1, Phase::C).unwrap()],
            );
            let s = to_sequence(vt);
            assert!(s.zero.norm() < 1e-12 && s.neg.norm() < 1e-12);
        }
    }

    /// Pure zero-sequence excitation through a wye-wye unit: solid grounding
    /// sees only leakage; an explicit grounding impedance adds `z0` per
    /// grounded winding.
    #[test]
    fn zero_sequence_sees_grounding_impedances() {
        for (z0_path, extra) in [
            (ZeroSeqPath::solid(), Phasor::new(0.0, 0.0)),
            (ZeroSeqPath::Impedance(Phasor::new(0.0, 0.3)), Phasor::new(0.0, 0.6)),
        ] {
            let mut n = net(10.0, &[bus("hv", "abc"), bus("lv", "abc")]);
            let mut s = source("grid", "hv", 1.0, 0.0);
            s.e_abc = [Phasor::new(1.0, 0.0); 3]; // pure zero-sequence EMF
            n.sources.push(s);
            let mut t = xfmr(
                "t1",
                "hv",
                "lv",
                WindingConnection::WyeGround,
                WindingConnection::WyeGround,
                Phasor::new(0.0, 0.1),
            );
            t.z0_path = z0_path;
            n.transformers.push(t);
            n.loads.push(load_z("l1", "lv", Phasor::new(2.0, 0.0))); // z_load = 0.5
            let (idx, x) = solve(&n);
            let z_load = Phasor::new(0.5, 0.0);
            let expect = z_load / (z_load + Phasor::new(0.0, 0.1) + extra);
            for p in Phase::ALL {
                let v = x[idx.v(1, p).unwrap()];
                assert!((v - expect).norm() < 1e-12, "phase {}: {v} vs {expect}", p.letter());
            }
        }
    }

    /// A single line-to-ground load on a delta-fed bus finds no ground
    /// return, so it carries nothing and drags its phase to ground — the
    /// classic ungrounded-system response.
    #[test]
    fn delta_winding_blocks_zero_sequence_return() {
        let mut n = net(10.0, &[bus("hv", "abc"), bus("lv", "abc")]);
        n.sources.push(source("grid", "hv", 1.0, 0.0));
        n.transformers.push(xfmr(
            "t1",
            "hv",
            "lv",
            WindingConnection::WyeGround,
            WindingConnection::Delta,
            Phasor::new(0.0, 0.1),
        ));
        let mut l = load_z("l1", "lv", Phasor::new(0.0, 0.0));
        l.s_phase = [Some(Phasor::new(1.0, 0.0)), None, None];
        n.loads.push(l);
        let (idx, x) = solve(&n);
        let va = x[idx.v(1, Phase::A).unwrap()];
        let vb = x[idx.v(1, Phase::B).unwrap()];
        assert!(va.norm() < 1e-10, "phase a pinned to ground, got |V|={}", va.norm());
        // Healthy phases ride at line-to-line magnitude.
        assert!((vb.norm() - 3.0_f64.sqrt()).abs() < 1e-9, "|Vb| = {}", vb.norm());
    }

    #[test]
    fn floating_island_is_rejected_by_name() {
        let mut n = net(10.0, &[bus("b1", "abc"), bus("b2", "abc"), bus("b3", "abc")]);
        n.sources.push(source("s1", "b1", 1.0, 0.0));
        n.loads.push(load_z("l1", "b1", Phasor::new(1.0, 0.0)));
        // b2-b3 joined by a branch, no source, no ground tie anywhere.
        n.branches.push(branch("ln23", "b2", "b3", Phasor::new(0.01, 0.05), Phasor::new(0.03, 0.15)));
        match assemble_ss(&n) {
            Err(AssemblyError::FloatingIsland { buses }) => {
                assert_eq!(buses, vec!["b2".to_string(), "b3".to_string()]);
            }
            other => panic!("expected floating island, got {other:?}"),
        }
    }

    #[test]
    fn manual_identity_and_diagonal_systems() {
        // 1 complex unknown (2 real): identity, b = e1.
        let n = net(10.0, &[bus("b1", "a")]);
        let idx = index_unknowns(&n, Formulation::Ss).unwrap();
        let mut t = Triplets::new(2);
        t.push(0, 0, 1.0);
        t.push(1, 1, 1.0);
        let mut sys = ManaSystem::new(SystemKind::SsLinear, idx.clone(), t, vec![1.0, 0.0]);
        let x = solve_linear(&mut sys, &n).unwrap();
        assert_eq!(x, vec![Phasor::new(1.0, 0.0)]);

        let mut t = Triplets::new(2);
        t.push(0, 0, 2.0);
        t.push(1, 1, 4.0);
        let mut sys = ManaSystem::new(SystemKind::SsLinear, idx, t, vec![2.0, 4.0]);
        let x = solve_linear(&mut sys, &n).unwrap();
        assert_eq!(x, vec![Phasor::new(1.0, 1.0)]);
    }

    /// Random well-conditioned sparse system vs a dense real elimination.
    #[test]
    fn random_sparse_system_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let buses: Vec<_> = (0..9).map(|i| bus(&format!("b{i}"), "abc")).collect();
        let n = net(10.0, &buses);
        let idx = index_unknowns(&n, Formulation::Ss).unwrap();
        let dim = idx.n_real(); // 54
        let mut t = Triplets::new(dim);
        let mut dense = vec![0.0; dim * dim];
        for r in 0..dim {
            for _ in 0..4 {
                let c = rng.gen_range(0..dim);
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push(r, c, v);
                dense[r * dim + c] += v;
            }
            let v = 10.0 + rng.gen_range(0.0..1.0); // diagonal dominance
            t.push(r, r, v);
            dense[r * dim + r] += v;
        }
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut sys = ManaSystem::new(SystemKind::SsLinear, idx, t, b.clone());
        sys.factor(&n).unwrap();
        let x = sys.solve_with(&b).unwrap();
        // Dense Gaussian elimination with partial pivoting.
        let mut a = dense;
        let mut bb = b;
        for k in 0..dim {
            let piv = (k..dim).max_by(|&i, &j| {
                a[i * dim + k].abs().partial_cmp(&a[j * dim + k].abs()).unwrap()
            }).unwrap();
            if piv != k {
                for c in 0..dim {
                    a.swap(k * dim + c, piv * dim + c);
                }
                bb.swap(k, piv);
            }
            for i in k + 1..dim {
                let f = a[i * dim + k] / a[k * dim + k];
                for c in k..dim {
                    a[i * dim + c] -= f * a[k * dim + c];
                }
                bb[i] -= f * bb[k];
            }
        }
        for i in (0..dim).rev() {
            let mut s = bb[i];
            for c in i + 1..dim {
                s -= a[i * dim + c] * bb[c];
            }
            bb[i] = s / a[i * dim + i];
        }
        let worst = x.iter().zip(bb.iter()).fold(0.0_f64, |m, (g, w)| m.max((g - w).abs()));
        assert!(worst < 1e-9, "max deviation {worst:.3e}");
    }

    /// Fault stamps must be removable bit-exactly.
    #[test]
    fn rollback_restores_the_solution_bit_for_bit() {
        let mut n = net(10.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        n.sources.push(source("s1", "b1", 1.0, 0.0));
        n.branches.push(branch("ln", "b1", "b2", Phasor::new(0.02, 0.08), Phasor::new(0.06, 0.2)));
        n.loads.push(load_z("l1", "b2", Phasor::new(0.4, 0.1)));
        let mut sys = assemble_ss(&n).unwrap();
        let x0 = solve_linear(&mut sys, &n).unwrap();
        let cp = sys.checkpoint();
        let slots = [sys.index.v(1, Phase::A), sys.index.v(1, Phase::B), sys.index.v(1, Phase::C)];
        sys.add_coupling(&slots, &diag_phase_matrix(Phasor::new(1e6, 0.0)));
        let x_fault = solve_linear(&mut sys, &n).unwrap();
        assert!((x_fault[sys.index.v(1, Phase::A).unwrap()]).norm() < 1e-4);
        sys.rollback(cp);
        let x1 = solve_linear(&mut sys, &n).unwrap();
        assert_eq!(x0, x1);
    }

    #[test]
    fn constant_power_loads_are_taken_at_nominal_in_ss() {
        // Same network, one const-P and one const-Z load of equal rating:
        // the SS form treats them identically.
        let mut n1 = net(10.0, &[bus("b1", "abc")]);
        n1.sources.push(source("s1", "b1", 1.0, 0.0));
        n1.loads.push(load_z("l", "b1", Phasor::new(0.7, 0.3)));
        let mut n2 = net(10.0, &[bus("b1", "abc")]);
        n2.sources.push(source("s1", "b1", 1.0, 0.0));
        n2.loads.push(load_p("l", "b1", Phasor::new(0.7, 0.3)));
        let (i1, x1) = solve(&n1);
        let (_, x2) = solve(&n2);
        assert_eq!(x1, x2);
        assert_eq!(n2.loads[0].model, LoadModel::ConstantPower);
        assert!(i1.load_current(0, Phase::A).is_none());
    }
}
