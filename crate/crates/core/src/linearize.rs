//! Linearization of a solved power flow into a fixed-impedance network.
//!
//! A short-circuit study needs a network whose matrix never changes while
//! converter injections iterate. This module pins every constant-power load
//! at its power-flow voltage — the admittance that draws exactly the same
//! power at that voltage — and re-assembles the linear steady-state system.
//! Converters are *not* in the matrix: each one is a pair of sequence
//! current sources added to the right-hand side per solve.
//!
//! On top of the frozen system sit the single-port probes. Seen from one
//! converter's LV terminal, the rest of the network collapses to a Thevenin
//! pair `(ż_eq, v̇_eq)` in the positive sequence:
//!
//! * `ż_eq` — terminal voltage response to a unit positive-sequence current
//!   with every source EMF zeroed and every other converter open;
//! * `v̇_eq` — terminal voltage with the unit's own positive-sequence
//!   injection removed and everything else live.
//!
//! Both probes keep the unit's *own* negative-sequence response law closed:
//! `İ2` leading `V̇2` by 90° with magnitude `k·|V̇2|` (capped) is a dependent
//! source and therefore part of the equivalent, not of the excitation. The
//! law is linear below its cap, so the port relation
//! `V̇1 = v̇_eq + ż_eq·İ1,LV` is exact there — a property the tests pin down.
//!
//! Everything returned by the probes is machine per-unit on the unit's own
//! rating (voltage bases coincide, so only currents and impedances rescale).

use crate::error::{PfError, ScError};
use crate::frt::vic_negative_sequence;
use crate::mana::{add_injection, assemble_ss, ManaSystem, PfSolution};
use crate::netmodel::{LoadModel, NetworkModel, Phase};
use crate::phasor::Phasor;
use crate::seq::{to_phase, to_sequence, PhaseTriple, SequenceTriple};

/// A power-flow-pinned linear network plus the frozen converter injections.
#[derive(Debug, Clone)]
pub struct LinearizedNetwork {
    /// The rewritten model: constant-power loads replaced by the impedance
    /// drawing the same power at the power-flow voltage.
    pub net: NetworkModel,
    /// Assembled steady-state system of [`Self::net`]; faults are stamped on
    /// top of it and rolled back without re-assembly.
    pub sys: ManaSystem,
    /// Converter phase-current injections at the power-flow point, system
    /// per-unit, one triple per unit in model order.
    pub ibr_inj: Vec<PhaseTriple>,
    /// Power-flow bus voltages (reference state for voltage-change reports).
    pf_v: Vec<PhaseTriple>,
    ibr_bus: Vec<usize>,
}

/// Maximum passes for closing a unit's negative-sequence law inside a probe.
const PROBE_I2_PASSES: usize = 6;

/// Pins constant-power loads at their power-flow voltages and assembles the
/// fixed linear system. Fails if the power flow left a constant-power load
/// phase at (numerically) zero voltage — no impedance can reproduce finite
/// power there.
pub fn linearize(net: &NetworkModel, pf: &PfSolution) -> Result<LinearizedNetwork, ScError> {
    let bus_map = net.bus_map();
    let mut pinned = net.clone();
    for load in &mut pinned.loads {
        if load.model != LoadModel::ConstantPower {
            continue;
        }
        let bi = bus_map[load.bus.as_str()];
        for (pi, s) in load.s_phase.iter_mut().enumerate() {
            let Some(s) = s else { continue };
            let v = pf.v(bi, Phase::from_index(pi)).unwrap_or_else(|| Phasor::new(0.0, 0.0));
            if v.norm() < 1e-9 {
                return Err(ScError::Pf(PfError::Invalid(format!(
                    "constant-power load '{}' sits at zero voltage on bus '{}' phase {}; \
                     the operating point cannot be pinned as an impedance",
                    load.id,
                    load.bus,
                    Phase::from_index(pi).letter(),
                ))));
            }
            *s /= v.norm_sqr();
        }
        load.model = LoadModel::ConstantImpedance;
    }
    let sys = assemble_ss(&pinned).map_err(ScError::Assembly)?;
    let pf_v = (0..net.buses.len()).map(|b| pf.v_triple(b)).collect();
    let ibr_inj = (0..net.ibr_units.len()).map(|u| pf.ibr_triple(u)).collect();
    let ibr_bus = net.ibr_units.iter().map(|u| bus_map[u.bus.as_str()]).collect();
    Ok(LinearizedNetwork { net: pinned, sys, ibr_inj, pf_v, ibr_bus })
}

impl LinearizedNetwork {
    pub fn ibr_bus(&self, unit: usize) -> usize {
        self.ibr_bus[unit]
    }

    /// Power-flow voltages at a bus (the pre-fault reference).
    pub fn pf_voltage(&self, bus: usize) -> PhaseTriple {
        self.pf_v[bus]
    }

    fn ensure_factored(&mut self) -> Result<(), ScError> {
        if !self.sys.is_factored() {
            self.sys.factor(&self.net).map_err(ScError::Solve)?;
        }
        Ok(())
    }

    /// Bus phase voltages out of a complex solution vector (absent phases
    /// read as zero).
    pub fn bus_triple(&self, x: &[Phasor], bus: usize) -> PhaseTriple {
        let g = |p| {
            self.sys.index.v(bus, p).map(|s| x[s]).unwrap_or_else(|| Phasor::new(0.0, 0.0))
        };
        PhaseTriple::new(g(Phase::A), g(Phase::B), g(Phase::C))
    }

    /// Solves the frozen system with per-bus current injections added to the
    /// (optionally zeroed) assembled right-hand side.
    pub(crate) fn solve_injected(
        &mut self,
        use_sources: bool,
        injections: &[(usize, PhaseTriple)],
    ) -> Result<Vec<Phasor>, ScError> {
        self.ensure_factored()?;
        let mut rhs = if use_sources {
            self.sys.rhs.clone()
        } else {
            vec![0.0; self.sys.n_real()]
        };
        for &(bus, tri) in injections {
            for (p, i) in Phase::ALL.into_iter().zip(tri.as_array()) {
                if let Some(slot) = self.sys.index.v(bus, p) {
                    add_injection(&mut rhs, slot, i);
                }
            }
        }
        self.sys.solve_complex(&rhs).map_err(ScError::Solve)
    }

    /// Core probe: injects the unit's own positive-sequence LV current
    /// (machine pu) plus external injections, closing the unit's own
    /// negative-sequence law, and returns the terminal sequence voltages.
    pub(crate) fn probe(
        &mut self,
        unit: usize,
        own_i1_lv: Phasor,
        use_sources: bool,
        extra: &[(usize, PhaseTriple)],
    ) -> Result<(Phasor, Phasor), ScError> {
        let u = &self.net.ibr_units[unit];
        let (k_factor, i2_cap, z_filter) = (u.k_factor, 0.5 * u.i_max, u.z_filter);
        let m2s = u.i_mach_to_sys(self.net.base);
        let bus = self.ibr_bus[unit];
        let mut i2_lv = Phasor::new(0.0, 0.0);
        let mut terminal = (Phasor::new(0.0, 0.0), Phasor::new(0.0, 0.0));
        for _ in 0..PROBE_I2_PASSES {
            let own = to_phase(SequenceTriple::new(
                Phasor::new(0.0, 0.0),
                own_i1_lv * m2s,
                i2_lv * m2s,
            ));
            let mut inj = extra.to_vec();
            inj.push((bus, own));
            let x = self.solve_injected(use_sources, &inj)?;
            let vs = to_sequence(self.bus_triple(&x, bus));
            terminal = (vs.pos, vs.neg);
            let i2 = vic_negative_sequence(vs.neg, k_factor, i2_cap, 0.0);
            let next = i2 - vs.neg / z_filter;
            let settled = (next - i2_lv).norm() < 1e-12;
            i2_lv = next;
            if settled {
                break;
            }
        }
        Ok(terminal)
    }

    /// Positive-sequence driving-point impedance at a unit's terminal,
    /// machine pu: unit current in, sources dead, other converters open.
    pub(crate) fn probe_z(&mut self, unit: usize) -> Result<Phasor, ScError> {
        let (v1, _) = self.probe(unit, Phasor::new(1.0, 0.0), false, &[])?;
        Ok(v1)
    }

    /// Open-circuit positive-sequence terminal voltage for a unit, given the
    /// other converters' injections (system pu). Also returns the
    /// negative-sequence terminal voltage of the same solve.
    pub(crate) fn probe_v(
        &mut self,
        unit: usize,
        others: &[(usize, PhaseTriple)],
    ) -> Result<(Phasor, Phasor), ScError> {
        self.probe(unit, Phasor::new(0.0, 0.0), true, others)
    }

    /// Injection list holding every unit at its power-flow current except
    /// `skip`.
    pub(crate) fn pf_injections_except(&self, skip: usize) -> Vec<(usize, PhaseTriple)> {
        self.ibr_inj
            .iter()
            .enumerate()
            .filter(|(u, _)| *u != skip)
            .map(|(u, tri)| (self.ibr_bus[u], *tri))
            .collect()
    }
}

/// Thevenin pair `(ż_eq, v̇_eq)` seen by converter `ibr` in the linearized
/// network, machine per-unit on that unit's rating. Other converters stay
/// frozen at their power-flow injections for the voltage probe and are open
/// for the impedance probe.
pub fn thevenin_at(
    lin: &mut LinearizedNetwork,
    ibr: &str,
) -> Result<(Phasor, Phasor), ScError> {
    let unit = lin
        .net
        .ibr_units
        .iter()
        .position(|u| u.id == ibr)
        .ok_or_else(|| ScError::Pf(PfError::Invalid(format!("no converter named '{ibr}'"))))?;
    let z_eq = lin.probe_z(unit)?;
    let others = lin.pf_injections_except(unit);
    let (v_eq, _) = lin.probe_v(unit, &others)?;
    Ok((z_eq, v_eq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mana::{solve_pf, PfOptions};
    use crate::netmodel::seq_to_phase_matrix;
    use crate::phasor::{invert_dense_complex, polar_deg, solve_dense_complex};
    use crate::seq::alpha;
    use crate::testnet::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Phasor {
        Phasor::new(re, im)
    }

    fn run_pf(net: &NetworkModel) -> PfSolution {
        solve_pf(net, &PfOptions::default()).expect("power flow")
    }

    #[test]
    fn constant_power_loads_are_pinned_at_their_power_flow_voltage() {
        let mut n = net(100.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        n.sources.push(source("grid", "b1", 1.02, 0.0));
        n.branches.push(branch("ln", "b1", "b2", c(0.01, 0.05), c(0.02, 0.12)));
        n.loads.push(load_p("l1", "b2", c(0.4, 0.1)));
        let pf = run_pf(&n);
        let lin = linearize(&n, &pf).expect("linearize");
        let rewritten = &lin.net.loads[0];
        assert_eq!(rewritten.model, LoadModel::ConstantImpedance);
        let v = pf.v(1, Phase::A).unwrap();
        for s in rewritten.s_phase.iter().flatten() {
            assert_abs_diff_eq!((*s - c(0.4, 0.1) / v.norm_sqr()).norm(), 0.0, epsilon = 1e-15);
        }
        // The pinned admittance draws the original power at the PF voltage.
        let y = rewritten.s_phase[0].unwrap().conj();
        let s_drawn = v * (y * v).conj();
        assert_abs_diff_eq!((s_drawn - c(0.4, 0.1)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_impedance_loads_pass_through_unchanged() {
        let mut n = net(100.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        n.sources.push(source("grid", "b1", 1.0, 0.0));
        n.branches.push(branch("ln", "b1", "b2", c(0.01, 0.05), c(0.02, 0.12)));
        n.loads.push(load_z("l1", "b2", c(0.3, 0.1)));
        let pf = run_pf(&n);
        let lin = linearize(&n, &pf).expect("linearize");
        assert_eq!(lin.net.loads[0].s_phase, n.loads[0].s_phase);
        assert_eq!(lin.net.loads[0].model, LoadModel::ConstantImpedance);
    }

    #[test]
    fn zero_voltage_constant_power_phase_is_rejected() {
        let mut n = net(100.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        n.sources.push(source("grid", "b1", 1.0, 0.0));
        n.branches.push(branch("ln", "b1", "b2", c(0.01, 0.05), c(0.02, 0.12)));
        n.loads.push(load_p("l1", "b2", c(0.4, 0.1)));
        let mut pf = run_pf(&n);
        let slot = pf.index.v(1, Phase::B).unwrap();
        pf.x[slot] = c(0.0, 0.0);
        match linearize(&n, &pf) {
            Err(ScError::Pf(PfError::Invalid(msg))) => {
                assert!(msg.contains("b2") && msg.contains("phase b"), "got: {msg}");
            }
            other => panic!("expected invalid-operating-point error, got {other:?}"),
        }
    }

    /// The frozen system with all converters re-injected must reproduce the
    /// power-flow voltages — the nonlinearity is exactly absorbed.
    #[test]
    fn reinjecting_the_power_flow_currents_reproduces_the_power_flow() {
        let n = mixed_network();
        let pf = run_pf(&n);
        let mut lin = linearize(&n, &pf).expect("linearize");
        let all: Vec<(usize, PhaseTriple)> =
            (0..n.ibr_units.len()).map(|u| (lin.ibr_bus(u), lin.ibr_inj[u])).collect();
        let x = lin.solve_injected(true, &all).expect("solve");
        for b in 0..n.buses.len() {
            let got = lin.bus_triple(&x, b);
            let want = pf.v_triple(b);
            for (g, w) in got.as_array().into_iter().zip(want.as_array()) {
                assert_abs_diff_eq!((g - w).norm(), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn source_internal_impedance_is_the_thevenin_impedance() {
        for s_rated in [100.0, 37.0] {
            let mut n = net(100.0, &[bus("b1", "abc")]);
            let mut src = source("grid", "b1", 1.02, 0.0);
            src.z_int = Some(seq_to_phase_matrix(c(0.01, 0.08), c(0.02, 0.24)));
            n.sources.push(src);
            n.loads.push(load_z("anchor", "b1", c(0.1, 0.02)));
            let mut u = gfl("pv", "b1", s_rated, 0.0, 0.0);
            u.k_factor = 0.0;
            n.ibr_units.push(u);
            let pf = run_pf(&n);
            let mut lin = linearize(&n, &pf).expect("linearize");
            let (z_eq, v_eq) = thevenin_at(&mut lin, "pv").expect("thevenin");
            // Machine-pu impedance of source z1 in parallel with the load.
            let y_load = c(0.1, 0.02).conj();
            let z_sys = 1.0 / (1.0 / c(0.01, 0.08) + y_load);
            let z_mach = z_sys * (s_rated / n.base.s_base_mva);
            assert_abs_diff_eq!((z_eq - z_mach).norm(), 0.0, epsilon = 1e-12);
            // Open-circuit voltage: EMF across the internal divider.
            let v_oc = polar_deg(1.02, 0.0) * z_sys / c(0.01, 0.08);
            assert_abs_diff_eq!((v_eq - v_oc).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn parallel_sources_combine_their_internal_impedances() {
        let mut n = net(100.0, &[bus("b1", "abc")]);
        for (id, z1) in [("s1", c(0.02, 0.1)), ("s2", c(0.01, 0.3))] {
            let mut src = source(id, "b1", 1.0, 0.0);
            src.z_int = Some(seq_to_phase_matrix(z1, z1));
            n.sources.push(src);
        }
        let mut u = gfl("pv", "b1", 100.0, 0.0, 0.0);
        u.k_factor = 0.0;
        n.ibr_units.push(u);
        let pf = run_pf(&n);
        let mut lin = linearize(&n, &pf).expect("linearize");
        let (z_eq, v_eq) = thevenin_at(&mut lin, "pv").expect("thevenin");
        let z12 = c(0.02, 0.1) * c(0.01, 0.3) / (c(0.02, 0.1) + c(0.01, 0.3));
        assert_abs_diff_eq!((z_eq - z12).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((v_eq - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-10);
    }

    /// Dense nodal oracle for the probes on a meshed balanced network: build
    /// the full phase-domain bus admittance matrix, reduce it at the port,
    /// and compare both Thevenin quantities.
    #[test]
    fn probes_match_a_dense_nodal_reduction_oracle() {
        let s_rated = 20.0;
        let mut n =
            net(100.0, &[bus("b1", "abc"), bus("b2", "abc"), bus("b3", "abc"), bus("b4", "abc")]);
        let mut src = source("grid", "b1", 1.03, -2.0);
        src.z_int = Some(seq_to_phase_matrix(c(0.005, 0.05), c(0.01, 0.15)));
        n.sources.push(src);
        n.branches.push(branch("l12", "b1", "b2", c(0.02, 0.08), c(0.05, 0.18)));
        n.branches.push(branch("l23", "b2", "b3", c(0.03, 0.1), c(0.07, 0.22)));
        n.branches.push(branch("l13", "b1", "b3", c(0.025, 0.09), c(0.06, 0.2)));
        n.branches.push(branch("l34", "b3", "b4", c(0.015, 0.06), c(0.04, 0.14)));
        n.loads.push(load_z("ld2", "b2", c(0.25, 0.08)));
        n.loads.push(load_z("ld4", "b4", c(0.05, 0.01)));
        let mut u = gfl("pv", "b4", s_rated, 0.0, 0.0);
        u.k_factor = 0.0; // pure passive probe; the law is exercised elsewhere
        n.ibr_units.push(u);
        let pf = run_pf(&n);
        let mut lin = linearize(&n, &pf).expect("linearize");
        let (z_eq, v_eq) = thevenin_at(&mut lin, "pv").expect("thevenin");

        // Dense oracle: 12x12 phase-domain admittance with the source as an
        // internal-impedance shunt, loads as diagonal shunts.
        let nb = 4;
        let dim = 3 * nb;
        let mut y = vec![c(0.0, 0.0); dim * dim];
        let add = |r: usize, cc: usize, v: Phasor, y: &mut Vec<Phasor>| y[r * dim + cc] += v;
        for br in &n.branches {
            let bm = n.bus_map();
            let (f, t) = (bm[br.from.as_str()], bm[br.to.as_str()]);
            let yb = invert_dense_complex(&br.z_abc.concat(), 3).unwrap();
            for p in 0..3 {
                for q in 0..3 {
                    let v = yb[p * 3 + q];
                    add(3 * f + p, 3 * f + q, v, &mut y);
                    add(3 * t + p, 3 * t + q, v, &mut y);
                    add(3 * f + p, 3 * t + q, -v, &mut y);
                    add(3 * t + p, 3 * f + q, -v, &mut y);
                }
            }
        }
        let z_src = seq_to_phase_matrix(c(0.005, 0.05), c(0.01, 0.15));
        let y_src = invert_dense_complex(&z_src.concat(), 3).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                add(p, q, y_src[p * 3 + q], &mut y);
            }
        }
        for load in &n.loads {
            let b = n.bus_map()[load.bus.as_str()];
            for (p, s) in load.s_phase.iter().enumerate() {
                if let Some(s) = s {
                    add(3 * b + p, 3 * b + p, s.conj(), &mut y);
                }
            }
        }
        let z_dense = invert_dense_complex(&y, dim).unwrap();
        // Impedance probe: balanced positive-sequence unit injection at b4.
        let a = alpha();
        let u_pos = [c(1.0, 0.0), a * a, a];
        let w1 = [c(1.0, 0.0) / 3.0, a / 3.0, a * a / 3.0];
        let mut v1 = c(0.0, 0.0);
        for p in 0..3 {
            for q in 0..3 {
                v1 += w1[p] * z_dense[(9 + p) * dim + 9 + q] * u_pos[q];
            }
        }
        let z_oracle = v1 * (s_rated / n.base.s_base_mva);
        assert_abs_diff_eq!((z_eq - z_oracle).norm(), 0.0, epsilon = 1e-9);

        // Voltage probe: source EMF as equivalent current injection.
        let e = polar_deg(1.03, -2.0);
        let e_abc = [e, a * a * e, a * e];
        let mut rhs = vec![c(0.0, 0.0); dim];
        for p in 0..3 {
            for q in 0..3 {
                rhs[p] += y_src[p * 3 + q] * e_abc[q];
            }
        }
        let mut ymat = y.clone();
        solve_dense_complex(&mut ymat, &mut rhs, dim).unwrap();
        let mut v_oracle = c(0.0, 0.0);
        for p in 0..3 {
            v_oracle += w1[p] * rhs[9 + p];
        }
        assert_abs_diff_eq!((v_eq - v_oracle).norm(), 0.0, epsilon = 1e-9);
    }

    /// Below the cap the probes fold the unit's own negative-sequence law
    /// into the equivalent, so the port relation stays exact even on an
    /// unbalanced network with the law active.
    #[test]
    fn port_relation_holds_with_the_negative_sequence_law_closed() {
        let mut n = net(100.0, &[bus("b1", "abc"), bus("b2", "abc"), bus("b3", "abc")]);
        n.sources.push(source("grid", "b1", 1.0, 0.0));
        n.branches.push(branch("l12", "b1", "b2", c(0.02, 0.08), c(0.05, 0.18)));
        n.branches.push(branch("l23", "b2", "b3", c(0.03, 0.1), c(0.07, 0.22)));
        // Unbalanced load makes V2 nonzero at the terminal.
        let mut ld = load_z("ld2", "b2", c(0.3, 0.1));
        ld.s_phase[1] = Some(c(0.05, 0.01));
        ld.s_phase[2] = Some(c(0.6, 0.2));
        n.loads.push(ld);
        let mut u = gfl("pv", "b3", 5.0, 0.2, 0.05);
        u.k_factor = 1.5;
        n.ibr_units.push(u);
        let pf = run_pf(&n);
        let mut lin = linearize(&n, &pf).expect("linearize");
        let (z_eq, v_eq) = thevenin_at(&mut lin, "pv").expect("thevenin");
        // Drive the port with an arbitrary İ1 (machine pu), law closed.
        let i1 = polar_deg(0.3, 25.0);
        let (v1, v2) = lin.probe(0, i1, true, &[]).expect("probe");
        assert!(v2.norm() > 1e-4, "test needs a genuinely unbalanced point");
        let predicted = v_eq + z_eq * i1;
        assert_abs_diff_eq!((v1 - predicted).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn unknown_converter_name_is_reported() {
        let mut n = net(100.0, &[bus("b1", "abc")]);
        n.sources.push(source("grid", "b1", 1.0, 0.0));
        n.loads.push(load_z("ld", "b1", c(0.1, 0.0)));
        let pf = run_pf(&n);
        let mut lin = linearize(&n, &pf).expect("linearize");
        match thevenin_at(&mut lin, "nope") {
            Err(ScError::Pf(PfError::Invalid(msg))) => assert!(msg.contains("nope")),
            other => panic!("expected a named error, got {other:?}"),
        }
    }
}
