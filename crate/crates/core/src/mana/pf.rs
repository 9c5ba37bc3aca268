//! Full-Newton multiphase power flow.
//!
//! The iterate is the complete unknown vector of the PF formulation (node
//! voltages and all auxiliary currents). Per Newton step the residual stack
//! is: KCL rows, source EMF rows, transformer coil rows, switch pole rows —
//! all linear and evaluated through one cached sparse matrix — plus the
//! nonlinear rows re-evaluated analytically: constant-power load mismatches
//! and the converter positive-sequence constraints (active power paired
//! with reactive power for grid-following units, with positive-sequence
//! voltage magnitude for grid-forming units). The converter negative- and
//! zero-sequence admittance laws are linear in the unknowns and live in the
//! cached part.
//!
//! Sequence quantities inside the constraint rows use the crate's analysis
//! convention (`İ₁ = (İa + αİb + α²İc)/3`), and the power rows are scaled
//! like `P_row = 3·p_ref + Re(−3·İ₁*·V̇₁)` so that a converged row means the
//! injected positive-sequence power equals the setpoint.

use crate::error::{AssemblyError, PfError, SolveError};
use crate::netmodel::validate::Dsu;
use crate::netmodel::{IbrMode, LoadModel, NetworkModel, Phase};
use crate::phasor::Phasor;
use crate::seq::{alpha, to_sequence, PhaseTriple, SequenceTriple};
use crate::sparse::{Csc, Triplets};

use super::index::{index_unknowns, Formulation, IndexMap};
use super::{stamps, ManaSystem, SystemKind};

/// Newton options.
#[derive(Debug, Clone)]
pub struct PfOptions {
    /// Residual infinity-norm threshold (pu).
    pub tol: f64,
    pub max_iter: usize,
    pub start: PfStart,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-8, max_iter: 50, start: PfStart::Flat }
    }
}

/// Initial iterate: flat (balanced 1 pu voltages, zero currents) or a
/// previously obtained unknown vector.
#[derive(Debug, Clone)]
pub enum PfStart {
    Flat,
    Warm(Vec<Phasor>),
}

/// Converged power-flow state.
#[derive(Debug, Clone)]
pub struct PfSolution {
    pub index: IndexMap,
    /// Complex unknowns in index order.
    pub x: Vec<Phasor>,
    /// Residual evaluations performed (the final, converged check included).
    pub iterations: usize,
    pub residual_norm: f64,
    /// Residual infinity-norm after each evaluation.
    pub history: Vec<f64>,
}

impl PfSolution {
    pub fn v(&self, bus: usize, phase: Phase) -> Option<Phasor> {
        self.index.v(bus, phase).map(|s| self.x[s])
    }

    /// Bus voltages as a phase triple; de-energized phases read zero.
    pub fn v_triple(&self, bus: usize) -> PhaseTriple {
        let g = |p| self.v(bus, p).unwrap_or_else(|| Phasor::new(0.0, 0.0));
        PhaseTriple::new(g(Phase::A), g(Phase::B), g(Phase::C))
    }

    pub fn v_sequence(&self, bus: usize) -> SequenceTriple {
        to_sequence(self.v_triple(bus))
    }

    pub fn ibr_current(&self, ibr: usize, phase: Phase) -> Option<Phasor> {
        self.index.ibr_current(ibr, phase).map(|s| self.x[s])
    }

    /// Converter injected phase currents.
    pub fn ibr_triple(&self, ibr: usize) -> PhaseTriple {
        let g = |p| self.ibr_current(ibr, p).unwrap_or_else(|| Phasor::new(0.0, 0.0));
        PhaseTriple::new(g(Phase::A), g(Phase::B), g(Phase::C))
    }

    pub fn ibr_sequence(&self, ibr: usize) -> SequenceTriple {
        to_sequence(self.ibr_triple(ibr))
    }

    pub fn source_current(&self, source: usize, phase: Phase) -> Option<Phasor> {
        self.index.source_current(source, phase).map(|s| self.x[s])
    }

    pub fn load_current(&self, load: usize, phase: Phase) -> Option<Phasor> {
        self.index.load_current(load, phase).map(|s| self.x[s])
    }

    pub fn switch_current(&self, switch: usize, phase: Phase) -> Option<Phasor> {
        self.index.switch_current(switch, phase).map(|s| self.x[s])
    }
}

/// Positive-sequence analysis weights `(1, α, α²)/3`.
fn w_pos() -> [Phasor; 3] {
    let al = alpha();
    [Phasor::new(1.0 / 3.0, 0.0), al / 3.0, al * al / 3.0]
}

/// Per-island angle-reference analysis. Islands with an ideal source need
/// nothing; an island formed only by converters promotes its first
/// grid-forming unit to slack (its active-power row is replaced by
/// `Im(V̇₁) = 0`, pinning the island angle); an island with neither — but
/// with converters or constant-power loads on it — cannot be solved.
fn slack_assignment(net: &NetworkModel, _idx: &IndexMap) -> Result<Vec<bool>, PfError> {
    let nb = net.buses.len();
    let bus_map = net.bus_map();
    let at = |id: &str| -> usize { bus_map[id] };
    let mut dsu = Dsu::new(nb);
    for br in &net.branches {
        let (f, t) = (at(&br.from), at(&br.to));
        if !net.buses[f].phases.intersect(net.buses[t].phases).is_empty() {
            dsu.union(f, t);
        }
    }
    for tr in &net.transformers {
        dsu.union(at(&tr.from), at(&tr.to));
    }
    for sw in &net.switches {
        if sw.closed.iter().any(|c| *c) {
            dsu.union(at(&sw.from), at(&sw.to));
        }
    }
    let roots: Vec<usize> = (0..nb).map(|b| dsu.find(b)).collect();
    let mut has_source = vec![false; nb];
    for s in &net.sources {
        has_source[roots[at(&s.bus)]] = true;
    }
    let mut slack = vec![false; net.ibr_units.len()];
    let mut island_slack = vec![false; nb];
    for (ui, u) in net.ibr_units.iter().enumerate() {
        let r = roots[at(&u.bus)];
        if !has_source[r] && !island_slack[r] && u.mode == IbrMode::Gfm {
            slack[ui] = true;
            island_slack[r] = true;
        }
    }
    // Any island that still lacks a reference but hosts nonlinear elements
    // is unsolvable; purely passive dead islands settle to zero linearly.
    let mut offending: Option<usize> = None;
    for u in &net.ibr_units {
        let r = roots[at(&u.bus)];
        if !has_source[r] && !island_slack[r] {
            offending = Some(r);
        }
    }
    for l in &net.loads {
        if l.model == LoadModel::ConstantPower {
            let r = roots[at(&l.bus)];
            if !has_source[r] && !island_slack[r] {
                offending = Some(r);
            }
        }
    }
    if let Some(r) = offending {
        let buses: Vec<String> = (0..nb)
            .filter(|&b| roots[b] == r)
            .map(|b| net.buses[b].id.clone())
            .collect();
        return Err(PfError::Invalid(format!(
            "island without an angle reference (no source or grid-forming unit; buses: {})",
            buses.join(", ")
        )));
    }
    Ok(slack)
}

/// Cached linear structure plus everything needed to evaluate the nonlinear
/// rows at an iterate.
struct Assembler<'a> {
    net: &'a NetworkModel,
    idx: IndexMap,
    linear: Triplets,
    lin_csc: Csc,
    /// Linear right-hand side (source EMFs).
    b: Vec<f64>,
    load_bus: Vec<usize>,
    ibr_bus: Vec<usize>,
    slack: Vec<bool>,
    w1: [Phasor; 3],
}

impl<'a> Assembler<'a> {
    fn new(net: &'a NetworkModel, idx: IndexMap, slack: Vec<bool>) -> Result<Self, AssemblyError> {
        let n = idx.n_real();
        let mut t = Triplets::new(n);
        let mut b = vec![0.0; n];
        stamps::stamp_branches(net, &idx, &mut t)?;
        stamps::stamp_transformers(net, &idx, &mut t)?;
        stamps::stamp_switches(net, &idx, &mut t)?;
        stamps::stamp_sources(net, &idx, &mut t, &mut b)?;
        stamps::stamp_load_shunts(net, &idx, &mut t, false)?;
        stamps::stamp_ibr_linear(net, &idx, &mut t)?;
        let bus_map = net.bus_map();
        let load_bus: Vec<usize> = net.loads.iter().map(|l| bus_map[l.bus.as_str()]).collect();
        let ibr_bus: Vec<usize> = net.ibr_units.iter().map(|u| bus_map[u.bus.as_str()]).collect();
        // Constant-power load KCL adjacency: İ_L injected into the bus.
        for li in 0..net.loads.len() {
            for p in Phase::ALL {
                if let Some(slot) = idx.load_current(li, p) {
                    let v = idx.v(load_bus[li], p).expect("load phase energized");
                    stamps::stamp_complex(&mut t, v, slot, Phasor::new(-1.0, 0.0));
                }
            }
        }
        // Slack rows are linear: Im(V̇₁) at the replaced power-row position.
        let w1 = w_pos();
        for (ui, is_slack) in slack.iter().enumerate() {
            if !is_slack {
                continue;
            }
            let base = idx.ibr_current(ui, Phase::A).expect("converter indexed");
            let row = 2 * base;
            for p in Phase::ALL {
                let v = idx.v(ibr_bus[ui], p).expect("three-phase point of interconnection");
                let w = w1[p.index()];
                t.push_structural(row, 2 * v, w.im);
                t.push_structural(row, 2 * v + 1, w.re);
            }
        }
        let lin_csc = t.to_csc();
        Ok(Assembler { net, idx, linear: t, lin_csc, b, load_bus, ibr_bus, slack, w1 })
    }

    /// Balanced 1 pu voltages; load and converter currents pre-set to their
    /// nominal-voltage values so that every nonlinear row has voltage
    /// sensitivity from the first Jacobian on (currents starting at zero
    /// would leave `∂f/∂V = İ* = 0` holes in the pattern).
    fn flat_start(&self) -> Vec<Phasor> {
        let balanced = PhaseTriple::balanced(Phasor::new(1.0, 0.0)).as_array();
        self.idx
            .unknowns
            .iter()
            .map(|u| match *u {
                super::Unknown::BusVoltage { phase, .. } => balanced[phase.index()],
                super::Unknown::LoadCurrent { load, phase } => {
                    let s = self.net.loads[load].s_phase[phase.index()]
                        .expect("power given on indexed phase");
                    -(s / balanced[phase.index()]).conj()
                }
                super::Unknown::IbrCurrent { ibr, phase } => {
                    let u = &self.net.ibr_units[ibr];
                    let q = match u.mode {
                        IbrMode::Gfl => u.q_ref_sys(self.net.base),
                        IbrMode::Gfm => 0.0,
                    };
                    let i1 = Phasor::new(u.p_ref_sys(self.net.base), -q);
                    PhaseTriple::balanced(i1).as_array()[phase.index()]
                }
                _ => Phasor::new(0.0, 0.0),
            })
            .collect()
    }

    /// Positive-sequence voltage and current of one converter at `x`.
    fn ibr_pos_seq(&self, x: &[Phasor], ui: usize) -> (Phasor, Phasor) {
        let mut v1 = Phasor::new(0.0, 0.0);
        let mut i1 = Phasor::new(0.0, 0.0);
        let base = self.idx.ibr_current(ui, Phase::A).expect("converter indexed");
        for p in Phase::ALL {
            let w = self.w1[p.index()];
            let v = self.idx.v(self.ibr_bus[ui], p).expect("three-phase poi");
            v1 += w * x[v];
            i1 += w * x[base + p.index()];
        }
        (v1, i1)
    }

    /// Full residual stack at `x` (real-split, index order).
    fn residual(&self, x: &[Phasor]) -> Vec<f64> {
        let xr = split_complex(x);
        let mut f = self.lin_csc.matvec(&xr);
        for (fi, bi) in f.iter_mut().zip(self.b.iter()) {
            *fi -= bi;
        }
        // Constant-power loads: S + V·İ* per phase.
        for (li, load) in self.net.loads.iter().enumerate() {
            for p in Phase::ALL {
                let Some(slot) = self.idx.load_current(li, p) else { continue };
                let s = load.s_phase[p.index()].expect("power given on indexed phase");
                let v = x[self.idx.v(self.load_bus[li], p).expect("energized")];
                let i = x[slot];
                let m = s + v * i.conj();
                f[2 * slot] += m.re;
                f[2 * slot + 1] += m.im;
            }
        }
        // Converter positive-sequence rows.
        for (ui, u) in self.net.ibr_units.iter().enumerate() {
            let base = self.idx.ibr_current(ui, Phase::A).expect("converter indexed");
            let (v1, i1) = self.ibr_pos_seq(x, ui);
            let s1 = -3.0 * i1.conj() * v1;
            if !self.slack[ui] {
                f[2 * base] += 3.0 * u.p_ref_sys(self.net.base) + s1.re;
            }
            match u.mode {
                IbrMode::Gfl => f[2 * base + 1] += 3.0 * u.q_ref_sys(self.net.base) + s1.im,
                IbrMode::Gfm => f[2 * base + 1] += u.v_ref - v1.norm(),
            }
        }
        f
    }

    /// Jacobian at `x`: the cached linear stamps plus analytic derivatives
    /// of the nonlinear rows (stamped structurally, so the sparsity pattern
    /// does not depend on the iterate).
    fn jacobian(&self, x: &[Phasor]) -> Triplets {
        let mut t = self.linear.clone();
        for (li, _) in self.net.loads.iter().enumerate() {
            for p in Phase::ALL {
                let Some(slot) = self.idx.load_current(li, p) else { continue };
                let vslot = self.idx.v(self.load_bus[li], p).expect("energized");
                let v = x[vslot];
                let i = x[slot];
                let (fr, fi) = (2 * slot, 2 * slot + 1);
                let (vc, ic) = (2 * vslot, 2 * slot);
                t.push_structural(fr, vc, i.re);
                t.push_structural(fr, vc + 1, i.im);
                t.push_structural(fr, ic, v.re);
                t.push_structural(fr, ic + 1, v.im);
                t.push_structural(fi, vc, -i.im);
                t.push_structural(fi, vc + 1, i.re);
                t.push_structural(fi, ic, v.im);
                t.push_structural(fi, ic + 1, -v.re);
            }
        }
        for (ui, u) in self.net.ibr_units.iter().enumerate() {
            let base = self.idx.ibr_current(ui, Phase::A).expect("converter indexed");
            let (v1, i1) = self.ibr_pos_seq(x, ui);
            let (p_row, q_row) = (2 * base, 2 * base + 1);
            let v1n = v1.norm().max(1e-12);
            for p in Phase::ALL {
                let w = self.w1[p.index()];
                let vslot = self.idx.v(self.ibr_bus[ui], p).expect("three-phase poi");
                let (vc, ic) = (2 * vslot, 2 * (base + p.index()));
                let c_v = -3.0 * i1.conj() * w;
                let c_i = -3.0 * w.conj() * v1;
                if !self.slack[ui] {
                    t.push_structural(p_row, vc, c_v.re);
                    t.push_structural(p_row, vc + 1, -c_v.im);
                    t.push_structural(p_row, ic, c_i.re);
                    t.push_structural(p_row, ic + 1, c_i.im);
                }
                match u.mode {
                    IbrMode::Gfl => {
                        t.push_structural(q_row, vc, c_v.im);
                        t.push_structural(q_row, vc + 1, c_v.re);
                        t.push_structural(q_row, ic, c_i.im);
                        t.push_structural(q_row, ic + 1, -c_i.re);
                    }
                    IbrMode::Gfm => {
                        let d = v1.conj() * w;
                        t.push_structural(q_row, vc, -d.re / v1n);
                        t.push_structural(q_row, vc + 1, d.im / v1n);
                    }
                }
            }
        }
        t
    }
}

fn split_complex(x: &[Phasor]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len());
    for v in x {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Residual stack of the Newton form at iterate `x` (public for oracles and
/// diagnostics; `solve_pf` uses the same evaluation).
pub fn residuals(net: &NetworkModel, x: &[Phasor]) -> Result<Vec<f64>, PfError> {
    let idx = index_unknowns(net, Formulation::Pf)?;
    let slack = slack_assignment(net, &idx)?;
    let asm = Assembler::new(net, idx, slack)?;
    Ok(asm.residual(x))
}

/// Assembles the Newton system at iterate `x`: matrix = Jacobian, right-hand
/// side = negated residual, so one linear solve yields the Newton step.
pub fn assemble_pf_jacobian(net: &NetworkModel, x: &[Phasor]) -> Result<ManaSystem, PfError> {
    let idx = index_unknowns(net, Formulation::Pf)?;
    let slack = slack_assignment(net, &idx)?;
    let asm = Assembler::new(net, idx.clone(), slack)?;
    let tris = asm.jacobian(x);
    let rhs: Vec<f64> = asm.residual(x).iter().map(|v| -v).collect();
    Ok(ManaSystem::new(SystemKind::PfJacobian, idx, tris, rhs))
}

/// Full Newton power flow.
///
/// `iterations` in the returned solution counts residual evaluations — a
/// network already at its solution reports 1. Non-convergence is returned
/// as a structured error carrying the residual history and the name of the
/// worst-offending row; it is a reportable outcome, not a panic.
pub fn solve_pf(net: &NetworkModel, opts: &PfOptions) -> Result<PfSolution, PfError> {
    let idx = index_unknowns(net, Formulation::Pf)?;
    let slack = slack_assignment(net, &idx)?;
    let asm = Assembler::new(net, idx, slack)?;
    let mut x = match &opts.start {
        PfStart::Flat => asm.flat_start(),
        PfStart::Warm(x0) => {
            if x0.len() != asm.idx.n_complex() {
                return Err(PfError::Invalid(format!(
                    "warm start has {} unknowns, the network needs {}",
                    x0.len(),
                    asm.idx.n_complex()
                )));
            }
            x0.clone()
        }
    };
    let mut history = Vec::new();
    for evals in 1..=opts.max_iter {
        let f = asm.residual(&x);
        let rn = inf_norm(&f);
        history.push(rn);
        if rn < opts.tol {
            return Ok(PfSolution {
                index: asm.idx,
                x,
                iterations: evals,
                residual_norm: rn,
                history,
            });
        }
        if evals == opts.max_iter || !rn.is_finite() {
            let worst = f
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            return Err(PfError::NonConvergence {
                iterations: evals,
                residual_norm: rn,
                worst_row: asm.idx.describe_row(net, worst),
                history,
            });
        }
        let j = asm.jacobian(&x);
        let lu = j
            .to_csc()
            .factor()
            .map_err(|e| SolveError::from_lu(e, |col| asm.idx.describe_unknown(net, col)))?;
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg_f);
        for (xi, d) in x.iter_mut().zip(dx.chunks_exact(2)) {
            *xi += Phasor::new(d[0], d[1]);
        }
    }
    unreachable!("loop returns on convergence or at max_iter");
}
