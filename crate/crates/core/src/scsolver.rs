//! Iterative steady-state short-circuit solver.
//!
//! Pipeline: solve the unfaulted power flow, pin it into a linear network
//! ([`crate::linearize`]), stamp the fault admittance block directly into
//! the matrix (no added unknowns), factor once, then alternate
//!
//! 1. a ride-through update per converter (VIC for grid-forming, CSM for
//!    grid-following) from the latest terminal voltages, and
//! 2. one linear solve with every converter's sequence currents injected
//!    on the right-hand side,
//!
//! until no converter terminal voltage moves by more than the tolerance.
//! Updates are Jacobi-style — every unit reads the same network solution —
//! so results are order-independent and deterministic. An oscillating
//! iterate is damped by averaging consecutive current updates.
//!
//! After convergence the operating points are re-evaluated once at the
//! final voltages, so every reported converter quantity satisfies its own
//! control law exactly (current angle/magnitude laws, ceiling equalities);
//! the network state corresponds to the last injection set, which differs
//! from the refreshed one by less than the convergence tolerance.
//!
//! Fault model: each involved phase connects through `z_phase` to a common
//! star point; grounded kinds tie the star point through `z_ground` to
//! ground. The star point is eliminated in closed form, producing a 3×3
//! admittance block — single-phase kinds collapse to a diagonal stamp,
//! phase-phase kinds to the familiar ± pattern, combined kinds to both.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ScError;
use crate::frt::{gfl_step, prefault_op, vic_step, IbrOperatingPoint};
use crate::linearize::{linearize, LinearizedNetwork};
use crate::mana::{solve_pf, PfOptions};
use crate::netmodel::{masked_inverse, mat3_zero, IbrMode, Mat3, NetworkModel, Phase};
use crate::phasor::Phasor;
use crate::seq::{to_phase, to_sequence, PhaseTriple, SequenceTriple};

/// Shunt fault classification. Letters name the involved phases; a trailing
/// `G` marks a ground tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FaultKind {
    Ag,
    Bg,
    Cg,
    Ab,
    Bc,
    Ca,
    Abg,
    Bcg,
    #[serde(alias = "ACG")]
    Cag,
    Abc,
    Abcg,
}

impl FaultKind {
    pub const ALL: [FaultKind; 11] = [
        FaultKind::Ag,
        FaultKind::Bg,
        FaultKind::Cg,
        FaultKind::Ab,
        FaultKind::Bc,
        FaultKind::Ca,
        FaultKind::Abg,
        FaultKind::Bcg,
        FaultKind::Cag,
        FaultKind::Abc,
        FaultKind::Abcg,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FaultKind::Ag => "AG",
            FaultKind::Bg => "BG",
            FaultKind::Cg => "CG",
            FaultKind::Ab => "AB",
            FaultKind::Bc => "BC",
            FaultKind::Ca => "CA",
            FaultKind::Abg => "ABG",
            FaultKind::Bcg => "BCG",
            FaultKind::Cag => "CAG",
            FaultKind::Abc => "ABC",
            FaultKind::Abcg => "ABCG",
        }
    }

    /// Involved phases as an a/b/c mask.
    pub fn phase_mask(self) -> [bool; 3] {
        match self {
            FaultKind::Ag => [true, false, false],
            FaultKind::Bg => [false, true, false],
            FaultKind::Cg => [false, false, true],
            FaultKind::Ab | FaultKind::Abg => [true, true, false],
            FaultKind::Bc | FaultKind::Bcg => [false, true, true],
            FaultKind::Ca | FaultKind::Cag => [true, false, true],
            FaultKind::Abc | FaultKind::Abcg => [true, true, true],
        }
    }

    pub fn grounded(self) -> bool {
        matches!(
            self,
            FaultKind::Ag
                | FaultKind::Bg
                | FaultKind::Cg
                | FaultKind::Abg
                | FaultKind::Bcg
                | FaultKind::Cag
                | FaultKind::Abcg
        )
    }

    /// True for the symmetric kinds (all three phases involved).
    pub fn balanced(self) -> bool {
        matches!(self, FaultKind::Abc | FaultKind::Abcg)
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FaultKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        // "ACG" is the common alternative spelling of the phase c–a–ground kind.
        let up = if up == "ACG" { "CAG".to_string() } else { up };
        FaultKind::ALL
            .into_iter()
            .find(|k| k.label() == up)
            .ok_or_else(|| format!("unknown fault kind '{s}' (expected one of AG BG CG AB BC CA ABG BCG CAG ABC ABCG)"))
    }
}

/// A shunt fault at a bus.
///
/// `z_phase` sits in series with every involved phase; `z_ground` ties the
/// common point to ground for the grounded kinds (ignored otherwise). A
/// `z_phase` of exactly zero is treated as the bolted default of `1e-6` pu
/// to keep the stamped matrix well-conditioned; `z_ground` may be exactly
/// zero (the star point is then ground itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub bus: String,
    pub kind: FaultKind,
    pub z_phase: Phasor,
    pub z_ground: Phasor,
}

impl FaultSpec {
    /// Bolted fault: minimal phase impedance, solid ground tie.
    pub fn bolted(bus: &str, kind: FaultKind) -> FaultSpec {
        FaultSpec {
            bus: bus.to_string(),
            kind,
            z_phase: Phasor::new(0.0, 0.0),
            z_ground: Phasor::new(0.0, 0.0),
        }
    }
}

/// Outer-loop controls.
#[derive(Debug, Clone)]
pub struct ScOptions {
    /// Convergence threshold on converter terminal-voltage changes (pu).
    pub tol: f64,
    /// Outer-iteration cap.
    pub max_iter: usize,
}

impl Default for ScOptions {
    fn default() -> Self {
        ScOptions { tol: 1e-6, max_iter: 20 }
    }
}

/// Handle to a stamped fault: enough to compute the fault current and to
/// remove the stamp again.
#[derive(Debug, Clone)]
pub struct AppliedFault {
    /// Faulted bus index.
    pub bus: usize,
    /// The stamped 3×3 admittance block (zero rows/cols on uninvolved phases).
    pub y_f: Mat3,
    checkpoint: usize,
}

/// Star-elimination of the fault block. `z_phase` is clamped to the bolted
/// default when zero; a solidly grounded star degenerates to a diagonal.
fn fault_admittance(kind: FaultKind, z_phase: Phasor, z_ground: Phasor) -> Mat3 {
    let z_p = if z_phase.norm() < 1e-9 { Phasor::new(1e-6, 0.0) } else { z_phase };
    let y_p = Phasor::new(1.0, 0.0) / z_p;
    let mask = kind.phase_mask();
    let mut y = mat3_zero();
    if kind.grounded() && z_ground.norm() < 1e-12 {
        for (p, on) in mask.iter().enumerate() {
            if *on {
                y[p][p] = y_p;
            }
        }
        return y;
    }
    let legs = mask.iter().filter(|m| **m).count() as f64;
    let y_g = if kind.grounded() { Phasor::new(1.0, 0.0) / z_ground } else { Phasor::new(0.0, 0.0) };
    let denom = legs * y_p + y_g;
    for p in 0..3 {
        if !mask[p] {
            continue;
        }
        for q in 0..3 {
            if !mask[q] {
                continue;
            }
            let mut v = -y_p * y_p / denom;
            if p == q {
                v += y_p;
            }
            y[p][q] = v;
        }
    }
    y
}

/// Stamps a fault block onto the linearized system. The returned handle
/// removes it again ([`remove_fault`]) and computes the fault current.
pub fn apply_fault(lin: &mut LinearizedNetwork, fault: &FaultSpec) -> Result<AppliedFault, ScError> {
    let bus = lin
        .net
        .bus_map()
        .get(fault.bus.as_str())
        .copied()
        .ok_or_else(|| ScError::UnknownFaultBus { bus: fault.bus.clone() })?;
    let mask = fault.kind.phase_mask();
    let mut slots = [None; 3];
    for (p, on) in mask.iter().enumerate() {
        if !*on {
            continue;
        }
        let slot = lin.sys.index.v(bus, Phase::from_index(p));
        if slot.is_none() {
            return Err(ScError::FaultPhaseAbsent { bus: fault.bus.clone() });
        }
        slots[p] = slot;
    }
    let y_f = fault_admittance(fault.kind, fault.z_phase, fault.z_ground);
    let checkpoint = lin.sys.checkpoint();
    lin.sys.add_coupling(&slots, &y_f);
    Ok(AppliedFault { bus, y_f, checkpoint })
}

/// Rolls a stamped fault back; the matrix is bit-identical to before
/// [`apply_fault`].
pub fn remove_fault(lin: &mut LinearizedNetwork, applied: &AppliedFault) {
    lin.sys.rollback(applied.checkpoint);
}

/// Full outcome of a short-circuit solve.
///
/// All converter quantities are machine per-unit on each unit's own rating;
/// network quantities (bus voltages, branch currents, fault current) are
/// system per-unit.
#[derive(Debug, Clone, Serialize)]
pub struct ScResult {
    /// The stamped fault; `None` for the unfaulted consistency run.
    pub fault: Option<FaultSpec>,
    pub converged: bool,
    /// Completed outer iterations (each one network solve).
    pub iterations: usize,
    /// Largest converter terminal-voltage change of the last iteration (pu).
    pub max_delta_v: f64,
    /// Per-iteration, per-unit `(|ΔV̇1|, |ΔV̇2|)` in model order.
    pub trajectory: Vec<Vec<(f64, f64)>>,
    /// Unit ids in model order (the key for all per-unit vectors).
    pub ibr_ids: Vec<String>,
    /// Final operating points, re-evaluated at the converged voltages.
    pub ops: Vec<IbrOperatingPoint>,
    /// Power-flow operating points (the ride-through baseline).
    pub prefault_ops: Vec<IbrOperatingPoint>,
    /// Snapshot of every unit's operating point after each iteration.
    pub op_trajectory: Vec<Vec<IbrOperatingPoint>>,
    /// Thevenin pair `(ż_eq, v̇_eq)` per unit, machine pu — probed for
    /// grid-forming units only, `None` for the rest.
    pub thevenin: Vec<Option<(Phasor, Phasor)>>,
    /// Bus ids in model order (the key for all per-bus vectors).
    pub bus_ids: Vec<String>,
    pub v_fault: Vec<PhaseTriple>,
    pub v_prefault: Vec<PhaseTriple>,
    /// Voltage sag `V̇_prefault − V̇_fault` per bus.
    pub delta_v: Vec<PhaseTriple>,
    /// Branch ids in model order.
    pub branch_ids: Vec<String>,
    /// Series current through each branch, from → to (shunt halves excluded).
    pub branch_currents: Vec<PhaseTriple>,
    /// Source ids in model order.
    pub source_ids: Vec<String>,
    pub source_currents: Vec<PhaseTriple>,
    /// Current drawn into the fault block per phase.
    pub fault_current: PhaseTriple,
    /// Largest bus-phase KCL residual of the final network solution (pu).
    pub kcl_residual: f64,
}

impl ScResult {
    pub fn op(&self, ibr: &str) -> Option<&IbrOperatingPoint> {
        self.ibr_ids.iter().position(|id| id == ibr).map(|i| &self.ops[i])
    }

    pub fn bus_voltage(&self, bus: &str) -> Option<PhaseTriple> {
        self.bus_ids.iter().position(|id| id == bus).map(|i| self.v_fault[i])
    }
}

/// One sweep entry: the scenario and its outcome (failures are recorded,
/// not fatal).
#[derive(Debug)]
pub struct ScOutcome {
    pub fault: FaultSpec,
    pub result: Result<ScResult, ScError>,
}

impl ScOutcome {
    pub fn converged(&self) -> bool {
        matches!(&self.result, Ok(r) if r.converged)
    }
}

/// Short-circuit solve for one fault.
pub fn solve_sc(
    net: &NetworkModel,
    fault: &FaultSpec,
    opts: &ScOptions,
) -> Result<ScResult, ScError> {
    run(net, Some(fault), opts)
}

/// The same pipeline with no fault stamped: must reproduce the power flow
/// (the standing consistency check of the linearization).
pub fn solve_unfaulted(net: &NetworkModel, opts: &ScOptions) -> Result<ScResult, ScError> {
    run(net, None, opts)
}

/// Cartesian sweep `buses × kinds × z_list`, each scenario solved
/// independently (in parallel; results in deterministic scenario order).
/// An empty `z_list` means one bolted entry.
pub fn sweep(
    net: &NetworkModel,
    buses: &[String],
    kinds: &[FaultKind],
    z_list: &[(Phasor, Phasor)],
    opts: &ScOptions,
) -> Vec<ScOutcome> {
    let zero = [(Phasor::new(0.0, 0.0), Phasor::new(0.0, 0.0))];
    let zs: &[(Phasor, Phasor)] = if z_list.is_empty() { &zero } else { z_list };
    let mut specs = Vec::new();
    for bus in buses {
        for kind in kinds {
            for (z_phase, z_ground) in zs {
                specs.push(FaultSpec {
                    bus: bus.clone(),
                    kind: *kind,
                    z_phase: *z_phase,
                    z_ground: *z_ground,
                });
            }
        }
    }
    specs
        .into_par_iter()
        .map(|spec| {
            let result = solve_sc(net, &spec, opts);
            ScOutcome { fault: spec, result }
        })
        .collect()
}

/// Converter injections (system pu phase triples at the POI) implied by a
/// set of operating points.
fn injections_of(
    lin: &LinearizedNetwork,
    ops: &[IbrOperatingPoint],
) -> Vec<(usize, PhaseTriple)> {
    ops.iter()
        .enumerate()
        .map(|(ui, op)| {
            let m2s = lin.net.ibr_units[ui].i_mach_to_sys(lin.net.base);
            let tri = to_phase(SequenceTriple::new(
                Phasor::new(0.0, 0.0),
                op.i1_lv * m2s,
                op.i2_lv * m2s,
            ));
            (lin.ibr_bus(ui), tri)
        })
        .collect()
}

/// One Jacobi ride-through pass: every unit updated from the same previous
/// state. Grid-forming units get a fresh voltage probe against the other
/// units' previous injections; their impedance probe stays frozen.
fn frt_pass(
    lin: &mut LinearizedNetwork,
    ops: &[IbrOperatingPoint],
    prefault: &[IbrOperatingPoint],
    thevenin: &mut [Option<(Phasor, Phasor)>],
) -> Result<Vec<IbrOperatingPoint>, ScError> {
    let inj_prev = injections_of(lin, ops);
    let mut next = Vec::with_capacity(ops.len());
    for ui in 0..ops.len() {
        let unit = lin.net.ibr_units[ui].clone();
        let op = match unit.mode {
            IbrMode::Gfm => {
                let others: Vec<(usize, PhaseTriple)> = inj_prev
                    .iter()
                    .enumerate()
                    .filter(|(o, _)| *o != ui)
                    .map(|(_, e)| *e)
                    .collect();
                let (v_eq, _) = lin.probe_v(ui, &others)?;
                let z_eq = thevenin[ui].expect("impedance probed for every GFM").0;
                thevenin[ui] = Some((z_eq, v_eq));
                vic_step(&ops[ui], &prefault[ui], (z_eq, v_eq), &unit)
            }
            IbrMode::Gfl => gfl_step(&ops[ui], &prefault[ui], &unit),
        };
        next.push(op);
    }
    Ok(next)
}

fn run(
    net: &NetworkModel,
    fault: Option<&FaultSpec>,
    opts: &ScOptions,
) -> Result<ScResult, ScError> {
    let pf = solve_pf(net, &PfOptions::default()).map_err(ScError::Pf)?;
    let mut lin = linearize(net, &pf)?;
    let n_units = lin.net.ibr_units.len();
    let base = lin.net.base;

    // Power-flow operating points, machine pu.
    let prefault: Vec<IbrOperatingPoint> = (0..n_units)
        .map(|ui| {
            let unit = &lin.net.ibr_units[ui];
            let m2s = unit.i_mach_to_sys(base);
            let vs = to_sequence(lin.pf_voltage(lin.ibr_bus(ui)));
            let is = to_sequence(lin.ibr_inj[ui]);
            prefault_op(unit, vs.pos, vs.neg, is.pos / m2s, is.neg / m2s)
        })
        .collect();

    let applied = match fault {
        Some(f) => Some(apply_fault(&mut lin, f)?),
        None => None,
    };
    lin.sys.factor(&lin.net).map_err(ScError::Solve)?;

    // Impedance probes (post-fault, frozen for the whole loop).
    let mut thevenin: Vec<Option<(Phasor, Phasor)>> = vec![None; n_units];
    for ui in 0..n_units {
        if lin.net.ibr_units[ui].mode == IbrMode::Gfm {
            let z_eq = lin.probe_z(ui)?;
            thevenin[ui] = Some((z_eq, Phasor::new(0.0, 0.0)));
        }
    }

    let mut ops = prefault.clone();
    let mut trajectory: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut op_trajectory: Vec<Vec<IbrOperatingPoint>> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut max_delta_v = 0.0;
    // Oscillation brake: once the terminal-voltage updates start flipping
    // direction between iterations, stay half-damped for the rest of the
    // solve (a one-off blend only bounds a flip mode, it never kills it).
    let mut damped = false;
    let mut prev_max_d = f64::INFINITY;
    let mut prev_step: Vec<(Phasor, Phasor)> = Vec::new();
    let mut x_last: Vec<Phasor> = Vec::new();
    let mut inj_last: Vec<(usize, PhaseTriple)> = Vec::new();

    for it in 1..=opts.max_iter.max(1) {
        iterations = it;
        let mut next = frt_pass(&mut lin, &ops, &prefault, &mut thevenin)?;
        if damped {
            for (new, old) in next.iter_mut().zip(&ops) {
                new.i1 = 0.5 * (new.i1 + old.i1);
                new.i2 = 0.5 * (new.i2 + old.i2);
                new.i1_lv = 0.5 * (new.i1_lv + old.i1_lv);
                new.i2_lv = 0.5 * (new.i2_lv + old.i2_lv);
            }
        }
        ops = next;

        let inj = injections_of(&lin, &ops);
        let x = lin.solve_injected(true, &inj)?;
        let mut row = Vec::with_capacity(n_units);
        let mut step = Vec::with_capacity(n_units);
        let mut max_d: f64 = 0.0;
        for (ui, op) in ops.iter_mut().enumerate() {
            let vs = to_sequence(lin.bus_triple(&x, lin.ibr_bus(ui)));
            let dv1 = vs.pos - op.v1_lv;
            let dv2 = vs.neg - op.v2_lv;
            row.push((dv1.norm(), dv2.norm()));
            step.push((dv1, dv2));
            max_d = max_d.max(dv1.norm()).max(dv2.norm());
            op.v1_lv = vs.pos;
            op.v2_lv = vs.neg;
        }
        trajectory.push(row);
        op_trajectory.push(ops.clone());
        x_last = x;
        inj_last = inj;
        max_delta_v = max_d;
        if max_d < opts.tol {
            converged = true;
            break;
        }
        if !damped && !prev_step.is_empty() {
            let dot: f64 = step
                .iter()
                .zip(&prev_step)
                .map(|(s, p)| (s.0 * p.0.conj() + s.1 * p.1.conj()).re)
                .sum();
            // A direction flip while the step is no longer shrinking fast
            // is a flip mode, not the tail of the initial transient.
            damped = dot < 0.0 && 3.0 * max_d > prev_max_d;
        }
        prev_max_d = max_d;
        prev_step = step;
    }

    // Final refresh: re-evaluate every unit at the converged voltages so
    // the reported operating points satisfy their laws exactly.
    if n_units > 0 {
        ops = frt_pass(&mut lin, &ops, &prefault, &mut thevenin)?;
        // Carry the converged terminal voltages into the refreshed points.
        for (op, snap) in ops.iter_mut().zip(op_trajectory.last().expect("≥1 iteration")) {
            op.v1_lv = snap.v1_lv;
            op.v2_lv = snap.v2_lv;
        }
    }

    // Package the network state of the last solve.
    let bus_ids: Vec<String> = net.buses.iter().map(|b| b.id.clone()).collect();
    let v_fault: Vec<PhaseTriple> =
        (0..net.buses.len()).map(|b| lin.bus_triple(&x_last, b)).collect();
    let v_prefault: Vec<PhaseTriple> =
        (0..net.buses.len()).map(|b| lin.pf_voltage(b)).collect();
    let delta_v: Vec<PhaseTriple> = v_prefault
        .iter()
        .zip(&v_fault)
        .map(|(pre, post)| {
            PhaseTriple::new(pre.a - post.a, pre.b - post.b, pre.c - post.c)
        })
        .collect();

    let bus_map = lin.net.bus_map();
    let mut branch_ids = Vec::with_capacity(net.branches.len());
    let mut branch_currents = Vec::with_capacity(net.branches.len());
    for br in &lin.net.branches {
        let (f, t) = (bus_map[br.from.as_str()], bus_map[br.to.as_str()]);
        let phases = lin.net.buses[f].phases.intersect(lin.net.buses[t].phases);
        let y = masked_inverse(&br.z_abc, phases)
            .expect("branch impedance invertible (validated at assembly)");
        let vf = v_fault[f].as_array();
        let vt = v_fault[t].as_array();
        let mut i = [Phasor::new(0.0, 0.0); 3];
        for p in 0..3 {
            for q in 0..3 {
                i[p] += y[p][q] * (vf[q] - vt[q]);
            }
        }
        branch_ids.push(br.id.clone());
        branch_currents.push(PhaseTriple::new(i[0], i[1], i[2]));
    }

    let source_ids: Vec<String> = lin.net.sources.iter().map(|s| s.id.clone()).collect();
    let source_currents: Vec<PhaseTriple> = (0..lin.net.sources.len())
        .map(|si| {
            let g = |p| {
                lin.sys
                    .index
                    .source_current(si, p)
                    .map(|slot| x_last[slot])
                    .unwrap_or_else(|| Phasor::new(0.0, 0.0))
            };
            PhaseTriple::new(g(Phase::A), g(Phase::B), g(Phase::C))
        })
        .collect();

    let fault_current = match &applied {
        Some(af) => {
            let v = v_fault[af.bus].as_array();
            let mut i = [Phasor::new(0.0, 0.0); 3];
            for p in 0..3 {
                for q in 0..3 {
                    i[p] += af.y_f[p][q] * v[q];
                }
            }
            PhaseTriple::new(i[0], i[1], i[2])
        }
        None => PhaseTriple::new(Phasor::new(0.0, 0.0), Phasor::new(0.0, 0.0), Phasor::new(0.0, 0.0)),
    };

    let kcl_residual = kcl_residual_of(&mut lin, &x_last, &inj_last);

    let result = ScResult {
        fault: fault.cloned(),
        converged,
        iterations,
        max_delta_v,
        trajectory,
        ibr_ids: net.ibr_units.iter().map(|u| u.id.clone()).collect(),
        ops,
        prefault_ops: prefault,
        op_trajectory,
        thevenin,
        bus_ids,
        v_fault,
        v_prefault,
        delta_v,
        branch_ids,
        branch_currents,
        source_ids,
        source_currents,
        fault_current,
        kcl_residual,
    };
    if converged {
        Ok(result)
    } else {
        Err(ScError::NonConvergence { result: Box::new(result) })
    }
}

/// Largest bus-phase KCL row residual `|A·x − b|` of a solution, complex
/// magnitude per phase.
fn kcl_residual_of(
    lin: &mut LinearizedNetwork,
    x: &[Phasor],
    injections: &[(usize, PhaseTriple)],
) -> f64 {
    let mut rhs = lin.sys.rhs.clone();
    for &(bus, tri) in injections {
        for (p, i) in Phase::ALL.into_iter().zip(tri.as_array()) {
            if let Some(slot) = lin.sys.index.v(bus, p) {
                crate::mana::add_injection(&mut rhs, slot, i);
            }
        }
    }
    let mut x_real = Vec::with_capacity(2 * x.len());
    for v in x {
        x_real.push(v.re);
        x_real.push(v.im);
    }
    let rows = lin.sys.row_residuals(&x_real, &rhs);
    let mut worst: f64 = 0.0;
    for b in 0..lin.net.buses.len() {
        for p in Phase::ALL {
            if let Some(slot) = lin.sys.index.v(b, p) {
                let r = (rows[2 * slot].powi(2) + rows[2 * slot + 1].powi(2)).sqrt();
                worst = worst.max(r);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frt::LimiterState;
    use crate::netmodel::seq_to_phase_matrix;
    use crate::testnet::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Phasor {
        Phasor::new(re, im)
    }

    #[test]
    fn fault_kind_parsing_and_labels_round_trip() {
        for kind in FaultKind::ALL {
            assert_eq!(kind.label().parse::<FaultKind>().unwrap(), kind);
            assert_eq!(
                kind.label().to_ascii_lowercase().parse::<FaultKind>().unwrap(),
                kind
            );
        }
        assert_eq!("ACG".parse::<FaultKind>().unwrap(), FaultKind::Cag);
        assert_eq!("acg".parse::<FaultKind>().unwrap(), FaultKind::Cag);
        assert!("XYZ".parse::<FaultKind>().is_err());
        assert_eq!(serde_json::to_string(&FaultKind::Abcg).unwrap(), "\"ABCG\"");
        assert_eq!(serde_json::from_str::<FaultKind>("\"ACG\"").unwrap(), FaultKind::Cag);
    }

    #[test]
    fn single_phase_fault_stamps_the_series_admittance_diagonally() {
        let y = fault_admittance(FaultKind::Bg, c(0.5, 0.0), c(0.25, 0.0));
        // One leg: the star collapses to z_phase + z_ground in series.
        assert_abs_diff_eq!((y[1][1] - c(1.0, 0.0) / c(0.75, 0.0)).norm(), 0.0, epsilon = 1e-14);
        for (p, q) in [(0, 0), (2, 2), (0, 1), (1, 0)] {
            assert_eq!(y[p][q], c(0.0, 0.0));
        }
        // Solid ground keeps the exact diagonal.
        let y = fault_admittance(FaultKind::Ag, c(2.0, 0.0), c(0.0, 0.0));
        assert_abs_diff_eq!((y[0][0] - c(0.5, 0.0)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn phase_phase_fault_stamps_the_plus_minus_pattern() {
        let z = c(0.1, 0.3);
        let y = fault_admittance(FaultKind::Bc, z, c(9.0, 9.0));
        // Floating star of two equal legs = z in series twice between phases.
        let y_pp = c(1.0, 0.0) / (2.0 * z);
        assert_abs_diff_eq!((y[1][1] - y_pp).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y[2][2] - y_pp).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y[1][2] + y_pp).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y[2][1] + y_pp).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(y[0][0], c(0.0, 0.0));
    }

    #[test]
    fn bolted_zero_phase_impedance_is_clamped() {
        let y = fault_admittance(FaultKind::Abcg, c(0.0, 0.0), c(0.0, 0.0));
        for p in 0..3 {
            assert_abs_diff_eq!((y[p][p] - c(1e6, 0.0)).norm(), 0.0, epsilon = 1e-6);
        }
    }

    fn grid_with_load() -> NetworkModel {
        let mut n = net(100.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        let mut src = source("grid", "b1", 1.0, 0.0);
        src.z_int = Some(seq_to_phase_matrix(c(0.01, 0.1), c(0.02, 0.3)));
        n.sources.push(src);
        n.branches.push(branch("ln", "b1", "b2", c(0.02, 0.08), c(0.05, 0.2)));
        n.loads.push(load_z("ld", "b2", c(0.2, 0.05)));
        n
    }

    #[test]
    fn removing_a_fault_restores_the_matrix_bit_exactly() {
        let n = grid_with_load();
        let pf = solve_pf(&n, &PfOptions::default()).unwrap();
        let mut lin = linearize(&n, &pf).unwrap();
        let before: Vec<(usize, usize, f64)> = lin.sys.tris.iter().copied().collect();
        let spec = FaultSpec::bolted("b2", FaultKind::Abg);
        let applied = apply_fault(&mut lin, &spec).unwrap();
        assert!(lin.sys.tris.iter().count() > before.len());
        remove_fault(&mut lin, &applied);
        let after: Vec<(usize, usize, f64)> = lin.sys.tris.iter().copied().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn unknown_bus_and_absent_phase_are_rejected() {
        let n = grid_with_load();
        let pf = solve_pf(&n, &PfOptions::default()).unwrap();
        let mut lin = linearize(&n, &pf).unwrap();
        let spec = FaultSpec::bolted("nope", FaultKind::Ag);
        assert!(matches!(apply_fault(&mut lin, &spec), Err(ScError::UnknownFaultBus { .. })));

        let mut n2 = net(100.0, &[bus("b1", "abc"), bus("b2", "ab")]);
        n2.sources.push(source("grid", "b1", 1.0, 0.0));
        n2.branches.push(branch("ln", "b1", "b2", c(0.02, 0.08), c(0.05, 0.2)));
        n2.loads.push(load_z("ld", "b1", c(0.1, 0.02)));
        let pf2 = solve_pf(&n2, &PfOptions::default()).unwrap();
        let mut lin2 = linearize(&n2, &pf2).unwrap();
        let spec2 = FaultSpec::bolted("b2", FaultKind::Cg);
        assert!(matches!(apply_fault(&mut lin2, &spec2), Err(ScError::FaultPhaseAbsent { .. })));
    }

    /// Classic single-loop value: 1∠0° behind 1 pu, phase-a fault through
    /// 1 pu → 0.5 pu fault current.
    #[test]
    fn single_loop_phase_a_fault_current() {
        let mut n = net(100.0, &[bus("b1", "abc")]);
        let mut src = source("grid", "b1", 1.0, 0.0);
        src.z_int = Some(seq_to_phase_matrix(c(1.0, 0.0), c(1.0, 0.0)));
        n.sources.push(src);
        let spec = FaultSpec {
            bus: "b1".into(),
            kind: FaultKind::Ag,
            z_phase: c(1.0, 0.0),
            z_ground: c(0.0, 0.0),
        };
        let r = solve_sc(&n, &spec, &ScOptions::default()).expect("solve");
        assert!(r.converged && r.iterations == 1);
        assert_abs_diff_eq!((r.fault_current.a - c(0.5, 0.0)).norm(), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.fault_current.b.norm(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.fault_current.c.norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn conventional_network_converges_in_one_iteration() {
        let n = grid_with_load();
        let spec = FaultSpec::bolted("b2", FaultKind::Bc);
        let r = solve_sc(&n, &spec, &ScOptions::default()).expect("solve");
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.kcl_residual < 1e-8, "KCL residual {}", r.kcl_residual);
        // Phase-phase fault: equal and opposite currents, no ground return.
        assert_abs_diff_eq!((r.fault_current.b + r.fault_current.c).norm(), 0.0, epsilon = 1e-10);
        assert!(r.fault_current.b.norm() > 1.0);
        assert_abs_diff_eq!(r.fault_current.a.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unfaulted_run_reproduces_the_power_flow() {
        let n = mixed_network();
        let pf = solve_pf(&n, &PfOptions::default()).unwrap();
        let r = solve_unfaulted(&n, &ScOptions::default()).expect("solve");
        assert!(r.converged && r.iterations == 1);
        for b in 0..n.buses.len() {
            let want = pf.v_triple(b).as_array();
            let got = r.v_fault[b].as_array();
            for (g, w) in got.into_iter().zip(want) {
                assert_abs_diff_eq!((g - w).norm(), 0.0, epsilon = 1e-9);
            }
        }
        for d in &r.delta_v {
            for v in d.as_array() {
                assert!(v.norm() < 1e-9);
            }
        }
        // The refreshed operating points equal the power-flow points.
        for (op, pre) in r.ops.iter().zip(&r.prefault_ops) {
            assert_abs_diff_eq!((op.i1 - pre.i1).norm(), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!((op.i2 - pre.i2).norm(), 0.0, epsilon = 1e-9);
        }
        assert_eq!(r.fault, None);
        assert_abs_diff_eq!(r.fault_current.a.norm(), 0.0, epsilon = 1e-15);
    }

    fn gfm_island() -> NetworkModel {
        let mut n = net(10.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        n.branches.push(branch("ln", "b1", "b2", c(0.01, 0.05), c(0.03, 0.12)));
        n.loads.push(load_z("ld", "b2", c(0.3, 0.1)));
        n.ibr_units.push(gfm("bess", "b1", 5.0, 0.3, 1.0));
        n
    }

    /// Grid-forming unit against a bolted balanced fault: the converter
    /// lands exactly on its ceiling with no negative-sequence current, and
    /// the stored VIC snapshot back-substitutes onto the same ceiling.
    #[test]
    fn gfm_bolted_balanced_fault_rides_through_on_the_ceiling() {
        let n = gfm_island();
        let spec = FaultSpec::bolted("b2", FaultKind::Abcg);
        let r = solve_sc(&n, &spec, &ScOptions::default()).expect("solve");
        assert!(r.converged, "trajectory: {:?}", r.trajectory);
        assert!(r.iterations <= 10, "took {} iterations", r.iterations);
        let op = r.op("bess").unwrap();
        let i_max = n.ibr_units[0].i_max;
        assert_abs_diff_eq!(op.i1.norm(), i_max, epsilon = 1e-6);
        assert_abs_diff_eq!(op.i2.norm(), 0.0, epsilon = 1e-8);
        let phases = op.phase_currents();
        for p in phases {
            assert_abs_diff_eq!(p, i_max, epsilon = 1e-6);
        }
        match &op.limiter {
            LimiterState::Vic(v) => {
                assert!(v.active && v.r_vi > 0.0);
                // Back-substitution: the snapshot's own current lands on the
                // ceiling it reports.
                let z_vi = c(v.r_vi, v.phi * v.r_vi);
                let i1 = (v.e1 - v.z_sum / v.z_eq * v.v_eq) / (v.z_sum + z_vi);
                assert_abs_diff_eq!(i1.norm(), v.i1_max, epsilon = 1e-8);
            }
            other => panic!("expected an active VIC state, got {other:?}"),
        }
        assert!(r.kcl_residual < 1e-8);
    }

    /// Grid-following unit close to an unbalanced fault: ceiling respected,
    /// reported currents satisfy the angle and magnitude laws exactly.
    #[test]
    fn gfl_unbalanced_fault_laws_hold_at_the_reported_point() {
        let mut n = net(100.0, &[bus("b1", "abc"), bus("b2", "abc")]);
        let mut src = source("grid", "b1", 1.0, 0.0);
        src.z_int = Some(seq_to_phase_matrix(c(0.005, 0.05), c(0.01, 0.15)));
        n.sources.push(src);
        n.branches.push(branch("ln", "b1", "b2", c(0.02, 0.1), c(0.05, 0.3)));
        n.loads.push(load_z("ld", "b2", c(0.05, 0.01)));
        n.ibr_units.push(gfl("pv", "b2", 20.0, 0.9, 0.05));
        let spec = FaultSpec::bolted("b2", FaultKind::Bcg);
        let r = solve_sc(&n, &spec, &ScOptions::default()).expect("solve");
        assert!(r.converged && r.iterations <= 10);
        let op = r.op("pv").unwrap();
        let unit = &n.ibr_units[0];
        // Ceiling respected with the worst phase pinned when saturated.
        assert!(op.max_phase_current() <= unit.i_max + 1e-9);
        match &op.limiter {
            LimiterState::Csm(cs) => {
                if cs.saturated {
                    assert_abs_diff_eq!(op.max_phase_current(), unit.i_max, epsilon = 1e-9);
                }
            }
            other => panic!("expected a CSM state, got {other:?}"),
        }
        // Internal angle law at the reported point: İ2 leads V̇2 by 90°.
        let lead = crate::phasor::wrap_angle(op.i2.arg() - op.v2_lv.arg());
        assert_abs_diff_eq!(lead, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
        // Unsaturated negative-sequence branch tracks k·|V̇2| exactly.
        if op.i2.norm() < 0.5 * unit.i_max - 1e-9 {
            assert_abs_diff_eq!(op.i2.norm(), unit.k_factor * op.v2_lv.norm(), epsilon = 1e-8);
        }
        assert!(op.i1.norm() >= op.i2.norm());
    }

    #[test]
    fn sweep_is_deterministic_and_marks_balanced_faults_sequence_free() {
        let n = gfm_island();
        let buses = vec!["b1".to_string(), "b2".to_string()];
        let kinds = vec![FaultKind::Abcg, FaultKind::Abc];
        let outcomes = sweep(&n, &buses, &kinds, &[], &ScOptions::default());
        assert_eq!(outcomes.len(), 4);
        // Bus-major, then kind order.
        assert_eq!(outcomes[0].fault.bus, "b1");
        assert_eq!(outcomes[0].fault.kind, FaultKind::Abcg);
        assert_eq!(outcomes[1].fault.kind, FaultKind::Abc);
        assert_eq!(outcomes[2].fault.bus, "b2");
        for o in &outcomes {
            let r = o.result.as_ref().expect("balanced fault converges");
            assert!(r.converged);
            for op in &r.ops {
                assert!(op.i2.norm() < 1e-8, "balanced fault must leave İ2 = 0");
            }
        }
        // Re-running reproduces the same numbers bit-for-bit.
        let again = sweep(&n, &buses, &kinds, &[], &ScOptions::default());
        for (a, b) in outcomes.iter().zip(&again) {
            let (ra, rb) = (a.result.as_ref().unwrap(), b.result.as_ref().unwrap());
            assert_eq!(ra.iterations, rb.iterations);
            assert_eq!(ra.fault_current.a, rb.fault_current.a);
            assert_eq!(ra.ops[0].i1, rb.ops[0].i1);
        }
    }

    #[test]
    fn sweep_of_one_scenario_matches_solve_sc() {
        let n = grid_with_load();
        let spec = FaultSpec::bolted("b2", FaultKind::Ag);
        let direct = solve_sc(&n, &spec, &ScOptions::default()).unwrap();
        let swept = sweep(
            &n,
            &["b2".to_string()],
            &[FaultKind::Ag],
            &[],
            &ScOptions::default(),
        );
        assert_eq!(swept.len(), 1);
        let r = swept[0].result.as_ref().unwrap();
        assert_eq!(r.fault_current.a, direct.fault_current.a);
        assert_eq!(r.iterations, direct.iterations);
    }
}
