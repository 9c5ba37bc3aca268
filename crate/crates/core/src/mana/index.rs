//! Unknown ordering for the augmented systems.
//!
//! Every unknown is paired with exactly one equation row, so the assembled
//! matrix is square by construction:
//!
//! | column (unknown)            | paired row (equation)                        |
//! |-----------------------------|----------------------------------------------|
//! | node voltage (bus/neutral)  | KCL at that node                             |
//! | source current `İ_v`        | EMF equation of the source phase             |
//! | transformer coil current    | coil voltage equation (ratio + leakage)      |
//! | switch current `İ_s`        | pole equation (open: `İ=0`, closed: `ΔV=0`)  |
//! | load current `İ_L`          | constant-power mismatch of the phase         |
//! | converter current `İ_IBR`   | one of the unit's six sequence constraints   |
//!
//! Block order: node voltages (buses in model order, each contributing its
//! energized phases a,b,c; then synthesized transformer neutrals), source
//! currents, transformer coil currents, switch currents, then — in the
//! power-flow formulation only — load currents, generator currents, internal
//! EMFs, regulator taps, converter currents. The generator/EMF/tap blocks are
//! kept in the ordering as zero-width placeholders: the data model carries no
//! synchronous machines or regulators, but downstream code addresses blocks
//! by name and the documented order is part of the contract.
//!
//! Indices returned by the accessors are *complex slots*; slot `c` occupies
//! real rows/columns `2c` (real part) and `2c+1` (imaginary part) in the
//! assembled system.
//!
//! The six constraint rows of a converter unit pair with its six real current
//! columns in this fixed order: active power; reactive power (GFL) or
//! positive-sequence voltage magnitude (GFM); negative-sequence law real,
//! imaginary; zero-sequence law real, imaginary.

use std::collections::HashSet;

use crate::error::AssemblyError;
use crate::netmodel::{
    IbrMode, LoadModel, NetworkModel, Phase, WindingConnection, ZeroSeqPath,
};
use crate::phasor::Phasor;

/// Which augmented system the index serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// Linear steady-state form: loads are shunts, converters are
    /// right-hand-side injections. No load or converter unknowns.
    Ss,
    /// Newton power-flow form with load and converter constraint blocks.
    Pf,
}

/// Transformer side selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    From,
    To,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::From => 0,
            Side::To => 1,
        }
    }
}

/// One complex unknown of the augmented system. Element fields are indices
/// into the corresponding `NetworkModel` vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unknown {
    BusVoltage { bus: usize, phase: Phase },
    NeutralVoltage { transformer: usize, side: Side },
    SourceCurrent { source: usize, phase: Phase },
    /// Current through coil `coil` (0..3), measured on the `to` side.
    CoilCurrent { transformer: usize, coil: usize },
    SwitchCurrent { switch: usize, phase: Phase },
    LoadCurrent { load: usize, phase: Phase },
    IbrCurrent { ibr: usize, phase: Phase },
}

/// How a wye winding's neutral is handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum NeutralKind {
    /// No neutral node: delta winding, or solidly grounded wye (the coil
    /// return terminal connects straight to ground).
    None,
    /// Floating neutral node (ungrounded wye, or a grounded wye whose
    /// zero-sequence path is out of service).
    Floating,
    /// Neutral node tied to ground through an admittance (the grounding
    /// impedance `z` stamped as `z/3`, i.e. admittance `3/z`).
    Grounded(Phasor),
}

pub(crate) fn neutral_kind(conn: WindingConnection, z0: ZeroSeqPath) -> NeutralKind {
    match conn {
        WindingConnection::Delta => NeutralKind::None,
        WindingConnection::Wye => NeutralKind::Floating,
        WindingConnection::WyeGround => match z0 {
            ZeroSeqPath::Blocked => NeutralKind::Floating,
            ZeroSeqPath::Impedance(z) if z.norm() <= 1e-12 => NeutralKind::None,
            ZeroSeqPath::Impedance(z) => NeutralKind::Grounded(3.0 / z),
        },
    }
}

/// Bijection between the network's unknowns and matrix positions.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    pub formulation: Formulation,
    /// Complex unknowns in matrix order.
    pub unknowns: Vec<Unknown>,
    /// Named block bounds `(name, start, end)` in complex slots, in matrix
    /// order; structurally empty blocks are present with `start == end`.
    pub blocks: Vec<(&'static str, usize, usize)>,
    bus_v: Vec<[Option<usize>; 3]>,
    neutral_v: Vec<[Option<usize>; 2]>,
    src_i: Vec<[Option<usize>; 3]>,
    coil_i: Vec<usize>,
    sw_i: Vec<[Option<usize>; 3]>,
    load_i: Vec<[Option<usize>; 3]>,
    ibr_i: Vec<Option<usize>>,
}

impl IndexMap {
    /// Number of complex unknowns.
    pub fn n_complex(&self) -> usize {
        self.unknowns.len()
    }

    /// Dimension of the real-split system.
    pub fn n_real(&self) -> usize {
        2 * self.unknowns.len()
    }

    /// Complex slot of a bus-phase voltage, if the phase is energized.
    pub fn v(&self, bus: usize, phase: Phase) -> Option<usize> {
        self.bus_v[bus][phase.index()]
    }

    /// Complex slot of a transformer neutral voltage, if one was synthesized.
    pub fn neutral(&self, transformer: usize, side: Side) -> Option<usize> {
        self.neutral_v[transformer][side.index()]
    }

    pub fn source_current(&self, source: usize, phase: Phase) -> Option<usize> {
        self.src_i[source][phase.index()]
    }

    /// Complex slot of coil current `coil` (0..3) of a transformer.
    pub fn coil(&self, transformer: usize, coil: usize) -> usize {
        self.coil_i[transformer] + coil
    }

    pub fn switch_current(&self, switch: usize, phase: Phase) -> Option<usize> {
        self.sw_i[switch][phase.index()]
    }

    pub fn load_current(&self, load: usize, phase: Phase) -> Option<usize> {
        self.load_i[load][phase.index()]
    }

    /// Complex slot of a converter phase current (PF formulation only).
    pub fn ibr_current(&self, ibr: usize, phase: Phase) -> Option<usize> {
        self.ibr_i[ibr].map(|base| base + phase.index())
    }

    pub fn unknown(&self, slot: usize) -> Unknown {
        self.unknowns[slot]
    }

    /// Bounds of a named block in complex slots.
    pub fn block(&self, name: &str) -> Option<(usize, usize)> {
        self.blocks.iter().find(|(n, _, _)| *n == name).map(|&(_, s, e)| (s, e))
    }

    /// Human name of a real-split *column* (the variable itself).
    pub fn describe_unknown(&self, net: &NetworkModel, real_idx: usize) -> String {
        let part = if real_idx % 2 == 0 { "Re" } else { "Im" };
        match self.unknowns[real_idx / 2] {
            Unknown::BusVoltage { bus, phase } => {
                format!("{part}(V) at bus '{}' phase {}", net.buses[bus].id, phase.letter())
            }
            Unknown::NeutralVoltage { transformer, side } => format!(
                "{part}(V) at the {} neutral of transformer '{}'",
                side_name(side),
                net.transformers[transformer].id
            ),
            Unknown::SourceCurrent { source, phase } => {
                format!("{part}(I) of source '{}' phase {}", net.sources[source].id, phase.letter())
            }
            Unknown::CoilCurrent { transformer, coil } => format!(
                "{part}(I) of coil {} of transformer '{}'",
                coil, net.transformers[transformer].id
            ),
            Unknown::SwitchCurrent { switch, phase } => {
                format!("{part}(I) of switch '{}' phase {}", net.switches[switch].id, phase.letter())
            }
            Unknown::LoadCurrent { load, phase } => {
                format!("{part}(I) of load '{}' phase {}", net.loads[load].id, phase.letter())
            }
            Unknown::IbrCurrent { ibr, phase } => {
                format!("{part}(I) of converter '{}' phase {}", net.ibr_units[ibr].id, phase.letter())
            }
        }
    }

    /// Human name of a real-split *row* (the equation paired with it). Used
    /// for Newton divergence diagnostics and singularity reports.
    pub fn describe_row(&self, net: &NetworkModel, real_idx: usize) -> String {
        let part = if real_idx % 2 == 0 { "re" } else { "im" };
        match self.unknowns[real_idx / 2] {
            Unknown::BusVoltage { bus, phase } => {
                format!("KCL ({part}) at bus '{}' phase {}", net.buses[bus].id, phase.letter())
            }
            Unknown::NeutralVoltage { transformer, side } => format!(
                "KCL ({part}) at the {} neutral of transformer '{}'",
                side_name(side),
                net.transformers[transformer].id
            ),
            Unknown::SourceCurrent { source, phase } => format!(
                "EMF equation ({part}) of source '{}' phase {}",
                net.sources[source].id,
                phase.letter()
            ),
            Unknown::CoilCurrent { transformer, coil } => format!(
                "coil equation {} ({part}) of transformer '{}'",
                coil, net.transformers[transformer].id
            ),
            Unknown::SwitchCurrent { switch, phase } => format!(
                "pole equation ({part}) of switch '{}' phase {}",
                net.switches[switch].id,
                phase.letter()
            ),
            Unknown::LoadCurrent { load, phase } => format!(
                "constant-power mismatch ({part}) of load '{}' phase {}",
                net.loads[load].id,
                phase.letter()
            ),
            Unknown::IbrCurrent { ibr, phase } => {
                let unit = &net.ibr_units[ibr];
                let row = 2 * phase.index() + if real_idx % 2 == 0 { 0 } else { 1 };
                let name = match (row, unit.mode) {
                    (0, _) => "active-power constraint",
                    (1, IbrMode::Gfl) => "reactive-power constraint",
                    (1, IbrMode::Gfm) => "voltage-magnitude constraint",
                    (2, _) => "negative-sequence law (re)",
                    (3, _) => "negative-sequence law (im)",
                    (4, _) => "zero-sequence law (re)",
                    _ => "zero-sequence law (im)",
                };
                format!("{name} of converter '{}'", unit.id)
            }
        }
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::From => "from-side",
        Side::To => "to-side",
    }
}

/// Builds the total ordering of unknowns for the requested formulation.
///
/// Fails on duplicate element ids (ids share one namespace) or dangling bus
/// references; deeper structural problems are the business of
/// [`crate::netmodel::validate`], which callers should run first.
pub fn index_unknowns(
    net: &NetworkModel,
    formulation: Formulation,
) -> Result<IndexMap, AssemblyError> {
    check_duplicate_ids(net)?;
    let bus_map = net.bus_map();
    let bus_of = |element: &str, id: &str| -> Result<usize, AssemblyError> {
        bus_map.get(id).copied().ok_or_else(|| AssemblyError::UnknownBus {
            element: element.to_string(),
            bus: id.to_string(),
        })
    };

    let mut unknowns: Vec<Unknown> = Vec::new();
    let mut blocks: Vec<(&'static str, usize, usize)> = Vec::new();

    // Node voltages: bus phases, then synthesized transformer neutrals.
    let mut bus_v = vec![[None; 3]; net.buses.len()];
    for (bi, bus) in net.buses.iter().enumerate() {
        for p in bus.phases.iter() {
            bus_v[bi][p.index()] = Some(unknowns.len());
            unknowns.push(Unknown::BusVoltage { bus: bi, phase: p });
        }
    }
    let mut neutral_v = vec![[None; 2]; net.transformers.len()];
    for (ti, t) in net.transformers.iter().enumerate() {
        for (side, conn) in [(Side::From, t.conn_from), (Side::To, t.conn_to)] {
            if neutral_kind(conn, t.z0_path) != NeutralKind::None {
                neutral_v[ti][side.index()] = Some(unknowns.len());
                unknowns.push(Unknown::NeutralVoltage { transformer: ti, side });
            }
        }
    }
    blocks.push(("V_n", 0, unknowns.len()));

    // Source currents, one per phase energized at the source bus.
    let mut start = unknowns.len();
    let mut src_i = vec![[None; 3]; net.sources.len()];
    for (si, s) in net.sources.iter().enumerate() {
        let bus = &net.buses[bus_of("source", &s.bus)?];
        for p in bus.phases.iter() {
            src_i[si][p.index()] = Some(unknowns.len());
            unknowns.push(Unknown::SourceCurrent { source: si, phase: p });
        }
    }
    blocks.push(("I_v", start, unknowns.len()));

    // Transformer coil currents: always three per unit.
    start = unknowns.len();
    let mut coil_i = vec![0usize; net.transformers.len()];
    for (ti, t) in net.transformers.iter().enumerate() {
        bus_of("transformer", &t.from)?;
        bus_of("transformer", &t.to)?;
        coil_i[ti] = unknowns.len();
        for coil in 0..3 {
            unknowns.push(Unknown::CoilCurrent { transformer: ti, coil });
        }
    }
    blocks.push(("I_d", start, unknowns.len()));

    // Switch pole currents on phases energized at both ends, open or closed.
    start = unknowns.len();
    let mut sw_i = vec![[None; 3]; net.switches.len()];
    for (wi, sw) in net.switches.iter().enumerate() {
        let from = &net.buses[bus_of("switch", &sw.from)?];
        let to = &net.buses[bus_of("switch", &sw.to)?];
        for p in from.phases.intersect(to.phases).iter() {
            sw_i[wi][p.index()] = Some(unknowns.len());
            unknowns.push(Unknown::SwitchCurrent { switch: wi, phase: p });
        }
    }
    blocks.push(("I_s", start, unknowns.len()));

    // PF-only blocks. In the SS formulation loads are shunts and converters
    // are right-hand-side injections, so all five blocks stay empty.
    let mut load_i = vec![[None; 3]; net.loads.len()];
    let mut ibr_i = vec![None; net.ibr_units.len()];
    start = unknowns.len();
    if formulation == Formulation::Pf {
        for (li, load) in net.loads.iter().enumerate() {
            bus_of("load", &load.bus)?;
            if load.model != LoadModel::ConstantPower {
                continue;
            }
            for (pi, s) in load.s_phase.iter().enumerate() {
                if s.is_some() {
                    load_i[li][pi] = Some(unknowns.len());
                    unknowns.push(Unknown::LoadCurrent { load: li, phase: Phase::from_index(pi) });
                }
            }
        }
    }
    blocks.push(("I_L", start, unknowns.len()));
    blocks.push(("I_G", unknowns.len(), unknowns.len()));
    blocks.push(("E", unknowns.len(), unknowns.len()));
    blocks.push(("g", unknowns.len(), unknowns.len()));
    start = unknowns.len();
    if formulation == Formulation::Pf {
        for (ui, u) in net.ibr_units.iter().enumerate() {
            bus_of("converter", &u.bus)?;
            ibr_i[ui] = Some(unknowns.len());
            for p in Phase::ALL {
                unknowns.push(Unknown::IbrCurrent { ibr: ui, phase: p });
            }
        }
    }
    blocks.push(("I_IBR", start, unknowns.len()));

    Ok(IndexMap {
        formulation,
        unknowns,
        blocks,
        bus_v,
        neutral_v,
        src_i,
        coil_i,
        sw_i,
        load_i,
        ibr_i,
    })
}

fn check_duplicate_ids(net: &NetworkModel) -> Result<(), AssemblyError> {
    let mut seen: HashSet<&str> = HashSet::new();
    let all = net
        .buses
        .iter()
        .map(|b| b.id.as_str())
        .chain(net.branches.iter().map(|b| b.id.as_str()))
        .chain(net.transformers.iter().map(|t| t.id.as_str()))
        .chain(net.loads.iter().map(|l| l.id.as_str()))
        .chain(net.sources.iter().map(|s| s.id.as_str()))
        .chain(net.switches.iter().map(|s| s.id.as_str()))
        .chain(net.ibr_units.iter().map(|u| u.id.as_str()));
    for id in all {
        if !seen.insert(id) {
            return Err(AssemblyError::DuplicateId { id: id.to_string() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{
        Bus, GflLimiter, IbrUnit, Load, PhaseSet, SourceIdeal, Switch, Transformer,
    };

    fn bus(id: &str, phases: &str) -> Bus {
        Bus { id: id.into(), phases: PhaseSet::parse(phases).unwrap(), base_kv: 24.9 }
    }

    fn source(id: &str, bus: &str) -> SourceIdeal {
        let e = crate::seq::PhaseTriple::balanced(Phasor::new(1.0, 0.0)).as_array();
        SourceIdeal { id: id.into(), bus: bus.into(), e_abc: e, z_int: None }
    }

    fn gfl(id: &str, bus: &str) -> IbrUnit {
        IbrUnit {
            id: id.into(),
            bus: bus.into(),
            mode: IbrMode::Gfl,
            s_rated_mva: 1.0,
            i_max: 1.1,
            p_ref: 0.5,
            q_ref: 0.0,
            v_ref: 1.0,
            k_factor: 2.0,
            k_neg: Phasor::new(0.0, -0.01),
            k_zero: Phasor::new(0.0, 0.0),
            z_filter: Phasor::new(1.0, 10.0),
            phi: 3.0,
            kappa: 0.11,
            k_v: 0.05,
            gfl_limiter: GflLimiter::ImprovedCsm,
        }
    }

    fn xfmr(id: &str, from: &str, to: &str, cf: WindingConnection, ct: WindingConnection) -> Transformer {
        Transformer {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            conn_from: cf,
            conn_to: ct,
            tap: 1.0,
            z_leak: Phasor::new(0.01, 0.06),
            z0_path: ZeroSeqPath::solid(),
            delta_lag: true,
        }
    }

    #[test]
    fn one_bus_one_source_ss_has_twelve_real_unknowns() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("b1", "abc"));
        net.sources.push(source("s1", "b1"));
        let map = index_unknowns(&net, Formulation::Ss).unwrap();
        assert_eq!(map.n_complex(), 6);
        assert_eq!(map.n_real(), 12);
        assert_eq!(map.block("V_n"), Some((0, 3)));
        assert_eq!(map.block("I_v"), Some((3, 6)));
    }

    #[test]
    fn empty_network_yields_empty_map() {
        let net = NetworkModel::empty(10.0);
        let map = index_unknowns(&net, Formulation::Pf).unwrap();
        assert_eq!(map.n_real(), 0);
        assert!(map.blocks.iter().all(|&(_, s, e)| s == e));
    }

    #[test]
    fn adding_a_gfl_grows_the_pf_map_by_six_real_unknowns() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("b1", "abc"));
        net.sources.push(source("s1", "b1"));
        let before = index_unknowns(&net, Formulation::Pf).unwrap().n_real();
        net.ibr_units.push(gfl("u1", "b1"));
        let map = index_unknowns(&net, Formulation::Pf).unwrap();
        assert_eq!(map.n_real(), before + 6);
        assert_eq!(map.ibr_current(0, Phase::A), Some(map.n_complex() - 3));
        assert_eq!(map.ibr_current(0, Phase::C), Some(map.n_complex() - 1));
    }

    #[test]
    fn ss_formulation_carries_no_load_or_converter_unknowns() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("b1", "abc"));
        net.sources.push(source("s1", "b1"));
        net.loads.push(Load {
            id: "l1".into(),
            bus: "b1".into(),
            s_phase: [Some(Phasor::new(0.1, 0.05)); 3],
            model: LoadModel::ConstantPower,
        });
        net.ibr_units.push(gfl("u1", "b1"));
        let ss = index_unknowns(&net, Formulation::Ss).unwrap();
        assert_eq!(ss.block("I_L"), Some((6, 6)));
        assert_eq!(ss.block("I_IBR"), Some((6, 6)));
        assert_eq!(ss.load_current(0, Phase::A), None);
        assert_eq!(ss.ibr_current(0, Phase::A), None);
        let pf = index_unknowns(&net, Formulation::Pf).unwrap();
        assert_eq!(pf.block("I_L"), Some((6, 9)));
        assert_eq!(pf.block("I_IBR"), Some((9, 12)));
    }

    #[test]
    fn constant_impedance_loads_get_no_current_unknowns() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("b1", "abc"));
        net.sources.push(source("s1", "b1"));
        net.loads.push(Load {
            id: "lz".into(),
            bus: "b1".into(),
            s_phase: [Some(Phasor::new(0.1, 0.0)), None, None],
            model: LoadModel::ConstantImpedance,
        });
        net.loads.push(Load {
            id: "lp".into(),
            bus: "b1".into(),
            s_phase: [None, Some(Phasor::new(0.2, 0.1)), None],
            model: LoadModel::ConstantPower,
        });
        let map = index_unknowns(&net, Formulation::Pf).unwrap();
        assert_eq!(map.load_current(0, Phase::A), None);
        assert_eq!(map.load_current(1, Phase::B), Some(6));
        assert_eq!(map.load_current(1, Phase::A), None);
        assert_eq!(map.n_complex(), 7);
    }

    #[test]
    fn neutral_nodes_follow_connection_and_grounding() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("hv", "abc"));
        net.buses.push(bus("lv", "abc"));
        // Solid wye-ground / delta: no neutral on either side.
        net.transformers.push(xfmr("t1", "hv", "lv", WindingConnection::WyeGround, WindingConnection::Delta));
        // Ungrounded wye / impedance-grounded wye: neutral on both sides.
        let mut t2 = xfmr("t2", "hv", "lv", WindingConnection::Wye, WindingConnection::WyeGround);
        t2.z0_path = ZeroSeqPath::Impedance(Phasor::new(0.0, 0.3));
        net.transformers.push(t2);
        // Wye-ground with the path out of service: floating neutral.
        let mut t3 = xfmr("t3", "hv", "lv", WindingConnection::WyeGround, WindingConnection::Delta);
        t3.z0_path = ZeroSeqPath::Blocked;
        net.transformers.push(t3);
        let map = index_unknowns(&net, Formulation::Ss).unwrap();
        assert_eq!(map.neutral(0, Side::From), None);
        assert_eq!(map.neutral(0, Side::To), None);
        assert!(map.neutral(1, Side::From).is_some());
        assert!(map.neutral(1, Side::To).is_some());
        assert!(map.neutral(2, Side::From).is_some());
        assert_eq!(map.neutral(2, Side::To), None);
        // 3+3 bus phases + 3 neutrals + 9 coils = 18 complex slots.
        assert_eq!(map.n_complex(), 18);
        let g = neutral_kind(WindingConnection::WyeGround, ZeroSeqPath::Impedance(Phasor::new(0.0, 0.3)));
        match g {
            NeutralKind::Grounded(y) => assert!((y - Phasor::new(0.0, -10.0)).norm() < 1e-12),
            other => panic!("expected grounded neutral, got {other:?}"),
        }
    }

    #[test]
    fn switch_unknowns_cover_shared_phases_only() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("b1", "abc"));
        net.buses.push(bus("b2", "ab"));
        net.switches.push(Switch {
            id: "w1".into(),
            from: "b1".into(),
            to: "b2".into(),
            closed: [true, false, true],
        });
        let map = index_unknowns(&net, Formulation::Ss).unwrap();
        assert!(map.switch_current(0, Phase::A).is_some());
        assert!(map.switch_current(0, Phase::B).is_some()); // open pole still has a row
        assert_eq!(map.switch_current(0, Phase::C), None); // phase absent at b2
    }

    #[test]
    fn identical_networks_produce_identical_maps() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("b1", "abc"));
        net.buses.push(bus("b2", "abc"));
        net.sources.push(source("s1", "b1"));
        net.transformers.push(xfmr("t1", "b1", "b2", WindingConnection::Delta, WindingConnection::WyeGround));
        net.ibr_units.push(gfl("u1", "b2"));
        let a = index_unknowns(&net, Formulation::Pf).unwrap();
        let b = index_unknowns(&net.clone(), Formulation::Pf).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_ids_are_rejected_across_kinds() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("x", "abc"));
        net.sources.push(source("x", "x"));
        match index_unknowns(&net, Formulation::Ss) {
            Err(AssemblyError::DuplicateId { id }) => assert_eq!(id, "x"),
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_bus_reference_is_reported() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("b1", "abc"));
        net.sources.push(source("s1", "nope"));
        match index_unknowns(&net, Formulation::Ss) {
            Err(AssemblyError::UnknownBus { element, bus }) => {
                assert_eq!(element, "source");
                assert_eq!(bus, "nope");
            }
            other => panic!("expected unknown-bus error, got {other:?}"),
        }
    }

    #[test]
    fn row_and_column_names_read_sensibly() {
        let mut net = NetworkModel::empty(10.0);
        net.buses.push(bus("poi", "abc"));
        net.sources.push(source("grid", "poi"));
        let mut unit = gfl("pv1", "poi");
        unit.mode = IbrMode::Gfm;
        net.ibr_units.push(unit);
        let map = index_unknowns(&net, Formulation::Pf).unwrap();
        assert_eq!(map.describe_unknown(&net, 0), "Re(V) at bus 'poi' phase a");
        assert_eq!(map.describe_row(&net, 1), "KCL (im) at bus 'poi' phase a");
        let ibr_a = 2 * map.ibr_current(0, Phase::A).unwrap();
        assert_eq!(map.describe_row(&net, ibr_a), "active-power constraint of converter 'pv1'");
        assert_eq!(
            map.describe_row(&net, ibr_a + 1),
            "voltage-magnitude constraint of converter 'pv1'"
        );
        assert_eq!(
            map.describe_row(&net, ibr_a + 4),
            "zero-sequence law (re) of converter 'pv1'"
        );
    }
}
