//! Small network builders shared by unit tests across modules.

use crate::netmodel::{
    seq_to_phase_matrix, Branch, Bus, GflLimiter, IbrMode, IbrUnit, Load, LoadModel, Mat3,
    NetworkModel, PhaseSet, SourceIdeal, Switch, Transformer, WindingConnection, ZeroSeqPath,
};
use crate::phasor::{polar_deg, Phasor};
use crate::seq::PhaseTriple;

pub(crate) fn bus(id: &str, phases: &str) -> Bus {
    Bus { id: id.into(), phases: PhaseSet::parse(phases).unwrap(), base_kv: 24.9 }
}

/// Balanced ideal source, phase a at `mag∠ang_deg`, no internal impedance.
pub(crate) fn source(id: &str, at: &str, mag: f64, ang_deg: f64) -> SourceIdeal {
    SourceIdeal {
        id: id.into(),
        bus: at.into(),
        e_abc: PhaseTriple::balanced(polar_deg(mag, ang_deg)).as_array(),
        z_int: None,
    }
}

pub(crate) fn source_z(id: &str, at: &str, mag: f64, z_int: Mat3) -> SourceIdeal {
    let mut s = source(id, at, mag, 0.0);
    s.z_int = Some(z_int);
    s
}

/// Series branch from sequence impedances, no shunt.
pub(crate) fn branch(id: &str, from: &str, to: &str, z1: Phasor, z0: Phasor) -> Branch {
    Branch {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        z_abc: seq_to_phase_matrix(z1, z0),
        y_shunt_abc: crate::netmodel::mat3_zero(),
    }
}

/// Balanced three-phase load, `s` per phase.
pub(crate) fn load(id: &str, at: &str, s: Phasor, model: LoadModel) -> Load {
    Load { id: id.into(), bus: at.into(), s_phase: [Some(s); 3], model }
}

pub(crate) fn load_z(id: &str, at: &str, s: Phasor) -> Load {
    load(id, at, s, LoadModel::ConstantImpedance)
}

pub(crate) fn load_p(id: &str, at: &str, s: Phasor) -> Load {
    load(id, at, s, LoadModel::ConstantPower)
}

pub(crate) fn xfmr(
    id: &str,
    from: &str,
    to: &str,
    conn_from: WindingConnection,
    conn_to: WindingConnection,
    z_leak: Phasor,
) -> Transformer {
    Transformer {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        conn_from,
        conn_to,
        tap: 1.0,
        z_leak,
        z0_path: ZeroSeqPath::solid(),
        delta_lag: true,
    }
}

pub(crate) fn switch(id: &str, from: &str, to: &str, closed: bool) -> Switch {
    Switch { id: id.into(), from: from.into(), to: to.into(), closed: [closed; 3] }
}

pub(crate) fn gfl(id: &str, at: &str, s_rated: f64, p_ref: f64, q_ref: f64) -> IbrUnit {
    IbrUnit {
        id: id.into(),
        bus: at.into(),
        mode: IbrMode::Gfl,
        s_rated_mva: s_rated,
        i_max: 1.1,
        p_ref,
        q_ref,
        v_ref: 1.0,
        k_factor: 2.0,
        k_neg: polar_deg(0.01, -90.0),
        k_zero: Phasor::new(0.0, 0.0),
        z_filter: Phasor::new(0.3, 9.0),
        phi: 3.0,
        kappa: 0.1 * 1.1,
        k_v: 0.05,
        gfl_limiter: GflLimiter::ImprovedCsm,
    }
}

pub(crate) fn gfm(id: &str, at: &str, s_rated: f64, p_ref: f64, v_ref: f64) -> IbrUnit {
    let mut u = gfl(id, at, s_rated, p_ref, 0.0);
    u.mode = IbrMode::Gfm;
    u.v_ref = v_ref;
    u
}

/// Network skeleton with the given buses.
pub(crate) fn net(s_base_mva: f64, buses: &[Bus]) -> NetworkModel {
    let mut n = NetworkModel::empty(s_base_mva);
    n.buses = buses.to_vec();
    n
}

/// A compact network touching every element family: ideal source, coupled
/// line, Delta/grounded-wye transformer, both load models (one unbalanced),
/// a GFL with complex sequence laws, and a GFM.
pub(crate) fn mixed_network() -> NetworkModel {
    let mut n = net(10.0, &[bus("b1", "abc"), bus("b2", "abc"), bus("b3", "abc")]);
    n.sources.push(source("grid", "b1", 1.01, 0.0));
    n.branches.push(branch("ln12", "b1", "b2", Phasor::new(0.02, 0.06), Phasor::new(0.06, 0.2)));
    n.transformers.push(xfmr(
        "t23",
        "b2",
        "b3",
        WindingConnection::Delta,
        WindingConnection::WyeGround,
        Phasor::new(0.005, 0.04),
    ));
    let mut l = load_p("l1", "b2", Phasor::new(0.2, 0.08));
    l.s_phase[1] = Some(Phasor::new(0.15, 0.02));
    n.loads.push(l);
    n.loads.push(load_z("l2", "b3", Phasor::new(0.1, 0.04)));
    let mut u1 = gfl("pv", "b3", 2.0, 0.6, 0.05);
    u1.k_neg = polar_deg(0.04, -80.0);
    u1.k_zero = Phasor::new(0.03, -0.05);
    n.ibr_units.push(u1);
    n.ibr_units.push(gfm("bess", "b2", 3.0, 0.4, 1.01));
    n
}
