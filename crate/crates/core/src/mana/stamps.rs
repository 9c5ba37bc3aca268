//! Element stamps shared by the linear steady-state system and the linear
//! part of the Newton Jacobian.
//!
//! Sign conventions, fixed crate-wide:
//!
//! * KCL rows read `Σ(currents leaving the node through elements stamped as
//!   admittances) − Σ(current unknowns injected into the node) = injections
//!   placed on the right-hand side`. An admittance `y` from node `i` to
//!   node `j` therefore stamps `+y` at `(i,i)`,`(j,j)` and `−y` at
//!   `(i,j)`,`(j,i)`; a current unknown delivering into node `i` stamps `−1`
//!   at `(row_i, col_I)`.
//! * Auxiliary current unknowns (`İ_v`, `İ_d`, `İ_s`, `İ_L`, `İ_IBR`) are
//!   *injections into the network*: a source delivering power and a load
//!   drawing it show positive and negative real parts respectively.
//! * Complex coefficients stamp the real-split 2×2 block
//!   `[[g,−b],[b,g]]`; [`stamp_complex`] drops exact-zero parts (pattern
//!   follows values), [`stamp_complex_full`] keeps all four positions
//!   (pattern independent of values).

use crate::error::AssemblyError;
use crate::netmodel::{
    masked_inverse, NetworkModel, Phase, WindingConnection,
};
use crate::phasor::Phasor;
use crate::seq::alpha;
use crate::sparse::Triplets;

use super::index::{neutral_kind, IndexMap, NeutralKind, Side};

/// Stamps complex coefficient `c` coupling complex row `row` to complex
/// column `col` (slots, not real indices), skipping zero parts.
pub(crate) fn stamp_complex(t: &mut Triplets, row: usize, col: usize, c: Phasor) {
    let (r, i) = (2 * row, 2 * col);
    t.push(r, i, c.re);
    t.push(r, i + 1, -c.im);
    t.push(r + 1, i, c.im);
    t.push(r + 1, i + 1, c.re);
}

/// Same block as [`stamp_complex`] but keeps structural zeros.
pub(crate) fn stamp_complex_full(t: &mut Triplets, row: usize, col: usize, c: Phasor) {
    let (r, i) = (2 * row, 2 * col);
    t.push_structural(r, i, c.re);
    t.push_structural(r, i + 1, -c.im);
    t.push_structural(r + 1, i, c.im);
    t.push_structural(r + 1, i + 1, c.re);
}

/// Adds complex value `c` to the right-hand side at complex row `row`.
pub(crate) fn rhs_complex(rhs: &mut [f64], row: usize, c: Phasor) {
    rhs[2 * row] += c.re;
    rhs[2 * row + 1] += c.im;
}

fn bus_index(net: &NetworkModel, element: &str, id: &str) -> Result<usize, AssemblyError> {
    net.buses
        .iter()
        .position(|b| b.id == id)
        .ok_or_else(|| AssemblyError::UnknownBus { element: element.to_string(), bus: id.to_string() })
}

/// Series π-model branches: masked admittance between the shared energized
/// phases plus half the shunt at each end.
pub(crate) fn stamp_branches(
    net: &NetworkModel,
    idx: &IndexMap,
    t: &mut Triplets,
) -> Result<(), AssemblyError> {
    for br in &net.branches {
        let fi = bus_index(net, "branch", &br.from)?;
        let ti = bus_index(net, "branch", &br.to)?;
        let active = net.buses[fi].phases.intersect(net.buses[ti].phases);
        if active.is_empty() {
            continue;
        }
        let y = masked_inverse(&br.z_abc, active)
            .map_err(|_| AssemblyError::SingularBranch { id: br.id.clone() })?;
        for p in active.iter() {
            let vf_p = idx.v(fi, p).expect("active phase at from bus");
            let vt_p = idx.v(ti, p).expect("active phase at to bus");
            for q in active.iter() {
                let vf_q = idx.v(fi, q).expect("active phase at from bus");
                let vt_q = idx.v(ti, q).expect("active phase at to bus");
                let ypq = y[p.index()][q.index()];
                stamp_complex(t, vf_p, vf_q, ypq);
                stamp_complex(t, vt_p, vt_q, ypq);
                stamp_complex(t, vf_p, vt_q, -ypq);
                stamp_complex(t, vt_p, vf_q, -ypq);
                let ysh = 0.5 * br.y_shunt_abc[p.index()][q.index()];
                stamp_complex(t, vf_p, vf_q, ysh);
                stamp_complex(t, vt_p, vt_q, ysh);
            }
        }
    }
    Ok(())
}

/// A coil terminal: an energized bus phase, a synthesized neutral, or ground.
#[derive(Clone, Copy)]
enum Terminal {
    Node(usize),
    Ground,
}

/// Resolves the two terminals of coil `k` on one transformer side.
///
/// Wye-type windings run phase `k` to the neutral (or straight to ground
/// when solidly grounded). Delta windings run phase `k` to phase `k+1`
/// (`delta_lag`, delta-side positive sequence lags the wye side by 30°) or
/// phase `k+2` (leads by 30°).
fn coil_terminals(
    idx: &IndexMap,
    ti: usize,
    bus: usize,
    side: Side,
    conn: WindingConnection,
    delta_lag: bool,
    k: usize,
) -> (Terminal, Terminal) {
    let phase_slot = |p: usize| -> Terminal {
        Terminal::Node(
            idx.v(bus, Phase::from_index(p)).expect("transformer buses carry all three phases"),
        )
    };
    match conn {
        WindingConnection::Delta => {
            let partner = if delta_lag { (k + 1) % 3 } else { (k + 2) % 3 };
            (phase_slot(k), phase_slot(partner))
        }
        _ => {
            let neg = match idx.neutral(ti, side) {
                Some(slot) => Terminal::Node(slot),
                None => Terminal::Ground,
            };
            (phase_slot(k), neg)
        }
    }
}

/// Three-coil two-winding transformer.
///
/// Coil `k` couples its from-side terminal pair to its to-side pair through
/// an ideal ratio `r` with the leakage impedance lumped on the to side:
///
/// `f_dk = (V_t+ − V_t−) − (V_f+ − V_f−)/r + z_eff·İ_dk = 0`
///
/// where `İ_dk` is the to-side coil current (positive = power flowing
/// from→to), `r = tap·(√3 if from is delta)/(√3 if to is delta)` keeps
/// per-unit magnitudes through delta windings, and `z_eff` is the leakage
/// scaled by 3 when the to side is delta (the coil then spans a
/// line-to-line base). The from-side winding carries `İ_dk/r`.
pub(crate) fn stamp_transformers(
    net: &NetworkModel,
    idx: &IndexMap,
    t: &mut Triplets,
) -> Result<(), AssemblyError> {
    let sqrt3 = 3.0_f64.sqrt();
    for (ti, tr) in net.transformers.iter().enumerate() {
        let fi = bus_index(net, "transformer", &tr.from)?;
        let to = bus_index(net, "transformer", &tr.to)?;
        let r = tr.tap * if tr.conn_from == WindingConnection::Delta { sqrt3 } else { 1.0 }
            / if tr.conn_to == WindingConnection::Delta { sqrt3 } else { 1.0 };
        let z_eff =
            tr.z_leak * if tr.conn_to == WindingConnection::Delta { 3.0 } else { 1.0 };
        for k in 0..3 {
            let coil = idx.coil(ti, k);
            let (f_pos, f_neg) =
                coil_terminals(idx, ti, fi, Side::From, tr.conn_from, tr.delta_lag, k);
            let (t_pos, t_neg) =
                coil_terminals(idx, ti, to, Side::To, tr.conn_to, tr.delta_lag, k);
            // Coil voltage equation (C entries) + leakage (D entry).
            let one = Phasor::new(1.0, 0.0);
            let inv_r = Phasor::new(1.0 / r, 0.0);
            for (term, coef) in [
                (t_pos, one),
                (t_neg, -one),
                (f_pos, -inv_r),
                (f_neg, inv_r),
            ] {
                if let Terminal::Node(slot) = term {
                    stamp_complex(t, coil, slot, coef);
                }
            }
            stamp_complex(t, coil, coil, z_eff);
            // KCL adjacency: İ_dk delivered into t+, returned from t−;
            // İ_dk/r drawn from f+, returned into f−.
            for (term, coef) in [
                (t_pos, -1.0),
                (t_neg, 1.0),
                (f_pos, 1.0 / r),
                (f_neg, -1.0 / r),
            ] {
                if let Terminal::Node(slot) = term {
                    stamp_complex(t, slot, coil, Phasor::new(coef, 0.0));
                }
            }
        }
        // Grounding admittance on impedance-grounded neutrals.
        for (side, conn) in [(Side::From, tr.conn_from), (Side::To, tr.conn_to)] {
            if let NeutralKind::Grounded(y) = neutral_kind(conn, tr.z0_path) {
                let slot = idx.neutral(ti, side).expect("grounded neutral has a node");
                stamp_complex(t, slot, slot, y);
            }
        }
    }
    Ok(())
}

/// Ideal sources: `V_bus,p + Σ_q z_int[p][q]·İ_v,q = E_p` on the source row,
/// `−İ_v,p` into the bus KCL.
pub(crate) fn stamp_sources(
    net: &NetworkModel,
    idx: &IndexMap,
    t: &mut Triplets,
    rhs: &mut [f64],
) -> Result<(), AssemblyError> {
    let one = Phasor::new(1.0, 0.0);
    for (si, s) in net.sources.iter().enumerate() {
        let bi = bus_index(net, "source", &s.bus)?;
        let phases = net.buses[bi].phases;
        for p in phases.iter() {
            let row = idx.source_current(si, p).expect("source phase indexed");
            let v = idx.v(bi, p).expect("energized phase");
            stamp_complex(t, row, v, one);
            rhs_complex(rhs, row, s.e_abc[p.index()]);
            stamp_complex(t, v, row, -one);
            if let Some(z) = &s.z_int {
                for q in phases.iter() {
                    let col = idx.source_current(si, q).expect("source phase indexed");
                    stamp_complex(t, row, col, z[p.index()][q.index()]);
                }
            }
        }
    }
    Ok(())
}

/// Ideal switches: closed poles pin `V_from − V_to = 0`, open poles pin
/// `İ_s = 0`; the KCL adjacency is stamped either way so the pattern does
/// not depend on switch state.
pub(crate) fn stamp_switches(
    net: &NetworkModel,
    idx: &IndexMap,
    t: &mut Triplets,
) -> Result<(), AssemblyError> {
    let one = Phasor::new(1.0, 0.0);
    for (wi, sw) in net.switches.iter().enumerate() {
        let fi = bus_index(net, "switch", &sw.from)?;
        let ti = bus_index(net, "switch", &sw.to)?;
        for p in Phase::ALL {
            let Some(row) = idx.switch_current(wi, p) else { continue };
            let vf = idx.v(fi, p).expect("shared phase");
            let vt = idx.v(ti, p).expect("shared phase");
            if sw.closed[p.index()] {
                stamp_complex(t, row, vf, one);
                stamp_complex(t, row, vt, -one);
            } else {
                stamp_complex(t, row, row, one);
            }
            stamp_complex(t, vf, row, one);
            stamp_complex(t, vt, row, -one);
        }
    }
    Ok(())
}

/// Loads as phase-to-ground shunt admittances `y = S*` (their value at
/// nominal 1 pu voltage). With `all_models` both load models are stamped —
/// the steady-state form treats every load as fixed impedance; the Newton
/// form stamps only the constant-impedance ones and keeps constant-power
/// loads as current unknowns.
pub(crate) fn stamp_load_shunts(
    net: &NetworkModel,
    idx: &IndexMap,
    t: &mut Triplets,
    all_models: bool,
) -> Result<(), AssemblyError> {
    for load in &net.loads {
        if !all_models && load.model == crate::netmodel::LoadModel::ConstantPower {
            continue;
        }
        let bi = bus_index(net, "load", &load.bus)?;
        for (pi, s) in load.s_phase.iter().enumerate() {
            let Some(s) = s else { continue };
            let v = idx
                .v(bi, Phase::from_index(pi))
                .expect("load phases are a subset of the bus phases");
            stamp_complex(t, v, v, s.conj());
        }
    }
    Ok(())
}

/// Converter linear structure for the Newton form: the `−1` KCL adjacency of
/// the injected phase currents, plus the negative- and zero-sequence law
/// rows, which are linear in the unknowns.
///
/// The negative-sequence rows stamp full 2×2 blocks on both the voltage and
/// current side (12 + 12 entries per unit); the zero-sequence rows stamp
/// only true nonzeros — 12 on the voltage side for a fully complex
/// admittance and the 6 diagonal pairs on the current side.
pub(crate) fn stamp_ibr_linear(
    net: &NetworkModel,
    idx: &IndexMap,
    t: &mut Triplets,
) -> Result<(), AssemblyError> {
    let al = alpha();
    let al2 = al * al;
    let w_neg = [Phasor::new(1.0, 0.0) / 3.0, al2 / 3.0, al / 3.0];
    let w_zero = Phasor::new(1.0 / 3.0, 0.0);
    for (ui, u) in net.ibr_units.iter().enumerate() {
        let bi = bus_index(net, "converter", &u.bus)?;
        let base = idx.ibr_current(ui, Phase::A).expect("converter currents indexed in PF form");
        let k_neg = u.k_neg_sys(net.base);
        let k_zero = u.k_zero_sys(net.base);
        for p in Phase::ALL {
            let v = idx.v(bi, p).expect("converter bus carries all three phases");
            let i_col = base + p.index();
            stamp_complex(t, v, i_col, Phasor::new(-1.0, 0.0));
            // Negative-sequence law row lives at slot base+1.
            stamp_complex_full(t, base + 1, v, k_neg * w_neg[p.index()]);
            stamp_complex_full(t, base + 1, i_col, -w_neg[p.index()]);
            // Zero-sequence law row lives at slot base+2.
            stamp_complex(t, base + 2, v, k_zero * w_zero);
            stamp_complex(t, base + 2, i_col, -w_zero);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_stamp_writes_the_rotation_block() {
        let mut t = Triplets::new(4);
        stamp_complex(&mut t, 0, 1, Phasor::new(3.0, 4.0));
        let got: Vec<_> = t.iter().copied().collect();
        assert_eq!(
            got,
            vec![(0, 2, 3.0), (0, 3, -4.0), (1, 2, 4.0), (1, 3, 3.0)]
        );
    }

    #[test]
    fn sparse_stamp_skips_zero_parts_but_full_keeps_them() {
        let mut t = Triplets::new(2);
        stamp_complex(&mut t, 0, 0, Phasor::new(2.0, 0.0));
        assert_eq!(t.raw_len(), 2); // diagonal pair only
        let mut t = Triplets::new(2);
        stamp_complex_full(&mut t, 0, 0, Phasor::new(2.0, 0.0));
        assert_eq!(t.raw_len(), 4);
    }

    #[test]
    fn rhs_stamp_accumulates() {
        let mut rhs = vec![0.0; 4];
        rhs_complex(&mut rhs, 1, Phasor::new(1.0, -2.0));
        rhs_complex(&mut rhs, 1, Phasor::new(0.5, 0.5));
        assert_eq!(rhs, vec![0.0, 0.0, 1.5, -1.5]);
    }
}
