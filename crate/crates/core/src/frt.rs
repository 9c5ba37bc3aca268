//! Fault-ride-through limiters in the phasor domain.
//!
//! Two converter families are modeled. Grid-following units run a current
//! saturation method (CSM): sequence current references are derived from
//! the terminal voltages and clamped so the *worst phase* lands exactly on
//! the converter ceiling — the improved variant distributes headroom via
//! the max-phase construction, the conventional variant scales reactive
//! references against the scalar budget `|İ1|+|İ2| ≤ i_lim`. Grid-forming
//! units run an adaptive virtual impedance control (VIC): the unit stays a
//! voltage source `Ė1` behind a virtual impedance `Ż_VI = R_VI·(1+jφ)`
//! whose resistance is computed in closed form so the bridge current lands
//! on its ceiling.
//!
//! Circuit convention for the GFM path: the shunt filter `Ż_F` hangs on the
//! LV node, `Ż_VI` sits between the EMF and that node, and the rest of the
//! network is the single-port pair `(Ż_eq, V̇_eq)`. Nodal elimination of the
//! LV node gives the bridge current
//!
//! ```text
//! İ1 = (Ė1 − Żsum/Żeq·V̇eq) / (Żsum + Ż_VI),   Żsum = Ż_F·Żeq/(Ż_F+Żeq)
//! ```
//!
//! and the network injection İ1,LV = İ1 − V_m/Ż_F with V_m = Ė1 − Ż_VI·İ1
//! the model's own LV-node voltage (identical to the measured terminal
//! voltage at the fixed point).
//!
//! All quantities in this module are machine per-unit (the unit's own MVA
//! rating); callers convert at the boundary.

use std::f64::consts::FRAC_PI_2;

use crate::netmodel::IbrUnit;
use crate::phasor::{polar, wrap_angle, Phasor};
use crate::seq::{phase_current_magnitudes, sequence_angle_gaps};

/// Current-saturation limiter snapshot (GFL units).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CsmState {
    /// Positive-sequence active current (pu).
    pub i1_p: f64,
    /// Positive-sequence reactive current (pu).
    pub i1_r: f64,
    /// Negative-sequence reactive current magnitude (pu).
    pub i2_r: f64,
    /// Total converter ceiling (pu).
    pub i_lim: f64,
    /// Sequence ceilings after distribution (pu).
    pub i1_max: f64,
    pub i2_max: f64,
    /// Sequence current angles (rad).
    pub delta_i1: f64,
    pub delta_i2: f64,
    /// True when a clamp actually bound.
    pub saturated: bool,
}

/// Virtual-impedance limiter snapshot (GFM units).
///
/// Carries the full Thevenin context of the step, so the defining property
/// — the bridge current computed against `(z_eq, v_eq)` with `r_vi` in
/// series lands exactly on `i1_max` — can be re-checked from the snapshot
/// alone.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VicState {
    /// Virtual resistance/reactance inserted this step (pu).
    pub r_vi: f64,
    pub x_vi: f64,
    /// X/R ratio of the virtual impedance.
    pub phi: f64,
    /// Adaptive gain (reporting only; the closed-form root supersedes it).
    pub sigma: f64,
    /// Positive-sequence current ceiling of this step (pu).
    pub i1_max: f64,
    /// Activation threshold i1_max − κ (pu).
    pub i_th: f64,
    /// Voltage drop across Ż_VI (pu).
    pub v_drop: f64,
    /// EMF the step was computed with (droop update applies afterwards).
    pub e1: Phasor,
    /// Filter ∥ network-equivalent impedance seen by the EMF (pu).
    pub z_sum: Phasor,
    /// Thevenin pair the step was computed against (machine pu).
    pub z_eq: Phasor,
    pub v_eq: Phasor,
    /// True when the virtual impedance is engaged.
    pub active: bool,
    /// The closed-form root had no real solution; the current was scaled
    /// radially onto the ceiling instead.
    pub infeasible: bool,
}

/// Limiter attachment of an operating point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum LimiterState {
    /// Normal operation (power-flow point, no ride-through engaged).
    Inactive,
    Csm(CsmState),
    Vic(VicState),
}

/// One converter's electrical state, machine per-unit.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IbrOperatingPoint {
    /// LV-terminal sequence voltages from the latest network solution.
    pub v1_lv: Phasor,
    pub v2_lv: Phasor,
    /// Bridge-side sequence currents (through the converter switches).
    pub i1: Phasor,
    pub i2: Phasor,
    /// Sequence currents injected into the network at the LV terminal.
    pub i1_lv: Phasor,
    pub i2_lv: Phasor,
    /// Internal EMF (GFM); for GFL carries the terminal-voltage anchor.
    pub e1: Phasor,
    /// Reactive power delivered at the terminal (pu).
    pub q: f64,
    pub limiter: LimiterState,
}

impl IbrOperatingPoint {
    /// Phase current magnitudes of the bridge current (zero sequence never
    /// passes the converter).
    pub fn phase_currents(&self) -> [f64; 3] {
        phase_current_magnitudes(self.i1, self.i2)
    }

    pub fn max_phase_current(&self) -> f64 {
        let m = self.phase_currents();
        m[0].max(m[1]).max(m[2])
    }
}

/// No-real-root outcome of the virtual-resistance quadratic: the requested
/// ceiling cannot be met by any non-negative resistance at this ratio.
#[derive(Debug, Clone, thiserror::Error)]
#[error("no real virtual resistance reaches |I1| = {i1_max:.4} pu (unconstrained {i1_unconstrained:.4} pu)")]
pub struct InfeasibleLimit {
    pub i1_unconstrained: f64,
    pub i1_max: f64,
}

/// Conventional current saturation: scalar budget `|İ1| + |İ2R| ≤ i_lim`,
/// reactive references rescaled onto the budget, active current from the
/// leftover radicand. Returns `(i1_p, i1_r, i2_r)`.
pub fn csm_conventional(i1_p: f64, i1_r: f64, i2_r: f64, i_lim: f64) -> (f64, f64, f64) {
    if (i1_p * i1_p + i1_r * i1_r).sqrt() + i2_r <= i_lim {
        return (i1_p, i1_r, i2_r);
    }
    let denom = i1_r + i2_r;
    let (i1_r_lim, i2_r_lim) = if denom > 0.0 {
        (i1_r * i_lim / denom, i2_r * i_lim / denom)
    } else {
        (0.0, 0.0)
    };
    let radicand = (i_lim - i2_r_lim).powi(2) - i1_r_lim * i1_r_lim;
    let i1_p_lim = radicand.max(0.0).sqrt().min(i1_p);
    (i1_p_lim, i1_r_lim, i2_r_lim)
}

/// Positive-sequence ceiling of the improved distribution: solve the
/// worst-phase magnitude `√(i1² + i2² + 2·i1·i2·max cos Δδ) = i_max` for
/// i1 given the actual negative-sequence magnitude.
fn max_phase_ceiling(i2_mag: f64, max_cos: f64, i_max: f64) -> f64 {
    let radicand = i2_mag * i2_mag * max_cos * max_cos - i2_mag * i2_mag + i_max * i_max;
    -i2_mag * max_cos + radicand.max(0.0).sqrt()
}

/// Improved-CSM sequence limits: `(i1_max, i2_max, delta_i2)`.
///
/// The negative-sequence angle leads the measured negative-sequence
/// voltage by 90°; its ceiling is half the converter ceiling; the
/// positive-sequence ceiling is sized so the worst phase lands exactly on
/// `i_max` given the actual (possibly smaller) negative-sequence current.
pub fn csm_improved(
    v2_angle: f64,
    i2_actual: Phasor,
    i_max: f64,
    delta_i1: f64,
) -> (f64, f64, f64) {
    let delta_i2 = wrap_angle(v2_angle + FRAC_PI_2);
    let i2_max = 0.5 * i_max;
    let gaps = sequence_angle_gaps(delta_i1, delta_i2);
    let max_cos = gaps.iter().fold(f64::NEG_INFINITY, |m, g| m.max(g.cos()));
    let i1_max = max_phase_ceiling(i2_actual.norm(), max_cos, i_max);
    (i1_max, i2_max, delta_i2)
}

/// Closed-form virtual resistance pinning `|İ1| = i1_max`.
///
/// With `Ż_VI = r·(1+jφ)` the bridge-current magnitude condition becomes a
/// real quadratic `(1+φ²)r² + 2(R_sum+φX_sum)r + ζ² = 0` whose larger root
/// is returned; `ζ² = |Żsum|² − |Ė1 − Żsum/Żeq·V̇eq|²/i1_max²`.
pub fn vic_virtual_resistance(
    e1: Phasor,
    v_eq: Phasor,
    z_eq: Phasor,
    z_filter: Phasor,
    phi: f64,
    i1_max: f64,
) -> Result<f64, InfeasibleLimit> {
    let z_sum = z_filter * z_eq / (z_filter + z_eq);
    let u = e1 - z_sum / z_eq * v_eq;
    let zeta2 = z_sum.norm_sqr() - u.norm_sqr() / (i1_max * i1_max);
    let b_half = z_sum.re + phi * z_sum.im;
    let a = 1.0 + phi * phi;
    let disc = b_half * b_half - a * zeta2;
    if disc < 0.0 {
        return Err(InfeasibleLimit {
            i1_unconstrained: (u / z_sum).norm(),
            i1_max,
        });
    }
    Ok((-b_half + disc.sqrt()) / a)
}

/// Negative-sequence current reference: magnitude `min(k·|V̇2|, i2_max)`,
/// angle leading the negative-sequence voltage by exactly 90°.
///
/// Implemented through the dq projection `V_d + jV_q = e^{j∠Ė}·V̇2*`, the
/// reference pair `i_d = k·V_q/ρ`, `i_q = −k·V_d/ρ` with
/// `ρ = max(1, k|V̇2|/i2_max)`, and the reconstruction
/// `İ2 = √(i_d²+i_q²)·e^{j(∠Ė − atan2(i_q, i_d))}` — which collapses to the
/// stated magnitude/angle for every quadrant.
pub fn vic_negative_sequence(v2_lv: Phasor, k_factor: f64, i2_max: f64, e_angle: f64) -> Phasor {
    if v2_lv.norm() < 1e-15 || k_factor == 0.0 {
        return Phasor::new(0.0, 0.0);
    }
    let rho = (k_factor * v2_lv.norm() / i2_max.max(1e-12)).max(1.0);
    let vdq = polar(1.0, e_angle) * v2_lv.conj();
    let (v_d, v_q) = (vdq.re, vdq.im);
    let i_d = k_factor * v_q / rho;
    let i_q = -k_factor * v_d / rho;
    let mag = (i_d * i_d + i_q * i_q).sqrt();
    polar(mag, e_angle - i_q.atan2(i_d))
}

/// Pass-through detection: ride-through logic only engages once the
/// terminal voltages move off the pre-fault point.
fn undisturbed(op: &IbrOperatingPoint, prefault: &IbrOperatingPoint) -> bool {
    (op.v1_lv - prefault.v1_lv).norm() < 1e-8 && (op.v2_lv - prefault.v2_lv).norm() < 1e-8
}

/// One VIC fixed-point step for a GFM unit against a frozen Thevenin pair
/// `(z_eq, v_eq)` (machine pu). `op` carries the latest measured terminal
/// voltages, the previous iterate's currents, and the current EMF;
/// `prefault` anchors both the pass-through test and the EMF angle.
pub fn vic_step(
    op: &IbrOperatingPoint,
    prefault: &IbrOperatingPoint,
    thevenin: (Phasor, Phasor),
    unit: &IbrUnit,
) -> IbrOperatingPoint {
    if undisturbed(op, prefault) {
        return prefault.clone();
    }
    let (z_eq, v_eq) = thevenin;
    let z_f = unit.z_filter;
    let z_sum = z_f * z_eq / (z_f + z_eq);
    let u = op.e1 - z_sum / z_eq * v_eq;
    let i1_unconstrained = u / z_sum;

    // Ceiling from the worst-phase construction, using the previous
    // iterate's sequence currents for the angle gap and |İ2|.
    let delta_i1_prev = if op.i1.norm() > 1e-12 { op.i1.arg() } else { i1_unconstrained.arg() };
    let delta_i2 = wrap_angle(op.v2_lv.arg() + FRAC_PI_2);
    let gaps = sequence_angle_gaps(delta_i1_prev, delta_i2);
    let max_cos = gaps.iter().fold(f64::NEG_INFINITY, |m, g| m.max(g.cos()));
    let i2_prev = if op.v2_lv.norm() < 1e-15 { 0.0 } else { op.i2.norm() };
    let i1_max = max_phase_ceiling(i2_prev, max_cos, unit.i_max);

    let (i1, r_vi, active, infeasible) = if i1_unconstrained.norm() <= i1_max {
        (i1_unconstrained, 0.0, false, false)
    } else {
        match vic_virtual_resistance(op.e1, v_eq, z_eq, z_f, unit.phi, i1_max) {
            Ok(r) => {
                let z_vi = Phasor::new(r, unit.phi * r);
                ((op.e1 - z_sum / z_eq * v_eq) / (z_sum + z_vi), r, true, false)
            }
            Err(_) => {
                // Degenerate geometry: no real resistance reaches the
                // ceiling. Scale radially, keeping the unconstrained angle.
                (polar(i1_max, i1_unconstrained.arg()), 0.0, true, true)
            }
        }
    };
    let z_vi = Phasor::new(r_vi, unit.phi * r_vi);
    // Model LV-node voltage; equals the measured terminal at convergence.
    let v_m = op.e1 - z_vi * i1;
    let i1_lv = i1 - v_m / z_f;

    let i2_max = 0.5 * i1_max;
    let i2 = vic_negative_sequence(op.v2_lv, unit.k_factor, i2_max, op.e1.arg());
    let i2_lv = i2 - op.v2_lv / z_f;

    let q = (op.v1_lv * i1_lv.conj() + i2_lv * op.v2_lv.conj()).im;
    let e1_mag = unit.v_ref + unit.k_v * (unit.q_ref - q);
    let e1_next = polar(e1_mag, prefault.e1.arg());

    let i_th = i1_max - unit.kappa;
    let v_drop = (z_vi * i1).norm();
    let sigma = if active && i_th > 0.0 {
        v_drop / (i1_max * i_th * (1.0 + unit.phi * unit.phi).sqrt())
    } else {
        0.0
    };
    IbrOperatingPoint {
        v1_lv: op.v1_lv,
        v2_lv: op.v2_lv,
        i1,
        i2,
        i1_lv,
        i2_lv,
        e1: e1_next,
        q,
        limiter: LimiterState::Vic(VicState {
            r_vi,
            x_vi: unit.phi * r_vi,
            phi: unit.phi,
            sigma,
            i1_max,
            i_th,
            v_drop,
            e1: op.e1,
            z_sum,
            z_eq,
            v_eq,
            active,
            infeasible,
        }),
    }
}

/// One improved-CSM step for a GFL unit from the latest measured terminal
/// voltages. The pre-fault operating point supplies the active/reactive
/// current baseline and the pass-through anchor.
pub fn gfl_step(
    op: &IbrOperatingPoint,
    prefault: &IbrOperatingPoint,
    unit: &IbrUnit,
) -> IbrOperatingPoint {
    if undisturbed(op, prefault) {
        return prefault.clone();
    }
    let z_f = unit.z_filter;
    let v1 = op.v1_lv;
    let v2 = op.v2_lv;
    let theta1 = v1.arg();

    // Pre-fault current decomposed on the pre-fault voltage direction:
    // İ1 = (i_p − j·i_r)·e^{j∠V̇1}, positive i_r injecting reactive power.
    let i1_pf_frame = prefault.i1 * polar(1.0, -prefault.v1_lv.arg());
    let (i1p_0, i1r_0) = (i1_pf_frame.re, -i1_pf_frame.im);

    // Voltage-dip reactive support on top of the pre-fault reference.
    let dip = (prefault.v1_lv.norm() - v1.norm()).max(0.0);
    let i1p_ref = i1p_0;
    let i1r_ref = i1r_0 + unit.k_factor * dip;

    // Negative-sequence demand: magnitude k·|V̇2|, leading V̇2 by 90°.
    let i2_demand = unit.k_factor * v2.norm();

    match unit.gfl_limiter {
        crate::netmodel::GflLimiter::ConventionalCsm => {
            let i2_capped = i2_demand.min(0.5 * unit.i_max);
            let (i1_p, i1_r, i2_r) = csm_conventional(i1p_ref, i1r_ref, i2_capped, unit.i_max);
            let delta_i2 = wrap_angle(v2.arg() + FRAC_PI_2);
            let i1 = Phasor::new(i1_p, -i1_r) * polar(1.0, theta1);
            let i2 =
                if v2.norm() < 1e-15 { Phasor::new(0.0, 0.0) } else { polar(i2_r, delta_i2) };
            let saturated = (i1_p, i1_r, i2_r) != (i1p_ref, i1r_ref, i2_capped);
            finish_gfl(op, unit, i1, i2, z_f, CsmState {
                i1_p,
                i1_r,
                i2_r,
                i_lim: unit.i_max,
                i1_max: unit.i_max,
                i2_max: 0.5 * unit.i_max,
                delta_i1: i1.arg(),
                delta_i2,
                saturated,
            })
        }
        crate::netmodel::GflLimiter::ImprovedCsm => {
            // The ceiling depends on the final İ1 angle, which depends on
            // the allocation under the ceiling: a relaxed fixed-point loop
            // settles both so that the worst phase of the stored currents
            // lands on the ceiling to machine precision whenever it binds.
            let mut delta_i1 = Phasor::new(i1p_ref, -i1r_ref).arg() + theta1;
            let mut i1_p = i1p_ref;
            let mut i1_r = i1r_ref;
            let mut lims = (unit.i_max, 0.5 * unit.i_max, 0.0);
            let mut saturated = false;
            let mag_ref = (i1p_ref * i1p_ref + i1r_ref * i1r_ref).sqrt();
            for _ in 0..200 {
                lims = csm_improved(
                    v2.arg(),
                    polar(i2_demand.min(0.5 * unit.i_max), 0.0),
                    unit.i_max,
                    delta_i1,
                );
                let (i1_max, _i2_max, _) = lims;
                if mag_ref > i1_max {
                    // Voltage-support current takes precedence when the
                    // positive-sequence ceiling binds.
                    saturated = true;
                    i1_r = i1r_ref.min(i1_max);
                    i1_p = (i1_max * i1_max - i1_r * i1_r).max(0.0).sqrt().min(i1p_ref);
                } else {
                    saturated = false;
                    i1_p = i1p_ref;
                    i1_r = i1r_ref;
                }
                let next = wrap_angle(Phasor::new(i1_p, -i1_r).arg() + theta1);
                let step = wrap_angle(next - delta_i1);
                if step.abs() < 1e-13 {
                    break;
                }
                delta_i1 = wrap_angle(delta_i1 + 0.5 * step);
            }
            let (i1_max, i2_max, delta_i2) = lims;
            let i2_r = i2_demand.min(i2_max);
            saturated = saturated || i2_r < i2_demand;
            let i1 = Phasor::new(i1_p, -i1_r) * polar(1.0, theta1);
            let i2 =
                if v2.norm() < 1e-15 { Phasor::new(0.0, 0.0) } else { polar(i2_r, delta_i2) };
            finish_gfl(op, unit, i1, i2, z_f, CsmState {
                i1_p,
                i1_r,
                i2_r,
                i_lim: unit.i_max,
                i1_max,
                i2_max,
                delta_i1: i1.arg(),
                delta_i2,
                saturated,
            })
        }
    }
}

fn finish_gfl(
    op: &IbrOperatingPoint,
    _unit: &IbrUnit,
    i1: Phasor,
    i2: Phasor,
    z_f: Phasor,
    state: CsmState,
) -> IbrOperatingPoint {
    let i1_lv = i1 - op.v1_lv / z_f;
    let i2_lv = i2 - op.v2_lv / z_f;
    let q = (op.v1_lv * i1_lv.conj() + i2_lv * op.v2_lv.conj()).im;
    IbrOperatingPoint {
        v1_lv: op.v1_lv,
        v2_lv: op.v2_lv,
        i1,
        i2,
        i1_lv,
        i2_lv,
        e1: op.v1_lv,
        q,
        limiter: LimiterState::Csm(state),
    }
}

/// Operating point implied by a power-flow solution: terminal sequence
/// voltages plus the unit's injected sequence currents (already machine
/// pu), back-computed bridge currents through the shunt filter.
pub fn prefault_op(
    unit: &IbrUnit,
    v1_lv: Phasor,
    v2_lv: Phasor,
    i1_lv: Phasor,
    i2_lv: Phasor,
) -> IbrOperatingPoint {
    let i1 = i1_lv + v1_lv / unit.z_filter;
    let i2 = i2_lv + v2_lv / unit.z_filter;
    let q = (v1_lv * i1_lv.conj() + i2_lv * v2_lv.conj()).im;
    IbrOperatingPoint {
        v1_lv,
        v2_lv,
        i1,
        i2,
        i1_lv,
        i2_lv,
        e1: v1_lv,
        q,
        limiter: LimiterState::Inactive,
    }
}
