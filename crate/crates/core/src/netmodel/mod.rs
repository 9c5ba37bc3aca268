//! Network data model: buses, series/shunt elements, sources, switches,
//! converter units, and per-unit bookkeeping.
//!
//! Everything solver-facing is stored in per-unit on the system MVA base and
//! the per-bus voltage bases; the file layer converts physical units on the
//! way in. Angles are radians internally. Converter-local parameters
//! (current ceiling, filter impedance, sequence admittances, setpoints) are
//! per-unit on the *unit's own rating* and converted at the solver boundary —
//! that is the base vendors quote them on, and it is what makes "1.1 pu
//! ceiling" mean the same thing for a 0.25-MVA and a 250-MVA unit.

pub mod validate;

use crate::phasor::{invert_dense_complex, Phasor};
use serde::{Deserialize, Serialize};

pub use validate::{validate, Severity, ValidationIssue, ValidationReport};

/// 3x3 complex phase-domain matrix (row-major `[row][col]`, phases a,b,c).
pub type Mat3 = [[Phasor; 3]; 3];

/// Zero 3x3 matrix.
pub fn mat3_zero() -> Mat3 {
    [[Phasor::new(0.0, 0.0); 3]; 3]
}

/// One of the three phases. The `usize` conversions index phase arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i]
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }
}

/// Subset of the three phases present at a bus or element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);
    pub const EMPTY: PhaseSet = PhaseSet(0);

    pub fn from_phases(phases: &[Phase]) -> Self {
        let mut m = 0u8;
        for p in phases {
            m |= 1 << p.index();
        }
        PhaseSet(m)
    }

    /// Parses strings like "abc", "a", "bc" (case-insensitive).
    pub fn parse(s: &str) -> Option<Self> {
        let mut m = 0u8;
        for ch in s.chars() {
            match ch.to_ascii_lowercase() {
                'a' => m |= 1,
                'b' => m |= 2,
                'c' => m |= 4,
                _ => return None,
            }
        }
        if m == 0 {
            None
        } else {
            Some(PhaseSet(m))
        }
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn intersect(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 & other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }
}

impl std::fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

/// System-wide per-unit base. Voltage bases live on the buses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    pub s_base_mva: f64,
}

impl PerUnitBase {
    /// Impedance base in ohms for a line-to-line kV base.
    pub fn z_base_ohm(&self, base_kv: f64) -> f64 {
        base_kv * base_kv / self.s_base_mva
    }

    pub fn ohms_to_pu(&self, z_ohm: Phasor, base_kv: f64) -> Phasor {
        z_ohm / self.z_base_ohm(base_kv)
    }

    pub fn pu_to_ohms(&self, z_pu: Phasor, base_kv: f64) -> Phasor {
        z_pu * self.z_base_ohm(base_kv)
    }
}

#[derive(Debug, Clone)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    pub base_kv: f64,
}

/// Series multi-phase element with an optional shunt (π-model; the shunt
/// admittance splits equally between the two ends).
#[derive(Debug, Clone)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub z_abc: Mat3,
    pub y_shunt_abc: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindingConnection {
    /// Wye with the neutral tied to ground (through the transformer's
    /// zero-sequence path impedance, if one is given).
    WyeGround,
    /// Wye with a floating neutral: blocks zero-sequence current.
    Wye,
    /// Delta: circulates zero-sequence current, shifts positive sequence ±30°.
    Delta,
}

/// Zero-sequence path of a transformer's grounded winding(s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroSeqPath {
    /// Extra zero-sequence impedance (pu); stamped as `z/3` from neutral to
    /// ground so the zero-sequence network sees exactly `z` on top of leakage.
    Impedance(Phasor),
    /// No zero-sequence path despite the stated connection (e.g. a grounding
    /// bank out of service). Grounded wye windings are treated as floating.
    Blocked,
}

impl ZeroSeqPath {
    pub fn solid() -> Self {
        ZeroSeqPath::Impedance(Phasor::new(0.0, 0.0))
    }
}

/// Two-winding three-phase transformer built from three ideal coils with the
/// leakage impedance folded into the secondary-side coil equations.
#[derive(Debug, Clone)]
pub struct Transformer {
    pub id: String,
    pub from: String,
    pub to: String,
    pub conn_from: WindingConnection,
    pub conn_to: WindingConnection,
    /// Off-nominal ratio (from-side voltage per to-side voltage, pu/pu).
    pub tap: f64,
    /// Leakage impedance, pu on the system base.
    pub z_leak: Phasor,
    pub z0_path: ZeroSeqPath,
    /// Delta coil orientation; flips the sign of the ±30° shift.
    pub delta_lag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    /// Held at the specified complex power through the Newton solve.
    ConstantPower,
    /// Converted to a fixed phase-to-ground impedance at nominal (1 pu) voltage.
    ConstantImpedance,
}

/// Per-phase wye-connected (phase-to-ground) load.
#[derive(Debug, Clone)]
pub struct Load {
    pub id: String,
    pub bus: String,
    /// Complex power drawn per phase, pu on the system base; `None` on
    /// phases the load does not touch.
    pub s_phase: [Option<Phasor>; 3],
    pub model: LoadModel,
}

/// Ideal EMF source, optionally behind a 3x3 internal impedance. The source
/// rows read `V̇_bus + Z_int·İ_v = Ė` directly — the internal drop is folded
/// into the EMF equation, no internal node is synthesized.
#[derive(Debug, Clone)]
pub struct SourceIdeal {
    pub id: String,
    pub bus: String,
    pub e_abc: [Phasor; 3],
    pub z_int: Option<Mat3>,
}

/// Ideal per-phase switch.
#[derive(Debug, Clone)]
pub struct Switch {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Closed state per phase a,b,c.
    pub closed: [bool; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IbrMode {
    /// Grid-following: regulates P and Q at the point of interconnection.
    Gfl,
    /// Grid-forming: regulates P and positive-sequence voltage magnitude.
    Gfm,
}

/// Current-limiting strategy for GFL units under fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GflLimiter {
    /// Maximum-phase-aware saturation with a dedicated negative-sequence
    /// budget (the default).
    ImprovedCsm,
    /// Scalar `|I1|+|I2| <= limit` saturation, kept as a comparison baseline.
    ConventionalCsm,
}

/// Converter unit at the LV side of its step-up transformer.
///
/// All numeric parameters are per-unit on `s_rated_mva` (see module docs).
#[derive(Debug, Clone)]
pub struct IbrUnit {
    pub id: String,
    pub bus: String,
    pub mode: IbrMode,
    pub s_rated_mva: f64,
    /// Converter phase-current ceiling (machine pu).
    pub i_max: f64,
    /// Active-power setpoint (machine pu).
    pub p_ref: f64,
    /// Reactive-power setpoint: dispatch target for GFL, droop reference
    /// for the GFM EMF-magnitude update (machine pu).
    pub q_ref: f64,
    /// Positive-sequence voltage target, GFM only (pu).
    pub v_ref: f64,
    /// Grid-code gain: reactive current per pu voltage deviation, used for
    /// both the positive-sequence dip support and the negative-sequence law.
    pub k_factor: f64,
    /// Negative-sequence admittance law `İ2 = k_neg·V̇2` holding in normal
    /// (power-flow) operation, machine pu.
    pub k_neg: Phasor,
    /// Zero-sequence admittance law `İ0 = k_zero·V̇0` (machine pu); zero for
    /// units with no grounded path of their own.
    pub k_zero: Phasor,
    /// Shunt filter impedance at the LV terminal (machine pu).
    pub z_filter: Phasor,
    /// Virtual-impedance X/R ratio.
    pub phi: f64,
    /// Hysteresis margin subtracted from the current ceiling for the
    /// virtual-impedance threshold (machine pu).
    pub kappa: f64,
    /// Reactive-droop gain for the GFM EMF magnitude update.
    pub k_v: f64,
    /// GFL saturation strategy.
    pub gfl_limiter: GflLimiter,
}

impl IbrUnit {
    /// Machine-base current -> system-base current multiplier.
    pub fn i_mach_to_sys(&self, base: PerUnitBase) -> f64 {
        self.s_rated_mva / base.s_base_mva
    }

    /// Machine-base impedance -> system-base impedance multiplier.
    pub fn z_mach_to_sys(&self, base: PerUnitBase) -> f64 {
        base.s_base_mva / self.s_rated_mva
    }

    /// Negative-sequence admittance in system pu.
    pub fn k_neg_sys(&self, base: PerUnitBase) -> Phasor {
        self.k_neg * self.i_mach_to_sys(base)
    }

    /// Zero-sequence admittance in system pu.
    pub fn k_zero_sys(&self, base: PerUnitBase) -> Phasor {
        self.k_zero * self.i_mach_to_sys(base)
    }

    /// Power setpoints in system pu.
    pub fn p_ref_sys(&self, base: PerUnitBase) -> f64 {
        self.p_ref * self.s_rated_mva / base.s_base_mva
    }

    pub fn q_ref_sys(&self, base: PerUnitBase) -> f64 {
        self.q_ref * self.s_rated_mva / base.s_base_mva
    }
}

/// Complete multiphase network.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub base: PerUnitBase,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub transformers: Vec<Transformer>,
    pub loads: Vec<Load>,
    pub sources: Vec<SourceIdeal>,
    pub switches: Vec<Switch>,
    pub ibr_units: Vec<IbrUnit>,
}

impl NetworkModel {
    pub fn empty(s_base_mva: f64) -> Self {
        NetworkModel {
            base: PerUnitBase { s_base_mva },
            buses: Vec::new(),
            branches: Vec::new(),
            transformers: Vec::new(),
            loads: Vec::new(),
            sources: Vec::new(),
            switches: Vec::new(),
            ibr_units: Vec::new(),
        }
    }

    /// Bus id -> index lookup (construction order).
    pub fn bus_map(&self) -> std::collections::HashMap<&str, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn ibr(&self, id: &str) -> Option<&IbrUnit> {
        self.ibr_units.iter().find(|u| u.id == id)
    }
}

/// Expands sequence impedances `(z1, z0)` into a phase-domain 3x3 block via
/// the symmetrical-component similarity transform (negative-sequence
/// impedance taken equal to positive, the transposed-line assumption).
/// Result: `z_self = (z0 + 2 z1)/3` on the diagonal, `z_mutual = (z0 - z1)/3`
/// off it.
pub fn seq_to_phase_matrix(z1: Phasor, z0: Phasor) -> Mat3 {
    let zs = (z0 + 2.0 * z1) / 3.0;
    let zm = (z0 - z1) / 3.0;
    let mut m = mat3_zero();
    for (r, row) in m.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = if r == c { zs } else { zm };
        }
    }
    m
}

/// Diagonal phase matrix (uncoupled phases).
pub fn diag_phase_matrix(z: Phasor) -> Mat3 {
    let mut m = mat3_zero();
    for (r, row) in m.iter_mut().enumerate() {
        row[r] = z;
    }
    m
}

/// Inverts the sub-block of `z` selected by `phases`, returning a full 3x3
/// admittance matrix that is zero outside the selected phases. This is how
/// one- and two-phase laterals reuse three-phase element data.
pub fn masked_inverse(z: &Mat3, phases: PhaseSet) -> Result<Mat3, ()> {
    let idx: Vec<usize> = phases.iter().map(|p| p.index()).collect();
    let n = idx.len();
    if n == 0 {
        return Err(());
    }
    let mut sub = vec![Phasor::new(0.0, 0.0); n * n];
    for (ri, &r) in idx.iter().enumerate() {
        for (ci, &c) in idx.iter().enumerate() {
            sub[ri * n + ci] = z[r][c];
        }
    }
    let inv = invert_dense_complex(&sub, n)?;
    let mut out = mat3_zero();
    for (ri, &r) in idx.iter().enumerate() {
        for (ci, &c) in idx.iter().enumerate() {
            out[r][c] = inv[ri * n + ci];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasor::polar;
    use approx::assert_abs_diff_eq;

    #[test]
    fn phase_set_parsing_and_queries() {
        let s = PhaseSet::parse("ac").unwrap();
        assert!(s.contains(Phase::A));
        assert!(!s.contains(Phase::B));
        assert!(s.contains(Phase::C));
        assert_eq!(s.count(), 2);
        assert_eq!(s.to_string(), "ac");
        assert!(PhaseSet::parse("").is_none());
        assert!(PhaseSet::parse("xyz").is_none());
        assert!(s.is_subset_of(PhaseSet::ABC));
        assert!(!PhaseSet::ABC.is_subset_of(s));
    }

    #[test]
    fn per_unit_round_trip_is_exact_to_1e12() {
        let base = PerUnitBase { s_base_mva: 10.0 };
        for kv in [0.6, 12.47, 24.9, 120.0] {
            for z in [Phasor::new(1.2, 8.0), polar(25.0, 1.1), Phasor::new(0.001, 0.0)] {
                let pu = base.ohms_to_pu(z, kv);
                let back = base.pu_to_ohms(pu, kv);
                assert!((back - z).norm() <= 1e-12 * z.norm());
            }
        }
    }

    #[test]
    fn z_base_matches_hand_value() {
        // 24.9 kV, 10 MVA: Zbase = 24.9^2/10 = 62.001 ohm.
        let base = PerUnitBase { s_base_mva: 10.0 };
        assert_abs_diff_eq!(base.z_base_ohm(24.9), 62.001, epsilon = 1e-12);
    }

    #[test]
    fn sequence_expansion_matches_similarity_transform() {
        use crate::seq::{to_phase, to_sequence, PhaseTriple, SequenceTriple};
        let z1 = Phasor::new(0.02, 0.1);
        let z0 = Phasor::new(0.06, 0.3);
        let m = seq_to_phase_matrix(z1, z0);
        // Multiply a random phase vector: phase result must equal
        // A·diag(z0,z1,z1)·A⁻¹ applied to it.
        let v = PhaseTriple::new(Phasor::new(1.0, 0.2), Phasor::new(-0.4, 0.7), Phasor::new(0.1, -1.0));
        let s = to_sequence(v);
        let expect = to_phase(SequenceTriple::new(z0 * s.zero, z1 * s.pos, z1 * s.neg));
        let va = v.as_array();
        for r in 0..3 {
            let mut got = Phasor::new(0.0, 0.0);
            for c in 0..3 {
                got += m[r][c] * va[c];
            }
            assert!((got - expect.as_array()[r]).norm() < 1e-13);
        }
    }

    #[test]
    fn equal_sequences_collapse_to_diagonal() {
        let z = Phasor::new(0.05, 0.4);
        let m = seq_to_phase_matrix(z, z);
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { z } else { Phasor::new(0.0, 0.0) };
                assert!((m[r][c] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn masked_inverse_only_touches_selected_phases() {
        let z = diag_phase_matrix(Phasor::new(0.0, 2.0));
        let y = masked_inverse(&z, PhaseSet::parse("b").unwrap()).unwrap();
        assert!((y[1][1] - Phasor::new(0.0, -0.5)).norm() < 1e-15);
        for (r, c) in [(0, 0), (2, 2), (0, 1), (1, 0), (1, 2)] {
            assert_eq!(y[r][c], Phasor::new(0.0, 0.0));
        }
    }

    #[test]
    fn machine_base_conversions() {
        let base = PerUnitBase { s_base_mva: 10.0 };
        let unit = IbrUnit {
            id: "u".into(),
            bus: "b".into(),
            mode: IbrMode::Gfl,
            s_rated_mva: 2.5,
            i_max: 1.1,
            p_ref: 0.8,
            q_ref: 0.1,
            v_ref: 1.0,
            k_factor: 2.0,
            k_neg: Phasor::new(0.0, -0.01),
            k_zero: Phasor::new(0.0, 0.0),
            z_filter: Phasor::new(1.0, 10.0),
            phi: 3.0,
            kappa: 0.11,
            k_v: 0.05,
            gfl_limiter: GflLimiter::ImprovedCsm,
        };
        // 0.8 machine pu of 2.5 MVA = 2 MW = 0.2 system pu on 10 MVA.
        assert_abs_diff_eq!(unit.p_ref_sys(base), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(unit.i_mach_to_sys(base), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(unit.z_mach_to_sys(base), 4.0, epsilon = 1e-15);
        let zf_sys = unit.z_filter * unit.z_mach_to_sys(base);
        assert_abs_diff_eq!(zf_sys.re, 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(zf_sys.im, 40.0, epsilon = 1e-15);
    }
}
