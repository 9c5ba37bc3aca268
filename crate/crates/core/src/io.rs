//! File formats and result emission.
//!
//! Two JSON document kinds are read: a *network file* (the grid model) and a
//! *scenario file* (solver options, fault lists, sweep axes, output
//! selections). Both carry a `schema_version` and reject unknown fields, so
//! typos fail loudly with serde's line/column diagnostics instead of being
//! silently dropped.
//!
//! Conventions:
//!
//! * Complex values are written `{"re": .., "im": ..}` or
//!   `{"mag": .., "ang_deg": ..}` — angles in files are always degrees.
//! * 3×3 impedance blocks take one of three shapes: `{"z1": .., "z0": ..}`
//!   (symmetric element given by sequence impedances), `{"diag": ..}`
//!   (three decoupled equal phases), or `{"matrix": [[..;3];3]}` (full).
//!   An optional `"unit"` flag selects `"pu"` (default) or `"ohm"`; ohmic
//!   values are normalized using the owning element's bus voltage base.
//!   Branch shunt blocks take the same shapes with `y1`/`y0` fields and
//!   `"pu"`/`"siemens"` units. Converter-local parameters (`z_filter`,
//!   `k_neg`, …) are machine per-unit only: they live on the unit's own MVA
//!   base, for which the file carries no voltage base.
//! * Powers are per-unit on the system base; voltages per-unit on the bus
//!   base.
//!
//! Serialization always writes the rectangular/full-matrix spelling, so
//! parse → serialize → parse is value-identical regardless of the input
//! spelling. Machine-readable results use serde_json's shortest
//! round-trip float form: every value re-parses to the identical bit
//! pattern.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::frt::LimiterState;
use crate::mana::{PfOptions, PfSolution, PfStart};
use crate::netmodel::{
    mat3_zero, seq_to_phase_matrix, Branch, Bus, GflLimiter, IbrMode, IbrUnit, Load, LoadModel,
    Mat3, NetworkModel, Phase, PhaseSet, SourceIdeal, Switch, Transformer, WindingConnection,
    ZeroSeqPath,
};
use crate::phasor::{angle_deg, polar_deg, Phasor};
use crate::scsolver::{FaultKind, FaultSpec, ScOptions, ScResult};
use crate::seq::{to_phase, SequenceTriple};

/// Version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Scalar specs
// ---------------------------------------------------------------------------

/// Complex number as written in files: rectangular or polar-degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhasorSpec {
    Rect(RectSpec),
    Polar(PolarSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarSpec {
    pub mag: f64,
    pub ang_deg: f64,
}

impl PhasorSpec {
    pub fn value(self) -> Phasor {
        match self {
            PhasorSpec::Rect(r) => Phasor::new(r.re, r.im),
            PhasorSpec::Polar(p) => polar_deg(p.mag, p.ang_deg),
        }
    }

    pub fn rect(p: Phasor) -> PhasorSpec {
        PhasorSpec::Rect(RectSpec { re: p.re, im: p.im })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZUnit {
    #[default]
    Pu,
    Ohm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YUnit {
    #[default]
    Pu,
    Siemens,
}

// ---------------------------------------------------------------------------
// 3×3 blocks
// ---------------------------------------------------------------------------

/// Impedance block: exactly one shape (`z1`+`z0`, `diag`, or `matrix`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZBlockFile {
    pub unit: ZUnit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z1: Option<PhasorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0: Option<PhasorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diag: Option<PhasorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[PhasorSpec; 3]; 3]>,
}

impl ZBlockFile {
    fn resolve(&self, z_base: f64, what: &str) -> Result<Mat3, ParseError> {
        let scale = match self.unit {
            ZUnit::Pu => 1.0,
            ZUnit::Ohm => 1.0 / z_base,
        };
        resolve_block(
            self.z1.as_ref(),
            self.z0.as_ref(),
            self.diag.as_ref(),
            self.matrix.as_ref(),
            scale,
            what,
            ("z1", "z0"),
        )
    }

    pub fn full(m: &Mat3) -> ZBlockFile {
        ZBlockFile {
            unit: ZUnit::Pu,
            matrix: Some(mat3_to_specs(m)),
            ..ZBlockFile::default()
        }
    }
}

/// Admittance block, same shapes as [`ZBlockFile`] with `y1`/`y0` names.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YBlockFile {
    pub unit: YUnit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y1: Option<PhasorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<PhasorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diag: Option<PhasorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[PhasorSpec; 3]; 3]>,
}

impl YBlockFile {
    fn resolve(&self, z_base: f64, what: &str) -> Result<Mat3, ParseError> {
        let scale = match self.unit {
            YUnit::Pu => 1.0,
            YUnit::Siemens => z_base,
        };
        resolve_block(
            self.y1.as_ref(),
            self.y0.as_ref(),
            self.diag.as_ref(),
            self.matrix.as_ref(),
            scale,
            what,
            ("y1", "y0"),
        )
    }

    pub fn full(m: &Mat3) -> YBlockFile {
        YBlockFile {
            unit: YUnit::Pu,
            matrix: Some(mat3_to_specs(m)),
            ..YBlockFile::default()
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve_block(
    seq1: Option<&PhasorSpec>,
    seq0: Option<&PhasorSpec>,
    diag: Option<&PhasorSpec>,
    matrix: Option<&[[PhasorSpec; 3]; 3]>,
    scale: f64,
    what: &str,
    names: (&str, &str),
) -> Result<Mat3, ParseError> {
    let shapes = usize::from(seq1.is_some() || seq0.is_some())
        + usize::from(diag.is_some())
        + usize::from(matrix.is_some());
    if shapes != 1 {
        return Err(ParseError::Semantic(format!(
            "{what}: give exactly one of {}/{}, diag, or matrix",
            names.0, names.1
        )));
    }
    let mut m = match (seq1, seq0, diag, matrix) {
        (Some(s1), Some(s0), _, _) => seq_to_phase_matrix(s1.value(), s0.value()),
        (Some(_), None, _, _) | (None, Some(_), _, _) => {
            return Err(ParseError::Semantic(format!(
                "{what}: {} and {} must be given together",
                names.0, names.1
            )))
        }
        (_, _, Some(d), _) => crate::netmodel::diag_phase_matrix(d.value()),
        (_, _, _, Some(rows)) => {
            let mut m = mat3_zero();
            for (p, row) in rows.iter().enumerate() {
                for (q, s) in row.iter().enumerate() {
                    m[p][q] = s.value();
                }
            }
            m
        }
        _ => unreachable!("shape count checked above"),
    };
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(m)
}

fn mat3_to_specs(m: &Mat3) -> [[PhasorSpec; 3]; 3] {
    let z = PhasorSpec::rect(Phasor::new(0.0, 0.0));
    let mut out = [[z; 3]; 3];
    for p in 0..3 {
        for q in 0..3 {
            out[p][q] = PhasorSpec::rect(m[p][q]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Network file
// ---------------------------------------------------------------------------

/// On-disk network document. Field-for-field mirror of the model types with
/// file-friendly spellings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema_version: u32,
    pub s_base_mva: f64,
    pub buses: Vec<BusFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<BranchFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transformers: Vec<TransformerFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<LoadFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub switches: Vec<SwitchFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ibr_units: Vec<IbrFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusFile {
    pub id: String,
    /// Present phases as letters, e.g. `"abc"`, `"bc"`.
    pub phases: String,
    #[serde(default = "default_base_kv")]
    pub base_kv: f64,
}

fn default_base_kv() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchFile {
    pub id: String,
    pub from: String,
    pub to: String,
    pub z: ZBlockFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_shunt: Option<YBlockFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerFile {
    pub id: String,
    pub from: String,
    pub to: String,
    pub conn_from: WindingConnection,
    pub conn_to: WindingConnection,
    #[serde(default = "default_tap")]
    pub tap: f64,
    pub z_leak: PhasorSpec,
    #[serde(default)]
    pub z_leak_unit: ZUnit,
    /// Zero-sequence path of grounded windings: `"solid"`, `"blocked"`, or
    /// `{"z": ..}` (pu).
    #[serde(default)]
    pub z0: Z0File,
    #[serde(default = "default_true")]
    pub delta_lag: bool,
}

fn default_tap() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Z0File {
    Named(Z0Named),
    Z(Z0Z),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Z0Named {
    Solid,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Z0Z {
    pub z: PhasorSpec,
}

impl Default for Z0File {
    fn default() -> Self {
        Z0File::Named(Z0Named::Solid)
    }
}

impl Z0File {
    fn to_path(self) -> ZeroSeqPath {
        match self {
            Z0File::Named(Z0Named::Solid) => ZeroSeqPath::solid(),
            Z0File::Named(Z0Named::Blocked) => ZeroSeqPath::Blocked,
            Z0File::Z(z) => ZeroSeqPath::Impedance(z.z.value()),
        }
    }

    fn from_path(p: ZeroSeqPath) -> Z0File {
        match p {
            ZeroSeqPath::Blocked => Z0File::Named(Z0Named::Blocked),
            ZeroSeqPath::Impedance(z) if z == Phasor::new(0.0, 0.0) => {
                Z0File::Named(Z0Named::Solid)
            }
            ZeroSeqPath::Impedance(z) => Z0File::Z(Z0Z { z: PhasorSpec::rect(z) }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadFile {
    pub id: String,
    pub bus: String,
    #[serde(default = "default_load_model")]
    pub model: LoadModel,
    /// Balanced draw: this power on every phase present at the bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<PhasorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_a: Option<PhasorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_b: Option<PhasorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_c: Option<PhasorSpec>,
}

fn default_load_model() -> LoadModel {
    LoadModel::ConstantPower
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFile {
    pub id: String,
    pub bus: String,
    /// Balanced EMF: phase a at this value, b/c the positive-sequence set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<PhasorSpec>,
    /// Explicit per-phase EMF (overrides nothing; exactly one of `e`/`e_abc`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_abc: Option<[PhasorSpec; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_int: Option<ZBlockFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchFile {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Letters of the closed phases (`"abc"` fully closed, `""` fully open).
    pub closed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbrFile {
    pub id: String,
    pub bus: String,
    pub mode: IbrMode,
    pub s_rated_mva: f64,
    #[serde(default = "default_i_max")]
    pub i_max: f64,
    #[serde(default)]
    pub p_ref: f64,
    #[serde(default)]
    pub q_ref: f64,
    #[serde(default = "default_one")]
    pub v_ref: f64,
    #[serde(default = "default_k_factor")]
    pub k_factor: f64,
    /// Normal-operation negative-sequence admittance law (machine pu).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_neg: Option<PhasorSpec>,
    /// Zero-sequence admittance law (machine pu); zero when the unit has no
    /// grounded path of its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_zero: Option<PhasorSpec>,
    /// Shunt filter impedance at the LV terminal (machine pu).
    pub z_filter: PhasorSpec,
    #[serde(default = "default_phi")]
    pub phi: f64,
    /// Virtual-impedance arming margin; defaults to `0.1 · i_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "default_k_v")]
    pub k_v: f64,
    #[serde(default = "default_gfl_limiter")]
    pub gfl_limiter: GflLimiter,
}

fn default_i_max() -> f64 {
    1.1
}

fn default_one() -> f64 {
    1.0
}

fn default_k_factor() -> f64 {
    2.0
}

fn default_phi() -> f64 {
    3.0
}

fn default_k_v() -> f64 {
    0.05
}

fn default_gfl_limiter() -> GflLimiter {
    GflLimiter::ImprovedCsm
}

/// Default normal-operation negative-sequence law: a small mostly-reactive
/// admittance.
pub fn default_k_neg() -> Phasor {
    Phasor::new(0.0, -0.01)
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Reads and validates a network file.
pub fn parse_network(path: &Path) -> Result<NetworkModel, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network_str(&path.display().to_string(), &text)
}

/// Parses a network document from a string; `label` names the source in
/// errors.
pub fn parse_network_str(label: &str, text: &str) -> Result<NetworkModel, ParseError> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|source| ParseError::Malformed {
        path: label.to_string(),
        source,
    })?;
    network_from_file(&file)
}

/// Converts a parsed document into a validated model.
pub fn network_from_file(file: &NetworkFile) -> Result<NetworkModel, ParseError> {
    let net = network_from_file_unchecked(file)?;
    let report = crate::netmodel::validate(&net);
    if !report.is_ok() {
        let msg: Vec<String> = report.errors().map(|e| e.to_string()).collect();
        return Err(ParseError::Semantic(msg.join("; ")));
    }
    Ok(net)
}

/// Conversion without the structural-validation gate — for callers that run
/// [`crate::netmodel::validate`] themselves to report the full issue list.
pub fn network_from_file_unchecked(file: &NetworkFile) -> Result<NetworkModel, ParseError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(ParseError::SchemaVersion {
            found: file.schema_version,
            supported: SCHEMA_VERSION,
        });
    }
    if !(file.s_base_mva > 0.0) {
        return Err(ParseError::Semantic(format!(
            "s_base_mva must be positive (got {})",
            file.s_base_mva
        )));
    }
    let mut net = NetworkModel::empty(file.s_base_mva);

    for b in &file.buses {
        let phases = PhaseSet::parse(&b.phases).ok_or_else(|| {
            ParseError::Semantic(format!(
                "bus '{}': phases '{}' must be a non-empty subset of \"abc\"",
                b.id, b.phases
            ))
        })?;
        if !(b.base_kv > 0.0) {
            return Err(ParseError::Semantic(format!(
                "bus '{}': base_kv must be positive (got {})",
                b.id, b.base_kv
            )));
        }
        net.buses.push(Bus { id: b.id.clone(), phases, base_kv: b.base_kv });
    }

    let kv_of = |bus: &str, element: &str| -> Result<f64, ParseError> {
        net.buses
            .iter()
            .find(|b| b.id == bus)
            .map(|b| b.base_kv)
            .ok_or_else(|| {
                ParseError::Semantic(format!("{element}: references unknown bus '{bus}'"))
            })
    };
    let z_base_of = |bus: &str, element: &str| -> Result<f64, ParseError> {
        let kv = kv_of(bus, element)?;
        Ok(net.base.z_base_ohm(kv))
    };

    for b in &file.branches {
        let what = format!("branch '{}'", b.id);
        let z_base = z_base_of(&b.from, &what)?;
        let z_abc = b.z.resolve(z_base, &what)?;
        let y_shunt_abc = match &b.y_shunt {
            Some(y) => y.resolve(z_base, &what)?,
            None => mat3_zero(),
        };
        net.branches.push(Branch {
            id: b.id.clone(),
            from: b.from.clone(),
            to: b.to.clone(),
            z_abc,
            y_shunt_abc,
        });
    }

    for t in &file.transformers {
        let what = format!("transformer '{}'", t.id);
        let z_leak = match t.z_leak_unit {
            ZUnit::Pu => t.z_leak.value(),
            ZUnit::Ohm => t.z_leak.value() / z_base_of(&t.from, &what)?,
        };
        net.transformers.push(Transformer {
            id: t.id.clone(),
            from: t.from.clone(),
            to: t.to.clone(),
            conn_from: t.conn_from,
            conn_to: t.conn_to,
            tap: t.tap,
            z_leak,
            z0_path: t.z0.to_path(),
            delta_lag: t.delta_lag,
        });
    }

    for l in &file.loads {
        let per_phase = l.s_a.is_some() || l.s_b.is_some() || l.s_c.is_some();
        let s_phase: [Option<Phasor>; 3] = match (&l.s, per_phase) {
            (Some(_), true) | (None, false) => {
                return Err(ParseError::Semantic(format!(
                    "load '{}': give either balanced s or per-phase s_a/s_b/s_c",
                    l.id
                )))
            }
            (Some(s), false) => {
                let bus = net.buses.iter().find(|b| b.id == l.bus).ok_or_else(|| {
                    ParseError::Semantic(format!(
                        "load '{}': references unknown bus '{}'",
                        l.id, l.bus
                    ))
                })?;
                let mut sp = [None; 3];
                for p in bus.phases.iter() {
                    sp[p.index()] = Some(s.value());
                }
                sp
            }
            (None, true) => [
                l.s_a.map(PhasorSpec::value),
                l.s_b.map(PhasorSpec::value),
                l.s_c.map(PhasorSpec::value),
            ],
        };
        net.loads.push(Load {
            id: l.id.clone(),
            bus: l.bus.clone(),
            s_phase,
            model: l.model,
        });
    }

    for s in &file.sources {
        let what = format!("source '{}'", s.id);
        let e_abc: [Phasor; 3] = match (&s.e, &s.e_abc) {
            (Some(e), None) => {
                let v = e.value();
                let al = crate::seq::alpha();
                [v, al * al * v, al * v]
            }
            (None, Some(abc)) => [abc[0].value(), abc[1].value(), abc[2].value()],
            _ => {
                return Err(ParseError::Semantic(format!(
                    "{what}: give exactly one of e (balanced) or e_abc"
                )))
            }
        };
        let z_int = match &s.z_int {
            Some(z) => Some(z.resolve(z_base_of(&s.bus, &what)?, &what)?),
            None => None,
        };
        net.sources.push(SourceIdeal { id: s.id.clone(), bus: s.bus.clone(), e_abc, z_int });
    }

    for sw in &file.switches {
        let mut closed = [false; 3];
        for ch in sw.closed.chars() {
            match ch.to_ascii_lowercase() {
                'a' => closed[0] = true,
                'b' => closed[1] = true,
                'c' => closed[2] = true,
                other => {
                    return Err(ParseError::Semantic(format!(
                        "switch '{}': closed phase letter '{other}' is not a/b/c",
                        sw.id
                    )))
                }
            }
        }
        net.switches.push(Switch {
            id: sw.id.clone(),
            from: sw.from.clone(),
            to: sw.to.clone(),
            closed,
        });
    }

    for u in &file.ibr_units {
        if !(u.s_rated_mva > 0.0) {
            return Err(ParseError::Semantic(format!(
                "converter '{}': s_rated_mva must be positive (got {})",
                u.id, u.s_rated_mva
            )));
        }
        net.ibr_units.push(IbrUnit {
            id: u.id.clone(),
            bus: u.bus.clone(),
            mode: u.mode,
            s_rated_mva: u.s_rated_mva,
            i_max: u.i_max,
            p_ref: u.p_ref,
            q_ref: u.q_ref,
            v_ref: u.v_ref,
            k_factor: u.k_factor,
            k_neg: u.k_neg.map(PhasorSpec::value).unwrap_or_else(default_k_neg),
            k_zero: u.k_zero.map(PhasorSpec::value).unwrap_or_else(|| Phasor::new(0.0, 0.0)),
            z_filter: u.z_filter.value(),
            phi: u.phi,
            kappa: u.kappa.unwrap_or(0.1 * u.i_max),
            k_v: u.k_v,
            gfl_limiter: u.gfl_limiter,
        });
    }

    Ok(net)
}

/// Canonical file form of a model: rectangular complex values, full-matrix
/// blocks, explicit per-phase entries — the fixed point of
/// parse → serialize.
pub fn network_to_file(net: &NetworkModel) -> NetworkFile {
    NetworkFile {
        schema_version: SCHEMA_VERSION,
        s_base_mva: net.base.s_base_mva,
        buses: net
            .buses
            .iter()
            .map(|b| BusFile {
                id: b.id.clone(),
                phases: b.phases.to_string(),
                base_kv: b.base_kv,
            })
            .collect(),
        branches: net
            .branches
            .iter()
            .map(|b| BranchFile {
                id: b.id.clone(),
                from: b.from.clone(),
                to: b.to.clone(),
                z: ZBlockFile::full(&b.z_abc),
                y_shunt: if b.y_shunt_abc == mat3_zero() {
                    None
                } else {
                    Some(YBlockFile::full(&b.y_shunt_abc))
                },
            })
            .collect(),
        transformers: net
            .transformers
            .iter()
            .map(|t| TransformerFile {
                id: t.id.clone(),
                from: t.from.clone(),
                to: t.to.clone(),
                conn_from: t.conn_from,
                conn_to: t.conn_to,
                tap: t.tap,
                z_leak: PhasorSpec::rect(t.z_leak),
                z_leak_unit: ZUnit::Pu,
                z0: Z0File::from_path(t.z0_path),
                delta_lag: t.delta_lag,
            })
            .collect(),
        loads: net
            .loads
            .iter()
            .map(|l| LoadFile {
                id: l.id.clone(),
                bus: l.bus.clone(),
                model: l.model,
                s: None,
                s_a: l.s_phase[0].map(PhasorSpec::rect),
                s_b: l.s_phase[1].map(PhasorSpec::rect),
                s_c: l.s_phase[2].map(PhasorSpec::rect),
            })
            .collect(),
        sources: net
            .sources
            .iter()
            .map(|s| SourceFile {
                id: s.id.clone(),
                bus: s.bus.clone(),
                e: None,
                e_abc: Some([
                    PhasorSpec::rect(s.e_abc[0]),
                    PhasorSpec::rect(s.e_abc[1]),
                    PhasorSpec::rect(s.e_abc[2]),
                ]),
                z_int: s.z_int.as_ref().map(ZBlockFile::full),
            })
            .collect(),
        switches: net
            .switches
            .iter()
            .map(|sw| {
                let mut closed = String::new();
                for (p, c) in Phase::ALL.into_iter().zip(sw.closed) {
                    if c {
                        closed.push(p.letter());
                    }
                }
                SwitchFile {
                    id: sw.id.clone(),
                    from: sw.from.clone(),
                    to: sw.to.clone(),
                    closed,
                }
            })
            .collect(),
        ibr_units: net
            .ibr_units
            .iter()
            .map(|u| IbrFile {
                id: u.id.clone(),
                bus: u.bus.clone(),
                mode: u.mode,
                s_rated_mva: u.s_rated_mva,
                i_max: u.i_max,
                p_ref: u.p_ref,
                q_ref: u.q_ref,
                v_ref: u.v_ref,
                k_factor: u.k_factor,
                k_neg: Some(PhasorSpec::rect(u.k_neg)),
                k_zero: Some(PhasorSpec::rect(u.k_zero)),
                z_filter: PhasorSpec::rect(u.z_filter),
                phi: u.phi,
                kappa: Some(u.kappa),
                k_v: u.k_v,
                gfl_limiter: u.gfl_limiter,
            })
            .collect(),
    }
}

/// Serializes a model to its canonical JSON document.
pub fn serialize_network(net: &NetworkModel) -> String {
    let mut s = serde_json::to_string_pretty(&network_to_file(net))
        .expect("network file serialization is infallible");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Scenario file
// ---------------------------------------------------------------------------

/// On-disk scenario: solver options, explicit faults, sweep axes, outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub pf: PfFileOptions,
    pub sc: ScFileOptions,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepFile>,
    pub outputs: OutputSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PfFileOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl PfFileOptions {
    pub fn to_options(self) -> PfOptions {
        let d = PfOptions::default();
        PfOptions {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            start: PfStart::Flat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScFileOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl ScFileOptions {
    pub fn to_options(self) -> ScOptions {
        let d = ScOptions::default();
        ScOptions {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultFile {
    pub bus: String,
    pub kind: FaultKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_phase: Option<PhasorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_ground: Option<PhasorSpec>,
}

impl FaultFile {
    pub fn to_spec(&self) -> FaultSpec {
        FaultSpec {
            bus: self.bus.clone(),
            kind: self.kind,
            z_phase: self.z_phase.map(PhasorSpec::value).unwrap_or_else(|| Phasor::new(0.0, 0.0)),
            z_ground: self
                .z_ground
                .map(PhasorSpec::value)
                .unwrap_or_else(|| Phasor::new(0.0, 0.0)),
        }
    }
}

/// Sweep axes; omitted fields mean "everything" (all buses, all fault
/// kinds, one bolted impedance).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buses: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<FaultKind>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub z: Vec<ZPairFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZPairFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_phase: Option<PhasorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_ground: Option<PhasorSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSelect {
    /// Report forms to produce; empty means table only.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub formats: Vec<ReportFormat>,
    /// Directory for sweep artifacts (default: alongside the scenario).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// File-name prefix for sweep artifacts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

impl OutputSelect {
    pub fn formats(&self) -> Vec<ReportFormat> {
        if self.formats.is_empty() {
            vec![ReportFormat::Table]
        } else {
            self.formats.clone()
        }
    }
}

/// Reads a scenario file (no bus checks yet — see [`resolve_scenario`]).
pub fn parse_scenario(path: &Path) -> Result<ScenarioFile, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&path.display().to_string(), &text)
}

pub fn parse_scenario_str(label: &str, text: &str) -> Result<ScenarioFile, ParseError> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|source| ParseError::Malformed {
            path: label.to_string(),
            source,
        })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ParseError::SchemaVersion {
            found: file.schema_version,
            supported: SCHEMA_VERSION,
        });
    }
    Ok(file)
}

pub fn serialize_scenario(scn: &ScenarioFile) -> String {
    let mut s = serde_json::to_string_pretty(scn).expect("scenario serialization is infallible");
    s.push('\n');
    s
}

/// A scenario checked against a concrete network: solver options with
/// defaults applied, explicit fault list, and expanded sweep axes.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub pf: PfOptions,
    pub sc: ScOptions,
    pub faults: Vec<FaultSpec>,
    /// `(buses, kinds, z-pairs)` for [`crate::scsolver::sweep`]; `None` when
    /// the scenario has no sweep section.
    pub sweep: Option<(Vec<String>, Vec<FaultKind>, Vec<(Phasor, Phasor)>)>,
    pub outputs: OutputSelect,
}

/// Checks every referenced bus and expands sweep defaults.
pub fn resolve_scenario(
    scn: &ScenarioFile,
    net: &NetworkModel,
) -> Result<ResolvedScenario, ParseError> {
    let exists = |bus: &str| net.buses.iter().any(|b| b.id == bus);
    for f in &scn.faults {
        if !exists(&f.bus) {
            return Err(ParseError::UnknownScenarioBus { bus: f.bus.clone() });
        }
    }
    let sweep = match &scn.sweep {
        Some(sw) => {
            let buses = match &sw.buses {
                Some(list) => {
                    for b in list {
                        if !exists(b) {
                            return Err(ParseError::UnknownScenarioBus { bus: b.clone() });
                        }
                    }
                    list.clone()
                }
                None => net.buses.iter().map(|b| b.id.clone()).collect(),
            };
            let kinds =
                if sw.kinds.is_empty() { FaultKind::ALL.to_vec() } else { sw.kinds.clone() };
            let zs: Vec<(Phasor, Phasor)> = sw
                .z
                .iter()
                .map(|p| {
                    (
                        p.z_phase.map(PhasorSpec::value).unwrap_or_else(|| Phasor::new(0.0, 0.0)),
                        p.z_ground.map(PhasorSpec::value).unwrap_or_else(|| Phasor::new(0.0, 0.0)),
                    )
                })
                .collect();
            Some((buses, kinds, zs))
        }
        None => None,
    };
    Ok(ResolvedScenario {
        pf: scn.pf.to_options(),
        sc: scn.sc.to_options(),
        faults: scn.faults.iter().map(FaultFile::to_spec).collect(),
        sweep,
        outputs: scn.outputs.clone(),
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Output form of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// Human-readable tables (magnitude/angle columns).
    Table,
    /// Machine-readable JSON document.
    Machine,
    /// Plot-ready iteration trace (comment header + CSV rows).
    Trace,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Table => "table",
            ReportFormat::Machine => "machine",
            ReportFormat::Trace => "trace",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "machine" => Ok(ReportFormat::Machine),
            "trace" => Ok(ReportFormat::Trace),
            other => Err(format!("unknown report format '{other}' (table, machine, trace)")),
        }
    }
}

/// What to report on.
pub enum ReportSource<'a> {
    Pf { net: &'a NetworkModel, sol: &'a PfSolution },
    Sc { result: &'a ScResult },
}

/// Renders a result in the requested form. Output bytes are a deterministic
/// function of the input.
pub fn emit_report(src: &ReportSource<'_>, format: ReportFormat) -> Vec<u8> {
    match (src, format) {
        (ReportSource::Pf { net, sol }, ReportFormat::Table) => pf_table(net, sol).into_bytes(),
        (ReportSource::Pf { net, sol }, ReportFormat::Machine) => pf_machine(net, sol),
        (ReportSource::Pf { sol, .. }, ReportFormat::Trace) => pf_trace(sol).into_bytes(),
        (ReportSource::Sc { result }, ReportFormat::Table) => sc_table(result).into_bytes(),
        (ReportSource::Sc { result }, ReportFormat::Machine) => sc_machine(result),
        (ReportSource::Sc { result }, ReportFormat::Trace) => sc_trace(result).into_bytes(),
    }
}

/// Magnitude with the table precision used throughout the reports.
fn fmag(x: f64) -> String {
    format!("{x:.3}")
}

/// Angle in degrees; pinned to zero for near-zero phasors so the column is
/// deterministic and readable.
fn fang(p: Phasor) -> String {
    if p.norm() < 5e-4 {
        format!("{:.2}", 0.0)
    } else {
        format!("{:.2}", angle_deg(p))
    }
}

fn fz(p: Phasor) -> String {
    format!("{:.4}{:+.4}j", p.re, p.im)
}

fn pf_table(net: &NetworkModel, sol: &PfSolution) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "POWER FLOW");
    let _ = writeln!(
        s,
        "converged: {} residual evaluations, final residual {:.3e} pu",
        sol.iterations, sol.residual_norm
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<14} {:<5} {:>10} {:>10}", "bus", "phase", "mag (pu)", "ang (deg)");
    for (bi, bus) in net.buses.iter().enumerate() {
        for p in bus.phases.iter() {
            if let Some(v) = sol.v(bi, p) {
                let _ = writeln!(
                    s,
                    "{:<14} {:<5} {:>10} {:>10}",
                    bus.id,
                    p.letter(),
                    fmag(v.norm()),
                    fang(v)
                );
            }
        }
    }
    if !net.ibr_units.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<14} {:<5} {:>10} {:>10}",
            "converter", "phase", "mag (pu)", "ang (deg)"
        );
        for (ui, unit) in net.ibr_units.iter().enumerate() {
            let tri = sol.ibr_triple(ui);
            for (p, i) in Phase::ALL.into_iter().zip(tri.as_array()) {
                let _ = writeln!(
                    s,
                    "{:<14} {:<5} {:>10} {:>10}",
                    unit.id,
                    p.letter(),
                    fmag(i.norm()),
                    fang(i)
                );
            }
        }
    }
    s
}

#[derive(Serialize)]
struct MachineDoc<'a, T: Serialize> {
    kind: &'static str,
    schema_version: u32,
    data: &'a T,
}

fn machine_bytes<T: Serialize>(kind: &'static str, data: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&MachineDoc { kind, schema_version: SCHEMA_VERSION, data })
        .expect("result serialization is infallible");
    bytes.push(b'\n');
    bytes
}

#[derive(Serialize)]
struct PfMachine {
    iterations: usize,
    residual_norm: f64,
    history: Vec<f64>,
    buses: Vec<PfMachineBus>,
    ibr_units: Vec<PfMachineIbr>,
    sources: Vec<PfMachineSource>,
}

#[derive(Serialize)]
struct PfMachineBus {
    id: String,
    v: crate::seq::PhaseTriple,
}

#[derive(Serialize)]
struct PfMachineIbr {
    id: String,
    i: crate::seq::PhaseTriple,
    i_seq: SequenceTriple,
}

#[derive(Serialize)]
struct PfMachineSource {
    id: String,
    i: crate::seq::PhaseTriple,
}

fn pf_machine(net: &NetworkModel, sol: &PfSolution) -> Vec<u8> {
    let doc = PfMachine {
        iterations: sol.iterations,
        residual_norm: sol.residual_norm,
        history: sol.history.clone(),
        buses: net
            .buses
            .iter()
            .enumerate()
            .map(|(bi, b)| PfMachineBus { id: b.id.clone(), v: sol.v_triple(bi) })
            .collect(),
        ibr_units: net
            .ibr_units
            .iter()
            .enumerate()
            .map(|(ui, u)| PfMachineIbr {
                id: u.id.clone(),
                i: sol.ibr_triple(ui),
                i_seq: sol.ibr_sequence(ui),
            })
            .collect(),
        sources: net
            .sources
            .iter()
            .enumerate()
            .map(|(si, src)| {
                let g = |p| {
                    sol.source_current(si, p).unwrap_or_else(|| Phasor::new(0.0, 0.0))
                };
                PfMachineSource {
                    id: src.id.clone(),
                    i: crate::seq::PhaseTriple::new(g(Phase::A), g(Phase::B), g(Phase::C)),
                }
            })
            .collect(),
    };
    machine_bytes("pf_result", &doc)
}

fn pf_trace(sol: &PfSolution) -> String {
    use std::fmt::Write;
    let mut s = String::from("# iter,residual\n");
    for (i, r) in sol.history.iter().enumerate() {
        let _ = writeln!(s, "{},{:.12e}", i + 1, r);
    }
    s
}

fn sc_table(r: &ScResult) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "SHORT CIRCUIT");
    match &r.fault {
        Some(f) => {
            let _ = writeln!(
                s,
                "fault {} at bus {} (z_phase {} pu, z_ground {} pu)",
                f.kind,
                f.bus,
                fz(f.z_phase),
                fz(f.z_ground)
            );
        }
        None => {
            let _ = writeln!(s, "no fault stamped (consistency run)");
        }
    }
    if r.converged {
        let _ = writeln!(
            s,
            "converged in {} iterations (max voltage change {:.3e} pu)",
            r.iterations, r.max_delta_v
        );
    } else {
        let _ = writeln!(
            s,
            "DID NOT CONVERGE after {} iterations (max voltage change {:.3e} pu)",
            r.iterations, r.max_delta_v
        );
    }
    let _ = writeln!(s, "largest KCL residual {:.3e} pu", r.kcl_residual);

    for (ui, op) in r.ops.iter().enumerate() {
        let _ = writeln!(s);
        let state = match &op.limiter {
            LimiterState::Inactive => "limiter inactive".to_string(),
            LimiterState::Csm(c) => {
                if c.saturated {
                    "CSM saturated".to_string()
                } else {
                    "CSM within limits".to_string()
                }
            }
            LimiterState::Vic(v) => {
                if v.active {
                    format!("VIC active (r_vi {:.4} pu, x/r {:.1})", v.r_vi, v.phi)
                } else {
                    "VIC inactive".to_string()
                }
            }
        };
        let _ = writeln!(s, "converter {} — {}", r.ibr_ids[ui], state);
        let _ = writeln!(s, "  {:<10} {:>10} {:>10}", "quantity", "mag (pu)", "ang (deg)");
        let phase_tri = to_phase(SequenceTriple::new(Phasor::new(0.0, 0.0), op.i1, op.i2));
        for (p, i) in Phase::ALL.into_iter().zip(phase_tri.as_array()) {
            let _ = writeln!(
                s,
                "  i_{:<8} {:>10} {:>10}",
                p.letter(),
                fmag(i.norm()),
                fang(i)
            );
        }
        let _ = writeln!(s, "  i_{:<8} {:>10} {:>10}", "1", fmag(op.i1_lv.norm()), fang(op.i1_lv));
        let _ = writeln!(s, "  i_{:<8} {:>10} {:>10}", "2", fmag(op.i2_lv.norm()), fang(op.i2_lv));
        let _ = writeln!(
            s,
            "  (machine pu; i_a..i_c converter currents, i_1/i_2 sequence injections; q {:.3} pu)",
            op.q
        );
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "{:<14} {:<5} {:>10} {:>10}", "bus", "phase", "mag (pu)", "ang (deg)");
    for (bi, id) in r.bus_ids.iter().enumerate() {
        for (p, v) in Phase::ALL.into_iter().zip(r.v_fault[bi].as_array()) {
            let _ = writeln!(
                s,
                "{:<14} {:<5} {:>10} {:>10}",
                id,
                p.letter(),
                fmag(v.norm()),
                fang(v)
            );
        }
    }

    if r.fault.is_some() {
        let _ = writeln!(s);
        let _ = writeln!(s, "fault current (system pu)");
        for (p, i) in Phase::ALL.into_iter().zip(r.fault_current.as_array()) {
            let _ = writeln!(s, "  phase {:<4} {:>10} {:>10}", p.letter(), fmag(i.norm()), fang(i));
        }
    }
    s
}

fn sc_machine(r: &ScResult) -> Vec<u8> {
    machine_bytes("sc_result", r)
}

fn sc_trace(r: &ScResult) -> String {
    use std::fmt::Write;
    let mut s = String::from("# iter,ibr_id,delta_v1,delta_v2\n");
    for (it, row) in r.trajectory.iter().enumerate() {
        for (ui, (d1, d2)) in row.iter().enumerate() {
            let _ = writeln!(s, "{},{},{:.12e},{:.12e}", it + 1, r.ibr_ids[ui], d1, d2);
        }
    }
    s
}
