//! Structural validation of a [`NetworkModel`].
//!
//! Solvers assume a validated model; everything here is a pre-flight check
//! with a named subject, so a bad file fails with "which element, what's
//! wrong" instead of a singular matrix three layers down.

use super::*;
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    DuplicateId,
    DanglingReference,
    PhaseMismatch,
    SingularElement,
    ZeroImpedanceLoop,
    NoReferenceSource,
    ParameterRange,
    Inconsistency,
}

#[derive(Debug, Clone)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub kind: IssueKind,
    /// Id of the offending element or a bus list for island problems.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.iter().all(|i| i.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    fn error(&mut self, kind: IssueKind, subject: &str, message: String) {
        self.issues.push(ValidationIssue { severity: Severity::Error, kind, subject: subject.to_string(), message });
    }

    fn warning(&mut self, kind: IssueKind, subject: &str, message: String) {
        self.issues.push(ValidationIssue { severity: Severity::Warning, kind, subject: subject.to_string(), message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "OK: no issues found");
        }
        for i in &self.issues {
            writeln!(f, "{i}")?;
        }
        Ok(())
    }
}

/// Union-find over `n` items.
pub(crate) struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub(crate) fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when the two were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Runs every structural check and returns the full report (all findings,
/// not just the first).
pub fn validate(net: &NetworkModel) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let bus_map = net.bus_map();

    check_duplicate_ids(net, &mut rep);
    check_references_and_phases(net, &bus_map, &mut rep);
    check_switch_loops(net, &bus_map, &mut rep);
    check_islands(net, &bus_map, &mut rep);
    rep
}

fn check_duplicate_ids(net: &NetworkModel, rep: &mut ValidationReport) {
    fn check<'a>(
        seen: &mut HashMap<&'a str, &'static str>,
        kind: &'static str,
        ids: impl Iterator<Item = &'a str>,
        rep: &mut ValidationReport,
    ) {
        for s in ids {
            if let Some(prev_kind) = seen.insert(s, kind) {
                rep.error(
                    IssueKind::DuplicateId,
                    s,
                    format!("id '{s}' used by both a {prev_kind} and a {kind}"),
                );
            }
        }
    }
    let mut seen = HashMap::new();
    check(&mut seen, "bus", net.buses.iter().map(|b| b.id.as_str()), rep);
    check(&mut seen, "branch", net.branches.iter().map(|b| b.id.as_str()), rep);
    check(&mut seen, "transformer", net.transformers.iter().map(|t| t.id.as_str()), rep);
    check(&mut seen, "load", net.loads.iter().map(|l| l.id.as_str()), rep);
    check(&mut seen, "source", net.sources.iter().map(|s| s.id.as_str()), rep);
    check(&mut seen, "switch", net.switches.iter().map(|s| s.id.as_str()), rep);
    check(&mut seen, "ibr", net.ibr_units.iter().map(|u| u.id.as_str()), rep);
}

fn check_references_and_phases(
    net: &NetworkModel,
    bus_map: &HashMap<&str, usize>,
    rep: &mut ValidationReport,
) {
    let phases_of = |bus: &str| bus_map.get(bus).map(|&i| net.buses[i].phases);
    let require_bus = |element: &str, bus: &str, rep: &mut ValidationReport| -> bool {
        if bus_map.contains_key(bus) {
            true
        } else {
            rep.error(
                IssueKind::DanglingReference,
                element,
                format!("references missing bus '{bus}'"),
            );
            false
        }
    };

    for b in &net.branches {
        let ok = require_bus(&b.id, &b.from, rep) & require_bus(&b.id, &b.to, rep);
        if !ok {
            continue;
        }
        let active = phases_of(&b.from).unwrap().intersect(phases_of(&b.to).unwrap());
        if active.is_empty() {
            rep.error(
                IssueKind::PhaseMismatch,
                &b.id,
                format!("no common phase between '{}' and '{}'", b.from, b.to),
            );
        } else if masked_inverse(&b.z_abc, active).is_err() {
            rep.error(
                IssueKind::SingularElement,
                &b.id,
                format!("series impedance block is singular on phases '{active}'"),
            );
        }
    }

    for t in &net.transformers {
        let ok = require_bus(&t.id, &t.from, rep) & require_bus(&t.id, &t.to, rep);
        if !ok {
            continue;
        }
        for (side, bus) in [("from", &t.from), ("to", &t.to)] {
            if phases_of(bus).unwrap() != PhaseSet::ABC {
                rep.error(
                    IssueKind::PhaseMismatch,
                    &t.id,
                    format!("{side}-side bus '{bus}' must carry all three phases"),
                );
            }
        }
        if t.z_leak.norm() < 1e-9 {
            rep.error(IssueKind::SingularElement, &t.id, "leakage impedance is zero".into());
        }
        if t.tap <= 0.0 {
            rep.error(IssueKind::ParameterRange, &t.id, format!("tap {} must be positive", t.tap));
        }
        if matches!(t.z0_path, ZeroSeqPath::Blocked)
            && (t.conn_from == WindingConnection::WyeGround || t.conn_to == WindingConnection::WyeGround)
        {
            rep.warning(
                IssueKind::Inconsistency,
                &t.id,
                "zero-sequence path blocked on a grounded-wye winding; treating the neutral as floating".into(),
            );
        }
    }

    for l in &net.loads {
        if !require_bus(&l.id, &l.bus, rep) {
            continue;
        }
        let bus_ph = phases_of(&l.bus).unwrap();
        let mut any = false;
        for p in Phase::ALL {
            if l.s_phase[p.index()].is_some() {
                any = true;
                if !bus_ph.contains(p) {
                    rep.error(
                        IssueKind::PhaseMismatch,
                        &l.id,
                        format!("loads phase '{}' absent from bus '{}'", p.letter(), l.bus),
                    );
                }
            }
        }
        if !any {
            rep.warning(IssueKind::ParameterRange, &l.id, "load specifies no phase power".into());
        }
    }

    for s in &net.sources {
        require_bus(&s.id, &s.bus, rep);
    }

    for sw in &net.switches {
        let ok = require_bus(&sw.id, &sw.from, rep) & require_bus(&sw.id, &sw.to, rep);
        if !ok {
            continue;
        }
        let common = phases_of(&sw.from).unwrap().intersect(phases_of(&sw.to).unwrap());
        for p in Phase::ALL {
            if sw.closed[p.index()] && !common.contains(p) {
                rep.error(
                    IssueKind::PhaseMismatch,
                    &sw.id,
                    format!("closed on phase '{}' which is absent at one end", p.letter()),
                );
            }
        }
    }

    for u in &net.ibr_units {
        if !require_bus(&u.id, &u.bus, rep) {
            continue;
        }
        if phases_of(&u.bus).unwrap() != PhaseSet::ABC {
            rep.error(
                IssueKind::PhaseMismatch,
                &u.id,
                format!("point of interconnection '{}' must carry all three phases", u.bus),
            );
        }
        if u.i_max <= 0.0 || u.s_rated_mva <= 0.0 {
            rep.error(IssueKind::ParameterRange, &u.id, "i_max and s_rated must be positive".into());
        }
        if u.kappa >= u.i_max {
            rep.warning(
                IssueKind::ParameterRange,
                &u.id,
                format!("threshold margin kappa={} leaves no usable headroom below i_max={}", u.kappa, u.i_max),
            );
        }
        if u.z_filter.norm() < 1e-9 {
            rep.error(IssueKind::ParameterRange, &u.id, "filter impedance must be nonzero".into());
        }
    }
}

/// A cycle made purely of closed switch poles has no impedance anywhere on
/// it and makes the nodal block singular. Detected per phase via union-find
/// over (bus, phase) pairs using only closed switch edges.
fn check_switch_loops(net: &NetworkModel, bus_map: &HashMap<&str, usize>, rep: &mut ValidationReport) {
    let n = net.buses.len();
    let mut dsu = Dsu::new(n * 3);
    for sw in &net.switches {
        let (Some(&f), Some(&t)) = (bus_map.get(sw.from.as_str()), bus_map.get(sw.to.as_str())) else {
            continue; // dangling reference already reported
        };
        for p in Phase::ALL {
            if sw.closed[p.index()] && !dsu.union(f * 3 + p.index(), t * 3 + p.index()) {
                rep.error(
                    IssueKind::ZeroImpedanceLoop,
                    &sw.id,
                    format!("closed phase-'{}' pole completes a zero-impedance switch loop", p.letter()),
                );
            }
        }
    }
}

/// Every galvanic island needs an angle/voltage anchor: an ideal source or a
/// grid-forming unit.
fn check_islands(net: &NetworkModel, bus_map: &HashMap<&str, usize>, rep: &mut ValidationReport) {
    let n = net.buses.len();
    if n == 0 {
        return;
    }
    let mut dsu = Dsu::new(n);
    let link = |a: &str, b: &str, dsu: &mut Dsu| {
        if let (Some(&x), Some(&y)) = (bus_map.get(a), bus_map.get(b)) {
            dsu.union(x, y);
        }
    };
    for b in &net.branches {
        link(&b.from, &b.to, &mut dsu);
    }
    for t in &net.transformers {
        link(&t.from, &t.to, &mut dsu);
    }
    for sw in &net.switches {
        if sw.closed.iter().any(|&c| c) {
            link(&sw.from, &sw.to, &mut dsu);
        }
    }

    let mut anchored = vec![false; n];
    for s in &net.sources {
        if let Some(&i) = bus_map.get(s.bus.as_str()) {
            anchored[i] = true;
        }
    }
    for u in &net.ibr_units {
        if u.mode == IbrMode::Gfm {
            if let Some(&i) = bus_map.get(u.bus.as_str()) {
                anchored[i] = true;
            }
        }
    }

    let mut island_ok: HashMap<usize, bool> = HashMap::new();
    for i in 0..n {
        let root = dsu.find(i);
        *island_ok.entry(root).or_insert(false) |= anchored[i];
    }
    // Deterministic order: iterate buses, report each bad island once at its
    // first member.
    let mut reported: Vec<usize> = Vec::new();
    for i in 0..n {
        let root = dsu.find(i);
        if !island_ok[&root] && !reported.contains(&root) {
            reported.push(root);
            let members: Vec<String> = (0..n)
                .filter(|&j| dsu.find(j) == root)
                .map(|j| net.buses[j].id.clone())
                .collect();
            rep.error(
                IssueKind::NoReferenceSource,
                &members.join(","),
                format!(
                    "island {{{}}} has no ideal source or grid-forming unit to anchor it",
                    members.join(", ")
                ),
            );
        }
    }
}
