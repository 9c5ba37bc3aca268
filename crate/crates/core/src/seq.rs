//! Symmetrical-component (Fortescue) transforms and sequence/phase helpers.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * rotation operator `α = 1∠120°`;
//! * synthesis matrix `A = [[1,1,1],[1,α²,α],[1,α,α²]]` maps
//!   `(zero, pos, neg)` onto `(a, b, c)` and carries **no** scale factor;
//! * analysis matrix `A⁻¹` carries the whole `1/3`.
//!
//! With this scaling, three-phase complex power is `3·Σ V_k I_k*` over the
//! sequence components, and balanced positive-sequence sets map to
//! `(0, V, 0)` with the phase-a value unchanged.

use crate::phasor::{polar, wrap_angle, Phasor};
use serde::{Deserialize, Serialize};

/// Rotation operator `α = e^{j 2π/3}`.
pub fn alpha() -> Phasor {
    polar(1.0, 2.0 * std::f64::consts::PI / 3.0)
}

/// Per-phase complex triple `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTriple {
    pub a: Phasor,
    pub b: Phasor,
    pub c: Phasor,
}

/// Sequence-domain complex triple `(zero, pos, neg)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceTriple {
    pub zero: Phasor,
    pub pos: Phasor,
    pub neg: Phasor,
}

impl PhaseTriple {
    pub fn new(a: Phasor, b: Phasor, c: Phasor) -> Self {
        Self { a, b, c }
    }

    /// Balanced positive-sequence set with phase a at `v`.
    pub fn balanced(v: Phasor) -> Self {
        let al = alpha();
        Self { a: v, b: v * al * al, c: v * al }
    }

    pub fn as_array(&self) -> [Phasor; 3] {
        [self.a, self.b, self.c]
    }

    /// Largest phase magnitude.
    pub fn max_mag(&self) -> f64 {
        self.a.norm().max(self.b.norm()).max(self.c.norm())
    }
}

impl SequenceTriple {
    pub fn new(zero: Phasor, pos: Phasor, neg: Phasor) -> Self {
        Self { zero, pos, neg }
    }
}

/// Phase -> sequence analysis transform (`A⁻¹`, carries the 1/3).
pub fn to_sequence(p: PhaseTriple) -> SequenceTriple {
    let al = alpha();
    let al2 = al * al;
    let third = 1.0 / 3.0;
    SequenceTriple {
        zero: (p.a + p.b + p.c) * third,
        pos: (p.a + al * p.b + al2 * p.c) * third,
        neg: (p.a + al2 * p.b + al * p.c) * third,
    }
}

/// Sequence -> phase synthesis transform (`A`, unscaled).
pub fn to_phase(s: SequenceTriple) -> PhaseTriple {
    let al = alpha();
    let al2 = al * al;
    PhaseTriple {
        a: s.zero + s.pos + s.neg,
        b: s.zero + al2 * s.pos + al * s.neg,
        c: s.zero + al * s.pos + al2 * s.neg,
    }
}

/// Per-phase angle gaps between a positive- and a negative-sequence phasor
/// pair: `[δ₁-δ₂, δ₁-δ₂+2π/3, δ₁-δ₂-2π/3]` for phases a, b, c, each wrapped
/// onto (-π, π]. These are the arguments of the cosine terms in
/// [`phase_current_magnitudes`].
pub fn sequence_angle_gaps(delta_i1: f64, delta_i2: f64) -> [f64; 3] {
    let d = delta_i1 - delta_i2;
    let third = 2.0 * std::f64::consts::PI / 3.0;
    [wrap_angle(d), wrap_angle(d + third), wrap_angle(d - third)]
}

/// Phase-current magnitudes of a zero-sequence-free pair:
/// `|I_ph| = sqrt(|I₁|² + |I₂|² + 2|I₁||I₂|cos Δδ_ph)` with the per-phase
/// gaps of [`sequence_angle_gaps`]. Identical to synthesizing the phases and
/// taking magnitudes; kept closed-form because the limiters reason about the
/// cosine terms directly.
pub fn phase_current_magnitudes(i1: Phasor, i2: Phasor) -> [f64; 3] {
    let m1 = i1.norm();
    let m2 = i2.norm();
    let gaps = sequence_angle_gaps(i1.arg(), i2.arg());
    let mut out = [0.0; 3];
    for (o, g) in out.iter_mut().zip(gaps.iter()) {
        let sq = m1 * m1 + m2 * m2 + 2.0 * m1 * m2 * g.cos();
        *o = sq.max(0.0).sqrt();
    }
    out
}
