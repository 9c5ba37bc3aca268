//! Phasor scalar type and small complex-matrix helpers.
//!
//! A phasor is a steady-state complex quantity `re + j·im`; polar views are
//! provided as free functions so call sites read like the math they encode.
//! The alias keeps the full `num_complex` operator surface available.

use num_complex::Complex64;

/// Complex per-unit quantity (rectangular storage, polar views on demand).
pub type Phasor = Complex64;

/// Builds a phasor from magnitude and angle in radians.
#[inline]
pub fn polar(mag: f64, ang_rad: f64) -> Phasor {
    Phasor::from_polar(mag, ang_rad)
}

/// Builds a phasor from magnitude and angle in degrees (I/O convention).
#[inline]
pub fn polar_deg(mag: f64, ang_deg: f64) -> Phasor {
    Phasor::from_polar(mag, ang_deg.to_radians())
}

/// Angle of `z` in degrees, in (-180, 180].
#[inline]
pub fn angle_deg(z: Phasor) -> f64 {
    z.arg().to_degrees()
}

/// Wraps an angle difference in radians onto (-pi, pi].
#[inline]
pub fn wrap_angle(rad: f64) -> f64 {
    let mut a = rad % (2.0 * std::f64::consts::PI);
    if a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    } else if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    a
}

/// Solves the dense complex system `a x = b` in place by Gaussian elimination
/// with partial pivoting. `a` is row-major `n x n`. Used for the small (<= 3x3)
/// phase-impedance inversions during stamping; network-scale solves go through
/// [`crate::sparse`].
pub fn solve_dense_complex(a: &mut [Phasor], b: &mut [Phasor], n: usize) -> Result<(), ()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm();
        for r in col + 1..n {
            let m = a[r * n + col].norm();
            if m > best {
                best = m;
                piv = r;
            }
        }
        if best < 1e-300 {
            return Err(());
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f.norm() == 0.0 {
                continue;
            }
            for c in col..n {
                let v = a[col * n + c];
                a[r * n + c] -= f * v;
            }
            let bv = b[col];
            b[r] -= f * bv;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for c in col + 1..n {
            acc -= a[col * n + c] * b[c];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}

/// Inverts a dense complex `n x n` matrix (row-major). Errors on singularity.
pub fn invert_dense_complex(a: &[Phasor], n: usize) -> Result<Vec<Phasor>, ()> {
    let mut out = vec![Phasor::new(0.0, 0.0); n * n];
    for col in 0..n {
        let mut work = a.to_vec();
        let mut e = vec![Phasor::new(0.0, 0.0); n];
        e[col] = Phasor::new(1.0, 0.0);
        solve_dense_complex(&mut work, &mut e, n)?;
        for r in 0..n {
            out[r * n + col] = e[r];
        }
    }
    Ok(out)
}
