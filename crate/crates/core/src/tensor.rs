//! Symmetric second-order tensors in 3D, logarithmic-strain kinematics and
//! stress invariants.
//!
//! All stress-like quantities are in MPa, strains are dimensionless. The
//! pressure convention is compression-positive: p = -tr σ / 3.

use crate::error::{Error, Result};

/// Symmetric second-order tensor, stored as its six independent components
/// in the order (11, 22, 33, 12, 13, 23).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor3 {
    pub c: [f64; 6],
}

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3 { c: [0.0; 6] };

    pub fn new(c11: f64, c22: f64, c33: f64, c12: f64, c13: f64, c23: f64) -> Self {
        Self {
            c: [c11, c22, c33, c12, c13, c23],
        }
    }

    pub fn from_components(c: [f64; 6]) -> Self {
        Self { c }
    }

    pub fn zero() -> Self {
        Self::ZERO
    }

    pub fn identity() -> Self {
        Self::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Self::new(a, b, c, 0.0, 0.0, 0.0)
    }

    /// Spherical tensor s * I.
    pub fn spherical(s: f64) -> Self {
        Self::diag(s, s, s)
    }

    pub fn trace(&self) -> f64 {
        self.c[0] + self.c[1] + self.c[2]
    }

    /// Deviatoric part, dev A = A - (tr A / 3) I.
    pub fn dev(&self) -> Self {
        let m = self.trace() / 3.0;
        Self::new(
            self.c[0] - m,
            self.c[1] - m,
            self.c[2] - m,
            self.c[3],
            self.c[4],
            self.c[5],
        )
    }

    /// Full double contraction A : B = A_ij B_ij (off-diagonal terms counted twice).
    pub fn double_dot(&self, other: &Self) -> f64 {
        self.c[0] * other.c[0]
            + self.c[1] * other.c[1]
            + self.c[2] * other.c[2]
            + 2.0 * (self.c[3] * other.c[3] + self.c[4] * other.c[4] + self.c[5] * other.c[5])
    }

    /// Frobenius norm sqrt(A : A).
    pub fn norm(&self) -> f64 {
        self.double_dot(self).sqrt()
    }

    /// Matrix square A·A (symmetric for symmetric A).
    pub fn squared(&self) -> Self {
        let [a, b, c, d, e, f] = self.c; // 11 22 33 12 13 23
        Self::new(
            a * a + d * d + e * e,
            d * d + b * b + f * f,
            e * e + f * f + c * c,
            a * d + d * b + e * f,
            a * e + d * f + e * c,
            d * e + b * f + f * c,
        )
    }

    /// tr(A³), evaluated as (A·A) : A.
    pub fn trace_cubed(&self) -> f64 {
        self.squared().double_dot(self)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut c = self.c;
        for v in &mut c {
            *v *= s;
        }
        Self { c }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut c = self.c;
        for (v, o) in c.iter_mut().zip(other.c.iter()) {
            *v += o;
        }
        Self { c }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut c = self.c;
        for (v, o) in c.iter_mut().zip(other.c.iter()) {
            *v -= o;
        }
        Self { c }
    }

    /// self + s * other.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        let mut c = self.c;
        for (v, o) in c.iter_mut().zip(other.c.iter()) {
            *v += s * o;
        }
        Self { c }
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let [a, b, c, d, e, f] = self.c;
        [[a, d, e], [d, b, f], [e, f, c]]
    }

    pub fn from_matrix_symmetric(m: &[[f64; 3]; 3]) -> Self {
        Self::new(
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[1][2] + m[2][1]),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for SymTensor3 {
    type Output = SymTensor3;
    fn add(self, rhs: SymTensor3) -> SymTensor3 {
        SymTensor3::add(&self, &rhs)
    }
}

impl std::ops::Sub for SymTensor3 {
    type Output = SymTensor3;
    fn sub(self, rhs: SymTensor3) -> SymTensor3 {
        SymTensor3::sub(&self, &rhs)
    }
}

impl std::ops::Mul<f64> for SymTensor3 {
    type Output = SymTensor3;
    fn mul(self, rhs: f64) -> SymTensor3 {
        self.scale(rhs)
    }
}

impl std::ops::Neg for SymTensor3 {
    type Output = SymTensor3;
    fn neg(self) -> SymTensor3 {
        self.scale(-1.0)
    }
}

/// Eigendecomposition of a symmetric 3x3 tensor: eigenvalues (ascending) and
/// an orthonormal set of eigenvectors (columns).
#[derive(Debug, Clone, Copy)]
pub struct SymEigen {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3], // vectors[k] is the eigenvector of values[k]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn normalize3(v: &mut [f64; 3]) {
    let n = norm3(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Any unit vector orthogonal to `v` (assumed unit).
fn orthogonal_unit(v: &[f64; 3]) -> [f64; 3] {
    // pick the axis least aligned with v
    let trial = if v[0].abs() <= v[1].abs() && v[0].abs() <= v[2].abs() {
        [1.0, 0.0, 0.0]
    } else if v[1].abs() <= v[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let mut w = cross(v, &trial);
    normalize3(&mut w);
    w
}

/// Eigenvector of `a` for eigenvalue `lambda`, via the largest cross product
/// of rows of (a - lambda I). Returns None when the rank deficiency is more
/// than one (repeated eigenvalue).
fn eigenvector_for(a: &[[f64; 3]; 3], lambda: f64, scale: f64) -> Option<[f64; 3]> {
    let m = [
        [a[0][0] - lambda, a[0][1], a[0][2]],
        [a[1][0], a[1][1] - lambda, a[1][2]],
        [a[2][0], a[2][1], a[2][2] - lambda],
    ];
    let c01 = cross(&m[0], &m[1]);
    let c02 = cross(&m[0], &m[2]);
    let c12 = cross(&m[1], &m[2]);
    let (n01, n02, n12) = (norm3(&c01), norm3(&c02), norm3(&c12));
    let (mut best, n) = if n01 >= n02 && n01 >= n12 {
        (c01, n01)
    } else if n02 >= n12 {
        (c02, n02)
    } else {
        (c12, n12)
    };
    // rows of a rank-deficient-by-2 matrix give only tiny cross products
    if n <= 1e-12 * scale * scale {
        return None;
    }
    normalize3(&mut best);
    Some(best)
}

/// Closed-form eigendecomposition of a symmetric 3x3 tensor.
///
/// Eigenvalues come from the trigonometric solution of the characteristic
/// cubic with the acos argument clamped to [-1, 1]; eigenvectors are taken
/// from row cross products with explicit handling of (near-)repeated
/// eigenvalues, so the spectral decomposition stays orthonormal in every
/// degenerate case.
pub fn sym_eigen(t: &SymTensor3) -> SymEigen {
    let a = t.to_matrix();
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let q = t.trace() / 3.0;
    let scale = t.c.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);

    if p1 <= (1e-30) * scale * scale {
        // effectively diagonal
        let mut vals = [a[0][0], a[1][1], a[2][2]];
        let mut idx = [0usize, 1, 2];
        // insertion sort of (value, axis) pairs
        for i in 1..3 {
            let mut j = i;
            while j > 0 && vals[j - 1] > vals[j] {
                vals.swap(j - 1, j);
                idx.swap(j - 1, j);
                j -= 1;
            }
        }
        let mut vectors = [[0.0; 3]; 3];
        for k in 0..3 {
            vectors[k][idx[k]] = 1.0;
        }
        return SymEigen {
            values: vals,
            vectors,
        };
    }

    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let inv_p = 1.0 / p;
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) * inv_p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;

    let e_hi = q + 2.0 * p * phi.cos();
    let e_lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let e_mid = 3.0 * q - e_hi - e_lo;
    let values = [e_lo, e_mid, e_hi];

    // spread-relative gaps decide which eigenvalues count as repeated
    let spread = (e_hi - e_lo).max(1e-300);
    let gap_lo = (e_mid - e_lo) / spread;
    let gap_hi = (e_hi - e_mid) / spread;
    const GAP_TOL: f64 = 1e-8;

    let vectors;
    if gap_lo < GAP_TOL && gap_hi < GAP_TOL {
        // numerically isotropic
        vectors = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    } else if gap_lo < GAP_TOL {
        // lower pair repeated: resolve the isolated top eigenvector first
        let v_hi = eigenvector_for(&a, e_hi, scale).unwrap_or([0.0, 0.0, 1.0]);
        let u = orthogonal_unit(&v_hi);
        let w = cross(&v_hi, &u);
        vectors = [u, w, v_hi];
    } else if gap_hi < GAP_TOL {
        let v_lo = eigenvector_for(&a, e_lo, scale).unwrap_or([1.0, 0.0, 0.0]);
        let u = orthogonal_unit(&v_lo);
        let w = cross(&v_lo, &u);
        vectors = [v_lo, u, w];
    } else {
        let v_lo = eigenvector_for(&a, e_lo, scale);
        let v_hi = eigenvector_for(&a, e_hi, scale);
        match (v_lo, v_hi) {
            (Some(lo), Some(hi)) => {
                let mut mid = cross(&hi, &lo);
                normalize3(&mut mid);
                vectors = [lo, mid, hi];
            }
            _ => {
                // fall back to the repeated-eigenvalue branches
                let v = v_lo.or(v_hi).unwrap_or([1.0, 0.0, 0.0]);
                let u = orthogonal_unit(&v);
                let w = cross(&v, &u);
                vectors = [v, u, w];
            }
        }
    }

    SymEigen { values, vectors }
}

/// Applies a scalar function to a symmetric tensor through its spectrum:
/// f(A) = Σ f(λ_k) n_k ⊗ n_k.
pub fn sym_func(t: &SymTensor3, f: impl Fn(f64) -> f64) -> SymTensor3 {
    let eig = sym_eigen(t);
    let mut m = [[0.0; 3]; 3];
    for k in 0..3 {
        let fv = f(eig.values[k]);
        let n = eig.vectors[k];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += fv * n[i] * n[j];
            }
        }
    }
    SymTensor3::from_matrix_symmetric(&m)
}

/// Lagrangean logarithmic strain ε = ½ log(FᵀF) from a deformation gradient,
/// given row-major.
///
/// Fails when det F ≤ 0 or when C = FᵀF is not numerically positive definite
/// (an eigenvalue below 1e-14).
pub fn log_strain_from_defgrad(f: &[[f64; 3]; 3]) -> Result<SymTensor3> {
    let det_f = f[0][0] * (f[1][1] * f[2][2] - f[1][2] * f[2][1])
        - f[0][1] * (f[1][0] * f[2][2] - f[1][2] * f[2][0])
        + f[0][2] * (f[1][0] * f[2][1] - f[1][1] * f[2][0]);
    if !(det_f > 0.0) {
        return Err(Error::InvalidDeformation {
            min_eig: det_f * det_f.abs(),
        });
    }
    // C = FᵀF
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += f[k][i] * f[k][j];
            }
            c[i][j] = s;
        }
    }
    let ct = SymTensor3::from_matrix_symmetric(&c);
    let eig = sym_eigen(&ct);
    let min_eig = eig.values[0];
    if !(min_eig > 1e-14) {
        return Err(Error::InvalidDeformation { min_eig });
    }
    let mut m = [[0.0; 3]; 3];
    for k in 0..3 {
        let fv = 0.5 * eig.values[k].ln();
        let n = eig.vectors[k];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += fv * n[i] * n[j];
            }
        }
    }
    Ok(SymTensor3::from_matrix_symmetric(&m))
}

/// Mean pressure, von Mises stress and Lode angle of a stress tensor.
///
/// `theta_c` follows the triaxial-compression convention: π/3 in uniaxial
/// compression, 0 in uniaxial extension. Below `q_eps` the deviatoric
/// direction is undefined and `lode_degenerate` is raised with `theta_c = 0`.
#[derive(Debug, Clone, Copy)]
pub struct StressInvariants {
    /// Mean pressure, MPa, compression positive.
    pub p: f64,
    /// Von Mises equivalent stress, MPa, non-negative.
    pub q: f64,
    /// Lode angle in [0, π/3].
    pub theta_c: f64,
    /// cos(3 θ_c), clamped to [-1, 1]; kept because the deviatoric yield
    /// shape consumes it directly.
    pub cos3theta: f64,
    pub lode_degenerate: bool,
}

/// Invariants (p, q, Θc) of a stress tensor.
pub fn stress_invariants(sigma: &SymTensor3, q_eps: f64) -> StressInvariants {
    let p = -sigma.trace() / 3.0;
    let dev = sigma.dev();
    let q = (1.5 * dev.double_dot(&dev)).max(0.0).sqrt();
    if q <= q_eps {
        return StressInvariants {
            p,
            q,
            theta_c: 0.0,
            cos3theta: 1.0,
            lode_degenerate: true,
        };
    }
    let mut arg = (9.0 * dev.trace_cubed() / (2.0 * q * q * q)).clamp(-1.0, 1.0);
    // acos is square-root singular at the ends: a few ulps of roundoff in the
    // argument would displace exactly triaxial states by ~1e-8 rad, so snap
    if arg > 1.0 - 1e-14 {
        arg = 1.0;
    } else if arg < -1.0 + 1e-14 {
        arg = -1.0;
    }
    StressInvariants {
        p,
        q,
        theta_c: arg.acos() / 3.0,
        cos3theta: arg,
        lode_degenerate: false,
    }
}
