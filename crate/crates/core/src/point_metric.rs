//! Pointwise metric algebra: inverse, volume factor, connection, curvature
//! scalar density, boundary vector, and their derivatives with respect to the
//! metric and its gradient.
//!
//! Everything here is plain algebra in the metric components `g_ab` and the
//! gradient values `dg_ab,l` supplied by the caller; no lattice is involved.
//! Index conventions: signature (+,-,-,-), `sqrt_g = sqrt(-det g)`.
//!
//! Symmetric-pair derivative convention: a partial with respect to `g_ab` (or
//! `dg_ab,l`) with `a != b` denotes the symmetrized derivative, so a chain
//! rule over the full 16-entry index range equals the packed sum weighted by
//! `sym_multiplicity`. A centered numeric bump of a packed off-diagonal entry
//! therefore measures twice the values returned here.

use crate::field::SYM_PAIRS;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricPointError {
    #[error("metric is numerically singular (det = {det:.6e})")]
    Singular { det: f64 },
    #[error("metric determinant is {det:.6e}; signature (+,-,-,-) requires det < 0")]
    DeterminantSign { det: f64 },
    #[error("metric eigenvalue signs are ({pos}+, {neg}-, {zero} near zero); expected (1+, 3-)")]
    Signature { pos: usize, neg: usize, zero: usize },
}

/// Expands 10 packed components into a mirrored 4x4 array.
#[must_use]
pub fn unpack_sym(packed: &[f64; 10]) -> [[f64; 4]; 4] {
    let mut full = [[0.0; 4]; 4];
    for (comp, &(a, b)) in SYM_PAIRS.iter().enumerate() {
        full[a][b] = packed[comp];
        full[b][a] = packed[comp];
    }
    full
}

/// Expands packed per-axis gradients into `out[a][b][l] = dg_ab,l`.
#[must_use]
pub fn unpack_sym_grad(packed: &[[f64; 4]; 10]) -> [[[f64; 4]; 4]; 4] {
    let mut full = [[[0.0; 4]; 4]; 4];
    for (comp, &(a, b)) in SYM_PAIRS.iter().enumerate() {
        full[a][b] = packed[comp];
        full[b][a] = packed[comp];
    }
    full
}

#[must_use]
pub fn pack_sym_point(full: &[[f64; 4]; 4]) -> [f64; 10] {
    let mut packed = [0.0; 10];
    for (comp, &(a, b)) in SYM_PAIRS.iter().enumerate() {
        packed[comp] = full[a][b];
    }
    packed
}

/// Determinant and inverse of a symmetric 4x4 matrix by cofactor expansion.
/// Only upper-triangle cofactors are evaluated, so the returned inverse is
/// symmetric by construction and exact for diagonal input.
pub fn invert_sym4(packed: &[f64; 10]) -> Result<([f64; 10], f64), MetricPointError> {
    let m = unpack_sym(packed);
    let s0 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let s1 = m[0][0] * m[1][2] - m[0][2] * m[1][0];
    let s2 = m[0][0] * m[1][3] - m[0][3] * m[1][0];
    let s3 = m[0][1] * m[1][2] - m[0][2] * m[1][1];
    let s4 = m[0][1] * m[1][3] - m[0][3] * m[1][1];
    let s5 = m[0][2] * m[1][3] - m[0][3] * m[1][2];
    let c5 = m[2][2] * m[3][3] - m[2][3] * m[3][2];
    let c4 = m[2][1] * m[3][3] - m[2][3] * m[3][1];
    let c3 = m[2][1] * m[3][2] - m[2][2] * m[3][1];
    let c2 = m[2][0] * m[3][3] - m[2][3] * m[3][0];
    let c1 = m[2][0] * m[3][2] - m[2][2] * m[3][0];
    let c0 = m[2][0] * m[3][1] - m[2][1] * m[3][0];
    let det = s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0;
    let scale = packed.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !det.is_finite() || det.abs() <= 1e-12 * scale.powi(4) {
        return Err(MetricPointError::Singular { det });
    }
    let inv = [
        (m[1][1] * c5 - m[1][2] * c4 + m[1][3] * c3) / det,
        (-m[0][1] * c5 + m[0][2] * c4 - m[0][3] * c3) / det,
        (m[3][1] * s5 - m[3][2] * s4 + m[3][3] * s3) / det,
        (-m[2][1] * s5 + m[2][2] * s4 - m[2][3] * s3) / det,
        (m[0][0] * c5 - m[0][2] * c2 + m[0][3] * c1) / det,
        (-m[3][0] * s5 + m[3][2] * s2 - m[3][3] * s1) / det,
        (m[2][0] * s5 - m[2][2] * s2 + m[2][3] * s1) / det,
        (m[3][0] * s4 - m[3][1] * s2 + m[3][3] * s0) / det,
        (-m[2][0] * s4 + m[2][1] * s2 - m[2][3] * s0) / det,
        (m[2][0] * s3 - m[2][1] * s1 + m[2][2] * s0) / det,
    ];
    Ok((inv, det))
}

/// Eigenvalue sign counts `(positive, negative, near-zero)` of a symmetric
/// 4x4 matrix, by cyclic Jacobi rotations.
#[must_use]
pub fn eigenvalue_signs(packed: &[f64; 10]) -> (usize, usize, usize) {
    let mut a = unpack_sym(packed);
    let frob: f64 = a.iter().flatten().map(|v| v * v).sum();
    if frob == 0.0 {
        return (0, 0, 4);
    }
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                off += a[i][j] * a[i][j];
            }
        }
        if off <= 1e-28 * frob {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let apq = a[p][q];
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for k in 0..4 {
                    if k != p && k != q {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[p][k] = a[k][p];
                        a[k][q] = s * akp + c * akq;
                        a[q][k] = a[k][q];
                    }
                }
            }
        }
    }
    let scale = (0..4).map(|i| a[i][i].abs()).fold(1e-300f64, f64::max);
    let tol = 1e-10 * scale;
    let mut counts = (0usize, 0usize, 0usize);
    for i in 0..4 {
        if a[i][i] > tol {
            counts.0 += 1;
        } else if a[i][i] < -tol {
            counts.1 += 1;
        } else {
            counts.2 += 1;
        }
    }
    counts
}

/// Rejects metrics whose eigenvalue signs are not one positive, three
/// negative.
pub fn require_lorentzian(packed: &[f64; 10]) -> Result<(), MetricPointError> {
    let (pos, neg, zero) = eigenvalue_signs(packed);
    if (pos, neg, zero) == (1, 3, 0) {
        Ok(())
    } else {
        Err(MetricPointError::Signature { pos, neg, zero })
    }
}

/// Metric, inverse, volume factor, and connection at one point. Sufficient
/// for the matter sector and for evaluating the gravitational scalar density.
#[derive(Debug, Clone)]
pub struct ConnectionPoint {
    pub g: [[f64; 4]; 4],
    pub gi: [[f64; 4]; 4],
    pub det: f64,
    pub sqrt_g: f64,
    pub dg: [[[f64; 4]; 4]; 4],
    /// `Gamma_mab = (dg_ma,b + dg_mb,a - dg_ab,m) / 2`
    pub gamma_low: [[[f64; 4]; 4]; 4],
    /// `Gamma^m_ab`
    pub gamma_up: [[[f64; 4]; 4]; 4],
    /// Contracted connection `V_a = Gamma^b_ab`
    pub v: [f64; 4],
}

impl ConnectionPoint {
    pub fn new(g: &[f64; 10], dg: &[[f64; 4]; 10]) -> Result<Self, MetricPointError> {
        let (gi_packed, det) = invert_sym4(g)?;
        if det >= 0.0 {
            return Err(MetricPointError::DeterminantSign { det });
        }
        Ok(Self::with_inverse(g, &gi_packed, det, dg))
    }

    /// Same as [`ConnectionPoint::new`] with a precomputed inverse.
    #[must_use]
    pub fn with_inverse(g: &[f64; 10], gi: &[f64; 10], det: f64, dg: &[[f64; 4]; 10]) -> Self {
        let gf = unpack_sym(g);
        let gif = unpack_sym(gi);
        let dgf = unpack_sym_grad(dg);
        let sqrt_g = (-det).sqrt();
        let mut gamma_low = [[[0.0; 4]; 4]; 4];
        for m in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    gamma_low[m][a][b] = 0.5 * (dgf[m][a][b] + dgf[m][b][a] - dgf[a][b][m]);
                }
            }
        }
        let mut gamma_up = [[[0.0; 4]; 4]; 4];
        for m in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    let mut acc = 0.0;
                    for s in 0..4 {
                        acc += gif[m][s] * gamma_low[s][a][b];
                    }
                    gamma_up[m][a][b] = acc;
                }
            }
        }
        let mut v = [0.0; 4];
        for a in 0..4 {
            for b in 0..4 {
                v[a] += gamma_up[b][a][b];
            }
        }
        Self {
            g: gf,
            gi: gif,
            det,
            sqrt_g,
            dg: dgf,
            gamma_low,
            gamma_up,
            v,
        }
    }

    /// Quadratic curvature scalar
    /// `K = g^mn (Gamma^b_ma Gamma^a_nb - Gamma^a_mn V_a)`.
    #[must_use]
    pub fn k_scalar(&self) -> f64 {
        let mut acc = 0.0;
        for m in 0..4 {
            for n in 0..4 {
                let mut kt = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        kt += self.gamma_up[b][m][a] * self.gamma_up[a][n][b];
                    }
                    kt -= self.gamma_up[a][m][n] * self.v[a];
                }
                acc += self.gi[m][n] * kt;
            }
        }
        acc
    }

    /// Gravitational scalar density `sqrt_g * K`.
    #[must_use]
    pub fn grav_density(&self) -> f64 {
        self.sqrt_g * self.k_scalar()
    }
}

/// Full gravitational kernel at one point: raised connections, quadratic
/// curvature, boundary vector, and the closed-form derivatives of the scalar
/// density with respect to the metric and its gradient.
#[derive(Debug, Clone)]
pub struct MetricPoint {
    pub conn: ConnectionPoint,
    /// `Gamma^{ms}_b` (first lower index raised)
    pub gamma_uu: [[[f64; 4]; 4]; 4],
    /// `Gamma^{msr}` (both lower indices raised)
    pub gamma_uuu: [[[f64; 4]; 4]; 4],
    /// `U^a = g^{mn} Gamma^a_mn`
    pub u: [f64; 4],
    /// `J^b = Gamma^{sb}_s`
    pub j: [f64; 4],
    /// `K_mn = Gamma^b_ma Gamma^a_nb - Gamma^a_mn V_a`
    pub k_low: [[f64; 4]; 4],
    pub k_scalar: f64,
    /// `sqrt_g * K`
    pub lagrangian: f64,
    /// Boundary vector `B^m = sqrt_g (Gamma^{ma}_a - Gamma^{am}_a)`
    pub b: [f64; 4],
}

impl MetricPoint {
    pub fn new(g: &[f64; 10], dg: &[[f64; 4]; 10]) -> Result<Self, MetricPointError> {
        Ok(Self::from_connection(ConnectionPoint::new(g, dg)?))
    }

    #[must_use]
    pub fn from_connection(conn: ConnectionPoint) -> Self {
        let gi = &conn.gi;
        let gu = &conn.gamma_up;
        let mut gamma_uu = [[[0.0; 4]; 4]; 4];
        for m in 0..4 {
            for s in 0..4 {
                for b in 0..4 {
                    let mut acc = 0.0;
                    for a in 0..4 {
                        acc += gi[s][a] * gu[m][a][b];
                    }
                    gamma_uu[m][s][b] = acc;
                }
            }
        }
        let mut gamma_uuu = [[[0.0; 4]; 4]; 4];
        for m in 0..4 {
            for s in 0..4 {
                for r in 0..4 {
                    let mut acc = 0.0;
                    for b in 0..4 {
                        acc += gi[r][b] * gamma_uu[m][s][b];
                    }
                    gamma_uuu[m][s][r] = acc;
                }
            }
        }
        let mut u = [0.0; 4];
        for a in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    u[a] += gi[m][n] * gu[a][m][n];
                }
            }
        }
        let mut j = [0.0; 4];
        for b in 0..4 {
            for s in 0..4 {
                j[b] += gamma_uu[s][b][s];
            }
        }
        let mut k_low = [[0.0; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                let mut acc = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        acc += gu[b][m][a] * gu[a][n][b];
                    }
                    acc -= gu[a][m][n] * conn.v[a];
                }
                k_low[m][n] = acc;
            }
        }
        let mut k_scalar = 0.0;
        for m in 0..4 {
            for n in 0..4 {
                k_scalar += gi[m][n] * k_low[m][n];
            }
        }
        let lagrangian = conn.sqrt_g * k_scalar;
        let mut b = [0.0; 4];
        for m in 0..4 {
            let mut acc = 0.0;
            for a in 0..4 {
                acc += gamma_uu[m][a][a] - gamma_uu[a][m][a];
            }
            b[m] = conn.sqrt_g * acc;
        }
        Self {
            conn,
            gamma_uu,
            gamma_uuu,
            u,
            j,
            k_low,
            k_scalar,
            lagrangian,
            b,
        }
    }

    /// Derivative of the scalar density with respect to the metric gradient:
    /// `H_0^{ab,m} = -g^{ab} B^m / 2
    ///   + sqrt_g (Gamma^{mab} - (g^{ma} J^b + g^{mb} J^a) / 2)`,
    /// indexed `[a][b][m]`, symmetric in `(a, b)`.
    #[must_use]
    pub fn h_grav(&self) -> [[[f64; 4]; 4]; 4] {
        let gi = &self.conn.gi;
        let sq = self.conn.sqrt_g;
        let mut out = [[[0.0; 4]; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                for m in 0..4 {
                    out[a][b][m] = -0.5 * gi[a][b] * self.b[m]
                        + sq * (self.gamma_uuu[m][a][b]
                            - 0.5 * (gi[m][a] * self.j[b] + gi[m][b] * self.j[a]));
                }
            }
        }
        out
    }

    /// Derivative of the scalar density with respect to the metric value,
    /// `d(sqrt_g K)/d g_rs`, symmetrized, indexed `[r][s]`.
    #[must_use]
    pub fn dvalue_grav(&self) -> [[f64; 4]; 4] {
        let gi = &self.conn.gi;
        let gu = &self.conn.gamma_up;
        let guu = &self.gamma_uu;
        let guuu = &self.gamma_uuu;
        let sq = self.conn.sqrt_g;
        let mut raw = [[0.0; 4]; 4];
        for r in 0..4 {
            for s in 0..4 {
                let mut term_a = 0.0;
                let mut term_c = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        term_a -= guu[b][r][a] * guu[a][s][b];
                        term_c -= guu[b][r][a] * guu[s][a][b];
                    }
                }
                let mut term_b = 0.0;
                for m in 0..4 {
                    for a in 0..4 {
                        term_b -= gu[s][m][a] * guuu[a][m][r];
                    }
                }
                let mut term_d = 0.0;
                for a in 0..4 {
                    term_d += (guuu[a][r][s] + gi[a][r] * self.u[s]) * self.conn.v[a];
                    term_d += self.u[a] * guu[s][r][a];
                }
                raw[r][s] =
                    0.5 * sq * gi[r][s] * self.k_scalar + sq * (term_a + term_b + term_c + term_d);
            }
        }
        let mut out = [[0.0; 4]; 4];
        for r in 0..4 {
            for s in 0..4 {
                out[r][s] = 0.5 * (raw[r][s] + raw[s][r]);
            }
        }
        out
    }

    /// Chain-rule derivatives of the densitized metric, sharing this point's
    /// `dg` values.
    #[must_use]
    pub fn chain(&self) -> ChainPoint {
        let c = &self.conn;
        let gg = -c.det;
        let mut h_up = [[0.0; 4]; 4];
        let mut h_dn = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                h_up[a][b] = c.sqrt_g * c.gi[a][b];
                h_dn[a][b] = c.g[a][b] / c.sqrt_g;
            }
        }
        let mut dsqrt = [0.0; 4];
        for l in 0..4 {
            let mut acc = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    acc += c.gi[a][b] * c.dg[a][b][l];
                }
            }
            dsqrt[l] = 0.5 * c.sqrt_g * acc;
        }
        let mut dh_up = [[[0.0; 4]; 4]; 4];
        let mut dh_dn = [[[0.0; 4]; 4]; 4];
        for b in 0..4 {
            for n in 0..4 {
                for l in 0..4 {
                    let mut dgi = 0.0;
                    for a in 0..4 {
                        for cc in 0..4 {
                            dgi -= c.gi[b][a] * c.gi[n][cc] * c.dg[a][cc][l];
                        }
                    }
                    dh_up[b][n][l] = dsqrt[l] * c.gi[b][n] + c.sqrt_g * dgi;
                    dh_dn[b][n][l] = c.dg[b][n][l] / c.sqrt_g - c.g[b][n] * dsqrt[l] / gg;
                }
            }
        }
        let mut a3 = [[[0.0; 4]; 4]; 4];
        for n in 0..4 {
            for m in 0..4 {
                for l in 0..4 {
                    let mut acc = 0.0;
                    for b in 0..4 {
                        acc += h_dn[m][b] * dh_up[b][n][l];
                    }
                    a3[n][m][l] = acc;
                }
            }
        }
        let mut a_low = [0.0; 4];
        for l in 0..4 {
            for m in 0..4 {
                a_low[l] += a3[m][m][l];
            }
        }
        let mut a_up = [0.0; 4];
        for m in 0..4 {
            for l in 0..4 {
                a_up[m] += h_up[m][l] * a_low[l];
            }
        }
        ChainPoint {
            h_up,
            h_dn,
            dsqrt,
            dh_up,
            dh_dn,
            a3,
            a_low,
            a_up,
        }
    }
}

/// Densitized metric `h^{ab} = sqrt_g g^{ab}`, its inverse `h_ab`, their
/// gradients obtained by the chain rule from the metric gradient, and the
/// trace structure `A`. Because these share the metric's `dg` values, the
/// representation identities below hold to rounding rather than to
/// truncation.
#[derive(Debug, Clone)]
pub struct ChainPoint {
    pub h_up: [[f64; 4]; 4],
    pub h_dn: [[f64; 4]; 4],
    /// `d_l sqrt_g = sqrt_g g^{ab} dg_ab,l / 2`
    pub dsqrt: [f64; 4],
    /// `d_l h^{bn}`
    pub dh_up: [[[f64; 4]; 4]; 4],
    /// `d_l h_bn`
    pub dh_dn: [[[f64; 4]; 4]; 4],
    /// `A^n_ml = h_mb d_l h^{bn}`, indexed `[n][m][l]`
    pub a3: [[[f64; 4]; 4]; 4],
    /// Trace `A_l = A^m_ml`
    pub a_low: [f64; 4],
    /// `A^m = h^{ml} A_l`
    pub a_up: [f64; 4],
}

impl ChainPoint {
    /// Connection reconstructed from the densitized metric alone:
    /// `Gamma^m_ns = (delta^m_n A_s + delta^m_s A_n - h_ns A^m) / 4
    ///   - (A^m_ns + A^m_sn + h^{ma} d_a h_ns ... )/2` with the last term
    /// entering as `+ h^{ma} (-d_a h_ns)` inside the bracket.
    #[must_use]
    pub fn gamma_rep(&self) -> [[[f64; 4]; 4]; 4] {
        let mut out = [[[0.0; 4]; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                for s in 0..4 {
                    let delta_mn = if m == n { 1.0 } else { 0.0 };
                    let delta_ms = if m == s { 1.0 } else { 0.0 };
                    let mut last = 0.0;
                    for a in 0..4 {
                        last += self.h_up[m][a] * (-self.dh_dn[n][s][a]);
                    }
                    out[m][n][s] = 0.25
                        * (delta_mn * self.a_low[s] + delta_ms * self.a_low[n]
                            - self.h_dn[n][s] * self.a_up[m])
                        - 0.5 * (self.a3[m][n][s] + self.a3[m][s][n] - last);
                }
            }
        }
        out
    }

    /// Boundary vector reconstructed from the densitized metric:
    /// `B^m = -d_a h^{ma} - A^m / 2`.
    #[must_use]
    pub fn b_rep(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for m in 0..4 {
            let mut acc = 0.0;
            for a in 0..4 {
                acc -= self.dh_up[m][a][a];
            }
            out[m] = acc - 0.5 * self.a_up[m];
        }
        out
    }

    /// Scalar density reconstructed from the densitized metric:
    /// `sqrt_g K = A^a A_a / 8
    ///   + (2 d_s h^{ma} A^s_am - h^{an} d_a h^{ms} (-d_n h_sm)) / 4`.
    #[must_use]
    pub fn k_rep(&self) -> f64 {
        let mut first = 0.0;
        for a in 0..4 {
            first += self.a_up[a] * self.a_low[a];
        }
        let mut second = 0.0;
        let mut third = 0.0;
        for m in 0..4 {
            for a in 0..4 {
                for s in 0..4 {
                    second += self.dh_up[m][a][s] * self.a3[s][a][m];
                    for n in 0..4 {
                        third += self.h_up[a][n] * self.dh_up[m][s][a] * (-self.dh_dn[s][m][n]);
                    }
                }
            }
        }
        0.125 * first + 0.25 * (2.0 * second - third)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ETA: [f64; 10] = [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, -1.0];

    fn sample(rng: &mut ChaCha8Rng, amplitude: f64) -> ([f64; 10], [[f64; 4]; 10]) {
        let mut g = ETA;
        for v in &mut g {
            *v += amplitude * rng.gen_range(-1.0..1.0);
        }
        let mut dg = [[0.0; 4]; 10];
        for comp in &mut dg {
            for v in comp.iter_mut() {
                *v = amplitude * rng.gen_range(-1.0..1.0);
            }
        }
        (g, dg)
    }

    #[test]
    fn flat_metric_is_exactly_trivial() {
        let dg = [[0.0; 4]; 10];
        let mp = MetricPoint::new(&ETA, &dg).unwrap();
        assert_eq!(mp.conn.det, -1.0);
        assert_eq!(mp.conn.sqrt_g, 1.0);
        assert_eq!(mp.conn.gi, unpack_sym(&ETA));
        assert_eq!(mp.k_scalar, 0.0);
        assert_eq!(mp.lagrangian, 0.0);
        assert_eq!(mp.b, [0.0; 4]);
        assert_eq!(mp.h_grav(), [[[0.0; 4]; 4]; 4]);
        assert_eq!(mp.dvalue_grav(), [[0.0; 4]; 4]);
    }

    #[test]
    fn inverse_matches_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (g, _) = sample(&mut rng, 0.2);
            let (gi, det) = invert_sym4(&g).unwrap();
            let full = unpack_sym(&g);
            let m = nalgebra::Matrix4::from_fn(|i, j| full[i][j]);
            let oracle = m.try_inverse().unwrap();
            assert!((det - m.determinant()).abs() <= 1e-12 * m.determinant().abs());
            let gif = unpack_sym(&gi);
            for i in 0..4 {
                for j in 0..4 {
                    assert!(
                        (gif[i][j] - oracle[(i, j)]).abs() <= 1e-11,
                        "entry ({i},{j}): {} vs {}",
                        gif[i][j],
                        oracle[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn diagonal_inverse_is_exact() {
        let g = [2.0, 0.0, 0.0, 0.0, -4.0, 0.0, 0.0, -0.5, 0.0, -8.0];
        let (gi, det) = invert_sym4(&g).unwrap();
        assert_eq!(det, 2.0 * -4.0 * -0.5 * -8.0);
        assert_eq!(gi[0], 0.5);
        assert_eq!(gi[4], -0.25);
        assert_eq!(gi[7], -2.0);
        assert_eq!(gi[9], -0.125);
    }

    #[test]
    fn signature_classification() {
        assert_eq!(require_lorentzian(&ETA), Ok(()));
        let euclid = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        assert!(matches!(
            require_lorentzian(&euclid),
            Err(MetricPointError::Signature { pos: 4, neg: 0, .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (g, _) = sample(&mut rng, 0.2);
            assert_eq!(require_lorentzian(&g), Ok(()));
        }
    }

    #[test]
    fn eigenvalues_of_diagonal_matrix_keep_signs() {
        let g = [3.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 1e-14, 0.0, -5.0];
        let (pos, neg, zero) = eigenvalue_signs(&g);
        assert_eq!((pos, neg, zero), (1, 2, 1));
    }

    #[test]
    fn wrong_determinant_sign_is_rejected() {
        let g = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, -1.0];
        let dg = [[0.0; 4]; 10];
        assert!(matches!(
            ConnectionPoint::new(&g, &dg),
            Err(MetricPointError::DeterminantSign { .. })
        ));
    }

    #[test]
    fn contracted_connection_traces_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (g, dg) = sample(&mut rng, 0.15);
            let mp = MetricPoint::new(&g, &dg).unwrap();
            let chain = mp.chain();
            for l in 0..4 {
                let mut trace = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        trace += mp.conn.gi[a][b] * mp.conn.dg[a][b][l];
                    }
                }
                assert!((chain.a_low[l] - trace).abs() <= 1e-13);
                assert!((chain.a_low[l] - 2.0 * mp.conn.v[l]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn trace_structure_two_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (g, dg) = sample(&mut rng, 0.15);
        let chain = MetricPoint::new(&g, &dg).unwrap().chain();
        for n in 0..4 {
            for m in 0..4 {
                for l in 0..4 {
                    let mut other = 0.0;
                    for b in 0..4 {
                        other -= chain.h_up[n][b] * chain.dh_dn[b][m][l];
                    }
                    assert!((chain.a3[n][m][l] - other).abs() <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn representations_reproduce_connection_boundary_and_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (g, dg) = sample(&mut rng, 0.15);
            let mp = MetricPoint::new(&g, &dg).unwrap();
            let chain = mp.chain();
            let gamma_rep = chain.gamma_rep();
            for m in 0..4 {
                for n in 0..4 {
                    for s in 0..4 {
                        assert!(
                            (gamma_rep[m][n][s] - mp.conn.gamma_up[m][n][s]).abs() <= 1e-13,
                            "gamma ({m},{n},{s})"
                        );
                    }
                }
            }
            let b_rep = chain.b_rep();
            for m in 0..4 {
                assert!((b_rep[m] - mp.b[m]).abs() <= 1e-13, "boundary ({m})");
            }
            assert!((chain.k_rep() - mp.lagrangian).abs() <= 1e-13);
        }
    }

    #[test]
    fn gradient_derivative_matches_numeric_bump() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (g, dg) = sample(&mut rng, 0.12);
        let h = MetricPoint::new(&g, &dg).unwrap().h_grav();
        let delta = 1e-6;
        for comp in 0..10 {
            let (a, b) = SYM_PAIRS[comp];
            let mult = if a == b { 1.0 } else { 2.0 };
            for m in 0..4 {
                let mut plus = dg;
                plus[comp][m] += delta;
                let mut minus = dg;
                minus[comp][m] -= delta;
                let lp = ConnectionPoint::new(&g, &plus).unwrap().grav_density();
                let lm = ConnectionPoint::new(&g, &minus).unwrap().grav_density();
                let numeric = (lp - lm) / (2.0 * delta);
                assert!(
                    (numeric - mult * h[a][b][m]).abs() <= 1e-7,
                    "comp ({a},{b},{m}): {numeric} vs {}",
                    mult * h[a][b][m]
                );
            }
        }
    }

    #[test]
    fn value_derivative_matches_numeric_bump() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (g, dg) = sample(&mut rng, 0.12);
        let dv = MetricPoint::new(&g, &dg).unwrap().dvalue_grav();
        let delta = 1e-6;
        for comp in 0..10 {
            let (r, s) = SYM_PAIRS[comp];
            let mult = if r == s { 1.0 } else { 2.0 };
            let mut plus = g;
            plus[comp] += delta;
            let mut minus = g;
            minus[comp] -= delta;
            let lp = ConnectionPoint::new(&plus, &dg).unwrap().grav_density();
            let lm = ConnectionPoint::new(&minus, &dg).unwrap().grav_density();
            let numeric = (lp - lm) / (2.0 * delta);
            assert!(
                (numeric - mult * dv[r][s]).abs() <= 1e-7,
                "comp ({r},{s}): {numeric} vs {}",
                mult * dv[r][s]
            );
        }
    }

    #[test]
    fn conformal_connection_matches_closed_form() {
        let omega = 1.1;
        let dom = [0.02, -0.05, 0.035, 0.01];
        let eta_full = unpack_sym(&ETA);
        let mut g = ETA;
        for v in &mut g {
            *v *= omega * omega;
        }
        let mut dg = [[0.0; 4]; 10];
        for (comp, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            for l in 0..4 {
                dg[comp][l] = 2.0 * omega * dom[l] * eta_full[a][b];
            }
        }
        let mp = MetricPoint::new(&g, &dg).unwrap();
        for m in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    let mut closed = 0.0;
                    if m == a {
                        closed += dom[b] / omega;
                    }
                    if m == b {
                        closed += dom[a] / omega;
                    }
                    let mut raised = 0.0;
                    for s in 0..4 {
                        raised += eta_full[m][s] * dom[s];
                    }
                    closed -= eta_full[a][b] * raised / omega;
                    assert!(
                        (mp.conn.gamma_up[m][a][b] - closed).abs() <= 1e-13,
                        "({m},{a},{b})"
                    );
                }
            }
        }
    }
}
