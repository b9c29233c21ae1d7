//! Massive vector field minimally coupled to the metric: the matter density
//! driven through the variational engine, plus closed-form cross-checks
//! built from the shared connection kernel.
//!
//! The same two error regimes as the metric sector apply. Closed forms that
//! reuse the engine's stencil derivatives (momenta, Euler derivatives, the
//! energy decomposition) agree to rounding. Identities that put a stencil on
//! assembled product fields (translation, the vanishing energy-momentum
//! combination, the gauge divergence) hold to truncation and are judged by
//! their decay under grid refinement.

use crate::density::{metric_args, Density, FieldSpec, PointArgs};
use crate::field::{FieldError, Layout, TensorField, Variance, SYM_PAIRS};
use crate::geometry::{GeometryError, MetricBundle};
use crate::grid::DIM;
use crate::point_metric::{invert_sym4, require_lorentzian, ConnectionPoint};
use crate::residual::{reference_scale, Residual};
use crate::stencil::divergence;
use crate::variational::{EmTensor, SpinStructure, System, VariationalError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatterError {
    #[error("mass squared must be finite and non-negative, got {0}")]
    BadMass(f64),
    #[error("metric geometry failed: {0}")]
    Geometry(#[from] GeometryError),
    #[error("variational system rejected the fields: {0}")]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Pointwise kernel of the vector-matter density: the covariant derivative
/// of the field in every variance placement, the kinetic and length scalars,
/// and the analytic partials the engine consumes.
#[derive(Debug, Clone)]
pub struct MatterPoint {
    pub conn: ConnectionPoint,
    /// Field value `phi_a`.
    pub phi: [f64; 4],
    /// Stencil gradient; `dphi[a][m]` holds the `m` derivative of `phi_a`.
    pub dphi: [[f64; 4]; 4],
    pub mass_sq: f64,
    /// Raised value `phi^a`.
    pub phi_up: [f64; 4],
    /// `cov_dd[m][a]`: covariant `m` derivative of `phi_a`.
    pub cov_dd: [[f64; 4]; 4],
    /// `cov_du[m][c]`: component slot raised.
    pub cov_du: [[f64; 4]; 4],
    /// `cov_ud[m][a]`: derivative slot raised.
    pub cov_ud: [[f64; 4]; 4],
    /// `cov_uu[m][c]`: both slots raised.
    pub cov_uu: [[f64; 4]; 4],
    /// Full contraction of the covariant derivative with its raised form.
    pub kinetic: f64,
    /// Squared length of the field value.
    pub length_sq: f64,
}

impl MatterPoint {
    #[must_use]
    pub fn new(conn: ConnectionPoint, phi: [f64; 4], dphi: [[f64; 4]; 4], mass_sq: f64) -> Self {
        let gi = &conn.gi;
        let mut phi_up = [0.0; 4];
        for a in 0..DIM {
            for b in 0..DIM {
                phi_up[a] += gi[a][b] * phi[b];
            }
        }
        let mut cov_dd = [[0.0; 4]; 4];
        for m in 0..DIM {
            for a in 0..DIM {
                let mut corr = 0.0;
                for s in 0..DIM {
                    corr += conn.gamma_up[s][a][m] * phi[s];
                }
                cov_dd[m][a] = dphi[a][m] - corr;
            }
        }
        let mut cov_du = [[0.0; 4]; 4];
        let mut cov_ud = [[0.0; 4]; 4];
        for m in 0..DIM {
            for c in 0..DIM {
                let mut raised_comp = 0.0;
                let mut raised_axis = 0.0;
                for n in 0..DIM {
                    raised_comp += gi[c][n] * cov_dd[m][n];
                    raised_axis += gi[m][n] * cov_dd[n][c];
                }
                cov_du[m][c] = raised_comp;
                cov_ud[m][c] = raised_axis;
            }
        }
        let mut cov_uu = [[0.0; 4]; 4];
        for m in 0..DIM {
            for c in 0..DIM {
                let mut acc = 0.0;
                for n in 0..DIM {
                    acc += gi[m][n] * cov_du[n][c];
                }
                cov_uu[m][c] = acc;
            }
        }
        let mut kinetic = 0.0;
        for m in 0..DIM {
            for a in 0..DIM {
                kinetic += cov_dd[m][a] * cov_uu[m][a];
            }
        }
        let mut length_sq = 0.0;
        for a in 0..DIM {
            length_sq += phi[a] * phi_up[a];
        }
        Self {
            conn,
            phi,
            dphi,
            mass_sq,
            phi_up,
            cov_dd,
            cov_du,
            cov_ud,
            cov_uu,
            kinetic,
            length_sq,
        }
    }

    /// Scalar density: volume factor times kinetic minus mass term.
    #[must_use]
    pub fn lagrangian(&self) -> f64 {
        self.conn.sqrt_g * (self.kinetic - self.mass_sq * self.length_sq)
    }

    /// Partials with respect to the field gradient; `out[a][m]` responds to
    /// the `m` derivative of `phi_a`.
    #[must_use]
    pub fn d_phi_grad(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for a in 0..DIM {
            for m in 0..DIM {
                out[a][m] = 2.0 * self.conn.sqrt_g * self.cov_uu[m][a];
            }
        }
        out
    }

    /// Partials with respect to the packed metric gradient; `out[c][m]`
    /// responds to the `m` derivative of packed pair `c`.
    #[must_use]
    pub fn d_metric_grad(&self) -> [[f64; 4]; 10] {
        let mut out = [[0.0; 4]; 10];
        let uu = &self.cov_uu;
        for (c, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            for m in 0..DIM {
                out[c][m] = -0.5
                    * self.conn.sqrt_g
                    * (self.phi_up[a] * (uu[b][m] + uu[m][b])
                        + self.phi_up[b] * (uu[a][m] + uu[m][a])
                        - self.phi_up[m] * (uu[a][b] + uu[b][a]));
            }
        }
        out
    }

    /// Partials with respect to the field values.
    #[must_use]
    pub fn d_phi_value(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for c in 0..DIM {
            let mut conn_term = 0.0;
            for r in 0..DIM {
                for a in 0..DIM {
                    conn_term += self.cov_uu[r][a] * self.conn.gamma_up[c][a][r];
                }
            }
            out[c] = -2.0 * self.conn.sqrt_g * (self.mass_sq * self.phi_up[c] + conn_term);
        }
        out
    }

    /// Symmetrized partials with respect to the packed metric values.
    #[must_use]
    pub fn d_metric_value(&self) -> [f64; 10] {
        let sq = self.conn.sqrt_g;
        let gi = &self.conn.gi;
        let mut inner = [0.0; 4];
        for s in 0..DIM {
            for m in 0..DIM {
                for a in 0..DIM {
                    inner[s] += self.cov_uu[m][a] * self.conn.gamma_up[s][a][m];
                }
            }
        }
        let raw = |r: usize, s: usize| {
            let mut kin_cross = 0.0;
            for n in 0..DIM {
                kin_cross += self.cov_uu[n][r] * self.cov_du[n][s];
            }
            let mut comp_cross = 0.0;
            for a in 0..DIM {
                comp_cross += self.cov_uu[r][a] * self.cov_ud[s][a];
            }
            0.5 * sq * gi[r][s] * (self.kinetic - self.mass_sq * self.length_sq)
                + sq * (-kin_cross - comp_cross
                    + 2.0 * self.phi_up[r] * inner[s]
                    + self.mass_sq * self.phi_up[r] * self.phi_up[s])
        };
        let mut out = [0.0; 10];
        for (c, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            out[c] = 0.5 * (raw(a, b) + raw(b, a));
        }
        out
    }
}

/// Scalar density of a massive vector field on a dynamical metric: the
/// squared covariant derivative minus the mass term, densitized by the
/// volume factor. First order in both field gradients.
#[derive(Debug, Clone)]
pub struct VectorMatterDensity {
    mass_sq: f64,
    specs: Vec<FieldSpec>,
}

impl VectorMatterDensity {
    pub fn new(mass_sq: f64) -> Result<Self, MatterError> {
        if !mass_sq.is_finite() || mass_sq < 0.0 {
            return Err(MatterError::BadMass(mass_sq));
        }
        Ok(Self {
            mass_sq,
            specs: vec![
                FieldSpec {
                    name: "g",
                    variances: vec![Variance::Down, Variance::Down],
                    layout: Layout::SymPair,
                },
                FieldSpec {
                    name: "phi",
                    variances: vec![Variance::Down],
                    layout: Layout::Dense,
                },
            ],
        })
    }

    fn point(&self, args: &PointArgs) -> MatterPoint {
        let (g, dg) = metric_args(args, 0);
        let conn = ConnectionPoint::new(&g, &dg).expect("metric accepted by validate");
        let mut phi = [0.0; 4];
        phi.copy_from_slice(&args.values[1][..DIM]);
        let mut dphi = [[0.0; 4]; 4];
        for a in 0..DIM {
            for m in 0..DIM {
                dphi[a][m] = args.grads[1][a * DIM + m];
            }
        }
        MatterPoint::new(conn, phi, dphi, self.mass_sq)
    }
}

impl Density for VectorMatterDensity {
    fn fields(&self) -> &[FieldSpec] {
        &self.specs
    }

    fn eval(&self, args: &PointArgs) -> f64 {
        self.point(args).lagrangian()
    }

    fn d_value(&self, args: &PointArgs, field: usize, out: &mut [f64]) {
        let point = self.point(args);
        match field {
            0 => out[..10].copy_from_slice(&point.d_metric_value()),
            _ => out[..DIM].copy_from_slice(&point.d_phi_value()),
        }
    }

    fn d_grad(&self, args: &PointArgs, field: usize, out: &mut [f64]) {
        let point = self.point(args);
        match field {
            0 => {
                let h = point.d_metric_grad();
                for c in 0..10 {
                    out[c * DIM..(c + 1) * DIM].copy_from_slice(&h[c]);
                }
            }
            _ => {
                let h = point.d_phi_grad();
                for a in 0..DIM {
                    out[a * DIM..(a + 1) * DIM].copy_from_slice(&h[a]);
                }
            }
        }
    }

    fn validate(&self, args: &PointArgs) -> Result<(), String> {
        let (g, _) = metric_args(args, 0);
        invert_sym4(&g).map_err(|e| e.to_string())?;
        require_lorentzian(&g).map_err(|e| e.to_string())
    }
}

/// Placement of the volume factor in the divergence term of the stress
/// tensor's closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceWeight {
    /// Volume factor multiplied in before the stencil divergence; this is
    /// the reading the functional oracle confirms.
    Inside,
    /// Volume factor applied after the stencil divergence; kept as the
    /// rejected alternative.
    Outside,
}

/// The matter sector on one grid: metric geometry, the two-field variational
/// system, and the covariant-derivative fields shared by the closed forms.
pub struct MatterSector {
    pub bundle: MetricBundle,
    pub system: System,
    pub mass_sq: f64,
    phi_up: TensorField,
    cov_dd: TensorField,
    cov_uu: TensorField,
}

impl MatterSector {
    pub fn new(g: &TensorField, phi: &TensorField, mass_sq: f64) -> Result<Self, MatterError> {
        let bundle = MetricBundle::new(g)?;
        let system = System::new(
            Box::new(VectorMatterDensity::new(mass_sq)?),
            vec![g.clone(), phi.clone()],
            vec![SpinStructure::MetricPair, SpinStructure::Covector],
        )?;
        let grid = &bundle.grid;
        let mut phi_up = TensorField::zeros(grid, &[Variance::Up], Layout::Dense)?;
        let mut cov_dd =
            TensorField::zeros(grid, &[Variance::Down, Variance::Down], Layout::Dense)?;
        let mut cov_uu = TensorField::zeros(grid, &[Variance::Up, Variance::Up], Layout::Dense)?;
        let dphi = system.field_gradient(1);
        for point in 0..grid.n_points() {
            let mut g10 = [0.0; 10];
            let mut dg10 = [[0.0; 4]; 10];
            for c in 0..10 {
                g10[c] = bundle.g.comp(c)[point];
                for axis in 0..DIM {
                    dg10[c][axis] = bundle.dg_packed[axis].comp(c)[point];
                }
            }
            let mut p = [0.0; 4];
            let mut dp = [[0.0; 4]; 4];
            for a in 0..DIM {
                p[a] = phi.comp(a)[point];
                for m in 0..DIM {
                    dp[a][m] = dphi.comp(a * DIM + m)[point];
                }
            }
            let conn = ConnectionPoint::new(&g10, &dg10)
                .expect("bundle construction validated the metric");
            let mp = MatterPoint::new(conn, p, dp, mass_sq);
            for a in 0..DIM {
                phi_up.comp_mut(a)[point] = mp.phi_up[a];
                for m in 0..DIM {
                    cov_dd.comp_mut(m * DIM + a)[point] = mp.cov_dd[m][a];
                    cov_uu.comp_mut(m * DIM + a)[point] = mp.cov_uu[m][a];
                }
            }
        }
        Ok(Self {
            bundle,
            system,
            mass_sq,
            phi_up,
            cov_dd,
            cov_uu,
        })
    }

    /// Raised field value `phi^a`.
    #[must_use]
    pub fn field_value_raised(&self) -> &TensorField {
        &self.phi_up
    }

    /// Covariant derivative of the field; slots are derivative then
    /// component, both lower.
    #[must_use]
    pub fn covariant_derivative(&self) -> &TensorField {
        &self.cov_dd
    }

    /// Covariant derivative with both slots raised.
    #[must_use]
    pub fn covariant_derivative_raised(&self) -> &TensorField {
        &self.cov_uu
    }

    /// Momentum conjugate to the field gradient, rebuilt from the covariant
    /// derivative: twice the densitized raised derivative, slots swapped to
    /// component then axis.
    pub fn phi_momentum_closed(&self) -> Result<TensorField, MatterError> {
        Ok(self
            .cov_uu
            .permute(&[1, 0])?
            .mul_scalar_field(&self.bundle.sqrt_g)?
            .scaled(2.0))
    }

    pub fn phi_momentum_comparison(&self) -> Result<Residual, MatterError> {
        let engine = self.system.h_field(1);
        let closed = self.phi_momentum_closed()?;
        let reference = engine.linf();
        Ok(Residual::new(engine.sub(&closed)?, reference))
    }

    /// Symmetric pair bracket `phi^a S^bm + phi^b S^am - phi^m S^ab` with
    /// `S^bm` the symmetrized raised derivative.
    fn pair_bracket(&self) -> Result<TensorField, MatterError> {
        let s = self.cov_uu.add(&self.cov_uu.permute(&[1, 0])?)?;
        let first = self.phi_up.outer(&s)?;
        let mut t = first.add(&first.permute(&[1, 0, 2])?)?;
        t.axpy(-1.0, &first.permute(&[1, 2, 0])?)?;
        Ok(t)
    }

    /// Momentum conjugate to the metric gradient, rebuilt from the pair
    /// bracket: minus half the densitized bracket.
    pub fn metric_momentum_closed(&self) -> Result<TensorField, MatterError> {
        Ok(self
            .pair_bracket()?
            .mul_scalar_field(&self.bundle.sqrt_g)?
            .scaled(-0.5))
    }

    pub fn metric_momentum_comparison(&self) -> Result<Residual, MatterError> {
        let engine = self.system.h_field(0);
        let closed = self.metric_momentum_closed()?;
        let reference = engine.linf();
        Ok(Residual::new(engine.sub(&closed)?, reference))
    }

    /// Stress tensor rebuilt from covariant fields: half the raised metric
    /// times the density, minus the densitized derivative squares and mass
    /// quadratic, plus the connection terms and the divergence of the pair
    /// bracket with the volume factor placed per `weight`.
    pub fn stress_closed(&self, weight: DivergenceWeight) -> Result<TensorField, MatterError> {
        let bundle = &self.bundle;
        let sq = &bundle.sqrt_g;
        let lag = self.system.lagrangian();
        let mut out = bundle
            .g_inv
            .expand_sym()
            .mul_scalar_field(&lag)?
            .scaled(0.5);
        let cov_du = self.cov_dd.apply_metric(1, &bundle.g_inv)?;
        let cov_ud = self.cov_dd.apply_metric(0, &bundle.g_inv)?;
        let mut quad = self.cov_uu.contract_between(&cov_du, &[(0, 0)])?;
        quad.axpy(1.0, &self.cov_uu.contract_between(&cov_ud, &[(1, 1)])?)?;
        quad.axpy(-self.mass_sq, &self.phi_up.outer(&self.phi_up)?)?;
        out.axpy(-1.0, &quad.mul_scalar_field(sq)?)?;
        let t = self.pair_bracket()?;
        let g1 = bundle.gamma_up.contract_between(&t, &[(1, 0), (2, 2)])?;
        let g2 = bundle
            .gamma_up
            .contract_between(&t, &[(1, 1), (2, 2)])?
            .permute(&[1, 0])?;
        out.axpy(0.5, &g1.add(&g2)?.mul_scalar_field(sq)?)?;
        let div = match weight {
            DivergenceWeight::Inside => divergence(&t.mul_scalar_field(sq)?, 2)?,
            DivergenceWeight::Outside => divergence(&t, 2)?.mul_scalar_field(sq)?,
        };
        out.axpy(0.5, &div)?;
        Ok(out)
    }

    pub fn stress_comparison(&self, weight: DivergenceWeight) -> Result<Residual, MatterError> {
        let engine = self.system.euler(0).expand_sym();
        let closed = self.stress_closed(weight)?;
        let reference = engine.linf();
        Ok(Residual::new(engine.sub(&closed)?, reference))
    }

    /// Euler derivative of the field, rebuilt from covariant fields: minus
    /// the divergence of the field momentum, minus twice the densitized
    /// connection contraction and mass term.
    pub fn phi_euler_closed(&self) -> Result<TensorField, MatterError> {
        let h = self.phi_momentum_closed()?;
        let mut out = divergence(&h, 1)?.scaled(-1.0);
        let gx = self
            .bundle
            .gamma_up
            .contract_between(&self.cov_uu, &[(1, 1), (2, 0)])?;
        out.axpy(-2.0, &gx.mul_scalar_field(&self.bundle.sqrt_g)?)?;
        out.axpy(
            -2.0 * self.mass_sq,
            &self.phi_up.mul_scalar_field(&self.bundle.sqrt_g)?,
        )?;
        Ok(out)
    }

    pub fn phi_euler_comparison(&self) -> Result<Residual, MatterError> {
        let engine = self.system.euler(1);
        let closed = self.phi_euler_closed()?;
        let reference = engine.linf();
        Ok(Residual::new(engine.sub(&closed)?, reference))
    }

    /// Mass contribution to the stress tensor per unit mass squared:
    /// densitized `phi^a phi^b - g^ab length_sq / 2`.
    pub fn stress_mass_term(&self) -> Result<TensorField, MatterError> {
        let p = self
            .system
            .field(1)
            .contract_between(&self.phi_up, &[(0, 0)])?;
        let mut out = self.phi_up.outer(&self.phi_up)?;
        out.axpy(-0.5, &self.bundle.g_inv.expand_sym().mul_scalar_field(&p)?)?;
        Ok(out.mul_scalar_field(&self.bundle.sqrt_g)?)
    }

    /// Mass contribution to the field's Euler derivative per unit mass
    /// squared: minus twice the densitized raised value.
    pub fn phi_euler_mass_term(&self) -> Result<TensorField, MatterError> {
        Ok(self
            .phi_up
            .mul_scalar_field(&self.bundle.sqrt_g)?
            .scaled(-2.0))
    }

    /// Energy tensor of the matter field alone: field momentum contracted
    /// with the field gradient, minus the density on the diagonal.
    pub fn matter_energy(&self) -> Result<TensorField, MatterError> {
        let h = self.system.h_field(1);
        let dphi = self.system.field_gradient(1);
        let mut out = h.contract_between(&dphi, &[(0, 0)])?;
        let lag = self.system.lagrangian();
        out.axpy(
            -1.0,
            &TensorField::kronecker(&self.bundle.grid).mul_scalar_field(&lag)?,
        )?;
        Ok(out)
    }

    /// The engine energy tensor splits into the matter energy plus the
    /// metric momentum contracted with the metric gradient.
    pub fn energy_decomposition(&self) -> Result<Residual, MatterError> {
        let engine = self.system.energy();
        let mut closed = self.matter_energy()?;
        let h0 = self.system.h_field(0);
        closed.axpy(
            1.0,
            &h0.contract_between(&self.bundle.dg, &[(0, 0), (1, 1)])?,
        )?;
        let reference = engine.linf();
        Ok(Residual::new(engine.sub(&closed)?, reference))
    }

    /// Divergence of the energy tensor balanced against the Euler
    /// derivatives times the field gradients.
    #[must_use]
    pub fn translation_identity(&self) -> Residual {
        self.system.identity_translation()
    }

    /// The energy tensor plus the spin term plus the divergence of the
    /// auxiliary tensor, which cancels identically in the continuum.
    pub fn vanishing_energy_momentum(&self) -> Result<Residual, MatterError> {
        let energy = self.system.energy();
        let gs = self.system.gs();
        let aux = divergence(&self.system.k_aux(), 0)?;
        let reference = reference_scale(&[&energy, &gs, &aux]);
        let z = energy.add(&gs)?.add(&aux)?;
        Ok(Residual::new(z, reference))
    }

    /// Divergence of the spin term balanced against the Euler derivatives
    /// times the field gradients.
    pub fn gauge_identity(&self) -> Result<Residual, MatterError> {
        let lhs = divergence(&self.system.gs(), 0)?;
        let mut rhs = TensorField::zeros(&self.bundle.grid, &[Variance::Down], Layout::Dense)?;
        for f in 0..self.system.n_fields() {
            let euler = self.system.euler(f);
            let grad = self.system.field_gradient(f);
            let rank = self.system.field(f).rank();
            let pairs: Vec<(usize, usize)> = (0..rank).map(|s| (s, s)).collect();
            rhs.axpy(1.0, &euler.contract_between(&grad, &pairs)?)?;
        }
        let reference = reference_scale(&[&lhs, &rhs]);
        Ok(Residual::new(lhs.sub(&rhs)?, reference))
    }

    /// Energy-momentum tensor with its case evidence, from the engine.
    #[must_use]
    pub fn em_tensor(&self) -> EmTensor {
        self.system.em_tensor()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sym_multiplicity, SYM_PACK};
    use crate::grid::{Grid, StencilOrder};
    use crate::variational::EmCase;

    const AMPS: [f64; 10] = [0.31, 0.11, 0.19, 0.23, 0.25, 0.13, 0.21, 0.29, 0.09, 0.33];
    const MODES: [(f64, f64); 10] = [
        (1.0, 0.0),
        (1.0, 1.0),
        (2.0, 1.0),
        (0.0, 1.0),
        (1.0, 2.0),
        (2.0, 0.0),
        (0.0, 2.0),
        (1.0, -1.0),
        (2.0, -1.0),
        (1.0, -2.0),
    ];
    const PHASES: [f64; 10] = [0.2, 0.6, 1.0, 1.4, 1.8, 2.2, 2.6, 3.0, 3.4, 3.8];

    const PHI_AMPS: [f64; 4] = [0.45, 0.35, 0.55, 0.25];
    const PHI_MODES: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)];
    const PHI_PHASES: [f64; 4] = [0.3, 0.8, 1.5, 2.4];

    fn weak_metric(grid: &Grid, eps: f64) -> TensorField {
        TensorField::from_fn(
            grid,
            &[Variance::Down, Variance::Down],
            Layout::SymPair,
            |x, idx| {
                let comp = SYM_PACK[idx[0]][idx[1]];
                let base = if idx[0] != idx[1] {
                    0.0
                } else if idx[0] == 0 {
                    1.0
                } else {
                    -1.0
                };
                let (k0, k1) = MODES[comp];
                base + eps * AMPS[comp] * (k0 * x[0] + k1 * x[1] + PHASES[comp]).sin()
            },
        )
        .unwrap()
    }

    fn wave_field(grid: &Grid) -> TensorField {
        TensorField::from_fn(grid, &[Variance::Down], Layout::Dense, |x, idx| {
            let a = idx[0];
            let (k0, k1) = PHI_MODES[a];
            PHI_AMPS[a] * (k0 * x[0] + k1 * x[1] + PHI_PHASES[a]).sin()
        })
        .unwrap()
    }

    fn sector(n: usize, eps: f64, mass_sq: f64) -> MatterSector {
        let grid = Grid::two_pi([n, n, 1, 1], StencilOrder::Two).unwrap();
        let g = weak_metric(&grid, eps);
        let phi = wave_field(&grid);
        MatterSector::new(&g, &phi, mass_sq).unwrap()
    }

    fn rate(coarse: f64, fine: f64) -> f64 {
        (coarse / fine).log2()
    }

    #[test]
    fn bad_mass_is_rejected() {
        assert!(matches!(
            VectorMatterDensity::new(-1.0),
            Err(MatterError::BadMass(_))
        ));
        assert!(matches!(
            VectorMatterDensity::new(f64::NAN),
            Err(MatterError::BadMass(_))
        ));
    }

    #[test]
    fn euclidean_metric_is_rejected() {
        let grid = Grid::two_pi([4, 4, 1, 1], StencilOrder::Two).unwrap();
        let g = TensorField::from_fn(
            &grid,
            &[Variance::Down, Variance::Down],
            Layout::SymPair,
            |_, idx| if idx[0] == idx[1] { 1.0 } else { 0.0 },
        )
        .unwrap();
        let phi = wave_field(&grid);
        assert!(MatterSector::new(&g, &phi, 0.5).is_err());
    }

    #[test]
    fn flat_zero_field_vanishes_exactly() {
        let grid = Grid::two_pi([8, 8, 1, 1], StencilOrder::Two).unwrap();
        let g = weak_metric(&grid, 0.0);
        let phi = TensorField::zeros(&grid, &[Variance::Down], Layout::Dense).unwrap();
        let s = MatterSector::new(&g, &phi, 0.7).unwrap();
        assert_eq!(s.system.lagrangian().linf(), 0.0);
        assert_eq!(s.system.energy().linf(), 0.0);
        assert_eq!(s.system.euler(0).linf(), 0.0);
        assert_eq!(s.system.euler(1).linf(), 0.0);
        assert_eq!(s.system.k_aux().linf(), 0.0);
    }

    #[test]
    fn flat_wave_density_matches_plain_derivative() {
        let grid = Grid::two_pi([16, 1, 1, 1], StencilOrder::Two).unwrap();
        let g = weak_metric(&grid, 0.0);
        let phi = TensorField::from_fn(&grid, &[Variance::Down], Layout::Dense, |x, idx| {
            if idx[0] == 1 {
                x[0].sin()
            } else {
                0.0
            }
        })
        .unwrap();
        let s = MatterSector::new(&g, &phi, 0.0).unwrap();
        let plain = s.system.field_gradient(1).permute(&[1, 0]).unwrap();
        assert_eq!(s.covariant_derivative().sub(&plain).unwrap().linf(), 0.0);
        let lag = s.system.lagrangian();
        let d = s.system.field_gradient(1);
        let slope = d.comp(DIM);
        for (point, &l) in lag.comp(0).iter().enumerate() {
            assert_eq!(l, -(slope[point] * slope[point]));
        }
    }

    #[test]
    fn density_scales_quadratically_in_the_field() {
        let grid = Grid::two_pi([8, 8, 1, 1], StencilOrder::Two).unwrap();
        let g = weak_metric(&grid, 0.05);
        let phi = wave_field(&grid);
        let small = MatterSector::new(&g, &phi, 1.0).unwrap();
        let big = MatterSector::new(&g, &phi.scaled(2.0), 1.0).unwrap();
        let one = small.system.lagrangian();
        let four = big.system.lagrangian();
        for point in 0..grid.n_points() {
            assert_eq!(four.comp(0)[point], 4.0 * one.comp(0)[point]);
        }
    }

    #[test]
    fn kernel_partials_match_numeric_bumps() {
        let density = VectorMatterDensity::new(0.7).unwrap();
        let values = vec![
            vec![
                1.05, 0.03, -0.02, 0.04, -0.95, 0.05, -0.03, -1.04, 0.02, -0.98,
            ],
            vec![0.4, -0.3, 0.5, 0.2],
        ];
        let grads = vec![
            (0..40)
                .map(|k| 0.05 * f64::from((k % 11) as i32) - 0.2)
                .collect(),
            (0..16).map(|k| 0.1 * f64::from(k as i32) - 0.7).collect(),
        ];
        let worst = crate::density::partial_consistency(&density, &values, &grads, 1e-6);
        assert!(worst <= 1e-8, "worst deviation {worst:.3e}");
    }

    #[test]
    fn phi_momentum_matches_covariant_form() {
        let s = sector(16, 0.05, 0.7);
        let r = s.phi_momentum_comparison().unwrap();
        assert!(r.relative() <= 1e-13, "relative {:.3e}", r.relative());
    }

    #[test]
    fn metric_momentum_matches_pair_bracket() {
        let s = sector(16, 0.05, 0.7);
        let r = s.metric_momentum_comparison().unwrap();
        assert!(r.relative() <= 1e-13, "relative {:.3e}", r.relative());
    }

    #[test]
    fn stress_matches_engine_with_volume_factor_inside() {
        let s = sector(16, 0.05, 0.7);
        let inside = s.stress_comparison(DivergenceWeight::Inside).unwrap();
        let outside = s.stress_comparison(DivergenceWeight::Outside).unwrap();
        assert!(
            inside.relative() <= 1e-12,
            "inside relative {:.3e}",
            inside.relative()
        );
        assert!(
            outside.relative() >= 1e-4,
            "outside relative {:.3e} fails to separate",
            outside.relative()
        );
    }

    #[test]
    fn phi_euler_matches_covariant_form() {
        let s = sector(16, 0.05, 0.7);
        let r = s.phi_euler_comparison().unwrap();
        assert!(r.relative() <= 1e-12, "relative {:.3e}", r.relative());
    }

    #[test]
    fn energy_splits_into_matter_and_metric_parts() {
        let s = sector(16, 0.05, 0.7);
        let r = s.energy_decomposition().unwrap();
        assert!(r.relative() <= 1e-12, "relative {:.3e}", r.relative());
    }

    #[test]
    fn translation_identity_converges() {
        let coarse = sector(16, 0.05, 0.7).translation_identity().relative();
        let fine = sector(32, 0.05, 0.7).translation_identity().relative();
        let p = rate(coarse, fine);
        assert!(fine <= 5e-2, "fine residual {fine:.3e}");
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn vanishing_energy_momentum_converges() {
        let coarse = sector(16, 0.05, 0.7)
            .vanishing_energy_momentum()
            .unwrap()
            .relative();
        let fine = sector(32, 0.05, 0.7)
            .vanishing_energy_momentum()
            .unwrap()
            .relative();
        let p = rate(coarse, fine);
        assert!(fine <= 5e-2, "fine residual {fine:.3e}");
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn gauge_identity_converges() {
        let coarse = sector(32, 0.05, 0.7).gauge_identity().unwrap().relative();
        let fine = sector(64, 0.05, 0.7).gauge_identity().unwrap().relative();
        let p = rate(coarse, fine);
        assert!(fine <= 5e-2, "fine residual {fine:.3e}");
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    /// Unlike the metric sector, whose auxiliary double divergence is a
    /// truncation-level quantity, the matter auxiliary tensor's double
    /// divergence cancels to rounding, so the case selection has no
    /// resolution dependence at all.
    #[test]
    fn em_tensor_takes_the_divergence_free_branch() {
        for n in [16usize, 32] {
            let s = sector(n, 0.05, 0.7);
            let em = s.em_tensor();
            assert_eq!(em.case, EmCase::AuxDivergenceFree, "n = {n}");
            assert_eq!(em.correction.linf(), 0.0, "n = {n}");
            assert!(
                em.aux_divergence_linf <= 1e-9 * em.threshold,
                "n = {n}: ddk {:.3e} vs threshold {:.3e}",
                em.aux_divergence_linf,
                em.threshold
            );
        }
    }

    #[test]
    fn mass_term_decouples_linearly() {
        let with_mass = sector(16, 0.05, 1.0);
        let massless = sector(16, 0.05, 0.0);
        let stress_shift = with_mass
            .system
            .euler(0)
            .expand_sym()
            .sub(&massless.system.euler(0).expand_sym())
            .unwrap();
        let stress_closed = with_mass.stress_mass_term().unwrap();
        let stress_rel = stress_shift.sub(&stress_closed).unwrap().linf() / stress_closed.linf();
        assert!(
            stress_rel <= 1e-12,
            "stress shift relative {stress_rel:.3e}"
        );
        let euler_shift = with_mass
            .system
            .euler(1)
            .sub(&massless.system.euler(1))
            .unwrap();
        let euler_closed = with_mass.phi_euler_mass_term().unwrap();
        let euler_rel = euler_shift.sub(&euler_closed).unwrap().linf() / euler_closed.linf();
        assert!(euler_rel <= 1e-12, "euler shift relative {euler_rel:.3e}");
    }

    #[test]
    fn covariant_correction_scales_linearly_in_metric_amplitude() {
        let small = sector(16, 0.01, 0.7);
        let big = sector(16, 0.02, 0.7);
        let gap = |s: &MatterSector| {
            let plain = s.system.field_gradient(1).permute(&[1, 0]).unwrap();
            s.covariant_derivative().sub(&plain).unwrap().linf()
        };
        let ratio = gap(&big) / gap(&small);
        assert!(
            (ratio / 2.0 - 1.0).abs() <= 0.01,
            "doubling the amplitude scaled the correction by {ratio:.4}"
        );
    }

    #[test]
    fn raising_and_lowering_round_trips() {
        let s = sector(16, 0.05, 0.7);
        let back = s
            .covariant_derivative_raised()
            .apply_metric(0, &s.bundle.g)
            .unwrap()
            .apply_metric(1, &s.bundle.g)
            .unwrap();
        let rel =
            back.sub(s.covariant_derivative()).unwrap().linf() / s.covariant_derivative().linf();
        assert!(rel <= 1e-11, "round trip relative {rel:.3e}");
    }

    #[test]
    fn functional_bump_matches_euler_derivative() {
        let grid = Grid::two_pi([8, 8, 1, 1], StencilOrder::Two).unwrap();
        let g = weak_metric(&grid, 0.05);
        let phi = wave_field(&grid);
        let mut s = MatterSector::new(&g, &phi, 0.7).unwrap();
        let stress = s.system.euler(0);
        let field_euler = s.system.euler(1);
        for comp in [0usize, 1, 4, 9] {
            for point in [3usize, 17, 40] {
                let fd = s.system.functional_derivative(0, comp, point, 1e-5);
                let expected = sym_multiplicity(comp) * stress.comp(comp)[point];
                assert!(
                    (fd - expected).abs() <= 1e-6,
                    "metric comp {comp} point {point}: {fd:.6e} vs {expected:.6e}"
                );
            }
        }
        for comp in 0..DIM {
            for point in [3usize, 17, 40] {
                let fd = s.system.functional_derivative(1, comp, point, 1e-5);
                let expected = field_euler.comp(comp)[point];
                assert!(
                    (fd - expected).abs() <= 1e-6,
                    "field comp {comp} point {point}: {fd:.6e} vs {expected:.6e}"
                );
            }
        }
    }
}
