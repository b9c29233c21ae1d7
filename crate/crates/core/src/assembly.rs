//! Coupled metric and matter system: one joint density sharing a single
//! connection kernel per point, additivity checks against the standalone
//! sectors, on-shell recombinations, and finite gauge-variation experiments.
//!
//! The recombination checks split each vanishing-on-shell combination into
//! an identity the sectors already verify plus contractions of the field
//! equations. Restoring those contractions is pure re-arithmetic of engine
//! fields, so the restored defects sit at rounding level on any grid, while
//! the combinations themselves stay as large as the fields are off shell.

use crate::density::{metric_args, Density, FieldSpec, PointArgs};
use crate::field::{FieldError, Layout, TensorField, Variance, SYM_PAIRS};
use crate::grav::{GravError, GravSector};
use crate::grid::{Grid, DIM};
use crate::matter::{MatterError, MatterPoint, MatterSector};
use crate::point_metric::{invert_sym4, require_lorentzian, ConnectionPoint, MetricPoint};
use crate::residual::{reference_scale, Residual};
use crate::stencil::{divergence, gradient};
use crate::variational::{SpinStructure, System, VariationalError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("sectors live on different grids")]
    GridMismatch,
    #[error("sectors were built from different metrics")]
    MetricMismatch,
    #[error("metric lost its signature at step {epsilon}: {reason}")]
    SignatureLost { epsilon: f64, reason: String },
    #[error("metric sector failed: {0}")]
    Grav(#[from] GravError),
    #[error("matter sector failed: {0}")]
    Matter(#[from] MatterError),
    #[error("variational system rejected the fields: {0}")]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn field_args(args: &PointArgs) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut phi = [0.0; 4];
    phi.copy_from_slice(&args.values[1][..DIM]);
    let mut dphi = [[0.0; 4]; 4];
    for a in 0..DIM {
        for m in 0..DIM {
            dphi[a][m] = args.grads[1][a * DIM + m];
        }
    }
    (phi, dphi)
}

/// Scalar density of the coupled system: the metric invariant plus the
/// matter density, evaluated through one shared connection per point so the
/// joint kernel derivatives are the exact per-point sums of the sector
/// kernels.
#[derive(Debug, Clone)]
pub struct TotalDensity {
    mass_sq: f64,
    specs: Vec<FieldSpec>,
}

impl TotalDensity {
    pub fn new(mass_sq: f64) -> Result<Self, AssemblyError> {
        if !mass_sq.is_finite() || mass_sq < 0.0 {
            return Err(AssemblyError::Matter(MatterError::BadMass(mass_sq)));
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

    fn points(&self, args: &PointArgs) -> (MetricPoint, MatterPoint) {
        let (g, dg) = metric_args(args, 0);
        let conn = ConnectionPoint::new(&g, &dg).expect("metric accepted by validate");
        let grav = MetricPoint::from_connection(conn.clone());
        let (phi, dphi) = field_args(args);
        let matter = MatterPoint::new(conn, phi, dphi, self.mass_sq);
        (grav, matter)
    }
}

impl Density for TotalDensity {
    fn fields(&self) -> &[FieldSpec] {
        &self.specs
    }

    fn eval(&self, args: &PointArgs) -> f64 {
        let (g, dg) = metric_args(args, 0);
        let conn = ConnectionPoint::new(&g, &dg).expect("metric accepted by validate");
        let grav = conn.grav_density();
        let (phi, dphi) = field_args(args);
        grav + MatterPoint::new(conn, phi, dphi, self.mass_sq).lagrangian()
    }

    fn d_value(&self, args: &PointArgs, field: usize, out: &mut [f64]) {
        match field {
            0 => {
                let (grav, matter) = self.points(args);
                let dv = grav.dvalue_grav();
                let dm = matter.d_metric_value();
                for (c, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                    out[c] = dv[a][b] + dm[c];
                }
            }
            _ => {
                let (_, matter) = self.points(args);
                out[..DIM].copy_from_slice(&matter.d_phi_value());
            }
        }
    }

    fn d_grad(&self, args: &PointArgs, field: usize, out: &mut [f64]) {
        match field {
            0 => {
                let (grav, matter) = self.points(args);
                let hg = grav.h_grav();
                let hm = matter.d_metric_grad();
                for (c, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                    for m in 0..DIM {
                        out[c * DIM + m] = hg[a][b][m] + hm[c][m];
                    }
                }
            }
            _ => {
                let (_, matter) = self.points(args);
                let h = matter.d_phi_grad();
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

/// Differences between coupled-engine fields and the sums of the standalone
/// sector fields. The momentum difference is exactly zero because only the
/// per-point kernel sums enter; the Euler and energy differences pass the
/// shared stencil through the summed fields and land at rounding level.
#[derive(Debug)]
pub struct AdditivityReport {
    pub momentum: Residual,
    pub metric_euler: Residual,
    pub energy: Residual,
}

/// One vanishing-on-shell combination. `direct` is the combination itself,
/// which off shell carries the field-equation defect; `defect` restores the
/// off-shell completion terms and must sit at rounding level.
#[derive(Debug)]
pub struct OnshellCheck {
    pub label: &'static str,
    pub direct: Residual,
    pub defect: Residual,
}

/// One step of the gauge experiment at a fixed amplitude.
#[derive(Debug, Clone, Copy)]
pub struct GaugeProbe {
    pub epsilon: f64,
    /// Absolute shift of the coupled action including the boundary term.
    pub action_shift: f64,
    /// Largest pointwise shift of the metric-sector energy tensor.
    pub energy_shift: f64,
    /// Relative translation-identity residual on the transformed fields.
    pub translation_relative: f64,
    /// Relative vanishing-combination residual on the transformed fields.
    pub vanishing_relative: f64,
    /// Relative gauge-identity residual on the transformed fields.
    pub gauge_relative: f64,
}

/// The coupled system: one variational engine over both fields plus the two
/// standalone sectors it must reconcile with.
pub struct TotalSystem {
    pub system: System,
    pub grav: GravSector,
    pub matter: MatterSector,
}

impl TotalSystem {
    /// Joins the two sectors. They must share the grid and the metric.
    pub fn new(grav: GravSector, matter: MatterSector) -> Result<Self, AssemblyError> {
        if !grav.bundle.grid.same_shape(&matter.bundle.grid) {
            return Err(AssemblyError::GridMismatch);
        }
        if grav.bundle.g.sub(&matter.bundle.g)?.linf() != 0.0 {
            return Err(AssemblyError::MetricMismatch);
        }
        let system = System::new(
            Box::new(TotalDensity::new(matter.mass_sq)?),
            vec![grav.bundle.g.clone(), matter.system.field(1).clone()],
            vec![SpinStructure::MetricPair, SpinStructure::Covector],
        )?;
        Ok(Self {
            system,
            grav,
            matter,
        })
    }

    /// Convenience constructor from the raw fields.
    pub fn from_fields(
        g: &TensorField,
        phi: &TensorField,
        mass_sq: f64,
    ) -> Result<Self, AssemblyError> {
        let grav = GravSector::new(g)?;
        let matter = MatterSector::new(g, phi, mass_sq)?;
        Self::new(grav, matter)
    }

    /// Coupled action plus the boundary divergence of the metric sector,
    /// which completes the bulk density to the curvature invariant. On a
    /// periodic grid the boundary total telescopes to rounding.
    #[must_use]
    pub fn action(&self) -> f64 {
        let boundary = divergence(&self.grav.bundle.b, 0).expect("boundary vector is rank one");
        self.system.action()
            + boundary
                .total()
                .expect("divergence of a vector is a scalar")
    }

    /// Momentum conjugate to the metric gradient, from the coupled engine.
    #[must_use]
    pub fn momentum(&self) -> TensorField {
        self.system.h_field(0)
    }

    /// Euler derivative with respect to the metric, from the coupled engine.
    #[must_use]
    pub fn metric_euler(&self) -> TensorField {
        self.system.euler(0)
    }

    /// Euler derivative with respect to the vector field.
    #[must_use]
    pub fn field_euler(&self) -> TensorField {
        self.system.euler(1)
    }

    /// Canonical energy tensor of the coupled system.
    #[must_use]
    pub fn energy(&self) -> TensorField {
        self.system.energy()
    }

    /// Coupled-engine fields against the sums of the sector fields.
    pub fn additivity(&self) -> Result<AdditivityReport, AssemblyError> {
        let momentum = {
            let total = self.system.h_field(0);
            let sum = self
                .grav
                .system
                .h_field(0)
                .add(&self.matter.system.h_field(0))?;
            let reference = reference_scale(&[&total, &sum]);
            Residual::new(total.sub(&sum)?, reference)
        };
        let metric_euler = {
            let total = self.system.euler(0);
            let sum = self
                .grav
                .system
                .euler(0)
                .add(&self.matter.system.euler(0))?;
            let reference = reference_scale(&[&total, &sum]);
            Residual::new(total.sub(&sum)?, reference)
        };
        let energy = {
            let total = self.system.energy();
            let sum = self
                .grav
                .system
                .energy()
                .add(&self.matter.system.energy())?;
            let reference = reference_scale(&[&total, &sum]);
            Residual::new(total.sub(&sum)?, reference)
        };
        Ok(AdditivityReport {
            momentum,
            metric_euler,
            energy,
        })
    }

    /// Curvature side of the field equations minus the matter stress, both
    /// densitized. A diagnostic of how far the configuration is off shell,
    /// not a residual that decays under refinement.
    pub fn einstein_defect(&self) -> Result<Residual, AssemblyError> {
        let curvature = self
            .grav
            .bundle
            .einstein_upper
            .mul_scalar_field(&self.grav.bundle.sqrt_g)?;
        let stress = self.matter.system.euler(0).expand_sym();
        let reference = reference_scale(&[&curvature, &stress]);
        Ok(Residual::new(curvature.sub(&stress)?, reference))
    }

    /// Translation identity of the coupled engine.
    #[must_use]
    pub fn translation_identity(&self) -> Residual {
        self.system.identity_translation()
    }

    /// Coupled translation residual minus the sum of the two sector
    /// residuals. Pure re-arithmetic, so it sits far below the truncation
    /// scale of the residuals themselves.
    pub fn translation_decomposition(&self) -> Result<Residual, AssemblyError> {
        let total = self.system.identity_translation();
        let sum = self
            .grav
            .system
            .identity_translation()
            .field
            .add(&self.matter.system.identity_translation().field)?;
        let reference = reference_scale(&[&total.field, &sum]);
        Ok(Residual::new(total.field.sub(&sum)?, reference))
    }

    /// Energy tensor plus spin term plus auxiliary divergence for the
    /// coupled system; cancels identically in the continuum.
    pub fn vanishing_energy_momentum(&self) -> Result<Residual, AssemblyError> {
        let energy = self.system.energy();
        let gs = self.system.gs();
        let aux = divergence(&self.system.k_aux(), 0)?;
        let reference = reference_scale(&[&energy, &gs, &aux]);
        Ok(Residual::new(energy.add(&gs)?.add(&aux)?, reference))
    }

    /// Divergence of the coupled spin term balanced against the Euler
    /// derivatives times the field gradients.
    pub fn gauge_identity(&self) -> Result<Residual, AssemblyError> {
        let lhs = divergence(&self.system.gs(), 0)?;
        let mut rhs = TensorField::zeros(&self.grav.bundle.grid, &[Variance::Down], Layout::Dense)?;
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

    /// The six combinations that vanish when the field equations hold, each
    /// paired with its off-shell completion. Every completion reduces the
    /// combination to identities the sectors already verify, so the restored
    /// defects are rounding-level on any grid.
    pub fn onshell_consequences(&self) -> Result<Vec<OnshellCheck>, AssemblyError> {
        let gb = &self.grav.bundle;
        let g_field = self.system.field(0);
        let phi_field = self.system.field(1);

        let e0 = self.grav.system.energy();
        let em = self.matter.matter_energy()?;
        let g0 = self.grav.system.euler(0);
        let m = self.matter.system.euler(0);
        let gmat = self.matter.system.euler(1);
        let dphi = self.matter.system.field_gradient(1);
        let div_k0 = divergence(&self.grav.system.k_aux(), 0)?;
        let div_k1 = divergence(&self.matter.system.k_aux(), 0)?;

        let mdg = m.contract_between(&gb.dg, &[(0, 0), (1, 1)])?;
        let g0dg = g0.contract_between(&gb.dg, &[(0, 0), (1, 1)])?;
        let gphi = gmat.contract_between(&dphi, &[(0, 0)])?;
        let m_mixed = m.contract_between(g_field, &[(1, 0)])?;
        let g0_mixed = g0.contract_between(g_field, &[(1, 0)])?;
        let hm_dg = self
            .matter
            .system
            .h_field(0)
            .contract_between(&gb.dg, &[(0, 0), (1, 1)])?;
        let g_cov = gmat.outer(phi_field)?;

        let r_trans0 = self.grav.system.identity_translation();
        let r_trans1 = self.matter.system.identity_translation();
        let r_z0 = self.grav.vanishing_energy_momentum()?;
        let r_z1 = self.matter.vanishing_energy_momentum()?;
        let r_gauge1 = self.matter.gauge_identity()?;

        let mut checks = Vec::new();

        let div_e0 = divergence(&e0, 0)?;
        let direct = div_e0.sub(&mdg)?;
        let completion = g0dg.add(&mdg)?;
        let defect = direct.sub(&r_trans0.field)?.add(&completion)?;
        checks.push(OnshellCheck {
            label: "metric energy flux against the matter stress contraction",
            direct: Residual::new(direct, reference_scale(&[&div_e0, &mdg])),
            defect: Residual::new(defect, reference_scale(&[&div_e0, &g0dg, &mdg])),
        });

        let div_em = divergence(&em, 0)?;
        let div_hm_dg = divergence(&hm_dg, 0)?;
        let direct = div_em.add(&mdg)?.add(&div_hm_dg)?;
        let defect = direct.sub(&r_trans1.field)?.add(&gphi)?;
        checks.push(OnshellCheck {
            label: "matter energy flux against its compensating fluxes",
            direct: Residual::new(direct, reference_scale(&[&div_em, &mdg, &div_hm_dg])),
            defect: Residual::new(defect, reference_scale(&[&div_em, &mdg, &gphi])),
        });

        let e_tot = self.system.energy();
        let div_k_tot = divergence(&self.system.k_aux(), 0)?;
        let gs_tot = self.system.gs();
        let direct = e_tot.add(&div_k_tot)?;
        let gs_rebuilt = g0_mixed.add(&m_mixed)?.scaled(2.0).add(&g_cov)?;
        let defect = direct
            .sub(&e_tot.add(&gs_tot)?.add(&div_k_tot)?)?
            .add(&gs_rebuilt)?;
        checks.push(OnshellCheck {
            label: "total energy plus the total auxiliary divergence",
            direct: Residual::new(direct, reference_scale(&[&e_tot, &div_k_tot])),
            defect: Residual::new(defect, reference_scale(&[&e_tot, &gs_tot, &div_k_tot])),
        });

        let direct = e0.sub(&m_mixed.scaled(2.0))?.add(&div_k0)?;
        let completion = g0_mixed.add(&m_mixed)?.scaled(2.0);
        let defect = direct.sub(&r_z0.field)?.add(&completion)?;
        checks.push(OnshellCheck {
            label: "metric energy balance with the matter stress swapped in",
            direct: Residual::new(direct, reference_scale(&[&e0, &m_mixed, &div_k0])),
            defect: Residual::new(
                defect,
                reference_scale(&[&e0, &g0_mixed, &m_mixed, &div_k0]),
            ),
        });

        let direct = em.add(&m_mixed.scaled(2.0))?.add(&hm_dg)?.add(&div_k1)?;
        let defect = direct.sub(&r_z1.field)?.add(&g_cov)?;
        checks.push(OnshellCheck {
            label: "matter energy balance with the field term dropped",
            direct: Residual::new(direct, reference_scale(&[&em, &m_mixed, &hm_dg, &div_k1])),
            defect: Residual::new(defect, reference_scale(&[&em, &m_mixed, &hm_dg, &div_k1])),
        });

        let div_m_mixed = divergence(&m_mixed, 0)?;
        let direct = div_m_mixed.scaled(2.0).sub(&mdg)?;
        let defect = direct
            .sub(&r_gauge1.field)?
            .add(&divergence(&g_cov, 0)?)?
            .sub(&gphi)?;
        checks.push(OnshellCheck {
            label: "mixed stress divergence against the stress contraction",
            direct: Residual::new(direct, reference_scale(&[&div_m_mixed, &mdg])),
            defect: Residual::new(defect, reference_scale(&[&div_m_mixed, &mdg, &gphi])),
        });

        Ok(checks)
    }

    /// Runs the experiment once per amplitude, rebuilding the coupled system
    /// on the shifted fields. A metric that loses its signature surfaces as
    /// `SignatureLost` with the amplitude that broke it.
    pub fn gauge_experiment(
        &self,
        variation: &GaugeVariation,
        epsilons: &[f64],
    ) -> Result<Vec<GaugeProbe>, AssemblyError> {
        let base_action = self.action();
        let base_energy = self.grav.system.energy();
        let mut probes = Vec::with_capacity(epsilons.len());
        for &epsilon in epsilons {
            let g = self
                .system
                .field(0)
                .add(&variation.delta_g.scaled(epsilon))?;
            let phi = self
                .system
                .field(1)
                .add(&variation.delta_phi.scaled(epsilon))?;
            let grav = GravSector::new(&g).map_err(|e| AssemblyError::SignatureLost {
                epsilon,
                reason: e.to_string(),
            })?;
            let matter = MatterSector::new(&g, &phi, self.matter.mass_sq).map_err(|e| {
                AssemblyError::SignatureLost {
                    epsilon,
                    reason: e.to_string(),
                }
            })?;
            let shifted = Self::new(grav, matter)?;
            probes.push(GaugeProbe {
                epsilon,
                action_shift: (shifted.action() - base_action).abs(),
                energy_shift: shifted.grav.system.energy().sub(&base_energy)?.linf(),
                translation_relative: shifted.translation_identity().relative(),
                vanishing_relative: shifted.vanishing_energy_momentum()?.relative(),
                gauge_relative: shifted.gauge_identity()?.relative(),
            });
        }
        Ok(probes)
    }
}

/// First-order response of the fields to an infinitesimal coordinate drag
/// along a vector field: the metric picks up its symmetrized covariant
/// stretch and the covector is dragged with its index pulled along.
pub struct GaugeVariation {
    pub xi: TensorField,
    /// Packed symmetric metric shift.
    pub delta_g: TensorField,
    /// Covector shift.
    pub delta_phi: TensorField,
}

impl GaugeVariation {
    pub fn new(
        g: &TensorField,
        phi: &TensorField,
        xi: &TensorField,
    ) -> Result<Self, AssemblyError> {
        let dxi = gradient(xi);
        let dg = gradient(g);
        let drag_g = dg.contract_between(xi, &[(2, 0)])?;
        let stretch = dxi.apply_metric(0, g)?;
        let delta_g = drag_g
            .add(&stretch)?
            .add(&stretch.permute(&[1, 0])?)?
            .scaled(-1.0)
            .pack_sym()?;
        let dphi = gradient(phi);
        let drag_phi = dphi.contract_between(xi, &[(1, 0)])?;
        let pull = phi.contract_between(&dxi, &[(0, 0)])?;
        let delta_phi = drag_phi.add(&pull)?.scaled(-1.0);
        Ok(Self {
            xi: xi.clone(),
            delta_g,
            delta_phi,
        })
    }
}

/// Smooth vector field for the gauge experiment: each component is a product
/// of single-mode sines along the first two axes with its own wave numbers
/// and phases, so no component is constant and none vanishes identically.
#[must_use]
pub fn standard_xi(grid: &Grid) -> TensorField {
    const WAVES: [(f64, f64); 4] = [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0), (2.0, 2.0)];
    const PHASES: [(f64, f64); 4] = [(0.3, 1.1), (0.7, 0.2), (1.9, 2.3), (0.5, 1.6)];
    TensorField::from_fn(grid, &[Variance::Up], Layout::Dense, |x, multi| {
        let (k0, k1) = WAVES[multi[0]];
        let (p0, p1) = PHASES[multi[0]];
        (k0 * x[0] + p0).sin() * (k1 * x[1] + p1).sin()
    })
    .expect("rank-one dense field on any grid")
}
