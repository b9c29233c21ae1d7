//! Gravitational self-interaction sector: the quadratic first-order metric
//! density driven through the variational engine, plus closed-form
//! cross-checks assembled from the geometry layer.
//!
//! Every check here belongs to one of two error regimes. Representation
//! checks rebuild an engine output from cached geometry fields; both sides
//! share the same stencil derivatives of the metric, so they agree to
//! rounding. Differential identities apply a stencil to an assembled
//! product field and hold only up to truncation, so their residuals are
//! judged by how fast they shrink under grid refinement, not by machine
//! epsilon.

use crate::density::{metric_args, Density, FieldSpec, PointArgs};
use crate::field::{sym_multiplicity, FieldError, Layout, TensorField, Variance, SYM_PAIRS};
use crate::geometry::{GeometryError, MetricBundle};
use crate::grid::DIM;
use crate::point_metric::{
    invert_sym4, require_lorentzian, unpack_sym, ConnectionPoint, MetricPoint,
};
use crate::residual::{reference_scale, Residual};
use crate::stencil::divergence;
use crate::variational::{SpinStructure, System, VariationalError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GravError {
    #[error("metric geometry failed: {0}")]
    Geometry(#[from] GeometryError),
    #[error("variational system rejected the metric: {0}")]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Scalar density of the metric sector: the volume factor times the
/// quadratic connection invariant. First order in metric gradients, so the
/// variational engine needs no boundary bookkeeping.
#[derive(Debug, Clone)]
pub struct GravDensity {
    specs: Vec<FieldSpec>,
}

impl GravDensity {
    #[must_use]
    pub fn new() -> Self {
        Self {
            specs: vec![FieldSpec {
                name: "g",
                variances: vec![Variance::Down, Variance::Down],
                layout: Layout::SymPair,
            }],
        }
    }
}

impl Default for GravDensity {
    fn default() -> Self {
        Self::new()
    }
}

impl Density for GravDensity {
    fn fields(&self) -> &[FieldSpec] {
        &self.specs
    }

    fn eval(&self, args: &PointArgs) -> f64 {
        let (g, dg) = metric_args(args, 0);
        ConnectionPoint::new(&g, &dg)
            .expect("metric accepted by validate")
            .grav_density()
    }

    fn d_value(&self, args: &PointArgs, field: usize, out: &mut [f64]) {
        debug_assert_eq!(field, 0);
        let (g, dg) = metric_args(args, 0);
        let point = MetricPoint::new(&g, &dg).expect("metric accepted by validate");
        let dv = point.dvalue_grav();
        for (c, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            out[c] = dv[a][b];
        }
    }

    fn d_grad(&self, args: &PointArgs, field: usize, out: &mut [f64]) {
        debug_assert_eq!(field, 0);
        let (g, dg) = metric_args(args, 0);
        let point = MetricPoint::new(&g, &dg).expect("metric accepted by validate");
        let h = point.h_grav();
        for (c, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            for m in 0..DIM {
                out[c * DIM + m] = h[a][b][m];
            }
        }
    }

    fn validate(&self, args: &PointArgs) -> Result<(), String> {
        let (g, _) = metric_args(args, 0);
        invert_sym4(&g).map_err(|e| e.to_string())?;
        require_lorentzian(&g).map_err(|e| e.to_string())
    }
}

/// Worst relative deviation of the boundary-vector gradient partials from a
/// centered numeric bump, for the two candidate readings of the contracted
/// closed form.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPartialOracle {
    /// Closed form whose trace term uses the Kronecker delta.
    pub kronecker_reading: f64,
    /// Same form with the trace term lowered through the constant background
    /// metric instead; kept as the rejected alternative.
    pub background_reading: f64,
    /// Scale of the closed-form field the deviations are relative to.
    pub reference: f64,
}

/// The metric sector on one grid: a geometry bundle and a variational
/// system over the same field, with cross-checks between the two.
pub struct GravSector {
    pub bundle: MetricBundle,
    pub system: System,
}

impl GravSector {
    pub fn new(g: &TensorField) -> Result<Self, GravError> {
        let bundle = MetricBundle::new(g)?;
        let system = System::new(
            Box::new(GravDensity::new()),
            vec![g.clone()],
            vec![SpinStructure::MetricPair],
        )?;
        Ok(Self { bundle, system })
    }

    /// Momentum conjugate to the metric gradient, rebuilt from geometry
    /// fields: `-g^{ab} B^m / 2 + sqrt_g (Gamma^{mab} - (g^{ma} J^b +
    /// g^{mb} J^a) / 2)` with `J^b = Gamma^{sb}_s`.
    pub fn momentum_closed(&self) -> Result<TensorField, GravError> {
        let bundle = &self.bundle;
        let j = bundle.gamma_uu.contract(0, 2)?;
        let sq = &bundle.sqrt_g;
        let mut out = bundle.g_inv.outer(&bundle.b)?.scaled(-0.5);
        out.axpy(
            1.0,
            &bundle.gamma_uuu.permute(&[1, 2, 0])?.mul_scalar_field(sq)?,
        )?;
        let gj = bundle.g_inv.outer(&j)?;
        out.axpy(-0.5, &gj.permute(&[1, 2, 0])?.mul_scalar_field(sq)?)?;
        out.axpy(-0.5, &gj.permute(&[2, 1, 0])?.mul_scalar_field(sq)?)?;
        Ok(out)
    }

    /// Engine momentum against the closed form. Shared stencils, so this is
    /// a rounding-level check.
    pub fn momentum_representation(&self) -> Result<Residual, GravError> {
        let engine = self.system.h_field(0);
        let closed = self.momentum_closed()?;
        let reference = reference_scale(&[&engine, &closed]);
        Ok(Residual::new(engine.sub(&closed)?, reference))
    }

    /// Energy tensor written through the densitized metric: `V_a d_s h^{am}
    /// - Gamma^m_ab d_s h^{ab} - delta^m_s L`. The gradient of `h` is the
    /// chain-rule field, so this equals the engine energy to rounding.
    pub fn energy_closed(&self) -> Result<TensorField, GravError> {
        let bundle = &self.bundle;
        let mut out = bundle.v.contract_between(&bundle.dh_up, &[(0, 0)])?;
        out.axpy(
            -1.0,
            &bundle
                .gamma_up
                .contract_between(&bundle.dh_up, &[(1, 0), (2, 1)])?,
        )?;
        out.axpy(
            -1.0,
            &TensorField::kronecker(&self.bundle.grid).mul_scalar_field(&bundle.grav_density)?,
        )?;
        Ok(out)
    }

    /// Engine energy tensor against the densitized-metric form.
    pub fn energy_representation(&self) -> Result<Residual, GravError> {
        let engine = self.system.energy();
        let closed = self.energy_closed()?;
        let reference = reference_scale(&[&engine, &closed]);
        Ok(Residual::new(engine.sub(&closed)?, reference))
    }

    /// Euler derivative through the curvature path: minus the densitized
    /// Einstein tensor. Curvature carries second stencil derivatives, so
    /// against the engine's first-order Euler derivative this residual is
    /// truncation-limited.
    pub fn euler_curvature(&self) -> Result<TensorField, GravError> {
        Ok(self
            .bundle
            .einstein_upper
            .mul_scalar_field(&self.bundle.sqrt_g)?
            .scaled(-1.0))
    }

    pub fn euler_comparison(&self) -> Result<Residual, GravError> {
        let engine = self.system.euler(0).expand_sym();
        let curvature = self.euler_curvature()?;
        let reference = reference_scale(&[&engine, &curvature]);
        Ok(Residual::new(engine.sub(&curvature)?, reference))
    }

    /// Divergence of the engine energy tensor balanced against the Euler
    /// derivative contracted with the metric gradient.
    #[must_use]
    pub fn translation_identity(&self) -> Residual {
        self.system.identity_translation()
    }

    /// Defect of the symmetrized auxiliary tensor against the divergence of
    /// its densitized-metric bracket: `(K^{ab}_l + K^{ba}_l) / 2 -
    /// d_m [delta^a_l h^{mb} / 2 + delta^b_l h^{ma} / 2 - delta^m_l h^{ab}]`.
    pub fn symmetrized_aux_identity(&self) -> Result<Residual, GravError> {
        let lhs = self.system.k_aux().symmetrize_pair(0, 1)?;
        let grid = &self.bundle.grid;
        let ohk = TensorField::kronecker(grid).outer(&self.bundle.h_up)?;
        let mut bracket = ohk.permute(&[0, 3, 1, 2])?.scaled(0.5);
        bracket.axpy(0.5, &ohk.permute(&[3, 0, 1, 2])?)?;
        bracket.axpy(-1.0, &ohk.permute(&[2, 3, 1, 0])?)?;
        let rhs = divergence(&bracket, 3)?;
        let reference = reference_scale(&[&lhs, &rhs]);
        Ok(Residual::new(lhs.sub(&rhs)?, reference))
    }

    /// Double divergence of the auxiliary tensor. Zero in the continuum;
    /// the reference scale is the single divergence it contracts away.
    pub fn aux_double_divergence(&self) -> Result<Residual, GravError> {
        let first = divergence(&self.system.k_aux(), 0)?;
        let second = divergence(&first, 0)?;
        let reference = first.linf();
        Ok(Residual::new(second, reference))
    }

    /// The sector's central statement: energy tensor plus twice the
    /// metric-contracted Euler derivative plus the auxiliary divergence
    /// vanishes. Zero in the continuum, truncation-limited on the lattice.
    pub fn vanishing_energy_momentum(&self) -> Result<Residual, GravError> {
        let energy = self.system.energy();
        let gs = self.system.gs();
        let aux = divergence(&self.system.k_aux(), 0)?;
        let reference = reference_scale(&[&energy, &gs, &aux]);
        let z = energy.add(&gs)?.add(&aux)?;
        Ok(Residual::new(z, reference))
    }

    /// Divergence form of the contracted curvature identity: `2 d_b
    /// (G^{ba} g_{al}) - G^{ab} dg_ab,l` with `G` the curvature-path Euler
    /// derivative.
    pub fn euler_divergence_identity(&self) -> Result<Residual, GravError> {
        let g0 = self.euler_curvature()?;
        let mixed = g0.apply_metric(1, &self.bundle.g)?;
        let lhs = divergence(&mixed, 0)?.scaled(2.0);
        let rhs = g0.contract_between(&self.bundle.dg, &[(0, 0), (1, 1)])?;
        let reference = reference_scale(&[&lhs, &rhs]);
        Ok(Residual::new(lhs.sub(&rhs)?, reference))
    }

    /// The divergence-form identity above against the geometry layer's
    /// densitized formulation of the same statement. The two builds share
    /// every field, so they cancel to rounding.
    pub fn euler_divergence_cross(&self) -> Result<Residual, GravError> {
        let here = self.euler_divergence_identity()?;
        let geometry = self.bundle.contracted_bianchi()?;
        let combined = here.field.add(&geometry.field.scaled(2.0))?;
        let reference = here.reference.max(geometry.reference);
        Ok(Residual::new(combined, reference))
    }

    /// Superpotential written as the divergence of a constant-background
    /// bracket in the densitized metric: `d_s [eta^{as} h^{ml} + eta^{ms}
    /// h^{al} - eta^{ma} h^{sl} - eta^{sl} h^{ma}]`, slots `[l][m][a]`.
    pub fn superpotential_bracket(&self) -> Result<TensorField, GravError> {
        let grid = &self.bundle.grid;
        let oh = TensorField::eta(grid, Variance::Up).outer(&self.bundle.h_up)?;
        let mut bracket = oh.permute(&[3, 2, 0, 1])?;
        bracket.axpy(1.0, &oh.permute(&[3, 0, 2, 1])?)?;
        bracket.axpy(-1.0, &oh.permute(&[3, 0, 1, 2])?)?;
        bracket.axpy(-1.0, &oh.permute(&[1, 2, 3, 0])?)?;
        Ok(divergence(&bracket, 3)?)
    }

    /// Engine superpotential against the bracket divergence. The engine
    /// side is algebraic in the auxiliary tensor while the bracket side
    /// differentiates the densitized metric directly, so the two agree only
    /// up to truncation.
    pub fn superpotential_comparison(&self) -> Result<Residual, GravError> {
        let engine = self.system.w();
        let bracket = self.superpotential_bracket()?;
        let reference = reference_scale(&[&engine, &bracket]);
        Ok(Residual::new(engine.sub(&bracket)?, reference))
    }

    /// Invariant remainder tensor from the bracket superpotential. Both
    /// derivative slots are plain stencils, so its antisymmetric part
    /// cancels exactly and its divergence telescopes to rounding.
    pub fn remainder_bracket(&self) -> Result<TensorField, GravError> {
        Ok(divergence(&self.superpotential_bracket()?, 0)?)
    }

    /// Closed form of the boundary-vector gradient partials contracted with
    /// the metric: slots `[m][b][a][l]` for the partial of `B^m` in the
    /// `(a, r), b` gradient slot times `g_{rl}`.
    pub fn boundary_partial_closed(&self) -> Result<TensorField, GravError> {
        let grid = &self.bundle.grid;
        let ohk = TensorField::kronecker(grid).outer(&self.bundle.h_up)?;
        let mut out = ohk.permute(&[2, 3, 0, 1])?.scaled(-1.0);
        out.axpy(0.5, &ohk.permute(&[2, 0, 3, 1])?)?;
        out.axpy(0.5, &ohk.permute(&[0, 3, 2, 1])?)?;
        Ok(out)
    }

    /// Numeric arbitration between the two readings of the trace term in
    /// the boundary-partial closed form: bump each gradient slot of the
    /// boundary kernel, contract with the metric, and compare against both
    /// candidates. Samples `samples` points spread evenly over the lattice.
    pub fn boundary_partial_oracle(
        &self,
        samples: usize,
        step: f64,
    ) -> Result<BoundaryPartialOracle, GravError> {
        let closed = self.boundary_partial_closed()?;
        let eta_up = TensorField::eta(&self.bundle.grid, Variance::Up);
        let mixed = eta_up.contract_between(&self.bundle.g, &[(1, 0)])?;
        let alt_trace = mixed.outer(&self.bundle.h_up)?.permute(&[0, 3, 2, 1])?;
        let delta_trace = TensorField::kronecker(&self.bundle.grid)
            .outer(&self.bundle.h_up)?
            .permute(&[0, 3, 2, 1])?;
        let background = closed
            .sub(&delta_trace.scaled(0.5))?
            .add(&alt_trace.scaled(0.5))?;
        let reference = reference_scale(&[&closed, &background]);

        let n_points = self.bundle.grid.n_points();
        let stride = (n_points / samples.max(1)).max(1);
        let mut worst_kron = 0.0f64;
        let mut worst_back = 0.0f64;
        for point in (0..n_points).step_by(stride).take(samples) {
            let mut g = [0.0f64; 10];
            let mut dg = [[0.0f64; 4]; 10];
            for c in 0..10 {
                g[c] = self.bundle.g.comp(c)[point];
                for axis in 0..DIM {
                    dg[c][axis] = self.bundle.dg_packed[axis].comp(c)[point];
                }
            }
            let gf = unpack_sym(&g);
            let mut partials = [[[[0.0f64; DIM]; DIM]; DIM]; DIM];
            for c in 0..10 {
                let (a, r) = SYM_PAIRS[c];
                let mult = sym_multiplicity(c);
                for axis in 0..DIM {
                    let delta = step * dg[c][axis].abs().max(1.0);
                    let mut up = dg;
                    up[c][axis] += delta;
                    let mut dn = dg;
                    dn[c][axis] -= delta;
                    let b_up = MetricPoint::new(&g, &up)
                        .expect("metric accepted at construction")
                        .b;
                    let b_dn = MetricPoint::new(&g, &dn)
                        .expect("metric accepted at construction")
                        .b;
                    for m in 0..DIM {
                        let partial = (b_up[m] - b_dn[m]) / (2.0 * delta) / mult;
                        partials[m][a][r][axis] = partial;
                        partials[m][r][a][axis] = partial;
                    }
                }
            }
            for m in 0..DIM {
                for axis in 0..DIM {
                    for a in 0..DIM {
                        for l in 0..DIM {
                            let mut numeric = 0.0;
                            for r in 0..DIM {
                                numeric += partials[m][a][r][axis] * gf[r][l];
                            }
                            let multi = [m, axis, a, l];
                            worst_kron =
                                worst_kron.max((numeric - closed.get(&multi, point)).abs());
                            worst_back =
                                worst_back.max((numeric - background.get(&multi, point)).abs());
                        }
                    }
                }
            }
        }
        Ok(BoundaryPartialOracle {
            kronecker_reading: worst_kron / reference.max(f64::MIN_POSITIVE),
            background_reading: worst_back / reference.max(f64::MIN_POSITIVE),
            reference,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SYM_PACK;
    use crate::grid::{Grid, StencilOrder};

    const AMPS: [f64; 10] = [0.29, 0.13, 0.17, 0.21, 0.27, 0.11, 0.23, 0.31, 0.07, 0.37];
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
    const PHASES: [f64; 10] = [0.1, 0.5, 0.9, 1.3, 1.7, 2.1, 2.5, 2.9, 3.3, 3.7];

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

    fn sector(n: usize, eps: f64) -> GravSector {
        let grid = Grid::two_pi([n, n, 1, 1], StencilOrder::Two).unwrap();
        GravSector::new(&weak_metric(&grid, eps)).unwrap()
    }

    fn rate(coarse: f64, fine: f64) -> f64 {
        (coarse / fine).log2()
    }

    #[test]
    fn flat_sector_vanishes_exactly() {
        let grid = Grid::two_pi([8, 8, 1, 1], StencilOrder::Two).unwrap();
        let s = GravSector::new(&TensorField::eta(&grid, Variance::Down)).unwrap();
        assert_eq!(s.system.h_field(0).linf(), 0.0);
        assert_eq!(s.system.energy().linf(), 0.0);
        assert_eq!(s.system.euler(0).linf(), 0.0);
        assert_eq!(s.system.k_aux().linf(), 0.0);
        assert_eq!(s.system.w().linf(), 0.0);
        assert_eq!(s.system.t().linf(), 0.0);
        assert_eq!(s.translation_identity().linf(), 0.0);
        assert_eq!(s.vanishing_energy_momentum().unwrap().linf(), 0.0);
        assert_eq!(s.symmetrized_aux_identity().unwrap().linf(), 0.0);
        assert_eq!(s.euler_divergence_identity().unwrap().linf(), 0.0);
        assert_eq!(s.superpotential_comparison().unwrap().linf(), 0.0);
    }

    #[test]
    fn density_partials_match_numeric_bumps() {
        let density = GravDensity::new();
        let mut values = vec![vec![0.0f64; 10]];
        let mut grads = vec![vec![0.0f64; 40]];
        for c in 0..10 {
            let (a, b) = SYM_PAIRS[c];
            let base = if a != b {
                0.0
            } else if a == 0 {
                1.0
            } else {
                -1.0
            };
            values[0][c] = base + 0.03 * AMPS[c] * (1.7 * c as f64).sin();
            for axis in 0..DIM {
                grads[0][c * DIM + axis] = 0.05 * ((c * DIM + axis) as f64 * 0.61 + 0.2).cos();
            }
        }
        let worst = crate::density::partial_consistency(&density, &values, &grads, 1e-6);
        assert!(worst <= 1e-8, "worst {worst:.3e}");
    }

    #[test]
    fn momentum_matches_closed_assembly() {
        let s = sector(16, 0.05);
        let rel = s.momentum_representation().unwrap().relative();
        assert!(rel <= 1e-12, "rel {rel:.3e}");
    }

    #[test]
    fn energy_matches_densitized_form() {
        let s = sector(16, 0.05);
        let rel = s.energy_representation().unwrap().relative();
        assert!(rel <= 1e-12, "rel {rel:.3e}");
    }

    #[test]
    fn euler_paths_agree_at_stencil_order() {
        let coarse = sector(16, 0.05).euler_comparison().unwrap().relative();
        let fine = sector(32, 0.05).euler_comparison().unwrap().relative();
        let p = rate(coarse, fine);
        assert!(fine <= 5e-3, "fine {fine:.3e}");
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn translation_identity_converges() {
        let coarse = sector(16, 0.05).translation_identity().relative();
        let fine = sector(32, 0.05).translation_identity().relative();
        let p = rate(coarse, fine);
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn symmetrized_aux_matches_bracket_divergence() {
        let coarse = sector(16, 0.05)
            .symmetrized_aux_identity()
            .unwrap()
            .relative();
        let fine = sector(32, 0.05)
            .symmetrized_aux_identity()
            .unwrap()
            .relative();
        let p = rate(coarse, fine);
        assert!(fine <= 5e-3, "fine {fine:.3e}");
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn aux_double_divergence_converges() {
        let coarse = sector(32, 0.05).aux_double_divergence().unwrap().relative();
        let fine = sector(64, 0.05).aux_double_divergence().unwrap().relative();
        let p = rate(coarse, fine);
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn energy_momentum_tensor_vanishes_at_stencil_order() {
        let coarse = sector(32, 0.05)
            .vanishing_energy_momentum()
            .unwrap()
            .relative();
        let fine = sector(64, 0.05)
            .vanishing_energy_momentum()
            .unwrap()
            .relative();
        let p = rate(coarse, fine);
        assert!(fine <= 5e-4, "fine {fine:.3e}");
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn euler_divergence_identity_converges_and_matches_geometry_form() {
        let coarse = sector(32, 0.05);
        let fine = sector(64, 0.05);
        let rc = coarse.euler_divergence_identity().unwrap().relative();
        let rf = fine.euler_divergence_identity().unwrap().relative();
        let p = rate(rc, rf);
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
        let cross = fine.euler_divergence_cross().unwrap().relative();
        assert!(cross <= 1e-12, "cross {cross:.3e}");
    }

    #[test]
    fn superpotential_matches_bracket_divergence() {
        let coarse = sector(16, 0.05)
            .superpotential_comparison()
            .unwrap()
            .relative();
        let fine = sector(32, 0.05)
            .superpotential_comparison()
            .unwrap()
            .relative();
        let p = rate(coarse, fine);
        assert!(fine <= 5e-3, "fine {fine:.3e}");
        assert!((p - 2.0).abs() <= 0.5, "rate {p:.2}");
    }

    #[test]
    fn bracket_remainder_is_symmetric_and_conserved() {
        let s = sector(32, 0.05);
        let t = s.remainder_bracket().unwrap();
        let scale = t.linf();
        assert!(scale > 1e-3, "remainder unexpectedly small: {scale:.3e}");
        let asym = t.sub(&t.permute(&[1, 0]).unwrap()).unwrap().linf();
        assert!(asym <= 1e-13 * scale, "asym {asym:.3e}");
        let div = divergence(&t, 0).unwrap().linf();
        assert!(div <= 1e-11 * scale.max(1.0), "div {div:.3e}");
    }

    /// Both the single-divergence scale of the auxiliary tensor and its
    /// double divergence shrink at the stencil order here, so the branch
    /// comparison is resolution-stable; measured ratios sit near 0.3 at
    /// every tested size.
    #[test]
    fn em_tensor_takes_the_divergence_free_branch() {
        for n in [16usize, 32] {
            let em = sector(n, 0.05).system.em_tensor();
            assert_eq!(em.case, crate::variational::EmCase::AuxDivergenceFree);
            assert_eq!(em.correction.linf(), 0.0);
        }
    }

    #[test]
    fn boundary_partial_readings_separate() {
        let s = sector(12, 0.1);
        let oracle = s.boundary_partial_oracle(6, 1e-5).unwrap();
        assert!(
            oracle.kronecker_reading <= 1e-6,
            "kronecker reading {:.3e}",
            oracle.kronecker_reading
        );
        assert!(
            oracle.background_reading >= 1e-3,
            "background reading {:.3e}",
            oracle.background_reading
        );
    }

    #[test]
    fn functional_bump_matches_euler_derivative() {
        let grid = Grid::two_pi([8, 8, 1, 1], StencilOrder::Two).unwrap();
        let g = weak_metric(&grid, 0.05);
        let mut s = GravSector::new(&g).unwrap();
        let euler = s.system.euler(0);
        for comp in [0usize, 1, 4, 9] {
            for point in [3usize, 17, 40] {
                let fd = s.system.functional_derivative(0, comp, point, 1e-5);
                let expected = sym_multiplicity(comp) * euler.comp(comp)[point];
                assert!(
                    (fd - expected).abs() <= 1e-6,
                    "comp {comp} point {point}: fd {fd:.6e} vs {expected:.6e}"
                );
            }
        }
    }
}
