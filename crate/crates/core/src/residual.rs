//! Residual bookkeeping for identity checks.

use crate::field::TensorField;

/// The pointwise defect of one identity, together with the scale of the
/// largest term that entered it. Reporting residuals relative to that scale
/// keeps checks meaningful when the fields themselves are small.
#[derive(Debug, Clone)]
pub struct Residual {
    pub field: TensorField,
    pub reference: f64,
}

impl Residual {
    #[must_use]
    pub fn new(field: TensorField, reference: f64) -> Self {
        Self { field, reference }
    }

    #[must_use]
    pub fn linf(&self) -> f64 {
        self.field.linf()
    }

    #[must_use]
    pub fn l2(&self) -> f64 {
        self.field.l2()
    }

    /// Largest defect divided by the reference scale.
    #[must_use]
    pub fn relative(&self) -> f64 {
        self.linf() / self.reference.max(f64::MIN_POSITIVE)
    }
}

/// Largest absolute entry across the constituent terms of an identity.
#[must_use]
pub fn reference_scale(terms: &[&TensorField]) -> f64 {
    terms.iter().fold(0.0f64, |acc, f| acc.max(f.linf()))
}
