//! Pólya-gamma Gibbs update of the logistic coefficients `(α_β, β₁, β₂)`.
//!
//! Given `ω_k ~ PG(1, x_kᵀθ)` for every exam, the coefficients have a
//! Gaussian full conditional with precision `I/v₀ + Xᵀ Ω X` and mean
//! `precision⁻¹ Xᵀ κ`, where `κ_k = z_k − ½`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use psma_core::{log_psa_trajectory, PatientRecord, SubjectParams};

use crate::error::SamplerError;
use crate::pg::pg_draw;

/// Design rows and outcomes of every PET exam in the cohort.
#[derive(Debug, Clone, Default)]
pub struct LogisticData {
    pub rows: Vec<Vec<f64>>,
    pub z: Vec<bool>,
}

impl LogisticData {
    /// Rows `(cov_beta…, log x(t), t)` built from the current subject parameters.
    pub fn from_cohort(patients: &[PatientRecord<f64>], subjects: &[SubjectParams<f64>]) -> Self {
        let mut out = Self::default();
        for (p, sp) in patients.iter().zip(subjects) {
            for o in &p.pet_obs {
                let mut row = p.cov_beta.clone();
                row.push(log_psa_trajectory(sp, o.t));
                row.push(o.t);
                out.rows.push(row);
                out.z.push(o.z);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Gaussian full conditional of the coefficient vector.
#[derive(Debug, Clone)]
pub struct LogisticConditional {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl LogisticConditional {
    pub fn new(dim: usize, data: &LogisticData, omega: &[f64], prior_var: f64) -> Result<Self, SamplerError> {
        let mut precision = DMatrix::<f64>::identity(dim, dim) / prior_var;
        let mut rhs = DVector::<f64>::zeros(dim);
        for ((row, &z), &w) in data.rows.iter().zip(&data.z).zip(omega) {
            let x = DVector::from_column_slice(row);
            precision.ger(w, &x, &x, 1.0);
            rhs.axpy(if z { 0.5 } else { -0.5 }, &x, 1.0);
        }
        let chol = Cholesky::new(precision.clone())
            .ok_or_else(|| SamplerError::Numerical("logistic conditional precision is not positive definite".into()))?;
        let mean = chol.solve(&rhs);
        Ok(Self { mean, precision, chol })
    }

    /// `mean + L⁻ᵀ ε` with `precision = L Lᵀ`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.mean.len();
        let eps = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        let l = self.chol.l();
        let offset = l
            .transpose()
            .solve_upper_triangular(&eps)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + offset
    }
}

/// One Gibbs step: draws the Pólya-gamma auxiliaries at the current
/// coefficients, then new coefficients from the Gaussian conditional.
pub fn update_logistic_block<R: Rng + ?Sized>(
    rng: &mut R,
    data: &LogisticData,
    current: &[f64],
    prior_var: f64,
) -> Result<Vec<f64>, SamplerError> {
    let omega: Vec<f64> = data
        .rows
        .iter()
        .map(|row| {
            let eta: f64 = row.iter().zip(current).map(|(x, b)| x * b).sum();
            pg_draw(rng, eta)
        })
        .collect();
    let cond = LogisticConditional::new(current.len(), data, &omega, prior_var)?;
    Ok(cond.draw(rng).iter().copied().collect())
}
