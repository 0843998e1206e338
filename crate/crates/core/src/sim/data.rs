//! Per-site input data: synthetic prediction probabilities or externally
//! loaded series.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::SimError;

/// Reference (evaluation) and test predictions of one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteData {
    pub id: String,
    pub reference: Vec<f64>,
    pub test: Vec<f64>,
}

/// Beta-distributed synthetic site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSite {
    pub reference_size: usize,
    pub test_size: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl SyntheticSite {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

/// Four sites with the partition sizes of the original multi-center cohort.
pub fn default_synthetic_sites() -> Vec<(String, SyntheticSite)> {
    [
        ("DS-0", 39, 92, 2.0, 5.0),
        ("DS-1", 171, 128, 2.0, 4.0),
        ("DS-2", 11, 64, 3.0, 3.0),
        ("DS-3", 14, 18, 1.5, 5.0),
    ]
    .into_iter()
    .map(|(id, reference_size, test_size, alpha, beta)| {
        (
            id.to_string(),
            SyntheticSite {
                reference_size,
                test_size,
                alpha,
                beta,
            },
        )
    })
    .collect()
}

/// Where a site's predictions come from during a run.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteInput {
    /// Loaded once and reused by every replicate.
    Fixed(SiteData),
    /// Redrawn for every replicate.
    Synthetic { id: String, spec: SyntheticSite },
}

impl SiteInput {
    pub fn id(&self) -> &str {
        match self {
            SiteInput::Fixed(d) => &d.id,
            SiteInput::Synthetic { id, .. } => id,
        }
    }
}

/// Materializes the data of one replicate.
pub fn select_sites<R: Rng + ?Sized>(
    inputs: &[SiteInput],
    rng: &mut R,
) -> Result<Vec<SiteData>, SimError> {
    inputs
        .iter()
        .map(|input| match input {
            SiteInput::Fixed(d) => Ok(d.clone()),
            SiteInput::Synthetic { id, spec } => {
                generate_synthetic_sites(&[(id.clone(), spec.clone())], rng)
                    .map(|mut v| v.remove(0))
            }
        })
        .collect()
}

/// Draws reference and test predictions for every site from its Beta law.
pub fn generate_synthetic_sites<R: Rng + ?Sized>(
    specs: &[(String, SyntheticSite)],
    rng: &mut R,
) -> Result<Vec<SiteData>, SimError> {
    specs
        .iter()
        .map(|(id, spec)| {
            if spec.reference_size < 4 || spec.test_size < 4 {
                return Err(SimError::InvalidParameter(format!(
                    "site {id}: reference and test sizes must be at least 4"
                )));
            }
            let law = Beta::new(spec.alpha, spec.beta).map_err(|e| {
                SimError::InvalidParameter(format!("site {id}: invalid Beta parameters: {e}"))
            })?;
            let mut draw = |n| (0..n).map(|_| law.sample(rng)).collect::<Vec<f64>>();
            let reference = draw(spec.reference_size);
            let test = draw(spec.test_size);
            Ok(SiteData {
                id: id.clone(),
                reference,
                test,
            })
        })
        .collect()
}
