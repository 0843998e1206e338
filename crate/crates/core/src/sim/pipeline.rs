//! Series transforms of the simulation: augmentation, drift injection,
//! sparsity padding, ground-truth windowing and centralized interleaving.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// A site's monitored stream with its ground-truth drift mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSeries {
    pub site_id: String,
    pub values: Vec<Option<f64>>,
    pub drift_mask: Vec<bool>,
}

impl SiteSeries {
    /// Drift-free, gap-free series.
    pub fn clean(site_id: impl Into<String>, values: &[f64]) -> Self {
        Self {
            site_id: site_id.into(),
            values: values.iter().copied().map(Some).collect(),
            drift_mask: vec![false; values.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.values.iter().flatten().count()
    }

    fn observed(&self) -> Result<Vec<f64>, SimError> {
        self.values
            .iter()
            .map(|v| {
                v.ok_or_else(|| {
                    SimError::InvalidParameter(format!(
                        "series {} already contains nulls",
                        self.site_id
                    ))
                })
            })
            .collect()
    }
}

/// `ceil(fraction * n)`, tolerant of representation error in `fraction`.
pub fn ceil_fraction(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Inserts `ceil(fraction * n)` values resampled with replacement from the
/// original series at uniformly random positions.
pub fn augment<R: Rng + ?Sized>(
    series: &SiteSeries,
    fraction: f64,
    rng: &mut R,
) -> Result<SiteSeries, SimError> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(SimError::InvalidParameter(format!(
            "augmentation fraction {fraction}"
        )));
    }
    if series.drift_mask.iter().any(|&d| d) {
        return Err(SimError::InvalidParameter(
            "augmentation must precede drift injection".into(),
        ));
    }
    let original = series.observed()?;
    let extra = ceil_fraction(fraction, original.len());
    if original.is_empty() && extra > 0 {
        return Err(SimError::InvalidParameter(format!(
            "series {} is empty",
            series.site_id
        )));
    }
    let mut values = original.clone();
    for _ in 0..extra {
        let v = original[rng.gen_range(0..original.len())];
        let at = rng.gen_range(0..=values.len());
        values.insert(at, v);
    }
    Ok(SiteSeries::clean(series.site_id.clone(), &values))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Replaces one contiguous segment of `ceil(duration * n)` values with
/// draws from `Uniform(c - sd, c + sd)` clipped to `[0, 1]`, where
/// `c = mean * (1 + strength)` and mean/sd are those of the input series.
pub fn inject_drift<R: Rng + ?Sized>(
    series: &SiteSeries,
    strength: f64,
    duration: f64,
    rng: &mut R,
) -> Result<SiteSeries, SimError> {
    if !(strength > 0.0 && strength.is_finite()) {
        return Err(SimError::InvalidParameter(format!(
            "drift strength {strength}"
        )));
    }
    if !(duration > 0.0 && duration < 1.0) {
        return Err(SimError::InvalidParameter(format!(
            "drift duration {duration}"
        )));
    }
    let values = series.observed()?;
    let n = values.len();
    let len = ceil_fraction(duration, n);
    if len >= n {
        return Err(SimError::DriftExceedsSeries {
            segment: len,
            series: n,
        });
    }
    let (mean, sd) = mean_std(&values);
    let center = mean * (1.0 + strength);
    let start = rng.gen_range(0..=n - len);
    let mut out = series.clone();
    for i in start..start + len {
        let v = if sd > 0.0 {
            rng.gen_range(center - sd..center + sd)
        } else {
            center
        };
        out.values[i] = Some(v.clamp(0.0, 1.0));
        out.drift_mask[i] = true;
    }
    Ok(out)
}

/// Pads every series with nulls at random positions up to the longest length.
pub fn pad_sparsity<R: Rng + ?Sized>(all: Vec<SiteSeries>, rng: &mut R) -> Vec<SiteSeries> {
    let target = all.iter().map(SiteSeries::len).max().unwrap_or(0);
    all.into_iter()
        .map(|s| {
            let gaps = target - s.len();
            if gaps == 0 {
                return s;
            }
            let mut is_gap = vec![false; target];
            for i in index::sample(rng, target, gaps) {
                is_gap[i] = true;
            }
            let mut src = s.values.into_iter().zip(s.drift_mask);
            let (values, drift_mask) = is_gap
                .into_iter()
                .map(|gap| {
                    if gap {
                        (None, false)
                    } else {
                        src.next().expect("enough observations")
                    }
                })
                .unzip();
            SiteSeries {
                site_id: s.site_id,
                values,
                drift_mask,
            }
        })
        .collect()
}

/// Ground truth of one monitoring window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchTruth {
    pub batch_index: usize,
    pub n_valid: usize,
    pub n_drifted: usize,
    pub drift: bool,
}

/// Labels each full window: drifted iff drifted observations exceed
/// `rho` of its valid observations.
pub fn window_truth(
    values: &[Option<f64>],
    mask: &[bool],
    window_size: usize,
    rho: f64,
) -> Vec<BatchTruth> {
    values
        .chunks_exact(window_size)
        .zip(mask.chunks_exact(window_size))
        .enumerate()
        .map(|(batch_index, (vals, flags))| {
            let n_valid = vals.iter().flatten().count();
            let n_drifted = vals
                .iter()
                .zip(flags)
                .filter(|(v, &d)| v.is_some() && d)
                .count();
            BatchTruth {
                batch_index,
                n_valid,
                n_drifted,
                drift: n_valid > 0 && n_drifted as f64 > rho * n_valid as f64,
            }
        })
        .collect()
}

/// Round-robin merge of all sites by index, skipping nulls.
pub fn interleave(all: &[SiteSeries]) -> (Vec<Option<f64>>, Vec<bool>) {
    let len = all.iter().map(SiteSeries::len).max().unwrap_or(0);
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for t in 0..len {
        for s in all {
            if let Some(Some(v)) = s.values.get(t) {
                values.push(Some(*v));
                mask.push(s.drift_mask[t]);
            }
        }
    }
    (values, mask)
}
