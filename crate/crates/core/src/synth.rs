//! Seeded synthetic ranking data with a planted linear model.
//!
//! Each candidate's features are i.i.d. standard normal. Its latent score is
//! `w*ᵀx + σ·N(0,1)`. Within a query, the top `n_pos = max(1, ⌊f·m⌋)`
//! candidates by latent score get grade 3, the next `n_pos` get grade 1, and
//! the rest grade 0.
//!
//! Seed mixing: the planted vector is drawn from ChaCha8 stream 0 of `seed`,
//! and query `i` draws from stream `i + 1`, so queries are independent of
//! generation order.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureRecord, QueryGroup, DEFAULT_GRADE_MAX};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_queries: usize,
    pub n_cands_per_query: usize,
    pub dim: usize,
    pub positive_fraction: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Random unit vector when absent.
    #[serde(default)]
    pub planted_w: Option<Vec<f64>>,
}

impl SynthConfig {
    pub fn positives_per_query(&self) -> usize {
        ((self.positive_fraction * self.n_cands_per_query as f64).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.n_cands_per_query == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig("synthetic sizes must be positive".into()));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "positive_fraction {} outside (0, 1)",
                self.positive_fraction
            )));
        }
        if self.positive_fraction * (self.n_cands_per_query as f64) < 1.0 {
            return Err(Error::InvalidConfig(
                "positive_fraction leaves no positive candidate".into(),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        if let Some(w) = &self.planted_w {
            if w.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: w.len(),
                });
            }
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}

/// The planted weight vector `generate` uses for this config.
pub fn planted_weights(config: &SynthConfig) -> Vec<f64> {
    if let Some(w) = &config.planted_w {
        return w.clone();
    }
    let mut rng = stream_rng(config.seed, 0);
    loop {
        let w: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = norm_sq(&w).sqrt();
        if norm > 1e-12 {
            return w.into_iter().map(|v| v / norm).collect();
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let w = planted_weights(config);
    let m = config.n_cands_per_query;
    let n_pos = config.positives_per_query();
    let width = (config.n_queries.max(1) - 1).to_string().len().max(4);
    let cand_width = (m - 1).to_string().len().max(3);

    let groups = (0..config.n_queries)
        .map(|qi| {
            let mut rng = stream_rng(config.seed, qi as u64 + 1);
            let query_id = format!("q{qi:0width$}");
            let mut rows: Vec<(Vec<f64>, f64)> = (0..m)
                .map(|_| {
                    let x: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let latent = dot(&w, &x) + config.noise_sigma * noise;
                    (x, latent)
                })
                .collect();

            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| rows[b].1.total_cmp(&rows[a].1).then(a.cmp(&b)));
            let mut grades = vec![0u32; m];
            for (rank, &i) in order.iter().enumerate() {
                grades[i] = if rank < n_pos {
                    3
                } else if rank < 2 * n_pos {
                    1
                } else {
                    0
                };
            }

            let candidates = rows
                .drain(..)
                .zip(grades)
                .enumerate()
                .map(|(ci, ((features, _), relevance))| FeatureRecord {
                    query_id: query_id.clone(),
                    cand_id: format!("{query_id}-c{ci:0cand_width$}"),
                    relevance,
                    features,
                })
                .collect();
            QueryGroup::new(query_id, candidates)
        })
        .collect::<Result<Vec<_>>>()?;

    let provenance = format!(
        "synthetic: queries={} cands={} dim={} positive_fraction={} noise_sigma={} seed={}",
        config.n_queries, m, config.dim, config.positive_fraction, config.noise_sigma, config.seed
    );
    Dataset::new(groups, config.dim, DEFAULT_GRADE_MAX, provenance)
}
