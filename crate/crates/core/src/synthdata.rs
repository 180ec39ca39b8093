//! Zero-inflated log-normal mixture data with known moments.
//!
//! Cell `i` draws from `Rng::stream(seed, i)`: one uniform to pick the
//! component, then for each gene a standard normal followed by a uniform for
//! the dropout decision. A gene value is `0` with probability `dropout_prob[g]`
//! and `exp(μ_g + σ_g z)` otherwise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Component {
    pub weight: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GeneratorSpec {
    pub n_genes: usize,
    pub n_cells: usize,
    pub components: Vec<Component>,
    pub dropout_prob: Vec<f64>,
    pub seed: u64,
}

impl GeneratorSpec {
    /// A random but reproducible mixture: equal weights, `μ ∈ [0, 1.5)`,
    /// `σ ∈ [0.1, 0.4)` and dropout in `[0.05, 0.6)`, all drawn from
    /// `layout_seed`. The data seed starts equal to `layout_seed`.
    pub fn mixture_preset(
        n_genes: usize,
        n_cells: usize,
        n_components: usize,
        layout_seed: u64,
    ) -> Self {
        let mut rng = Rng::stream(layout_seed, u64::MAX);
        let w = 1.0 / n_components.max(1) as f64;
        let components = (0..n_components)
            .map(|_| Component {
                weight: w,
                mu: (0..n_genes).map(|_| 1.5 * rng.uniform()).collect(),
                sigma: (0..n_genes).map(|_| 0.1 + 0.3 * rng.uniform()).collect(),
            })
            .collect();
        let dropout_prob = (0..n_genes).map(|_| 0.05 + 0.55 * rng.uniform()).collect();
        GeneratorSpec {
            n_genes,
            n_cells,
            components,
            dropout_prob,
            seed: layout_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_genes == 0 || self.n_cells == 0 {
            return bad("n_genes and n_cells must be positive".into());
        }
        if self.components.is_empty() {
            return bad("at least one mixture component is required".into());
        }
        let mut total = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return bad(format!("component {k} has weight {}", c.weight));
            }
            if c.mu.len() != self.n_genes || c.sigma.len() != self.n_genes {
                return bad(format!("component {k} must give mu and sigma for every gene"));
            }
            if c.mu.iter().any(|m| !m.is_finite()) || c.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return bad(format!("component {k} has a non-finite mu or a negative sigma"));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {total}, not 1"));
        }
        if self.dropout_prob.len() != self.n_genes {
            return bad("dropout_prob must have one entry per gene".into());
        }
        if let Some(d) = self.dropout_prob.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return bad(format!("dropout probability {d} is outside [0, 1]"));
        }
        Ok(())
    }

    /// `(1 − d_g) Σ_k w_k exp(μ_kg + σ_kg²/2)`.
    pub fn expected_mean(&self, gene: usize) -> f64 {
        let mix: f64 = self
            .components
            .iter()
            .map(|c| c.weight * math::exp(c.mu[gene] + 0.5 * c.sigma[gene] * c.sigma[gene]))
            .sum();
        (1.0 - self.dropout_prob[gene]) * mix
    }
}

pub fn gene_names(n: usize) -> Vec<String> {
    (0..n).map(|g| format!("gene_{g}")).collect()
}

pub fn generate(spec: &GeneratorSpec) -> Result<ExpressionMatrix> {
    spec.validate()?;
    let n = spec.n_genes;
    let mut values = Vec::with_capacity(spec.n_cells * n);
    for cell in 0..spec.n_cells {
        let mut rng = Rng::stream(spec.seed, cell as u64);
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut comp = &spec.components[spec.components.len() - 1];
        for c in &spec.components {
            acc += c.weight;
            if u < acc {
                comp = c;
                break;
            }
        }
        for g in 0..n {
            let z = rng.normal();
            let drop = rng.uniform() < spec.dropout_prob[g];
            values.push(if drop {
                0.0
            } else {
                math::exp(comp.mu[g] + comp.sigma[g] * z)
            });
        }
    }
    let ids = (0..spec.n_cells).map(|i| format!("cell_{i}")).collect();
    ExpressionMatrix::new(spec.n_cells, values, gene_names(n), Some(ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn single(mu: f64, sigma: f64, dropout: Vec<f64>, cells: usize) -> GeneratorSpec {
        let n = dropout.len();
        GeneratorSpec {
            n_genes: n,
            n_cells: cells,
            components: vec![Component {
                weight: 1.0,
                mu: vec![mu; n],
                sigma: vec![sigma; n],
            }],
            dropout_prob: dropout,
            seed: 5,
        }
    }

    #[test]
    fn full_dropout_zeroes_gene() {
        let m = generate(&single(0.5, 0.3, vec![1.0, 0.0], 200)).unwrap();
        assert!(m.column(0).iter().all(|&v| v == 0.0));
        assert!(m.column(1).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_sigma_is_constant() {
        let m = generate(&single(0.7, 0.0, vec![0.3; 3], 100)).unwrap();
        let e = math::exp(0.7);
        assert!(m.values().iter().all(|&v| v == 0.0 || v == e));
    }

    #[test]
    fn dropout_rate_within_three_sigma() {
        let d = [0.1, 0.5, 0.8];
        let cells = 10_000;
        let m = generate(&single(0.0, 0.5, d.to_vec(), cells)).unwrap();
        for (g, &p) in d.iter().enumerate() {
            let zeros = m.column(g).iter().filter(|&&v| v == 0.0).count() as f64 / cells as f64;
            let sd = (p * (1.0 - p) / cells as f64).sqrt();
            assert!((zeros - p).abs() < 3.0 * sd, "gene {g}: {zeros} vs {p}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = GeneratorSpec::mixture_preset(6, 50, 2, 3);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let mut t = s.clone();
        t.seed = 4;
        assert_ne!(generate(&s).unwrap(), generate(&t).unwrap());
        assert_eq!(s.components, t.components);
    }

    #[test]
    fn invalid_specs() {
        let mut s = single(0.0, 1.0, vec![0.5], 10);
        s.components[0].weight = 0.9;
        assert!(matches!(generate(&s), Err(Error::InvalidSpec(_))));
        let mut s = single(0.0, 1.0, vec![1.5], 10);
        assert!(generate(&s).is_err());
        s.dropout_prob = vec![0.5, 0.5];
        assert!(generate(&s).is_err());
        let s = single(0.0, -1.0, vec![0.5], 10);
        assert!(generate(&s).is_err());
    }
}
