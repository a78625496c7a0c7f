use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub n_samples: usize,
    pub n_components: usize,
    /// Sample-covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub ratios: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl PcaReport {
    /// Fewest leading components whose cumulative share reaches `frac`.
    pub fn components_for(&self, frac: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| c >= frac - 1e-12)
            .map_or(self.n_components, |i| i + 1)
    }
}

pub fn pca_cumulative_variance(rows: &[Vec<f64>]) -> Result<PcaReport> {
    if rows.len() < 2 {
        return Err(Error::Shape("PCA needs at least 2 latents".into()));
    }
    let dim = rows[0].len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape(
            "latents must share a nonzero dimension".into(),
        ));
    }
    let n = rows.len();
    let mut x = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
    for j in 0..dim {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = (x.transpose() * &x) / (n - 1) as f64;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let trace: f64 = eig.iter().sum();
    if !(trace > 0.0) {
        return Err(Error::Shape("latents have zero variance".into()));
    }
    let ratios: Vec<f64> = eig.iter().map(|v| v / trace).collect();
    let mut acc = 0.0;
    let cumulative: Vec<f64> = ratios
        .iter()
        .map(|r| {
            acc += r;
            acc.min(1.0)
        })
        .collect();
    Ok(PcaReport {
        n_samples: n,
        n_components: dim,
        eigenvalues: eig,
        ratios,
        cumulative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rank_one_cloud() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)])
            .collect();
        let p = pca_cumulative_variance(&rows).unwrap();
        assert!(p.cumulative.iter().all(|c| (c - 1.0).abs() < 1e-9));
        assert_eq!(p.components_for(0.95), 1);
    }

    #[test]
    fn isotropic_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                vec![
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]
            })
            .collect();
        let p = pca_cumulative_variance(&rows).unwrap();
        assert!((p.ratios[0] - 0.5).abs() < 0.02, "{}", p.ratios[0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(pca_cumulative_variance(&[vec![1.0, 2.0]]).is_err());
        assert!(pca_cumulative_variance(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(pca_cumulative_variance(&[vec![1.0, 2.0], vec![1.0, 2.0]]).is_err());
    }
}
