//! Synthetic fixtures: stochastic block model graphs and clustered
//! Gaussian embeddings. Both are pure functions of their config, so a
//! seed pins an entire experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seeds::derive;
use crate::sparse::DenseMatrix;

#[derive(Clone, Copy, Debug)]
pub struct SbmConfig {
    pub communities: usize,
    pub nodes_per_community: usize,
    /// Edge probability inside a community; must exceed `p_out`.
    pub p_in: f64,
    /// Edge probability across communities.
    pub p_out: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn n_nodes(&self) -> usize {
        self.communities * self.nodes_per_community
    }
}

/// Sample a stochastic block model: every unordered pair `{i, j}` draws
/// an edge with probability `p_in` or `p_out` depending on whether the
/// endpoints share a community. Returns the edges and per-node community
/// labels.
pub fn gen_sbm(cfg: &SbmConfig) -> Result<(Vec<(u32, u32)>, Vec<u32>)> {
    if cfg.communities == 0 || cfg.nodes_per_community == 0 {
        return Err(Error::Domain("block model needs at least one node".into()));
    }
    for (name, p) in [("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Range(format!("{name}={p} is not a probability")));
        }
    }
    if cfg.p_out >= cfg.p_in {
        return Err(Error::Domain(format!(
            "p_out={} must be below p_in={} or communities carry no signal",
            cfg.p_out, cfg.p_in
        )));
    }
    let n = cfg
        .communities
        .checked_mul(cfg.nodes_per_community)
        .filter(|&n| u32::try_from(n).is_ok())
        .ok_or_else(|| Error::Domain("block model size overflows node ids".into()))?;

    let labels: Vec<u32> = (0..n).map(|v| (v / cfg.nodes_per_community) as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::new();
    // One draw per pair, in a fixed order, keeps the sample a pure
    // function of the seed.
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    Ok((edges, labels))
}

#[derive(Clone, Copy, Debug)]
pub struct ClusterEmbConfig {
    pub clusters: usize,
    pub points_per_cluster: usize,
    pub dim: usize,
    /// Cluster centers are `N(0, center_scale^2)` per coordinate.
    pub center_scale: f64,
    /// Points scatter around their center by `N(0, noise_scale^2)`.
    /// Must stay below `center_scale` or the clusters wash out.
    pub noise_scale: f64,
    pub seed: u64,
}

impl ClusterEmbConfig {
    pub fn n_rows(&self) -> usize {
        self.clusters * self.points_per_cluster
    }

    /// Cluster of row `r`; rows are grouped into contiguous blocks.
    pub fn cluster_of(&self, r: usize) -> usize {
        r / self.points_per_cluster
    }
}

/// Sample points around seeded Gaussian centers, `points_per_cluster`
/// rows per cluster in cluster order. Generated in `f64`, stored as
/// `f32`.
pub fn gen_cluster_embeddings(cfg: &ClusterEmbConfig) -> Result<DenseMatrix> {
    if cfg.clusters == 0 || cfg.points_per_cluster == 0 || cfg.dim == 0 {
        return Err(Error::Domain(
            "cluster fixture needs clusters, points_per_cluster, dim >= 1".into(),
        ));
    }
    if !(cfg.center_scale > 0.0) || !(cfg.noise_scale >= 0.0) {
        return Err(Error::Domain("scales must be positive".into()));
    }
    if cfg.noise_scale >= cfg.center_scale {
        return Err(Error::Domain(format!(
            "noise_scale {} must be below center_scale {}",
            cfg.noise_scale, cfg.center_scale
        )));
    }

    let mut center_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 0));
    let centers: Vec<f64> = (0..cfg.clusters * cfg.dim)
        .map(|_| center_rng.sample::<f64, _>(StandardNormal) * cfg.center_scale)
        .collect();

    let mut point_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 1));
    let mut out = DenseMatrix::zeros(cfg.n_rows(), cfg.dim);
    for r in 0..cfg.n_rows() {
        let k = cfg.cluster_of(r);
        let row = out.row_mut(r);
        for (t, slot) in row.iter_mut().enumerate() {
            let noise: f64 = point_rng.sample(StandardNormal);
            *slot = (centers[k * cfg.dim + t] + cfg.noise_scale * noise) as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::load_edge_list;
    use std::io::Write;

    #[test]
    fn sbm_labels_follow_block_layout() {
        let cfg = SbmConfig {
            communities: 3,
            nodes_per_community: 4,
            p_in: 0.5,
            p_out: 0.1,
            seed: 1,
        };
        let (_, labels) = gen_sbm(&cfg).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn sbm_extreme_probabilities_are_exact() {
        let cfg = SbmConfig {
            communities: 2,
            nodes_per_community: 5,
            p_in: 1.0,
            p_out: 0.0,
            seed: 3,
        };
        let (edges, labels) = gen_sbm(&cfg).unwrap();
        // two 5-cliques and nothing across
        assert_eq!(edges.len(), 2 * 10);
        for &(u, v) in &edges {
            assert!(u < v);
            assert_eq!(labels[u as usize], labels[v as usize]);
        }
    }

    #[test]
    fn sbm_edge_counts_track_the_densities() {
        let cfg = SbmConfig {
            communities: 4,
            nodes_per_community: 50,
            p_in: 0.3,
            p_out: 0.02,
            seed: 7,
        };
        let (edges, labels) = gen_sbm(&cfg).unwrap();
        let intra = edges.iter().filter(|&&(u, v)| labels[u as usize] == labels[v as usize]).count();
        let inter = edges.len() - intra;
        // 4 * C(50, 2) intra pairs, C(200, 2) - 4900 inter pairs
        let e_intra = 4.0 * 1225.0 * 0.3;
        let e_inter = (19900.0 - 4900.0) * 0.02;
        assert!((intra as f64 - e_intra).abs() < 0.15 * e_intra, "intra {intra}");
        assert!((inter as f64 - e_inter).abs() < 0.25 * e_inter, "inter {inter}");
    }

    #[test]
    fn sbm_is_deterministic_and_validates() {
        let cfg = SbmConfig {
            communities: 2,
            nodes_per_community: 20,
            p_in: 0.4,
            p_out: 0.05,
            seed: 11,
        };
        assert_eq!(gen_sbm(&cfg).unwrap(), gen_sbm(&cfg).unwrap());
        let other = SbmConfig { seed: 12, ..cfg };
        assert_ne!(gen_sbm(&cfg).unwrap().0, gen_sbm(&other).unwrap().0);

        assert!(matches!(
            gen_sbm(&SbmConfig { p_in: 1.5, ..cfg }),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            gen_sbm(&SbmConfig { p_out: -0.1, ..cfg }),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            gen_sbm(&SbmConfig { p_out: 0.4, ..cfg }),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            gen_sbm(&SbmConfig { communities: 0, ..cfg }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sbm_round_trips_through_the_edge_list_loader() {
        let cfg = SbmConfig {
            communities: 3,
            nodes_per_community: 10,
            p_in: 0.9,
            p_out: 0.05,
            seed: 5,
        };
        let (edges, _) = gen_sbm(&cfg).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (u, v) in &edges {
            writeln!(f, "{u} {v}").unwrap();
        }
        f.flush().unwrap();
        let adj = load_edge_list(f.path()).unwrap();
        // seed chosen so the last node is not isolated
        assert_eq!(adj.n_rows(), cfg.n_nodes());
        assert_eq!(adj.nnz(), 2 * edges.len());
    }

    #[test]
    fn zero_noise_collapses_each_cluster_to_its_center() {
        let cfg = ClusterEmbConfig {
            clusters: 3,
            points_per_cluster: 4,
            dim: 6,
            center_scale: 1.0,
            noise_scale: 0.0,
            seed: 2,
        };
        let x = gen_cluster_embeddings(&cfg).unwrap();
        for r in 0..x.rows {
            let anchor = cfg.cluster_of(r) * cfg.points_per_cluster;
            assert_eq!(x.row(r), x.row(anchor));
        }
        assert_ne!(x.row(0), x.row(4));
    }

    #[test]
    fn clusters_are_tighter_inside_than_across() {
        let cfg = ClusterEmbConfig {
            clusters: 4,
            points_per_cluster: 50,
            dim: 16,
            center_scale: 1.0,
            noise_scale: 0.2,
            seed: 9,
        };
        let x = gen_cluster_embeddings(&cfg).unwrap();
        let dist = |a: usize, b: usize| -> f64 {
            x.row(a)
                .iter()
                .zip(x.row(b))
                .map(|(&p, &q)| ((p - q) as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (mut within, mut wn) = (0.0, 0);
        let (mut across, mut an) = (0.0, 0);
        for a in (0..x.rows).step_by(7) {
            for b in (a + 1..x.rows).step_by(5) {
                let d = dist(a, b);
                if cfg.cluster_of(a) == cfg.cluster_of(b) {
                    within += d;
                    wn += 1;
                } else {
                    across += d;
                    an += 1;
                }
            }
        }
        assert!(within / wn as f64 * 2.0 < across / an as f64);
    }

    #[test]
    fn cluster_fixture_is_deterministic_and_validates() {
        let cfg = ClusterEmbConfig {
            clusters: 5,
            points_per_cluster: 10,
            dim: 8,
            center_scale: 1.0,
            noise_scale: 0.3,
            seed: 4,
        };
        let a = gen_cluster_embeddings(&cfg).unwrap();
        let b = gen_cluster_embeddings(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!((a.rows, a.cols), (50, 8));

        assert!(matches!(
            gen_cluster_embeddings(&ClusterEmbConfig { noise_scale: 1.0, ..cfg }),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            gen_cluster_embeddings(&ClusterEmbConfig { clusters: 0, ..cfg }),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            gen_cluster_embeddings(&ClusterEmbConfig { center_scale: 0.0, noise_scale: 0.0, ..cfg }),
            Err(Error::Domain(_))
        ));
    }
}
