use log::warn;
use rand::seq::index::{sample, sample_weighted};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fulfillment::FulfillmentRecord;
use crate::geometry::FaceId;

/// Draws up to `n` record indices without replacement with probability proportional to
/// `1 - f / f_conf`. When fewer than `n` records have positive weight only those are
/// returned; when none has, the draw is uniform. Indices come back sorted.
pub fn select_target_indices(records: &[FulfillmentRecord], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = records.iter().map(FulfillmentRecord::weight).collect();
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    let mut picked: Vec<usize> = if positive == 0 {
        if !records.is_empty() {
            warn!("all target weights are zero; selecting uniformly");
        }
        sample(&mut rng, records.len(), n.min(records.len())).into_vec()
    } else {
        if positive < n {
            warn!("only {positive} triangles have positive target weight, {n} requested");
        }
        sample_weighted(&mut rng, records.len(), |i| weights[i], n.min(positive))
            .expect("weights are finite and non-negative")
            .into_vec()
    };
    picked.sort_unstable();
    picked
}

/// Triangle ids of [`select_target_indices`].
pub fn select_targets(records: &[FulfillmentRecord], n: usize, seed: u64) -> Vec<FaceId> {
    select_target_indices(records, n, seed)
        .into_iter()
        .map(|i| records[i].triangle)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(triangle: FaceId, f: f64, f_conf: f64) -> FulfillmentRecord {
        FulfillmentRecord {
            triangle,
            f_cov: (f > 0.0) as u8,
            f_res: 0.0,
            f_unc: 0.0,
            f_conf,
            f,
            best: None,
            prior_confidence: false,
        }
    }

    #[test]
    fn weights() {
        assert_eq!(rec(0, 0.0, 0.8).weight(), 1.0);
        assert_eq!(rec(0, 0.8, 0.8).weight(), 0.0);
        assert_eq!(rec(0, 0.0, 0.0).weight(), 0.0);
    }

    #[test]
    fn fulfilled_triangles_are_never_drawn() {
        let records = vec![
            rec(0, 0.5, 0.5),
            rec(1, 0.0, 0.9),
            rec(2, 0.3, 0.3),
            rec(3, 0.1, 1.0),
        ];
        for seed in 0..200 {
            let t = select_targets(&records, 2, seed);
            assert_eq!(t, vec![1, 3]);
        }
        assert_eq!(select_targets(&records, 1, 5).len(), 1);
    }

    #[test]
    fn all_zero_falls_back_to_uniform() {
        let records = vec![rec(0, 0.5, 0.5), rec(1, 0.2, 0.2), rec(2, 0.3, 0.3)];
        assert_eq!(select_targets(&records, 2, 9).len(), 2);
    }
}
