//! Simulated UWB two-way ranging.
//!
//! Each measurement is the true initiator-responder distance plus one
//! Gaussian draw. A sweep visits every initiator-responder pair once,
//! initiator-major, mirroring round-robin TWR scheduling.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{apply_pose, Pose, TransceiverLayout, Vec3};

/// One initiator-responder distance sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeMeasurement {
    pub initiator_id: usize,
    pub responder_id: usize,
    /// Measured distance in meters, clamped to be non-negative.
    pub range: f64,
    pub timestamp: f64,
}

/// Additive zero-mean Gaussian range noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation in meters.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Self {
        assert!(sigma >= 0.0, "noise sigma must be non-negative");
        NoiseModel { sigma, seed }
    }

    pub fn noiseless() -> Self {
        NoiseModel { sigma: 0.0, seed: 0 }
    }
}

/// Round-robin pair order: every pair exactly once per cycle,
/// initiator-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangingSchedule {
    pub pairs: Vec<(usize, usize)>,
    /// Full sweeps per second.
    pub cycle_rate: f64,
}

/// Default full-sweep rate, typical of DW1000-class TWR with a handful
/// of pairs.
pub const DEFAULT_CYCLE_RATE_HZ: f64 = 10.0;

impl RangingSchedule {
    pub fn for_layout(layout: &TransceiverLayout, cycle_rate: f64) -> Self {
        let mut pairs = Vec::with_capacity(layout.num_initiators() * layout.num_responders());
        for i in 0..layout.num_initiators() {
            for j in 0..layout.num_responders() {
                pairs.push((i, j));
            }
        }
        RangingSchedule { pairs, cycle_rate }
    }
}

/// Distance between an initiator and a responder plus one Gaussian draw.
/// Negative noisy values are clamped to 0.
pub fn measure_range<R: Rng>(p_i: &Vec3, q_j: &Vec3, noise: &NoiseModel, rng: &mut R) -> f64 {
    let dist = p_i.distance(q_j);
    // Draw even when sigma is 0 so the stream position is independent of
    // the noise level.
    let normal = Normal::new(0.0, noise.sigma).expect("sigma validated at construction");
    (dist + normal.sample(rng)).max(0.0)
}

/// One full ranging sweep at time `t`: N*M measurements in schedule
/// order, all stamped with the same pose and timestamp (intra-sweep
/// motion neglected).
pub fn sweep<R: Rng>(
    layout: &TransceiverLayout,
    true_pose: &Pose,
    noise: &NoiseModel,
    t: f64,
    rng: &mut R,
) -> Vec<RangeMeasurement> {
    let mut out = Vec::with_capacity(layout.num_initiators() * layout.num_responders());
    for (i, offset) in layout.initiators.iter().enumerate() {
        let p_i = apply_pose(true_pose, offset);
        for (j, q_j) in layout.responders.iter().enumerate() {
            out.push(RangeMeasurement {
                initiator_id: i,
                responder_id: j,
                range: measure_range(&p_i, q_j, noise, rng),
                timestamp: t,
            });
        }
    }
    out
}

/// CSV header for measurement export.
pub const RANGES_CSV_HEADER: &str = "t,initiator_id,responder_id,range_m";

pub fn measurement_csv_line(m: &RangeMeasurement) -> String {
    format!("{},{},{},{}", m.timestamp, m.initiator_id, m.responder_id, m.range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidOffset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(n_init: usize, separation: f64) -> TransceiverLayout {
        let initiators = match n_init {
            1 => vec![RigidOffset::new(0.0, 0.0, 0.0).unwrap()],
            2 => vec![
                RigidOffset::new(0.2, 0.0, 0.0).unwrap(),
                RigidOffset::new(-0.2, 0.0, 0.0).unwrap(),
            ],
            _ => unreachable!(),
        };
        TransceiverLayout::new(
            initiators,
            crate::geometry::square_anchor_layout(separation, 0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_range_is_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let noise = NoiseModel::noiseless();
        let r = measure_range(
            &Vec3::new(0.0, 0.0, 3.0),
            &Vec3::new(0.0, 0.0, 0.0),
            &noise,
            &mut rng,
        );
        assert!((r - 3.0).abs() < 1e-12);
        let r = measure_range(&Vec3::new(1.0, 1.0, 1.0), &Vec3::ZERO, &noise, &mut rng);
        assert!((r - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noise_statistics_match_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = NoiseModel::new(0.10, 7);
        let p = Vec3::new(0.0, 0.0, 5.0);
        let q = Vec3::ZERO;
        let truth = 5.0;
        let n = 100_000;
        let errors: Vec<f64> = (0..n)
            .map(|_| measure_range(&p, &q, &noise, &mut rng) - truth)
            .collect();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.002, "mean {mean}");
        let std = var.sqrt();
        assert!((0.098..=0.102).contains(&std), "std {std}");
    }

    #[test]
    fn sweep_counts_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = NoiseModel::noiseless();
        let pose = Pose::new(Vec3::new(0.0, 0.0, 5.0), 0.0);

        let l = layout(2, 1.2);
        let ms = sweep(&l, &pose, &noise, 0.0, &mut rng);
        assert_eq!(ms.len(), 8);
        let sched = RangingSchedule::for_layout(&l, DEFAULT_CYCLE_RATE_HZ);
        let pairs: Vec<_> = ms.iter().map(|m| (m.initiator_id, m.responder_id)).collect();
        assert_eq!(pairs, sched.pairs);

        // single pair
        let l1 = TransceiverLayout::new(
            vec![RigidOffset::new(0.0, 0.0, 0.0).unwrap()],
            vec![Vec3::ZERO],
        )
        .unwrap();
        assert_eq!(sweep(&l1, &pose, &noise, 0.0, &mut rng).len(), 1);
    }

    #[test]
    fn sweep_noiseless_square_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = layout(1, 1.2);
        let pose = Pose::new(Vec3::new(0.0, 0.0, 5.0), 0.0);
        let ms = sweep(&l, &pose, &NoiseModel::noiseless(), 0.0, &mut rng);
        assert_eq!(ms.len(), 4);
        let expected = (0.6f64 * 0.6 * 2.0 + 25.0).sqrt();
        for m in &ms {
            assert!((m.range - expected).abs() < 1e-12);
            assert!((m.range - 5.0714889).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let l = layout(2, 3.0);
        let noise = NoiseModel::new(0.1, 42);
        let pose = Pose::new(Vec3::new(1.0, -2.0, 8.0), 0.3);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            (0..50).flat_map(|k| sweep(&l, &pose, &noise, k as f64 * 0.1, &mut rng)).collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.range.to_bits(), y.range.to_bits());
        }
    }

    #[test]
    fn negative_ranges_are_clamped() {
        // huge sigma makes negative draws likely; all outputs stay >= 0
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = NoiseModel::new(50.0, 3);
        let p = Vec3::new(0.0, 0.0, 0.5);
        for _ in 0..1000 {
            assert!(measure_range(&p, &Vec3::ZERO, &noise, &mut rng) >= 0.0);
        }
    }
}
