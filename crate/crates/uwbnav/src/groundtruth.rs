//! UAV tracking in sequential lidar point clouds: dead-reckoning
//! prediction, kd-tree nearest-neighbor gathering and centroid update.
//! Synthetic cloud generation stands in for the lidar.

use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::TrackError;
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudFrame {
    pub points: Vec<Vec3>,
    pub frame_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Neighbor-count default for the gathered return cluster.
pub const DEFAULT_K_NEIGHBORS: usize = 30;
/// Gate radius default around the predicted position.
pub const DEFAULT_MAX_RADIUS: f64 = 1.0;

// --- kd-tree -------------------------------------------------------------

struct KdNode {
    point: Vec3,
    axis: usize,
    left: Option<Box<KdNode>>,
    right: Option<Box<KdNode>>,
}

struct KdTree {
    root: Option<Box<KdNode>>,
}

fn axis_value(p: &Vec3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn build(points: &mut [Vec3], depth: usize) -> Option<Box<KdNode>> {
    if points.is_empty() {
        return None;
    }
    let axis = depth % 3;
    points.sort_by(|a, b| axis_value(a, axis).partial_cmp(&axis_value(b, axis)).unwrap());
    let mid = points.len() / 2;
    let point = points[mid];
    let (left, right) = points.split_at_mut(mid);
    let right = &mut right[1..];
    Some(Box::new(KdNode {
        point,
        axis,
        left: build(left, depth + 1),
        right: build(right, depth + 1),
    }))
}

impl KdTree {
    fn new(points: &[Vec3]) -> Self {
        let mut pts = points.to_vec();
        KdTree { root: build(&mut pts, 0) }
    }

    /// k nearest neighbors of `query` within `max_radius`.
    fn knn_within(&self, query: &Vec3, k: usize, max_radius: f64) -> Vec<Vec3> {
        // max-heap by distance, capped at k
        let mut heap: Vec<(f64, Vec3)> = Vec::with_capacity(k + 1);
        fn visit(
            node: &Option<Box<KdNode>>,
            query: &Vec3,
            k: usize,
            max_radius: f64,
            heap: &mut Vec<(f64, Vec3)>,
        ) {
            let Some(n) = node else { return };
            let d = n.point.distance(query);
            if d <= max_radius {
                heap.push((d, n.point));
                heap.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                heap.truncate(k);
            }
            let delta = axis_value(query, n.axis) - axis_value(&n.point, n.axis);
            let (near, far) = if delta < 0.0 { (&n.left, &n.right) } else { (&n.right, &n.left) };
            visit(near, query, k, max_radius, heap);
            let worst = if heap.len() == k { heap[k - 1].0 } else { max_radius };
            if delta.abs() <= worst {
                visit(far, query, k, max_radius, heap);
            }
        }
        visit(&self.root, query, k, max_radius, &mut heap);
        heap.into_iter().map(|(_, p)| p).collect()
    }
}

// --- tracking ------------------------------------------------------------

/// One tracking update: predict by dead reckoning, gather the nearest
/// returns within the gate, move the track to their centroid, and
/// re-estimate velocity by finite difference at the frame rate.
pub fn track_step(
    frame: &PointCloudFrame,
    prev: &TrackState,
    frame_rate: f64,
    k_neighbors: usize,
    max_radius: f64,
) -> Result<TrackState, TrackError> {
    if frame.points.is_empty() {
        return Err(TrackError::EmptyFrame);
    }
    let predicted = prev.position + prev.velocity.scale(1.0 / frame_rate);
    let tree = KdTree::new(&frame.points);
    let cluster = tree.knn_within(&predicted, k_neighbors, max_radius);
    if cluster.is_empty() {
        return Err(TrackError::TrackLost { predicted });
    }
    let mut centroid = Vec3::ZERO;
    for p in &cluster {
        centroid = centroid + *p;
    }
    centroid = centroid.scale(1.0 / cluster.len() as f64);
    let velocity = (centroid - prev.position).scale(frame_rate);
    Ok(TrackState { position: centroid, velocity })
}

/// Axis-aligned bounds for clutter generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

/// Synthetic lidar frame: Gaussian cluster around the UAV plus uniform
/// clutter inside `bounds`.
pub fn synth_cloud<R: Rng>(
    uav_position: &Vec3,
    n_points: usize,
    spread: f64,
    clutter: usize,
    bounds: &Bounds,
    rng: &mut R,
) -> PointCloudFrame {
    assert!(n_points >= 1);
    let normal = Normal::new(0.0, spread.max(0.0)).expect("spread must be finite");
    let mut points = Vec::with_capacity(n_points + clutter);
    for _ in 0..n_points {
        points.push(Vec3::new(
            uav_position.x + normal.sample(rng),
            uav_position.y + normal.sample(rng),
            uav_position.z + normal.sample(rng),
        ));
    }
    for _ in 0..clutter {
        points.push(Vec3::new(
            rng.random_range(bounds.min.x..=bounds.max.x),
            rng.random_range(bounds.min.y..=bounds.max.y),
            rng.random_range(bounds.min.z..=bounds.max.z),
        ));
    }
    PointCloudFrame { points, frame_time: 0.0 }
}

/// Synthetic sequence of frames following a moving target. Clutter is
/// rejection-sampled outside `exclusion_radius` of the target so it
/// cannot masquerade as UAV returns.
#[allow(clippy::too_many_arguments)]
pub fn synth_sequence<R: Rng>(
    start: &Vec3,
    velocity: &Vec3,
    n_frames: usize,
    frame_rate: f64,
    n_points: usize,
    spread: f64,
    clutter: usize,
    bounds: &Bounds,
    exclusion_radius: f64,
    rng: &mut R,
) -> (Vec<PointCloudFrame>, Vec<Vec3>) {
    let mut frames = Vec::with_capacity(n_frames);
    let mut truth = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = k as f64 / frame_rate;
        let pos = *start + velocity.scale(t);
        let mut frame = synth_cloud(&pos, n_points, spread, 0, bounds, rng);
        let mut placed = 0;
        while placed < clutter {
            let p = Vec3::new(
                rng.random_range(bounds.min.x..=bounds.max.x),
                rng.random_range(bounds.min.y..=bounds.max.y),
                rng.random_range(bounds.min.z..=bounds.max.z),
            );
            if p.distance(&pos) > exclusion_radius {
                frame.points.push(p);
                placed += 1;
            }
        }
        frame.frame_time = t;
        truth.push(pos);
        frames.push(frame);
    }
    (frames, truth)
}

// --- frame file formats --------------------------------------------------

/// Read a frame from CSV: one `x,y,z` line per point.
pub fn read_frame_csv(path: &Path, frame_time: f64) -> io::Result<PointCloudFrame> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}:{}: expected 3 fields", path.display(), lineno + 1),
            ));
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{}: {}", path.display(), lineno + 1, e),
                )
            })
        };
        points.push(Vec3::new(parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
    }
    Ok(PointCloudFrame { points, frame_time })
}

pub fn write_frame_csv(path: &Path, frame: &PointCloudFrame) -> io::Result<()> {
    let mut out = String::new();
    for p in &frame.points {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    std::fs::write(path, out)
}

/// Framed binary format: little-endian u32 point count, then
/// count x 3 x f64 coordinates.
pub fn read_frame_bin(path: &Path, frame_time: f64) -> io::Result<PointCloudFrame> {
    let mut file = std::fs::File::open(path)?;
    let mut count_buf = [0u8; 4];
    file.read_exact(&mut count_buf)?;
    let count = u32::from_le_bytes(count_buf) as usize;
    let mut points = Vec::with_capacity(count);
    let mut buf = [0u8; 24];
    for _ in 0..count {
        file.read_exact(&mut buf)?;
        points.push(Vec3::new(
            f64::from_le_bytes(buf[0..8].try_into().unwrap()),
            f64::from_le_bytes(buf[8..16].try_into().unwrap()),
            f64::from_le_bytes(buf[16..24].try_into().unwrap()),
        ));
    }
    Ok(PointCloudFrame { points, frame_time })
}

pub fn write_frame_bin(path: &Path, frame: &PointCloudFrame) -> io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&(frame.points.len() as u32).to_le_bytes())?;
    for p in &frame.points {
        file.write_all(&p.x.to_le_bytes())?;
        file.write_all(&p.y.to_le_bytes())?;
        file.write_all(&p.z.to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds() -> Bounds {
        Bounds { min: Vec3::new(-20.0, -20.0, 0.0), max: Vec3::new(20.0, 20.0, 30.0) }
    }

    #[test]
    fn static_cluster_tracks_to_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let center = Vec3::new(5.0, 0.0, 10.0);
        let frame = synth_cloud(&center, 50, 0.05, 0, &bounds(), &mut rng);
        let mut centroid = Vec3::ZERO;
        for p in &frame.points {
            centroid = centroid + *p;
        }
        centroid = centroid.scale(1.0 / frame.points.len() as f64);

        let prev = TrackState { position: center, velocity: Vec3::ZERO };
        let next = track_step(&frame, &prev, 10.0, 100, 1.0).unwrap();
        assert!(next.position.distance(&centroid) < 1e-9);
        assert!(next.velocity.norm() < 1.0);
    }

    #[test]
    fn velocity_is_scaled_position_increment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = synth_cloud(&Vec3::new(1.0, 2.0, 3.0), 30, 0.1, 0, &bounds(), &mut rng);
        let prev = TrackState { position: Vec3::new(0.9, 2.0, 3.0), velocity: Vec3::ZERO };
        let next = track_step(&frame, &prev, 10.0, 30, 1.0).unwrap();
        let expected = (next.position - prev.position).scale(10.0);
        assert_eq!(next.velocity, expected);
    }

    #[test]
    fn teleport_loses_track() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = synth_cloud(&Vec3::new(10.0, 10.0, 10.0), 50, 0.1, 0, &bounds(), &mut rng);
        let prev = TrackState { position: Vec3::ZERO, velocity: Vec3::ZERO };
        let r = track_step(&frame, &prev, 10.0, 30, 1.0);
        assert!(matches!(r, Err(TrackError::TrackLost { .. })));
    }

    #[test]
    fn empty_frame_is_an_error() {
        let frame = PointCloudFrame { points: vec![], frame_time: 0.0 };
        let prev = TrackState { position: Vec3::ZERO, velocity: Vec3::ZERO };
        assert!(matches!(track_step(&frame, &prev, 10.0, 30, 1.0), Err(TrackError::EmptyFrame)));
    }

    #[test]
    fn moving_cluster_stays_tracked() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (frames, truth) = synth_sequence(
            &Vec3::new(0.0, 0.0, 5.0),
            &Vec3::new(1.0, 0.0, 0.0),
            100,
            10.0,
            60,
            0.1,
            12,
            &bounds(),
            1.0,
            &mut rng,
        );
        let mut state = TrackState { position: truth[0], velocity: Vec3::new(1.0, 0.0, 0.0) };
        for (frame, tp) in frames.iter().zip(&truth) {
            state = track_step(frame, &state, 10.0, DEFAULT_K_NEIGHBORS, DEFAULT_MAX_RADIUS)
                .expect("track must not drop");
            assert!(state.position.distance(tp) < 0.05 + 3.0 * 0.1 / (30.0f64).sqrt() + 0.05,
                "error {}", state.position.distance(tp));
        }
    }

    #[test]
    fn synth_cloud_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos = Vec3::new(1.0, -1.0, 4.0);
        // degenerate spread collapses onto the target
        let f = synth_cloud(&pos, 10, 0.0, 0, &bounds(), &mut rng);
        for p in &f.points {
            assert!(p.distance(&pos) < 1e-12);
        }
        let f = synth_cloud(&pos, 1, 0.1, 0, &bounds(), &mut rng);
        assert_eq!(f.points.len(), 1);
        // seeded centroid check
        let f = synth_cloud(&pos, 100, 0.1, 0, &bounds(), &mut rng);
        let mut c = Vec3::ZERO;
        for p in &f.points {
            c = c + *p;
        }
        c = c.scale(0.01);
        assert!(c.distance(&pos) < 0.05);
    }

    #[test]
    fn kdtree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = synth_cloud(&Vec3::new(0.0, 0.0, 5.0), 200, 2.0, 100, &bounds(), &mut rng);
        let tree = KdTree::new(&frame.points);
        for q in [Vec3::new(0.0, 0.0, 5.0), Vec3::new(3.0, -2.0, 8.0), Vec3::new(-10.0, 4.0, 1.0)] {
            let got = tree.knn_within(&q, 10, 3.0);
            let mut brute: Vec<(f64, Vec3)> =
                frame.points.iter().map(|p| (p.distance(&q), *p)).filter(|(d, _)| *d <= 3.0).collect();
            brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            brute.truncate(10);
            assert_eq!(got.len(), brute.len());
            for (g, (_, b)) in got.iter().zip(&brute) {
                assert!(g.distance(b) < 1e-12);
            }
        }
    }

    #[test]
    fn frame_roundtrip_csv_and_bin() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = synth_cloud(&Vec3::new(0.5, 0.25, 3.0), 20, 0.3, 5, &bounds(), &mut rng);

        let csv = dir.path().join("frame0.csv");
        write_frame_csv(&csv, &frame).unwrap();
        let back = read_frame_csv(&csv, 0.0).unwrap();
        assert_eq!(frame.points, back.points);

        let bin = dir.path().join("frame0.bin");
        write_frame_bin(&bin, &frame).unwrap();
        let back = read_frame_bin(&bin, 0.0).unwrap();
        assert_eq!(frame.points, back.points);
    }
}
