//! Nonlinear least-squares estimators for tag position and full UAV pose
//! from UWB ranges, plus a brute-force grid-search oracle kept on an
//! independent code path for verification.
//!
//! Both solvers minimize an unweighted sum of squared range residuals
//! with Levenberg-Marquardt: multiplicative damping (x10 on reject, /10
//! on accept) on the normal equations. With coplanar ground anchors the
//! problem has a mirror solution below the anchor plane; candidate steps
//! are projected to z >= z_floor so the airborne solution is returned.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::geometry::{apply_pose, normalize_angle, Pose, TransceiverLayout, Vec3};
use crate::ranging::RangeMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when every gradient component is below this (absolute).
    pub gradient_tolerance: f64,
    /// Stop when an accepted step is shorter than this.
    pub step_tolerance: f64,
    /// Initial LM damping factor.
    pub damping_init: f64,
    /// Solutions are constrained to z >= z_floor (mirror rejection).
    pub z_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            gradient_tolerance: 1e-9,
            step_tolerance: 1e-10,
            damping_init: 1e-3,
            z_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub position: Vec3,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Range residuals and their Jacobian for the position-only problem:
/// r_k = z_k - ||p - q_{j(k)}||.
pub fn position_residual_jacobian(
    p: &Vec3,
    measurements: &[RangeMeasurement],
    responders: &[Vec3],
) -> (Vec<f64>, Vec<[f64; 3]>) {
    let mut res = Vec::with_capacity(measurements.len());
    let mut jac = Vec::with_capacity(measurements.len());
    for m in measurements {
        let q = &responders[m.responder_id];
        let d = *p - *q;
        let dist = d.norm();
        res.push(m.range - dist);
        if dist > 1e-12 {
            jac.push([-d.x / dist, -d.y / dist, -d.z / dist]);
        } else {
            jac.push([0.0, 0.0, 0.0]);
        }
    }
    (res, jac)
}

/// Residuals and Jacobian for the joint position+yaw problem. Parameter
/// order is (x, y, z, yaw).
pub fn pose_residual_jacobian(
    pose: &Pose,
    measurements: &[RangeMeasurement],
    layout: &TransceiverLayout,
) -> (Vec<f64>, Vec<[f64; 4]>) {
    let (s, c) = pose.yaw.sin_cos();
    let mut res = Vec::with_capacity(measurements.len());
    let mut jac = Vec::with_capacity(measurements.len());
    for m in measurements {
        let offset = &layout.initiators[m.initiator_id];
        let q = &layout.responders[m.responder_id];
        let p_i = apply_pose(pose, offset);
        let d = p_i - *q;
        let dist = d.norm();
        res.push(m.range - dist);
        if dist > 1e-12 {
            // d p_i / d yaw = R'(yaw) * offset
            let o = offset.body_offset;
            let dpx = -s * o.x - c * o.y;
            let dpy = c * o.x - s * o.y;
            jac.push([
                -d.x / dist,
                -d.y / dist,
                -d.z / dist,
                -(d.x * dpx + d.y * dpy) / dist,
            ]);
        } else {
            jac.push([0.0, 0.0, 0.0, 0.0]);
        }
    }
    (res, jac)
}

fn sum_sq(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum()
}

/// Generic damped Gauss-Newton loop over an N-dimensional parameter
/// vector. `eval` returns residuals and Jacobian rows; `project` maps a
/// candidate back into the feasible set before it is scored.
fn lm_minimize<const N: usize>(
    x0: SVector<f64, N>,
    config: &SolverConfig,
    eval: impl Fn(&SVector<f64, N>) -> (Vec<f64>, Vec<[f64; N]>),
    project: impl Fn(SVector<f64, N>) -> SVector<f64, N>,
) -> (SVector<f64, N>, f64, usize, bool) {
    let mut x = project(x0);
    let (mut res, mut jac) = eval(&x);
    let mut cost = sum_sq(&res);
    let mut lambda = config.damping_init;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        iterations += 1;

        let mut jtj = SMatrix::<f64, N, N>::zeros();
        let mut jtr = SVector::<f64, N>::zeros();
        for (r, row) in res.iter().zip(&jac) {
            for a in 0..N {
                jtr[a] += row[a] * r;
                for b in 0..N {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }

        // gradient of the cost is 2 J^T r
        if (0..N).all(|a| (2.0 * jtr[a]).abs() < config.gradient_tolerance) {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for a in 0..N {
                damped[(a, a)] += lambda;
            }
            let step = match damped.cholesky() {
                Some(chol) => chol.solve(&(-jtr)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let candidate = project(x + step);
            let (cres, cjac) = eval(&candidate);
            let ccost = sum_sq(&cres);
            if ccost < cost {
                let step_norm = (candidate - x).norm();
                x = candidate;
                res = cres;
                jac = cjac;
                cost = ccost;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if step_norm < config.step_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            // no improving step exists at any damping: at a (constrained)
            // local minimum up to numerical precision
            converged = converged || !accepted;
            break;
        }
    }
    (x, cost, iterations, converged)
}

fn check_responder_geometry(
    measurements: &[RangeMeasurement],
    responders: &[Vec3],
) -> Result<(), SolveError> {
    for m in measurements {
        if m.responder_id >= responders.len() {
            return Err(SolveError::UnknownResponder(m.responder_id));
        }
    }
    // distinct responders actually referenced
    let mut used: Vec<usize> = measurements.iter().map(|m| m.responder_id).collect();
    used.sort_unstable();
    used.dedup();
    let pts: Vec<&Vec3> = used.iter().map(|&j| &responders[j]).collect();
    if pts.len() < 3 {
        return Err(SolveError::Underdetermined { got: pts.len(), need: 3 });
    }
    // collinearity: scatter matrix must have rank >= 2
    let mut centroid = Vec3::ZERO;
    for p in &pts {
        centroid = centroid + **p;
    }
    centroid = centroid.scale(1.0 / pts.len() as f64);
    let mut scatter = SMatrix::<f64, 3, 3>::zeros();
    for p in &pts {
        let d = **p - centroid;
        let v = SVector::<f64, 3>::new(d.x, d.y, d.z);
        scatter += v * v.transpose();
    }
    let eig = scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = eig.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if ev[1] <= 1e-9 * ev[0].max(1.0) {
        return Err(SolveError::DegenerateGeometry);
    }
    Ok(())
}

/// Minimize the sum of squared range residuals over the tag position
/// (single-initiator case).
pub fn solve_position(
    measurements: &[RangeMeasurement],
    responders: &[Vec3],
    initial_guess: &Vec3,
    config: &SolverConfig,
) -> Result<PositionEstimate, SolveError> {
    if measurements.len() < 3 {
        return Err(SolveError::Underdetermined { got: measurements.len(), need: 3 });
    }
    check_responder_geometry(measurements, responders)?;

    let z_floor = config.z_floor;
    let x0 = SVector::<f64, 3>::new(initial_guess.x, initial_guess.y, initial_guess.z);
    let (x, cost, iterations, converged) = lm_minimize(
        x0,
        config,
        |v| position_residual_jacobian(&Vec3::new(v[0], v[1], v[2]), measurements, responders),
        |mut v| {
            if v[2] < z_floor {
                v[2] = z_floor;
            }
            v
        },
    );
    Ok(PositionEstimate {
        position: Vec3::new(x[0], x[1], x[2]),
        residual_rms: (cost / measurements.len() as f64).sqrt(),
        iterations,
        converged,
    })
}

/// Minimize the joint position+yaw objective. Needs at least two
/// distinct initiator offsets for yaw observability.
pub fn solve_pose(
    measurements: &[RangeMeasurement],
    layout: &TransceiverLayout,
    initial_guess: &Pose,
    config: &SolverConfig,
) -> Result<PoseEstimate, SolveError> {
    if layout.num_initiators() < 2 {
        return Err(SolveError::YawUnobservable);
    }
    if measurements.len() < 4 {
        return Err(SolveError::Underdetermined { got: measurements.len(), need: 4 });
    }
    for m in measurements {
        if m.initiator_id >= layout.num_initiators() {
            return Err(SolveError::UnknownInitiator(m.initiator_id));
        }
    }
    check_responder_geometry(measurements, &layout.responders)?;

    let z_floor = config.z_floor;
    let x0 = SVector::<f64, 4>::new(
        initial_guess.position.x,
        initial_guess.position.y,
        initial_guess.position.z,
        initial_guess.yaw,
    );
    let (x, cost, iterations, converged) = lm_minimize(
        x0,
        config,
        |v| {
            let pose = Pose { position: Vec3::new(v[0], v[1], v[2]), yaw: v[3] };
            pose_residual_jacobian(&pose, measurements, layout)
        },
        |mut v| {
            if v[2] < z_floor {
                v[2] = z_floor;
            }
            v[3] = normalize_angle(v[3]);
            v
        },
    );
    Ok(PoseEstimate {
        pose: Pose::new(Vec3::new(x[0], x[1], x[2]), x[3]),
        residual_rms: (cost / measurements.len() as f64).sqrt(),
        iterations,
        converged,
    })
}

/// Initial pose for [`solve_pose`]: solve each initiator's position
/// independently, average them for the position, and take the yaw from
/// the bearing between the first two per-initiator fixes.
pub fn pose_initial_guess(
    measurements: &[RangeMeasurement],
    layout: &TransceiverLayout,
    position_guess: &Vec3,
    config: &SolverConfig,
) -> Result<Pose, SolveError> {
    if layout.num_initiators() < 2 {
        return Err(SolveError::YawUnobservable);
    }
    let mut fixes: Vec<Option<Vec3>> = vec![None; layout.num_initiators()];
    for i in 0..layout.num_initiators() {
        let ms: Vec<RangeMeasurement> =
            measurements.iter().filter(|m| m.initiator_id == i).copied().collect();
        if ms.len() >= 3 {
            if let Ok(est) = solve_position(&ms, &layout.responders, position_guess, config) {
                fixes[i] = Some(est.position);
            }
        }
    }
    let known: Vec<(usize, Vec3)> =
        fixes.iter().enumerate().filter_map(|(i, f)| f.map(|p| (i, p))).collect();
    if known.len() < 2 {
        return Ok(Pose::new(*position_guess, 0.0));
    }
    let (ia, pa) = known[0];
    let (ib, pb) = known[1];
    let world = pb - pa;
    let body = layout.initiators[ib].body_offset - layout.initiators[ia].body_offset;
    let yaw = world.y.atan2(world.x) - body.y.atan2(body.x);

    let mut center = Vec3::ZERO;
    for (_, p) in &known {
        center = center + *p;
    }
    center = center.scale(1.0 / known.len() as f64);
    Ok(Pose::new(center, yaw))
}

const ORACLE_GRID_STEP: f64 = 0.01;
const ORACLE_REFINE_TOL: f64 = 1e-5;

/// Objective of the position problem, shared by the oracle only.
fn oracle_cost(p: &Vec3, anchors: &[(Vec3, f64)]) -> f64 {
    anchors.iter().map(|(q, z)| {
        let r = z - p.distance(q);
        r * r
    }).sum()
}

fn oracle_axes(center: f64, half_width: f64) -> Vec<f64> {
    let n = (2.0 * half_width / ORACLE_GRID_STEP).round() as usize + 1;
    (0..n).map(|i| center - half_width + i as f64 * ORACLE_GRID_STEP).collect()
}

/// Scan one z-slab of the grid, returning (cost, ix, iy) of its best
/// point. Written row-wise so the inner sqrt loop vectorizes.
fn oracle_scan_slab(
    xs: &[f64],
    ys: &[f64],
    z: f64,
    anchors: &[(Vec3, f64)],
    dx_sq: &[Vec<f64>],
    row: &mut Vec<f64>,
) -> (f64, usize, usize) {
    let n = xs.len();
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (iy, &y) in ys.iter().enumerate() {
        row.clear();
        row.resize(n, 0.0);
        for (a, (q, zm)) in anchors.iter().enumerate() {
            let dy = y - q.y;
            let dz = z - q.z;
            let c = dy * dy + dz * dz;
            let dxs = &dx_sq[a];
            for i in 0..n {
                let r = zm - (dxs[i] + c).sqrt();
                row[i] += r * r;
            }
        }
        for (ix, &cost) in row.iter().enumerate() {
            if cost < best.0 {
                best = (cost, ix, iy);
            }
        }
    }
    best
}

fn oracle_grid_search(
    anchors: &[(Vec3, f64)],
    center: &Vec3,
    half_width: f64,
) -> Vec3 {
    let xs = oracle_axes(center.x, half_width);
    let ys = oracle_axes(center.y, half_width);
    let zs = oracle_axes(center.z, half_width);

    let dx_sq: Vec<Vec<f64>> = anchors
        .iter()
        .map(|(q, _)| xs.iter().map(|x| (x - q.x) * (x - q.x)).collect())
        .collect();

    let slab = |iz: usize| {
        let mut row = Vec::new();
        let (cost, ix, iy) = oracle_scan_slab(&xs, &ys, zs[iz], anchors, &dx_sq, &mut row);
        (cost, ix, iy, iz)
    };

    #[cfg(feature = "parallel")]
    let best = {
        use rayon::prelude::*;
        (0..zs.len())
            .into_par_iter()
            .map(slab)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap()
    };
    #[cfg(not(feature = "parallel"))]
    let best = (0..zs.len()).map(slab).min_by(|a, b| a.partial_cmp(b).unwrap()).unwrap();

    Vec3::new(xs[best.1], ys[best.2], zs[best.3])
}

/// Brute-force reference minimizer of the position objective: 1 cm grid
/// search over a box centered on `search_center`, followed by in-box
/// coordinate-descent refinement. Independent of the LM code path. If
/// the box excludes the minimum the result lies on the box boundary.
pub fn oracle_position(
    measurements: &[RangeMeasurement],
    responders: &[Vec3],
    search_center: &Vec3,
    search_half_width: f64,
) -> Vec3 {
    let anchors: Vec<(Vec3, f64)> = measurements
        .iter()
        .map(|m| (responders[m.responder_id], m.range))
        .collect();

    let mut p = oracle_grid_search(&anchors, search_center, search_half_width);

    // coordinate descent, clamped to the search box
    let lo = *search_center - Vec3::new(search_half_width, search_half_width, search_half_width);
    let hi = *search_center + Vec3::new(search_half_width, search_half_width, search_half_width);
    let mut step = ORACLE_GRID_STEP / 2.0;
    let mut cost = oracle_cost(&p, &anchors);
    while step >= ORACLE_REFINE_TOL {
        let mut improved = true;
        while improved {
            improved = false;
            for axis in 0..3 {
                for dir in [-1.0, 1.0] {
                    loop {
                        let mut cand = p;
                        match axis {
                            0 => cand.x = (cand.x + dir * step).clamp(lo.x, hi.x),
                            1 => cand.y = (cand.y + dir * step).clamp(lo.y, hi.y),
                            _ => cand.z = (cand.z + dir * step).clamp(lo.z, hi.z),
                        }
                        let c = oracle_cost(&cand, &anchors);
                        if c < cost {
                            p = cand;
                            cost = c;
                            improved = true;
                        } else {
                            break;
                        }
                    }
                }
            }
        }
        step /= 2.0;
    }
    p
}

/// Sequential-only oracle entry point, used by the benchmark suite to
/// compare against the default (possibly parallel) build.
pub fn oracle_grid_search_seq(
    measurements: &[RangeMeasurement],
    responders: &[Vec3],
    search_center: &Vec3,
    search_half_width: f64,
) -> Vec3 {
    let anchors: Vec<(Vec3, f64)> = measurements
        .iter()
        .map(|m| (responders[m.responder_id], m.range))
        .collect();
    let xs = oracle_axes(search_center.x, search_half_width);
    let ys = oracle_axes(search_center.y, search_half_width);
    let zs = oracle_axes(search_center.z, search_half_width);
    let dx_sq: Vec<Vec<f64>> = anchors
        .iter()
        .map(|(q, _)| xs.iter().map(|x| (x - q.x) * (x - q.x)).collect())
        .collect();
    let mut row = Vec::new();
    let best = (0..zs.len())
        .map(|iz| {
            let (cost, ix, iy) = oracle_scan_slab(&xs, &ys, zs[iz], &anchors, &dx_sq, &mut row);
            (cost, ix, iy, iz)
        })
        .min_by(|a, b| a.partial_cmp(b).unwrap())
        .unwrap();
    Vec3::new(xs[best.1], ys[best.2], zs[best.3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{square_anchor_layout, RigidOffset};
    use crate::ranging::{sweep, NoiseModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless_ranges(p: &Vec3, responders: &[Vec3]) -> Vec<RangeMeasurement> {
        responders
            .iter()
            .enumerate()
            .map(|(j, q)| RangeMeasurement {
                initiator_id: 0,
                responder_id: j,
                range: p.distance(q),
                timestamp: 0.0,
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery_above_plane() {
        let responders = square_anchor_layout(12.0, 0.0).unwrap();
        let truth = Vec3::new(2.0, 1.0, 10.0);
        let ms = noiseless_ranges(&truth, &responders);
        let est = solve_position(&ms, &responders, &Vec3::new(0.0, 0.0, 5.0), &SolverConfig::default())
            .unwrap();
        assert!(est.converged);
        assert!(est.position.distance(&truth) < 1e-6, "{:?}", est.position);
    }

    #[test]
    fn recovery_at_responder() {
        let responders = square_anchor_layout(4.0, 0.0).unwrap();
        let truth = responders[0];
        let ms = noiseless_ranges(&truth, &responders);
        let est = solve_position(&ms, &responders, &Vec3::new(0.0, 0.0, 1.0), &SolverConfig::default())
            .unwrap();
        assert!(est.position.distance(&truth) < 1e-6, "{:?}", est.position);
    }

    #[test]
    fn underdetermined_and_collinear_are_rejected() {
        let responders = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let truth = Vec3::new(0.5, 1.0, 2.0);
        let ms = noiseless_ranges(&truth, &responders);
        assert!(matches!(
            solve_position(&ms[..2], &responders, &Vec3::ZERO, &SolverConfig::default()),
            Err(SolveError::Underdetermined { .. })
        ));
        assert!(matches!(
            solve_position(&ms, &responders, &Vec3::ZERO, &SolverConfig::default()),
            Err(SolveError::DegenerateGeometry)
        ));
    }

    #[test]
    fn objective_never_increases() {
        let responders = square_anchor_layout(1.2, 0.0).unwrap();
        let truth = Vec3::new(0.3, -0.2, 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = TransceiverLayout::single_initiator_square(1.2).unwrap();
        for k in 0..20 {
            let pose = Pose::new(truth, 0.0);
            let ms = sweep(&layout, &pose, &NoiseModel::new(0.1, 11), k as f64, &mut rng);
            let guess = Vec3::new(0.0, 0.0, 1.0);
            let (res0, _) = position_residual_jacobian(&guess, &ms, &responders);
            let c0 = sum_sq(&res0);
            let est = solve_position(&ms, &responders, &guess, &SolverConfig::default()).unwrap();
            let (res1, _) = position_residual_jacobian(&est.position, &ms, &responders);
            assert!(sum_sq(&res1) <= c0 + 1e-12);
        }
    }

    #[test]
    fn mirror_solution_is_rejected() {
        let responders = square_anchor_layout(4.0, 0.0).unwrap();
        let truth = Vec3::new(0.5, -0.7, 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = TransceiverLayout::single_initiator_square(4.0).unwrap();
        for k in 0..50 {
            let pose = Pose::new(truth, 0.0);
            let ms = sweep(&layout, &pose, &NoiseModel::new(0.1, 5), k as f64, &mut rng);
            let est =
                solve_position(&ms, &responders, &Vec3::new(0.0, 0.0, 1.0), &SolverConfig::default())
                    .unwrap();
            assert!(est.position.z >= 0.0);
            // lands in the upper basin, not the reflection near z = -6
            assert!(est.position.z > 1.0, "z = {}", est.position.z);
        }
    }

    #[test]
    fn pose_noiseless_recovery() {
        let layout = TransceiverLayout::new(
            vec![
                RigidOffset::new(0.2, 0.0, 0.0).unwrap(),
                RigidOffset::new(-0.2, 0.0, 0.0).unwrap(),
            ],
            square_anchor_layout(12.0, 0.0).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for yaw in [0.0, std::f64::consts::FRAC_PI_4, -2.5] {
            let truth = Pose::new(Vec3::new(0.0, 0.0, 10.0), yaw);
            let ms = sweep(&layout, &truth, &NoiseModel::noiseless(), 0.0, &mut rng);
            let guess = Pose::new(Vec3::new(0.5, -0.5, 8.0), yaw + 0.2);
            let est = solve_pose(&ms, &layout, &guess, &SolverConfig::default()).unwrap();
            assert!(est.converged);
            assert!(est.pose.position.distance(&truth.position) < 1e-6);
            assert!(normalize_angle(est.pose.yaw - truth.yaw).abs() < 1e-5);
        }
    }

    #[test]
    fn pose_single_initiator_is_rejected() {
        let layout = TransceiverLayout::single_initiator_square(12.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let truth = Pose::new(Vec3::new(0.0, 0.0, 10.0), 0.0);
        let ms = sweep(&layout, &truth, &NoiseModel::noiseless(), 0.0, &mut rng);
        assert!(matches!(
            solve_pose(&ms, &layout, &truth, &SolverConfig::default()),
            Err(SolveError::YawUnobservable)
        ));
    }

    #[test]
    fn pose_initial_guess_recovers_bearing() {
        let layout = TransceiverLayout::new(
            vec![
                RigidOffset::new(0.5, 0.0, 0.0).unwrap(),
                RigidOffset::new(-0.5, 0.0, 0.0).unwrap(),
            ],
            square_anchor_layout(12.0, 0.0).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = Pose::new(Vec3::new(1.0, -2.0, 6.0), 1.0);
        let ms = sweep(&layout, &truth, &NoiseModel::noiseless(), 0.0, &mut rng);
        let guess =
            pose_initial_guess(&ms, &layout, &Vec3::new(0.0, 0.0, 1.0), &SolverConfig::default())
                .unwrap();
        assert!(normalize_angle(guess.yaw - 1.0).abs() < 0.05, "yaw {}", guess.yaw);
        assert!(guess.position.distance(&truth.position) < 0.05);
    }

    #[test]
    fn oracle_matches_noiseless_solution() {
        let responders = square_anchor_layout(12.0, 0.0).unwrap();
        let truth = Vec3::new(2.0, 1.0, 10.0);
        let ms = noiseless_ranges(&truth, &responders);
        let p = oracle_position(&ms, &responders, &truth, 0.5);
        assert!(p.distance(&truth) < 1e-4, "{p:?}");
    }

    #[test]
    fn oracle_box_excluding_minimum_returns_boundary() {
        let responders = square_anchor_layout(12.0, 0.0).unwrap();
        let truth = Vec3::new(0.0, 0.0, 10.0);
        let ms = noiseless_ranges(&truth, &responders);
        let center = Vec3::new(5.0, 0.0, 10.0);
        let p = oracle_position(&ms, &responders, &center, 1.0);
        // pinned to the face nearest the true minimum
        assert!((p.x - 4.0).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn sequential_and_default_grid_agree() {
        let responders = square_anchor_layout(3.0, 0.0).unwrap();
        let truth = Vec3::new(0.4, -0.3, 7.0);
        let mut ms = noiseless_ranges(&truth, &responders);
        for (k, m) in ms.iter_mut().enumerate() {
            m.range += 0.05 * ((k as f64) - 1.5); // fixed perturbation
        }
        let a = oracle_grid_search_seq(&ms, &responders, &truth, 0.5);
        let anchors: Vec<(Vec3, f64)> =
            ms.iter().map(|m| (responders[m.responder_id], m.range)).collect();
        let b = oracle_grid_search(&anchors, &truth, 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_high_altitude_solution_matches_oracle() {
        let responders = square_anchor_layout(1.2, 0.0).unwrap();
        let layout = TransceiverLayout::single_initiator_square(1.2).unwrap();
        let truth = Pose::new(Vec3::new(0.0, 0.0, 30.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let ms = sweep(&layout, &truth, &NoiseModel::new(0.1, 18), 0.0, &mut rng);
        let est = solve_position(
            &ms,
            &responders,
            &Vec3::new(0.0, 0.0, 1.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(est.converged);
        let oracle = oracle_position(&ms, &responders, &truth.position, 2.0);
        assert!(
            est.position.distance(&oracle) < 1e-3,
            "lm {:?} oracle {oracle:?}",
            est.position
        );
    }

    /// Conditional position solve with the yaw frozen: each measurement's
    /// anchor is shifted by the rotated initiator offset, reducing the
    /// problem to the position-only form.
    fn cost_at_fixed_yaw(
        theta: f64,
        measurements: &[RangeMeasurement],
        layout: &TransceiverLayout,
        init: &Vec3,
    ) -> f64 {
        let (sin, cos) = theta.sin_cos();
        let mut virtual_responders = Vec::with_capacity(measurements.len());
        let mut shifted = Vec::with_capacity(measurements.len());
        for (k, m) in measurements.iter().enumerate() {
            let o = layout.initiators[m.initiator_id].body_offset;
            let rotated = Vec3::new(cos * o.x - sin * o.y, sin * o.x + cos * o.y, o.z);
            virtual_responders.push(layout.responders[m.responder_id] - rotated);
            shifted.push(RangeMeasurement { responder_id: k, ..*m });
        }
        let est = solve_position(&shifted, &virtual_responders, init, &SolverConfig::default())
            .unwrap();
        let r = est.residual_rms;
        r * r * measurements.len() as f64
    }

    #[test]
    fn pose_quarter_turn_matches_yaw_sweep_oracle() {
        let layout = TransceiverLayout::new(
            vec![
                RigidOffset::new(0.2, 0.0, 0.0).unwrap(),
                RigidOffset::new(-0.2, 0.0, 0.0).unwrap(),
            ],
            square_anchor_layout(1.2, 0.0).unwrap(),
        )
        .unwrap();
        let truth = Pose::new(Vec3::new(0.0, 0.0, 30.0), std::f64::consts::FRAC_PI_4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ms = sweep(&layout, &truth, &NoiseModel::noiseless(), 0.0, &mut rng);

        let init = Vec3::new(0.3, -0.2, 28.0);
        let steps = 3600;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..steps {
            let theta = -std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / steps as f64;
            let c = cost_at_fixed_yaw(theta, &ms, &layout, &init);
            if c < best.0 {
                best = (c, theta);
            }
        }
        // golden-section refinement of the sweep minimum
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let step = 2.0 * std::f64::consts::PI / steps as f64;
        let (mut a, mut b) = (best.1 - step, best.1 + step);
        while b - a > 1e-7 {
            let c1 = b - phi * (b - a);
            let c2 = a + phi * (b - a);
            if cost_at_fixed_yaw(c1, &ms, &layout, &init)
                < cost_at_fixed_yaw(c2, &ms, &layout, &init)
            {
                b = c2;
            } else {
                a = c1;
            }
        }
        let oracle_theta = 0.5 * (a + b);
        assert!((oracle_theta - std::f64::consts::FRAC_PI_4).abs() < 1e-5, "{oracle_theta}");

        let guess = Pose::new(Vec3::new(0.5, -0.5, 28.0), 0.5);
        let est = solve_pose(&ms, &layout, &guess, &SolverConfig::default()).unwrap();
        assert!(est.converged);
        assert!(normalize_angle(est.pose.yaw - oracle_theta).abs() < 1e-5);
    }
}
