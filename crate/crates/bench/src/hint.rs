//! Simulated user goal poses.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use seat_core::geom::pose::{quat_from_axis_angle, Pose};
use seat_core::snap::SnapConfig;
use seat_core::{Error, Result};

/// Stable seed from a master seed and a path of labels.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Goal pose a user might enter: per-axis offset uniform in `±eps_pos`, and
/// a rotation of uniform axis and angle uniform in `[0, eps_rot]` applied to
/// `gt`. Both bounds must lie within the snap search radii of `bounds`.
pub fn sample_user_hint(gt: &Pose, eps_pos: f64, eps_rot: f64, bounds: &SnapConfig, seed: u64) -> Result<Pose> {
    if !(0.0..=bounds.delta_position).contains(&eps_pos) || !(0.0..=bounds.delta_orientation).contains(&eps_rot) {
        return Err(Error::InvalidArgument(format!(
            "hint error ({eps_pos} m, {eps_rot} rad) exceeds the search radii"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off = Vector3::from_fn(|_, _| if eps_pos > 0.0 { rng.random_range(-eps_pos..=eps_pos) } else { 0.0 });
    let axis = unit_vector(&mut rng);
    let angle = if eps_rot > 0.0 { rng.random_range(0.0..=eps_rot) } else { 0.0 };
    Ok(Pose::new(gt.p + off, quat_from_axis_angle(&axis, angle) * gt.q))
}

/// Goal pose exactly `pos_err` meters and `rot_err` radians from `gt`, in
/// random directions.
pub fn hint_at_error(gt: &Pose, pos_err: f64, rot_err: f64, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = unit_vector(&mut rng);
    let axis = unit_vector(&mut rng);
    Pose::new(gt.p + dir * pos_err, quat_from_axis_angle(&axis, rot_err) * gt.q)
}
