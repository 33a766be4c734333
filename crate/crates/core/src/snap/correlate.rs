//! Valid-mode 3D cross-correlation through FFTs, tiled over the output so
//! memory stays bounded for large search windows.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Output tiles are at most this many voxels per axis.
const TILE: usize = 64;

/// Smallest n >= m whose prime factors are all in {2, 3, 5, 7}.
fn smooth_len(m: usize) -> usize {
    let mut n = m.max(1);
    loop {
        let mut r = n;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

struct Plans {
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Plans {
    fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: dims.map(|n| planner.plan_fft_forward(n)),
            inv: dims.map(|n| planner.plan_fft_inverse(n)),
        }
    }
}

fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], plans: &[Arc<dyn Fft<f64>>; 3]) {
    let [nx, ny, nz] = dims;
    plans[0].process(data);
    let mut lines = vec![Complex::default(); data.len()];
    // y lines
    for z in 0..nz {
        for x in 0..nx {
            let line = &mut lines[(z * nx + x) * ny..][..ny];
            for (y, v) in line.iter_mut().enumerate() {
                *v = data[x + nx * (y + ny * z)];
            }
        }
    }
    plans[1].process(&mut lines);
    for z in 0..nz {
        for x in 0..nx {
            let line = &lines[(z * nx + x) * ny..][..ny];
            for (y, v) in line.iter().enumerate() {
                data[x + nx * (y + ny * z)] = *v;
            }
        }
    }
    // z lines
    for y in 0..ny {
        for x in 0..nx {
            let line = &mut lines[(y * nx + x) * nz..][..nz];
            for (z, v) in line.iter_mut().enumerate() {
                *v = data[x + nx * (y + ny * z)];
            }
        }
    }
    plans[2].process(&mut lines);
    for y in 0..ny {
        for x in 0..nx {
            let line = &lines[(y * nx + x) * nz..][..nz];
            for (z, v) in line.iter().enumerate() {
                data[x + nx * (y + ny * z)] = *v;
            }
        }
    }
}

/// `out[t] = sum_i kernel[i] * signal(t + i)` for `t` in `[0, out_dims)`.
/// `signal` is queried for indices in `[0, out_dims + kdims - 1)` and must
/// return zero wherever the data is undefined. Arrays are x-fastest.
pub fn correlate_valid(
    signal: impl Fn([usize; 3]) -> f64,
    kernel: &[f64],
    kdims: [usize; 3],
    out_dims: [usize; 3],
) -> Vec<f64> {
    assert_eq!(kernel.len(), kdims.iter().product::<usize>());
    let mut out = vec![0.0; out_dims.iter().product()];
    if out.is_empty() || kernel.is_empty() {
        return out;
    }
    let tile = out_dims.map(|n| n.min(TILE));
    let pdims = [0, 1, 2].map(|a| smooth_len(tile[a] + kdims[a] - 1));
    let plans = Plans::new(pdims);
    let plen: usize = pdims.iter().product();
    let pidx = |x: usize, y: usize, z: usize| x + pdims[0] * (y + pdims[1] * z);
    let mut buf = vec![Complex::default(); plen];
    let mut tz = 0;
    while tz < out_dims[2] {
        let mut ty = 0;
        while ty < out_dims[1] {
            let mut tx = 0;
            while tx < out_dims[0] {
                let t0 = [tx, ty, tz];
                let n = [0, 1, 2].map(|a| tile[a].min(out_dims[a] - t0[a]));
                buf.fill(Complex::default());
                // real part: signal region, imaginary part: kernel
                for z in 0..n[2] + kdims[2] - 1 {
                    for y in 0..n[1] + kdims[1] - 1 {
                        for x in 0..n[0] + kdims[0] - 1 {
                            buf[pidx(x, y, z)].re = signal([t0[0] + x, t0[1] + y, t0[2] + z]);
                        }
                    }
                }
                for z in 0..kdims[2] {
                    for y in 0..kdims[1] {
                        for x in 0..kdims[0] {
                            buf[pidx(x, y, z)].im = kernel[x + kdims[0] * (y + kdims[1] * z)];
                        }
                    }
                }
                fft3(&mut buf, pdims, &plans.fwd);
                let spec = buf.clone();
                for z in 0..pdims[2] {
                    let mz = (pdims[2] - z) % pdims[2];
                    for y in 0..pdims[1] {
                        let my = (pdims[1] - y) % pdims[1];
                        for x in 0..pdims[0] {
                            let mx = (pdims[0] - x) % pdims[0];
                            let a = spec[pidx(x, y, z)];
                            let b = spec[pidx(mx, my, mz)].conj();
                            let s = (a + b) * 0.5;
                            let k = (a - b) * Complex::new(0.0, -0.5);
                            buf[pidx(x, y, z)] = k.conj() * s;
                        }
                    }
                }
                fft3(&mut buf, pdims, &plans.inv);
                let norm = plen as f64;
                for z in 0..n[2] {
                    for y in 0..n[1] {
                        for x in 0..n[0] {
                            let o = (t0[0] + x) + out_dims[0] * ((t0[1] + y) + out_dims[1] * (t0[2] + z));
                            out[o] = buf[pidx(x, y, z)].re / norm;
                        }
                    }
                }
                tx += tile[0];
            }
            ty += tile[1];
        }
        tz += tile[2];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smooth_lengths() {
        assert_eq!(smooth_len(1), 1);
        assert_eq!(smooth_len(11), 12);
        assert_eq!(smooth_len(97), 98);
        assert_eq!(smooth_len(128), 128);
    }

    #[test]
    fn matches_direct_sum_across_tiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kd = [5, 3, 4];
        let od = [70, 9, 6];
        let sd = [od[0] + kd[0] - 1, od[1] + kd[1] - 1, od[2] + kd[2] - 1];
        let sig: Vec<f64> = (0..sd.iter().product::<usize>()).map(|_| rng.random_range(-3..=3) as f64).collect();
        let ker: Vec<f64> = (0..kd.iter().product::<usize>()).map(|_| rng.random_range(-2..=2) as f64).collect();
        let at = |[x, y, z]: [usize; 3]| sig[x + sd[0] * (y + sd[1] * z)];
        let got = correlate_valid(at, &ker, kd, od);
        for z in 0..od[2] {
            for y in 0..od[1] {
                for x in 0..od[0] {
                    let mut want = 0.0;
                    for k in 0..kd[2] {
                        for j in 0..kd[1] {
                            for i in 0..kd[0] {
                                want += ker[i + kd[0] * (j + kd[1] * k)] * at([x + i, y + j, z + k]);
                            }
                        }
                    }
                    let v = got[x + od[0] * (y + od[1] * z)];
                    assert!((v - want).abs() < 1e-6, "{v} vs {want}");
                }
            }
        }
    }
}
