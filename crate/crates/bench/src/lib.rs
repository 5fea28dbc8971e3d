//! Fixed-seed inputs shared by the benchmarks.

use hybeam::channel::{interference_cov, mmwave_channel, Interference, MmWaveParams};
use hybeam::random::substream;
use hybeam::CMatrix;

/// Effective channel and white interference covariance for an `n_t x n_r`
/// mmWave link with `n_s` streams along the dominant right singular vectors.
pub struct Link {
    pub h_bar: CMatrix,
    pub r_z: CMatrix,
}

pub fn mmwave_link(n_t: usize, n_r: usize, n_cl: usize, n_s: usize) -> Link {
    let mut rng = substream(0xbe9c, 0, 0);
    let params = MmWaveParams {
        n_t,
        n_r,
        n_cl,
        ..MmWaveParams::default()
    };
    let h = mmwave_channel(&params, &mut rng)
        .expect("valid parameters")
        .h;
    let svd = h.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let h_bar = &h * v_t.rows(0, n_s).adjoint();
    let r_z = interference_cov(&Interference::White { sigma2: 1.0 }, n_r, &mut rng)
        .expect("white interference");
    Link { h_bar, r_z }
}
