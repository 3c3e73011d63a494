//! Fixed benchmark instances.

use biquad::partsym::random_psd_monic;
use biquad::sampling::sub_rng;
use biquad::simple::gen_simple;
use biquad::{BiquadraticForm, XSymmetricData};

/// A full-rank PSD monic x-symmetric instance, reproducible from `seed`.
pub fn psd_instance(m: usize, n: usize, seed: u64) -> XSymmetricData {
    let mut rng = sub_rng(seed, (m * 1000 + n) as u64);
    random_psd_monic(m, n, n, n, &mut rng).expect("valid ranks")
}

/// The simple form with `s` unit terms.
pub fn simple_form(m: usize, n: usize, s: usize) -> BiquadraticForm {
    gen_simple(m, n, s).expect("s within range").to_form()
}
