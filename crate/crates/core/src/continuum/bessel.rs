//! Modified Bessel functions `I0`, `I1`, `K0` for real nonnegative arguments.
//!
//! Small arguments use the power series; large ones use the Cephes Chebyshev
//! expansions of `sqrt(z) e^{-z} I(z)` and `sqrt(z) e^{z} K0(z)`.

use crate::error::{Error, Result};

/// Euler-Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Series for `I0`/`I1` below this, Chebyshev above.
const I_SERIES_MAX: f64 = 8.0;

/// Series for `K0` up to this, Chebyshev above.
const K_SERIES_MAX: f64 = 2.0;

#[allow(clippy::excessive_precision)]
const I0_B: [f64; 25] = [
    -7.233_180_487_874_754E-18,
    -4.830_504_485_944_182E-18,
    4.465_621_420_296_76E-17,
    3.461_222_867_697_461E-17,
    -2.827_623_980_516_583_6E-16,
    -3.425_485_619_677_219E-16,
    1.772_560_133_056_526_3E-15,
    3.811_680_669_352_622_4E-15,
    -9.554_846_698_828_307E-15,
    -4.150_569_347_287_222E-14,
    1.540_086_217_521_41E-14,
    3.852_778_382_742_142_6E-13,
    7.180_124_451_383_666E-13,
    -1.794_178_531_506_806_2E-12,
    -1.321_581_184_044_771_3E-11,
    -3.149_916_527_963_241_6E-11,
    1.188_914_710_784_643_9E-11,
    4.940_602_388_224_97E-10,
    3.396_232_025_708_386_5E-9,
    2.266_668_990_498_178E-8,
    2.048_918_589_469_063_8E-7,
    2.891_370_520_834_756_7E-6,
    6.889_758_346_916_825E-5,
    3.369_116_478_255_694_3E-3,
    8.044_904_110_141_088E-1,
];

#[allow(clippy::excessive_precision)]
const I1_B: [f64; 25] = [
    7.51729631084210481353E-18,
    4.41434832307170791151E-18,
    -4.65030536848935832153E-17,
    -3.20952592199342395980E-17,
    2.96262899764595013876E-16,
    3.30820231092092828324E-16,
    -1.88035477551078244854E-15,
    -3.81440307243700780478E-15,
    1.04202769841288027642E-14,
    4.27244001671195135429E-14,
    -2.10154184277266431302E-14,
    -4.08355111109219731823E-13,
    -7.19855177624590851209E-13,
    2.03562854414708950722E-12,
    1.41258074366137813316E-11,
    3.25260358301548823856E-11,
    -1.89749581235054123450E-11,
    -5.58974346219658380687E-10,
    -3.83538038596423702205E-9,
    -2.63146884688951950684E-8,
    -2.51223623787020892529E-7,
    -3.88256480887769039346E-6,
    -1.10588938762623716291E-4,
    -9.76109749136146840777E-3,
    7.78576235018280120474E-1,
];

#[allow(clippy::excessive_precision)]
const K0_B: [f64; 25] = [
    5.30043377268626276149E-18,
    -1.64758043015242134646E-17,
    5.21039150503902756861E-17,
    -1.67823109680541210385E-16,
    5.51205597852431940784E-16,
    -1.84859337734377901440E-15,
    6.34007647740507060557E-15,
    -2.22751332699166985548E-14,
    8.03289077536357521100E-14,
    -2.98009692317273043925E-13,
    1.14034058820847496303E-12,
    -4.51459788337394416547E-12,
    1.85594911495471785253E-11,
    -7.95748924447710747776E-11,
    3.57739728140030116597E-10,
    -1.69753450938905987466E-9,
    8.57403401741422608519E-9,
    -4.66048989768794782956E-8,
    2.76681363944501510342E-7,
    -1.83175552271911948767E-6,
    1.39498137188764993662E-5,
    -1.28495495816278026384E-4,
    1.56988388573005337491E-3,
    -3.14481013119645005427E-2,
    2.44030308206595545468E0,
];

fn chbevl(x: f64, coeffs: &[f64]) -> f64 {
    let mut b0 = coeffs[0];
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for c in &coeffs[1..] {
        b2 = b1;
        b1 = b0;
        b0 = x * b1 - b2 + c;
    }
    0.5 * (b0 - b2)
}

/// `Σ_k (z²/4)^k / (k! (k+order)!)`, times `(z/2)^order`.
fn i_series(z: f64, order: u32) -> f64 {
    let q = 0.25 * z * z;
    let mut term = if order == 0 { 1.0 } else { 0.5 * z };
    let mut sum = term;
    for k in 1..200u32 {
        term *= q / (f64::from(k) * f64::from(k + order));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `I0(z)`, even in `z`.
pub fn bessel_i0(z: f64) -> f64 {
    let ax = z.abs();
    if ax <= I_SERIES_MAX {
        i_series(ax, 0)
    } else {
        ax.exp() * chbevl(32.0 / ax - 2.0, &I0_B) / ax.sqrt()
    }
}

/// `I1(z)`, odd in `z`.
pub fn bessel_i1(z: f64) -> f64 {
    let ax = z.abs();
    let v = if ax <= I_SERIES_MAX {
        i_series(ax, 1)
    } else {
        ax.exp() * chbevl(32.0 / ax - 2.0, &I1_B) / ax.sqrt()
    };
    v.copysign(z)
}

/// `K0(z)` for `z > 0`.
pub fn bessel_k0(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::InvalidParameter(format!("K0 needs a positive argument, got {z}")));
    }
    if z <= K_SERIES_MAX {
        // K0 = -(ln(z/2) + γ) I0(z) + Σ_{k≥1} (z²/4)^k H_k / (k!)²
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        let mut sum = 0.0;
        for k in 1..100u32 {
            let kf = f64::from(k);
            term *= q / (kf * kf);
            harmonic += 1.0 / kf;
            let add = term * harmonic;
            sum += add;
            if add < sum * 1e-17 {
                break;
            }
        }
        Ok(-((0.5 * z).ln() + EULER_GAMMA) * i_series(z, 0) + sum)
    } else {
        Ok((-z).exp() * chbevl(8.0 / z - 2.0, &K0_B) / z.sqrt())
    }
}
