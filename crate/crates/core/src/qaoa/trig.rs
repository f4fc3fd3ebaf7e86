//! Branch-free `sin_cos` that the compiler can vectorise.

use std::f64::consts::FRAC_2_PI;

// π/2 split into three parts for Cody–Waite reduction.
const PIO2_1: f64 = 1.570_796_326_734_125_6;
const PIO2_2: f64 = 6.077_100_506_303_966e-11;
const PIO2_3: f64 = 2.022_266_248_795_950_6e-21;

#[inline(always)]
fn sin_poly(x: f64) -> f64 {
    let z = x * x;
    let p = 1.589_690_995_211_55e-10;
    let p = -2.505_076_025_340_686_3e-8 + z * p;
    let p = 2.755_731_370_707_006_8e-6 + z * p;
    let p = -1.984_126_982_985_795e-4 + z * p;
    let p = 8.333_333_333_322_49e-3 + z * p;
    let p = -1.666_666_666_666_663_2e-1 + z * p;
    x + x * z * p
}

#[inline(always)]
fn cos_poly(x: f64) -> f64 {
    let z = x * x;
    let p = -1.135_964_755_778_819_5e-11;
    let p = 2.087_572_321_298_175e-9 + z * p;
    let p = -2.755_731_435_139_066_3e-7 + z * p;
    let p = 2.480_158_728_947_673e-5 + z * p;
    let p = -1.388_888_888_887_411e-3 + z * p;
    let p = 4.166_666_666_666_602e-2 + z * p;
    1.0 - 0.5 * z + z * z * p
}

const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

// Nearest integer for |y| < 2^51 using only add/sub.
#[inline(always)]
fn round_even(y: f64) -> f64 {
    (y + ROUND_MAGIC) - ROUND_MAGIC
}

/// Accurate to a few ulp for `|x| < 1e6`.
#[inline(always)]
pub(super) fn sin_cos(x: f64) -> (f64, f64) {
    let q = round_even(x * FRAC_2_PI);
    let r = ((x - q * PIO2_1) - q * PIO2_2) - q * PIO2_3;
    let s = sin_poly(r);
    let c = cos_poly(r);
    let quad = q - 4.0 * round_even(q * 0.25 - 0.375);
    let odd = quad == 1.0 || quad == 3.0;
    let s0 = if odd { c } else { s };
    let c0 = if odd { s } else { c };
    let sin = if quad >= 2.0 { -s0 } else { s0 };
    let cos = if quad == 1.0 || quad == 2.0 { -c0 } else { c0 };
    (sin, cos)
}
