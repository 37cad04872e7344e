//! Independent numerical oracles shared by the integration tests.

#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

// Gauss-Kronrod 7/15 nodes and weights (QUADPACK).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature on a finite interval.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let (v, e) = gk15(f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            break;
        }
        let worst = (0..pieces.len())
            .max_by(|&i, &j| pieces[i].3.total_cmp(&pieces[j].3))
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (l, r) in [(lo, mid), (mid, hi)] {
            let (v, e) = gk15(f, l, r);
            pieces.push((l, r, v, e));
        }
    }
    pieces.iter().map(|p| p.2).sum()
}

/// `integral_a^inf f` through `x = a + t / (1 - t)`.
pub fn integrate_tail(f: &mut dyn FnMut(f64) -> f64, a: f64, rel_tol: f64) -> f64 {
    let mut g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = a + t / (1.0 - t);
        let v = f(x) / ((1.0 - t) * (1.0 - t));
        if v.is_finite() { v } else { 0.0 }
    };
    integrate(&mut g, 0.0, 1.0, rel_tol)
}

/// `E[h(X)]` for `X ~ Gamma(shape, scale)`, as a ratio of two quadratures so
/// the normalizing constant never has to be evaluated.
pub fn gamma_expect(shape: f64, scale: f64, h: &dyn Fn(f64) -> f64, rel_tol: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut add = |w: &dyn Fn(f64) -> f64, map: &dyn Fn(f64) -> f64, lo: f64, hi: Option<f64>| {
        let mut fn_num = |u: f64| {
            let wu = w(u);
            if wu == 0.0 { 0.0 } else { wu * h(scale * map(u)) }
        };
        let mut fn_den = |u: f64| w(u);
        match hi {
            Some(hi) => {
                num += integrate(&mut fn_num, lo, hi, rel_tol);
                den += integrate(&mut fn_den, lo, hi, rel_tol);
            }
            None => {
                num += integrate_tail(&mut fn_num, lo, rel_tol);
                den += integrate_tail(&mut fn_den, lo, rel_tol);
            }
        }
    };
    let ident = |y: f64| y;
    if shape <= 1.0 {
        // y in [0, 1] via v = y^shape removes the singular factor y^(shape-1)
        let inv = 1.0 / shape;
        let w0 = move |v: f64| inv * (-v.powf(inv)).exp();
        let map0 = move |v: f64| v.powf(inv);
        add(&w0, &map0, 0.0, Some(1.0));
        let w1 = move |y: f64| ((shape - 1.0) * y.ln() - y).exp();
        add(&w1, &ident, 1.0, Some(60.0));
        add(&w1, &ident, 60.0, None);
    } else {
        let m = shape - 1.0;
        let c = m * m.ln() - m;
        let sd = shape.sqrt();
        let w = move |y: f64| if y <= 0.0 { 0.0 } else { (m * y.ln() - y - c).exp() };
        let mut cuts: Vec<f64> = [-40.0, -20.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 20.0, 40.0]
            .iter()
            .map(|k| m + k * sd)
            .filter(|&y| y > 0.0)
            .collect();
        cuts.insert(0, 0.0);
        for pair in cuts.windows(2) {
            add(&w, &ident, pair[0], Some(pair[1]));
        }
        add(&w, &ident, *cuts.last().unwrap(), None);
    }
    num / den
}

/// Exact dyadic decomposition `x = mantissa * 2^exp` of a positive finite double.
fn decompose(x: f64) -> (u64, i32) {
    assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

/// Integers `n_i` and a shift `e` with `x_i = n_i / 2^e` exactly.
pub fn common_scale(xs: &[f64]) -> (Vec<BigUint>, u32) {
    let parts: Vec<(u64, i32)> = xs.iter().map(|&x| decompose(x)).collect();
    let e = parts.iter().map(|&(_, ex)| -ex).max().unwrap().max(0) as u32;
    let ints = parts
        .iter()
        .map(|&(m, ex)| BigUint::from(m) << ((ex + e as i32) as u32))
        .collect();
    (ints, e)
}

/// Natural log of `num / den` for arbitrary-size positive integers.
pub fn ln_ratio(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits() as i64 - num.bits() as i64 + 120;
    let q = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    // q = m 2^(bits-1) with m in [1, 2)
    let bits = q.bits();
    let drop = bits.saturating_sub(64);
    let m = (&q >> drop).to_f64().unwrap() / 2f64.powi((bits - 1 - drop) as i32);
    m.ln() + (bits as i64 - 1 - shift) as f64 * std::f64::consts::LN_2
}

/// Exact evaluation of
/// `ln sum_l C(d,l) (s_e)^{(d-l)} (s_a)^{(l)} / ((a_jk + r_e)^{d-l} (a_j + r_a)^l)`
/// with rising factorials, all inputs taken as exact binary fractions.
pub fn log_comb_sum_exact(d: usize, shape_a: f64, shape_e: f64, a_jk: f64, a_j: f64, rate_a: f64, rate_e: f64) -> f64 {
    if d == 0 {
        return 0.0;
    }
    let inputs = [shape_a, shape_e, a_jk, a_j, rate_a, rate_e];
    let positive: Vec<f64> = inputs.iter().copied().filter(|&v| v > 0.0).collect();
    let (scaled, e) = common_scale(&positive);
    let mut it = scaled.into_iter();
    let ints: Vec<BigUint> = inputs
        .iter()
        .map(|&v| if v > 0.0 { it.next().unwrap() } else { BigUint::zero() })
        .collect();
    let unit = BigUint::one() << e;
    let (sa, se) = (&ints[0], &ints[1]);
    let x = &ints[2] + &ints[5];
    let y = &ints[3] + &ints[4];

    // rising products scaled by 2^(e m)
    let rising = |s: &BigUint| {
        let mut out = vec![BigUint::one()];
        let mut acc = BigUint::one();
        for i in 0..d {
            acc *= s + &unit * BigUint::from(i);
            out.push(acc.clone());
        }
        out
    };
    let pa = rising(sa);
    let pe = rising(se);
    let pow = |b: &BigUint| {
        let mut out = vec![BigUint::one()];
        for i in 0..d {
            let next = &out[i] * b;
            out.push(next);
        }
        out
    };
    let (xp, yp) = (pow(&x), pow(&y));

    // multiply every term by x^d y^d; the 2^(e d) scalings cancel
    let mut binom = BigUint::one();
    let mut num = BigUint::zero();
    for l in 0..=d {
        if l > 0 {
            binom = binom * BigUint::from(d - l + 1) / BigUint::from(l);
        }
        num += &binom * &pe[d - l] * &pa[l] * &xp[l] * &yp[d - l];
    }
    let den = &xp[d] * &yp[d];
    ln_ratio(&num, &den)
}
