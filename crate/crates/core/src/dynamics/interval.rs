//! Interval arithmetic for the natural interval extension.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::geometry::Interval;

/// Endpoint product with `0 * inf = 0`, so unbounded noise cells stay well defined.
fn xmul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

pub fn neg(a: Interval) -> Interval {
    Interval::raw(-a.hi, -a.lo)
}

pub fn add(a: Interval, b: Interval) -> Interval {
    Interval::raw(a.lo + b.lo, a.hi + b.hi)
}

pub fn sub(a: Interval, b: Interval) -> Interval {
    Interval::raw(a.lo - b.hi, a.hi - b.lo)
}

pub fn mul(a: Interval, b: Interval) -> Interval {
    let p = [
        xmul(a.lo, b.lo),
        xmul(a.lo, b.hi),
        xmul(a.hi, b.lo),
        xmul(a.hi, b.hi),
    ];
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Interval::raw(lo, hi)
}

pub fn div(a: Interval, b: Interval) -> Result<Interval, String> {
    if b.contains_point(0.0) {
        return Err(format!("division by an interval containing zero {b}"));
    }
    Ok(mul(a, Interval::raw(1.0 / b.hi, 1.0 / b.lo)))
}

pub fn powi(a: Interval, k: u32) -> Interval {
    if k == 0 {
        return Interval::point(1.0);
    }
    let (l, h) = (a.lo.powi(k as i32), a.hi.powi(k as i32));
    if k % 2 == 1 || a.lo >= 0.0 {
        Interval::raw(l, h)
    } else if a.hi <= 0.0 {
        Interval::raw(h, l)
    } else {
        Interval::raw(0.0, l.max(h))
    }
}

pub fn exp(a: Interval) -> Interval {
    Interval::raw(a.lo.exp(), a.hi.exp())
}

pub fn sqrt(a: Interval) -> Result<Interval, String> {
    if a.lo < 0.0 {
        return Err(format!("sqrt over an interval reaching negative values {a}"));
    }
    Ok(Interval::raw(a.lo.sqrt(), a.hi.sqrt()))
}

pub fn abs(a: Interval) -> Interval {
    if a.lo >= 0.0 {
        a
    } else if a.hi <= 0.0 {
        neg(a)
    } else {
        Interval::raw(0.0, (-a.lo).max(a.hi))
    }
}

/// Whether `[lo, hi]` contains a point `offset + k * period` for some integer `k`.
fn hits_lattice(a: Interval, offset: f64, period: f64) -> bool {
    let k = ((a.lo - offset) / period).ceil();
    offset + k * period <= a.hi
}

/// Range of a `2*pi`-periodic function with maximum at `max_at` and minimum
/// at `min_at` (mod `2*pi`).
fn periodic(a: Interval, f: fn(f64) -> f64, max_at: f64, min_at: f64) -> Interval {
    if !a.is_bounded() || a.width() >= TAU {
        return Interval::raw(-1.0, 1.0);
    }
    let (fl, fh) = (f(a.lo), f(a.hi));
    let mut lo = fl.min(fh);
    let mut hi = fl.max(fh);
    if hits_lattice(a, max_at, TAU) {
        hi = 1.0;
    }
    if hits_lattice(a, min_at, TAU) {
        lo = -1.0;
    }
    Interval::raw(lo.max(-1.0), hi.min(1.0))
}

pub fn sin(a: Interval) -> Interval {
    periodic(a, f64::sin, FRAC_PI_2, -FRAC_PI_2)
}

pub fn cos(a: Interval) -> Interval {
    periodic(a, f64::cos, 0.0, PI)
}
