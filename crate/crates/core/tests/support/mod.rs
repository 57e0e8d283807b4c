//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigUint;
use rand::Rng;
use voxfilter_core::render::{Camera, Frame};

pub const LEVELS: usize = 256;

/// Per-class sum of squared deviations scaled by `W²`:
/// `Σ c_i (i·W − S)²`, with `W = Σ c_i` and `S = Σ c_i·i`.
fn scaled_deviation(counts: &[u64]) -> (u128, u128) {
    let w: u128 = counts.iter().map(|&c| c as u128).sum();
    let s: u128 = counts.iter().enumerate().map(|(i, &c)| c as u128 * i as u128).sum();
    let dev = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let d = (i as u128 * w).abs_diff(s);
            c as u128 * d * d
        })
        .sum();
    (dev, w)
}

/// Threshold minimizing `w0·var0 + w1·var1` (class 0 = levels `<= T`),
/// evaluated exactly at every `T`; ties go to the smallest `T`.
///
/// `w·var` of a class equals `Σ c (i·W − S)² / (N·W²)`, so candidates are
/// compared as `dev0/W0² + dev1/W1²` in arbitrary precision.
pub fn otsu_within_class(counts: &[u64; LEVELS]) -> u8 {
    // (numerator, denominator) of the current best sum
    let mut best: Option<(BigUint, BigUint, u8)> = None;
    for t in 0..LEVELS {
        let (dev0, w0) = scaled_deviation(&counts[..=t]);
        let (dev1, w1) = scaled_deviation(&counts[t + 1..]);
        let sq = |w: u128| BigUint::from(w.max(1)) * BigUint::from(w.max(1));
        let (d0, d1) = (sq(w0), sq(w1));
        let num = BigUint::from(dev0) * &d1 + BigUint::from(dev1) * &d0;
        let den = d0 * d1;
        let better = match &best {
            None => true,
            Some((bn, bd, _)) => &num * bd < bn * &den,
        };
        if better {
            best = Some((num, den, t as u8));
        }
    }
    best.expect("256 candidates").2
}

/// Threshold maximizing the between-class variance `ω0·ω1·(μ0 − μ1)²`,
/// i.e. `(S0·W1 − S1·W0)² / (W0·W1)`; ties go to the smallest `T`.
pub fn otsu_between_class(counts: &[u64; LEVELS]) -> u8 {
    let mut best: Option<(BigUint, BigUint, u8)> = None;
    for t in 0..LEVELS {
        let sum = |r: &[u64], off: usize| -> (u128, u128) {
            let w = r.iter().map(|&c| c as u128).sum();
            let s = r.iter().enumerate().map(|(i, &c)| c as u128 * (i + off) as u128).sum();
            (w, s)
        };
        let (w0, s0) = sum(&counts[..=t], 0);
        let (w1, s1) = sum(&counts[t + 1..], t + 1);
        let (num, den) = if w0 == 0 || w1 == 0 {
            (BigUint::from(0u8), BigUint::from(1u8))
        } else {
            let d = (BigUint::from(s0) * w1).max(BigUint::from(s1) * w0)
                - (BigUint::from(s0) * w1).min(BigUint::from(s1) * w0);
            (&d * &d, BigUint::from(w0) * w1)
        };
        let better = match &best {
            None => true,
            Some((bn, bd, _)) => &num * bd > bn * &den,
        };
        if better {
            best = Some((num, den, t as u8));
        }
    }
    best.expect("256 candidates").2
}

/// Random histogram with a mix of shapes: dense noise, sparse spikes,
/// bimodal bumps and plateaus of equal counts (to provoke ties).
pub fn random_histogram(rng: &mut impl Rng) -> [u64; LEVELS] {
    let mut counts = [0u64; LEVELS];
    match rng.random_range(0..5) {
        0 => {
            for c in counts.iter_mut() {
                *c = rng.random_range(0..10_000);
            }
        }
        1 => {
            for _ in 0..rng.random_range(1..6) {
                counts[rng.random_range(0..LEVELS)] += rng.random_range(1..1_000);
            }
        }
        2 => {
            for _ in 0..2 {
                let mu = rng.random_range(0..LEVELS) as f64;
                let width = rng.random_range(2.0..30.0);
                let mass = rng.random_range(100.0..100_000.0);
                for (i, c) in counts.iter_mut().enumerate() {
                    let z = (i as f64 - mu) / width;
                    *c += (mass * (-z * z / 2.0).exp()) as u64;
                }
            }
        }
        3 => {
            let v = rng.random_range(1..50);
            let a = rng.random_range(0..LEVELS);
            let b = rng.random_range(a..LEVELS);
            for c in &mut counts[a..=b] {
                *c = v;
            }
        }
        _ => {
            let mass = rng.random_range(1..500);
            counts[rng.random_range(0..LEVELS)] = mass;
            counts[rng.random_range(0..LEVELS)] = mass;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        counts[rng.random_range(0..LEVELS)] = 1;
    }
    counts
}

/// Shannon entropy by counting each distinct value in a second pass.
pub fn naive_entropy(pixels: &[u8]) -> f64 {
    let mut h = 0.0;
    for level in 0..=255u8 {
        let c = pixels.iter().filter(|&&p| p == level).count();
        if c > 0 {
            let q = c as f64 / pixels.len() as f64;
            h -= q * q.log2();
        }
    }
    h
}

/// Number of non-background pixels farther than one pixel from the
/// projected silhouette of a sphere (`center`, `radius` in voxel units).
pub fn hits_outside_sphere(frame: &Frame, camera: &Camera, background: u8, center: [f64; 3], radius: f64) -> usize {
    let basis = camera.basis().unwrap();
    let (w, h) = (frame.width as i64, frame.height as i64);
    let inside = |px: i64, py: i64| {
        if px < 0 || py < 0 || px >= w || py >= h {
            return false;
        }
        let ray = basis.ray(px as u32, py as u32, frame.width, frame.height);
        let oc: Vec<f64> = (0..3).map(|a| center[a] - ray.origin[a]).collect();
        let t: f64 = (0..3).map(|a| oc[a] * ray.dir[a]).sum();
        let d2 = oc.iter().map(|c| c * c).sum::<f64>() - t * t;
        d2 <= radius * radius
    };
    let mut outside = 0;
    for py in 0..h {
        for px in 0..w {
            if frame.pixels[(py * w + px) as usize] == background {
                continue;
            }
            if !(-1..=1).any(|dy| (-1..=1).any(|dx| inside(px + dx, py + dy))) {
                outside += 1;
            }
        }
    }
    outside
}
