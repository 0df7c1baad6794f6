//! Dense-grid reference evaluation of the default inference system, written
//! from the membership and rule definitions without reusing library code.

use std::time::Instant;

use nhad::fuzzy::{build_default_fis, infer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DENSE: usize = 100_001;

/// (low, medium, high) supports per input.
const SUPPORTS: [[(f64, f64); 3]; 5] = [
    [(0.0, 0.5), (0.4, 0.95), (0.9, 1.0)],
    [(0.0, 0.45), (0.2, 0.95), (0.9, 1.0)],
    [(0.0, 0.4), (0.1, 0.9), (0.8, 1.0)],
    [(0.0, 0.5), (0.4, 0.8), (0.7, 1.0)],
    [(0.0, 0.5), (0.2, 0.9), (0.6, 1.0)],
];

/// perfect, very_high, high, medium, low, very_low, worst.
const OUT: [(f64, f64); 7] = [
    (0.0, 0.1),
    (0.0, 0.2),
    (0.1, 0.5),
    (0.3, 0.7),
    (0.5, 0.9),
    (0.7, 1.0),
    (0.8, 1.0),
];

fn lerp(x: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn input_mu(d: usize, level: usize, x: f64) -> f64 {
    let [(_, b_l), (a_m, b_m), (a_h, _)] = SUPPORTS[d];
    match level {
        0 => {
            if x <= a_m {
                1.0
            } else if x < b_l {
                lerp(x, a_m, b_l, 1.0, 0.0)
            } else {
                0.0
            }
        }
        1 => {
            let c = 0.5 * (a_m + b_m);
            if x <= a_m || x >= b_m {
                0.0
            } else if x <= c {
                lerp(x, a_m, c, 0.0, 1.0)
            } else {
                lerp(x, c, b_m, 1.0, 0.0)
            }
        }
        _ => {
            let top = b_m.min(1.0);
            if x <= a_h {
                0.0
            } else if x < top {
                lerp(x, a_h, top, 0.0, 1.0)
            } else {
                1.0
            }
        }
    }
}

fn peak(label: usize) -> f64 {
    match label {
        0 => 0.0,
        6 => 1.0,
        k => 0.5 * (OUT[k].0 + OUT[k].1),
    }
}

fn output_mu(label: usize, x: f64) -> f64 {
    let (a, b) = OUT[label];
    let c = peak(label);
    if x < a || x > b {
        return 0.0;
    }
    if x <= c {
        if c == a {
            1.0
        } else {
            lerp(x, a, c, 0.0, 1.0)
        }
    } else if c == b {
        1.0
    } else {
        lerp(x, c, b, 1.0, 0.0)
    }
}

/// Output label for a level combination: priority-weighted mean of
/// {0, 0.5, 1} snapped to the nearest peak, ties toward the severe end.
fn consequent(levels: &[usize; 5]) -> usize {
    let w = [1.0, 0.9, 0.8, 0.7, 0.6];
    let total: f64 = w.iter().sum();
    let score: f64 = levels
        .iter()
        .zip(w)
        .map(|(&l, w)| w * 0.5 * l as f64)
        .sum::<f64>()
        / total;
    let mut best = 0;
    for k in 1..7 {
        if (score - peak(k)).abs() <= (score - peak(best)).abs() + 1e-12 {
            best = k;
        }
    }
    best
}

fn dense_crisp(acts: &[f64; 5]) -> f64 {
    let mut strength = [0.0f64; 7];
    for code in 0..243usize {
        let mut levels = [0usize; 5];
        let mut c = code;
        for l in levels.iter_mut() {
            *l = c % 3;
            c /= 3;
        }
        let s = (0..5)
            .map(|d| input_mu(d, levels[d], acts[d]))
            .fold(1.0f64, f64::min);
        let k = consequent(&levels);
        strength[k] = strength[k].max(s);
    }
    let h = 1.0 / (DENSE - 1) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..DENSE {
        let x = i as f64 * h;
        let f = (0..7)
            .map(|k| strength[k].min(output_mu(k, x)))
            .fold(0.0f64, f64::max);
        let wt = if i == 0 || i == DENSE - 1 { 0.5 } else { 1.0 };
        num += wt * x * f;
        den += wt * f;
    }
    num / den
}

#[test]
fn oracle_rule_table_matches_library() {
    let fis = build_default_fis();
    assert_eq!(fis.rules().len(), 243);
    let names = [
        "perfect",
        "very_high",
        "high",
        "medium",
        "low",
        "very_low",
        "worst",
    ];
    for rule in fis.rules() {
        let mut levels = [0usize; 5];
        for (var, term) in &rule.antecedent {
            let d: usize = var[1..].parse::<usize>().unwrap() - 1;
            levels[d] = ["low", "medium", "high"]
                .iter()
                .position(|t| t == term)
                .unwrap();
        }
        assert_eq!(rule.consequent, names[consequent(&levels)], "{levels:?}");
    }
}

#[test]
fn crisp_matches_dense_grid_on_random_vectors() {
    let fis = build_default_fis();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let vectors: Vec<[f64; 5]> = (0..1000)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..=1.0)))
        .collect();

    let start = Instant::now();
    let fast: Vec<f64> = vectors.iter().map(|v| fis.crisp(v).unwrap()).collect();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");

    let mut worst = 0.0f64;
    for (v, c) in vectors.iter().zip(&fast) {
        let reference = dense_crisp(v);
        worst = worst.max((c - reference).abs());
    }
    assert!(worst <= 1e-3, "max deviation {worst}");
}

#[test]
fn full_inference_agrees_with_fast_path() {
    let fis = build_default_fis();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let v: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
        let full = infer(&fis, &v).unwrap();
        assert!((full.crisp - fis.crisp(&v).unwrap()).abs() < 1e-12);
        assert!(full.aggregate.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }
}

#[test]
fn anchor_vectors_against_oracle() {
    let fis = build_default_fis();
    let low = [0.05; 5];
    let high = [0.97, 0.97, 0.95, 0.95, 0.95];
    assert!(dense_crisp(&low) < 0.1);
    assert!(dense_crisp(&high) > 0.8);
    let (cl, ch) = (fis.crisp(&low).unwrap(), fis.crisp(&high).unwrap());
    assert!(cl < 0.1, "{cl}");
    assert!(ch > 0.8, "{ch}");
    assert!(cl < ch);
}
