//! Toy tunable program: approximates `sqrt(a)` for an input-derived `a`.
//!
//! Usage: `toyprog <input> <bisect_iters> <newton_iters>`. Prints
//! `FEATURE magnitude`, `DISTANCE` (absolute error) and `COST` (work units).
//! Inputs named `slow*` sleep for three seconds first and inputs named
//! `garbage*` print unparseable output.

use std::process::ExitCode;
use std::time::Duration;

fn magnitude(input: &str) -> f64 {
    // FNV-1a keeps the value stable across platforms and runs
    let h = input
        .bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100000001b3));
    2.0 + (h % 9800) as f64 / 100.0
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let parsed = match args.as_slice() {
        [input, i1, i2] => i1.parse::<f64>().ok().zip(i2.parse::<f64>().ok()).map(|(a, b)| (input.clone(), a, b)),
        _ => None,
    };
    let Some((input, iter1, iter2)) = parsed else {
        eprintln!("usage: toyprog <input> <bisect_iters> <newton_iters>");
        return ExitCode::from(2);
    };
    if input.starts_with("slow") {
        std::thread::sleep(Duration::from_secs(3));
    }
    if input.starts_with("garbage") {
        println!("??? no measurement");
        return ExitCode::SUCCESS;
    }
    let a = magnitude(&input);
    let (mut lo, mut hi) = (0.0, a.max(1.0));
    for _ in 0..iter1 as usize {
        let mid = 0.5 * (lo + hi);
        if mid * mid > a {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..iter2 as usize {
        x += 0.5 * (0.5 * (x + a / x) - x);
    }
    println!("FEATURE magnitude {a}");
    println!("DISTANCE {}", (x - a.sqrt()).abs());
    println!("COST {}", 1.0 + iter1 + 2.5 * iter2 + a / 100.0);
    ExitCode::SUCCESS
}
