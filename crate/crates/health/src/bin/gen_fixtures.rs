//! Regenerates the synthetic patient corpus under `<root>/data`.
//!
//! Usage: `cargo run -p cha-health --bin gen_fixtures -- [root]`

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use cha_health::records::{ActivityRecord, PpgSample, SleepRecord, ACTIVITY_FILE, PPG_FILE, SLEEP_FILE};
use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 20_200_829;
const PATIENTS: usize = 5;
const PPG_START_MS: i64 = 1_598_695_200_000; // 2020-08-29T10:00:00Z
const PPG_HZ: f64 = 20.0;
const PPG_SECONDS: f64 = 60.0;
const PULSE_SIGMA_S: f64 = 0.08;

/// Per-patient HRV profile, calm (index 0) to stressed (index 4).
struct Profile {
    mean_nn: f64,
    hf_amp: f64,
    lf_amp: f64,
    jitter: f64,
}

fn profile(i: usize) -> Profile {
    let t = i as f64 / (PATIENTS - 1) as f64;
    let lerp = |a: f64, b: f64| a + (b - a) * t;
    Profile {
        mean_nn: lerp(950.0, 650.0),
        hf_amp: lerp(60.0, 8.0),
        lf_amp: lerp(20.0, 30.0),
        jitter: lerp(15.0, 4.0),
    }
}

fn round(x: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    (x * p).round() / p
}

fn days(from: NaiveDate, to: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    (0..=(to - from).num_days()).map(move |d| from + Duration::days(d))
}

fn sleep(rng: &mut ChaCha8Rng, i: usize) -> Vec<SleepRecord> {
    let start = NaiveDate::from_ymd_opt(2020, 8, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2020, 8, 31).unwrap();
    let base = 470.0 - 25.0 * i as f64;
    let noise = Normal::new(0.0, 25.0).unwrap();
    days(start, end)
        .map(|date| {
            let total = round((base + noise.sample(rng)).max(240.0), 1);
            let rem = round(total * rng.random_range(0.18..0.25), 1);
            let deep = round(total * rng.random_range(0.12..0.20), 1);
            let light = round(total - rem - deep - rng.random_range(0.0..10.0), 1);
            SleepRecord {
                date,
                total_sleep_min: total,
                rem_min: rem,
                deep_min: deep,
                light_min: light,
                efficiency: round(rng.random_range(0.78..0.97), 3),
            }
        })
        .collect()
}

fn activity(rng: &mut ChaCha8Rng, i: usize) -> Vec<ActivityRecord> {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2020, 12, 31).unwrap();
    let base = 9000.0 - 900.0 * i as f64;
    let noise = Normal::new(0.0, 1500.0).unwrap();
    days(start, end)
        .map(|date| {
            let steps = (base + noise.sample(rng)).max(500.0).round() as u64;
            ActivityRecord {
                date,
                steps,
                active_min: round(steps as f64 / 150.0 + rng.random_range(0.0..10.0), 1),
            }
        })
        .collect()
}

/// Beat times (s) and the NN interval (ms) ending at each beat.
fn beats(rng: &mut ChaCha8Rng, p: &Profile) -> Vec<(f64, f64)> {
    let jitter = Normal::new(0.0, p.jitter).unwrap();
    let mut t = 0.4;
    let mut out = vec![(t, p.mean_nn)];
    while t < PPG_SECONDS + 1.0 {
        let nn = p.mean_nn
            + p.lf_amp * (2.0 * PI * 0.1 * t).sin()
            + p.hf_amp * (2.0 * PI * 0.25 * t).sin()
            + jitter.sample(rng);
        t += nn / 1000.0;
        out.push((t, nn));
    }
    out
}

fn ppg(rng: &mut ChaCha8Rng, i: usize) -> Vec<PpgSample> {
    let beats = beats(rng, &profile(i));
    let noise = Normal::new(0.0, 0.01).unwrap();
    let n = (PPG_SECONDS * PPG_HZ) as usize;
    (0..n)
        .map(|k| {
            let t = k as f64 / PPG_HZ;
            let pulse: f64 = beats
                .iter()
                .filter(|(b, _)| (t - b).abs() < 6.0 * PULSE_SIGMA_S)
                .map(|(b, _)| (-((t - b) / PULSE_SIGMA_S).powi(2) / 2.0).exp())
                .sum();
            let wander = 0.2 * (2.0 * PI * 0.05 * t).sin();
            let current = beats
                .iter()
                .find(|(b, _)| *b >= t)
                .map_or(beats[beats.len() - 1].1, |(_, nn)| *nn);
            PpgSample {
                date: PPG_START_MS + (k as f64 * 1000.0 / PPG_HZ) as i64,
                ppg: round(pulse + wander + noise.sample(rng), 4),
                hr: round(60_000.0 / current, 1),
            }
        })
        .collect()
}

fn write<T: serde::Serialize>(path: &Path, rows: &[T]) {
    let mut w = csv::Writer::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    for r in rows {
        w.serialize(r).expect("serialize row");
    }
    w.flush().expect("flush");
}

fn main() {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(cha_health::workspace_root);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for i in 0..PATIENTS {
        let dir = root.join("data").join(format!("par_{}", i + 1));
        fs::create_dir_all(&dir).expect("create patient dir");
        write(&dir.join(SLEEP_FILE), &sleep(&mut rng, i));
        write(&dir.join(ACTIVITY_FILE), &activity(&mut rng, i));
        write(&dir.join(PPG_FILE), &ppg(&mut rng, i));
        println!("wrote {}", dir.display());
    }
}
